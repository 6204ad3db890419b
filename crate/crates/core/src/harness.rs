//! Run configuration, convergence studies and their on-disk outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::hilbert::{HilbertConfig, HilbertOperator, Kernel, TouchingRule};
use crate::mesh::{DgSpace, Mesh};
use crate::operators::{Closure, DeltaMode, Flux, FluxConfig, NonlinearFlux, OperatorSet, Orientation};
use crate::projection::radau_project;
use crate::solutions::{conserved_quantities, convergence_rate, l2_error, ExactSolution};
use crate::stability::{stability_report, StabilityReport};
use crate::time::{run_simulation, Diagnostic, Scheme, TauRule, TimeConfig};

/// Overrides `RunConfig::output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "BO_LDG_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Example1Cn,
    Example1Rk,
    Example2Rk,
    StabilityReport,
    Custom,
}

impl FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "example1_cn" => Experiment::Example1Cn,
            "example1_rk" => Experiment::Example1Rk,
            "example2_rk" => Experiment::Example2Rk,
            "stability_report" => Experiment::StabilityReport,
            "custom" => Experiment::Custom,
            _ => return Err(Error::Config(format!("unknown experiment '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySettings {
    /// values of τ‖Lh‖ to examine
    pub tau_norms: Vec<f64>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub domain: Domain,
    pub n_list: Vec<usize>,
    pub degree: usize,
    /// convective flux f(u)
    pub equation: Flux,
    pub flux: FluxConfig,
    pub time: TimeConfig,
    pub hilbert: HilbertConfig,
    pub exact: ExactSolution,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub snapshots: bool,
    pub stability: StabilitySettings,
}

fn periodic_setup() -> (Domain, FluxConfig, HilbertConfig, ExactSolution) {
    (
        Domain { a: -90.0, b: 90.0 },
        FluxConfig { closure: Closure::Periodic, ..FluxConfig::default() },
        HilbertConfig { kernel: Kernel::Periodic, ..HilbertConfig::default() },
        ExactSolution::Periodic { c: 0.25, half_period: 15.0 },
    )
}

impl RunConfig {
    pub fn preset(experiment: Experiment) -> RunConfig {
        let (domain, flux, hilbert, exact) = periodic_setup();
        let base = RunConfig {
            experiment,
            domain,
            n_list: vec![160, 320, 640],
            degree: 1,
            equation: Flux::Burgers,
            flux,
            time: TimeConfig {
                scheme: Scheme::CrankNicolson,
                tau_rule: TauRule::ProportionalH,
                tau_coefficient: Some(0.5),
                t_final: 20.0,
                ..TimeConfig::default()
            },
            hilbert,
            exact,
            output_dir: PathBuf::from("output"),
            seed: 20240601,
            snapshots: false,
            stability: StabilitySettings { tau_norms: vec![0.5, 1.0, 2.0], trials: 100 },
        };
        let explicit = TimeConfig {
            scheme: Scheme::Lserk54,
            tau_rule: TauRule::ProportionalH2,
            tau_coefficient: None,
            ..base.time
        };
        match experiment {
            Experiment::Example1Cn | Experiment::Custom => base,
            Experiment::Example1Rk => RunConfig {
                n_list: vec![40, 80, 160],
                degree: 3,
                time: TimeConfig { t_final: 10.0, ..explicit },
                ..base
            },
            Experiment::Example2Rk => RunConfig {
                domain: Domain { a: -150.0, b: 150.0 },
                n_list: vec![640, 1280],
                degree: 2,
                flux: FluxConfig::default(),
                hilbert: HilbertConfig::default(),
                exact: ExactSolution::TwoSoliton { c1: 0.3, c2: 0.6, d1: -30.0, d2: -55.0 },
                time: TimeConfig { t_final: 20.0, ..explicit },
                ..base
            },
            Experiment::StabilityReport => RunConfig {
                domain: Domain { a: -32.0, b: 32.0 },
                n_list: vec![64],
                degree: 1,
                equation: Flux::Zero,
                flux: FluxConfig::default(),
                hilbert: HilbertConfig::default(),
                time: TimeConfig { t_final: 0.0, ..explicit },
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::Config("the list of mesh sizes is empty".into()));
        }
        if self.n_list.iter().any(|&n| n == 0) || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("mesh sizes must be positive and increasing: {:?}", self.n_list)));
        }
        if !(self.domain.a < self.domain.b) {
            return Err(Error::Config(format!("empty domain [{}, {}]", self.domain.a, self.domain.b)));
        }
        if self.degree == 0 {
            return Err(Error::Config("polynomial degree must be at least 1".into()));
        }
        self.time.validate()?;
        let _ = self.exact.build()?;
        if self.stability.trials == 0 || self.stability.tau_norms.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::Config("stability trials and τ‖L‖ values must be positive".into()));
        }
        Ok(())
    }

    /// Output directory after the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.output_dir.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Accepts a bare config or a run's `metadata.json` (uses its `config`).
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let mut v: serde_json::Value = serde_json::from_str(text)?;
        if let Some(c) = v.get_mut("config") {
            return Ok(serde_json::from_value(c.take())?);
        }
        Ok(serde_json::from_value(v)?)
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let bad = |what: &str| Error::Config(format!("invalid value '{v}' for {what}"));
        let num = |what: &str| v.parse::<f64>().map_err(|_| bad(what));
        let int = |what: &str| v.parse::<usize>().map_err(|_| bad(what));
        let list = |what: &str| -> Result<Vec<f64>> {
            v.split(',').map(|s| s.trim().parse::<f64>().map_err(|_| bad(what))).collect()
        };
        let flag = |what: &str| match v {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(bad(what)),
        };
        match key.trim() {
            "experiment" => self.experiment = v.parse()?,
            "a" => self.domain.a = num("a")?,
            "b" => self.domain.b = num("b")?,
            "n" | "n_list" | "cells" => {
                self.n_list = v.split(',').map(|s| s.trim().parse::<usize>().map_err(|_| bad("n_list"))).collect::<Result<_>>()?
            }
            "k" | "degree" => self.degree = int("degree")?,
            "equation" | "equation_flux" => self.equation = parse_flux(v).ok_or_else(|| bad("equation flux"))?,
            "boundary" | "closure" => {
                let (closure, kernel) = match v {
                    "zero" => (Closure::Zero, Kernel::Line),
                    "periodic" => (Closure::Periodic, Kernel::Periodic),
                    _ => return Err(bad("boundary")),
                };
                self.flux.closure = closure;
                self.hilbert.kernel = kernel;
            }
            "kernel" => {
                self.hilbert.kernel = match v {
                    "line" => Kernel::Line,
                    "periodic" => Kernel::Periodic,
                    _ => return Err(bad("kernel")),
                }
            }
            "orientation" => {
                self.flux.orientation = match v {
                    "pplus_uminus" => Orientation::PplusUminus,
                    "pminus_uplus" => Orientation::PminusUplus,
                    _ => return Err(bad("orientation")),
                }
            }
            "nonlinear" => {
                self.flux.nonlinear = match v {
                    "lax_friedrichs" => NonlinearFlux::LaxFriedrichs,
                    "none" => NonlinearFlux::None,
                    _ => return Err(bad("nonlinear")),
                }
            }
            "delta_mode" => {
                self.flux.delta_mode = match v {
                    "local_max" => DeltaMode::LocalMax,
                    "global_max" => DeltaMode::GlobalMax,
                    _ => return Err(bad("delta_mode")),
                }
            }
            "scheme" => {
                self.time.scheme = match v {
                    "crank_nicolson" | "cn" => Scheme::CrankNicolson,
                    "rk4_classical" | "rk4" => Scheme::Rk4Classical,
                    "lserk54" | "lserk" => Scheme::Lserk54,
                    _ => return Err(bad("scheme")),
                }
            }
            "tau_rule" => {
                self.time.tau_rule = match v {
                    "proportional_h" => TauRule::ProportionalH,
                    "proportional_h2" => TauRule::ProportionalH2,
                    "fixed" => TauRule::Fixed,
                    _ => return Err(bad("tau_rule")),
                }
            }
            "tau_coefficient" => {
                self.time.tau_coefficient = if v == "auto" { None } else { Some(num("tau_coefficient")?) }
            }
            "t_final" | "t" => self.time.t_final = num("t_final")?,
            "newton_tol" => self.time.newton_tol = num("newton_tol")?,
            "newton_max_iter" => self.time.newton_max_iter = int("newton_max_iter")?,
            "diagnostics_every" => self.time.diagnostics_every = int("diagnostics_every")?,
            "outer_n" => self.hilbert.outer_n = int("outer_n")?,
            "inner_n" => self.hilbert.inner_n = int("inner_n")?,
            "skew" => self.hilbert.skew = flag("skew")?,
            "touching" => {
                self.hilbert.touching = match v {
                    "singular" => TouchingRule::Singular,
                    "tensor" => TouchingRule::Tensor,
                    _ => return Err(bad("touching")),
                }
            }
            "exact" => self.exact = parse_exact(v).ok_or_else(|| bad("exact"))?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "seed" => self.seed = v.parse().map_err(|_| bad("seed"))?,
            "snapshots" => self.snapshots = flag("snapshots")?,
            "stability_tau_norms" => self.stability.tau_norms = list("stability_tau_norms")?,
            "stability_trials" => self.stability.trials = int("stability_trials")?,
            other => return Err(Error::Config(format!("unknown setting '{other}'"))),
        }
        Ok(())
    }

    /// Apply every setting of a key-value file (`key = value`, `#` comments).
    pub fn apply_key_values(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", no + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }
}

/// `zero`, `burgers`, `linear:<a>`, `power:<p>`
pub fn parse_flux(s: &str) -> Option<Flux> {
    let (name, arg) = s.split_once(':').map_or((s, None), |(n, a)| (n, Some(a.trim())));
    Some(match (name.trim(), arg) {
        ("zero", None) => Flux::Zero,
        ("burgers", None) => Flux::Burgers,
        ("linear", Some(a)) => Flux::Linear { speed: a.parse().ok()? },
        ("power", Some(p)) => Flux::Power { p: p.parse().ok().filter(|&p: &u32| p >= 1)? },
        _ => return None,
    })
}

/// `periodic:<c>,<L>` or `two_soliton:<c1>,<c2>,<d1>,<d2>`
pub fn parse_exact(s: &str) -> Option<ExactSolution> {
    let (name, args) = s.split_once(':')?;
    let v: Vec<f64> = args.split(',').map(|a| a.trim().parse().ok()).collect::<Option<_>>()?;
    match (name.trim(), v.as_slice()) {
        ("periodic", &[c, half_period]) => Some(ExactSolution::Periodic { c, half_period }),
        ("two_soliton", &[c1, c2, d1, d2]) => Some(ExactSolution::TwoSoliton { c1, c2, d1, d2 }),
        _ => None,
    }
}

/// Everything needed to time-step one mesh.
pub fn build_operators(cfg: &RunConfig, n: usize) -> Result<OperatorSet> {
    let mesh = Mesh::uniform(cfg.domain.a, cfg.domain.b, n)?;
    let space = Arc::new(DgSpace::new(mesh, cfg.degree)?);
    let hilbert = HilbertOperator::assemble(&space, &cfg.hilbert)?;
    OperatorSet::assemble(&space, cfg.flux, hilbert)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub n: usize,
    pub error: f64,
    pub conserved: crate::solutions::Conserved,
    pub steps: usize,
    pub tau: f64,
    pub newton_iterations: usize,
    pub solution: Field,
    pub diagnostics: Vec<Diagnostic>,
    pub wall_seconds: f64,
}

/// Project the exact data at t = 0 with P⁻, integrate to the final time and
/// measure against the exact solution.
pub fn run_single(cfg: &RunConfig, n: usize) -> Result<RunOutcome> {
    let start = Instant::now();
    let exact = cfg.exact.build()?;
    let ops = build_operators(cfg, n)?;
    let u0 = radau_project(|x| exact(x, 0.0), ops.space())?;
    let sim = run_simulation(&u0, &ops, cfg.equation, &cfg.time, None)?;
    let error = l2_error(&sim.solution, &exact, sim.time);
    let conserved = conserved_quantities(&sim.solution, &u0)?;
    Ok(RunOutcome {
        n,
        error,
        conserved,
        steps: sim.steps,
        tau: sim.tau,
        newton_iterations: sim.newton_iterations,
        solution: sim.solution,
        diagnostics: sim.diagnostics,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: usize,
    pub error: Option<f64>,
    pub rate: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub steps: Option<usize>,
    pub tau: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Study {
    pub rows: Vec<StudyRow>,
    pub outcomes: Vec<Option<RunOutcome>>,
}

/// One run per mesh size (concurrently); failed sizes become failed rows.
pub fn run_convergence_study(cfg: &RunConfig) -> Result<Study> {
    cfg.validate()?;
    let results: Vec<Result<RunOutcome>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg.n_list.iter().map(|&n| s.spawn(move || run_single(cfg, n))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Config("a worker thread panicked".into()))))
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut outcomes = Vec::with_capacity(results.len());
    for (&n, r) in cfg.n_list.iter().zip(results) {
        match r {
            Ok(o) => {
                rows.push(StudyRow {
                    n,
                    error: Some(o.error),
                    rate: None,
                    c1: o.conserved.c1,
                    c2: o.conserved.c2,
                    steps: Some(o.steps),
                    tau: Some(o.tau),
                    failure: None,
                });
                outcomes.push(Some(o));
            }
            Err(e) => {
                rows.push(StudyRow {
                    n,
                    error: None,
                    rate: None,
                    c1: None,
                    c2: None,
                    steps: None,
                    tau: None,
                    failure: Some(e.to_string()),
                });
                outcomes.push(None);
            }
        }
    }
    for i in 1..rows.len() {
        if let (Some(e0), Some(e1)) = (rows[i - 1].error, rows[i].error) {
            rows[i].rate = convergence_rate(&[e0, e1], &[rows[i - 1].n, rows[i].n]).ok().map(|r| r[0]);
        }
    }
    Ok(Study { rows, outcomes })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// CSV text `N,error,rate,C1,C2`; failed rows carry `failed` as the error.
pub fn table_csv(rows: &[StudyRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["N", "error", "rate", "C1", "C2"])?;
    for r in rows {
        let err = if r.failure.is_some() { "failed".to_string() } else { fmt_opt(r.error) };
        w.write_record([r.n.to_string(), err, fmt_opt(r.rate), fmt_opt(r.c1), fmt_opt(r.c2)])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Inverse of [`table_csv`] for the columns it writes.
pub fn parse_table_csv(text: &str) -> Result<Vec<StudyRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["N", "error", "rate", "C1", "C2"] {
        return Err(Error::Config(format!("unexpected table header {headers:?}")));
    }
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::Config(format!("bad number '{s}' in table")))
        }
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let n = rec[0].parse().map_err(|_| Error::Config(format!("bad N '{}'", &rec[0])))?;
        let failed = &rec[1] == "failed";
        rows.push(StudyRow {
            n,
            error: if failed { None } else { opt(&rec[1])? },
            rate: opt(&rec[2])?,
            c1: opt(&rec[3])?,
            c2: opt(&rec[4])?,
            steps: None,
            tau: None,
            failure: failed.then(|| "failed".to_string()),
        });
    }
    Ok(rows)
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    program: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    rows: &'a [StudyRow],
}

/// Snapshot CSV `x,u` at 4(k+1) evenly spaced sub-cell midpoints per cell.
pub fn snapshot_csv(u: &Field) -> Result<String> {
    let space = u.space();
    let per = 4 * space.n_local();
    let mesh = space.mesh();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "u"])?;
    for i in 0..space.n_cells() {
        for s in 0..per {
            let xi = -1.0 + (2.0 * s as f64 + 1.0) / per as f64;
            w.write_record([format!("{:e}", mesh.to_physical(i, xi)), format!("{:e}", u.eval_in_cell(i, xi))])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputFiles {
    pub table: PathBuf,
    pub metadata: PathBuf,
    pub timing: PathBuf,
    pub snapshots: Vec<PathBuf>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `convergence.csv`, `metadata.json` (config echo and rows; nothing
/// run-dependent so reruns are byte-identical), `timing.json` (wall times) and
/// optionally `snapshot_N<n>.csv`.
pub fn emit_outputs(study: &Study, cfg: &RunConfig, dir: &Path) -> Result<OutputFiles> {
    if study.rows.is_empty() {
        return Err(Error::Config("nothing to write: the study has no rows".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let table = dir.join("convergence.csv");
    write(&table, &table_csv(&study.rows)?)?;
    let metadata = dir.join("metadata.json");
    let meta = Metadata { program: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION"), config: cfg, rows: &study.rows };
    write(&metadata, &(serde_json::to_string_pretty(&meta)? + "\n"))?;
    let timing = dir.join("timing.json");
    let times: Vec<_> = study
        .outcomes
        .iter()
        .zip(&study.rows)
        .map(|(o, r)| serde_json::json!({ "N": r.n, "wall_seconds": o.as_ref().map(|o| o.wall_seconds) }))
        .collect();
    write(&timing, &(serde_json::to_string_pretty(&times)? + "\n"))?;
    let mut snapshots = Vec::new();
    if cfg.snapshots {
        for o in study.outcomes.iter().flatten() {
            let p = dir.join(format!("snapshot_N{}.csv", o.n));
            write(&p, &snapshot_csv(&o.solution)?)?;
            snapshots.push(p);
        }
    }
    Ok(OutputFiles { table, metadata, timing, snapshots })
}

/// Stability reports for every mesh size and every τ‖Lh‖ of the config.
pub fn run_stability(cfg: &RunConfig) -> Result<Vec<StabilityReport>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &n in &cfg.n_list {
        let ops = build_operators(cfg, n)?;
        for &c in &cfg.stability.tau_norms {
            out.push(stability_report(&ops, c, cfg.stability.trials, cfg.seed)?);
        }
    }
    Ok(out)
}

pub fn emit_stability(reports: &[StabilityReport], dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join("stability.json");
    write(&p, &(serde_json::to_string_pretty(reports)? + "\n"))?;
    Ok(p)
}

/// Samples of the exact solution at time t: `x,U` with `points` evenly spaced
/// x in [a, b].
pub fn exact_csv(exact: &ExactSolution, a: f64, b: f64, points: usize, t: f64) -> Result<String> {
    if points < 2 || !(a < b) {
        return Err(Error::Config("need at least two points on a non-empty interval".into()));
    }
    let u = exact.build()?;
    let mut s = String::from("x,U\n");
    for i in 0..points {
        let x = a + (b - a) * i as f64 / (points - 1) as f64;
        writeln!(s, "{:e},{:e}", x, u(x, t)).expect("writing to a string");
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut c = RunConfig::preset(Experiment::Example1Cn);
        c.domain = Domain { a: -15.0, b: 15.0 };
        c.n_list = vec![8, 16];
        c.time.t_final = 1.0;
        c
    }

    #[test]
    fn presets_validate() {
        for e in [
            Experiment::Example1Cn,
            Experiment::Example1Rk,
            Experiment::Example2Rk,
            Experiment::StabilityReport,
            Experiment::Custom,
        ] {
            RunConfig::preset(e).validate().unwrap();
        }
        let mut c = tiny();
        c.n_list.clear();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.n_list = vec![16, 8];
        assert!(c.validate().is_err());
    }

    #[test]
    fn key_values_override() {
        let mut c = tiny();
        c.apply_key_values("# comment\nk = 2\nn = 10, 20\nboundary = zero\nequation = linear:0.5\ntau_coefficient = auto\nexact = two_soliton:0.3,0.6,-30,-55\n")
            .unwrap();
        assert_eq!((c.degree, c.n_list.clone()), (2, vec![10, 20]));
        assert_eq!((c.flux.closure, c.hilbert.kernel), (Closure::Zero, Kernel::Line));
        assert_eq!(c.equation, Flux::Linear { speed: 0.5 });
        assert_eq!(c.time.tau_coefficient, None);
        assert!(matches!(c.exact, ExactSolution::TwoSoliton { .. }));
        assert!(c.apply_key_values("nonsense").is_err());
        assert!(c.apply_key_values("k = x").is_err());
        assert!(c.apply_key_values("colour = blue").is_err());
    }

    #[test]
    fn json_echo_round_trips() {
        let c = RunConfig::preset(Experiment::Example2Rk);
        assert_eq!(RunConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
    }

    #[test]
    fn table_format_and_round_trip() {
        let rows = vec![StudyRow { n: 40, error: Some(0.1), rate: None, c1: Some(1.0), c2: None, steps: None, tau: None, failure: None }];
        let csv = table_csv(&rows).unwrap();
        assert_eq!(csv, "N,error,rate,C1,C2\n40,1e-1,,1e0,\n");
        let again = table_csv(&parse_table_csv(&csv).unwrap()).unwrap();
        assert_eq!(again, csv);
        let failed = vec![StudyRow { failure: Some("boom".into()), error: None, ..rows[0].clone() }];
        let csv = table_csv(&failed).unwrap();
        assert_eq!(table_csv(&parse_table_csv(&csv).unwrap()).unwrap(), csv);
    }

    #[test]
    fn study_continues_past_failures() {
        let mut c = tiny();
        // one cell per period edge case: N = 2 is rejected by the periodic kernel
        c.n_list = vec![2, 8, 16];
        let s = run_convergence_study(&c).unwrap();
        assert!(s.rows[0].failure.is_some());
        assert!(s.rows[1].error.is_some() && s.rows[1].rate.is_none());
        assert!(s.rows[2].rate.is_some());
    }

    #[test]
    fn zero_snapshot() {
        let ops = build_operators(&tiny(), 3).unwrap();
        let z = Field::zeros(ops.space().clone());
        let csv = snapshot_csv(&z).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 3 * 8);
        assert!(lines[1..].iter().all(|l| l.ends_with(",0e0")));
    }

    #[test]
    fn exact_samples() {
        let e = ExactSolution::Periodic { c: 0.25, half_period: 15.0 };
        let s = exact_csv(&e, -15.0, 15.0, 3, 0.0).unwrap();
        assert_eq!(s.lines().count(), 4);
        assert!(exact_csv(&e, 1.0, 0.0, 3, 0.0).is_err());
    }
}
