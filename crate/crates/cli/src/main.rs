use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bo_ldg::harness::{
    emit_outputs, emit_stability, exact_csv, parse_exact, run_convergence_study, run_single, run_stability,
    snapshot_csv, Experiment, RunConfig,
};
use bo_ldg::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bo-ldg", version, about = "LDG solver for the generalized Benjamin-Ono equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single mesh size and write the final solution.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a convergence study over the mesh sizes.
    Converge {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Stability report for the linear operator.
    Stability {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Sample an exact solution.
    ExactEval {
        /// periodic:<c>,<L> or two_soliton:<c1>,<c2>,<d1>,<d2>
        #[arg(long, default_value = "periodic:0.25,15")]
        exact: String,
        #[arg(long, default_value_t = -15.0, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, default_value_t = 15.0, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, default_value_t = 301)]
        points: usize,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        /// output file (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// example1_cn, example1_rk, example2_rk, stability_report or custom
    #[arg(long, default_value = "example1_cn")]
    experiment: String,
    /// full configuration as written to metadata.json (replaces the preset)
    #[arg(long)]
    json_config: Option<PathBuf>,
    /// key = value file applied after all flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// comma-separated mesh sizes
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    /// crank_nicolson, rk4_classical or lserk54
    #[arg(long)]
    scheme: Option<String>,
    /// proportional_h, proportional_h2 or fixed
    #[arg(long)]
    tau_rule: Option<String>,
    /// number, or `auto`
    #[arg(long)]
    tau_coefficient: Option<String>,
    #[arg(long)]
    t_final: Option<f64>,
    /// zero or periodic
    #[arg(long)]
    boundary: Option<String>,
    /// zero, burgers, linear:<a> or power:<p>
    #[arg(long)]
    equation: Option<String>,
    #[arg(long)]
    exact: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    snapshots: bool,
    /// any other setting, as key=value (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl RunArgs {
    fn build(&self) -> Result<RunConfig> {
        let mut cfg = match &self.json_config {
            Some(p) => RunConfig::from_json(&read(p)?)?,
            None => RunConfig::preset(self.experiment.parse::<Experiment>()?),
        };
        let mut pairs: Vec<(&str, String)> = Vec::new();
        if let Some(v) = &self.n {
            pairs.push(("n", v.clone()));
        }
        let nums = [("k", self.k.map(|v| v.to_string())), ("a", self.a.map(|v| v.to_string())), ("b", self.b.map(|v| v.to_string()))];
        for (k, v) in nums {
            if let Some(v) = v {
                pairs.push((k, v));
            }
        }
        let strs = [
            ("scheme", &self.scheme),
            ("tau_rule", &self.tau_rule),
            ("tau_coefficient", &self.tau_coefficient),
            ("boundary", &self.boundary),
            ("equation", &self.equation),
            ("exact", &self.exact),
        ];
        for (k, v) in strs {
            if let Some(v) = v {
                pairs.push((k, v.clone()));
            }
        }
        if let Some(t) = self.t_final {
            pairs.push(("t_final", t.to_string()));
        }
        if let Some(s) = self.seed {
            pairs.push(("seed", s.to_string()));
        }
        for (k, v) in pairs {
            cfg.set(k, &v)?;
        }
        for s in &self.sets {
            let (k, v) = s.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{s}'")))?;
            cfg.set(k, v)?;
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if self.snapshots {
            cfg.snapshots = true;
        }
        if let Some(p) = &self.config {
            cfg.apply_key_values(&read(p)?)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { run } => {
            let cfg = run.build()?;
            let n = *cfg.n_list.last().expect("validated");
            let out = run_single(&cfg, n)?;
            let dir = cfg.resolved_output_dir();
            let snap = dir.join(format!("snapshot_N{n}.csv"));
            write(&snap, &snapshot_csv(&out.solution)?)?;
            let summary = serde_json::json!({
                "config": cfg,
                "N": n,
                "error": out.error,
                "C1": out.conserved.c1,
                "C2": out.conserved.c2,
                "steps": out.steps,
                "tau": out.tau,
                "newton_iterations": out.newton_iterations,
                "diagnostics": out.diagnostics,
            });
            write(&dir.join("simulate.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
            println!("N={n} error={:e} steps={} tau={:e}", out.error, out.steps, out.tau);
            println!("wrote {}", snap.display());
        }
        Command::Converge { run } => {
            let cfg = run.build()?;
            let study = run_convergence_study(&cfg)?;
            let files = emit_outputs(&study, &cfg, &cfg.resolved_output_dir())?;
            print!("{}", bo_ldg::harness::table_csv(&study.rows)?);
            for r in study.rows.iter().filter(|r| r.failure.is_some()) {
                eprintln!("N={} failed: {}", r.n, r.failure.as_deref().unwrap_or(""));
            }
            println!("wrote {}", files.table.display());
            if study.rows.iter().all(|r| r.failure.is_some()) {
                return Err(Error::Config("every run of the study failed".into()));
            }
        }
        Command::Stability { run } => {
            let cfg = run.build()?;
            let reports = run_stability(&cfg)?;
            let p = emit_stability(&reports, &cfg.resolved_output_dir())?;
            for r in &reports {
                println!(
                    "N={} k={} tau*||L||={} ||L||={:e} max_sym_eig={:?} two_step={:e} three_step={:e}",
                    r.cells, r.degree, r.tau_times_norm, r.operator_norm, r.max_symmetric_eigenvalue,
                    r.worst_two_step_ratio, r.worst_three_step_ratio
                );
            }
            println!("wrote {}", p.display());
        }
        Command::ExactEval { exact, a, b, points, t, out } => {
            let e = parse_exact(&exact).ok_or_else(|| Error::Config(format!("cannot parse exact solution '{exact}'")))?;
            let text = exact_csv(&e, a, b, points, t)?;
            match out {
                Some(p) => write(&p, &text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
