//! Acceptance suite: one PASS/FAIL line per criterion. Runs with its own
//! `main` so the lines are always printed; exits non-zero if any criterion
//! fails.

use std::sync::Arc;
use std::time::Instant;

use bo_ldg::harness::{run_convergence_study, table_csv, Domain, Experiment, RunConfig, Study};
use bo_ldg::hilbert::{HilbertConfig, HilbertOperator, Kernel};
use bo_ldg::operators::{Closure, Flux, FluxConfig, OperatorSet};
use bo_ldg::projection::{l2_project, radau_project};
use bo_ldg::solutions::{convergence_rate, l2_error};
use bo_ldg::stability::{
    build_composite_matrices, check_semi_negative, energy_change, multistep_stability_trial, operator_norm, weighted,
    windowed_norm_ratio,
};
use bo_ldg::time::{lserk54_step, rk4_step, run_simulation, CnStepper};
use bo_ldg::{DgSpace, Field, Mesh};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn operators(a: f64, b: f64, n: usize, k: usize, closure: Closure) -> OperatorSet {
    let sp = Arc::new(DgSpace::new(Mesh::uniform(a, b, n).unwrap(), k).unwrap());
    let kernel = if closure == Closure::Periodic { Kernel::Periodic } else { Kernel::Line };
    let h = HilbertOperator::assemble(&sp, &HilbertConfig { kernel, ..Default::default() }).unwrap();
    OperatorSet::assemble(&sp, FluxConfig { closure, ..Default::default() }, h).unwrap()
}

fn unit_field(sp: &Arc<DgSpace>, rng: &mut ChaCha8Rng) -> Field {
    let c = DVector::from_fn(sp.dim(), |_, _| rng.gen_range(-1.0..1.0));
    let f = Field::from_coeffs(sp.clone(), c).unwrap();
    let n = f.norm();
    f.lincomb(1.0 / n, &f, 0.0).unwrap()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut adj, mut skew, mut orth, mut eig) = (0.0f64, 0.0f64, 0.0f64, f64::NEG_INFINITY);
    for closure in [Closure::Zero, Closure::Periodic] {
        for n in [8, 32] {
            for k in 1..=3 {
                let ops = operators(-10.0, 10.0, n, k, closure);
                let dp = DMatrix::from(ops.dp());
                let dm = DMatrix::from(ops.dm());
                adj = adj.max((dp + dm.transpose()).amax());
                let sp = ops.space();
                for _ in 0..20 {
                    let q1 = unit_field(sp, &mut rng);
                    let q2 = unit_field(sp, &mut rng);
                    let h1 = ops.hilbert().apply(&q1).unwrap();
                    let h2 = ops.hilbert().apply(&q2).unwrap();
                    skew = skew.max((h1.inner(&q2).unwrap() + q1.inner(&h2).unwrap()).abs());
                    orth = orth.max(h1.inner(&q1).unwrap().abs());
                }
                eig = eig.max(check_semi_negative(ops.lh(), ops.mass()).unwrap());
            }
        }
    }
    let pass = adj <= 1e-13 && skew <= 1e-12 && orth <= 1e-12 && eig <= 1e-10;
    outcome(
        pass,
        format!("max|Dp+Dmᵀ|={adj:.1e}, skew={skew:.1e}, (Hq,q)={orth:.1e}, max sym eig={eig:.1e}"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=16);
        let s = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.5..0.5));
        // semi-negative in the weighted norm: L̂ = S − Sᵀ − BBᵀ, L = M^{−1/2} L̂ M^{1/2}
        let lhat = &s - s.transpose() - &b * b.transpose();
        let mass: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
        let l = DMatrix::from_fn(n, n, |i, j| lhat[(i, j)] * mass[j].sqrt() / mass[i].sqrt());
        let u = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let tau = rng.gen_range(0.01..1.0);
        let r = energy_change(&u, &l, &mass, tau);
        worst = worst.max(r.residual() / r.norm_sq_before);
    }
    outcome(worst <= 1e-10, format!("max |Δ‖u‖² − Q|/‖u‖² over 1000 triples = {worst:.1e}"))
}

fn criterion_3() -> Outcome {
    let c = build_composite_matrices();
    let exact_sum = c.sum() == c.a;
    let want = [-21.9444, -1.64399, -0.536623];
    let dev = c.eigenvalues.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    outcome(
        exact_sum && dev <= 1e-3,
        format!("A0+A1+A2 = A exactly: {exact_sum}; eigenvalues {:?} (max dev {dev:.1e})", c.eigenvalues),
    )
}

fn criterion_4() -> Outcome {
    let mut worst2 = 0.0f64;
    let mut worst3 = 0.0f64;
    let mut guarded = 0.0f64;
    for k in [1, 2] {
        let ops = operators(-32.0, 32.0, 64, k, Closure::Zero);
        let l = ops.lh();
        let mass = ops.mass();
        let nrm = operator_norm(&weighted(l, mass)).unwrap();
        for c in [0.5, 1.0, 2.0] {
            let tau = c / nrm;
            let r = windowed_norm_ratio(l, mass, tau, 50, &[2, 3], 100, 4 + k as u64);
            worst2 = worst2.max(r[0]);
            worst3 = worst3.max(r[1]);
            // from step 0, through the CFL-guarded entry point
            for steps in [2, 3] {
                guarded = guarded.max(multistep_stability_trial(l, mass, tau, steps, 100, 7, c * (1.0 + 1e-9)).unwrap());
            }
        }
    }
    let tol = 1.0 + 1e-12;
    outcome(
        worst2 <= tol && worst3 <= tol && guarded <= tol,
        format!("worst ‖u^(n+2)‖/‖u^n‖ = {worst2:.15}, ‖u^(n+3)‖/‖u^n‖ = {worst3:.15}, guarded trial = {guarded:.15}"),
    )
}

fn criterion_5() -> Outcome {
    let mut cfg = RunConfig::preset(Experiment::Example1Cn);
    cfg.time.diagnostics_every = 1;
    let exact = cfg.exact.build().unwrap();
    let ops = bo_ldg::harness::build_operators(&cfg, 160).unwrap();
    let u0 = radau_project(|x| exact(x, 0.0), ops.space()).unwrap();
    let sim = run_simulation(&u0, &ops, cfg.equation, &cfg.time, None).unwrap();
    let slack = 10.0 * cfg.time.newton_tol;
    let worst = sim.diagnostics.windows(2).map(|w| w[1].norm - w[0].norm).fold(f64::NEG_INFINITY, f64::max);
    outcome(
        worst <= slack && sim.diagnostics.len() == sim.steps + 1,
        format!("{} steps, max per-step norm increase {worst:.2e} (allowed {slack:.0e})", sim.steps),
    )
}

fn errors(s: &Study) -> Vec<f64> {
    s.rows.iter().map(|r| r.error.unwrap_or(f64::NAN)).collect()
}

fn rates(s: &Study) -> Vec<f64> {
    s.rows.iter().skip(1).map(|r| r.rate.unwrap_or(f64::NAN)).collect()
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn within_factor(got: f64, want: f64, f: f64) -> bool {
    got <= want * f && got >= want / f
}

fn criterion_6(s: &Study) -> Outcome {
    let published_e = [1.65e-2, 3.77e-3, 8.98e-4];
    let published_c1 = [1.04, 1.05, 1.02];
    let published_c2 = [0.97, 0.97, 0.98];
    let e = errors(s);
    let r = rates(s);
    let rates_ok = r.iter().all(|&x| (1.85..=2.25).contains(&x));
    let errs_ok = e.iter().zip(published_e).all(|(&g, w)| within_factor(g, w, 2.5));
    let cons_ok = s.rows.iter().enumerate().all(|(i, row)| {
        let c1 = row.c1.unwrap_or(f64::NAN);
        let c2 = row.c2.unwrap_or(f64::NAN);
        (c1 - published_c1[i]).abs() <= 0.05 && (c2 - published_c2[i]).abs() <= 0.05
    });
    let cons: Vec<_> = s.rows.iter().map(|r| (r.c1.unwrap_or(f64::NAN), r.c2.unwrap_or(f64::NAN))).collect();
    outcome(
        rates_ok && errs_ok && cons_ok,
        format!("errors {}, rates {r:.3?}, (C1,C2) {cons:.4?}", sci(&e)),
    )
}

fn criterion_7(studies: &[Study]) -> Outcome {
    let published_k3 = [8.69e-3, 4.20e-4, 2.49e-5];
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, s) in (1..=3).zip(studies) {
        let r = rates(s);
        ok &= r.iter().all(|&x| (x - (k as f64 + 1.0)).abs() <= 0.35);
        parts.push(format!("k={k}: errors {} rates {r:.3?}", sci(&errors(s))));
    }
    let k3 = &studies[2];
    ok &= errors(k3).iter().zip(published_k3).all(|(&g, w)| within_factor(g, w, 2.5));
    let last = k3.rows.last().unwrap();
    let (c1, c2) = (last.c1.unwrap_or(f64::NAN), last.c2.unwrap_or(f64::NAN));
    ok &= (c1 - 1.0).abs() <= 0.02 && (c2 - 1.0).abs() <= 0.02;
    parts.push(format!("C1={c1:.6} C2={c2:.6} at N=160"));
    outcome(ok, parts.join("; "))
}

fn criterion_8(s: &Study) -> Outcome {
    let r = rates(s);
    let last = s.rows.last().unwrap();
    let (c1, c2) = (last.c1.unwrap_or(f64::NAN), last.c2.unwrap_or(f64::NAN));
    let ok = r.iter().all(|x| (2.6..=3.3).contains(x)) && (c1 - 1.0).abs() <= 0.02 && (c2 - 1.0).abs() <= 0.02;
    outcome(ok, format!("errors {}, rate {r:.3?}, C1={c1:.6} C2={c2:.6} at N=1280", sci(&errors(s))))
}

/// Same two-soliton run on a four times wider domain; reported for context
/// only, the criterion itself is unchanged.
fn wide_domain_reference() -> String {
    let mut cfg = RunConfig::preset(Experiment::Example2Rk);
    cfg.domain = Domain { a: -600.0, b: 600.0 };
    cfg.n_list = vec![1280, 2560];
    let s = run_convergence_study(&cfg).unwrap();
    format!(
        "same solution on [−600,600], N 1280/2560 (h of N 320/640 here): errors {}; \
         the domain-truncation floor shrinks only slowly as the domain widens",
        sci(&errors(&s))
    )
}

fn criterion_9() -> Outcome {
    // linear problem: Example 1 geometry, f = 0, reference exp(T·Lh)u⁰
    let ops = operators(-15.0, 15.0, 24, 2, Closure::Periodic);
    let exact = bo_ldg::solutions::PeriodicSoliton::new(0.25, 15.0).unwrap();
    let u0 = l2_project(|x| exact.eval(x, 0.0), ops.space()).into_coeffs();
    let l = ops.lh().clone();
    let nrm = operator_norm(&ops).unwrap();
    let t_final = 4.0;
    let reference = (&l * t_final).exp() * &u0;
    let err = |u: &DVector<f64>| {
        (u - &reference).iter().zip(ops.mass()).map(|(d, m)| d * d * m).sum::<f64>().sqrt()
    };
    let levels = |base: usize, step: &dyn Fn(&DVector<f64>, f64) -> DVector<f64>| -> Vec<f64> {
        (0..4)
            .map(|j| {
                let n = base << j;
                let tau = t_final / n as f64;
                let mut u = u0.clone();
                for _ in 0..n {
                    u = step(&u, tau);
                }
                err(&u)
            })
            .collect()
    };
    let orders = |e: &[f64]| e.windows(2).map(|w| (w[0] / w[1]).log2()).collect::<Vec<_>>();
    // refinement starts at τ‖Lh‖ ≈ 1/4 so the stiffest modes are resolved too
    let base = (4.0 * t_final * nrm).ceil() as usize;
    let cn_errors = {
        let steppers: Vec<f64> = (0..4)
            .map(|j| {
                let n = base << j;
                let s = CnStepper::new(&ops, Flux::Zero, t_final / n as f64, 1e-13, 5).unwrap();
                let mut u = u0.clone();
                for _ in 0..n {
                    u = s.step(&u).unwrap().0;
                }
                err(&u)
            })
            .collect();
        steppers
    };
    let rk = levels(base, &|u, tau| rk4_step(u, tau, |y| Ok(&l * y)).unwrap());
    let ls = levels(base, &|u, tau| lserk54_step(u, tau, |y| Ok(&l * y)).unwrap());
    let (o_cn, o_rk, o_ls) = (orders(&cn_errors), orders(&rk), orders(&ls));
    let ok = o_cn.iter().all(|o| (o - 2.0).abs() <= 0.1)
        && o_rk.iter().chain(&o_ls).all(|o| (o - 4.0).abs() <= 0.15);
    outcome(ok, format!("CN orders {o_cn:.3?}; RK4 orders {o_rk:.3?}; LSERK orders {o_ls:.3?}"))
}

fn criterion_10() -> Outcome {
    let g = |x: f64| (std::f64::consts::PI * x).sin() + 0.3 * (2.0 * x).cos();
    let mut endpoint = 0.0f64;
    let mut idem = 0.0f64;
    let mut bad_rates = Vec::new();
    for k in 1..=3 {
        let mut e_l2 = Vec::new();
        let mut e_rad = Vec::new();
        let ns = [16, 32, 64];
        for n in ns {
            let sp = Arc::new(DgSpace::new(Mesh::uniform(-1.0, 1.0, n).unwrap(), k).unwrap());
            let p = l2_project(g, &sp);
            let r = radau_project(g, &sp).unwrap();
            for i in 0..n {
                endpoint = endpoint.max((r.eval_in_cell(i, 1.0) - g(sp.mesh().edges()[i + 1])).abs());
            }
            let pp = l2_project(|x| p.eval(x, bo_ldg::Side::Minus).unwrap(), &sp);
            let rr = radau_project(|x| r.eval(x, bo_ldg::Side::Minus).unwrap(), &sp).unwrap();
            idem = idem.max((pp.coeffs() - p.coeffs()).amax()).max((rr.coeffs() - r.coeffs()).amax());
            e_l2.push(l2_error(&p, |x, _| g(x), 0.0));
            e_rad.push(l2_error(&r, |x, _| g(x), 0.0));
        }
        for (name, e) in [("L2", &e_l2), ("P-", &e_rad)] {
            for rate in convergence_rate(e, &ns).unwrap() {
                if (rate - (k as f64 + 1.0)).abs() > 0.1 {
                    bad_rates.push(format!("{name} k={k} rate {rate:.3}"));
                }
            }
        }
    }
    let ok = endpoint <= 1e-12 && idem <= 1e-13 && bad_rates.is_empty();
    outcome(
        ok,
        format!("endpoint dev {endpoint:.1e}, idempotence dev {idem:.1e}, off-target rates {bad_rates:?}"),
    )
}

fn main() {
    let wanted: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let want = |i: usize| wanted.as_ref().is_none_or(|w| w.contains(&i));
    let mut results: Vec<(usize, Outcome, f64)> = Vec::new();
    let mut timed = |i: usize, f: &mut dyn FnMut() -> Outcome| {
        if want(i) {
            let t = Instant::now();
            let o = f();
            let secs = t.elapsed().as_secs_f64();
            println!("criterion {i:>2}: {} ({secs:.1}s) — {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            results.push((i, o, secs));
        }
    };
    timed(1, &mut criterion_1);
    timed(2, &mut criterion_2);
    timed(3, &mut criterion_3);
    timed(4, &mut criterion_4);
    timed(5, &mut criterion_5);

    let studies = || -> Option<(Study, Vec<Study>, Study)> {
        if !(want(6) || want(7) || want(8) || want(11)) {
            return None;
        }
        let cn = run_convergence_study(&RunConfig::preset(Experiment::Example1Cn)).unwrap();
        let rk = (1..=3)
            .map(|k| {
                let mut c = RunConfig::preset(Experiment::Example1Rk);
                c.degree = k;
                run_convergence_study(&c).unwrap()
            })
            .collect();
        let ex2 = run_convergence_study(&RunConfig::preset(Experiment::Example2Rk)).unwrap();
        Some((cn, rk, ex2))
    };
    let t = Instant::now();
    let first = studies();
    let first_secs = t.elapsed().as_secs_f64();
    if let Some((cn, rk, ex2)) = &first {
        timed(6, &mut || criterion_6(cn));
        timed(7, &mut || criterion_7(rk));
        timed(8, &mut || criterion_8(ex2));
        if want(8) {
            println!("    note: criteria 6–8 studies took {first_secs:.0}s together");
            println!("    context for 8: {}", wide_domain_reference());
        }
    }
    timed(9, &mut criterion_9);
    timed(10, &mut criterion_10);
    if let Some((cn, rk, ex2)) = &first {
        timed(11, &mut || {
            let (cn2, rk2, ex22) = studies().unwrap();
            let csv = |s: &Study| table_csv(&s.rows).unwrap();
            let mut same = csv(cn) == csv(&cn2) && csv(ex2) == csv(&ex22);
            for (a, b) in rk.iter().zip(&rk2) {
                same &= csv(a) == csv(b);
            }
            outcome(same, format!("rerun CSV tables byte-identical: {same}"))
        });
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria pass{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failing: {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
