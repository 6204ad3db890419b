//! Time integration: Crank–Nicolson with Newton–GMRES, classical RK4 and the
//! five-stage low-storage RK(5,4).

use nalgebra::{DMatrix, DVector, LU};
use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::operators::{Flux, OperatorSet};
use crate::solutions::{conserved_quantities, Conserved};
use crate::stability::operator_norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    CrankNicolson,
    Rk4Classical,
    Lserk54,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauRule {
    /// τ = c·h
    ProportionalH,
    /// τ = c·h²
    ProportionalH2,
    /// τ = c
    Fixed,
}

/// Target for τ‖Lh‖ when the explicit step is chosen automatically.
pub const AUTO_TAU_NORM: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeConfig {
    pub scheme: Scheme,
    pub tau_rule: TauRule,
    /// `None` picks a default: 0.5 for τ = c·h, and for τ = c·h² the value
    /// giving τ‖Lh‖ = 1.5 (power-iteration estimate).
    pub tau_coefficient: Option<f64>,
    pub t_final: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// record diagnostics every this many steps (0: only start and end)
    pub diagnostics_every: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            scheme: Scheme::CrankNicolson,
            tau_rule: TauRule::ProportionalH,
            tau_coefficient: None,
            t_final: 1.0,
            newton_tol: 1e-12,
            newton_max_iter: 50,
            diagnostics_every: 0,
        }
    }
}

impl TimeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("final time must be finite and ≥ 0, got {}", self.t_final)));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::Config("Newton tolerance and iteration cap must be positive".into()));
        }
        if let Some(c) = self.tau_coefficient {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("time-step coefficient must be positive, got {c}")));
            }
        }
        if self.tau_rule == TauRule::Fixed && self.tau_coefficient.is_none() {
            return Err(Error::Config("a fixed time step needs an explicit value".into()));
        }
        Ok(())
    }

    pub fn resolve_tau(&self, ops: &OperatorSet) -> Result<f64> {
        self.validate()?;
        let h = ops.space().mesh().h();
        let tau = match (self.tau_rule, self.tau_coefficient) {
            (TauRule::Fixed, Some(c)) => c,
            (TauRule::ProportionalH, c) => c.unwrap_or(0.5) * h,
            (TauRule::ProportionalH2, Some(c)) => c * h * h,
            (TauRule::ProportionalH2, None) => AUTO_TAU_NORM / operator_norm(ops)?,
            (TauRule::Fixed, None) => unreachable!("validated above"),
        };
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("resolved time step {tau} is not positive")));
        }
        Ok(tau)
    }
}

/// Number of steps and the length of the last one, so that the steps sum to
/// `t_final`.
pub fn step_schedule(t_final: f64, tau: f64) -> (usize, f64) {
    if t_final <= 0.0 {
        return (0, 0.0);
    }
    let n = ((t_final / tau) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (n, t_final - (n - 1) as f64 * tau)
}

/// Classical four-stage RK4.
pub fn rk4_step<F>(u: &DVector<f64>, tau: f64, mut rhs: F) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = rhs(u)?;
    let k2 = rhs(&(u + &k1 * (0.5 * tau)))?;
    let k3 = rhs(&(u + &k2 * (0.5 * tau)))?;
    let k4 = rhs(&(u + &k3 * tau))?;
    Ok(u + (k1 + (k2 + k3) * 2.0 + k4) * (tau / 6.0))
}

// Carpenter & Kennedy (1994), five-stage fourth-order 2N-storage scheme.
pub const LSERK_A: [f64; 5] = [
    0.0,
    -567301805773.0 / 1357537059087.0,
    -2404267990393.0 / 2016746695238.0,
    -3550918686646.0 / 2091501179385.0,
    -1275806237668.0 / 842570457699.0,
];
pub const LSERK_B: [f64; 5] = [
    1432997174477.0 / 9575080441755.0,
    5161836677717.0 / 13612068292357.0,
    1720146321549.0 / 2090206949498.0,
    3134564353537.0 / 4481467310338.0,
    2277821191437.0 / 14882151754819.0,
];
/// Stage times; only needed for non-autonomous right-hand sides.
pub const LSERK_C: [f64; 5] = [
    0.0,
    1432997174477.0 / 9575080441755.0,
    2526269341429.0 / 6820363962896.0,
    2006345519317.0 / 3224310063776.0,
    2802321613138.0 / 2924317926251.0,
];

/// k_j = a_j k_{j−1} + τ·rhs(y), y ← y + b_j k_j, j = 1..5.
pub fn lserk54_step<F>(u: &DVector<f64>, tau: f64, mut rhs: F) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut y = u.clone();
    let mut k = DVector::zeros(u.len());
    for j in 0..5 {
        let r = rhs(&y)?;
        k *= LSERK_A[j];
        k.axpy(tau, &r, 1.0);
        y.axpy(LSERK_B[j], &k, 1.0);
    }
    Ok(y)
}

pub trait NewtonProblem {
    fn residual(&mut self, x: &DVector<f64>) -> Result<DVector<f64>>;
    /// Solve J(x) δ = r.
    fn solve_jacobian(&mut self, x: &DVector<f64>, r: &DVector<f64>) -> Result<DVector<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOutcome {
    pub iterations: usize,
    pub residual: f64,
}

/// Newton iteration until ‖R(x)‖₂ ≤ tol; `x` holds the guess on entry.
pub fn newton_solve(p: &mut dyn NewtonProblem, x: &mut DVector<f64>, tol: f64, max_iter: usize) -> Result<NewtonOutcome> {
    let mut r = p.residual(x)?;
    let mut res = r.norm();
    for it in 0..=max_iter {
        if !res.is_finite() {
            return Err(Error::NewtonDiverged { residual: res, iterations: it });
        }
        if res <= tol {
            return Ok(NewtonOutcome { iterations: it, residual: res });
        }
        if it == max_iter {
            break;
        }
        let d = p.solve_jacobian(x, &r)?;
        *x -= d;
        r = p.residual(x)?;
        res = r.norm();
    }
    Err(Error::NewtonDiverged { residual: res, iterations: max_iter })
}

struct DenseProblem<R, J> {
    residual: R,
    jacobian: J,
}

impl<R, J> NewtonProblem for DenseProblem<R, J>
where
    R: FnMut(&DVector<f64>) -> DVector<f64>,
    J: FnMut(&DVector<f64>) -> DMatrix<f64>,
{
    fn residual(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok((self.residual)(x))
    }

    fn solve_jacobian(&mut self, x: &DVector<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
        (self.jacobian)(x).lu().solve(r).ok_or(Error::SingularJacobian)
    }
}

/// Newton with a dense Jacobian callback.
pub fn newton_solve_dense(
    residual: impl FnMut(&DVector<f64>) -> DVector<f64>,
    jacobian: impl FnMut(&DVector<f64>) -> DMatrix<f64>,
    guess: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, NewtonOutcome)> {
    let mut x = guess;
    let out = newton_solve(&mut DenseProblem { residual, jacobian }, &mut x, tol, max_iter)?;
    Ok((x, out))
}

/// Right-preconditioned restarted GMRES for A x = b: `apply` computes A v,
/// `precond` computes P⁻¹ v. Stops when ‖b − Ax‖ ≤ rtol·‖b‖.
pub fn gmres(
    mut apply: impl FnMut(&DVector<f64>) -> DVector<f64>,
    mut precond: impl FnMut(&DVector<f64>) -> DVector<f64>,
    b: &DVector<f64>,
    rtol: f64,
    restart: usize,
    max_iter: usize,
) -> (DVector<f64>, usize, f64) {
    let n = b.len();
    let bnorm = b.norm();
    let mut x = DVector::zeros(n);
    if bnorm == 0.0 {
        return (x, 0, 0.0);
    }
    let target = rtol * bnorm;
    let mut total = 0;
    loop {
        let r0 = b - apply(&x);
        let beta = r0.norm();
        if beta <= target || total >= max_iter {
            return (x, total, beta / bnorm);
        }
        let m = restart.min(max_iter - total).max(1);
        let mut v: Vec<DVector<f64>> = vec![r0 / beta];
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = DVector::<f64>::zeros(m + 1);
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            let mut w = apply(&precond(&v[j]));
            // modified Gram–Schmidt
            for (i, vi) in v.iter().enumerate() {
                h[(i, j)] = w.dot(vi);
                w.axpy(-h[(i, j)], vi, 1.0);
            }
            h[(j + 1, j)] = w.norm();
            for i in 0..j {
                let t = cs[i] * h[(i, j)] + sn[i] * h[(i + 1, j)];
                h[(i + 1, j)] = -sn[i] * h[(i, j)] + cs[i] * h[(i + 1, j)];
                h[(i, j)] = t;
            }
            let d = h[(j, j)].hypot(h[(j + 1, j)]);
            if d == 0.0 {
                break;
            }
            cs[j] = h[(j, j)] / d;
            sn[j] = h[(j + 1, j)] / d;
            h[(j, j)] = d;
            h[(j + 1, j)] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            total += 1;
            let hn = w.norm();
            if g[j + 1].abs() <= target || hn == 0.0 {
                break;
            }
            v.push(w / hn);
        }
        if used == 0 {
            return (x, total, beta / bnorm);
        }
        // back substitution on the triangular part
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let s: f64 = (i + 1..used).map(|c| h[(i, c)] * y[c]).sum();
            y[i] = (g[i] - s) / h[(i, i)];
        }
        let mut z = DVector::zeros(n);
        for (yi, vi) in y.iter().zip(&v) {
            z.axpy(*yi, vi, 1.0);
        }
        x += precond(&z);
    }
}

/// Crank–Nicolson step u⁰ ↦ u¹ solving
/// R(u¹) = M(u¹ − u⁰) − τ·rhs_moments((u⁰ + u¹)/2) = 0.
///
/// The Jacobian M − (τ/2)(M·Lh + J_F) is inverted by GMRES preconditioned with
/// an LU factorization of the constant part M − (τ/2)M·Lh.
pub struct CnStepper<'a> {
    ops: &'a OperatorSet,
    flux: Flux,
    tau: f64,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    tol: f64,
    max_iter: usize,
}

impl<'a> CnStepper<'a> {
    pub fn new(ops: &'a OperatorSet, flux: Flux, tau: f64, tol: f64, max_iter: usize) -> Result<Self> {
        let mass = ops.mass();
        let mut b = ops.lh().clone();
        for (i, mut row) in b.row_iter_mut().enumerate() {
            row *= -0.5 * tau * mass[i];
        }
        for (i, m) in mass.iter().enumerate() {
            b[(i, i)] += m;
        }
        let lu = b.lu();
        if !lu.is_invertible() {
            return Err(Error::SingularJacobian);
        }
        Ok(CnStepper { ops, flux, tau, lu, tol, max_iter })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Returns u¹ and the Newton iteration count.
    pub fn step(&self, u0: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
        let mut prob = CnProblem { s: self, u0, jf: None };
        let mut x = u0.clone();
        let out = newton_solve(&mut prob, &mut x, self.tol, self.max_iter)?;
        Ok((x, out.iterations))
    }
}

struct CnProblem<'s, 'a> {
    s: &'s CnStepper<'a>,
    u0: &'s DVector<f64>,
    jf: Option<CsrMatrix<f64>>,
}

impl CnProblem<'_, '_> {
    fn midpoint(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.u0 + x) * 0.5
    }
}

impl NewtonProblem for CnProblem<'_, '_> {
    fn residual(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let ops = self.s.ops;
        let w = self.midpoint(x);
        let rhs = ops.rhs(&w, &self.s.flux)?;
        let mass = ops.mass();
        Ok(DVector::from_fn(x.len(), |i, _| mass[i] * (x[i] - self.u0[i] - self.s.tau * rhs[i])))
    }

    fn solve_jacobian(&mut self, x: &DVector<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
        let ops = self.s.ops;
        let tau = self.s.tau;
        if self.s.flux.is_zero() {
            return Ok(self.s.lu.solve(r).ok_or(Error::SingularJacobian)?);
        }
        let w = self.midpoint(x);
        let jf = self.jf.insert(ops.nonlinear_jacobian(w.as_slice(), &self.s.flux));
        let mass = ops.mass();
        let n = x.len();
        let apply = |v: &DVector<f64>| {
            let mut lv = vec![0.0; n];
            ops.apply_linear(v.as_slice(), &mut lv);
            let jv = &*jf * v;
            DVector::from_fn(n, |i, _| mass[i] * (v[i] - 0.5 * tau * lv[i]) - 0.5 * tau * jv[i])
        };
        let lu = &self.s.lu;
        let precond = |v: &DVector<f64>| lu.solve(v).unwrap_or_else(|| v.clone());
        let (d, _, rel) = gmres(apply, precond, r, 1e-13, 40, 200);
        if !rel.is_finite() {
            return Err(Error::SingularJacobian);
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub step: usize,
    pub time: f64,
    pub norm: f64,
    pub conserved: Conserved,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub solution: Field,
    pub time: f64,
    pub steps: usize,
    pub tau: f64,
    pub aborted: bool,
    pub newton_iterations: usize,
    pub diagnostics: Vec<Diagnostic>,
}

pub type Observer<'o> = &'o mut dyn FnMut(usize, f64, &Field) -> Control;

/// Advance `u0` to `cfg.t_final`. The observer, if any, sees every step.
pub fn run_simulation(
    u0: &Field,
    ops: &OperatorSet,
    flux: Flux,
    cfg: &TimeConfig,
    mut observer: Option<Observer<'_>>,
) -> Result<SimulationResult> {
    if !ops.space().same_as(u0.space()) {
        return Err(Error::SpaceMismatch);
    }
    let tau = if cfg.t_final > 0.0 { cfg.resolve_tau(ops)? } else { cfg.validate().map(|_| 0.0)? };
    let (steps, last) = step_schedule(cfg.t_final, tau);
    let space = ops.space().clone();
    let diag = |step: usize, t: f64, u: &Field| -> Result<Diagnostic> {
        Ok(Diagnostic { step, time: t, norm: u.norm(), conserved: conserved_quantities(u, u0)? })
    };
    let mut diagnostics = vec![diag(0, 0.0, u0)?];
    let mut u = u0.coeffs().clone();
    let mut newton_iterations = 0;
    let mut cn = match cfg.scheme {
        Scheme::CrankNicolson if steps > 0 => {
            Some(CnStepper::new(ops, flux, tau, cfg.newton_tol, cfg.newton_max_iter)?)
        }
        _ => None,
    };
    let mut t = 0.0;
    let mut aborted = false;
    let mut done = 0;
    for n in 1..=steps {
        let dt = if n == steps { last } else { tau };
        let advanced = match cfg.scheme {
            Scheme::CrankNicolson => {
                if cn.as_ref().is_some_and(|s| s.tau() != dt) {
                    cn = Some(CnStepper::new(ops, flux, dt, cfg.newton_tol, cfg.newton_max_iter)?);
                }
                let stepper = cn.as_ref().expect("built when steps > 0");
                stepper.step(&u).map(|(v, it)| {
                    newton_iterations += it;
                    v
                })
            }
            Scheme::Rk4Classical => rk4_step(&u, dt, |y| ops.rhs(y, &flux)),
            Scheme::Lserk54 => lserk54_step(&u, dt, |y| ops.rhs(y, &flux)),
        }
        .and_then(|v| {
            if v.iter().all(|a| a.is_finite()) {
                Ok(v)
            } else {
                Err(Error::NonFinite("the solution"))
            }
        });
        let t_new = if n == steps { cfg.t_final } else { n as f64 * tau };
        u = advanced.map_err(|e| Error::StepFailed { step: n, time: t_new, source: Box::new(e) })?;
        t = t_new;
        done = n;
        let needs_field = observer.is_some()
            || n == steps
            || (cfg.diagnostics_every > 0 && n % cfg.diagnostics_every == 0);
        if needs_field {
            let field = Field::from_coeffs(space.clone(), u.clone())?;
            if n == steps || (cfg.diagnostics_every > 0 && n % cfg.diagnostics_every == 0) {
                diagnostics.push(diag(n, t, &field)?);
            }
            if let Some(obs) = observer.as_mut() {
                if obs(n, t, &field) == Control::Abort {
                    if n != steps && !(cfg.diagnostics_every > 0 && n % cfg.diagnostics_every == 0) {
                        diagnostics.push(diag(n, t, &field)?);
                    }
                    aborted = true;
                    break;
                }
            }
        }
    }
    Ok(SimulationResult {
        solution: Field::from_coeffs(space, u)?,
        time: t,
        steps: done,
        tau,
        aborted,
        newton_iterations,
        diagnostics,
    })
}
