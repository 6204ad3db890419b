//! Stability laboratory for the explicit four-stage scheme u ↦ P₄(τL)u.
//!
//! Norms are the L²(Ω) norms of the fields: coefficient vectors are scaled by
//! M^{1/2}, after which plain Euclidean linear algebra applies.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_rational::Rational64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::OperatorSet;

/// Largest dimension handed to the dense symmetric eigensolver.
pub const MAX_DENSE_EIGEN: usize = 4096;

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let r = self * DVector::from_column_slice(x);
        y.copy_from_slice(r.as_slice());
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        let r = self.tr_mul(&DVector::from_column_slice(x));
        y.copy_from_slice(r.as_slice());
    }
}

/// Lh, applied without forming it.
impl LinearOperator for OperatorSet {
    fn dim(&self) -> usize {
        OperatorSet::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_linear(x, y)
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        self.apply_linear_transpose(x, y)
    }
}

/// Spectral norm by power iteration on LᵀL (relative tolerance 1e-6, at most
/// 10 000 iterations).
pub fn operator_norm(op: &dyn LinearOperator) -> Result<f64> {
    let n = op.dim();
    if n == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut est = 0.0;
    const MAX_ITER: usize = 10_000;
    for it in 0..MAX_ITER {
        let nv = norm(&v);
        if nv == 0.0 {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|a| *a /= nv);
        op.apply(&v, &mut w);
        let new = norm(&w);
        if new == 0.0 {
            return Ok(0.0);
        }
        op.apply_transpose(&w, &mut z);
        std::mem::swap(&mut v, &mut z);
        if it > 0 && (new - est).abs() <= 1e-6 * new {
            // one more Rayleigh step costs nothing and tightens the value
            return Ok(new.max(est));
        }
        est = new;
    }
    Err(Error::PowerIteration { estimate: est, iterations: MAX_ITER })
}

/// M^{1/2} L M^{−1/2}
pub fn weighted(l: &DMatrix<f64>, mass: &[f64]) -> DMatrix<f64> {
    let mut out = l.clone();
    for j in 0..out.ncols() {
        let cj = 1.0 / mass[j].sqrt();
        for i in 0..out.nrows() {
            out[(i, j)] *= mass[i].sqrt() * cj;
        }
    }
    out
}

/// Largest eigenvalue of ½(L̂ + L̂ᵀ), L̂ = M^{1/2} L M^{−1/2}; L is semi-negative
/// iff the result is ≤ 0 up to rounding.
pub fn check_semi_negative(l: &DMatrix<f64>, mass: &[f64]) -> Result<f64> {
    if !l.is_square() || l.nrows() != mass.len() {
        return Err(Error::DimensionMismatch { expected: mass.len(), got: l.nrows() });
    }
    if l.nrows() > MAX_DENSE_EIGEN {
        return Err(Error::Eigen(format!("dimension {} exceeds the dense limit {MAX_DENSE_EIGEN}", l.nrows())));
    }
    let lw = weighted(l, mass);
    let sym = (&lw + lw.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// The energy-equality coefficients α_ij as exact rationals.
pub fn energy_coefficients() -> [[Rational64; 4]; 4] {
    let r = |n: i64, d: i64| -Rational64::new(n, d);
    [
        [r(1, 1), r(1, 2), r(1, 6), r(1, 24)],
        [r(1, 2), r(1, 3), r(1, 8), r(1, 24)],
        [r(1, 6), r(1, 8), r(1, 24), r(1, 48)],
        [r(1, 24), r(1, 24), r(1, 48), r(1, 144)],
    ]
}

fn to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub step: usize,
    pub norm_sq_before: f64,
    pub norm_sq_after: f64,
    pub q_value: f64,
    pub dissipation_part: f64,
    pub quadratic_part: f64,
}

impl EnergyReport {
    /// |direct − formula|
    pub fn residual(&self) -> f64 {
        ((self.norm_sq_after - self.norm_sq_before) - self.q_value).abs()
    }
}

/// u + 𝓛u + 𝓛²u/2 + 𝓛³u/6 + 𝓛⁴u/24 in Horner form.
pub fn apply_p4(l: &DMatrix<f64>, tau: f64, u: &DVector<f64>) -> DVector<f64> {
    let mut y = u.clone();
    for d in [4.0, 3.0, 2.0, 1.0] {
        y = u + (l * &y) * (tau / d);
    }
    y
}

/// Both sides of the energy equality for one step with 𝓛 = τL, in the
/// M-weighted norm.
pub fn energy_change(u: &DVector<f64>, l: &DMatrix<f64>, mass: &[f64], tau: f64) -> EnergyReport {
    let lw = weighted(l, mass) * tau;
    let uw = DVector::from_iterator(u.len(), u.iter().zip(mass).map(|(a, m)| a * m.sqrt()));
    // powers 𝓛ⁱu, i = 0..4
    let mut pw = vec![uw.clone()];
    for i in 0..4 {
        let next = &lw * &pw[i];
        pw.push(next);
    }
    let sym = &lw + lw.transpose();
    let alpha = energy_coefficients();
    let mut quad = 0.0;
    for i in 0..4 {
        let s = &sym * &pw[i];
        for j in 0..4 {
            // [a, b] = −(a, (𝓛 + 𝓛ᵀ) b)
            quad += to_f64(alpha[j][i]) * -pw[j].dot(&s);
        }
    }
    let diss = pw[4].norm_squared() / 576.0 - pw[3].norm_squared() / 72.0;
    let after = pw[0].clone() + &pw[1] + &pw[2] / 2.0 + &pw[3] / 6.0 + &pw[4] / 24.0;
    EnergyReport {
        step: 0,
        norm_sq_before: uw.norm_squared(),
        norm_sq_after: after.norm_squared(),
        q_value: diss + quad,
        dissipation_part: diss,
        quadratic_part: quad,
    }
}

pub type Rat3 = [[Rational64; 3]; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeMatrices {
    pub a0: Rat3,
    pub a1: Rat3,
    pub a2: Rat3,
    /// the printed sum
    pub a: Rat3,
    /// eigenvalues of `a`, ascending
    pub eigenvalues: [f64; 3],
}

impl CompositeMatrices {
    pub fn sum(&self) -> Rat3 {
        let mut s = self.a0;
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] = self.a0[i][j] + self.a1[i][j] + self.a2[i][j];
            }
        }
        s
    }
}

pub fn rat3_to_matrix(m: &Rat3) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |i, j| to_f64(m[i][j]))
}

/// Leading 3×3 blocks of the one-, two- and three-step quadratic forms.
pub fn build_composite_matrices() -> CompositeMatrices {
    let neg = |rows: [[(i64, i64); 3]; 3]| -> Rat3 { rows.map(|r| r.map(|(n, d)| -Rational64::new(n, d))) };
    let a0 = neg([[(1, 1), (1, 2), (1, 6)], [(1, 2), (1, 3), (1, 8)], [(1, 6), (1, 8), (1, 24)]]);
    let a1 = neg([[(1, 1), (3, 2), (7, 6)], [(3, 2), (7, 3), (15, 8)], [(7, 6), (15, 8), (37, 24)]]);
    let a2 = neg([[(1, 1), (5, 2), (19, 6)], [(5, 2), (19, 3), (57, 8)], [(19, 6), (57, 8), (253, 24)]]);
    let a = neg([[(3, 1), (9, 2), (9, 2)], [(9, 2), (9, 1), (73, 8)], [(9, 2), (73, 8), (97, 8)]]);
    let eig = SymmetricEigen::new(rat3_to_matrix(&a));
    let mut ev = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
    ev.sort_by(f64::total_cmp);
    CompositeMatrices { a0, a1, a2, a, eigenvalues: ev }
}

fn random_unit(n: usize, mass: &[f64], rng: &mut ChaCha8Rng) -> DVector<f64> {
    let v = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    let nrm = weighted_norm(&v, mass);
    v / nrm
}

fn weighted_norm(v: &DVector<f64>, mass: &[f64]) -> f64 {
    v.iter().zip(mass).map(|(a, m)| a * a * m).sum::<f64>().sqrt()
}

/// Worst ‖u^s‖/‖u⁰‖ over `trials` seeded unit fields after `steps` applications
/// of P₄(τL). Refuses τ‖L‖ above `c0`.
pub fn multistep_stability_trial(
    l: &DMatrix<f64>,
    mass: &[f64],
    tau: f64,
    steps: usize,
    trials: usize,
    seed: u64,
    c0: f64,
) -> Result<f64> {
    let nrm = operator_norm(&weighted(l, mass))?;
    if tau * nrm > c0 {
        return Err(Error::CflGuard { value: tau * nrm, limit: c0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let u0 = random_unit(l.nrows(), mass, &mut rng);
        let mut u = u0.clone();
        for _ in 0..steps {
            u = apply_p4(l, tau, &u);
        }
        worst = worst.max(weighted_norm(&u, mass));
    }
    Ok(worst)
}

/// Runs `steps` applications of P₄(τL) from seeded unit fields and returns the
/// worst ratio ‖u^{n+w}‖/‖u^n‖ over all n and every window width w in `windows`.
pub fn windowed_norm_ratio(
    l: &DMatrix<f64>,
    mass: &[f64],
    tau: f64,
    steps: usize,
    windows: &[usize],
    trials: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = vec![0.0f64; windows.len()];
    // P₄(τL) once as a matrix: cheaper than Horner for many steps
    let n = l.nrows();
    let p4 = {
        let mut y = DMatrix::identity(n, n);
        for d in [4.0, 3.0, 2.0, 1.0] {
            y = DMatrix::identity(n, n) + (l * &y) * (tau / d);
        }
        y
    };
    for _ in 0..trials {
        let mut norms = Vec::with_capacity(steps + 1);
        let mut u = random_unit(n, mass, &mut rng);
        norms.push(1.0);
        for _ in 0..steps {
            u = &p4 * &u;
            norms.push(weighted_norm(&u, mass));
        }
        for (wi, &w) in windows.iter().enumerate() {
            for s in 0..norms.len().saturating_sub(w) {
                worst[wi] = worst[wi].max(norms[s + w] / norms[s]);
            }
        }
    }
    worst
}

/// Largest τ‖L‖ on a grid for which the worst two- and three-step ratios stay
/// ≤ 1 + tol.
pub fn scan_stability_boundary(
    l: &DMatrix<f64>,
    mass: &[f64],
    grid: &[f64],
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<Option<f64>> {
    let nrm = operator_norm(&weighted(l, mass))?;
    let mut best = None;
    for &c in grid {
        let r = windowed_norm_ratio(l, mass, c / nrm, 12, &[2, 3], trials, seed);
        if r.iter().all(|&x| x <= 1.0 + tol) {
            best = Some(c);
        } else {
            break;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub cells: usize,
    pub degree: usize,
    pub operator_norm: f64,
    pub max_symmetric_eigenvalue: Option<f64>,
    pub tau_times_norm: f64,
    pub worst_two_step_ratio: f64,
    pub worst_three_step_ratio: f64,
    pub energy_equality_max_residual: f64,
    pub stability_boundary: Option<f64>,
    pub trials: usize,
    pub seed: u64,
}

/// Full report for the linear operator of `ops` at τ = c/‖Lh‖.
pub fn stability_report(ops: &OperatorSet, c: f64, trials: usize, seed: u64) -> Result<StabilityReport> {
    let l = ops.lh();
    let mass = ops.mass();
    let nrm = operator_norm(&weighted(l, mass))?;
    let tau = c / nrm;
    let max_eig = if l.nrows() <= MAX_DENSE_EIGEN { Some(check_semi_negative(l, mass)?) } else { None };
    let ratios = windowed_norm_ratio(l, mass, tau, 50, &[2, 3], trials, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe4e4);
    let mut eq_res: f64 = 0.0;
    for s in 0..trials.min(20) {
        let u = random_unit(l.nrows(), mass, &mut rng);
        let mut r = energy_change(&u, l, mass, tau);
        r.step = s;
        eq_res = eq_res.max(r.residual() / r.norm_sq_before);
    }
    let grid: Vec<f64> = (1..=60).map(|i| 0.05 * i as f64).collect();
    let boundary = scan_stability_boundary(l, mass, &grid, trials.min(20), seed, 1e-12)?;
    Ok(StabilityReport {
        cells: ops.space().n_cells(),
        degree: ops.space().degree(),
        operator_norm: nrm,
        max_symmetric_eigenvalue: max_eig,
        tau_times_norm: c,
        worst_two_step_ratio: ratios[0],
        worst_three_step_ratio: ratios[1],
        energy_equality_max_residual: eq_res,
        stability_boundary: boundary,
        trials,
        seed,
    })
}
