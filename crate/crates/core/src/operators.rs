//! Interface fluxes and the assembled LDG operators.
//!
//! With the first-order system q = u_x, p = Hq, u_t + f(u)_x = p_x the
//! semi-discrete scheme reads M u_t = F(u) + Dp p, M p = K q, M q = Dm u.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::ops::serial::spmm_csr_dense;
use nalgebra_sparse::ops::Op;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::hilbert::HilbertOperator;
use crate::mesh::DgSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// p̂ = p⁺, û = u⁻
    PplusUminus,
    /// p̂ = p⁻, û = u⁺
    PminusUplus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearFlux {
    LaxFriedrichs,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    GlobalMax,
    LocalMax,
}

/// What lies beyond the two domain ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closure {
    /// û = 0 at both ends and zero exterior traces in f̂.
    Zero,
    /// Traces wrap around.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FluxConfig {
    pub orientation: Orientation,
    pub nonlinear: NonlinearFlux,
    pub delta_mode: DeltaMode,
    pub closure: Closure,
}

impl Default for FluxConfig {
    fn default() -> Self {
        FluxConfig {
            orientation: Orientation::PplusUminus,
            nonlinear: NonlinearFlux::LaxFriedrichs,
            delta_mode: DeltaMode::LocalMax,
            closure: Closure::Zero,
        }
    }
}

/// The convective flux f.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flux {
    Zero,
    /// f(u) = a·u
    Linear { speed: f64 },
    /// f(u) = u²/2
    Burgers,
    /// f(u) = u^p / p
    Power { p: u32 },
}

impl Flux {
    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        match *self {
            Flux::Zero => 0.0,
            Flux::Linear { speed } => speed * u,
            Flux::Burgers => 0.5 * u * u,
            Flux::Power { p } => u.powi(p as i32) / p as f64,
        }
    }

    #[inline]
    pub fn df(&self, u: f64) -> f64 {
        match *self {
            Flux::Zero => 0.0,
            Flux::Linear { speed } => speed,
            Flux::Burgers => u,
            Flux::Power { p } => u.powi(p as i32 - 1),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Flux::Zero) || matches!(self, Flux::Linear { speed } if *speed == 0.0)
    }
}

/// ½(f(u⁻) + f(u⁺)) − (δ/2)(u⁺ − u⁻)
#[inline]
pub fn lax_friedrichs(u_minus: f64, u_plus: f64, f: impl Fn(f64) -> f64, delta: f64) -> f64 {
    if u_minus == u_plus {
        return f(u_minus);
    }
    0.5 * (f(u_minus) + f(u_plus)) - 0.5 * delta * (u_plus - u_minus)
}

pub struct OperatorSet {
    space: Arc<DgSpace>,
    flux: FluxConfig,
    hilbert: HilbertOperator,
    dm: CsrMatrix<f64>,
    dp: CsrMatrix<f64>,
    mass: Vec<f64>,
    minv: Vec<f64>,
    lh: OnceLock<DMatrix<f64>>,
}

impl std::fmt::Debug for OperatorSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorSet").field("flux", &self.flux).field("hilbert", &self.hilbert).finish()
    }
}

fn outer(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

/// Dm for the given orientation and closure.
fn assemble_dm(space: &DgSpace, flux: &FluxConfig) -> CsrMatrix<f64> {
    let np = space.n_local();
    let n = space.n_cells();
    let tab = space.table();
    let rule = space.rule();
    let (l, r) = (&tab.left, &tab.right);
    // −∫ φ'_l φ_m dξ (the Jacobians cancel)
    let mut vol = vec![0.0; np * np];
    for (q, (_, w)) in rule.iter().enumerate() {
        for a in 0..np {
            for b in 0..np {
                vol[a * np + b] -= w * tab.derivatives[q * np + a] * tab.values[q * np + b];
            }
        }
    }
    let mut coo = CooMatrix::new(n * np, n * np);
    let mut push = |ri: usize, cj: usize, blk: &[f64], sign: f64| {
        for a in 0..np {
            for b in 0..np {
                coo.push(ri * np + a, cj * np + b, sign * blk[a * np + b]);
            }
        }
    };
    for i in 0..n {
        push(i, i, &vol, 1.0);
    }
    let periodic = flux.closure == Closure::Periodic;
    // −û⟦z⟧ at edge e between cells e−1 (left) and e (right)
    let edges: Vec<(usize, usize)> = (1..n)
        .map(|e| (e - 1, e))
        .chain(periodic.then_some((n - 1, 0)))
        .collect();
    for (lc, rc) in edges {
        match flux.orientation {
            Orientation::PplusUminus => {
                // û = u⁻ from the left cell
                push(lc, lc, &outer(r, r), 1.0);
                push(rc, lc, &outer(l, r), -1.0);
            }
            Orientation::PminusUplus => {
                push(lc, rc, &outer(r, l), 1.0);
                push(rc, rc, &outer(l, l), -1.0);
            }
        }
    }
    CsrMatrix::from(&coo)
}

fn csr_scale_rows(a: &CsrMatrix<f64>, s: &[f64]) -> CsrMatrix<f64> {
    let mut out = a.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row.values_mut().iter_mut().for_each(|v| *v *= s[i]);
    }
    out
}

fn csr_apply(a: &CsrMatrix<f64>, x: &[f64], y: &mut [f64]) {
    for (row, yi) in a.row_iter().zip(y.iter_mut()) {
        *yi = row.col_indices().iter().zip(row.values()).map(|(&j, v)| v * x[j]).sum();
    }
}

impl OperatorSet {
    pub fn assemble(space: &Arc<DgSpace>, flux: FluxConfig, hilbert: HilbertOperator) -> Result<Self> {
        if !hilbert.space().same_as(space) {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: hilbert.space().dim() });
        }
        let dm = assemble_dm(space, &flux);
        let mut dp = dm.transpose();
        dp.values_mut().iter_mut().for_each(|v| *v = -*v);
        Ok(OperatorSet {
            space: space.clone(),
            flux,
            hilbert,
            dm,
            dp,
            mass: space.mass_diagonal(),
            minv: space.mass_inverse_diagonal(),
            lh: OnceLock::new(),
        })
    }

    pub fn space(&self) -> &Arc<DgSpace> {
        &self.space
    }

    pub fn flux_config(&self) -> &FluxConfig {
        &self.flux
    }

    pub fn hilbert(&self) -> &HilbertOperator {
        &self.hilbert
    }

    pub fn dm(&self) -> &CsrMatrix<f64> {
        &self.dm
    }

    pub fn dp(&self) -> &CsrMatrix<f64> {
        &self.dp
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn mass_inverse(&self) -> &[f64] {
        &self.minv
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Dense Lh = M⁻¹ Dp M⁻¹ K M⁻¹ Dm, built on first use.
    pub fn lh(&self) -> &DMatrix<f64> {
        self.lh.get_or_init(|| {
            let n = self.dim();
            let x = csr_scale_rows(&self.dm, &self.minv);
            // (K X)ᵀ = Xᵀ Kᵀ keeps the sparse factor on the left
            let k = self.hilbert.matrix();
            let mut yt = DMatrix::zeros(n, n);
            spmm_csr_dense(0.0, &mut yt, 1.0, Op::Transpose(&x), Op::Transpose(k));
            let mut y = yt.transpose();
            for (i, mut row) in y.row_iter_mut().enumerate() {
                row *= self.minv[i];
            }
            let dp = csr_scale_rows(&self.dp, &self.minv);
            let mut lh = DMatrix::zeros(n, n);
            spmm_csr_dense(0.0, &mut lh, 1.0, Op::NoOp(&dp), Op::NoOp(&y));
            lh
        })
    }

    /// out = Lh u, without forming Lh.
    pub fn apply_linear(&self, u: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let mut q = vec![0.0; n];
        csr_apply(&self.dm, u, &mut q);
        q.iter_mut().zip(&self.minv).for_each(|(a, b)| *a *= b);
        let mut p = vec![0.0; n];
        self.hilbert.apply_moments(&q, &mut p);
        p.iter_mut().zip(&self.minv).for_each(|(a, b)| *a *= b);
        csr_apply(&self.dp, &p, out);
        out.iter_mut().zip(&self.minv).for_each(|(a, b)| *a *= b);
    }

    /// out = Lhᵀ u = Dp M⁻¹ Kᵀ M⁻¹ Dm M⁻¹ u (using Dmᵀ = −Dp).
    pub fn apply_linear_transpose(&self, u: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let s: Vec<f64> = u.iter().zip(&self.minv).map(|(a, b)| a * b).collect();
        let mut q = vec![0.0; n];
        csr_apply(&self.dm, &s, &mut q);
        q.iter_mut().zip(&self.minv).for_each(|(a, b)| *a *= b);
        let mut p = vec![0.0; n];
        self.hilbert.apply_transpose_moments(&q, &mut p);
        p.iter_mut().zip(&self.minv).for_each(|(a, b)| *a *= b);
        csr_apply(&self.dp, &p, out);
    }

    /// q = M⁻¹ Dm u, the discrete derivative.
    pub fn derivative(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let mut q = vec![0.0; self.dim()];
        csr_apply(&self.dm, u.coeffs().as_slice(), &mut q);
        q.iter_mut().zip(&self.minv).for_each(|(a, b)| *a *= b);
        Field::from_coeffs(self.space.clone(), DVector::from_vec(q))
    }

    fn check(&self, u: &Field) -> Result<()> {
        if self.space.same_as(u.space()) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    /// Traces u at (left end, right end) of every cell.
    fn cell_traces(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let np = self.space.n_local();
        let tab = self.space.table();
        let n = self.space.n_cells();
        let dot = |c: &[f64], phi: &[f64]| c.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>();
        let left = (0..n).map(|i| dot(&u[i * np..(i + 1) * np], &tab.left)).collect();
        let right = (0..n).map(|i| dot(&u[i * np..(i + 1) * np], &tab.right)).collect();
        (left, right)
    }

    /// Per-edge states (u⁻, u⁺) and δ for edges 0..=N.
    fn edge_states(&self, u: &[f64], flux: &Flux) -> (Vec<(f64, f64)>, Vec<f64>) {
        let n = self.space.n_cells();
        let np = self.space.n_local();
        let tab = self.space.table();
        let rule = self.space.rule();
        let (left, right) = self.cell_traces(u);
        let periodic = self.flux.closure == Closure::Periodic;
        let states: Vec<(f64, f64)> = (0..=n)
            .map(|e| {
                let um = if e > 0 { right[e - 1] } else if periodic { right[n - 1] } else { 0.0 };
                let up = if e < n { left[e] } else if periodic { left[0] } else { 0.0 };
                (um, up)
            })
            .collect();
        // max |f'| over each cell's quadrature and end values
        let cell_max: Vec<f64> = (0..n)
            .map(|i| {
                let c = &u[i * np..(i + 1) * np];
                let mut m = flux.df(left[i]).abs().max(flux.df(right[i]).abs());
                for q in 0..rule.len() {
                    let v: f64 = c.iter().zip(&tab.values[q * np..(q + 1) * np]).map(|(a, b)| a * b).sum();
                    m = m.max(flux.df(v).abs());
                }
                m
            })
            .collect();
        let deltas = match self.flux.delta_mode {
            DeltaMode::GlobalMax => {
                let mut g = cell_max.iter().fold(0.0f64, |a, &b| a.max(b));
                if !periodic {
                    g = g.max(flux.df(0.0).abs());
                }
                vec![g; n + 1]
            }
            DeltaMode::LocalMax => (0..=n)
                .map(|e| {
                    let a = if e > 0 {
                        cell_max[e - 1]
                    } else if periodic {
                        cell_max[n - 1]
                    } else {
                        flux.df(0.0).abs()
                    };
                    let b = if e < n {
                        cell_max[e]
                    } else if periodic {
                        cell_max[0]
                    } else {
                        flux.df(0.0).abs()
                    };
                    a.max(b)
                })
                .collect(),
        };
        (states, deltas)
    }

    /// Moments of 𝓕(f(u), φ) = (f(u), φ_x) + Σ f̂⟦φ⟧, added into `out`.
    pub fn add_nonlinear_moments(&self, u: &[f64], flux: &Flux, out: &mut [f64]) {
        if flux.is_zero() || self.flux.nonlinear == NonlinearFlux::None {
            return;
        }
        let n = self.space.n_cells();
        let np = self.space.n_local();
        let tab = self.space.table();
        let rule = self.space.rule();
        let (states, deltas) = self.edge_states(u, flux);
        let fhat: Vec<f64> = states
            .iter()
            .zip(&deltas)
            .map(|(&(um, up), &d)| lax_friedrichs(um, up, |v| flux.f(v), d))
            .collect();
        for i in 0..n {
            let c = &u[i * np..(i + 1) * np];
            let o = &mut out[i * np..(i + 1) * np];
            for (q, (_, w)) in rule.iter().enumerate() {
                let v: f64 = c.iter().zip(&tab.values[q * np..(q + 1) * np]).map(|(a, b)| a * b).sum();
                let fv = w * flux.f(v);
                for l in 0..np {
                    o[l] += fv * tab.derivatives[q * np + l];
                }
            }
            for l in 0..np {
                o[l] += fhat[i] * tab.left[l] - fhat[i + 1] * tab.right[l];
            }
        }
    }

    /// Jacobian of the 𝓕 moments with δ held fixed at its value for `u`.
    pub fn nonlinear_jacobian(&self, u: &[f64], flux: &Flux) -> CsrMatrix<f64> {
        let n = self.space.n_cells();
        let np = self.space.n_local();
        let dim = n * np;
        let mut coo = CooMatrix::new(dim, dim);
        if flux.is_zero() || self.flux.nonlinear == NonlinearFlux::None {
            return CsrMatrix::from(&coo);
        }
        let tab = self.space.table();
        let rule = self.space.rule();
        let (states, deltas) = self.edge_states(u, flux);
        let periodic = self.flux.closure == Closure::Periodic;
        let mut blk = vec![0.0; np * np];
        for i in 0..n {
            let c = &u[i * np..(i + 1) * np];
            blk.iter_mut().for_each(|b| *b = 0.0);
            for (q, (_, w)) in rule.iter().enumerate() {
                let phi = &tab.values[q * np..(q + 1) * np];
                let v: f64 = c.iter().zip(phi).map(|(a, b)| a * b).sum();
                let d = w * flux.df(v);
                for l in 0..np {
                    for m in 0..np {
                        blk[l * np + m] += d * tab.derivatives[q * np + l] * phi[m];
                    }
                }
            }
            for l in 0..np {
                for m in 0..np {
                    coo.push(i * np + l, i * np + m, blk[l * np + m]);
                }
            }
        }
        // edge e: f̂ depends on u⁻ (cell e−1, right end) and u⁺ (cell e, left end);
        // it enters cell e−1 with −φ_l(1) and cell e with +φ_l(−1)
        for (e, (&(um, up), &d)) in states.iter().zip(&deltas).enumerate() {
            let dm = 0.5 * (flux.df(um) + d);
            let dpl = 0.5 * (flux.df(up) - d);
            let lcell = if e > 0 { Some(e - 1) } else if periodic { Some(n - 1) } else { None };
            let rcell = if e < n { Some(e) } else if periodic { Some(0) } else { None };
            if periodic && e == n {
                continue; // same physical edge as e = 0
            }
            let mut add = |row: usize, rsign: f64, rphi: &[f64], col: usize, g: f64, cphi: &[f64]| {
                for l in 0..np {
                    for m in 0..np {
                        coo.push(row * np + l, col * np + m, rsign * rphi[l] * g * cphi[m]);
                    }
                }
            };
            for (row, rsign, rphi) in [(lcell, -1.0, &tab.right), (rcell, 1.0, &tab.left)] {
                let Some(row) = row else { continue };
                if let Some(lc) = lcell {
                    add(row, rsign, rphi, lc, dm, &tab.right);
                }
                if let Some(rc) = rcell {
                    add(row, rsign, rphi, rc, dpl, &tab.left);
                }
            }
        }
        CsrMatrix::from(&coo)
    }

    /// Semi-discrete right-hand side M⁻¹(𝓕(f(u)) + Dp p) on raw coefficients.
    pub fn rhs_into(&self, u: &[f64], flux: &Flux, out: &mut [f64]) {
        let n = self.dim();
        let mut q = vec![0.0; n];
        csr_apply(&self.dm, u, &mut q);
        q.iter_mut().zip(&self.minv).for_each(|(a, b)| *a *= b);
        let mut p = vec![0.0; n];
        self.hilbert.apply_moments(&q, &mut p);
        p.iter_mut().zip(&self.minv).for_each(|(a, b)| *a *= b);
        csr_apply(&self.dp, &p, out);
        self.add_nonlinear_moments(u, flux, out);
        out.iter_mut().zip(&self.minv).for_each(|(a, b)| *a *= b);
    }

    pub fn rhs(&self, u: &DVector<f64>, flux: &Flux) -> Result<DVector<f64>> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: u.len() });
        }
        let mut out = DVector::zeros(self.dim());
        self.rhs_into(u.as_slice(), flux, out.as_mut_slice());
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("the right-hand side"));
        }
        Ok(out)
    }

    /// Field-level right-hand side.
    pub fn nonlinear_rhs(&self, u: &Field, flux: &Flux) -> Result<Field> {
        self.check(u)?;
        let r = self.rhs(u.coeffs(), flux)?;
        Field::from_coeffs(self.space.clone(), r)
    }
}
