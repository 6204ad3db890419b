//! Discrete Hilbert transform: K[(i,l),(j,m)] = ∫_{I_i}∫_{I_j} φ_l(x) φ_m(y) k(x−y) dy dx.
//!
//! On a uniform mesh the matrix is block Toeplitz, so only the 2N−1 distinct
//! (k+1)×(k+1) blocks are computed. `apply` convolves with those blocks
//! (through FFTs on larger meshes) and the dense matrix is materialized on
//! demand.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::mesh::{basis_values, legendre_norm, DgSpace};
use crate::quadrature::{gauss_legendre, QuadRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// 1/(π(x−y)) integrated over [a, b] only.
    Line,
    /// (1/P)·cot(π(x−y)/P), P = b − a: the Hilbert transform of the
    /// periodic extension.
    Periodic,
}

/// Quadrature for cell pairs that share an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TouchingRule {
    /// Closed-form inner integral plus a geometrically graded outer rule.
    Singular,
    /// Plain outer×inner Gauss, like every other pair.
    Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilbertConfig {
    pub outer_n: usize,
    pub inner_n: usize,
    pub skew: bool,
    pub kernel: Kernel,
    pub touching: TouchingRule,
}

impl Default for HilbertConfig {
    fn default() -> Self {
        HilbertConfig {
            outer_n: 7,
            inner_n: 8,
            skew: true,
            kernel: Kernel::Line,
            touching: TouchingRule::Singular,
        }
    }
}

pub struct HilbertOperator {
    space: Arc<DgSpace>,
    config: HilbertConfig,
    /// block for offset o = i − j lives at (o + N − 1)·np², row-major in (l, m)
    blocks: Vec<f64>,
    dense: OnceLock<DMatrix<f64>>,
    fft: OnceLock<FftConvolver>,
}

/// Meshes with at least this many cells apply K by FFT convolution.
pub const FFT_MIN_CELLS: usize = 64;

/// Block-Toeplitz product as (k+1)² scalar linear convolutions of length L ≥ 2N−1.
struct FftConvolver {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// spectrum of the (l, m) generator at (l·np + m)·len
    spectra: Vec<Complex<f64>>,
}

impl FftConvolver {
    fn new(blocks: &[f64], n: usize, np: usize) -> Self {
        let len = (2 * n - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let bs = np * np;
        let mut spectra = vec![Complex::new(0.0, 0.0); bs * len];
        for lm in 0..bs {
            let g = &mut spectra[lm * len..(lm + 1) * len];
            for b in 0..2 * n - 1 {
                let o = b as isize - (n as isize - 1);
                g[o.rem_euclid(len as isize) as usize] = Complex::new(blocks[b * bs + lm], 0.0);
            }
            forward.process(g);
        }
        FftConvolver { len, forward, inverse, spectra }
    }

    fn apply(&self, x: &[f64], y: &mut [f64], np: usize, transpose: bool) {
        let len = self.len;
        let n = x.len() / np;
        let zero = Complex::new(0.0, 0.0);
        let mut xs = vec![zero; np * len];
        for m in 0..np {
            let v = &mut xs[m * len..(m + 1) * len];
            for j in 0..n {
                v[j] = Complex::new(x[j * np + m], 0.0);
            }
            self.forward.process(v);
        }
        let mut acc = vec![zero; len];
        let scale = 1.0 / len as f64;
        for l in 0..np {
            acc.iter_mut().for_each(|a| *a = zero);
            for m in 0..np {
                // Kᵀ has generator T_{−o}ᵀ, whose spectrum is the conjugate
                let g = if transpose { m * np + l } else { l * np + m };
                let g = &self.spectra[g * len..(g + 1) * len];
                let v = &xs[m * len..(m + 1) * len];
                for ((a, gs), vs) in acc.iter_mut().zip(g).zip(v) {
                    *a += if transpose { gs.conj() * vs } else { gs * vs };
                }
            }
            self.inverse.process(&mut acc);
            for i in 0..n {
                y[i * np + l] = acc[i].re * scale;
            }
        }
    }
}

impl std::fmt::Debug for HilbertOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HilbertOperator")
            .field("cells", &self.space.n_cells())
            .field("degree", &self.space.degree())
            .field("config", &self.config)
            .finish()
    }
}

/// cot(z) − 1/z, with a series near 0 where the difference cancels.
fn cot_minus_inverse(z: f64) -> f64 {
    if z.abs() < 0.1 {
        let z2 = z * z;
        -z * (1.0 / 3.0 + z2 * (1.0 / 45.0 + z2 * (2.0 / 945.0 + z2 * (1.0 / 4725.0))))
    } else {
        1.0 / z.tan() - 1.0 / z
    }
}

/// Q_0..Q_k (Legendre functions of the second kind) for |s| > 1, so that
/// ∫_{-1}^{1} P_m(η)/(s−η) dη = 2 Q_m(s). `gap` = |s| − 1, passed separately
/// because forming s − 1 loses everything when s is within rounding of 1.
fn legendre_q(k: usize, s: f64, gap: f64, out: &mut [f64]) {
    out[0] = 0.5 * s.signum() * ((2.0 + gap) / gap).ln();
    if k >= 1 {
        out[1] = s * out[0] - 1.0;
    }
    for n in 1..k {
        let nf = n as f64;
        out[n + 1] = ((2.0 * nf + 1.0) * s * out[n] - nf * out[n - 1]) / (nf + 1.0);
    }
}

struct Assembler<'a> {
    np: usize,
    k: usize,
    h: f64,
    period: f64,
    outer: &'a QuadRule,
    inner: &'a QuadRule,
    phi_outer: Vec<f64>,
    phi_inner: Vec<f64>,
}

impl Assembler<'_> {
    /// (h/2)²·ΣΣ w w φ_l(ξ) φ_m(η) g(d), d = h·o + (h/2)(ξ − η).
    fn tensor(&self, o: f64, g: impl Fn(f64) -> f64, block: &mut [f64]) {
        let np = self.np;
        let s = 0.25 * self.h * self.h;
        for (p, (xi, wx)) in self.outer.iter().enumerate() {
            for (q, (eta, wy)) in self.inner.iter().enumerate() {
                let d = self.h * o + 0.5 * self.h * (xi - eta);
                let kv = s * wx * wy * g(d);
                for l in 0..np {
                    let a = kv * self.phi_outer[p * np + l];
                    for m in 0..np {
                        block[l * np + m] += a * self.phi_inner[q * np + m];
                    }
                }
            }
        }
    }

    /// Line kernel between cells that share an edge (o = ±1).
    fn touching_singular(&self, o: f64, block: &mut [f64]) {
        let np = self.np;
        let k = self.k;
        // inner integral for |s| away from 1 is smooth: plain Gauss is exact to rounding
        let smooth = gauss_legendre(24).expect("valid");
        let mut qv = vec![0.0; np];
        let mut phi = vec![0.0; np];
        let mut inner_vals = vec![0.0; np];
        let panel = gauss_legendre(12).expect("valid");
        let scale = 0.5 * self.h / PI;
        let mut add_point = |xi: f64, dist: f64, w: f64, block: &mut [f64]| {
            // s = ξ + 2o, and |s| − 1 is exactly the distance to the shared edge
            let s = xi + 2.0 * o;
            if dist <= 0.5 {
                legendre_q(k, s, dist, &mut qv);
                for m in 0..np {
                    inner_vals[m] = legendre_norm(m) * 2.0 * qv[m];
                }
            } else {
                inner_vals.iter_mut().for_each(|v| *v = 0.0);
                for (eta, we) in smooth.iter() {
                    basis_values(k, eta, &mut phi);
                    let g = we / (s - eta);
                    for m in 0..np {
                        inner_vals[m] += g * phi[m];
                    }
                }
            }
            basis_values(k, xi, &mut phi);
            for l in 0..np {
                for m in 0..np {
                    block[l * np + m] += scale * w * phi[l] * inner_vals[m];
                }
            }
        };
        // graded panels towards the singular end: ξ = −1 when o = +1, ξ = +1 when o = −1
        let toward: f64 = if o > 0.0 { -1.0 } else { 1.0 };
        let levels = 52;
        let mut hi = 2.0;
        for lev in 0..=levels {
            let lo = if lev == levels { 0.0 } else { 0.5 * hi };
            for (t, w) in panel.iter() {
                let dist = 0.5 * (hi + lo) + 0.5 * (hi - lo) * t;
                let xi = toward - toward.signum() * dist;
                add_point(xi, dist, 0.5 * (hi - lo) * w, block);
            }
            hi = lo;
        }
    }

    fn block(&self, offset: isize, cfg: &HilbertConfig, n: usize, block: &mut [f64]) {
        block.iter_mut().for_each(|b| *b = 0.0);
        let line = |d: f64| 1.0 / (PI * d);
        match cfg.kernel {
            Kernel::Line => match (offset.unsigned_abs(), cfg.touching) {
                (1, TouchingRule::Singular) => self.touching_singular(offset as f64, block),
                _ => self.tensor(offset as f64, line, block),
            },
            Kernel::Periodic => {
                // minimal image of the cell offset
                let n = n as isize;
                let mut o = offset.rem_euclid(n);
                if o > n / 2 {
                    o -= n;
                }
                let p = self.period;
                if o.abs() <= 1 {
                    let remainder = |d: f64| cot_minus_inverse(PI * d / p) / p;
                    if o != 0 && cfg.touching == TouchingRule::Singular {
                        self.touching_singular(o as f64, block);
                    } else {
                        self.tensor(o as f64, line, block);
                    }
                    self.tensor(o as f64, remainder, block);
                } else {
                    self.tensor(o as f64, |d| 1.0 / (p * (PI * d / p).tan()), block);
                }
            }
        }
    }
}

impl HilbertOperator {
    pub fn assemble(space: &Arc<DgSpace>, cfg: &HilbertConfig) -> Result<Self> {
        if cfg.outer_n == cfg.inner_n {
            return Err(Error::InvalidQuadrature(format!(
                "outer and inner rules must differ (both have {} points)",
                cfg.outer_n
            )));
        }
        let outer = gauss_legendre(cfg.outer_n)?;
        let inner = gauss_legendre(cfg.inner_n)?;
        let n = space.n_cells();
        if cfg.kernel == Kernel::Periodic && n < 3 {
            return Err(Error::InvalidMesh("the periodic kernel needs at least 3 cells".into()));
        }
        let h = space.mesh().h();
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidMesh(format!("degenerate cell width {h}")));
        }
        let k = space.degree();
        let np = k + 1;
        let tab = |r: &QuadRule| {
            let mut v = vec![0.0; r.len() * np];
            for (q, &x) in r.nodes().iter().enumerate() {
                basis_values(k, x, &mut v[q * np..(q + 1) * np]);
            }
            v
        };
        let asm = Assembler {
            np,
            k,
            h,
            period: space.mesh().length(),
            outer: &outer,
            inner: &inner,
            phi_outer: tab(&outer),
            phi_inner: tab(&inner),
        };
        let nb = 2 * n - 1;
        let bs = np * np;
        let mut blocks = vec![0.0; nb * bs];
        for (b, chunk) in blocks.chunks_mut(bs).enumerate() {
            asm.block(b as isize - (n as isize - 1), cfg, n, chunk);
        }
        if cfg.skew {
            let raw = blocks.clone();
            for b in 0..nb {
                let mirror = nb - 1 - b;
                for l in 0..np {
                    for m in 0..np {
                        blocks[b * bs + l * np + m] =
                            0.5 * (raw[b * bs + l * np + m] - raw[mirror * bs + m * np + l]);
                    }
                }
            }
        }
        Ok(HilbertOperator { space: space.clone(), config: *cfg, blocks, dense: OnceLock::new(), fft: OnceLock::new() })
    }

    pub fn space(&self) -> &Arc<DgSpace> {
        &self.space
    }

    pub fn config(&self) -> &HilbertConfig {
        &self.config
    }

    pub fn is_skew(&self) -> bool {
        self.config.skew
    }

    /// The (k+1)×(k+1) block coupling cell i (rows) to cell j (columns).
    pub fn block(&self, i: usize, j: usize) -> &[f64] {
        let n = self.space.n_cells();
        let bs = self.space.n_local().pow(2);
        let b = i + n - 1 - j;
        &self.blocks[b * bs..(b + 1) * bs]
    }

    /// Dense K, built on first use.
    pub fn matrix(&self) -> &DMatrix<f64> {
        self.dense.get_or_init(|| {
            let n = self.space.n_cells();
            let np = self.space.n_local();
            let dim = n * np;
            let mut k = DMatrix::zeros(dim, dim);
            for j in 0..n {
                for i in 0..n {
                    let blk = self.block(i, j);
                    for m in 0..np {
                        for l in 0..np {
                            k[(i * np + l, j * np + m)] = blk[l * np + m];
                        }
                    }
                }
            }
            k
        })
    }

    /// y = K x (moments of Hq for coefficients x).
    pub fn apply_moments(&self, x: &[f64], y: &mut [f64]) {
        self.apply_impl(x, y, false)
    }

    /// y = Kᵀ x
    pub fn apply_transpose_moments(&self, x: &[f64], y: &mut [f64]) {
        self.apply_impl(x, y, true)
    }

    fn apply_impl(&self, x: &[f64], y: &mut [f64], transpose: bool) {
        let n = self.space.n_cells();
        let np = self.space.n_local();
        let bs = np * np;
        assert_eq!(x.len(), n * np);
        assert_eq!(y.len(), n * np);
        if n >= FFT_MIN_CELLS {
            let conv = self.fft.get_or_init(|| FftConvolver::new(&self.blocks, n, np));
            conv.apply(x, y, np, transpose);
            return;
        }
        let mut acc = vec![0.0; np];
        for i in 0..n {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for j in 0..n {
                let xj = &x[j * np..(j + 1) * np];
                if transpose {
                    // (Kᵀ)_{ij} = (K_{ji})ᵀ
                    let b = j + n - 1 - i;
                    let blk = &self.blocks[b * bs..(b + 1) * bs];
                    for m in 0..np {
                        for l in 0..np {
                            acc[l] += blk[m * np + l] * xj[m];
                        }
                    }
                } else {
                    let b = i + n - 1 - j;
                    let blk = &self.blocks[b * bs..(b + 1) * bs];
                    for l in 0..np {
                        let row = &blk[l * np..(l + 1) * np];
                        acc[l] += row.iter().zip(xj).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
            y[i * np..(i + 1) * np].copy_from_slice(&acc);
        }
    }

    /// p = M⁻¹ K q.
    pub fn apply(&self, q: &Field) -> Result<Field> {
        if !self.space.same_as(q.space()) {
            return Err(Error::SpaceMismatch);
        }
        let mut y = vec![0.0; self.space.dim()];
        self.apply_moments(q.coeffs().as_slice(), &mut y);
        let minv = self.space.mass_inverse_diagonal();
        let p = DVector::from_iterator(y.len(), y.iter().zip(&minv).map(|(a, b)| a * b));
        Field::from_coeffs(self.space.clone(), p)
    }

    /// Raw dump: little-endian u64 N, u64 k, u64 flags (bit 0 skew, bit 1
    /// periodic kernel), then K row-major as f64.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let flags = u64::from(self.config.skew) | (u64::from(self.config.kernel == Kernel::Periodic) << 1);
        let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        put(&(self.space.n_cells() as u64).to_le_bytes())?;
        put(&(self.space.degree() as u64).to_le_bytes())?;
        put(&flags.to_le_bytes())?;
        let k = self.matrix();
        for r in 0..k.nrows() {
            for c in 0..k.ncols() {
                put(&k[(r, c)].to_le_bytes())?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
