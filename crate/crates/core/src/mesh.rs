//! Uniform 1D mesh, the orthonormal Legendre basis and the broken space V^k.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, legendre_and_derivative, QuadRule};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    a: f64,
    b: f64,
    edges: Vec<f64>,
    widths: Vec<f64>,
}

impl Mesh {
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidMesh(format!("need a < b, got [{a}, {b}]")));
        }
        if n == 0 {
            return Err(Error::InvalidMesh("cell count must be positive".into()));
        }
        let h = (b - a) / n as f64;
        let mut edges: Vec<f64> = (0..=n).map(|i| a + i as f64 * h).collect();
        edges[n] = b;
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidMesh(format!("cells of width {h} are degenerate")));
        }
        Ok(Mesh { a, b, edges, widths: vec![h; n] })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n_cells(&self) -> usize {
        self.widths.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// Uniform width (b−a)/N.
    pub fn h(&self) -> f64 {
        self.widths[0]
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    /// Physical coordinate of reference point ξ in cell i.
    pub fn to_physical(&self, i: usize, xi: f64) -> f64 {
        self.center(i) + 0.5 * self.widths[i] * xi
    }

    /// Cell containing x and the reference coordinate. At an interior edge the
    /// `side` picks the cell on the left (minus) or on the right (plus).
    pub fn locate(&self, x: f64, side: Side) -> Result<(usize, f64)> {
        if !(x >= self.a && x <= self.b) {
            return Err(Error::OutsideDomain { x, lo: self.a, hi: self.b });
        }
        let n = self.n_cells();
        let h = self.h();
        let mut i = (((x - self.a) / h).floor() as usize).min(n - 1);
        // floating point: fix up against the stored edges
        while i > 0 && x < self.edges[i] {
            i -= 1;
        }
        while i + 1 < n && x >= self.edges[i + 1] {
            i += 1;
        }
        if side == Side::Minus && i > 0 && x == self.edges[i] {
            i -= 1;
        }
        let xi = ((x - self.center(i)) * 2.0 / self.widths[i]).clamp(-1.0, 1.0);
        Ok((i, xi))
    }
}

/// One-sided limit selector at cell interfaces: `Minus` is v⁻ (from the left
/// cell), `Plus` is v⁺ (from the right cell).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Minus,
    Plus,
}

/// √((2m+1)/2), so that φ_m = norm(m)·P_m is orthonormal on [-1, 1].
#[inline]
pub fn legendre_norm(m: usize) -> f64 {
    ((2 * m + 1) as f64 / 2.0).sqrt()
}

/// φ_0..φ_k at ξ.
pub fn basis_values(k: usize, xi: f64, out: &mut [f64]) {
    let (mut p0, mut p1) = (1.0, xi);
    for (m, o) in out.iter_mut().enumerate().take(k + 1) {
        let p = match m {
            0 => 1.0,
            1 => xi,
            _ => {
                let j = (m - 1) as f64;
                let p2 = ((2.0 * j + 1.0) * xi * p1 - j * p0) / (j + 1.0);
                p0 = p1;
                p1 = p2;
                p2
            }
        };
        *o = legendre_norm(m) * p;
    }
}

/// dφ_m/dξ for m = 0..k.
pub fn basis_derivatives(k: usize, xi: f64, out: &mut [f64]) {
    for (m, o) in out.iter_mut().enumerate().take(k + 1) {
        *o = legendre_norm(m) * legendre_and_derivative(m, xi).1;
    }
}

/// Basis values (and optionally derivatives) at a reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisValues {
    pub values: Vec<f64>,
    pub derivatives: Option<Vec<f64>>,
}

/// Tabulated basis on a quadrature rule and at the two cell ends.
#[derive(Debug, Clone)]
pub struct BasisTable {
    /// values[q * (k+1) + m] = φ_m(ξ_q)
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
    /// φ_m(−1)
    pub left: Vec<f64>,
    /// φ_m(+1)
    pub right: Vec<f64>,
}

impl BasisTable {
    pub fn new(k: usize, rule: &QuadRule) -> Self {
        let np = k + 1;
        let mut values = vec![0.0; rule.len() * np];
        let mut derivatives = vec![0.0; rule.len() * np];
        for (q, &x) in rule.nodes().iter().enumerate() {
            basis_values(k, x, &mut values[q * np..(q + 1) * np]);
            basis_derivatives(k, x, &mut derivatives[q * np..(q + 1) * np]);
        }
        let mut left = vec![0.0; np];
        let mut right = vec![0.0; np];
        basis_values(k, -1.0, &mut left);
        basis_values(k, 1.0, &mut right);
        BasisTable { values, derivatives, left, right }
    }
}

/// The broken polynomial space V^k on a mesh.
#[derive(Debug, Clone)]
pub struct DgSpace {
    mesh: Mesh,
    degree: usize,
    rule: Arc<QuadRule>,
    table: BasisTable,
}

impl DgSpace {
    /// Volume quadrature defaults to k+2 points.
    pub fn new(mesh: Mesh, degree: usize) -> Result<Self> {
        Self::with_quad_order(mesh, degree, degree + 2)
    }

    pub fn with_quad_order(mesh: Mesh, degree: usize, quad_order: usize) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidDegree { degree, reason: "degree must be at least 1" });
        }
        if quad_order < degree + 1 {
            return Err(Error::InvalidQuadrature(format!(
                "{quad_order} volume points cannot integrate degree-{} products exactly",
                2 * degree
            )));
        }
        let rule = gauss_legendre(quad_order)?;
        let table = BasisTable::new(degree, &rule);
        Ok(DgSpace { mesh, degree, rule, table })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Modes per cell, k+1.
    pub fn n_local(&self) -> usize {
        self.degree + 1
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_cells()
    }

    /// Total number of coefficients N(k+1).
    pub fn dim(&self) -> usize {
        self.n_cells() * self.n_local()
    }

    pub fn quad_order(&self) -> usize {
        self.rule.len()
    }

    pub fn rule(&self) -> &QuadRule {
        &self.rule
    }

    pub fn table(&self) -> &BasisTable {
        &self.table
    }

    /// Global index of mode m in cell i.
    #[inline]
    pub fn index(&self, i: usize, m: usize) -> usize {
        i * (self.degree + 1) + m
    }

    /// Diagonal of the mass matrix, h_i/2 per coefficient.
    pub fn mass_diagonal(&self) -> Vec<f64> {
        let np = self.n_local();
        self.mesh.widths().iter().flat_map(|&h| std::iter::repeat_n(0.5 * h, np)).collect()
    }

    pub fn mass_inverse_diagonal(&self) -> Vec<f64> {
        self.mass_diagonal().into_iter().map(|m| 1.0 / m).collect()
    }

    pub fn same_as(&self, other: &DgSpace) -> bool {
        std::ptr::eq(self, other)
            || (self.degree == other.degree
                && self.rule.len() == other.rule.len()
                && self.mesh == other.mesh)
    }

    pub fn eval_basis(&self, xi: f64, max_deriv: usize) -> Result<BasisValues> {
        if !(-1.0..=1.0).contains(&xi) {
            return Err(Error::OutsideDomain { x: xi, lo: -1.0, hi: 1.0 });
        }
        if max_deriv > 1 {
            return Err(Error::Config(format!("derivative order {max_deriv} not available")));
        }
        let mut values = vec![0.0; self.n_local()];
        basis_values(self.degree, xi, &mut values);
        let derivatives = (max_deriv == 1).then(|| {
            let mut d = vec![0.0; self.n_local()];
            basis_derivatives(self.degree, xi, &mut d);
            d
        });
        Ok(BasisValues { values, derivatives })
    }
}
