//! Members of V^k as modal coefficient vectors.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::mesh::{basis_values, DgSpace, Side};
use crate::quadrature::gauss_legendre;

/// Coefficients are stored cell-major: entry i·(k+1)+m is mode m of cell i.
#[derive(Debug, Clone)]
pub struct Field {
    space: Arc<DgSpace>,
    coeffs: DVector<f64>,
}

impl Field {
    pub fn zeros(space: Arc<DgSpace>) -> Self {
        let n = space.dim();
        Field { space, coeffs: DVector::zeros(n) }
    }

    pub fn from_coeffs(space: Arc<DgSpace>, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: coeffs.len() });
        }
        Ok(Field { space, coeffs })
    }

    /// The constant function c.
    pub fn constant(space: Arc<DgSpace>, c: f64) -> Self {
        let mut f = Field::zeros(space);
        let s = 2f64.sqrt() * c;
        for i in 0..f.space.n_cells() {
            let j = f.space.index(i, 0);
            f.coeffs[j] = s;
        }
        f
    }

    pub fn space(&self) -> &Arc<DgSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut DVector<f64> {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> DVector<f64> {
        self.coeffs
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        let np = self.space.n_local();
        &self.coeffs.as_slice()[i * np..(i + 1) * np]
    }

    pub fn check_space(&self, other: &Field) -> Result<()> {
        if self.space.same_as(&other.space) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    /// Value at reference point ξ of cell i.
    pub fn eval_in_cell(&self, i: usize, xi: f64) -> f64 {
        let k = self.space.degree();
        let mut phi = [0.0; 16];
        let mut heap;
        let phi: &mut [f64] = if k < 16 {
            &mut phi[..=k]
        } else {
            heap = vec![0.0; k + 1];
            &mut heap
        };
        basis_values(k, xi, phi);
        self.cell(i).iter().zip(phi.iter()).map(|(c, p)| c * p).sum()
    }

    /// Point value; at an interior edge `side` selects u⁻ or u⁺.
    pub fn eval(&self, x: f64, side: Side) -> Result<f64> {
        let (i, xi) = self.space.mesh().locate(x, side)?;
        Ok(self.eval_in_cell(i, xi))
    }

    /// Traces (u⁻, u⁺) at edge e ∈ 1..N (interior edges only).
    pub fn traces(&self, edge: usize) -> (f64, f64) {
        (self.eval_in_cell(edge - 1, 1.0), self.eval_in_cell(edge, -1.0))
    }

    /// ⟦u⟧ = u⁺ − u⁻ at interior edge e.
    pub fn jump(&self, edge: usize) -> f64 {
        let (m, p) = self.traces(edge);
        p - m
    }

    /// L²(Ω) inner product, exact from the coefficients.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        self.check_space(other)?;
        let np = self.space.n_local();
        let mut s = 0.0;
        for (i, &h) in self.space.mesh().widths().iter().enumerate() {
            let a = &self.coeffs.as_slice()[i * np..(i + 1) * np];
            let b = &other.coeffs.as_slice()[i * np..(i + 1) * np];
            s += 0.5 * h * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        }
        Ok(s)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).expect("same space").sqrt()
    }

    /// ∫_Ω u.
    pub fn integral(&self) -> f64 {
        let s = 2f64.sqrt();
        (0..self.space.n_cells())
            .map(|i| 0.5 * self.space.mesh().widths()[i] * s * self.cell(i)[0])
            .sum()
    }

    /// L² norm evaluated by quadrature rather than from the coefficients.
    pub fn quadrature_norm(&self, points: usize) -> Result<f64> {
        let rule = gauss_legendre(points)?;
        let mut s = 0.0;
        for i in 0..self.space.n_cells() {
            let h = self.space.mesh().widths()[i];
            s += 0.5 * h * rule.integrate(|xi| self.eval_in_cell(i, xi).powi(2));
        }
        Ok(s.sqrt())
    }

    /// α·self + β·other
    pub fn lincomb(&self, alpha: f64, other: &Field, beta: f64) -> Result<Field> {
        self.check_space(other)?;
        Ok(Field {
            space: self.space.clone(),
            coeffs: &self.coeffs * alpha + &other.coeffs * beta,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}
