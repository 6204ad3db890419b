//! Exact solitons, L² errors, conserved quantities and observed rates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::quadrature::gauss_legendre;

/// Periodic travelling wave of u_t + (u²/2)_x − H u_xx = 0 with speed c and
/// spatial period 2L:
///
///   U = 2cδ² / (1 − √(1−δ²) cos(cδ(x − ct))),  δ = π/(cL).
///
/// The amplitude carries δ², which is what makes U an exact solution for the
/// flux u²/2 (the form with 2cδ solves u_t + δ u u_x − H u_xx = 0 instead).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSoliton {
    c: f64,
    half_period: f64,
    delta: f64,
}

impl PeriodicSoliton {
    pub fn new(c: f64, half_period: f64) -> Result<Self> {
        if !(c > 0.0 && half_period > 0.0) {
            return Err(Error::InvalidSoliton(format!("need c > 0 and L > 0, got c={c}, L={half_period}")));
        }
        let delta = PI / (c * half_period);
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidSoliton(format!("δ = π/(cL) = {delta} must lie in (0, 1)")));
        }
        Ok(PeriodicSoliton { c, half_period, delta })
    }

    pub fn speed(&self) -> f64 {
        self.c
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn period(&self) -> f64 {
        2.0 * self.half_period
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let (c, d) = (self.c, self.delta);
        2.0 * c * d * d / (1.0 - (1.0 - d * d).sqrt() * (c * d * (x - c * t)).cos())
    }
}

/// Interacting two-soliton solution obtained by inverse scattering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSoliton {
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
}

impl TwoSoliton {
    pub fn new(c1: f64, c2: f64, d1: f64, d2: f64) -> Result<Self> {
        if !(c1 > 0.0 && c2 > 0.0) {
            return Err(Error::InvalidSoliton(format!("speeds must be positive, got {c1}, {c2}")));
        }
        if c1 == c2 {
            return Err(Error::InvalidSoliton("the two speeds must differ".into()));
        }
        Ok(TwoSoliton { c1, c2, d1, d2 })
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let (c1, c2) = (self.c1, self.c2);
        let l1 = x - c1 * t - self.d1;
        let l2 = x - c2 * t - self.d2;
        let dc2 = (c1 - c2) * (c1 - c2);
        let num = 4.0 * c1 * c2 * (c1 * l1 * l1 + c2 * l2 * l2 + (c1 + c2).powi(3) / (c1 * c2 * dc2));
        let a = c1 * c2 * l1 * l2 - (c1 + c2).powi(2) / dc2;
        let b = c1 * l1 + c2 * l2;
        num / (a * a + b * b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExactSolution {
    Periodic { c: f64, half_period: f64 },
    TwoSoliton { c1: f64, c2: f64, d1: f64, d2: f64 },
}

impl ExactSolution {
    /// Validated evaluator.
    pub fn build(&self) -> Result<Box<dyn Fn(f64, f64) -> f64 + Send + Sync>> {
        Ok(match *self {
            ExactSolution::Periodic { c, half_period } => {
                let s = PeriodicSoliton::new(c, half_period)?;
                Box::new(move |x, t| s.eval(x, t))
            }
            ExactSolution::TwoSoliton { c1, c2, d1, d2 } => {
                let s = TwoSoliton::new(c1, c2, d1, d2)?;
                Box::new(move |x, t| s.eval(x, t))
            }
        })
    }
}

/// ‖u_h − U(·, t)‖ over Ω with k+3 Gauss points per cell.
pub fn l2_error(u: &Field, exact: impl Fn(f64, f64) -> f64, t: f64) -> f64 {
    let space = u.space();
    let rule = gauss_legendre(space.degree() + 3).expect("degree is small");
    let mesh = space.mesh();
    let mut s = 0.0;
    for i in 0..space.n_cells() {
        let h = mesh.widths()[i];
        s += 0.5
            * h
            * rule.integrate(|xi| {
                let d = u.eval_in_cell(i, xi) - exact(mesh.to_physical(i, xi), t);
                d * d
            });
    }
    s.sqrt()
}

/// Normalized mass and L² norm; `None` flags a vanishing reference quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conserved {
    pub c1: Option<f64>,
    pub c2: Option<f64>,
}

pub fn conserved_quantities(u: &Field, u0: &Field) -> Result<Conserved> {
    u.check_space(u0)?;
    let m0 = u0.integral();
    let n0 = u0.norm();
    Ok(Conserved {
        c1: (m0 != 0.0).then(|| u.integral() / m0),
        c2: (n0 != 0.0).then(|| u.norm() / n0),
    })
}

/// Pairwise observed orders ln(E₁/E₂)/ln(N₂/N₁).
pub fn convergence_rate(errors: &[f64], ns: &[usize]) -> Result<Vec<f64>> {
    if errors.len() != ns.len() || errors.len() < 2 {
        return Err(Error::InvalidRateInput(format!(
            "need two or more matching entries, got {} errors and {} sizes",
            errors.len(),
            ns.len()
        )));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidRateInput(format!("error {e} is not positive")));
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidRateInput("sizes must increase".into()));
    }
    Ok(errors
        .windows(2)
        .zip(ns.windows(2))
        .map(|(e, n)| (e[0] / e[1]).ln() / (n[1] as f64 / n[0] as f64).ln())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{DgSpace, Mesh};
    use crate::projection::l2_project;
    use std::sync::Arc;

    #[test]
    fn periodic_soliton_shape() {
        let s = PeriodicSoliton::new(0.25, 15.0).unwrap();
        let d = PI / 3.75;
        let want = 2.0 * 0.25 * d * d / (1.0 - (1.0 - d * d).sqrt());
        assert!((s.eval(0.0, 0.0) - want).abs() < 1e-14);
        assert!((s.eval(0.0, 0.0) - 0.77302).abs() < 1e-5);
        for x in [-7.0, 0.3, 11.0] {
            assert!((s.eval(x + 30.0, 2.0) - s.eval(x, 2.0)).abs() < 1e-13);
            assert!((s.eval(x + 0.25 * 3.0, 3.0) - s.eval(x, 0.0)).abs() < 1e-13);
        }
        assert!(PeriodicSoliton::new(0.25, 12.0).is_err());
        assert!(PeriodicSoliton::new(-0.25, 15.0).is_err());
    }

    #[test]
    fn periodic_soliton_mass_constant() {
        let s = PeriodicSoliton::new(0.25, 15.0).unwrap();
        let rule = gauss_legendre(40).unwrap();
        let mass = |t: f64| -> f64 {
            (0..30).map(|j| rule.integrate_on(-15.0 + j as f64, -14.0 + j as f64, |x| s.eval(x, t))).sum()
        };
        let m0 = mass(0.0);
        for t in [1.3, 7.0, 20.0] {
            assert!((mass(t) - m0).abs() < 1e-10);
        }
        // mean over a period equals 2cδ
        assert!((m0 / 30.0 - 2.0 * 0.25 * s.delta()).abs() < 1e-12);
    }

    #[test]
    fn two_soliton_properties() {
        let s = TwoSoliton::new(0.3, 0.6, -30.0, -55.0).unwrap();
        let swapped = TwoSoliton::new(0.6, 0.3, -55.0, -30.0).unwrap();
        for x in [-80.0, -55.0, -30.0, 0.0, 40.0] {
            for t in [0.0, 50.0, 180.0] {
                assert!((s.eval(x, t) - swapped.eval(x, t)).abs() < 1e-13);
            }
        }
        for x in [-300.0, 200.0, 260.0] {
            assert!(s.eval(x, 0.0).abs() <= 1e-3);
        }
        assert!(TwoSoliton::new(0.3, 0.3, 0.0, 1.0).is_err());
        // the larger soliton stays near its characteristic for large t
        let t = 180.0;
        let peak = (0..4000)
            .map(|j| 40.0 + j as f64 * 0.01)
            .max_by(|a, b| s.eval(*a, t).total_cmp(&s.eval(*b, t)))
            .unwrap();
        assert!((peak - (0.6 * t - 55.0)).abs() < 3.0, "{peak}");
    }

    #[test]
    fn rates() {
        let r = convergence_rate(&[1e-2, 2.5e-3], &[40, 80]).unwrap();
        assert!((r[0] - 2.0).abs() < 1e-14);
        let r = convergence_rate(&[8.69e-3, 4.20e-4], &[40, 80]).unwrap();
        assert!((r[0] - 4.37).abs() < 5e-3);
        assert_eq!(convergence_rate(&[3.0, 3.0], &[1, 2]).unwrap(), vec![0.0]);
        assert!(convergence_rate(&[0.0, 1.0], &[1, 2]).is_err());
        assert!(convergence_rate(&[1.0, 1.0], &[2, 2]).is_err());
        assert!(convergence_rate(&[1.0], &[2]).is_err());
    }

    #[test]
    fn errors_and_conserved() {
        let sp = Arc::new(DgSpace::new(Mesh::uniform(-1.0, 1.0, 6).unwrap(), 1).unwrap());
        let u = l2_project(|x| x, &sp);
        assert!(l2_error(&u, |x, _| x, 0.0) < 1e-12);
        assert!((l2_error(&u, |_, _| 0.0, 0.0) - u.norm()).abs() < 1e-14);
        let u0 = l2_project(|x| 1.0 + x * x, &sp);
        let c = conserved_quantities(&u0, &u0).unwrap();
        assert_eq!((c.c1, c.c2), (Some(1.0), Some(1.0)));
        let two = u0.lincomb(2.0, &u0, 0.0).unwrap();
        let c = conserved_quantities(&two, &u0).unwrap();
        assert!((c.c1.unwrap() - 2.0).abs() < 1e-14 && (c.c2.unwrap() - 2.0).abs() < 1e-14);
        let zero = crate::field::Field::zeros(sp.clone());
        let c = conserved_quantities(&u0, &zero).unwrap();
        assert_eq!((c.c1, c.c2), (None, None));
    }
}
