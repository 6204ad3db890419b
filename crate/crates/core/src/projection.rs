//! L² projection P and the right-endpoint (Gauss–Radau type) projection P⁻.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::mesh::DgSpace;

/// Cellwise L² projection; moments are computed with the space's volume rule.
pub fn l2_project(g: impl Fn(f64) -> f64, space: &Arc<DgSpace>) -> Field {
    let np = space.n_local();
    let rule = space.rule();
    let tab = space.table();
    let mesh = space.mesh();
    let mut c = DVector::zeros(space.dim());
    for i in 0..space.n_cells() {
        for (q, (xi, w)) in rule.iter().enumerate() {
            let gv = w * g(mesh.to_physical(i, xi));
            for m in 0..np {
                c[i * np + m] += gv * tab.values[q * np + m];
            }
        }
    }
    Field::from_coeffs(space.clone(), c).expect("dimension matches by construction")
}

/// P⁻: k moment conditions against P^{k−1} plus exact agreement with g at
/// the right end of each cell.
pub fn radau_project(g: impl Fn(f64) -> f64, space: &Arc<DgSpace>) -> Result<Field> {
    let k = space.degree();
    if k == 0 {
        return Err(Error::InvalidDegree { degree: 0, reason: "P⁻ needs k ≥ 1" });
    }
    let np = k + 1;
    let rule = space.rule();
    let tab = space.table();
    let mesh = space.mesh();

    // rows 0..k: ∫ P⁻g φ_m dξ = ∫ g φ_m dξ; row k: Σ c_m φ_m(1) = g(x_{i+½})
    let mut sys = DMatrix::zeros(np, np);
    for m in 0..k {
        for n in 0..np {
            sys[(m, n)] = rule
                .iter()
                .enumerate()
                .map(|(q, (_, w))| w * tab.values[q * np + m] * tab.values[q * np + n])
                .sum();
        }
    }
    for n in 0..np {
        sys[(k, n)] = tab.right[n];
    }
    let lu = sys.lu();

    let mut c = DVector::zeros(space.dim());
    let mut rhs = DVector::zeros(np);
    for i in 0..space.n_cells() {
        rhs.fill(0.0);
        for (q, (xi, w)) in rule.iter().enumerate() {
            let gv = w * g(mesh.to_physical(i, xi));
            for m in 0..k {
                rhs[m] += gv * tab.values[q * np + m];
            }
        }
        rhs[k] = g(mesh.edges()[i + 1]);
        let sol = lu.solve(&rhs).ok_or(Error::SingularJacobian)?;
        c.rows_mut(i * np, np).copy_from(&sol);
    }
    Field::from_coeffs(space.clone(), c)
}
