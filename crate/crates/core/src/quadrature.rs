//! Gauss–Legendre rules on [-1, 1].

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};

pub const MAX_POINTS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// ∫_{-1}^{1} f
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }

    /// ∫_a^b f with the rule mapped affinely onto [a, b].
    pub fn integrate_on(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self.iter().map(|(x, w)| w * f(mid + half * x)).sum::<f64>()
    }
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
pub fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    let (mut d0, mut d1) = (0.0, 1.0);
    for j in 1..n {
        let jf = j as f64;
        let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
        // P'_{j+1} = P'_{j-1} + (2j+1) P_j, fine at the endpoints too
        let d2 = d0 + (2.0 * jf + 1.0) * p1;
        p0 = p1;
        p1 = p2;
        d0 = d1;
        d1 = d2;
    }
    (p1, d1)
}

fn compute(n: usize) -> QuadRule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // roots come out descending; store the mirrored pair
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        if d.is_finite() && d != 0.0 {
            dp = d;
        }
        if n % 2 == 1 && i == half - 1 {
            x = 0.0;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    QuadRule { nodes, weights }
}

static CACHE: [OnceLock<Arc<QuadRule>>; MAX_POINTS] = [const { OnceLock::new() }; MAX_POINTS];

/// The n-point Gauss–Legendre rule, 1 ≤ n ≤ 64. Rules are built once and shared.
pub fn gauss_legendre(n: usize) -> Result<Arc<QuadRule>> {
    if n == 0 || n > MAX_POINTS {
        return Err(Error::InvalidQuadrature(format!(
            "{n} points requested, supported range is 1..={MAX_POINTS}"
        )));
    }
    Ok(CACHE[n - 1].get_or_init(|| Arc::new(compute(n))).clone())
}
