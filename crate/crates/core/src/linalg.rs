//! Small complex least-squares helpers.

use nalgebra::{DMatrix, DVector};

use crate::C64;

/// `Σ conj(a_i) b_i`.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Least-squares fit of `y` on the given columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LsFit {
    pub gains: Vec<C64>,
    pub residual_sq: f64,
    /// The normal equations needed a ridge term.
    pub regularized: bool,
}

/// Solves `min_g ‖y − A g‖²` with `A = [cols…]` through the normal equations.
/// Falls back to a small ridge when the Gram matrix is not positive definite.
pub fn least_squares(cols: &[Vec<C64>], y: &[C64]) -> LsFit {
    let n = cols.len();
    if n == 0 {
        return LsFit { gains: vec![], residual_sq: norm_sqr(y), regularized: false };
    }
    let gram = DMatrix::from_fn(n, n, |i, j| dot(&cols[i], &cols[j]));
    let rhs = DVector::from_iterator(n, cols.iter().map(|c| dot(c, y)));
    let trace: f64 = (0..n).map(|i| gram[(i, i)].re).sum();
    let well_posed = gram.clone().cholesky().filter(|ch| {
        let d = ch.l_dirty().diagonal();
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.re), hi.max(v.re)));
        lo > 1e-7 * hi
    });
    let (g, regularized) = match well_posed {
        Some(ch) => (ch.solve(&rhs), false),
        None => {
            let ridge = DMatrix::<C64>::identity(n, n) * C64::new(1e-10 * trace.max(f64::MIN_POSITIVE), 0.0);
            match (gram + ridge).cholesky() {
                Some(ch) => (ch.solve(&rhs), true),
                None => (DVector::zeros(n), true),
            }
        }
    };
    let gains: Vec<C64> = g.iter().copied().collect();
    LsFit { residual_sq: residual_sq(cols, &gains, y), gains, regularized }
}

/// `‖y − Σ g_i a_i‖²` evaluated directly.
pub fn residual_sq(cols: &[Vec<C64>], gains: &[C64], y: &[C64]) -> f64 {
    y.iter()
        .enumerate()
        .map(|(i, v)| {
            let fit: C64 = cols.iter().zip(gains).map(|(c, g)| g * c[i]).sum();
            (v - fit).norm_sqr()
        })
        .sum()
}

/// Removes the component of `y` along `u`.
pub fn project_out(u: &[C64], y: &[C64]) -> Vec<C64> {
    let uu = norm_sqr(u);
    if uu == 0.0 {
        return y.to_vec();
    }
    let c = dot(u, y) / uu;
    y.iter().zip(u).map(|(a, b)| a - c * b).collect()
}
