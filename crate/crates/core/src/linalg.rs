//! Symmetric positive-definite solves shared by the batch predictors and the
//! hindsight comparator.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

const JITTER_SCALE: f64 = 1e-10;

/// Cholesky factorization that retries once with `1e-10 * trace / n` added
/// to the diagonal before giving up.
pub fn spd_factor(a: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok(chol);
    }
    let n = a.nrows().max(1);
    let jitter = JITTER_SCALE * a.trace().abs() / n as f64;
    let mut jittered = a.clone();
    for i in 0..a.nrows() {
        jittered[(i, i)] += jitter;
    }
    Cholesky::new(jittered).ok_or_else(|| Error::IllConditioned {
        context: context.to_string(),
        condition_estimate: condition_estimate(a),
    })
}

pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    Ok(spd_factor(a, context)?.solve(b))
}

pub fn spd_inverse(a: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    Ok(spd_factor(a, context)?.inverse())
}

/// Ratio of extreme absolute eigenvalues; infinite when the smallest is 0.
pub fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let max = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Average a square matrix with its transpose in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}
