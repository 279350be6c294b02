//! Complex dense linear algebra used throughout the crate.
//!
//! Storage and elementary operations (product, adjoint, Frobenius norm) come
//! from `nalgebra`; this module adds the pieces the rest of the crate needs on
//! top of it: a minimum-norm least-squares solver with a rank-revealing
//! cutoff, and the column-stacking / real-imaginary flattening conventions
//! shared by the estimators and the neural front end.

use crate::error::{Error, Result};
use nalgebra::{Complex, DMatrix, DVector};

/// Complex scalar, matrix, and vector aliases.
pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Minimum-norm least-squares solution of `A x = b`.
///
/// Among all `x` minimizing `||A x - b||_2`, returns the one of least
/// `||x||_2`, computed from the SVD with singular values at or below
/// `max(m, n) * eps * sigma_max` treated as zero. Handles square, tall, wide,
/// and rank-deficient systems uniformly.
pub fn solve_min_norm_ls(a: &CMat, b: &CVec) -> Result<CVec> {
    if a.nrows() != b.len() {
        return Err(Error::contract(format!(
            "solve_min_norm_ls: A is {}x{} but b has {} entries",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::contract(
            "solve_min_norm_ls: empty system".to_string(),
        ));
    }
    let svd = a.clone().try_svd(true, true, f64::EPSILON, 10_000).ok_or_else(|| {
        Error::Numerical(format!("SVD did not converge on a {}x{} system", a.nrows(), a.ncols()))
    })?;
    let sigma_max = svd.singular_values.max();
    let cutoff = a.nrows().max(a.ncols()) as f64 * f64::EPSILON * sigma_max;
    svd.solve(b, cutoff)
        .map(|x| x.column(0).into_owned())
        .map_err(|e| Error::Numerical(e.to_string()))
}

/// Column-major stacking of a complex matrix into a vector.
pub fn vec_col_major(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Flattens a complex matrix as `[Re(vec(M)); Im(vec(M))]` with column-major
/// `vec`, the layout the neural front end consumes.
pub fn flatten_ri(m: &CMat) -> RVec {
    let n = m.len();
    let mut out = RVec::zeros(2 * n);
    for (k, z) in m.as_slice().iter().enumerate() {
        out[k] = z.re;
        out[n + k] = z.im;
    }
    out
}
