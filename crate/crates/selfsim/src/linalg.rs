//! Small shared numeric helpers: nearest-integer distance, induced matrix
//! norms, rank and orthogonality checks.

use nalgebra::{DMatrix, DVector};

/// Distance from `x` to the nearest integer (the `R/Z` norm). Always in `[0, 1/2]`.
pub fn dist_to_int(x: f64) -> f64 {
    (x - x.round_ties_even()).abs()
}

/// Nearest integer to `x`; exact half-integers round to even.
pub fn nearest_int(x: f64) -> i64 {
    x.round_ties_even() as i64
}

/// Componentwise nearest integers of a vector.
pub fn nearest_int_vec(v: &DVector<f64>) -> DVector<i64> {
    DVector::from_iterator(v.len(), v.iter().map(|&x| nearest_int(x)))
}

/// Max-abs entry of a vector (`l-infinity` norm).
pub fn vec_inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Induced `l-infinity` operator norm: max absolute row sum.
pub fn mat_inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
}

/// Max-abs residual of `m^t m - I`. Zero for an exactly orthogonal matrix.
pub fn orthogonality_residual(m: &DMatrix<f64>) -> f64 {
    let d = m.nrows();
    let prod = m.transpose() * m;
    let mut res = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 } else { 0.0 };
            res = res.max((prod[(i, j)] - target).abs());
        }
    }
    res
}

/// Numerical rank via singular values, relative to the largest one.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > rel_tol * smax)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dist_to_int_basic() {
        assert_eq!(dist_to_int(3.0), 0.0);
        assert_eq!(dist_to_int(2.75), 0.25);
        assert!((dist_to_int(-1.9) - 0.1).abs() < 1e-15);
        // exact tie: distance is 1/2 regardless of rounding direction
        assert_eq!(dist_to_int(0.5), 0.5);
        assert_eq!(dist_to_int(1.5), 0.5);
    }

    #[test]
    fn nearest_int_ties_to_even() {
        assert_eq!(nearest_int(0.5), 0);
        assert_eq!(nearest_int(1.5), 2);
        assert_eq!(nearest_int(2.5), 2);
        assert_eq!(nearest_int(-0.5), 0);
        assert_eq!(nearest_int(-1.5), -2);
    }

    #[test]
    fn inf_norms() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.0, 0.5]);
        assert_eq!(mat_inf_norm(&m), 3.5);
        let v = DVector::from_row_slice(&[1.0, -4.0, 2.0]);
        assert_eq!(vec_inf_norm(&v), 4.0);
    }

    #[test]
    fn rank_and_orthogonality() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(rank(&id, 1e-12), 3);
        assert!(orthogonality_residual(&id) == 0.0);
        let deficient = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(rank(&deficient, 1e-12), 1);
        let rot = DMatrix::from_row_slice(
            2,
            2,
            &[0.6, -0.8, 0.8, 0.6],
        );
        assert!(orthogonality_residual(&rot) < 1e-15);
    }
}
