//! Thin wrappers over the LAPACK-backed routines used throughout the crate.
//!
//! Ordering is pinned here once: singular values descending, eigenvalues
//! descending, vectors aligned with their values. LAPACK already returns
//! deterministic output for fixed input; the wrappers only apply
//! deterministic permutations on top.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use ndarray_linalg::{Eigh, JobSvd, SVDDC, UPLO};

use crate::{Error, Result};

/// Full (thin) singular value decomposition with vectors.
#[derive(Debug, Clone)]
pub struct Svd {
    /// Singular values, descending.
    pub values: Vec<f64>,
    /// Left singular vectors as columns, `n x k`.
    pub left: Array2<f64>,
    /// Right singular vectors as rows, `k x m` (this is `V^T`).
    pub right_t: Array2<f64>,
}

impl Svd {
    pub fn compute(a: &Array2<f64>) -> Result<Self> {
        let (u, s, vt) = a
            .svddc(JobSvd::Some)
            .map_err(|e| Error::Backend(format!("svd: {e}")))?;
        let left = u.ok_or_else(|| Error::Backend("svd returned no U".into()))?;
        let right_t = vt.ok_or_else(|| Error::Backend("svd returned no VT".into()))?;
        Ok(Self { values: s.to_vec(), left, right_t })
    }

    pub fn left_vector(&self, k: usize) -> ArrayView1<'_, f64> {
        self.left.column(k)
    }

    pub fn right_vector(&self, k: usize) -> ArrayView1<'_, f64> {
        self.right_t.row(k)
    }
}

/// Singular values only (no vectors); noticeably faster for calibration
/// draws.
pub fn singular_values(a: &Array2<f64>) -> Result<Vec<f64>> {
    let (_, s, _) = a
        .svddc(JobSvd::None)
        .map_err(|e| Error::Backend(format!("singular values: {e}")))?;
    Ok(s.to_vec())
}

/// Symmetric eigendecomposition with eigenvalues descending and eigenvector
/// columns aligned.
pub fn eigh_desc(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let (w, v) = a
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Backend(format!("eigh: {e}")))?;
    let mut values: Vec<f64> = w.to_vec();
    values.reverse();
    let mut vectors = v;
    vectors.invert_axis(Axis(1));
    Ok((values, vectors))
}

/// Orthonormalize the columns of `a` in place (modified Gram-Schmidt).
pub fn orthonormalize_columns(a: &mut Array2<f64>) -> Result<()> {
    let r = a.ncols();
    for j in 0..r {
        for i in 0..j {
            let proj = a.column(i).dot(&a.column(j));
            let prev = a.column(i).to_owned();
            let mut col = a.column_mut(j);
            col.scaled_add(-proj, &prev);
        }
        let norm = a.column(j).dot(&a.column(j)).sqrt();
        if norm < 1e-12 {
            return Err(Error::Backend(
                "degenerate directions during orthonormalization".into(),
            ));
        }
        a.column_mut(j).mapv_inplace(|x| x / norm);
    }
    Ok(())
}

/// Squared norm of the projection of `x` onto the span of the columns of
/// `basis` (columns assumed orthonormal).
pub fn projection_sq(x: &ArrayView1<f64>, basis: &ArrayView2<f64>) -> f64 {
    basis
        .columns()
        .into_iter()
        .map(|col| {
            let ip = col.dot(x);
            ip * ip
        })
        .sum()
}

/// Rank-one update `a + theta * u v^T`.
pub fn add_rank_one(a: &mut Array2<f64>, theta: f64, u: &ArrayView1<f64>, v: &ArrayView1<f64>) {
    for (mut row, &ui) in a.rows_mut().into_iter().zip(u.iter()) {
        row.scaled_add(theta * ui, v);
    }
}

/// `u^T a u` style symmetric rank-one accumulation helper for building
/// reconstructions.
pub fn outer_accumulate(
    acc: &mut Array2<f64>,
    sigma: f64,
    u: &ArrayView1<f64>,
    v: &ArrayView1<f64>,
) {
    add_rank_one(acc, sigma, u, v);
}

/// Numerical rank at a relative tolerance.
pub fn numerical_rank(values_desc: &[f64], rel_tol: f64) -> usize {
    let top = values_desc.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    values_desc.iter().take_while(|&&s| s > rel_tol * top).count()
}

#[allow(dead_code)]
pub fn as_array1(v: &[f64]) -> Array1<f64> {
    Array1::from_vec(v.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn svd_of_diag() {
        let a = array![[3.0, 0.0], [0.0, -5.0]];
        let svd = Svd::compute(&a).unwrap();
        assert_abs_diff_eq!(svd.values[0], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(svd.values[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn eigh_descending() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        let (w, v) = eigh_desc(&a).unwrap();
        assert_abs_diff_eq!(w[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], -1.0, epsilon = 1e-12);
        // eigenvector for 3 is (1,1)/sqrt(2)
        let top = v.column(0);
        assert_abs_diff_eq!(top[0].abs(), (0.5f64).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn gram_schmidt_orthonormal() {
        let mut a = array![[1.0, 1.0], [1.0, 0.0], [0.0, 2.0]];
        orthonormalize_columns(&mut a).unwrap();
        assert_abs_diff_eq!(a.column(0).dot(&a.column(0)), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.column(1).dot(&a.column(1)), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.column(0).dot(&a.column(1)), 0.0, epsilon = 1e-12);
    }
}
