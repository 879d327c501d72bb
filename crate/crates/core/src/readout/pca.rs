use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Mean-centred projection onto the leading right singular vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// k × d, rows orthonormal, ordered by singular value.
    pub components: DMatrix<f64>,
    /// All singular values of the centred training matrix, descending.
    pub singular_values: Vec<f64>,
}

/// Stacks vectors as the rows of a matrix.
pub fn stack_rows(rows: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != d) {
        return Err(crate::Error::Dimension("rows have different lengths".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

impl Pca {
    /// `data` holds one sample per row.
    pub fn fit(data: &DMatrix<f64>, k: usize) -> Result<Self> {
        let (n, d) = data.shape();
        if n < 2 {
            return Err(invalid(format!("PCA needs at least 2 samples, got {n}")));
        }
        if k == 0 || k > n.min(d) {
            return Err(invalid(format!("PCA rank {k} outside 1..={}", n.min(d))));
        }
        let mean = data.row_mean().transpose();
        let mut centred = data.clone();
        for mut row in centred.row_iter_mut() {
            row -= mean.transpose();
        }
        let svd = centred.svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let components = DMatrix::from_fn(k, d, |r, c| v_t[(order[r], c)]);
        let singular_values = order.iter().map(|&i| svd.singular_values[i]).collect();
        Ok(Self { mean, components, singular_values })
    }

    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn transform(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.dim() {
            return Err(crate::Error::Dimension(format!("PCA expects {} features, got {}", self.dim(), v.len())));
        }
        Ok(&self.components * (v - &self.mean))
    }

    pub fn inverse(&self, z: &DVector<f64>) -> DVector<f64> {
        self.components.tr_mul(z) + &self.mean
    }

    /// Squared singular values left out of the projection.
    pub fn discarded_energy(&self) -> f64 {
        self.singular_values[self.k()..].iter().map(|s| s * s).sum()
    }

    pub fn explained_variance_ratio(&self) -> f64 {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        if total == 0.0 {
            return 1.0;
        }
        1.0 - self.discarded_energy() / total
    }

    /// Σ‖x − inverse(transform(x))‖² over the rows of `data`.
    pub fn reconstruction_error(&self, data: &DMatrix<f64>) -> Result<f64> {
        let mut err = 0.0;
        for row in data.row_iter() {
            let x = row.transpose();
            let r = self.inverse(&self.transform(&x)?);
            err += (x - r).norm_squared();
        }
        Ok(err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn points_on_a_line_reconstruct_exactly() {
        let dir = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let data = DMatrix::from_fn(12, 3, |i, j| 3.0 + (i as f64 * 0.7 - 2.0) * dir[j]);
        let p = Pca::fit(&data, 1).unwrap();
        assert!(p.reconstruction_error(&data).unwrap() < 1e-10);
    }

    #[test]
    fn full_rank_is_lossless_and_orthonormal() {
        let data = random(20, 8, 3);
        let p = Pca::fit(&data, 8).unwrap();
        assert!(p.reconstruction_error(&data).unwrap() < 1e-20 + 1e-12 * data.norm_squared());
        let g = &p.components * p.components.transpose();
        assert!((g - DMatrix::identity(8, 8)).amax() < 1e-8);
        assert!(p.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn reconstruction_error_equals_discarded_energy() {
        let data = random(30, 6, 9);
        for k in 1..6 {
            let p = Pca::fit(&data, k).unwrap();
            let err = p.reconstruction_error(&data).unwrap();
            assert!((err - p.discarded_energy()).abs() < 1e-8 * err.max(1e-300), "k={k}");
        }
    }

    #[test]
    fn rank_bounds_checked() {
        let data = random(5, 3, 1);
        assert!(Pca::fit(&data, 0).is_err());
        assert!(Pca::fit(&data, 4).is_err());
        assert!(Pca::fit(&random(1, 3, 1), 1).is_err());
    }
}
