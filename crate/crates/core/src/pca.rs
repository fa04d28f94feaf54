//! Principal component analysis used to shrink the two feature views before CCA.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Number of components kept for a `fraction` of `d_raw` dimensions.
pub fn kept_dims(d_raw: usize, fraction: f64) -> usize {
    ((fraction * d_raw as f64).round() as usize).clamp(1, d_raw.max(1))
}

/// Flip `v` so that its largest-magnitude entry (first one on ties) is positive.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenpairs sorted by descending
/// eigenvalue, each eigenvector sign-normalized with [`fix_sign`].
pub fn sorted_symmetric_eigen(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col: Vec<f64> = eig.eigenvectors.column(src).iter().copied().collect();
        fix_sign(&mut col);
        vectors.set_column(dst, &DVector::from_vec(col));
    }
    Ok((values, vectors))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaTransform {
    pub mean: DVector<f64>,
    /// `d_raw x d_kept`, orthonormal columns in descending-variance order.
    pub components: DMatrix<f64>,
    /// Variances along the kept components.
    pub variances: Vec<f64>,
    pub kept_fraction: f64,
    /// Set when some kept component lies in the null space of the training data.
    pub rank_deficient: bool,
}

impl PcaTransform {
    pub fn d_raw(&self) -> usize {
        self.components.nrows()
    }

    pub fn d_kept(&self) -> usize {
        self.components.ncols()
    }

    /// Center with the training mean and project onto the kept components.
    pub fn transform(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if data.ncols() != self.d_raw() {
            return Err(Error::DimMismatch {
                what: "PCA input".into(),
                found: data.ncols(),
                expected: self.d_raw(),
            });
        }
        Ok(center_with(data, &self.mean) * &self.components)
    }

    pub fn inverse_transform(&self, reduced: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = reduced * self.components.transpose();
        for mut row in out.row_iter_mut() {
            row += self.mean.transpose();
        }
        out
    }
}

pub fn column_means(data: &DMatrix<f64>) -> DVector<f64> {
    let n = data.nrows() as f64;
    DVector::from_iterator(data.ncols(), data.column_iter().map(|c| c.sum() / n))
}

pub fn center_with(data: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = data.clone();
    for mut row in out.row_iter_mut() {
        row -= mean.transpose();
    }
    out
}

/// Fit PCA on the rows of `data` (`N x d_raw`), keeping `kept_dims(d_raw, fraction)` components.
///
/// When the data has fewer nonzero-variance directions than the requested
/// components, the remaining components come from the orthonormal complement
/// returned by the eigensolver and `rank_deficient` is set.
pub fn fit_pca(data: &DMatrix<f64>, fraction: f64) -> Result<PcaTransform> {
    let (n, d) = data.shape();
    if n < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 samples, got {n}")));
    }
    if d == 0 {
        return Err(Error::invalid("PCA input has no columns"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("PCA fraction must be in (0, 1], got {fraction}")));
    }
    let mean = column_means(data);
    let centered = center_with(data, &mean);
    let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);
    cov = (&cov + cov.transpose()) * 0.5;
    let (values, vectors) = sorted_symmetric_eigen(cov)?;
    let k = kept_dims(d, fraction);
    let scale = values.first().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
    let rank_deficient = values[..k].iter().any(|&v| v <= 1e-12 * scale);
    Ok(PcaTransform {
        mean,
        components: vectors.columns(0, k).into_owned(),
        variances: values[..k].iter().map(|v| v.max(0.0)).collect(),
        kept_fraction: fraction,
        rank_deficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kept_dimension_arithmetic() {
        assert_eq!(kept_dims(4096, 0.1), 410);
        assert_eq!(kept_dims(10, 0.01), 1);
        assert_eq!(kept_dims(10, 1.0), 10);
        assert_eq!(kept_dims(128, 0.05), 6);
    }

    #[test]
    fn axis_aligned_variance() {
        let data = DMatrix::from_row_slice(4, 2, &[-2.0, 1.0, -1.0, 1.0, 1.0, 1.0, 2.0, 1.0]);
        let p = fit_pca(&data, 0.5).unwrap();
        assert_eq!(p.d_kept(), 1);
        assert!((p.components[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(p.components[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn sign_rule() {
        let mut v = vec![0.1, -0.9, 0.3];
        fix_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
    }

    #[test]
    fn too_few_samples() {
        assert!(fit_pca(&DMatrix::zeros(1, 3), 0.5).is_err());
    }

    #[test]
    fn zero_variance_is_flagged_and_orthonormal() {
        let data = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 3.0, 0.0, 0.0]);
        let p = fit_pca(&data, 1.0).unwrap();
        assert!(p.rank_deficient);
        let gram = p.components.transpose() * &p.components;
        assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-12);
    }
}
