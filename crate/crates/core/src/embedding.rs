//! Three-view CCA embedding of ground-view features, overhead features and labels.
//!
//! Each feature view is L2-normalized row-wise, centered and PCA-reduced;
//! the label view is one-hot and centered. With `C_ij = X_i^T X_j` the
//! projections solve
//!
//! ```text
//! [C_11+eta I  C_12        C_13      ]       [C_11+eta I                      ]
//! [C_21        C_22+eta I  C_23      ] w = l [           C_22+eta I           ] w
//! [C_31        C_32        C_33+eta I]       [                      C_33+eta I]
//! ```
//!
//! and the top `d_emb` eigenvectors, split into row blocks, give `W_1, W_2, W_3`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::aggregate::{aggregate, Pooling};
use crate::container::{Container, NamedArray};
use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::fusion::as_count;
use crate::pca::{center_with, column_means, fit_pca, fix_sign, sorted_symmetric_eigen, PcaTransform};
use crate::split::SplitAssignment;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcaHyperparams {
    /// Fraction of each feature view's dimensions kept by PCA.
    pub pca_frac: f64,
    /// Embedding size as a fraction of `d_1 + d_2 + d_3`.
    pub demb_frac: f64,
    /// Exponent applied to the eigenvalues when scaling projections for retrieval.
    pub power: f64,
    /// Ridge added to each view's covariance block.
    pub eta: f64,
}

impl Default for CcaHyperparams {
    fn default() -> Self {
        CcaHyperparams {
            pca_frac: 0.1,
            demb_frac: 0.2,
            power: 6.0,
            eta: 1e-4,
        }
    }
}

impl CcaHyperparams {
    fn validate(&self) -> Result<()> {
        let ok = self.pca_frac > 0.0
            && self.pca_frac <= 1.0
            && self.demb_frac > 0.0
            && self.demb_frac <= 1.0
            && self.power >= 0.0
            && self.eta >= 0.0
            && self.power.is_finite()
            && self.eta.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid CCA hyperparameters {self:?}")))
        }
    }
}

pub fn embedding_dims(total: usize, demb_frac: f64) -> usize {
    ((demb_frac * total as f64).round() as usize).clamp(1, total.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Ground,
    Overhead,
    Label,
}

/// Left (`a`) and right (`b`) block matrices of the generalized eigenproblem.
#[derive(Debug, Clone)]
pub struct CcaProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub dims: Vec<usize>,
}

impl CcaProblem {
    /// Build from centered views sharing the same rows.
    pub fn new(views: &[DMatrix<f64>], eta: f64) -> Result<Self> {
        let n = views
            .first()
            .map(|v| v.nrows())
            .ok_or_else(|| Error::invalid("CCA needs at least one view"))?;
        if let Some(v) = views.iter().find(|v| v.nrows() != n) {
            return Err(Error::DimMismatch {
                what: "CCA view rows".into(),
                found: v.nrows(),
                expected: n,
            });
        }
        let dims: Vec<usize> = views.iter().map(|v| v.ncols()).collect();
        let offsets = block_offsets(&dims);
        let total: usize = dims.iter().sum();
        let mut a = DMatrix::zeros(total, total);
        let mut b = DMatrix::zeros(total, total);
        for (i, xi) in views.iter().enumerate() {
            for (j, xj) in views.iter().enumerate() {
                let mut c = xi.transpose() * xj;
                if i == j {
                    for k in 0..dims[i] {
                        c[(k, k)] += eta;
                    }
                    b.view_mut((offsets[i], offsets[j]), (dims[i], dims[j]))
                        .copy_from(&c);
                }
                a.view_mut((offsets[i], offsets[j]), (dims[i], dims[j]))
                    .copy_from(&c);
            }
        }
        a = (&a + a.transpose()) * 0.5;
        b = (&b + b.transpose()) * 0.5;
        Ok(CcaProblem { a, b, dims })
    }

    pub fn block(&self, m: &DMatrix<f64>, view: usize) -> DMatrix<f64> {
        let off = block_offsets(&self.dims)[view];
        m.view((off, off), (self.dims[view], self.dims[view])).into_owned()
    }
}

fn block_offsets(dims: &[usize]) -> Vec<usize> {
    dims.iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect()
}

/// Solve `A w = l B w` for symmetric `A` and symmetric positive definite `B`.
///
/// Uses the Cholesky reduction `B = L L^T`, `M = L^-1 A L^-T`. Eigenvectors are
/// `B`-orthonormal, sorted by descending eigenvalue and sign-normalized.
pub fn generalized_symmetric_eigen(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if a.shape() != (n, n) || b.shape() != (n, n) {
        return Err(Error::invalid("generalized eigenproblem needs square matrices of equal size"));
    }
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("right-hand matrix is not positive definite".into()))?;
    let l = chol.l();
    let left = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let m = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let asym = (&m - m.transpose()).amax();
    if asym > 1e-8 * m.amax().max(1.0) {
        return Err(Error::Numerical(format!(
            "reduced matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let m = (&m + m.transpose()) * 0.5;
    let (values, y) = sorted_symmetric_eigen(m)?;
    let mut w = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    for mut col in w.column_iter_mut() {
        let mut v: Vec<f64> = col.iter().copied().collect();
        fix_sign(&mut v);
        col.copy_from_slice(&v);
    }
    Ok((values, w))
}

/// Full generalized spectrum of a multi-view CCA problem.
#[derive(Debug, Clone)]
pub struct CcaSolution {
    pub eigenvalues: Vec<f64>,
    /// Columns are the stacked `[w_1; w_2; ...]` eigenvectors.
    pub eigenvectors: DMatrix<f64>,
    pub dims: Vec<usize>,
}

impl CcaSolution {
    /// Row block of the first `k` eigenvectors belonging to `view`.
    pub fn projection(&self, view: usize, k: usize) -> DMatrix<f64> {
        let off = block_offsets(&self.dims)[view];
        self.eigenvectors
            .view((off, 0), (self.dims[view], k))
            .into_owned()
    }
}

/// Multi-view CCA on already centered views.
pub fn solve_multiview(views: &[DMatrix<f64>], eta: f64) -> Result<CcaSolution> {
    let problem = CcaProblem::new(views, eta)?;
    let (eigenvalues, eigenvectors) = generalized_symmetric_eigen(&problem.a, &problem.b)?;
    Ok(CcaSolution {
        eigenvalues,
        eigenvectors,
        dims: problem.dims,
    })
}

/// Divide every row by its L2 norm; all-zero rows are left unchanged.
pub fn l2_normalize_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(labels.len(), num_classes);
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: l,
                classes: num_classes,
            });
        }
        m[(i, l)] = 1.0;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub pca_gsv: PcaTransform,
    pub pca_oh: PcaTransform,
    pub label_mean: DVector<f64>,
    pub w_gsv: DMatrix<f64>,
    pub w_oh: DMatrix<f64>,
    pub w_label: DMatrix<f64>,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub hyperparams: CcaHyperparams,
}

impl EmbeddingModel {
    pub fn num_classes(&self) -> usize {
        self.label_mean.len()
    }

    pub fn d_emb(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn projection(&self, view: View) -> &DMatrix<f64> {
        match view {
            View::Ground => &self.w_gsv,
            View::Overhead => &self.w_oh,
            View::Label => &self.w_label,
        }
    }

    /// Normalize, center with the training mean and, for feature views, PCA-reduce.
    pub fn preprocess(&self, view: View, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match view {
            View::Ground => self.pca_gsv.transform(&l2_normalize_rows(features)),
            View::Overhead => self.pca_oh.transform(&l2_normalize_rows(features)),
            View::Label => {
                if features.ncols() != self.num_classes() {
                    return Err(Error::DimMismatch {
                        what: "label view".into(),
                        found: features.ncols(),
                        expected: self.num_classes(),
                    });
                }
                Ok(center_with(features, &self.label_mean))
            }
        }
    }

    /// Embed `M` samples of one view: `preprocess(features) * W_view`.
    pub fn project(&self, view: View, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.preprocess(view, features)? * self.projection(view))
    }

    /// Diagonal of `D = diag(eigenvalue^power)`.
    pub fn scaling(&self, power: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l.max(0.0).powf(power)).collect()
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::default();
        let mat = |name: &str, m: &DMatrix<f64>| {
            let mut data = Vec::with_capacity(m.len());
            for r in m.row_iter() {
                data.extend(r.iter());
            }
            NamedArray::new(name, vec![m.nrows(), m.ncols()], data)
        };
        let hp = self.hyperparams;
        c.push(NamedArray::vector(
            "hyperparams",
            vec![hp.pca_frac, hp.demb_frac, hp.power, hp.eta],
        ));
        for (prefix, p) in [("gsv", &self.pca_gsv), ("oh", &self.pca_oh)] {
            c.push(NamedArray::vector(&format!("{prefix}_mean"), p.mean.iter().copied().collect()));
            c.push(mat(&format!("{prefix}_components"), &p.components));
            c.push(NamedArray::vector(&format!("{prefix}_variances"), p.variances.clone()));
            c.push(NamedArray::scalar(
                &format!("{prefix}_rank_deficient"),
                p.rank_deficient as u8 as f64,
            ));
        }
        c.push(NamedArray::vector("label_mean", self.label_mean.iter().copied().collect()));
        c.push(mat("w1", &self.w_gsv));
        c.push(mat("w2", &self.w_oh));
        c.push(mat("w3", &self.w_label));
        c.push(NamedArray::vector("eigenvalues", self.eigenvalues.clone()));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let mat = |name: &str| -> Result<DMatrix<f64>> {
            let a = c.get(name)?;
            let [r, k] = a.shape[..] else {
                return Err(Error::Checkpoint(format!("{name} is not a matrix")));
            };
            Ok(DMatrix::from_row_slice(r, k, &a.data))
        };
        let vector = |name: &str| -> Result<Vec<f64>> { Ok(c.get(name)?.data.clone()) };
        let hp = vector("hyperparams")?;
        let [pca_frac, demb_frac, power, eta] = hp[..] else {
            return Err(Error::Checkpoint("hyperparams must hold 4 values".into()));
        };
        let hyperparams = CcaHyperparams {
            pca_frac,
            demb_frac,
            power,
            eta,
        };
        let pca = |prefix: &str| -> Result<PcaTransform> {
            Ok(PcaTransform {
                mean: DVector::from_vec(vector(&format!("{prefix}_mean"))?),
                components: mat(&format!("{prefix}_components"))?,
                variances: vector(&format!("{prefix}_variances"))?,
                kept_fraction: pca_frac,
                rank_deficient: as_count(c.scalar(&format!("{prefix}_rank_deficient"))?)? != 0,
            })
        };
        let model = EmbeddingModel {
            pca_gsv: pca("gsv")?,
            pca_oh: pca("oh")?,
            label_mean: DVector::from_vec(vector("label_mean")?),
            w_gsv: mat("w1")?,
            w_oh: mat("w2")?,
            w_label: mat("w3")?,
            eigenvalues: vector("eigenvalues")?,
            hyperparams,
        };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let d = self.d_emb();
        let ok = self.pca_gsv.mean.len() == self.pca_gsv.d_raw()
            && self.pca_oh.mean.len() == self.pca_oh.d_raw()
            && self.w_gsv.shape() == (self.pca_gsv.d_kept(), d)
            && self.w_oh.shape() == (self.pca_oh.d_kept(), d)
            && self.w_label.shape() == (self.num_classes(), d);
        if ok {
            Ok(())
        } else {
            Err(Error::Checkpoint("inconsistent embedding array shapes".into()))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Fit the embedding on paired training rows of both feature views plus labels.
pub fn fit_embedding(
    ground: &DMatrix<f64>,
    overhead: &DMatrix<f64>,
    labels: &[usize],
    num_classes: usize,
    hyperparams: CcaHyperparams,
) -> Result<EmbeddingModel> {
    hyperparams.validate()?;
    let n = labels.len();
    if ground.nrows() != n || overhead.nrows() != n {
        return Err(Error::invalid(format!(
            "view row counts differ: ground {}, overhead {}, labels {n}",
            ground.nrows(),
            overhead.nrows()
        )));
    }
    let pca_gsv = fit_pca(&l2_normalize_rows(ground), hyperparams.pca_frac)?;
    let pca_oh = fit_pca(&l2_normalize_rows(overhead), hyperparams.pca_frac)?;
    let onehot = one_hot(labels, num_classes)?;
    let label_mean = column_means(&onehot);

    let views = [
        pca_gsv.transform(&l2_normalize_rows(ground))?,
        pca_oh.transform(&l2_normalize_rows(overhead))?,
        center_with(&onehot, &label_mean),
    ];
    let solution = solve_multiview(&views, hyperparams.eta)?;
    let total: usize = solution.dims.iter().sum();
    let d_emb = embedding_dims(total, hyperparams.demb_frac);
    Ok(EmbeddingModel {
        w_gsv: solution.projection(0, d_emb),
        w_oh: solution.projection(1, d_emb),
        w_label: solution.projection(2, d_emb),
        eigenvalues: solution.eigenvalues[..d_emb].to_vec(),
        pca_gsv,
        pca_oh,
        label_mean,
        hyperparams,
    })
}

/// Paired training matrices: aggregated ground feature, overhead feature, label
/// and object id for every training object that has both modalities.
#[derive(Debug, Clone)]
pub struct PairedViews {
    pub ground: DMatrix<f64>,
    pub overhead: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub object_ids: Vec<String>,
}

pub fn paired_views(
    manifest: &DatasetManifest,
    pooling: Pooling,
    keep: impl Fn(&str) -> bool,
) -> Result<PairedViews> {
    let mut ground = Vec::new();
    let mut overhead = Vec::new();
    let mut labels = Vec::new();
    let mut object_ids = Vec::new();
    for r in manifest
        .records
        .iter()
        .filter(|r| r.has_ground() && keep(&r.object_id))
    {
        ground.extend(aggregate(&r.ground_views, pooling)?.values);
        overhead.extend(r.overhead.to_f64());
        labels.push(r.label);
        object_ids.push(r.object_id.clone());
    }
    let n = labels.len();
    Ok(PairedViews {
        ground: DMatrix::from_row_slice(n, manifest.d_gsv, &ground),
        overhead: DMatrix::from_row_slice(n, manifest.d_oh, &overhead),
        labels,
        object_ids,
    })
}

/// Fit on the training objects of `split` that have both modalities.
pub fn fit_embedding_on_split(
    manifest: &DatasetManifest,
    split: &SplitAssignment,
    pooling: Pooling,
    hyperparams: CcaHyperparams,
) -> Result<EmbeddingModel> {
    let train = paired_views(manifest, pooling, |id| split.is_train(id))?;
    fit_embedding(
        &train.ground,
        &train.overhead,
        &train.labels,
        manifest.num_classes(),
        hyperparams,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_dimension_arithmetic() {
        assert_eq!(410 + 410 + 16, 836);
        assert_eq!(embedding_dims(836, 0.2), 167);
        assert_eq!(embedding_dims(3, 0.2), 1);
    }

    #[test]
    fn generalized_eigen_diagonal_case() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 9.0]));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let (vals, vecs) = generalized_symmetric_eigen(&a, &b).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 2.0).abs() < 1e-12);
        // B-normalized: w^T B w = 1
        assert!((vecs[(1, 0)] - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn indefinite_rhs_refused() {
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(generalized_symmetric_eigen(&a, &b).is_err());
    }

    #[test]
    fn row_normalization_skips_zero_rows() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 0.0]);
        let n = l2_normalize_rows(&m);
        assert_eq!(n.row(0).iter().copied().collect::<Vec<_>>(), vec![0.6, 0.8]);
        assert_eq!(n.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
    }
}
