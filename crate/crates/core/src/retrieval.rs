//! Nearest-neighbor retrieval of training ground-view features for overhead-only queries.
//!
//! Training ground features are embedded as `X_1 W_1 D` and queries as
//! `X_2* W_2 D`, with `D = diag(eigenvalue^p)`, and compared by cosine similarity.

use nalgebra::{DMatrix, RowDVector};

use crate::aggregate::{AggregatedFeature, Pooling};
use crate::embedding::{EmbeddingModel, PairedViews, View};
use crate::error::{Error, Result};
use crate::fusion::{FusionModel, Mode, Prediction};

#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    /// Scaled projected training ground features, one row per object.
    pub rows: DMatrix<f64>,
    pub norms: Vec<f64>,
    pub object_ids: Vec<String>,
    pub labels: Vec<usize>,
    /// Aggregated ground features used for substitution, aligned with `rows`.
    pub ground: DMatrix<f64>,
    pub pooling: Pooling,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    /// Row in the index.
    pub index: usize,
    pub object_id: String,
    pub label: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub neighbors: Vec<Neighbor>,
    /// The scaled query projection had zero norm; every similarity is 0.
    pub zero_norm_query: bool,
}

fn scale_columns(m: &mut DMatrix<f64>, scale: &[f64]) {
    for (mut col, s) in m.column_iter_mut().zip(scale) {
        col *= *s;
    }
}

/// Embed training ground features for retrieval with `D = diag(eigenvalue^power)`.
pub fn build_index(
    embedding: &EmbeddingModel,
    train: &PairedViews,
    pooling: Pooling,
    power: f64,
) -> Result<RetrievalIndex> {
    if train.labels.is_empty() {
        return Err(Error::invalid("cannot build a retrieval index from an empty training set"));
    }
    if !(power >= 0.0 && power.is_finite()) {
        return Err(Error::invalid(format!("eigenvalue power must be >= 0, got {power}")));
    }
    let mut rows = embedding.project(View::Ground, &train.ground)?;
    scale_columns(&mut rows, &embedding.scaling(power));
    if rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite index row".into()));
    }
    let norms = rows.row_iter().map(|r| r.norm()).collect();
    Ok(RetrievalIndex {
        rows,
        norms,
        object_ids: train.object_ids.clone(),
        labels: train.labels.clone(),
        ground: train.ground.clone(),
        pooling,
        power,
    })
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Scaled projections `X_2* W_2 D` for a batch of overhead features (`M x d_oh`).
    pub fn project_queries(
        &self,
        embedding: &EmbeddingModel,
        overhead: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        let mut q = embedding.project(View::Overhead, overhead)?;
        scale_columns(&mut q, &embedding.scaling(self.power));
        Ok(q)
    }

    /// Cosine similarity of an already scaled query against every row.
    pub fn similarities(&self, query: &RowDVector<f64>) -> (Vec<f64>, bool) {
        let qn = query.norm();
        if qn == 0.0 {
            return (vec![0.0; self.len()], true);
        }
        let sims = self
            .rows
            .row_iter()
            .zip(&self.norms)
            .map(|(r, &n)| if n == 0.0 { 0.0 } else { r.dot(query) / (n * qn) })
            .collect();
        (sims, false)
    }

    /// Top `k` rows for a scaled query, ties broken by lower row index.
    pub fn rank(&self, query: &RowDVector<f64>, k: usize) -> Result<QueryResult> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let (sims, zero_norm_query) = self.similarities(query);
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&i, &j| sims[j].total_cmp(&sims[i]).then(i.cmp(&j)));
        let neighbors = order
            .into_iter()
            .take(k)
            .map(|i| Neighbor {
                index: i,
                object_id: self.object_ids[i].clone(),
                label: self.labels[i],
                similarity: sims[i],
            })
            .collect();
        Ok(QueryResult {
            neighbors,
            zero_norm_query,
        })
    }

    /// Rank training objects for one raw overhead feature.
    pub fn query(
        &self,
        embedding: &EmbeddingModel,
        overhead: &[f64],
        k: usize,
    ) -> Result<QueryResult> {
        let q = self.project_queries(embedding, &DMatrix::from_row_slice(1, overhead.len(), overhead))?;
        self.rank(&q.row(0).into_owned(), k)
    }

    /// Mean of the neighbors' aggregated ground features.
    pub fn substitute_ground(&self, neighbors: &[Neighbor]) -> AggregatedFeature {
        let mut values = vec![0.0; self.ground.ncols()];
        for n in neighbors {
            for (v, x) in values.iter_mut().zip(self.ground.row(n.index).iter()) {
                *v += x;
            }
        }
        let k = neighbors.len().max(1) as f64;
        values.iter_mut().for_each(|v| *v /= k);
        AggregatedFeature {
            values,
            pooling: self.pooling,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissingPrediction {
    pub prediction: Prediction,
    pub retrieved: Vec<String>,
    pub zero_norm_query: bool,
}

/// Multimodal prediction for an object without ground views: the ground input is
/// replaced by the (mean) aggregated ground feature of the `k` nearest training objects.
pub fn predict_missing(
    fusion: &FusionModel,
    embedding: &EmbeddingModel,
    index: &RetrievalIndex,
    overhead: &[f64],
    k: usize,
) -> Result<MissingPrediction> {
    if fusion.mode != Mode::Multimodal {
        return Err(Error::invalid(format!(
            "missing-modality prediction needs a multimodal model, got {}",
            fusion.mode
        )));
    }
    let result = index.query(embedding, overhead, k)?;
    let ground = index.substitute_ground(&result.neighbors);
    let prediction = fusion.predict(Some(overhead), Some(&ground))?;
    Ok(MissingPrediction {
        prediction,
        retrieved: result.neighbors.into_iter().map(|n| n.object_id).collect(),
        zero_norm_query: result.zero_norm_query,
    })
}

/// Label coherence of the embedding for `k = 1..=k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceCurve {
    /// Fraction of queries with at least one correct-class neighbor among the top `k`.
    pub hit_rate: Vec<f64>,
    /// Mean number of correct-class neighbors among the top `k`.
    pub mean_correct: Vec<f64>,
}

pub fn label_coherence_curve(
    index: &RetrievalIndex,
    embedding: &EmbeddingModel,
    test_overhead: &DMatrix<f64>,
    test_labels: &[usize],
    k_max: usize,
) -> Result<CoherenceCurve> {
    if test_labels.is_empty() || test_overhead.nrows() != test_labels.len() {
        return Err(Error::invalid("coherence needs a nonempty, aligned test set"));
    }
    let k_max = k_max.min(index.len());
    if k_max == 0 {
        return Err(Error::invalid("k_max must be at least 1"));
    }
    let queries = index.project_queries(embedding, test_overhead)?;
    let mut hits = vec![0usize; k_max];
    let mut correct = vec![0usize; k_max];
    for (q, &label) in queries.row_iter().zip(test_labels) {
        let ranked = index.rank(&q.into_owned(), k_max)?;
        let mut found = false;
        let mut count = 0;
        for (k, n) in ranked.neighbors.iter().enumerate() {
            if n.label == label {
                found = true;
                count += 1;
            }
            hits[k] += found as usize;
            correct[k] += count;
        }
    }
    let m = test_labels.len() as f64;
    Ok(CoherenceCurve {
        hit_rate: hits.iter().map(|&h| h as f64 / m).collect(),
        mean_correct: correct.iter().map(|&c| c as f64 / m).collect(),
    })
}

/// Nearest-neighbor label for every row of `test_overhead`.
pub fn nearest_labels(
    index: &RetrievalIndex,
    embedding: &EmbeddingModel,
    test_overhead: &DMatrix<f64>,
) -> Result<Vec<usize>> {
    let queries = index.project_queries(embedding, test_overhead)?;
    queries
        .row_iter()
        .map(|q| Ok(index.rank(&q.into_owned(), 1)?.neighbors[0].label))
        .collect()
}
