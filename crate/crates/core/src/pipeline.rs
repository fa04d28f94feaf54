//! Split-level glue shared by the CLI and the experiment suites.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::aggregate::Pooling;
use crate::dataset::DatasetManifest;
use crate::embedding::{paired_views, EmbeddingModel};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvaluationReport, RetrievalData};
use crate::fusion::{FusionModel, Mode, Prediction};
use crate::retrieval::{build_index, predict_missing, RetrievalIndex};
use crate::split::SplitAssignment;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedObject {
    pub object_id: String,
    pub truth: usize,
    pub prediction: Prediction,
    /// Training objects whose ground features stood in for missing ones.
    pub retrieved: Vec<String>,
}

/// Missing-modality routing for objects without ground views.
pub struct Retrieval<'a> {
    pub embedding: &'a EmbeddingModel,
    pub index: &'a RetrievalIndex,
    pub k: usize,
}

/// Index of the training objects (with both modalities) of `split`.
pub fn index_on_split(
    embedding: &EmbeddingModel,
    manifest: &DatasetManifest,
    split: &SplitAssignment,
    pooling: Pooling,
    power: f64,
) -> Result<RetrievalIndex> {
    let train = paired_views(manifest, pooling, |id| split.is_train(id))?;
    build_index(embedding, &train, pooling, power)
}

/// Predict every test object the model can handle. Objects lacking ground views
/// go through retrieval when `retrieval` is given (multimodal models only) and
/// are skipped otherwise.
pub fn predict_test(
    model: &FusionModel,
    manifest: &DatasetManifest,
    split: &SplitAssignment,
    pooling: Pooling,
    retrieval: Option<&Retrieval<'_>>,
) -> Result<Vec<PredictedObject>> {
    let mut out = Vec::new();
    for r in manifest.records.iter().filter(|r| split.is_test(&r.object_id)) {
        if let Some(x) = model.record_input(r, pooling)? {
            out.push(PredictedObject {
                object_id: r.object_id.clone(),
                truth: r.label,
                prediction: Prediction::from_scores(&model.scores(&x)?),
                retrieved: Vec::new(),
            });
        } else if let (Some(rt), Mode::Multimodal) = (retrieval, model.mode) {
            let p = predict_missing(model, rt.embedding, rt.index, &r.overhead.to_f64(), rt.k)?;
            out.push(PredictedObject {
                object_id: r.object_id.clone(),
                truth: r.label,
                prediction: p.prediction,
                retrieved: p.retrieved,
            });
        }
    }
    Ok(out)
}

/// Predict test objects as if their ground views were missing. With
/// `only_complete`, objects that truly lack ground views are left out so the
/// result is comparable with the full multimodal model.
pub fn predict_missing_test(
    model: &FusionModel,
    manifest: &DatasetManifest,
    split: &SplitAssignment,
    retrieval: &Retrieval<'_>,
    only_complete: bool,
) -> Result<Vec<PredictedObject>> {
    manifest
        .records
        .iter()
        .filter(|r| split.is_test(&r.object_id) && (!only_complete || r.has_ground()))
        .map(|r| {
            let p = predict_missing(
                model,
                retrieval.embedding,
                retrieval.index,
                &r.overhead.to_f64(),
                retrieval.k,
            )?;
            Ok(PredictedObject {
                object_id: r.object_id.clone(),
                truth: r.label,
                prediction: p.prediction,
                retrieved: p.retrieved,
            })
        })
        .collect()
}

pub fn evaluate_predictions(preds: &[PredictedObject], num_classes: usize) -> Result<EvaluationReport> {
    let p: Vec<usize> = preds.iter().map(|o| o.prediction.class).collect();
    let t: Vec<usize> = preds.iter().map(|o| o.truth).collect();
    evaluate(&p, &t, num_classes)
}

/// Paired training views plus the overhead features of test objects.
pub fn retrieval_data(
    manifest: &DatasetManifest,
    split: &SplitAssignment,
    pooling: Pooling,
) -> Result<RetrievalData> {
    let train = paired_views(manifest, pooling, |id| split.is_train(id))?;
    let test: Vec<_> = manifest
        .records
        .iter()
        .filter(|r| split.is_test(&r.object_id))
        .collect();
    if test.is_empty() {
        return Err(Error::invalid("split has no test objects"));
    }
    let flat: Vec<f64> = test.iter().flat_map(|r| r.overhead.to_f64()).collect();
    Ok(RetrievalData {
        train,
        test_overhead: DMatrix::from_row_slice(test.len(), manifest.d_oh, &flat),
        test_labels: test.iter().map(|r| r.label).collect(),
        num_classes: manifest.num_classes(),
        pooling,
    })
}

/// `object_id  predicted  truth  retrieved` (class names, retrieved ids `;`-joined).
pub fn predictions_tsv(preds: &[PredictedObject], class_names: &[String]) -> String {
    let mut s = String::from("object_id\tpredicted\ttruth\tretrieved\n");
    for p in preds {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}",
            p.object_id,
            class_names[p.prediction.class],
            class_names[p.truth],
            p.retrieved.join(";")
        );
    }
    s
}

/// Read `(object_id, predicted class name)` pairs written by [`predictions_tsv`].
pub fn read_predictions(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.starts_with("object_id\t") || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next()) {
            (Some(id), Some(pred)) if !id.is_empty() => out.push((id.to_owned(), pred.to_owned())),
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected object_id<TAB>predicted".into(),
                })
            }
        }
    }
    Ok(out)
}
