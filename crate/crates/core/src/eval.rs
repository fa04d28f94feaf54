//! Accuracy metrics, split averaging and the CCA hyperparameter sweep.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::aggregate::Pooling;
use crate::embedding::{fit_embedding, CcaHyperparams, PairedViews};
use crate::error::{Error, Result};
use crate::retrieval::{build_index, nearest_labels};

/// Counts with ground truth in rows and predictions in columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn row_total(&self, truth: usize) -> u64 {
        self.counts[truth * self.num_classes..(truth + 1) * self.num_classes]
            .iter()
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|c| self.get(c, c)).sum()
    }

    /// Each nonempty row divided by its total and scaled to percent; empty rows are `None`.
    pub fn row_normalized(&self) -> Vec<Option<Vec<f64>>> {
        (0..self.num_classes)
            .map(|t| {
                let total = self.row_total(t);
                (total > 0).then(|| {
                    (0..self.num_classes)
                        .map(|p| 100.0 * self.get(t, p) as f64 / total as f64)
                        .collect()
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub oa: f64,
    pub aa: f64,
    /// Producer's accuracy (per-class recall) in percent; `None` for classes absent from the evaluation set.
    pub producer_acc: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
    pub n_eval: usize,
}

pub fn evaluate(
    predictions: &[usize],
    ground_truth: &[usize],
    num_classes: usize,
) -> Result<EvaluationReport> {
    if predictions.is_empty() || predictions.len() != ground_truth.len() {
        return Err(Error::invalid(format!(
            "evaluation needs equal nonempty label lists ({} predictions, {} truths)",
            predictions.len(),
            ground_truth.len()
        )));
    }
    let mut confusion = ConfusionMatrix::new(num_classes);
    for (&p, &t) in predictions.iter().zip(ground_truth) {
        for label in [p, t] {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: num_classes,
                });
            }
        }
        confusion.counts[t * num_classes + p] += 1;
    }
    let n_eval = predictions.len();
    let oa = 100.0 * confusion.trace() as f64 / n_eval as f64;
    let producer_acc: Vec<Option<f64>> = (0..num_classes)
        .map(|c| {
            let row = confusion.row_total(c);
            (row > 0).then(|| 100.0 * confusion.get(c, c) as f64 / row as f64)
        })
        .collect();
    let present: Vec<f64> = producer_acc.iter().flatten().copied().collect();
    let aa = present.iter().sum::<f64>() / present.len() as f64;
    Ok(EvaluationReport {
        oa,
        aa,
        producer_acc,
        confusion,
        n_eval,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedReport {
    pub n_reports: usize,
    pub oa: MeanStd,
    pub aa: MeanStd,
    pub producer_acc: Vec<Option<MeanStd>>,
    /// Mean of the per-report row-normalized confusion matrices (percent);
    /// rows are averaged over the reports in which the class occurs.
    pub confusion: Vec<Option<Vec<f64>>>,
}

pub fn average_reports(reports: &[EvaluationReport]) -> Result<AveragedReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::invalid("no reports to average"))?;
    let k = first.confusion.num_classes;
    if reports.iter().any(|r| r.confusion.num_classes != k) {
        return Err(Error::invalid("reports disagree on the number of classes"));
    }
    let oa: Vec<f64> = reports.iter().map(|r| r.oa).collect();
    let aa: Vec<f64> = reports.iter().map(|r| r.aa).collect();
    let producer_acc = (0..k)
        .map(|c| {
            let vals: Vec<f64> = reports.iter().filter_map(|r| r.producer_acc[c]).collect();
            (!vals.is_empty()).then(|| MeanStd::of(&vals))
        })
        .collect();
    let normalized: Vec<_> = reports.iter().map(|r| r.confusion.row_normalized()).collect();
    let confusion = (0..k)
        .map(|t| {
            let rows: Vec<&Vec<f64>> = normalized.iter().filter_map(|n| n[t].as_ref()).collect();
            (!rows.is_empty()).then(|| {
                (0..k)
                    .map(|p| rows.iter().map(|r| r[p]).sum::<f64>() / rows.len() as f64)
                    .collect()
            })
        })
        .collect();
    Ok(AveragedReport {
        n_reports: reports.len(),
        oa: MeanStd::of(&oa),
        aa: MeanStd::of(&aa),
        producer_acc,
        confusion,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |x| format!("{x:.6}"))
}

/// `key = value` lines; classes absent from the evaluation set print `NA`.
pub fn report_text(report: &EvaluationReport, class_names: &[String]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n_eval = {}", report.n_eval);
    let _ = writeln!(s, "oa = {:.6}", report.oa);
    let _ = writeln!(s, "aa = {:.6}", report.aa);
    for (c, pa) in report.producer_acc.iter().enumerate() {
        let name = class_names.get(c).map_or("?", String::as_str);
        let _ = writeln!(s, "producer_acc.{name} = {}", fmt_opt(*pa));
    }
    s
}

/// One header row and one data row: `n_eval,oa,aa,pa_<c>...,cm_<t>_<p>...`.
pub fn report_csv(report: &EvaluationReport) -> String {
    let k = report.confusion.num_classes;
    let mut header = vec!["n_eval".to_owned(), "oa".into(), "aa".into()];
    header.extend((0..k).map(|c| format!("pa_{c}")));
    for t in 0..k {
        header.extend((0..k).map(|p| format!("cm_{t}_{p}")));
    }
    let mut row = vec![
        report.n_eval.to_string(),
        format!("{:.6}", report.oa),
        format!("{:.6}", report.aa),
    ];
    row.extend(report.producer_acc.iter().map(|p| fmt_opt(*p)));
    row.extend(report.confusion.counts.iter().map(u64::to_string));
    format!("{}\n{}\n", header.join(","), row.join(","))
}

/// Row-normalized confusion (percent) with class names as header and first column.
pub fn confusion_csv(rows: &[Option<Vec<f64>>], class_names: &[String]) -> String {
    let mut s = String::from("truth");
    for n in class_names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for (t, row) in rows.iter().enumerate() {
        s.push_str(&class_names[t]);
        for p in 0..class_names.len() {
            s.push(',');
            s.push_str(&fmt_opt(row.as_ref().map(|r| r[p])));
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    PcaFrac,
    DembFrac,
    Power,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca-frac" | "pca_frac" | "%pca" => Ok(SweepParam::PcaFrac),
            "demb-frac" | "demb_frac" | "%d_emb" => Ok(SweepParam::DembFrac),
            "power" | "p" => Ok(SweepParam::Power),
            other => Err(Error::invalid(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

impl SweepParam {
    pub fn apply(self, base: CcaHyperparams, value: f64) -> CcaHyperparams {
        let mut hp = base;
        match self {
            SweepParam::PcaFrac => hp.pca_frac = value,
            SweepParam::DembFrac => hp.demb_frac = value,
            SweepParam::Power => hp.power = value,
        }
        hp
    }
}

/// Data for retrieval-accuracy experiments: paired training views and test overhead features.
#[derive(Debug, Clone)]
pub struct RetrievalData {
    pub train: PairedViews,
    pub test_overhead: DMatrix<f64>,
    pub test_labels: Vec<usize>,
    pub num_classes: usize,
    pub pooling: Pooling,
}

/// OA (percent) of predicting each test object with the label of its nearest training neighbor.
pub fn nearest_neighbor_oa(data: &RetrievalData, hp: CcaHyperparams) -> Result<f64> {
    let emb = fit_embedding(
        &data.train.ground,
        &data.train.overhead,
        &data.train.labels,
        data.num_classes,
        hp,
    )?;
    let index = build_index(&emb, &data.train, data.pooling, hp.power)?;
    let preds = nearest_labels(&index, &emb, &data.test_overhead)?;
    Ok(evaluate(&preds, &data.test_labels, data.num_classes)?.oa)
}

/// Refit the embedding for each value of one hyperparameter, the others held at `base`.
pub fn sensitivity_sweep(
    data: &RetrievalData,
    param: SweepParam,
    values: &[f64],
    base: CcaHyperparams,
) -> Result<Vec<(f64, f64)>> {
    values
        .iter()
        .map(|&v| Ok((v, nearest_neighbor_oa(data, param.apply(base, v))?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let r = evaluate(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(r.oa, 100.0);
        assert_eq!(r.aa, 100.0);
        assert_eq!(r.confusion.trace(), 4);
        assert_eq!(r.confusion.get(1, 1), 2);
    }

    #[test]
    fn two_class_hand_count() {
        let r = evaluate(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(r.oa, 75.0);
        assert_eq!(r.producer_acc, vec![Some(50.0), Some(100.0)]);
        assert_eq!(r.aa, 75.0);
        assert_eq!(r.confusion.counts, vec![1, 1, 0, 2]);
    }

    #[test]
    fn absent_class_is_excluded_from_aa() {
        let r = evaluate(&[0, 2, 0], &[0, 0, 1], 3).unwrap();
        assert_eq!(r.producer_acc[2], None);
        assert_eq!(r.aa, 25.0); // (50 + 0) / 2
        assert!(report_text(&r, &["a".into(), "b".into(), "c".into()]).contains("producer_acc.c = NA"));
    }

    #[test]
    fn bad_inputs() {
        assert!(evaluate(&[], &[], 2).is_err());
        assert!(evaluate(&[0], &[0, 1], 2).is_err());
        assert!(matches!(evaluate(&[2], &[0], 2), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn single_report_average_is_itself() {
        let r = evaluate(&[0, 1, 1], &[0, 0, 1], 2).unwrap();
        let a = average_reports(std::slice::from_ref(&r)).unwrap();
        assert_eq!(a.oa.mean, r.oa);
        assert_eq!(a.oa.std, 0.0);
        assert_eq!(a.confusion, r.confusion.row_normalized());
    }

    #[test]
    fn two_report_mean_and_sample_std() {
        let r1 = evaluate(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap(); // OA 75
        let r2 = evaluate(&[0, 0, 1, 1], &[0, 0, 1, 1], 2).unwrap(); // OA 100
        let a = average_reports(&[r1, r2]).unwrap();
        assert_eq!(a.oa.mean, 87.5);
        // sqrt(((75-87.5)^2 + (100-87.5)^2) / 1) = 12.5 * sqrt(2)
        assert!((a.oa.std - 12.5 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(a.confusion[0], Some(vec![75.0, 25.0]));
    }

    #[test]
    fn csv_shapes() {
        let r = evaluate(&[0, 1], &[0, 1], 2).unwrap();
        let csv = report_csv(&r);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), 3 + 2 + 4);
        assert_eq!(lines[1].split(',').count(), 3 + 2 + 4);
        let conf = confusion_csv(&r.confusion.row_normalized(), &["a".into(), "b".into()]);
        assert_eq!(conf.lines().next().unwrap(), "truth,a,b");
    }
}
