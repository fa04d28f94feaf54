//! Command-line front end. Every command writes into `--out` and echoes its
//! resolved configuration to `config.txt` there.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::dataset::{load_manifest, write_dataset, DatasetManifest};
use crate::embedding::{fit_embedding_on_split, EmbeddingModel};
use crate::error::{Error, Result};
use crate::eval::{confusion_csv, evaluate, report_csv, report_text, sensitivity_sweep, SweepParam};
use crate::fusion::{train, FusionModel};
use crate::pipeline::{
    evaluate_predictions, index_on_split, predict_missing_test, predict_test, predictions_tsv,
    read_predictions, retrieval_data, PredictedObject, Retrieval,
};
use crate::retrieval::label_coherence_curve;
use crate::split::{stratified_split, SplitAssignment};
use crate::synth::generate;

#[derive(Debug, Parser)]
#[command(name = "urban-fusion", version, about = "Multimodal urban-object classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(Opts),
    /// Stratified train/test split.
    Split(Opts),
    /// Train a fusion head.
    Train(Opts),
    /// Evaluate a model or a predictions file on the test split.
    Eval(Opts),
    /// Fit the three-view CCA embedding.
    FitEmbedding(Opts),
    /// Retrieve nearest training objects for test overhead features.
    Retrieve(Opts),
    /// Predict test objects, routing objects without ground views through retrieval.
    Predict(Opts),
    /// Predict every test object from its overhead feature and retrieved ground features.
    PredictMissing(Opts),
    /// Nearest-neighbor retrieval accuracy over values of one CCA hyperparameter.
    Sweep(Opts),
}

impl Command {
    fn name_and_opts(&self) -> (&'static str, &Opts) {
        match self {
            Command::Synth(o) => ("synth", o),
            Command::Split(o) => ("split", o),
            Command::Train(o) => ("train", o),
            Command::Eval(o) => ("eval", o),
            Command::FitEmbedding(o) => ("fit-embedding", o),
            Command::Retrieve(o) => ("retrieve", o),
            Command::Predict(o) => ("predict", o),
            Command::PredictMissing(o) => ("predict-missing", o),
            Command::Sweep(o) => ("sweep", o),
        }
    }
}

#[derive(Debug, Args, Default)]
pub struct Opts {
    /// `key = value` config file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Class vocabulary (default: vocab.txt next to the manifest).
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub embedding: Option<PathBuf>,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// overhead | ground | multimodal
    #[arg(long)]
    pub mode: Option<String>,
    /// avg | max
    #[arg(long)]
    pub pooling: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub pca_frac: Option<f64>,
    #[arg(long)]
    pub demb_frac: Option<f64>,
    #[arg(long)]
    pub power: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Swept hyperparameter: pca-frac | demb-frac | power
    #[arg(long)]
    pub param: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long)]
    pub values: Option<String>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub d_gsv: Option<usize>,
    #[arg(long)]
    pub d_oh: Option<usize>,
    /// Fraction of synthetic objects without ground views.
    #[arg(long)]
    pub missing: Option<f64>,
}

/// Defaults, then the config file, then flags.
pub fn resolve(command: &str, opts: &Opts) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &opts.config {
        cfg.load_into(path)?;
    }
    cfg.command = command.to_owned();
    let paths = [
        (&opts.manifest, &mut cfg.manifest),
        (&opts.vocab, &mut cfg.vocab),
        (&opts.split, &mut cfg.split),
        (&opts.model, &mut cfg.model),
        (&opts.embedding, &mut cfg.embedding),
        (&opts.predictions, &mut cfg.predictions),
        (&opts.out, &mut cfg.out),
    ];
    for (flag, slot) in paths {
        if let Some(p) = flag {
            *slot = Some(p.clone());
        }
    }
    let mut set = |key: &str, v: Option<String>| v.map_or(Ok(()), |v| cfg.set(key, &v));
    set("seed", opts.seed.map(|v| v.to_string()))?;
    set("mode", opts.mode.clone())?;
    set("pooling", opts.pooling.clone())?;
    set("epochs", opts.epochs.map(|v| v.to_string()))?;
    set("lr", opts.lr.map(|v| v.to_string()))?;
    set("batch", opts.batch.map(|v| v.to_string()))?;
    set("momentum", opts.momentum.map(|v| v.to_string()))?;
    set("pca_frac", opts.pca_frac.map(|v| v.to_string()))?;
    set("demb_frac", opts.demb_frac.map(|v| v.to_string()))?;
    set("power", opts.power.map(|v| v.to_string()))?;
    set("eta", opts.eta.map(|v| v.to_string()))?;
    set("k", opts.k.map(|v| v.to_string()))?;
    set("train_fraction", opts.train_fraction.map(|v| v.to_string()))?;
    set("sweep_param", opts.param.clone())?;
    set("sweep_values", opts.values.clone())?;
    set("synth_classes", opts.classes.map(|v| v.to_string()))?;
    set("synth_per_class", opts.per_class.map(|v| v.to_string()))?;
    set("synth_d_gsv", opts.d_gsv.map(|v| v.to_string()))?;
    set("synth_d_oh", opts.d_oh.map(|v| v.to_string()))?;
    set("synth_missing", opts.missing.map(|v| v.to_string()))?;
    Ok(cfg)
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::invalid(format!("missing required --{flag}")))
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

fn load_dataset(cfg: &RunConfig) -> Result<DatasetManifest> {
    let manifest = required(&cfg.manifest, "manifest")?;
    let vocab = match &cfg.vocab {
        Some(v) => v.clone(),
        None => manifest
            .parent()
            .unwrap_or(Path::new("."))
            .join("vocab.txt"),
    };
    load_manifest(manifest, &vocab)
}

fn load_split(cfg: &RunConfig) -> Result<SplitAssignment> {
    SplitAssignment::load(required(&cfg.split, "split")?)
}

fn write_report(out: &Path, preds: &[PredictedObject], ds: &DatasetManifest) -> Result<String> {
    let report = evaluate_predictions(preds, ds.num_classes())?;
    let names = ds.vocabulary.names();
    write(out.join("predictions.tsv"), predictions_tsv(preds, names))?;
    write(out.join("report.csv"), report_csv(&report))?;
    write(out.join("confusion.csv"), confusion_csv(&report.confusion.row_normalized(), names))?;
    let text = report_text(&report, names);
    write(out.join("report.txt"), &text)?;
    Ok(text)
}

/// Run one parsed command; returns the text to print on success.
pub fn execute(cli: &Cli) -> Result<String> {
    let (name, opts) = cli.command.name_and_opts();
    let cfg = resolve(name, opts)?;
    let out = required(&cfg.out, "out")?.to_path_buf();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write(out.join("config.txt"), cfg.to_text())?;

    match &cli.command {
        Command::Synth(_) => {
            let ds = generate(&cfg.synth_config())?;
            let (m, _) = write_dataset(&ds, &out)?;
            Ok(format!("wrote {} objects to {}\n", ds.records.len(), m.display()))
        }
        Command::Split(_) => {
            let ds = load_dataset(&cfg)?;
            let split = stratified_split(&ds, cfg.seed, cfg.train_fraction)?;
            split.save(&out.join("split.tsv"))?;
            Ok(format!(
                "train = {}\ntest = {}\n",
                split.count(crate::split::Subset::Train),
                split.count(crate::split::Subset::Test)
            ))
        }
        Command::Train(_) => {
            let ds = load_dataset(&cfg)?;
            let split = load_split(&cfg)?;
            let init = FusionModel::init(cfg.mode, ds.num_classes(), ds.d_oh, ds.d_gsv, cfg.seed)?;
            let (model, trace) = train(&init, &ds, &split, &cfg.train_config(), cfg.pooling)?;
            model.save(&out.join("model.mmck"))?;
            let mut csv = String::from("epoch,lr,loss\n");
            let tc = cfg.train_config();
            for (e, l) in trace.iter().enumerate() {
                csv.push_str(&format!("{e},{:e},{l:.10}\n", tc.learning_rate(e)));
            }
            write(out.join("trace.csv"), csv)?;
            Ok(format!(
                "final_loss = {}\n",
                trace.last().map_or("NA".into(), |l| format!("{l:.6}"))
            ))
        }
        Command::Eval(_) => {
            let ds = load_dataset(&cfg)?;
            if let Some(p) = &cfg.predictions {
                let pairs = read_predictions(p)?;
                let mut preds = Vec::with_capacity(pairs.len());
                let mut truths = Vec::with_capacity(pairs.len());
                for (id, class) in pairs {
                    let r = ds
                        .record(&id)
                        .ok_or_else(|| Error::invalid(format!("unknown object {id:?}")))?;
                    let c = ds
                        .vocabulary
                        .index_of(&class)
                        .ok_or_else(|| Error::invalid(format!("unknown class {class:?}")))?;
                    preds.push(c);
                    truths.push(r.label);
                }
                let report = evaluate(&preds, &truths, ds.num_classes())?;
                let names = ds.vocabulary.names();
                write(out.join("report.csv"), report_csv(&report))?;
                write(
                    out.join("confusion.csv"),
                    confusion_csv(&report.confusion.row_normalized(), names),
                )?;
                let text = report_text(&report, names);
                write(out.join("report.txt"), &text)?;
                Ok(text)
            } else {
                let split = load_split(&cfg)?;
                let model = FusionModel::load(required(&cfg.model, "model")?)?;
                let preds = predict_test(&model, &ds, &split, cfg.pooling, None)?;
                write_report(&out, &preds, &ds)
            }
        }
        Command::FitEmbedding(_) => {
            let ds = load_dataset(&cfg)?;
            let split = load_split(&cfg)?;
            let emb = fit_embedding_on_split(&ds, &split, cfg.pooling, cfg.cca_hyperparams())?;
            emb.save(&out.join("embedding.mmck"))?;
            Ok(format!(
                "d_gsv_kept = {}\nd_oh_kept = {}\nd_emb = {}\ntop_eigenvalue = {:.6}\n",
                emb.pca_gsv.d_kept(),
                emb.pca_oh.d_kept(),
                emb.d_emb(),
                emb.eigenvalues[0]
            ))
        }
        Command::Retrieve(_) => {
            let ds = load_dataset(&cfg)?;
            let split = load_split(&cfg)?;
            let emb = EmbeddingModel::load(required(&cfg.embedding, "embedding")?)?;
            let index = index_on_split(&emb, &ds, &split, cfg.pooling, cfg.power)?;
            let data = retrieval_data(&ds, &split, cfg.pooling)?;
            let queries = index.project_queries(&emb, &data.test_overhead)?;
            let test_ids: Vec<&str> = ds
                .records
                .iter()
                .filter(|r| split.is_test(&r.object_id))
                .map(|r| r.object_id.as_str())
                .collect();
            let names = ds.vocabulary.names();
            let mut tsv = String::from("object_id\trank\tretrieved\tlabel\tsimilarity\n");
            for (q, id) in queries.row_iter().zip(&test_ids) {
                let res = index.rank(&q.into_owned(), cfg.k)?;
                for (rank, n) in res.neighbors.iter().enumerate() {
                    tsv.push_str(&format!(
                        "{id}\t{}\t{}\t{}\t{:.12}\n",
                        rank + 1,
                        n.object_id,
                        names[n.label],
                        n.similarity
                    ));
                }
            }
            write(out.join("retrieval.tsv"), tsv)?;
            let curve = label_coherence_curve(&index, &emb, &data.test_overhead, &data.test_labels, cfg.k)?;
            let mut csv = String::from("k,hit_rate,mean_correct\n");
            for (i, (h, m)) in curve.hit_rate.iter().zip(&curve.mean_correct).enumerate() {
                csv.push_str(&format!("{},{h:.6},{m:.6}\n", i + 1));
            }
            write(out.join("coherence.csv"), &csv)?;
            Ok(csv)
        }
        Command::Predict(_) => {
            let ds = load_dataset(&cfg)?;
            let split = load_split(&cfg)?;
            let model = FusionModel::load(required(&cfg.model, "model")?)?;
            let preds = match &cfg.embedding {
                Some(p) => {
                    let emb = EmbeddingModel::load(p)?;
                    let index = index_on_split(&emb, &ds, &split, cfg.pooling, cfg.power)?;
                    let rt = Retrieval {
                        embedding: &emb,
                        index: &index,
                        k: cfg.k,
                    };
                    predict_test(&model, &ds, &split, cfg.pooling, Some(&rt))?
                }
                None => predict_test(&model, &ds, &split, cfg.pooling, None)?,
            };
            write_report(&out, &preds, &ds)
        }
        Command::PredictMissing(_) => {
            let ds = load_dataset(&cfg)?;
            let split = load_split(&cfg)?;
            let model = FusionModel::load(required(&cfg.model, "model")?)?;
            let emb = EmbeddingModel::load(required(&cfg.embedding, "embedding")?)?;
            let index = index_on_split(&emb, &ds, &split, cfg.pooling, cfg.power)?;
            let rt = Retrieval {
                embedding: &emb,
                index: &index,
                k: cfg.k,
            };
            let preds = predict_missing_test(&model, &ds, &split, &rt, false)?;
            write_report(&out, &preds, &ds)
        }
        Command::Sweep(_) => {
            let ds = load_dataset(&cfg)?;
            let split = load_split(&cfg)?;
            let param: SweepParam = cfg.sweep_param.parse()?;
            let data = retrieval_data(&ds, &split, cfg.pooling)?;
            let results = sensitivity_sweep(&data, param, &cfg.sweep_values, cfg.cca_hyperparams())?;
            let mut csv = format!("{},nn_oa\n", cfg.sweep_param);
            for (v, oa) in results {
                csv.push_str(&format!("{v:?},{oa:.6}\n"));
            }
            write(out.join("sweep.csv"), &csv)?;
            Ok(csv)
        }
    }
}
