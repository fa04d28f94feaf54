//! Resolved run configuration and its `key = value` text form.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::aggregate::Pooling;
use crate::embedding::CcaHyperparams;
use crate::error::{Error, Result};
use crate::fusion::{Mode, TrainConfig};
use crate::split::DEFAULT_TRAIN_FRACTION;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub manifest: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub embedding: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub mode: Mode,
    pub pooling: Pooling,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub momentum: f64,
    pub pca_frac: f64,
    pub demb_frac: f64,
    pub power: f64,
    pub eta: f64,
    pub k: usize,
    pub train_fraction: f64,
    pub sweep_param: String,
    pub sweep_values: Vec<f64>,
    pub synth_classes: usize,
    pub synth_per_class: usize,
    pub synth_d_gsv: usize,
    pub synth_d_oh: usize,
    pub synth_missing: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let cca = CcaHyperparams::default();
        let synth = SynthConfig::default();
        RunConfig {
            command: String::new(),
            manifest: None,
            vocab: None,
            split: None,
            model: None,
            embedding: None,
            predictions: None,
            out: None,
            seed: 0,
            mode: Mode::Multimodal,
            pooling: Pooling::Avg,
            epochs: train.epochs,
            lr: train.lr0,
            batch: train.batch_size,
            momentum: train.momentum,
            pca_frac: cca.pca_frac,
            demb_frac: cca.demb_frac,
            power: cca.power,
            eta: cca.eta,
            k: 1,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            sweep_param: "demb-frac".into(),
            sweep_values: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            synth_classes: synth.num_classes,
            synth_per_class: synth.objects_per_class,
            synth_d_gsv: synth.d_gsv,
            synth_d_oh: synth.d_oh,
            synth_missing: synth.missing_ground_fraction,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value {value:?} for {key}")))
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            lr0: self.lr,
            momentum: self.momentum,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    pub fn cca_hyperparams(&self) -> CcaHyperparams {
        CcaHyperparams {
            pca_frac: self.pca_frac,
            demb_frac: self.demb_frac,
            power: self.power,
            eta: self.eta,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            num_classes: self.synth_classes,
            objects_per_class: self.synth_per_class,
            d_gsv: self.synth_d_gsv,
            d_oh: self.synth_d_oh,
            missing_ground_fraction: self.synth_missing,
            seed: self.seed,
            ..SynthConfig::default()
        }
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let opt_path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "command" => self.command = value.to_owned(),
            "manifest" => self.manifest = opt_path(value),
            "vocab" => self.vocab = opt_path(value),
            "split" => self.split = opt_path(value),
            "model" => self.model = opt_path(value),
            "embedding" => self.embedding = opt_path(value),
            "predictions" => self.predictions = opt_path(value),
            "out" => self.out = opt_path(value),
            "seed" => self.seed = parse(key, value)?,
            "mode" => self.mode = value.parse()?,
            "pooling" => self.pooling = value.parse()?,
            "epochs" => self.epochs = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "pca_frac" => self.pca_frac = parse(key, value)?,
            "demb_frac" => self.demb_frac = parse(key, value)?,
            "power" => self.power = parse(key, value)?,
            "eta" => self.eta = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            "sweep_param" => self.sweep_param = value.to_owned(),
            "sweep_values" => {
                self.sweep_values = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            "synth_classes" => self.synth_classes = parse(key, value)?,
            "synth_per_class" => self.synth_per_class = parse(key, value)?,
            "synth_d_gsv" => self.synth_d_gsv = parse(key, value)?,
            "synth_d_oh" => self.synth_d_oh = parse(key, value)?,
            "synth_missing" => self.synth_missing = parse(key, value)?,
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Overlay settings from `key = value` text; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: "expected key = value".into(),
            })?;
            self.set(k.trim(), v.trim()).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn load_into(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// Every setting, one per line, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("command", self.command.clone());
        kv("manifest", path_text(&self.manifest));
        kv("vocab", path_text(&self.vocab));
        kv("split", path_text(&self.split));
        kv("model", path_text(&self.model));
        kv("embedding", path_text(&self.embedding));
        kv("predictions", path_text(&self.predictions));
        kv("out", path_text(&self.out));
        kv("seed", self.seed.to_string());
        kv("mode", self.mode.to_string());
        kv("pooling", self.pooling.to_string());
        kv("epochs", self.epochs.to_string());
        kv("lr", format!("{:?}", self.lr));
        kv("batch", self.batch.to_string());
        kv("momentum", format!("{:?}", self.momentum));
        kv("pca_frac", format!("{:?}", self.pca_frac));
        kv("demb_frac", format!("{:?}", self.demb_frac));
        kv("power", format!("{:?}", self.power));
        kv("eta", format!("{:?}", self.eta));
        kv("k", self.k.to_string());
        kv("train_fraction", format!("{:?}", self.train_fraction));
        kv("sweep_param", self.sweep_param.clone());
        kv(
            "sweep_values",
            self.sweep_values
                .iter()
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("synth_classes", self.synth_classes.to_string());
        kv("synth_per_class", self.synth_per_class.to_string());
        kv("synth_d_gsv", self.synth_d_gsv.to_string());
        kv("synth_d_oh", self.synth_d_oh.to_string());
        kv("synth_missing", format!("{:?}", self.synth_missing));
        s
    }
}
