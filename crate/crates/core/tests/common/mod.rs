#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use urban_fusion::oracle::Dense;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_dense(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Dense {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn to_matrix(d: &Dense) -> nalgebra::DMatrix<f64> {
    let cols = d.first().map_or(0, Vec::len);
    nalgebra::DMatrix::from_fn(d.len(), cols, |i, j| d[i][j])
}

pub fn to_dense(m: &nalgebra::DMatrix<f64>) -> Dense {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Run the CLI binary in `dir`; panics with stderr on failure.
pub fn run_cli(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_urban-fusion"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn cli");
    assert!(
        out.status.success(),
        "urban-fusion {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Small synthetic end-to-end run: returns the sequence of commands used.
pub fn pipeline_commands() -> Vec<Vec<&'static str>> {
    let common = ["--manifest", "data/manifest.tsv", "--split", "split/split.tsv"];
    let mut cmds: Vec<Vec<&'static str>> = vec![
        vec!["synth", "--out", "data", "--seed", "3", "--classes", "4", "--per-class", "12", "--d-gsv", "16", "--d-oh", "12", "--missing", "0.1"],
        vec!["split", "--manifest", "data/manifest.tsv", "--out", "split", "--seed", "3"],
    ];
    for (mode, dir) in [("overhead", "train_oh"), ("ground", "train_gr"), ("multimodal", "train_mm")] {
        let mut c = vec!["train", "--mode", mode, "--out", dir, "--seed", "3", "--epochs", "8"];
        c.extend(common);
        cmds.push(c);
    }
    let tail: [&[&'static str]; 6] = [
        &["eval", "--model", "train_mm/model.mmck", "--out", "eval_mm"],
        &["fit-embedding", "--out", "emb", "--pca-frac", "0.5", "--demb-frac", "0.3"],
        &["retrieve", "--embedding", "emb/embedding.mmck", "--k", "3", "--out", "retr"],
        &["predict", "--model", "train_mm/model.mmck", "--embedding", "emb/embedding.mmck", "--out", "pred"],
        &["predict-missing", "--model", "train_mm/model.mmck", "--embedding", "emb/embedding.mmck", "--out", "pm"],
        &["sweep", "--param", "power", "--values", "0,2,6", "--pca-frac", "0.5", "--out", "sweep"],
    ];
    for t in tail {
        let mut c = t.to_vec();
        c.extend(common);
        cmds.push(c);
    }
    cmds
}

/// Every regular file below `dir`, as sorted relative paths with their bytes.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
