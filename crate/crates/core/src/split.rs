//! Per-class stratified train/test assignment.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Subset {
    Train,
    Test,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub seed: u64,
    pub assignment: BTreeMap<String, Subset>,
}

impl SplitAssignment {
    pub fn subset(&self, object_id: &str) -> Option<Subset> {
        self.assignment.get(object_id).copied()
    }

    pub fn is_train(&self, object_id: &str) -> bool {
        self.subset(object_id) == Some(Subset::Train)
    }

    pub fn is_test(&self, object_id: &str) -> bool {
        self.subset(object_id) == Some(Subset::Test)
    }

    pub fn count(&self, subset: Subset) -> usize {
        self.assignment.values().filter(|&&s| s == subset).count()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = format!("# seed = {}\n", self.seed);
        for (id, s) in &self.assignment {
            text.push_str(&format!("{id}\t{}\n", s.as_str()));
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut seed = 0;
        let mut assignment = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    if k.trim() == "seed" {
                        seed = v
                            .trim()
                            .parse()
                            .map_err(|_| err(format!("bad seed {:?}", v.trim())))?;
                    }
                }
                continue;
            }
            let (id, s) = line
                .split_once('\t')
                .ok_or_else(|| err("expected object_id<TAB>subset".into()))?;
            let subset = match s.trim() {
                "train" => Subset::Train,
                "test" => Subset::Test,
                other => return Err(err(format!("unknown subset {other:?}"))),
            };
            if assignment.insert(id.to_owned(), subset).is_some() {
                return Err(Error::DuplicateId(id.to_owned()));
            }
        }
        Ok(SplitAssignment { seed, assignment })
    }
}

/// Number of training objects for a class of `n` objects: `floor(fraction * n)`, at least 1.
pub fn train_count(n: usize, fraction: f64) -> usize {
    (((fraction * n as f64) + 1e-9).floor() as usize).max(1)
}

/// Randomly pick `train_fraction` of the objects of every class for training.
///
/// Objects are grouped by class in manifest order and each group is shuffled
/// with a ChaCha8 stream seeded from `seed`, so the assignment depends only on
/// `(manifest, seed, train_fraction)`.
pub fn stratified_split(
    manifest: &DatasetManifest,
    seed: u64,
    train_fraction: f64,
) -> Result<SplitAssignment> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let k = manifest.num_classes();
    let mut by_class: Vec<Vec<&str>> = vec![Vec::new(); k];
    for r in &manifest.records {
        by_class[r.label].push(&r.object_id);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::ClassTooSmall {
                class: manifest.vocabulary.name(c).unwrap_or("?").to_owned(),
                count: members.len(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    for mut members in by_class {
        let n_train = train_count(members.len(), train_fraction);
        members.shuffle(&mut rng);
        for (i, id) in members.into_iter().enumerate() {
            let s = if i < n_train {
                Subset::Train
            } else {
                Subset::Test
            };
            assignment.insert(id.to_owned(), s);
        }
    }
    Ok(SplitAssignment { seed, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureVector, LabelVocabulary, UrbanObjectRecord};

    fn manifest(counts: &[usize]) -> DatasetManifest {
        let vocab =
            LabelVocabulary::new((0..counts.len()).map(|c| format!("c{c}")).collect()).unwrap();
        let mut records = Vec::new();
        for (label, &n) in counts.iter().enumerate() {
            for i in 0..n {
                records.push(UrbanObjectRecord {
                    object_id: format!("o{label}_{i}"),
                    label,
                    overhead: FeatureVector::new(vec![i as f32]).unwrap(),
                    ground_views: vec![],
                });
            }
        }
        DatasetManifest::from_records(vocab, records).unwrap()
    }

    fn train_of_class(m: &DatasetManifest, s: &SplitAssignment, c: usize) -> usize {
        m.records
            .iter()
            .filter(|r| r.label == c && s.is_train(&r.object_id))
            .count()
    }

    #[test]
    fn ten_objects_give_eight_train() {
        let m = manifest(&[10, 2]);
        let s = stratified_split(&m, 3, 0.8).unwrap();
        assert_eq!(train_of_class(&m, &s, 0), 8);
        assert_eq!(train_of_class(&m, &s, 1), 1);
        assert_eq!(s.count(Subset::Test), 2 + 1);
    }

    #[test]
    fn same_seed_same_split() {
        let m = manifest(&[13, 7, 5]);
        assert_eq!(
            stratified_split(&m, 42, 0.8).unwrap(),
            stratified_split(&m, 42, 0.8).unwrap()
        );
        assert_ne!(
            stratified_split(&m, 42, 0.8).unwrap().assignment,
            stratified_split(&m, 43, 0.8).unwrap().assignment
        );
    }

    #[test]
    fn singleton_class_refused() {
        let m = manifest(&[5, 1]);
        match stratified_split(&m, 0, 0.8) {
            Err(Error::ClassTooSmall { class, count }) => {
                assert_eq!(class, "c1");
                assert_eq!(count, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_file_round_trip() {
        let m = manifest(&[6, 4]);
        let s = stratified_split(&m, 9, 0.8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("split.tsv");
        s.save(&p).unwrap();
        assert_eq!(SplitAssignment::load(&p).unwrap(), s);
    }
}
