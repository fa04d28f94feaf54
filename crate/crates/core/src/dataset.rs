//! On-disk dataset formats and the in-memory multimodal dataset.
//!
//! Feature files (`MMLU`) are little-endian binary:
//!
//! ```text
//! magic "MMLU" | u32 version = 1 | u32 dim | u32 count | count * dim f32 (row-major)
//! ```
//!
//! A manifest is UTF-8 text with one tab-separated record per line:
//! `object_id  class_name  overhead_path  ground_path[;ground_path...]`.
//! An empty fourth field marks an object without ground views. Paths are
//! resolved relative to the manifest's directory. Lines starting with `#`
//! are comments, except `# d_oh = N` and `# d_gsv = N` which declare the
//! expected feature dimensions. The class vocabulary lives in a separate
//! file with one class name per line.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"MMLU";
pub const FEATURE_VERSION: u32 = 1;
const FEATURE_HEADER_LEN: usize = 16;

/// One feature activation vector as produced by an external extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f32>);

impl FeatureVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("feature vector must have dimension >= 1"));
        }
        if let Some(component) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index: 0,
                component,
            });
        }
        Ok(FeatureVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }
}

/// Encode vectors into the `MMLU` byte layout.
pub fn encode_features(vectors: &[FeatureVector]) -> Result<Vec<u8>> {
    let dim = vectors
        .first()
        .map(FeatureVector::dim)
        .ok_or_else(|| Error::invalid("cannot write an empty feature file"))?;
    let mut buf = Vec::with_capacity(FEATURE_HEADER_LEN + vectors.len() * dim * 4);
    buf.extend_from_slice(&FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(vectors.len() as u32).to_le_bytes());
    for (i, v) in vectors.iter().enumerate() {
        if v.dim() != dim {
            return Err(Error::DimMismatch {
                what: format!("feature vector {i}"),
                found: v.dim(),
                expected: dim,
            });
        }
        for x in v.values() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(buf)
}

/// Decode an `MMLU` buffer. `path` is only used in error messages.
pub fn decode_features(bytes: &[u8], path: &Path) -> Result<Vec<FeatureVector>> {
    if bytes.len() < FEATURE_HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("header needs {FEATURE_HEADER_LEN} bytes, got {}", bytes.len()),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != FEATURE_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic,
            expected: FEATURE_MAGIC,
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != FEATURE_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    let dim = word(8) as usize;
    let count = word(12) as usize;
    if dim == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "feature dimension 0".into(),
        });
    }
    let expected = dim
        .checked_mul(count)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::invalid("feature file header overflows"))?;
    let payload = &bytes[FEATURE_HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("payload has {} bytes, header implies {expected}", payload.len()),
        });
    }
    let mut out = Vec::with_capacity(count);
    for (index, row) in payload.chunks_exact(dim * 4).enumerate() {
        let values: Vec<f32> = row
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(component) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index, component });
        }
        out.push(FeatureVector(values));
    }
    Ok(out)
}

pub fn write_feature_file(vectors: &[FeatureVector], path: &Path) -> Result<()> {
    let bytes = encode_features(vectors)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: &Path) -> Result<Vec<FeatureVector>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}

/// Ordered class names; a label is the index of its name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocabulary {
    names: Vec<String>,
}

impl LabelVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::invalid(format!(
                "vocabulary needs at least 2 classes, got {}",
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() || n.contains('\t') {
                return Err(Error::invalid(format!("invalid class name {n:?}")));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::invalid(format!("duplicate class name {n:?}")));
            }
        }
        Ok(LabelVocabulary { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, label: usize) -> Option<&str> {
        self.names.get(label).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let names = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect();
        Self::new(names)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.names.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// One urban-object: an overhead feature plus zero or more ground-view features.
#[derive(Debug, Clone, PartialEq)]
pub struct UrbanObjectRecord {
    pub object_id: String,
    pub label: usize,
    pub overhead: FeatureVector,
    pub ground_views: Vec<FeatureVector>,
}

impl UrbanObjectRecord {
    pub fn has_ground(&self) -> bool {
        !self.ground_views.is_empty()
    }
}

/// A fully loaded and validated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub vocabulary: LabelVocabulary,
    pub records: Vec<UrbanObjectRecord>,
    /// Overhead feature dimension.
    pub d_oh: usize,
    /// Ground-view feature dimension; 0 when no object has ground views.
    pub d_gsv: usize,
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn record(&self, object_id: &str) -> Option<&UrbanObjectRecord> {
        self.records.iter().find(|r| r.object_id == object_id)
    }

    /// Validates ids, labels and dimensions of an in-memory dataset.
    pub fn from_records(
        vocabulary: LabelVocabulary,
        records: Vec<UrbanObjectRecord>,
    ) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::invalid("dataset has no records"))?;
        let d_oh = first.overhead.dim();
        let d_gsv = records
            .iter()
            .find_map(|r| r.ground_views.first().map(FeatureVector::dim))
            .unwrap_or(0);
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.object_id.as_str()) {
                return Err(Error::DuplicateId(r.object_id.clone()));
            }
            if r.label >= vocabulary.len() {
                return Err(Error::LabelOutOfRange {
                    label: r.label,
                    classes: vocabulary.len(),
                });
            }
            check_record_dims(r, d_oh, d_gsv)?;
        }
        Ok(DatasetManifest {
            vocabulary,
            records,
            d_oh,
            d_gsv,
        })
    }
}

fn check_record_dims(r: &UrbanObjectRecord, d_oh: usize, d_gsv: usize) -> Result<()> {
    if r.overhead.dim() != d_oh {
        return Err(Error::ObjectDimMismatch {
            object_id: r.object_id.clone(),
            what: "overhead",
            found: r.overhead.dim(),
            expected: d_oh,
        });
    }
    if let Some(g) = r.ground_views.iter().find(|g| g.dim() != d_gsv) {
        return Err(Error::ObjectDimMismatch {
            object_id: r.object_id.clone(),
            what: "ground-view",
            found: g.dim(),
            expected: d_gsv,
        });
    }
    Ok(())
}

fn parse_dim_directive(line: &str) -> Option<(&str, &str)> {
    let body = line.strip_prefix('#')?.trim();
    let (key, value) = body.split_once('=')?;
    let key = key.trim();
    matches!(key, "d_oh" | "d_gsv").then(|| (key, value.trim()))
}

/// Load and validate a manifest plus its vocabulary, reading every referenced feature file.
pub fn load_manifest(manifest_path: &Path, vocab_path: &Path) -> Result<DatasetManifest> {
    let vocabulary = LabelVocabulary::load(vocab_path)?;
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let parse_err = |line: usize, message: String| Error::Parse {
        path: manifest_path.to_path_buf(),
        line,
        message,
    };

    let mut declared_oh: Option<usize> = None;
    let mut declared_gsv: Option<usize> = None;
    let mut records = Vec::new();
    let mut seen = HashSet::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some((key, value)) = parse_dim_directive(line) {
                let d: usize = value
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad dimension {value:?}")))?;
                if key == "d_oh" {
                    declared_oh = Some(d);
                } else {
                    declared_gsv = Some(d);
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                lineno,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let object_id = fields[0];
        if object_id.is_empty() {
            return Err(parse_err(lineno, "empty object id".into()));
        }
        let label = vocabulary
            .index_of(fields[1])
            .ok_or_else(|| Error::UnknownLabel {
                path: manifest_path.to_path_buf(),
                line: lineno,
                label: fields[1].to_owned(),
            })?;
        if !seen.insert(object_id.to_owned()) {
            return Err(Error::DuplicateId(object_id.to_owned()));
        }
        if fields[2].is_empty() {
            return Err(parse_err(lineno, "empty overhead feature path".into()));
        }
        let mut overhead = read_feature_file(&resolve(fields[2]))?;
        if overhead.len() != 1 {
            return Err(parse_err(
                lineno,
                format!("overhead file must hold exactly 1 vector, found {}", overhead.len()),
            ));
        }
        let overhead = overhead.pop().unwrap();
        let mut ground_views = Vec::new();
        if !fields[3].is_empty() {
            for p in fields[3].split(';') {
                if p.is_empty() {
                    return Err(parse_err(lineno, "empty ground-view path".into()));
                }
                ground_views.extend(read_feature_file(&resolve(p))?);
            }
        }
        let record = UrbanObjectRecord {
            object_id: object_id.to_owned(),
            label,
            overhead,
            ground_views,
        };
        let d_oh = *declared_oh.get_or_insert(record.overhead.dim());
        let d_gsv = match (declared_gsv, record.ground_views.first()) {
            (Some(d), _) => d,
            (None, Some(g)) => *declared_gsv.insert(g.dim()),
            (None, None) => 0,
        };
        check_record_dims(&record, d_oh, d_gsv)?;
        records.push(record);
    }

    if records.is_empty() {
        return Err(parse_err(0, "manifest has no records".into()));
    }
    Ok(DatasetManifest {
        vocabulary,
        records,
        d_oh: declared_oh.unwrap_or(0),
        d_gsv: declared_gsv.unwrap_or(0),
    })
}

/// Write a dataset as a manifest, vocabulary and one feature file per modality per object.
///
/// Feature files go to `<dir>/features/<object_id>.oh.mmlu` and
/// `<dir>/features/<object_id>.gsv.mmlu`.
pub fn write_dataset(dataset: &DatasetManifest, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let feat_dir = dir.join("features");
    fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let manifest_path = dir.join("manifest.tsv");
    let vocab_path = dir.join("vocab.txt");
    dataset.vocabulary.save(&vocab_path)?;

    let mut text = String::new();
    text.push_str(&format!("# d_oh = {}\n", dataset.d_oh));
    text.push_str(&format!("# d_gsv = {}\n", dataset.d_gsv));
    for r in &dataset.records {
        let oh_rel = format!("features/{}.oh.mmlu", r.object_id);
        write_feature_file(std::slice::from_ref(&r.overhead), &dir.join(&oh_rel))?;
        let gsv_rel = if r.has_ground() {
            let rel = format!("features/{}.gsv.mmlu", r.object_id);
            write_feature_file(&r.ground_views, &dir.join(&rel))?;
            rel
        } else {
            String::new()
        };
        let class = dataset.vocabulary.name(r.label).unwrap();
        text.push_str(&format!("{}\t{}\t{}\t{}\n", r.object_id, class, oh_rel, gsv_rel));
    }
    let mut f = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| Error::io(&manifest_path, e))?;
    Ok((manifest_path, vocab_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f32]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn single_vector_file_layout() {
        let bytes = encode_features(&[fv(&[1.0, 2.0, 3.0, 4.0])]).unwrap();
        assert_eq!(bytes.len(), 16 + 16);
        assert_eq!(&bytes[0..4], b"MMLU");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 1);
        assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), 1.0);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = encode_features(&[fv(&[1.0])]).unwrap();
        bytes[0..4].copy_from_slice(b"XXXX");
        let err = decode_features(&bytes, Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::BadMagic { .. }), "{err}");
    }

    #[test]
    fn truncated_payload_rejected() {
        let bytes = encode_features(&[fv(&[1.0, 2.0])]).unwrap();
        let err = decode_features(&bytes[..bytes.len() - 1], Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Truncated { .. }));
        let err = decode_features(&bytes[..10], Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Truncated { .. }));
    }

    #[test]
    fn non_finite_rejected() {
        let mut bytes = encode_features(&[fv(&[1.0, 2.0]), fv(&[3.0, 4.0])]).unwrap();
        bytes[28..32].copy_from_slice(&f32::NAN.to_le_bytes());
        let err = decode_features(&bytes, Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, component: 1 }));
        assert!(FeatureVector::new(vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn mixed_dims_refused_on_write() {
        assert!(encode_features(&[fv(&[1.0]), fv(&[1.0, 2.0])]).is_err());
        assert!(encode_features(&[]).is_err());
    }

    #[test]
    fn vocabulary_rules() {
        assert!(LabelVocabulary::new(vec!["a".into()]).is_err());
        assert!(LabelVocabulary::new(vec!["a".into(), "a".into()]).is_err());
        let v = LabelVocabulary::new(vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(v.index_of("b"), Some(1));
        assert_eq!(v.index_of("c"), None);
    }
}
