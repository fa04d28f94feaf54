//! Pooling of a variable-size set of ground-view features into one descriptor.

use std::fmt;
use std::str::FromStr;

use crate::dataset::FeatureVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// Elementwise mean; the better-performing choice and the default.
    #[default]
    Avg,
    /// Elementwise maximum.
    Max,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Avg => "avg",
            Pooling::Max => "max",
        })
    }
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(Pooling::Avg),
            "max" => Ok(Pooling::Max),
            other => Err(Error::invalid(format!("unknown pooling {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedFeature {
    pub values: Vec<f64>,
    pub pooling: Pooling,
}

impl AggregatedFeature {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Collapse a ground-view set. Accumulation follows the input order.
///
/// An empty set means the ground modality is missing; callers route such
/// objects to retrieval instead.
pub fn aggregate(features: &[FeatureVector], pooling: Pooling) -> Result<AggregatedFeature> {
    let first = features.first().ok_or(Error::MissingGroundViews)?;
    let dim = first.dim();
    if let Some((i, f)) = features.iter().enumerate().find(|(_, f)| f.dim() != dim) {
        return Err(Error::DimMismatch {
            what: format!("ground view {i}"),
            found: f.dim(),
            expected: dim,
        });
    }
    let values = match pooling {
        Pooling::Max => {
            let mut acc = first.to_f64();
            for f in &features[1..] {
                for (a, &x) in acc.iter_mut().zip(f.values()) {
                    *a = a.max(x as f64);
                }
            }
            acc
        }
        Pooling::Avg => {
            let mut acc = vec![0.0f64; dim];
            for f in features {
                for (a, &x) in acc.iter_mut().zip(f.values()) {
                    *a += x as f64;
                }
            }
            let n = features.len() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            acc
        }
    };
    Ok(AggregatedFeature { values, pooling })
}
