//! Label ⇄ hypervector mapping.
//!
//! Each label's vector is drawn from its own sub-stream keyed by
//! `(seed, label)`, so a codebook is a pure function of the label set and
//! adding labels never changes the vectors of existing ones. The reverse
//! map is nearest-neighbour decoding, since queries produce noisy counts
//! rather than exact keys.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::hdvec::{Accumulator, Hypervector};
use crate::seed::{substream, CODEBOOK};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    entries: BTreeMap<String, Hypervector>,
    dim: usize,
    seed: u64,
}

/// Outcome of [`Codebook::decode_nearest`].
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub label: String,
    pub similarity: f64,
    pub scores: BTreeMap<String, f64>,
}

impl Codebook {
    pub fn build<I, S>(labels: I, dim: usize, seed: u64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let mut entries = BTreeMap::new();
        for label in labels {
            let label = label.into();
            if label.is_empty() {
                return Err(Error::InvalidConfig("state labels must be non-empty".into()));
            }
            if entries.contains_key(&label) {
                return Err(Error::DuplicateLabel(label));
            }
            let v = Hypervector::random(dim, &mut substream(seed, CODEBOOK, label.as_bytes()))?;
            entries.insert(label, v);
        }
        if entries.is_empty() {
            return Err(Error::EmptyCodebook);
        }
        let cb = Self { entries, dim, seed };
        cb.check_injective()?;
        Ok(cb)
    }

    /// Reassembles a codebook from stored vectors (used when loading models).
    pub fn from_entries(entries: BTreeMap<String, Hypervector>, dim: usize, seed: u64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyCodebook);
        }
        for v in entries.values() {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.dim(),
                });
            }
        }
        let cb = Self { entries, dim, seed };
        cb.check_injective()?;
        Ok(cb)
    }

    fn check_injective(&self) -> Result<()> {
        let mut seen: HashMap<&Hypervector, &str> = HashMap::new();
        for (label, v) in &self.entries {
            if let Some(prev) = seen.insert(v, label) {
                return Err(Error::CodebookCollision(prev.to_owned(), label.clone()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.entries.contains_key(label)
    }

    /// Labels in ascending order.
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Hypervector)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn lookup(&self, label: &str) -> Result<&Hypervector> {
        self.entries.get(label).ok_or_else(|| Error::UnknownLabel {
            label: label.to_owned(),
            position: None,
        })
    }

    /// Label list as a JSON array, for tooling.
    pub fn labels_json(&self) -> String {
        serde_json::to_string(&self.entries.keys().collect::<Vec<_>>()).expect("strings serialize")
    }

    /// Returns the label whose vector is most cosine-similar to `r`, with
    /// the full score table. Exact ties go to the lexicographically smallest
    /// label.
    pub fn decode_nearest(&self, r: &Accumulator) -> Result<Decoded> {
        if self.entries.is_empty() {
            return Err(Error::EmptyCodebook);
        }
        if r.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: r.dim(),
            });
        }
        let norm_sq = r.norm_sq();
        let mut scores = BTreeMap::new();
        let mut best: Option<(&str, f64)> = None;
        for (label, v) in &self.entries {
            let s = r.cosine_with_norm(v, norm_sq)?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((label, s));
            }
            scores.insert(label.clone(), s);
        }
        let (label, similarity) = best.expect("codebook is non-empty");
        Ok(Decoded {
            label: label.to_owned(),
            similarity,
            scores,
        })
    }
}
