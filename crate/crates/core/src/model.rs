//! The sequence model: a base memory trained in one pass over the data, an
//! adaptive memory fed online, and queries that unbind a prefix from the
//! combined memory.

mod persist;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::hdvec::{Accumulator, EntryBits};
use crate::seqencode::{self, encode_query, EncoderConfig, OpCounts};

pub use persist::{FORMAT_VERSION, HEADER_LEN, MAGIC};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub n: usize,
    pub shift: usize,
    pub seed: u64,
    pub adaptive: bool,
    pub adapt_weight: u32,
    pub entry_bits: EntryBits,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 10_000,
            n: 3,
            shift: 4,
            seed: 0,
            adaptive: false,
            adapt_weight: 1,
            entry_bits: EntryBits::B32,
        }
    }
}

impl ModelConfig {
    pub const MIN_DIM: usize = 64;

    pub fn validate(&self) -> Result<EncoderConfig> {
        if self.dim < Self::MIN_DIM || self.dim > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "dimension must be between {} and {}, got {}",
                Self::MIN_DIM,
                u32::MAX,
                self.dim
            )));
        }
        if self.n > usize::from(u8::MAX) || self.shift > usize::from(u8::MAX) {
            return Err(Error::InvalidConfig("n and shift must fit in 8 bits".into()));
        }
        if self.adapt_weight == 0 || self.adapt_weight > i32::MAX as u32 {
            return Err(Error::InvalidConfig(format!(
                "adapt weight must be between 1 and {}, got {}",
                i32::MAX,
                self.adapt_weight
            )));
        }
        EncoderConfig::new(self.n, self.shift, self.dim)
    }
}

/// Exact integer sum of n-gram encodings, before narrowing to the model's
/// entry width. Partial sums over disjoint session sets merge exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramSum {
    acc: Accumulator,
    windows: u64,
    sessions: u64,
    short_sessions: u64,
    ops: OpCounts,
}

impl NgramSum {
    pub fn zeros(dim: usize) -> Result<Self> {
        Ok(Self {
            acc: Accumulator::zeros(dim, EntryBits::B32)?,
            windows: 0,
            sessions: 0,
            short_sessions: 0,
            ops: OpCounts::default(),
        })
    }

    /// Encodes every continuous n-window of every session once, in parallel
    /// over sessions.
    pub fn encode<S, T>(sessions: &[S], cb: &Codebook, cfg: &EncoderConfig) -> Result<Self>
    where
        S: AsRef<[T]> + Sync,
        T: AsRef<str>,
    {
        if cb.dim() != cfg.dim() {
            return Err(Error::DimensionMismatch {
                expected: cfg.dim(),
                actual: cb.dim(),
            });
        }
        let zero = NgramSum::zeros(cfg.dim())?;
        sessions
            .par_iter()
            .try_fold(
                || zero.clone(),
                |mut sum, session| {
                    sum.add_session(session.as_ref(), cb, cfg)?;
                    Ok::<_, Error>(sum)
                },
            )
            .try_reduce(
                || zero.clone(),
                |mut a, b| {
                    a.merge(&b)?;
                    Ok(a)
                },
            )
    }

    pub fn add_session<T: AsRef<str>>(&mut self, session: &[T], cb: &Codebook, cfg: &EncoderConfig) -> Result<()> {
        let acc = &mut self.acc;
        let mut windows = 0;
        let mut bundles = 0;
        let ops = seqencode::for_each_window(session, cb, cfg, |_, g| {
            acc.bundle(g, 1).expect("encoder output matches dimension");
            windows += 1;
            bundles += 1;
        })?;
        self.sessions += 1;
        if windows == 0 {
            self.short_sessions += 1;
        }
        self.windows += windows;
        self.ops.binds += ops.binds;
        self.ops.rotations += ops.rotations;
        self.ops.bundles += bundles;
        Ok(())
    }

    pub fn merge(&mut self, other: &NgramSum) -> Result<()> {
        self.acc.add_assign(&other.acc)?;
        self.windows += other.windows;
        self.sessions += other.sessions;
        self.short_sessions += other.short_sessions;
        self.ops.binds += other.ops.binds;
        self.ops.rotations += other.ops.rotations;
        self.ops.bundles += other.ops.bundles;
        Ok(())
    }

    pub fn accumulator(&self) -> &Accumulator {
        &self.acc
    }

    pub fn stats(&self) -> TrainStats {
        TrainStats {
            windows_encoded: self.windows,
            sessions: self.sessions,
            short_sessions: self.short_sessions,
            ops: self.ops,
        }
    }
}

/// Counters collected while training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrainStats {
    pub windows_encoded: u64,
    pub sessions: u64,
    pub short_sessions: u64,
    /// Sliding-encoder advances plus one bundle per window.
    pub ops: OpCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub predicted: String,
    pub similarity: f64,
    pub scores: BTreeMap<String, f64>,
    pub raw_r: Accumulator,
}

impl QueryResult {
    /// Scores sorted by descending similarity, ties by label.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<_> = self.scores.iter().map(|(k, &s)| (k.as_str(), s)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Model {
    config: ModelConfig,
    encoder: EncoderConfig,
    codebook: Codebook,
    base: Accumulator,
    adaptive: Accumulator,
    train_ngram_count: u64,
    adapt_event_count: u64,
}

impl Model {
    /// Builds the base memory from every n-window of every session.
    pub fn train<S, T>(config: ModelConfig, codebook: Codebook, sessions: &[S]) -> Result<Model>
    where
        S: AsRef<[T]> + Sync,
        T: AsRef<str>,
    {
        Self::train_with_stats(config, codebook, sessions).map(|(m, _)| m)
    }

    pub fn train_with_stats<S, T>(
        config: ModelConfig,
        codebook: Codebook,
        sessions: &[S],
    ) -> Result<(Model, TrainStats)>
    where
        S: AsRef<[T]> + Sync,
        T: AsRef<str>,
    {
        let encoder = config.validate()?;
        let sum = NgramSum::encode(sessions, &codebook, &encoder)?;
        let stats = sum.stats();
        Ok((Self::from_sum(config, codebook, &sum)?, stats))
    }

    /// Builds a model from a precomputed n-gram sum, narrowing the counts
    /// to the configured entry width.
    pub fn from_sum(config: ModelConfig, codebook: Codebook, sum: &NgramSum) -> Result<Model> {
        let encoder = config.validate()?;
        if codebook.dim() != config.dim || sum.acc.dim() != config.dim {
            return Err(Error::DimensionMismatch {
                expected: config.dim,
                actual: if codebook.dim() != config.dim {
                    codebook.dim()
                } else {
                    sum.acc.dim()
                },
            });
        }
        if sum.windows == 0 {
            return Err(Error::EmptyTraining(config.n));
        }
        Ok(Model {
            base: sum.acc.with_bits(config.entry_bits),
            adaptive: Accumulator::zeros(config.dim, config.entry_bits)?,
            train_ngram_count: sum.windows,
            adapt_event_count: 0,
            encoder,
            codebook,
            config,
        })
    }

    /// A model with empty memories; useful for purely adaptive use.
    pub fn untrained(config: ModelConfig, codebook: Codebook) -> Result<Model> {
        let sum = NgramSum::zeros(config.dim)?;
        let encoder = config.validate()?;
        if codebook.dim() != config.dim {
            return Err(Error::DimensionMismatch {
                expected: config.dim,
                actual: codebook.dim(),
            });
        }
        Ok(Model {
            base: sum.acc.with_bits(config.entry_bits),
            adaptive: Accumulator::zeros(config.dim, config.entry_bits)?,
            train_ngram_count: 0,
            adapt_event_count: 0,
            encoder,
            codebook,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encoder(&self) -> &EncoderConfig {
        &self.encoder
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn base(&self) -> &Accumulator {
        &self.base
    }

    pub fn adaptive(&self) -> &Accumulator {
        &self.adaptive
    }

    pub fn train_ngram_count(&self) -> u64 {
        self.train_ngram_count
    }

    pub fn adapt_event_count(&self) -> u64 {
        self.adapt_event_count
    }

    /// The frequency vector for a prefix: combined memory unbound with the
    /// prefix query.
    pub fn query_frequency<T: AsRef<str>>(&self, prefix: &[T]) -> Result<Accumulator> {
        if prefix.len() != self.config.n - 1 {
            return Err(Error::WrongArity {
                expected: self.config.n - 1,
                actual: prefix.len(),
            });
        }
        let vectors = seqencode::resolve_session(prefix, &self.codebook)?;
        let q = encode_query(&vectors, &self.encoder)?;
        let adaptive = (self.adapt_event_count > 0).then_some(&self.adaptive);
        Ok(self.base.sum_bind_b32(adaptive, &q))
    }

    pub fn predict_next<T: AsRef<str>>(&self, prefix: &[T]) -> Result<QueryResult> {
        let raw_r = self.query_frequency(prefix)?;
        let d = self.codebook.decode_nearest(&raw_r)?;
        Ok(QueryResult {
            predicted: d.label,
            similarity: d.similarity,
            scores: d.scores,
            raw_r,
        })
    }

    /// Adds one observed n-gram to the adaptive memory with the configured
    /// weight. Returns the vector operations performed.
    pub fn adapt<T: AsRef<str>>(&mut self, window: &[T]) -> Result<OpCounts> {
        if !self.config.adaptive {
            return Err(Error::AdaptationDisabled);
        }
        if window.len() != self.config.n {
            return Err(Error::WrongArity {
                expected: self.config.n,
                actual: window.len(),
            });
        }
        let vectors = seqencode::resolve_session(window, &self.codebook)?;
        let mut ops = OpCounts::default();
        let g = seqencode::encode_ngram_counted(&vectors, &self.encoder, &mut ops)?;
        self.adaptive.bundle(&g, self.config.adapt_weight)?;
        ops.bundles += 1;
        self.adapt_event_count += 1;
        Ok(ops)
    }

    /// Clears the adaptive memory, keeping the base.
    pub fn reset_adaptive(&mut self) {
        self.adaptive = Accumulator::zeros(self.config.dim, self.config.entry_bits).expect("dimension validated");
        self.adapt_event_count = 0;
    }

    /// Exact size in bytes of this model's file.
    pub fn file_size(&self) -> usize {
        persist::file_size(&self.config, self.codebook.labels())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqencode::encode_ngram;

    fn cfg(dim: usize, n: usize) -> ModelConfig {
        ModelConfig {
            dim,
            n,
            shift: 2,
            seed: 11,
            ..ModelConfig::default()
        }
    }

    fn cb(labels: &[&str], dim: usize, seed: u64) -> Codebook {
        Codebook::build(labels.iter().copied(), dim, seed).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(cfg(63, 3).validate().is_err());
        assert!(cfg(64, 3).validate().is_ok());
        let mut c = cfg(1000, 3);
        c.adapt_weight = 0;
        assert!(c.validate().is_err());
        assert!(cfg(1000, 1).validate().is_err());
    }

    #[test]
    fn single_window_training_equals_encoding() {
        let book = cb(&["a", "b"], 1000, 1);
        let m = Model::train(cfg(1000, 2), book.clone(), &[vec!["a", "b"]]).unwrap();
        let enc = m.encoder;
        let expect = encode_ngram(&[book.lookup("a").unwrap(), book.lookup("b").unwrap()], &enc).unwrap();
        assert_eq!(m.base(), &Accumulator::from_hypervector(&expect, EntryBits::B32));
        assert_eq!(m.train_ngram_count(), 1);
        assert!(m.adaptive().is_zero());
        assert_eq!(m.predict_next(&["a"]).unwrap().predicted, "b");
    }

    #[test]
    fn duplicated_sessions_double_the_memory() {
        let book = cb(&["a", "b", "c"], 512, 2);
        let s = vec!["a", "b", "c", "a", "b"];
        let once = Model::train(cfg(512, 3), book.clone(), std::slice::from_ref(&s)).unwrap();
        let twice = Model::train(cfg(512, 3), book, &[s.clone(), s]).unwrap();
        let doubled: Vec<i32> = once.base().as_slice().iter().map(|e| e * 2).collect();
        assert_eq!(twice.base().as_slice(), &doubled[..]);
    }

    #[test]
    fn training_is_order_independent() {
        let book = cb(&["a", "b", "c", "d"], 256, 3);
        let mut sessions = vec![
            vec!["a", "b", "c", "d"],
            vec!["d", "d", "a"],
            vec!["c", "a", "b", "b", "a"],
            vec!["a"],
        ];
        let mut c = cfg(256, 3);
        c.entry_bits = EntryBits::B8;
        let a = Model::train(c.clone(), book.clone(), &sessions).unwrap();
        sessions.reverse();
        let b = Model::train(c, book, &sessions).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_training_and_unknown_label() {
        let book = cb(&["a", "b"], 128, 0);
        assert!(matches!(
            Model::train(cfg(128, 3), book.clone(), &[vec!["a", "b"]]),
            Err(Error::EmptyTraining(3))
        ));
        assert!(matches!(
            Model::train(cfg(128, 2), book, &[vec!["a", "x"]]),
            Err(Error::UnknownLabel { position: Some(1), .. })
        ));
    }

    #[test]
    fn single_window_query_is_exact() {
        let book = cb(&["a", "b", "c", "d"], 1000, 4);
        let m = Model::train(cfg(1000, 3), book, &[vec!["a", "b", "c"]]).unwrap();
        let r = m.predict_next(&["a", "b"]).unwrap();
        assert_eq!(r.predicted, "c");
        assert_eq!(r.similarity, 1.0);
        assert_eq!(r.scores.len(), 4);
        assert!(matches!(
            m.predict_next(&["a"]),
            Err(Error::WrongArity { expected: 2, actual: 1 })
        ));
        assert!(matches!(m.predict_next(&["a", "q"]), Err(Error::UnknownLabel { .. })));
    }

    #[test]
    fn weighted_continuations_rank_by_count() {
        for seed in 0..20 {
            let labels = ["a", "b", "c", "d", "e", "f"];
            let book = cb(&labels, 10_000, seed);
            let mut sessions = vec![vec!["a", "b", "c"]; 3];
            sessions.push(vec!["a", "b", "d"]);
            let m = Model::train(cfg(10_000, 3), book, &sessions).unwrap();
            let r = m.predict_next(&["a", "b"]).unwrap();
            assert_eq!(r.predicted, "c");
            for other in ["a", "b", "e", "f"] {
                assert!(r.scores["d"] > r.scores[other]);
            }
            assert!(r.scores["c"] > r.scores["d"]);
        }
    }

    #[test]
    fn unseen_prefix_scores_are_noise() {
        let labels = ["a", "b", "c", "x", "y"];
        let book = cb(&labels, 10_000, 8);
        let m = Model::train(cfg(10_000, 3), book, &[vec!["a", "b", "c", "a", "b", "c"]]).unwrap();
        let r = m.predict_next(&["x", "y"]).unwrap();
        assert!(r.scores.values().all(|s| s.abs() < 0.06), "{:?}", r.scores);
    }

    #[test]
    fn majority_recovery() {
        let labels = ["a", "b", "c", "d", "e"];
        let mut wins = 0;
        for seed in 0..20 {
            let book = cb(&labels, 20_000, seed);
            let mut sessions = vec![vec!["a", "b", "c"]; 7];
            sessions.extend(vec![vec!["a", "b", "d"]; 3]);
            sessions.push(vec!["e", "c", "a", "d", "b", "e"]);
            let m = Model::train(cfg(20_000, 3), book, &sessions).unwrap();
            wins += usize::from(m.predict_next(&["a", "b"]).unwrap().predicted == "c");
        }
        assert!(wins >= 19, "{wins}");
    }

    #[test]
    fn adaptation() {
        let labels = ["a", "b", "c", "d", "x", "y"];
        let mut c = cfg(20_000, 3);
        c.adaptive = true;

        let book = cb(&labels, 20_000, 1);
        let mut fresh = Model::untrained(c.clone(), book.clone()).unwrap();
        fresh.adapt(&["a", "b", "c"]).unwrap();
        assert_eq!(fresh.predict_next(&["a", "b"]).unwrap().predicted, "c");
        assert_eq!(fresh.adapt_event_count(), 1);

        let mut m = Model::train(c.clone(), book.clone(), &vec![vec!["a", "b", "c"]; 3]).unwrap();
        let before = m.predict_next(&["x", "y"]).unwrap();
        for _ in 0..4 {
            let ops = m.adapt(&["a", "b", "d"]).unwrap();
            assert_eq!(ops.bundles, 1);
            assert_eq!(ops.binds, 3);
            assert_eq!(ops.rotations, 3);
        }
        assert_eq!(m.predict_next(&["a", "b"]).unwrap().predicted, "d");
        let after = m.predict_next(&["x", "y"]).unwrap();
        for l in labels {
            assert!((after.scores[l] - before.scores[l]).abs() < 0.06);
        }

        m.reset_adaptive();
        assert!(m.adaptive().is_zero());
        assert_eq!(m.adapt_event_count(), 0);
        assert_eq!(m.predict_next(&["a", "b"]).unwrap().predicted, "c");

        let mut off = Model::train(cfg(1000, 3), cb(&labels, 1000, 1), &[vec!["a", "b", "c"]]).unwrap();
        assert!(matches!(off.adapt(&["a", "b", "c"]), Err(Error::AdaptationDisabled)));
        let mut on = Model::untrained(
            ModelConfig {
                adaptive: true,
                ..cfg(1000, 3)
            },
            cb(&labels, 1000, 1),
        )
        .unwrap();
        assert!(matches!(on.adapt(&["a", "b"]), Err(Error::WrongArity { .. })));
    }

    #[test]
    fn prediction_does_not_mutate() {
        let mut c = cfg(1000, 3);
        c.adaptive = true;
        let mut m = Model::train(c, cb(&["a", "b", "c"], 1000, 2), &[vec!["a", "b", "c", "a"]]).unwrap();
        m.adapt(&["c", "a", "b"]).unwrap();
        let snapshot = m.clone();
        m.predict_next(&["a", "b"]).unwrap();
        m.query_frequency(&["c", "a"]).unwrap();
        assert_eq!(m, snapshot);
    }

    #[test]
    fn empty_model_query_is_zero_norm() {
        let m = Model::untrained(
            ModelConfig {
                adaptive: true,
                ..cfg(1000, 3)
            },
            cb(&["a", "b"], 1000, 0),
        )
        .unwrap();
        assert!(matches!(m.predict_next(&["a", "b"]), Err(Error::ZeroNorm)));
    }
}
