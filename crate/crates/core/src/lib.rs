//! Hyperdimensional n-gram model for next-state prediction.
//!
//! States are mapped to random bipolar hypervectors, n-grams are encoded by
//! binding position-rotated state vectors, and the model memory is the
//! integer bundle of every training n-gram. Querying the memory with an
//! `(n-1)`-prefix unbinds a frequency vector whose nearest codebook entry is
//! the predicted next state. An optional adaptive memory accumulates
//! n-grams seen online.

pub mod codebook;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod hdvec;
pub mod model;
pub mod seed;
pub mod seqencode;

pub use codebook::{Codebook, Decoded};
pub use error::{Error, ErrorKind, Result};
pub use eval::{
    bayes_optimal_accuracy, evaluate, evaluate_with_reference, oracle_agreement, run_sweep, sliding_window_accuracy,
    EvalReport, OracleModel, PredictionEvent, SweepGrid, SweepSettings,
};
pub use hdvec::{cosine_similarity, sign_quantize, Accumulator, EntryBits, Hypervector};
pub use model::{Model, ModelConfig, NgramSum, QueryResult, TrainStats};
pub use seqencode::{
    encode_ngram, encode_ngram_counted, encode_query, for_each_window, session_ngrams, EncoderConfig, NgramRecord,
    OpCounts, SlidingEncoder,
};
