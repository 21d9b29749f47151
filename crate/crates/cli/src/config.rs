//! JSON run configuration. Every field is optional; command-line flags take
//! precedence over values read from the file.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use hyperseq::dataio::{SplitParams, SyntheticConfig};
use hyperseq::{EntryBits, ModelConfig, SweepGrid};

use crate::{CliError, Shared};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub dim: Option<usize>,
    pub ngram: Option<usize>,
    pub shift: Option<usize>,
    pub adaptive: Option<bool>,
    pub adapt_weight: Option<u32>,
    pub entry_bits: Option<u8>,
    pub jobs: Option<usize>,
    pub window: Option<usize>,
    pub strategy: Option<String>,
    pub train_user_fraction: Option<f64>,
    pub train_fraction: Option<f64>,
    pub chronological: Option<bool>,
    pub exclude: Option<Vec<String>>,
    pub exclusion_mode: Option<String>,
    pub synthetic: Option<SyntheticConfig>,
    pub grid: Option<SweepGrid>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// File values overridden by flags.
#[derive(Debug)]
pub struct Resolved {
    pub file: FileConfig,
    pub seed: Option<u64>,
    pub dim: Option<usize>,
    pub ngram: Option<usize>,
    pub shift: Option<usize>,
    pub adaptive: Option<bool>,
    pub adapt_weight: Option<u32>,
    pub entry_bits: Option<EntryBits>,
    pub jobs: Option<usize>,
}

impl Resolved {
    pub fn new(shared: &Shared) -> Result<Self, CliError> {
        let file = FileConfig::load(shared.config.as_deref())?;
        let entry_bits = shared
            .entry_bits
            .or(file.entry_bits)
            .map(EntryBits::try_from)
            .transpose()
            .map_err(CliError::Lib)?;
        Ok(Self {
            seed: shared.seed.or(file.seed),
            dim: shared.dim.or(file.dim),
            ngram: shared.ngram.or(file.ngram),
            shift: shared.shift.or(file.shift),
            adaptive: shared.adaptive.or(file.adaptive),
            adapt_weight: shared.adapt_weight.or(file.adapt_weight),
            jobs: shared.jobs.or(file.jobs),
            entry_bits,
            file,
        })
    }

    /// Overrides the fields of `base` that were set.
    pub fn model_config(&self, base: ModelConfig) -> ModelConfig {
        ModelConfig {
            dim: self.dim.unwrap_or(base.dim),
            n: self.ngram.unwrap_or(base.n),
            shift: self.shift.unwrap_or(base.shift),
            seed: self.seed.unwrap_or(base.seed),
            adaptive: self.adaptive.unwrap_or(base.adaptive),
            adapt_weight: self.adapt_weight.unwrap_or(base.adapt_weight),
            entry_bits: self.entry_bits.unwrap_or(base.entry_bits),
        }
    }

    pub fn split_params(&self) -> SplitParams {
        let d = SplitParams::default();
        SplitParams {
            train_user_fraction: self.file.train_user_fraction.unwrap_or(d.train_user_fraction),
            train_fraction: self.file.train_fraction.unwrap_or(d.train_fraction),
            chronological: self.file.chronological.unwrap_or(d.chronological),
        }
    }

    /// The file's grid (or the full grid), with single-valued flag
    /// overrides.
    pub fn grid(&self) -> SweepGrid {
        let mut g = self.file.grid.clone().unwrap_or_else(SweepGrid::full);
        if let Some(s) = self.seed {
            g.seeds = vec![s];
        }
        if let Some(d) = self.dim {
            g.dims = vec![d];
        }
        if let Some(n) = self.ngram {
            g.ngram_lengths = vec![n];
        }
        if let Some(s) = self.shift {
            g.shifts = vec![s];
        }
        if let Some(a) = self.adaptive {
            g.adaptive = vec![a];
        }
        g
    }
}
