//! Bipolar hypervectors and integer accumulators.
//!
//! A [`Hypervector`] lives in `{-1, +1}^D`. Binding is elementwise
//! multiplication, permutation is a cyclic rotation, and bundling adds
//! weighted hypervectors into an [`Accumulator`] of signed counts. Counts are
//! kept as integers so that bundling is exact and order independent; they
//! saturate at the configured entry width instead of wrapping.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense bipolar hypervector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Hypervector {
    elems: Vec<i8>,
}

impl Hypervector {
    /// Draws each element independently as -1 or +1 with probability 1/2.
    pub fn random<R: RngCore + ?Sized>(dim: usize, rng: &mut R) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        let mut elems = Vec::with_capacity(dim);
        while elems.len() < dim {
            let word = rng.next_u64();
            let take = (dim - elems.len()).min(64);
            elems.extend((0..take).map(|bit| if word >> bit & 1 == 1 { 1 } else { -1 }));
        }
        Ok(Self { elems })
    }

    pub fn from_elements(elems: Vec<i8>) -> Result<Self> {
        if elems.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        if elems.iter().any(|&e| e != 1 && e != -1) {
            return Err(Error::InvalidConfig("hypervector elements must be -1 or +1".into()));
        }
        Ok(Self { elems })
    }

    /// The binding identity.
    pub fn ones(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        Ok(Self { elems: vec![1; dim] })
    }

    pub fn dim(&self) -> usize {
        self.elems.len()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.elems
    }

    pub fn negate(&self) -> Self {
        Self {
            elems: self.elems.iter().map(|&e| -e).collect(),
        }
    }

    pub fn bind(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        let mut out = self.clone();
        out.bind_assign_unchecked(other);
        Ok(out)
    }

    /// In-place binding. Callers guarantee equal dimensions.
    pub(crate) fn bind_assign_unchecked(&mut self, other: &Self) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, &b) in self.elems.iter_mut().zip(&other.elems) {
            *a *= b;
        }
    }

    /// Cyclic rotation: `out[(i + positions) mod D] = self[i]`.
    pub fn permute(&self, positions: i64) -> Self {
        let d = self.dim() as i64;
        let p = positions.rem_euclid(d) as usize;
        let mut elems = self.elems.clone();
        elems.rotate_right(p);
        Self { elems }
    }

    pub fn dot(&self, other: &Self) -> Result<i64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self
            .elems
            .iter()
            .zip(&other.elems)
            .map(|(&a, &b)| i64::from(a * b))
            .sum())
    }

    /// Cosine similarity; for bipolar vectors this is `dot / D` exactly.
    pub fn similarity(&self, other: &Self) -> Result<f64> {
        Ok(self.dot(other)? as f64 / self.dim() as f64)
    }

    /// Packs the vector one bit per element, least significant bit first;
    /// a set bit stands for +1.
    pub fn to_packed_bits(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.dim().div_ceil(8)];
        for (i, &e) in self.elems.iter().enumerate() {
            if e > 0 {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        out
    }

    pub fn from_packed_bits(bytes: &[u8], dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if bytes.len() != dim.div_ceil(8) {
            return Err(Error::DimensionMismatch {
                expected: dim.div_ceil(8),
                actual: bytes.len(),
            });
        }
        let elems = (0..dim)
            .map(|i| if bytes[i / 8] >> (i % 8) & 1 == 1 { 1 } else { -1 })
            .collect();
        Ok(Self { elems })
    }
}

/// Bits per accumulator entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(try_from = "u8", into = "u8")]
pub enum EntryBits {
    B8,
    B16,
    #[default]
    B32,
}

impl EntryBits {
    pub fn bits(self) -> u8 {
        match self {
            EntryBits::B8 => 8,
            EntryBits::B16 => 16,
            EntryBits::B32 => 32,
        }
    }

    pub fn bytes(self) -> usize {
        usize::from(self.bits() / 8)
    }

    /// Largest representable magnitude. The range is symmetric so that
    /// negation (binding with -1) never saturates.
    pub fn max_value(self) -> i32 {
        match self {
            EntryBits::B8 => i32::from(i8::MAX),
            EntryBits::B16 => i32::from(i16::MAX),
            EntryBits::B32 => i32::MAX,
        }
    }

    pub fn min_value(self) -> i32 {
        -self.max_value()
    }
}

impl TryFrom<u8> for EntryBits {
    type Error = Error;

    fn try_from(bits: u8) -> Result<Self> {
        match bits {
            8 => Ok(EntryBits::B8),
            16 => Ok(EntryBits::B16),
            32 => Ok(EntryBits::B32),
            other => Err(Error::InvalidConfig(format!(
                "entry bits must be 8, 16 or 32, got {other}"
            ))),
        }
    }
}

impl From<EntryBits> for u8 {
    fn from(b: EntryBits) -> u8 {
        b.bits()
    }
}

/// Dense signed counts produced by bundling.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Accumulator {
    elems: Vec<i32>,
    bits: EntryBits,
}

impl Accumulator {
    pub fn zeros(dim: usize, bits: EntryBits) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        Ok(Self {
            elems: vec![0; dim],
            bits,
        })
    }

    /// Builds an accumulator from raw counts, saturating anything outside
    /// the width's range.
    pub fn from_elements(elems: Vec<i32>, bits: EntryBits) -> Result<Self> {
        if elems.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        let (lo, hi) = (bits.min_value(), bits.max_value());
        let elems = elems.into_iter().map(|e| e.clamp(lo, hi)).collect();
        Ok(Self { elems, bits })
    }

    pub fn from_hypervector(v: &Hypervector, bits: EntryBits) -> Self {
        Self {
            elems: v.as_slice().iter().map(|&e| i32::from(e)).collect(),
            bits,
        }
    }

    pub fn dim(&self) -> usize {
        self.elems.len()
    }

    pub fn bits(&self) -> EntryBits {
        self.bits
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.elems
    }

    pub fn is_zero(&self) -> bool {
        self.elems.iter().all(|&e| e == 0)
    }

    /// `acc[i] += weight * v[i]`, saturating at the entry width.
    pub fn bundle(&mut self, v: &Hypervector, weight: u32) -> Result<()> {
        check_dim(self.dim(), v.dim())?;
        if weight == 0 {
            return Err(Error::InvalidConfig("bundle weight must be >= 1".into()));
        }
        let w = i32::try_from(weight).unwrap_or(i32::MAX);
        let (lo, hi) = (self.bits.min_value(), self.bits.max_value());
        for (a, &e) in self.elems.iter_mut().zip(v.as_slice()) {
            *a = a.saturating_add(w * i32::from(e)).clamp(lo, hi);
        }
        Ok(())
    }

    /// Elementwise saturating sum; used to merge partial accumulators and to
    /// form the combined base + adaptive memory.
    pub fn add_assign(&mut self, other: &Accumulator) -> Result<()> {
        check_dim(self.dim(), other.dim())?;
        let (lo, hi) = (self.bits.min_value(), self.bits.max_value());
        for (a, &b) in self.elems.iter_mut().zip(&other.elems) {
            *a = a.saturating_add(b).clamp(lo, hi);
        }
        Ok(())
    }

    /// Unbinding against a hypervector: `out[i] = acc[i] * v[i]`.
    pub fn bind(&self, v: &Hypervector) -> Result<Accumulator> {
        check_dim(self.dim(), v.dim())?;
        let elems = self
            .elems
            .iter()
            .zip(v.as_slice())
            .map(|(&a, &e)| a * i32::from(e))
            .collect();
        Ok(Accumulator { elems, bits: self.bits })
    }

    /// `(self + other) ⊗ v` at 32 bits in a single pass, with the sum
    /// saturating exactly as [`Accumulator::add_assign`] does.
    pub(crate) fn sum_bind_b32(&self, other: Option<&Accumulator>, v: &Hypervector) -> Accumulator {
        debug_assert_eq!(self.dim(), v.dim());
        let lo = EntryBits::B32.min_value();
        let elems = match other {
            Some(o) => self
                .elems
                .iter()
                .zip(&o.elems)
                .zip(v.as_slice())
                .map(|((&a, &b), &e)| a.saturating_add(b).max(lo) * i32::from(e))
                .collect(),
            None => self
                .elems
                .iter()
                .zip(v.as_slice())
                .map(|(&a, &e)| a * i32::from(e))
                .collect(),
        };
        Accumulator {
            elems,
            bits: EntryBits::B32,
        }
    }

    /// Re-expresses the counts at another width, saturating if narrower.
    pub fn with_bits(&self, bits: EntryBits) -> Accumulator {
        let (lo, hi) = (bits.min_value(), bits.max_value());
        Accumulator {
            elems: self.elems.iter().map(|&e| e.clamp(lo, hi)).collect(),
            bits,
        }
    }

    pub fn dot(&self, v: &Hypervector) -> Result<i64> {
        check_dim(self.dim(), v.dim())?;
        Ok(self
            .elems
            .iter()
            .zip(v.as_slice())
            .map(|(&a, &e)| i64::from(a) * i64::from(e))
            .sum())
    }

    pub fn norm_sq(&self) -> i64 {
        self.elems.iter().map(|&a| i64::from(a) * i64::from(a)).sum()
    }

    /// Cosine similarity against a bipolar vector, computed from exact
    /// integer dot products.
    pub fn cosine(&self, v: &Hypervector) -> Result<f64> {
        self.cosine_with_norm(v, self.norm_sq())
    }

    /// [`Accumulator::cosine`] with this accumulator's squared norm supplied.
    pub(crate) fn cosine_with_norm(&self, v: &Hypervector, norm_sq: i64) -> Result<f64> {
        let dot = self.dot(v)?;
        if norm_sq == 0 {
            return Err(Error::ZeroNorm);
        }
        Ok(dot as f64 / (norm_sq as f64 * v.dim() as f64).sqrt())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.elems.iter().map(|&e| f64::from(e)).collect()
    }
}

/// Standard cosine similarity over real vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Sign of each count; zero entries are resolved by `tie_rng`.
pub fn sign_quantize<R: RngCore + ?Sized>(acc: &Accumulator, tie_rng: &mut R) -> Hypervector {
    let mut bits = 0u64;
    let mut left = 0;
    let elems = acc
        .as_slice()
        .iter()
        .map(|&e| match e.signum() {
            0 => {
                if left == 0 {
                    bits = tie_rng.next_u64();
                    left = 64;
                }
                left -= 1;
                let b = bits & 1;
                bits >>= 1;
                if b == 1 {
                    1
                } else {
                    -1
                }
            }
            s => s as i8,
        })
        .collect();
    Hypervector { elems }
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
