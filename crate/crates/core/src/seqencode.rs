//! Positional n-gram encoding.
//!
//! An n-gram `(v_0, …, v_{n-1})` is encoded as the binding of every element
//! rotated by `(n-1-i)·shift`, so the last element is unrotated. Because of
//! that, an n-gram factors into a prefix query bound with its final element,
//! which is what makes retrieval by unbinding work.
//!
//! [`SlidingEncoder`] walks a session one state at a time with a constant
//! number of vector operations per step: unbind the outgoing element at its
//! slot, rotate everything one slot older, bind the incoming element.

use std::borrow::Borrow;
use std::collections::VecDeque;

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::hdvec::Hypervector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EncoderConfig {
    n: usize,
    shift: usize,
    dim: usize,
}

impl EncoderConfig {
    /// Requires `n >= 2`, `shift >= 1` and `shift·(n-1) < dim`; otherwise
    /// two slots would share a rotation and order would be lost.
    pub fn new(n: usize, shift: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if n < 2 {
            return Err(Error::InvalidConfig(format!("n-gram length must be >= 2, got {n}")));
        }
        if shift == 0 {
            return Err(Error::InvalidConfig("shift must be >= 1".into()));
        }
        if shift.saturating_mul(n - 1) >= dim {
            return Err(Error::InvalidConfig(format!(
                "shift·(n-1) = {} must be smaller than the dimension {dim}",
                shift.saturating_mul(n - 1)
            )));
        }
        Ok(Self { n, shift, dim })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn rotation(&self, slot_power: usize) -> i64 {
        (slot_power * self.shift) as i64
    }
}

/// Binding of `vectors[i]` rotated by `(len-1-i)·shift`, for any length.
fn encode_slots<V: Borrow<Hypervector>>(vectors: &[V], cfg: &EncoderConfig, ops: &mut OpCounts) -> Result<Hypervector> {
    let len = vectors.len();
    let mut out = Hypervector::ones(cfg.dim)?;
    for (i, v) in vectors.iter().enumerate() {
        let v = v.borrow();
        if v.dim() != cfg.dim {
            return Err(Error::DimensionMismatch {
                expected: cfg.dim,
                actual: v.dim(),
            });
        }
        out.bind_assign_unchecked(&v.permute(cfg.rotation(len - 1 - i)));
        ops.rotations += 1;
        ops.binds += 1;
    }
    Ok(out)
}

pub fn encode_ngram<V: Borrow<Hypervector>>(vectors: &[V], cfg: &EncoderConfig) -> Result<Hypervector> {
    if vectors.len() != cfg.n {
        return Err(Error::WrongArity {
            expected: cfg.n,
            actual: vectors.len(),
        });
    }
    encode_slots(vectors, cfg, &mut OpCounts::default())
}

/// [`encode_ngram`] that also tallies the vector operations it performs.
pub fn encode_ngram_counted<V: Borrow<Hypervector>>(
    vectors: &[V],
    cfg: &EncoderConfig,
    ops: &mut OpCounts,
) -> Result<Hypervector> {
    if vectors.len() != cfg.n {
        return Err(Error::WrongArity {
            expected: cfg.n,
            actual: vectors.len(),
        });
    }
    encode_slots(vectors, cfg, ops)
}

/// Query vector for an `(n-1)`-prefix: the prefix encoded over `n-1` slots,
/// then rotated once more. Binding it with the final element yields the
/// full n-gram encoding.
pub fn encode_query<V: Borrow<Hypervector>>(prefix: &[V], cfg: &EncoderConfig) -> Result<Hypervector> {
    if prefix.len() != cfg.n - 1 {
        return Err(Error::WrongArity {
            expected: cfg.n - 1,
            actual: prefix.len(),
        });
    }
    Ok(encode_slots(prefix, cfg, &mut OpCounts::default())?.permute(cfg.rotation(1)))
}

/// Tally of D-length vector operations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub binds: u64,
    pub rotations: u64,
    pub bundles: u64,
}

#[derive(Debug, Clone)]
pub struct SlidingEncoder {
    cfg: EncoderConfig,
    current: Hypervector,
    window: VecDeque<Hypervector>,
    ops: OpCounts,
    advances: u64,
}

impl SlidingEncoder {
    pub fn init<V: Borrow<Hypervector>>(first_window: &[V], cfg: EncoderConfig) -> Result<Self> {
        let current = encode_ngram(first_window, &cfg)?;
        Ok(Self {
            cfg,
            current,
            window: first_window.iter().map(|v| v.borrow().clone()).collect(),
            ops: OpCounts::default(),
            advances: 0,
        })
    }

    pub fn current(&self) -> &Hypervector {
        &self.current
    }

    pub fn window(&self) -> impl Iterator<Item = &Hypervector> {
        self.window.iter()
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    /// Operations performed by [`advance`](Self::advance) calls so far.
    pub fn ops(&self) -> OpCounts {
        self.ops
    }

    pub fn advances(&self) -> u64 {
        self.advances
    }

    /// Slides the window by one state and returns the new encoding.
    pub fn advance(&mut self, incoming: &Hypervector) -> Result<&Hypervector> {
        if incoming.dim() != self.cfg.dim {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.dim,
                actual: incoming.dim(),
            });
        }
        let outgoing = self.window.pop_front().expect("window holds n >= 2 vectors");

        let at_oldest_slot = outgoing.permute(self.cfg.rotation(self.cfg.n - 1));
        self.current.bind_assign_unchecked(&at_oldest_slot);
        self.current = self.current.permute(self.cfg.rotation(1));
        self.current.bind_assign_unchecked(incoming);
        self.ops.rotations += 2;
        self.ops.binds += 2;
        self.advances += 1;

        self.window.push_back(incoming.clone());
        Ok(&self.current)
    }
}

/// One continuous n-window of a session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramRecord {
    pub prefix: Vec<String>,
    pub target: String,
    pub encoding: Hypervector,
}

/// Resolves every state of a session against the codebook, reporting the
/// first unknown label with its position.
pub(crate) fn resolve_session<'a, S: AsRef<str>>(session: &[S], cb: &'a Codebook) -> Result<Vec<&'a Hypervector>> {
    session
        .iter()
        .enumerate()
        .map(|(pos, s)| {
            cb.lookup(s.as_ref()).map_err(|_| Error::UnknownLabel {
                label: s.as_ref().to_owned(),
                position: Some(pos),
            })
        })
        .collect()
}

/// Calls `visit(start, encoding)` for every continuous n-window of the
/// session, in order, using the sliding encoder. Sessions shorter than `n`
/// produce no windows. Returns the encoder's operation counts.
pub fn for_each_window<S, F>(session: &[S], cb: &Codebook, cfg: &EncoderConfig, mut visit: F) -> Result<OpCounts>
where
    S: AsRef<str>,
    F: FnMut(usize, &Hypervector),
{
    let vectors = resolve_session(session, cb)?;
    if vectors.len() < cfg.n {
        return Ok(OpCounts::default());
    }
    let mut enc = SlidingEncoder::init(&vectors[..cfg.n], *cfg)?;
    visit(0, enc.current());
    for (start, incoming) in vectors[cfg.n..].iter().enumerate() {
        visit(start + 1, enc.advance(incoming)?);
    }
    Ok(enc.ops())
}

pub fn session_ngrams<S: AsRef<str>>(session: &[S], cb: &Codebook, cfg: &EncoderConfig) -> Result<Vec<NgramRecord>> {
    let mut out = Vec::new();
    for_each_window(session, cb, cfg, |start, enc| {
        let window = &session[start..start + cfg.n];
        out.push(NgramRecord {
            prefix: window[..cfg.n - 1].iter().map(|s| s.as_ref().to_owned()).collect(),
            target: window[cfg.n - 1].as_ref().to_owned(),
            encoding: enc.clone(),
        });
    })?;
    Ok(out)
}
