//! Binary model file.
//!
//! Little-endian layout:
//!
//! ```text
//! "HSEQ"  version:u16  dim:u32  n:u8  shift:u8  entry_bits:u8  adaptive:u8
//! adapt_weight:u32  seed:u64  label_count:u16  train_ngrams:u64  adapt_events:u64
//! label_count × (len:u16, utf-8 bytes)              labels in ascending order
//! label_count × ceil(dim/8) bytes                   codebook, 1 bit per element
//! dim × entry_bits/8 bytes                          base memory
//! dim × entry_bits/8 bytes                          adaptive memory (adaptive models only)
//! crc32:u32                                         over every preceding byte
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{Model, ModelConfig};
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::hdvec::{Accumulator, EntryBits, Hypervector};

pub const MAGIC: &[u8; 4] = b"HSEQ";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 + 1 + 1 + 1 + 1 + 4 + 8 + 2 + 8 + 8;

pub(super) fn file_size<'a>(config: &ModelConfig, labels: impl Iterator<Item = &'a str>) -> usize {
    let (count, label_bytes) = labels.fold((0, 0), |(c, b), l| (c + 1, b + 2 + l.len()));
    let memories = if config.adaptive { 2 } else { 1 };
    HEADER_LEN + label_bytes + count * config.dim.div_ceil(8) + memories * config.dim * config.entry_bits.bytes() + 4
}

fn format_err(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Format {
        field,
        reason: reason.into(),
    }
}

fn put_accumulator(out: &mut Vec<u8>, acc: &Accumulator, bits: EntryBits) {
    for &e in acc.as_slice() {
        match bits {
            EntryBits::B8 => out.extend_from_slice(&(e as i8).to_le_bytes()),
            EntryBits::B16 => out.extend_from_slice(&(e as i16).to_le_bytes()),
            EntryBits::B32 => out.extend_from_slice(&e.to_le_bytes()),
        }
    }
}

impl Model {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let cfg = &self.config;
        let label_count = u16::try_from(self.codebook.len())
            .map_err(|_| Error::InvalidConfig("at most 65535 labels can be stored".into()))?;
        let mut out = Vec::with_capacity(self.file_size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(cfg.dim as u32).to_le_bytes());
        out.push(cfg.n as u8);
        out.push(cfg.shift as u8);
        out.push(cfg.entry_bits.bits());
        out.push(u8::from(cfg.adaptive));
        out.extend_from_slice(&cfg.adapt_weight.to_le_bytes());
        out.extend_from_slice(&cfg.seed.to_le_bytes());
        out.extend_from_slice(&label_count.to_le_bytes());
        out.extend_from_slice(&self.train_ngram_count.to_le_bytes());
        out.extend_from_slice(&self.adapt_event_count.to_le_bytes());
        for label in self.codebook.labels() {
            let len = u16::try_from(label.len())
                .map_err(|_| Error::InvalidConfig(format!("label `{label}` is longer than 65535 bytes")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(label.as_bytes());
        }
        for (_, v) in self.codebook.iter() {
            out.extend_from_slice(&v.to_packed_bits());
        }
        put_accumulator(&mut out, &self.base, cfg.entry_bits);
        if cfg.adaptive {
            put_accumulator(&mut out, &self.adaptive, cfg.entry_bits);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        debug_assert_eq!(out.len(), self.file_size());
        Ok(out)
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes()?)?;
        w.flush()?;
        Ok(())
    }

    pub fn save_to_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.save(BufWriter::new(File::create(path)?))
    }

    pub fn load<R: Read>(mut r: R) -> Result<Model> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn load_from_path(path: impl AsRef<Path>) -> Result<Model> {
        Self::load(File::open(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(format_err("magic", "not a model file"));
        }
        if bytes.len() < HEADER_LEN + 4 {
            return Err(format_err("header", "file is truncated"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(format_err(
                "version",
                format!("unsupported version {version}, expected {FORMAT_VERSION}"),
            ));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(format_err(
                "checksum",
                format!("stored {stored:#010x}, computed {actual:#010x}"),
            ));
        }

        let mut cur = Cursor { buf: body, pos: 6 };
        let dim = cur.u32("dim")? as usize;
        let n = usize::from(cur.u8("n")?);
        let shift = usize::from(cur.u8("shift")?);
        let entry_bits =
            EntryBits::try_from(cur.u8("entry_bits")?).map_err(|e| format_err("entry_bits", e.to_string()))?;
        let adaptive = match cur.u8("adaptive")? {
            0 => false,
            1 => true,
            other => return Err(format_err("adaptive", format!("flag must be 0 or 1, got {other}"))),
        };
        let adapt_weight = cur.u32("adapt_weight")?;
        let seed = cur.u64("seed")?;
        let label_count = usize::from(cur.u16("label_count")?);
        let train_ngram_count = cur.u64("train_ngram_count")?;
        let adapt_event_count = cur.u64("adapt_event_count")?;

        let config = ModelConfig {
            dim,
            n,
            shift,
            seed,
            adaptive,
            adapt_weight,
            entry_bits,
        };
        let encoder = config.validate().map_err(|e| format_err("header", e.to_string()))?;

        let mut labels = Vec::with_capacity(label_count);
        for _ in 0..label_count {
            let len = usize::from(cur.u16("labels")?);
            let raw = cur.take(len, "labels")?;
            let label = std::str::from_utf8(raw).map_err(|e| format_err("labels", e.to_string()))?;
            if labels.last().is_some_and(|prev: &String| prev.as_str() >= label) {
                return Err(format_err("labels", "labels are not in ascending order"));
            }
            labels.push(label.to_owned());
        }
        let mut entries = BTreeMap::new();
        for label in labels {
            let v = Hypervector::from_packed_bits(cur.take(dim.div_ceil(8), "codebook")?, dim)?;
            entries.insert(label, v);
        }
        let codebook = Codebook::from_entries(entries, dim, seed).map_err(|e| format_err("codebook", e.to_string()))?;

        let base = cur.accumulator(dim, entry_bits, "base")?;
        let adaptive_acc = if adaptive {
            cur.accumulator(dim, entry_bits, "adaptive")?
        } else {
            Accumulator::zeros(dim, entry_bits)?
        };
        if cur.pos != body.len() {
            return Err(format_err("length", format!("{} trailing bytes", body.len() - cur.pos)));
        }
        Ok(Model {
            config,
            encoder,
            codebook,
            base,
            adaptive: adaptive_acc,
            train_ngram_count,
            adapt_event_count,
        })
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, field: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format_err(field, "file is truncated"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    fn u16(&mut self, field: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, field)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().expect("8 bytes")))
    }

    fn accumulator(&mut self, dim: usize, bits: EntryBits, field: &'static str) -> Result<Accumulator> {
        let raw = self.take(dim * bits.bytes(), field)?;
        let elems: Vec<i32> = match bits {
            EntryBits::B8 => raw.iter().map(|&b| i32::from(b as i8)).collect(),
            EntryBits::B16 => raw
                .chunks_exact(2)
                .map(|c| i32::from(i16::from_le_bytes([c[0], c[1]])))
                .collect(),
            EntryBits::B32 => raw
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        };
        if elems.iter().any(|&e| e < bits.min_value()) {
            return Err(format_err(field, "entry outside the symmetric range"));
        }
        Accumulator::from_elements(elems, bits)
    }
}
