//! Versioned little-endian model file.
//!
//! ```text
//! magic        8 bytes  "HTGTCLF\n"
//! version      u32
//! hash_dim     u64
//! hash_seed    u64
//! word orders  u32 count, u32 each
//! char orders  u32 count, u32 each
//! classes      u32 count, (u32 length, UTF-8 bytes) each
//! weights      f64 x classes x hash_dim, row-major
//! bias         f64 x classes
//! best_epoch   u32
//! log          u32 count, (u32 epoch, f64 train_loss, f64 train_acc,
//!              u8 has_val, f64 val_loss, f64 val_acc) each
//! checksum     u64 xxh3 of all preceding bytes
//! ```

use std::path::Path;

use xxhash_rust::xxh3::xxh3_64;

use super::{EpochLog, FeatureConfig, TrainedClassifier};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HTGTCLF\n";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes(model: &TrainedClassifier) -> Vec<u8> {
    let fc = &model.feature_config;
    let mut out = Vec::with_capacity(64 + 8 * (model.weights.len() + model.bias.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(fc.hash_dim as u64).to_le_bytes());
    out.extend_from_slice(&fc.hash_seed.to_le_bytes());
    for orders in [&fc.word_ngrams, &fc.char_ngrams] {
        out.extend_from_slice(&(orders.len() as u32).to_le_bytes());
        for &n in orders {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
    }
    out.extend_from_slice(&(model.class_list.len() as u32).to_le_bytes());
    for c in &model.class_list {
        out.extend_from_slice(&(c.len() as u32).to_le_bytes());
        out.extend_from_slice(c.as_bytes());
    }
    for v in model.weights.iter().chain(&model.bias) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(model.best_epoch as u32).to_le_bytes());
    out.extend_from_slice(&(model.training_log.len() as u32).to_le_bytes());
    for e in &model.training_log {
        out.extend_from_slice(&(e.epoch as u32).to_le_bytes());
        out.extend_from_slice(&e.train_loss.to_le_bytes());
        out.extend_from_slice(&e.train_accuracy.to_le_bytes());
        out.push(u8::from(e.val_loss.is_some()));
        out.extend_from_slice(&e.val_loss.unwrap_or(0.0).to_le_bytes());
        out.extend_from_slice(&e.val_accuracy.unwrap_or(0.0).to_le_bytes());
    }
    let checksum = xxh3_64(&out);
    out.extend_from_slice(&checksum.to_le_bytes());
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn orders(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()? as usize;
        if n > 64 {
            return Err(Error::Corrupt(format!("{n} n-gram orders")));
        }
        (0..n).map(|_| self.u32().map(|v| v as usize)).collect()
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<TrainedClassifier> {
    if bytes.len() < MAGIC.len() + 4 + 8 {
        return Err(Error::Corrupt("file too short".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Corrupt("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if xxh3_64(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
        return Err(Error::Corrupt("checksum mismatch".into()));
    }

    let mut c = Cursor { buf: body, pos: 12 };
    let hash_dim = c.u64()? as usize;
    let hash_seed = c.u64()?;
    let word_ngrams = c.orders()?;
    let char_ngrams = c.orders()?;
    let feature_config = FeatureConfig {
        hash_dim,
        word_ngrams,
        char_ngrams,
        hash_seed,
    };
    feature_config
        .validate()
        .map_err(|e| Error::Corrupt(e.to_string()))?;

    let n_classes = c.u32()? as usize;
    if n_classes == 0 || n_classes > c.remaining() {
        return Err(Error::Corrupt(format!("{n_classes} classes")));
    }
    let mut class_list = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::Corrupt("class name is not UTF-8".into()))?;
        class_list.push(name.to_string());
    }
    let n_weights = n_classes
        .checked_mul(hash_dim)
        .filter(|n| n.saturating_mul(8) <= c.remaining())
        .ok_or_else(|| Error::Corrupt("weight block truncated".into()))?;
    let weights = (0..n_weights).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let bias = (0..n_classes).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let best_epoch = c.u32()? as usize;
    let n_log = c.u32()? as usize;
    if n_log.saturating_mul(37) > c.remaining() {
        return Err(Error::Corrupt("training log truncated".into()));
    }
    let mut training_log = Vec::with_capacity(n_log);
    for _ in 0..n_log {
        let epoch = c.u32()? as usize;
        let train_loss = c.f64()?;
        let train_accuracy = c.f64()?;
        let has_val = c.u8()? != 0;
        let val_loss = c.f64()?;
        let val_accuracy = c.f64()?;
        training_log.push(EpochLog {
            epoch,
            train_loss,
            train_accuracy,
            val_loss: has_val.then_some(val_loss),
            val_accuracy: has_val.then_some(val_accuracy),
        });
    }
    if c.remaining() != 0 {
        return Err(Error::Corrupt(format!("{} trailing bytes", c.remaining())));
    }
    let model = TrainedClassifier {
        feature_config,
        class_list,
        weights,
        bias,
        training_log,
        best_epoch,
    };
    if !model.is_finite() {
        return Err(Error::Corrupt("non-finite parameters".into()));
    }
    let mut names: Vec<&String> = model.class_list.iter().collect();
    names.sort();
    names.dedup();
    if names.len() != model.class_list.len() {
        return Err(Error::Corrupt("duplicate class names".into()));
    }
    Ok(model)
}

pub fn save(model: &TrainedClassifier, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<TrainedClassifier> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
