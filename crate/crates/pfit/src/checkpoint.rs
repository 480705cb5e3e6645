//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 8     | magic `PFITCKPT`                          |
//! | 4     | format version (`u32`)                    |
//! | 8     | payload length in bytes (`u64`)           |
//! | n     | payload                                   |
//! | 4     | CRC-32 (IEEE) of the payload (`u32`)      |
//!
//! The payload is a flat sequence of `u64`, `f64` (IEEE bits), `u8` flags and
//! length-prefixed arrays; see the README for the field order.

use std::fs;
use std::path::Path;

use pfit_core::dynamics::ImportanceWindow;
use pfit_core::encoder::{Encoder, EncoderKind, EncoderSpec, Layer};
use pfit_core::inference::ImportanceRow;
use pfit_core::objective::{AdamConfig, Model, Moments, OptimizerState, PrototypeMoments};
use pfit_core::store::{HeadMode, Prototype, PrototypeId, PrototypeStore, RegressionBins};
use pfit_core::train::{Counters, Progress, RngState, TrainState};

use crate::config::{format_config, parse_config, EncoderConfig, RunConfig};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PFITCKPT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;

/// A resumable training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder_config: EncoderConfig,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            train: self.state.config.clone(),
            encoder: self.encoder_config.clone(),
        }
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn flag(&mut self, v: bool) {
        self.u8(v as u8);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
    fn bytes(&mut self, v: &[u8]) {
        self.usize(v.len());
        self.0.extend_from_slice(v);
    }
    fn moments(&mut self, m: &Moments) {
        self.u64(m.t);
        self.f64s(&m.m);
        self.f64s(&m.v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.buf.len() {
            return Err(Error::CorruptChecksum);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::CorruptChecksum),
        }
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn index(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::CorruptChecksum)
    }
    /// Element count of an array that follows.
    fn count(&mut self) -> Result<usize> {
        let n = self.index()?;
        // every element takes at least one byte, so larger counts are corrupt
        if n > self.buf.len() {
            return Err(Error::CorruptChecksum);
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.count()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.count()?;
        self.take(n)
    }
    fn moments(&mut self) -> Result<Moments> {
        Ok(Moments {
            t: self.u64()?,
            m: self.f64s()?,
            v: self.f64s()?,
        })
    }
}

fn kind_tag(kind: EncoderKind) -> u8 {
    match kind {
        EncoderKind::FrozenTable => 0,
        EncoderKind::FrozenTableWithProjection => 1,
        EncoderKind::Mlp => 2,
    }
}

fn kind_from_tag(tag: u8) -> Result<EncoderKind> {
    Ok(match tag {
        0 => EncoderKind::FrozenTable,
        1 => EncoderKind::FrozenTableWithProjection,
        2 => EncoderKind::Mlp,
        _ => return Err(Error::CorruptChecksum),
    })
}

fn encode_payload(ckpt: &Checkpoint) -> Vec<u8> {
    let st = &ckpt.state;
    let mut w = Writer::default();
    w.bytes(format_config(&ckpt.run_config()).as_bytes());

    let store = &st.model.store;
    match store.mode() {
        HeadMode::Classification { classes, indicator } => {
            w.u8(0);
            w.usize(classes);
            w.flag(indicator);
        }
        HeadMode::Regression { bins } => {
            w.u8(1);
            w.f64(bins.min);
            w.f64(bins.width);
            w.usize(bins.count);
        }
    }
    w.usize(store.dim());
    w.usize(store.capacity());
    w.u64(store.next_id());
    w.usize(store.len());
    for p in store.prototypes() {
        w.u64(p.id.0);
        w.usize(p.home_class);
        w.u64(p.created_step);
        w.f64(p.log_sigma);
        w.f64s(&p.embedding);
        w.f64s(&p.logits);
    }
    w.f64(st.model.shared_log_sigma);

    let spec = st.model.encoder.spec();
    w.u8(kind_tag(spec.kind));
    w.usize(spec.input_dim);
    w.usize(spec.output_dim);
    w.usize(spec.hidden.len());
    spec.hidden.iter().for_each(|&h| w.usize(h));
    w.flag(spec.trainable);
    w.usize(st.model.encoder.layers().len());
    for layer in st.model.encoder.layers() {
        w.usize(layer.fan_in);
        w.usize(layer.fan_out);
        w.f64s(&layer.weight);
        w.f64s(&layer.bias);
    }

    let opt = &st.optimizer;
    w.f64(opt.adam.learning_rate);
    w.f64(opt.adam.beta1);
    w.f64(opt.adam.beta2);
    w.f64(opt.adam.eps);
    w.usize(opt.prototypes.len());
    for (id, m) in &opt.prototypes {
        w.u64(id.0);
        w.moments(&m.embedding);
        w.moments(&m.logits);
        w.moments(&m.log_sigma);
    }
    w.moments(&opt.shared_log_sigma);
    w.usize(opt.encoder.len());
    for (mw, mb) in &opt.encoder {
        w.moments(mw);
        w.moments(mb);
    }

    w.usize(st.window.delta());
    w.u64(st.window.current_step());
    w.usize(st.window.len());
    for row in st.window.rows() {
        w.u64(row.example_id);
        w.u64(row.step);
        w.usize(row.weights.len());
        for (id, z) in &row.weights {
            w.u64(id.0);
            w.f64(*z);
        }
    }

    let rng = RngState::capture(&st.rng);
    w.0.extend_from_slice(&rng.seed);
    w.u64(rng.stream);
    w.u64(rng.word_pos as u64);
    w.u64((rng.word_pos >> 64) as u64);

    let p = &st.progress;
    w.usize(p.epoch);
    w.usize(p.batch);
    w.usize(p.order.len());
    p.order.iter().for_each(|&i| w.usize(i));
    w.u64(p.step);
    w.u64(p.example_step);
    w.flag(p.best_metric.is_some());
    w.f64(p.best_metric.unwrap_or(0.0));
    w.usize(p.stale_epochs);
    w.flag(p.finished);

    let c = &st.counters;
    w.u64(c.created);
    w.u64(c.pruned);
    w.u64(c.clamped);
    w.u64(c.capacity_declined);
    w.0
}

fn decode_payload(buf: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf };
    let text = std::str::from_utf8(r.bytes()?).map_err(|_| Error::CorruptChecksum)?;
    let run = parse_config(text)?;

    let mode = match r.u8()? {
        0 => HeadMode::Classification {
            classes: r.index()?,
            indicator: r.flag()?,
        },
        1 => HeadMode::Regression {
            bins: RegressionBins {
                min: r.f64()?,
                width: r.f64()?,
                count: r.index()?,
            },
        },
        _ => return Err(Error::CorruptChecksum),
    };
    let dim = r.index()?;
    let capacity = r.index()?;
    let next_id = r.u64()?;
    let count = r.count()?;
    let mut protos = Vec::with_capacity(count);
    for _ in 0..count {
        protos.push(Prototype {
            id: PrototypeId(r.u64()?),
            home_class: r.index()?,
            created_step: r.u64()?,
            log_sigma: r.f64()?,
            embedding: r.f64s()?,
            logits: r.f64s()?,
        });
    }
    let store = PrototypeStore::restore(mode, dim, capacity, next_id, protos)?;
    let shared_log_sigma = r.f64()?;

    let kind = kind_from_tag(r.u8()?)?;
    let input_dim = r.index()?;
    let output_dim = r.index()?;
    let hidden_len = r.count()?;
    let hidden = (0..hidden_len).map(|_| r.index()).collect::<Result<Vec<_>>>()?;
    let trainable = r.flag()?;
    let layer_count = r.count()?;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        layers.push(Layer {
            fan_in: r.index()?,
            fan_out: r.index()?,
            weight: r.f64s()?,
            bias: r.f64s()?,
        });
    }
    let spec = EncoderSpec {
        kind,
        input_dim,
        output_dim,
        hidden,
        trainable,
    };
    let encoder = Encoder::from_layers(spec, layers)?;

    let adam = AdamConfig {
        learning_rate: r.f64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        eps: r.f64()?,
    };
    let mut optimizer = OptimizerState::new(adam, &encoder);
    for _ in 0..r.count()? {
        let id = PrototypeId(r.u64()?);
        let m = PrototypeMoments {
            embedding: r.moments()?,
            logits: r.moments()?,
            log_sigma: r.moments()?,
        };
        optimizer.prototypes.insert(id, m);
    }
    optimizer.shared_log_sigma = r.moments()?;
    let enc_count = r.count()?;
    optimizer.encoder = (0..enc_count)
        .map(|_| Ok((r.moments()?, r.moments()?)))
        .collect::<Result<_>>()?;

    let delta = r.index()?;
    let current_step = r.u64()?;
    let row_count = r.count()?;
    let mut rows = Vec::with_capacity(row_count);
    for _ in 0..row_count {
        let example_id = r.u64()?;
        let step = r.u64()?;
        let n = r.count()?;
        let weights = (0..n)
            .map(|_| Ok((PrototypeId(r.u64()?), r.f64()?)))
            .collect::<Result<_>>()?;
        rows.push(ImportanceRow {
            example_id,
            step,
            weights,
        });
    }
    let window = ImportanceWindow::restore(delta, current_step, rows)?;

    let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let stream = r.u64()?;
    let word_pos = r.u64()? as u128 | (r.u64()? as u128) << 64;
    let rng = RngState {
        seed,
        stream,
        word_pos,
    }
    .restore();

    let epoch = r.index()?;
    let batch = r.index()?;
    let order_len = r.count()?;
    let order = (0..order_len).map(|_| r.index()).collect::<Result<_>>()?;
    let step = r.u64()?;
    let example_step = r.u64()?;
    let has_best = r.flag()?;
    let best = r.f64()?;
    let progress = Progress {
        epoch,
        batch,
        order,
        step,
        example_step,
        best_metric: has_best.then_some(best),
        stale_epochs: r.index()?,
        finished: r.flag()?,
    };
    let counters = Counters {
        created: r.u64()?,
        pruned: r.u64()?,
        clamped: r.u64()?,
        capacity_declined: r.u64()?,
    };
    if !r.buf.is_empty() {
        return Err(Error::CorruptChecksum);
    }
    Ok(Checkpoint {
        encoder_config: run.encoder,
        state: TrainState {
            config: run.train,
            model: Model {
                store,
                encoder,
                shared_log_sigma,
            },
            optimizer,
            window,
            rng,
            progress,
            counters,
        },
    })
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let payload = encode_payload(ckpt);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::CorruptChecksum);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::CorruptChecksum);
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let rest = &bytes[HEADER_LEN..];
    if (rest.len() as u64) != len.saturating_add(4) {
        return Err(Error::CorruptChecksum);
    }
    let (payload, crc) = rest.split_at(len as usize);
    if crc32fast::hash(payload).to_le_bytes() != crc {
        return Err(Error::CorruptChecksum);
    }
    decode_payload(payload)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, encode_checkpoint(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
