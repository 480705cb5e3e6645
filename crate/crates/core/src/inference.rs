//! Prototype importance, per-prototype predictions and their mixture.
//!
//! Importance is the normalized isotropic Gaussian density of the query
//! under each prototype, `exp(-|x - p_k|^2 / (2 s_k^2)) * s_k^-D`, evaluated
//! in log space. The class distribution is the importance-weighted mixture of
//! per-prototype softmax predictions; the regression estimate is the
//! importance-weighted mean of scalar prototype outputs.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::EmbeddedExample;
use crate::error::{Error, Result};
use crate::math;
use crate::store::{HeadMode, Prototype, PrototypeId, PrototypeStore};

/// Importance of every live prototype for one example at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceRow {
    pub example_id: u64,
    pub step: u64,
    /// `(prototype id, z)` in store order.
    pub weights: Vec<(PrototypeId, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    ClassProbs(Vec<f64>),
    Estimate(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub output: Output,
    /// Importance aligned with the store's prototype order.
    pub importance: Vec<f64>,
}

impl Prediction {
    pub fn class_probs(&self) -> Option<&[f64]> {
        match &self.output {
            Output::ClassProbs(p) => Some(p),
            Output::Estimate(_) => None,
        }
    }

    pub fn estimate(&self) -> Option<f64> {
        match self.output {
            Output::Estimate(v) => Some(v),
            Output::ClassProbs(_) => None,
        }
    }

    /// Most probable class, lowest index on ties.
    pub fn argmax(&self) -> Option<usize> {
        let probs = self.class_probs()?;
        let mut best = 0;
        for (c, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = c;
            }
        }
        Some(best)
    }
}

/// Unnormalized log density of `features` under `proto` (constant dropped).
pub fn log_density(features: &[f64], proto: &Prototype) -> f64 {
    let d2 = math::squared_distance(features, &proto.embedding);
    let inv_var = math::exp(-2.0 * proto.log_sigma);
    -0.5 * d2 * inv_var - features.len() as f64 * proto.log_sigma
}

/// Importance weights `z_k` in store order.
pub fn importance(features: &[f64], store: &PrototypeStore) -> Result<Vec<f64>> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    check_dim(features, store)?;
    let mut z: Vec<f64> = store
        .prototypes()
        .iter()
        .map(|p| log_density(features, p))
        .collect();
    math::softmax_in_place(&mut z);
    Ok(z)
}

pub fn importance_row(
    example_id: u64,
    step: u64,
    features: &[f64],
    store: &PrototypeStore,
) -> Result<ImportanceRow> {
    let z = importance(features, store)?;
    Ok(ImportanceRow {
        example_id,
        step,
        weights: store.prototypes().iter().map(|p| p.id).zip(z).collect(),
    })
}

/// Class distribution predicted by a single prototype.
pub fn prototype_prediction(proto: &Prototype, mode: HeadMode) -> Result<Vec<f64>> {
    match mode {
        HeadMode::Classification { indicator: false, .. } => Ok(math::softmax(&proto.logits)),
        HeadMode::Classification {
            classes,
            indicator: true,
        } => {
            let mut out = vec![0.0; classes];
            out[proto.home_class] = 1.0;
            Ok(out)
        }
        HeadMode::Regression { .. } => Err(Error::ModeMismatch {
            expected: "classification",
        }),
    }
}

pub fn classify(features: &[f64], store: &PrototypeStore) -> Result<Prediction> {
    let HeadMode::Classification { classes, .. } = store.mode() else {
        return Err(Error::ModeMismatch {
            expected: "classification",
        });
    };
    let z = importance(features, store)?;
    let mut probs = vec![0.0; classes];
    for (proto, &zk) in store.prototypes().iter().zip(&z) {
        let q = prototype_prediction(proto, store.mode())?;
        for (acc, qc) in probs.iter_mut().zip(q) {
            *acc += zk * qc;
        }
    }
    Ok(Prediction {
        output: Output::ClassProbs(probs),
        importance: z,
    })
}

pub fn regress(features: &[f64], store: &PrototypeStore) -> Result<Prediction> {
    if store.mode().is_classification() {
        return Err(Error::ModeMismatch {
            expected: "regression",
        });
    }
    let z = importance(features, store)?;
    let estimate = store
        .prototypes()
        .iter()
        .zip(&z)
        .map(|(p, zk)| zk * p.logits[0])
        .sum();
    Ok(Prediction {
        output: Output::Estimate(estimate),
        importance: z,
    })
}

/// Classification or regression, whichever the store is configured for.
pub fn predict(features: &[f64], store: &PrototypeStore) -> Result<Prediction> {
    match store.mode() {
        HeadMode::Classification { .. } => classify(features, store),
        HeadMode::Regression { .. } => regress(features, store),
    }
}

/// The `m` examples closest to `embedding` in L2, ascending, ties by id.
pub fn nearest_examples(
    embedding: &[f64],
    dataset: &[EmbeddedExample],
    m: usize,
) -> Vec<(u64, f64)> {
    let mut scored: Vec<(u64, f64)> = dataset
        .iter()
        .map(|ex| (ex.id, math::distance(embedding, &ex.features)))
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored.truncate(m);
    scored
}

/// Ids of examples strictly within L2 distance `tau` of `embedding`, by id.
pub fn examples_within(embedding: &[f64], dataset: &[EmbeddedExample], tau: f64) -> Vec<u64> {
    let mut ids: Vec<u64> = dataset
        .iter()
        .filter(|ex| math::distance(embedding, &ex.features) < tau)
        .map(|ex| ex.id)
        .collect();
    ids.sort_unstable();
    ids
}

fn check_dim(features: &[f64], store: &PrototypeStore) -> Result<()> {
    if features.len() != store.dim() {
        return Err(Error::ShapeMismatch {
            expected: store.dim(),
            actual: features.len(),
        });
    }
    Ok(())
}
