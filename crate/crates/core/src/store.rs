//! The prototype store: live prototypes, per-class buckets and the capacity cap.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::data::ClassLabel;
use crate::error::{Error, Result};
use crate::math;

/// Stable prototype identifier. Ids are handed out monotonically and never
/// reused, so importance rows recorded before a prune stay unambiguous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PrototypeId(pub u64);

impl fmt::Display for PrototypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Equal-width partition of the regression target range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionBins {
    pub min: f64,
    pub width: f64,
    pub count: usize,
}

impl RegressionBins {
    /// Bin index of `y`; values outside the fitted range clamp to the end bins.
    pub fn bin_of(&self, y: f64) -> usize {
        if self.count <= 1 || self.width <= 0.0 {
            return 0;
        }
        let raw = (y - self.min) / self.width;
        if raw <= 0.0 {
            0
        } else {
            (raw as usize).min(self.count - 1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadMode {
    /// Per-prototype class logits. With `indicator`, a prototype predicts a
    /// one-hot of its home class and its logits are ignored.
    Classification { classes: usize, indicator: bool },
    /// One scalar estimate per prototype. Home classes index target bins.
    Regression { bins: RegressionBins },
}

impl HeadMode {
    pub fn logit_len(&self) -> usize {
        match self {
            HeadMode::Classification { classes, .. } => *classes,
            HeadMode::Regression { .. } => 1,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, HeadMode::Classification { .. })
    }

    fn bucket_count(&self) -> usize {
        match self {
            HeadMode::Classification { classes, .. } => *classes,
            HeadMode::Regression { bins } => bins.count.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub id: PrototypeId,
    pub embedding: Vec<f64>,
    /// Class logits, or a single scalar estimate in regression mode.
    pub logits: Vec<f64>,
    /// Natural log of the prototype's Gaussian scale.
    pub log_sigma: f64,
    pub home_class: ClassLabel,
    /// Global example step at which the prototype was created.
    pub created_step: u64,
}

impl Prototype {
    /// A fresh classification prototype with `+beta` at `home_class` and
    /// `-beta` elsewhere. The id is assigned by [`PrototypeStore::add`].
    pub fn with_class_logits(
        embedding: Vec<f64>,
        home_class: ClassLabel,
        classes: usize,
        beta: f64,
        sigma: f64,
        created_step: u64,
    ) -> Self {
        let logits = (0..classes)
            .map(|c| if c == home_class { beta } else { -beta })
            .collect();
        Self {
            id: PrototypeId(0),
            embedding,
            logits,
            log_sigma: math::ln(sigma),
            home_class,
            created_step,
        }
    }

    pub fn with_estimate(
        embedding: Vec<f64>,
        estimate: f64,
        bin: usize,
        sigma: f64,
        created_step: u64,
    ) -> Self {
        Self {
            id: PrototypeId(0),
            embedding,
            logits: alloc::vec![estimate],
            log_sigma: math::ln(sigma),
            home_class: bin,
            created_step,
        }
    }

    pub fn sigma(&self) -> f64 {
        math::exp(self.log_sigma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeStore {
    mode: HeadMode,
    dim: usize,
    prototypes: Vec<Prototype>,
    class_index: BTreeMap<ClassLabel, Vec<PrototypeId>>,
    capacity: usize,
    next_id: u64,
}

impl PrototypeStore {
    pub fn new(mode: HeadMode, dim: usize, capacity: usize) -> Self {
        Self {
            mode,
            dim,
            prototypes: Vec::new(),
            class_index: BTreeMap::new(),
            capacity,
            next_id: 0,
        }
    }

    /// Rebuilds a store from persisted prototypes, keeping their ids.
    pub fn restore(
        mode: HeadMode,
        dim: usize,
        capacity: usize,
        next_id: u64,
        prototypes: Vec<Prototype>,
    ) -> Result<Self> {
        let mut store = Self::new(mode, dim, capacity);
        for proto in prototypes {
            if proto.id.0 >= next_id {
                return Err(Error::InvariantViolation(format!(
                    "prototype id {} is not below next id {next_id}",
                    proto.id
                )));
            }
            if store.get(proto.id).is_some() {
                return Err(Error::InvariantViolation(format!(
                    "duplicate prototype id {}",
                    proto.id
                )));
            }
            store.insert(proto)?;
        }
        store.next_id = next_id;
        Ok(store)
    }

    pub fn mode(&self) -> HeadMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.prototypes.len() >= self.capacity
    }

    pub fn prototypes(&self) -> &[Prototype] {
        &self.prototypes
    }

    pub(crate) fn prototypes_mut(&mut self) -> &mut [Prototype] {
        &mut self.prototypes
    }

    pub fn get(&self, id: PrototypeId) -> Option<&Prototype> {
        self.position(id).map(|i| &self.prototypes[i])
    }

    pub fn position(&self, id: PrototypeId) -> Option<usize> {
        self.prototypes.iter().position(|p| p.id == id)
    }

    /// Ids in class bucket `class`, in insertion order.
    pub fn class_ids(&self, class: ClassLabel) -> &[PrototypeId] {
        self.class_index.get(&class).map_or(&[], |v| v.as_slice())
    }

    pub fn class_len(&self, class: ClassLabel) -> usize {
        self.class_ids(class).len()
    }

    /// Appends a prototype, assigning it a fresh id.
    pub fn add(&mut self, mut proto: Prototype) -> Result<PrototypeId> {
        if self.is_full() {
            return Err(Error::CapacityExceeded {
                capacity: self.capacity,
            });
        }
        let id = PrototypeId(self.next_id);
        proto.id = id;
        self.insert(proto)?;
        self.next_id += 1;
        Ok(id)
    }

    fn insert(&mut self, proto: Prototype) -> Result<()> {
        if self.is_full() {
            return Err(Error::CapacityExceeded {
                capacity: self.capacity,
            });
        }
        self.check(&proto)?;
        self.class_index
            .entry(proto.home_class)
            .or_default()
            .push(proto.id);
        self.prototypes.push(proto);
        Ok(())
    }

    pub fn remove(&mut self, id: PrototypeId) -> Result<Prototype> {
        let pos = self.position(id).ok_or(Error::UnknownId(id))?;
        let proto = self.prototypes.remove(pos);
        if let Some(bucket) = self.class_index.get_mut(&proto.home_class) {
            bucket.retain(|&other| other != id);
            if bucket.is_empty() {
                self.class_index.remove(&proto.home_class);
            }
        }
        Ok(proto)
    }

    /// Prototypes of `class` (or all of them), in insertion order.
    pub fn query(&self, class: Option<ClassLabel>) -> Vec<&Prototype> {
        match class {
            None => self.prototypes.iter().collect(),
            Some(c) => self
                .prototypes
                .iter()
                .filter(|p| p.home_class == c)
                .collect(),
        }
    }

    fn check(&self, proto: &Prototype) -> Result<()> {
        let fail = |msg| Err(Error::InvariantViolation(msg));
        if proto.embedding.len() != self.dim {
            return fail(format!(
                "embedding has length {}, expected {}",
                proto.embedding.len(),
                self.dim
            ));
        }
        if proto.embedding.iter().any(|v| !v.is_finite()) {
            return fail(format!("prototype {} has a non-finite embedding", proto.id));
        }
        if !proto.log_sigma.is_finite() {
            return fail(format!("prototype {} has a non-positive variance", proto.id));
        }
        if proto.logits.len() != self.mode.logit_len() {
            return fail(format!(
                "logits have length {}, expected {}",
                proto.logits.len(),
                self.mode.logit_len()
            ));
        }
        if proto.logits.iter().any(|v| !v.is_finite()) {
            return fail(format!("prototype {} has non-finite logits", proto.id));
        }
        if proto.home_class >= self.mode.bucket_count() {
            return fail(format!("home class {} out of range", proto.home_class));
        }
        if let HeadMode::Classification { .. } = self.mode {
            let feasible = proto.logits.iter().enumerate().all(|(c, &l)| {
                if c == proto.home_class {
                    l >= 0.0
                } else {
                    l <= 0.0
                }
            });
            if !feasible {
                return fail(format!("prototype {} violates logit sign constraints", proto.id));
            }
        }
        Ok(())
    }
}
