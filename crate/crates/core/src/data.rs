//! Labeled examples and datasets.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub type ClassLabel = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Class(ClassLabel),
    Value(f64),
}

impl Target {
    pub fn class(&self) -> Option<ClassLabel> {
        match *self {
            Target::Class(c) => Some(c),
            Target::Value(_) => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Target::Value(v) => Some(v),
            Target::Class(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classification { classes: usize },
    Regression,
}

/// A dataset record: the encoder input (or embedding-table row) and its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: u64,
    pub input: Vec<f64>,
    pub target: Target,
}

/// An example after the encoder has mapped it into prototype space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedExample {
    pub id: u64,
    pub features: Vec<f64>,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: Task,
    pub dim: usize,
    pub examples: Vec<Example>,
}

impl Dataset {
    /// Builds a dataset after checking dimensions, label ranges, finiteness
    /// and id uniqueness.
    pub fn new(task: Task, dim: usize, examples: Vec<Example>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for ex in &examples {
            if !ids.insert(ex.id) {
                return Err(invalid(format!("duplicate example id {}", ex.id)));
            }
            if ex.input.len() != dim {
                return Err(invalid(format!(
                    "example {} has {} features, expected {dim}",
                    ex.id,
                    ex.input.len()
                )));
            }
            if ex.input.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("example {} has non-finite features", ex.id)));
            }
            match (task, ex.target) {
                (Task::Classification { classes }, Target::Class(c)) if c < classes => {}
                (Task::Regression, Target::Value(v)) if v.is_finite() => {}
                _ => return Err(invalid(format!("example {} has an invalid label", ex.id))),
            }
        }
        Ok(Self { task, dim, examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn classes(&self) -> Option<usize> {
        match self.task {
            Task::Classification { classes } => Some(classes),
            Task::Regression => None,
        }
    }
}

fn invalid(reason: alloc::string::String) -> Error {
    Error::ConfigInvalid {
        field: "dataset",
        reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_duplicate_ids_and_bad_labels() {
        let ex = |id, c| Example {
            id,
            input: vec![0.0],
            target: Target::Class(c),
        };
        let task = Task::Classification { classes: 2 };
        assert!(Dataset::new(task, 1, vec![ex(0, 0), ex(1, 1)]).is_ok());
        assert!(Dataset::new(task, 1, vec![ex(0, 0), ex(0, 1)]).is_err());
        assert!(Dataset::new(task, 1, vec![ex(0, 2)]).is_err());
        assert!(Dataset::new(Task::Regression, 1, vec![ex(0, 0)]).is_err());
    }
}
