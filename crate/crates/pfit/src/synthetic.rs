//! Seeded Gaussian-blob datasets with several modes per class.
//!
//! Mode centers sit on a circle in the first two coordinates, adjacent
//! centers `separation` apart, and classes alternate around the circle. Two
//! classes with two modes each give the XOR layout. Example `i` belongs to
//! mode `i % (classes * modes_per_class)`.

use std::f64::consts::PI;

use pfit_core::{Dataset, Example, Target, Task};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub modes_per_class: usize,
    pub separation: f64,
    pub blob_std: f64,
    pub dim: usize,
    pub count: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 2,
            modes_per_class: 2,
            separation: 10.0,
            blob_std: 1.0,
            dim: 2,
            count: 400,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn xor(count: usize, seed: u64) -> Self {
        Self {
            count,
            seed,
            ..Self::default()
        }
    }

    pub fn modes(&self) -> usize {
        self.classes * self.modes_per_class
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(Error::config("classes", "must be at least 1"));
        }
        if self.modes_per_class == 0 {
            return Err(Error::config("modes_per_class", "must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        if self.dim == 1 && self.modes() > 2 {
            return Err(Error::config("dim", "more than two modes need dim >= 2"));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(Error::config("separation", "must be finite and nonnegative"));
        }
        if !(self.blob_std.is_finite() && self.blob_std > 0.0) {
            return Err(Error::config("blob_std", "must be finite and positive"));
        }
        Ok(())
    }

    /// Center of every mode, with its class.
    pub fn centers(&self) -> Vec<(Vec<f64>, usize)> {
        let t = self.modes();
        let radius = if t < 2 {
            0.0
        } else {
            self.separation / (2.0 * (PI / t as f64).sin())
        };
        (0..t)
            .map(|j| {
                let mut c = vec![0.0; self.dim];
                let angle = 2.0 * PI * j as f64 / t as f64;
                c[0] = radius * angle.cos();
                if self.dim > 1 {
                    c[1] = radius * angle.sin();
                }
                (c, j % self.classes)
            })
            .collect()
    }

    /// Most likely class under the true mixture, ties to the lowest class.
    pub fn bayes_class(&self, x: &[f64]) -> usize {
        let mut density = vec![0.0; self.classes];
        let inv = 1.0 / (2.0 * self.blob_std * self.blob_std);
        let centers = self.centers();
        // shift by the nearest center so far-away points do not underflow
        let nearest = centers
            .iter()
            .map(|(c, _)| sq(x, c))
            .fold(f64::INFINITY, f64::min);
        for (c, class) in &centers {
            density[*class] += (-(sq(x, c) - nearest) * inv).exp();
        }
        let mut best = 0;
        for (k, &d) in density.iter().enumerate() {
            if d > density[best] {
                best = k;
            }
        }
        best
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let centers = spec.centers();
    let noise = Normal::new(0.0, spec.blob_std)
        .map_err(|e| Error::config("blob_std", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let examples = (0..spec.count)
        .map(|i| {
            let (center, class) = &centers[i % centers.len()];
            Example {
                id: i as u64,
                input: center.iter().map(|c| c + noise.sample(&mut rng)).collect(),
                target: Target::Class(*class),
            }
        })
        .collect();
    Ok(Dataset::new(
        Task::Classification {
            classes: spec.classes,
        },
        spec.dim,
        examples,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_layout() {
        let spec = SynthSpec::xor(4, 0);
        let centers = spec.centers();
        assert_eq!(centers.len(), 4);
        assert_eq!(centers.iter().map(|c| c.1).collect::<Vec<_>>(), vec![0, 1, 0, 1]);
        // adjacent centers are `separation` apart, opposite ones share a class
        assert!((sq(&centers[0].0, &centers[1].0).sqrt() - 10.0).abs() < 1e-12);
        let sum: Vec<f64> = (0..2).map(|d| centers[0].0[d] + centers[2].0[d]).collect();
        assert!(sum.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_separation_collapses_modes() {
        let spec = SynthSpec {
            modes_per_class: 1,
            separation: 0.0,
            ..SynthSpec::default()
        };
        assert!(spec.centers().iter().all(|(c, _)| c.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            SynthSpec { classes: 0, ..SynthSpec::default() },
            SynthSpec { blob_std: 0.0, ..SynthSpec::default() },
            SynthSpec { separation: f64::NAN, ..SynthSpec::default() },
            SynthSpec { dim: 1, ..SynthSpec::default() },
        ] {
            assert_eq!(generate_synthetic(&spec).unwrap_err().exit_code(), 2);
        }
    }
}
