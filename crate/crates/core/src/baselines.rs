//! ProtoNet reference head: one class-mean prototype per class and a softmax
//! over negative squared distances.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, Example, Target, Task};
use crate::encoder::{Encoder, EncoderGrads};
use crate::error::{Error, Result};
use crate::math;
use crate::objective::{AdamConfig, Moments, LOG_FLOOR};

/// Class-mean prototypes under `encoder`, indexed by class.
pub fn protonet_fit(dataset: &Dataset, encoder: &Encoder) -> Result<Vec<Vec<f64>>> {
    let Task::Classification { classes } = dataset.task else {
        return Err(Error::ModeMismatch {
            expected: "classification",
        });
    };
    let dim = encoder.output_dim();
    let mut sums = vec![vec![0.0; dim]; classes];
    let mut counts = vec![0usize; classes];
    for ex in &dataset.examples {
        let Target::Class(c) = ex.target else {
            continue;
        };
        let f = encoder.encode(&ex.input)?;
        for (s, v) in sums[c].iter_mut().zip(&f) {
            *s += v;
        }
        counts[c] += 1;
    }
    for (class, (sum, &n)) in sums.iter_mut().zip(&counts).enumerate() {
        if n == 0 {
            return Err(Error::EmptyClass { class });
        }
        sum.iter_mut().for_each(|s| *s /= n as f64);
    }
    Ok(sums)
}

/// `softmax_c(-|x - p_c|^2)`.
pub fn protonet_classify(features: &[f64], prototypes: &[Vec<f64>]) -> Result<Vec<f64>> {
    if prototypes.is_empty() {
        return Err(Error::EmptyStore);
    }
    let neg: Vec<f64> = prototypes
        .iter()
        .map(|p| -math::squared_distance(features, p))
        .collect();
    Ok(math::softmax(&neg))
}

/// Trainable ProtoNet head sharing the encoder and cross-entropy loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtoNet {
    pub prototypes: Vec<Vec<f64>>,
    pub encoder: Encoder,
}

impl ProtoNet {
    pub fn fit(dataset: &Dataset, encoder: Encoder) -> Result<Self> {
        Ok(Self {
            prototypes: protonet_fit(dataset, &encoder)?,
            encoder,
        })
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        protonet_classify(&self.encoder.encode(input)?, &self.prototypes)
    }

    pub fn accuracy(&self, dataset: &Dataset) -> Result<f64> {
        let mut correct = 0usize;
        for ex in &dataset.examples {
            let probs = self.predict(&ex.input)?;
            let mut best = 0;
            for (c, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = c;
                }
            }
            if ex.target == Target::Class(best) {
                correct += 1;
            }
        }
        Ok(correct as f64 / dataset.len().max(1) as f64)
    }

    /// Mean cross-entropy of `batch` with gradients for prototypes and encoder.
    pub fn loss_and_grads(&self, batch: &[Example]) -> Result<(f64, Vec<Vec<f64>>, EncoderGrads)> {
        let dim = self.encoder.output_dim();
        let inv_batch = 1.0 / batch.len().max(1) as f64;
        let mut proto_grads = vec![vec![0.0; dim]; self.prototypes.len()];
        let mut enc_grads = self.encoder.zero_grads();
        let mut loss = 0.0;
        for ex in batch {
            let Target::Class(y) = ex.target else {
                return Err(Error::ModeMismatch {
                    expected: "classification",
                });
            };
            let trace = self.encoder.forward(&ex.input)?;
            let f = trace.output();
            let probs = protonet_classify(f, &self.prototypes)?;
            loss -= math::ln(probs[y].max(LOG_FLOOR));
            // d(-ln p_y)/d(logit_c) = p_c - [c = y]; logit_c = -|f - p_c|^2
            let mut df = vec![0.0; dim];
            for (c, proto) in self.prototypes.iter().enumerate() {
                let kron = if c == y { 1.0 } else { 0.0 };
                let g = (probs[c] - kron) * inv_batch;
                for t in 0..dim {
                    let r = f[t] - proto[t];
                    proto_grads[c][t] += 2.0 * g * r;
                    df[t] -= 2.0 * g * r;
                }
            }
            self.encoder.backward(&trace, &df, &mut enc_grads);
        }
        Ok((loss * inv_batch, proto_grads, enc_grads))
    }
}

/// Adam training loop for [`ProtoNet`] with the same batching and shuffling
/// as the prototype trainer.
#[derive(Debug, Clone)]
pub struct ProtoNetTrainer {
    pub net: ProtoNet,
    adam: AdamConfig,
    proto_moments: Vec<Moments>,
    encoder_moments: Vec<(Moments, Moments)>,
}

impl ProtoNetTrainer {
    pub fn new(net: ProtoNet, learning_rate: f64) -> Self {
        let proto_moments = net
            .prototypes
            .iter()
            .map(|p| Moments::zeros(p.len()))
            .collect();
        let encoder_moments = net
            .encoder
            .layers()
            .iter()
            .map(|l| (Moments::zeros(l.weight.len()), Moments::zeros(l.bias.len())))
            .collect();
        Self {
            net,
            adam: AdamConfig::new(learning_rate),
            proto_moments,
            encoder_moments,
        }
    }

    /// One optimizer step on `batch`; returns the loss before the update.
    pub fn step(&mut self, batch: &[Example]) -> Result<f64> {
        let (loss, proto_grads, enc_grads) = self.net.loss_and_grads(batch)?;
        for ((p, g), m) in self
            .net
            .prototypes
            .iter_mut()
            .zip(&proto_grads)
            .zip(&mut self.proto_moments)
        {
            m.update(p, g, &self.adam)?;
        }
        if self.net.encoder.is_trainable() {
            for ((layer, g), (mw, mb)) in self
                .net
                .encoder
                .layers_mut()
                .iter_mut()
                .zip(&enc_grads.layers)
                .zip(&mut self.encoder_moments)
            {
                mw.update(&mut layer.weight, &g.weight, &self.adam)?;
                mb.update(&mut layer.bias, &g.bias, &self.adam)?;
            }
        }
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(points: &[(&[f64], usize)]) -> Dataset {
        let examples = points
            .iter()
            .enumerate()
            .map(|(i, (x, c))| Example {
                id: i as u64,
                input: x.to_vec(),
                target: Target::Class(*c),
            })
            .collect();
        Dataset::new(Task::Classification { classes: 2 }, 2, examples).unwrap()
    }

    #[test]
    fn class_means() {
        let enc = Encoder::frozen_table(2);
        let single = dataset(&[(&[1.0, 1.0], 0), (&[4.0, -1.0], 1)]);
        assert_eq!(
            protonet_fit(&single, &enc).unwrap(),
            vec![vec![1.0, 1.0], vec![4.0, -1.0]]
        );
        let pair = dataset(&[(&[0.0, 0.0], 0), (&[2.0, 0.0], 0), (&[5.0, 5.0], 1)]);
        assert_eq!(protonet_fit(&pair, &enc).unwrap()[0], vec![1.0, 0.0]);
        let swapped = dataset(&[(&[2.0, 0.0], 0), (&[5.0, 5.0], 1), (&[0.0, 0.0], 0)]);
        assert_eq!(
            protonet_fit(&swapped, &enc).unwrap(),
            protonet_fit(&pair, &enc).unwrap()
        );
        let missing = dataset(&[(&[0.0, 0.0], 0)]);
        assert_eq!(protonet_fit(&missing, &enc), Err(Error::EmptyClass { class: 1 }));
    }

    #[test]
    fn softmax_over_negative_distances() {
        let protos = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        let mid = protonet_classify(&[1.0, 5.0], &protos).unwrap();
        assert!((mid[0] - 0.5).abs() < 1e-15);
        let near = protonet_classify(&[0.0, 0.0], &[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        // sigmoid(2) from mpmath
        assert!((near[0] - 0.880797077977882).abs() < 1e-12);
        // translating everything shifts all distances equally for a query on the bisector
        let shifted = protonet_classify(&[101.0, 5.0], &[vec![100.0, 0.0], vec![102.0, 0.0]]).unwrap();
        assert!((shifted[0] - mid[0]).abs() < 1e-15);
        assert_eq!(protonet_classify(&[0.0], &[]), Err(Error::EmptyStore));
    }

    #[test]
    fn distribution_invariant_to_common_distance_offset() {
        // an extra coordinate shared by every prototype adds a^2 to each distance
        let x = [0.3, -1.2];
        let base = protonet_classify(&x, &[vec![0.0, 0.0], vec![1.0, 2.0], vec![-2.0, 0.5]]).unwrap();
        let lifted = protonet_classify(
            &[0.3, -1.2, 0.0],
            &[vec![0.0, 0.0, 3.0], vec![1.0, 2.0, 3.0], vec![-2.0, 0.5, 3.0]],
        )
        .unwrap();
        for (a, b) in base.iter().zip(&lifted) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
