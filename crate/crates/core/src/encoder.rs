//! Feature encoders standing in for a pretrained language model.
//!
//! Three kinds are supported: a frozen embedding table (the example's input
//! vector is its table row), the same table followed by a trainable affine
//! projection, and a small tanh MLP with a linear output layer.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    FrozenTable,
    FrozenTableWithProjection,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Hidden layer widths; MLP only.
    pub hidden: Vec<usize>,
    pub trainable: bool,
}

impl EncoderSpec {
    pub fn frozen_table(dim: usize) -> Self {
        Self {
            kind: EncoderKind::FrozenTable,
            input_dim: dim,
            output_dim: dim,
            hidden: Vec::new(),
            trainable: false,
        }
    }

    pub fn projection(input_dim: usize, output_dim: usize, trainable: bool) -> Self {
        Self {
            kind: EncoderKind::FrozenTableWithProjection,
            input_dim,
            output_dim,
            hidden: Vec::new(),
            trainable,
        }
    }

    pub fn mlp(input_dim: usize, hidden: Vec<usize>, output_dim: usize, trainable: bool) -> Self {
        Self {
            kind: EncoderKind::Mlp,
            input_dim,
            output_dim,
            hidden,
            trainable,
        }
    }

    /// `(fan_in, fan_out)` of each affine layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        match self.kind {
            EncoderKind::FrozenTable => Vec::new(),
            EncoderKind::FrozenTableWithProjection => vec![(self.input_dim, self.output_dim)],
            EncoderKind::Mlp => {
                let mut dims = vec![self.input_dim];
                dims.extend(&self.hidden);
                dims.push(self.output_dim);
                dims.windows(2).map(|w| (w[0], w[1])).collect()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::ConfigInvalid {
                field: "encoder",
                reason: "layer widths must be positive".into(),
            });
        }
        if self.kind == EncoderKind::FrozenTable && self.input_dim != self.output_dim {
            return Err(Error::ConfigInvalid {
                field: "encoder",
                reason: "a bare table needs output_dim = input_dim".into(),
            });
        }
        Ok(())
    }
}

/// Affine layer `y = x W + b` with `W` stored row-major as `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weight: vec![0.0; fan_in * fan_out],
            bias: vec![0.0; fan_out],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.weight[i * self.fan_out..(i + 1) * self.fan_out];
            for (yj, wij) in y.iter_mut().zip(row) {
                *yj += xi * wij;
            }
        }
        y
    }
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    /// Input of each layer; the last entry is the encoder output.
    activations: Vec<Vec<f64>>,
}

impl EncoderTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map_or(&[], |v| v.as_slice())
    }
}

/// Gradient buffers shaped like the encoder's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub layers: Vec<Layer>,
}

impl EncoderGrads {
    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|&g| g == 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    spec: EncoderSpec,
    layers: Vec<Layer>,
}

impl Encoder {
    /// Builds an encoder with seeded uniform `±1/sqrt(fan_in)` weights and
    /// zero biases.
    pub fn new<R: Rng + ?Sized>(spec: EncoderSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let bound = 1.0 / math::sqrt(fan_in as f64);
                let mut layer = Layer::zeros(fan_in, fan_out);
                for w in &mut layer.weight {
                    *w = rng.random_range(-bound..bound);
                }
                layer
            })
            .collect();
        Ok(Self { spec, layers })
    }

    /// Square projection initialised to the identity map.
    pub fn identity_projection(dim: usize, trainable: bool) -> Self {
        let mut layer = Layer::zeros(dim, dim);
        for i in 0..dim {
            layer.weight[i * dim + i] = 1.0;
        }
        Self {
            spec: EncoderSpec::projection(dim, dim, trainable),
            layers: vec![layer],
        }
    }

    pub fn frozen_table(dim: usize) -> Self {
        Self {
            spec: EncoderSpec::frozen_table(dim),
            layers: Vec::new(),
        }
    }

    /// Reassembles an encoder from persisted layers.
    pub fn from_layers(spec: EncoderSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::ShapeMismatch {
                expected: shapes.len(),
                actual: layers.len(),
            });
        }
        for ((fan_in, fan_out), layer) in shapes.into_iter().zip(&layers) {
            if layer.fan_in != fan_in
                || layer.fan_out != fan_out
                || layer.weight.len() != fan_in * fan_out
                || layer.bias.len() != fan_out
            {
                return Err(Error::ShapeMismatch {
                    expected: fan_in * fan_out,
                    actual: layer.weight.len(),
                });
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    /// Whether the optimizer should update this encoder.
    pub fn is_trainable(&self) -> bool {
        self.spec.trainable && !self.layers.is_empty()
    }

    pub fn zero_grads(&self) -> EncoderGrads {
        EncoderGrads {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.fan_in, l.fan_out))
                .collect(),
        }
    }

    pub fn encode(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.activations.pop().unwrap_or_default())
    }

    /// Encoding for prototype initialization. The encoder has no stochastic
    /// training-mode state, so this is the plain forward pass.
    pub fn encode_frozen_for_init(&self, inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        inputs.iter().map(|x| self.encode(x)).collect()
    }

    pub fn forward(&self, input: &[f64]) -> Result<EncoderTrace> {
        if input.len() != self.spec.input_dim {
            return Err(Error::ShapeMismatch {
                expected: self.spec.input_dim,
                actual: input.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(activations.last().unwrap());
            if self.spec.kind == EncoderKind::Mlp && i < last {
                y.iter_mut().for_each(|v| *v = math::tanh(*v));
            }
            activations.push(y);
        }
        Ok(EncoderTrace { activations })
    }

    /// Accumulates parameter gradients for one example given `d_output`.
    pub fn backward(&self, trace: &EncoderTrace, d_output: &[f64], grads: &mut EncoderGrads) {
        if !self.is_trainable() {
            return;
        }
        let mut delta = d_output.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &trace.activations[i];
            let g = &mut grads.layers[i];
            for (gb, d) in g.bias.iter_mut().zip(&delta) {
                *gb += d;
            }
            for (r, &xr) in input.iter().enumerate() {
                let row = &mut g.weight[r * layer.fan_out..(r + 1) * layer.fan_out];
                for (gw, d) in row.iter_mut().zip(&delta) {
                    *gw += xr * d;
                }
            }
            if i == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.fan_in];
            for (r, p) in prev.iter_mut().enumerate() {
                let row = &layer.weight[r * layer.fan_out..(r + 1) * layer.fan_out];
                *p = row.iter().zip(&delta).map(|(w, d)| w * d).sum();
            }
            if self.spec.kind == EncoderKind::Mlp {
                // input of layer i is the tanh output of layer i - 1
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
            }
            delta = prev;
        }
    }
}

/// Embedding rows keyed by example id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    rows: BTreeMap<u64, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn insert(&mut self, id: u64, row: Vec<f64>) {
        self.rows.insert(id, row);
    }

    pub fn row(&self, id: u64) -> Result<&[f64]> {
        self.rows
            .get(&id)
            .map(|r| r.as_slice())
            .ok_or(Error::UnknownExample(id))
    }

    /// Looks the example up and runs it through `encoder`.
    pub fn encode(&self, encoder: &Encoder, id: u64) -> Result<Vec<f64>> {
        encoder.encode(self.row(id)?)
    }
}

impl FromIterator<(u64, Vec<f64>)> for EmbeddingTable {
    fn from_iter<I: IntoIterator<Item = (u64, Vec<f64>)>>(iter: I) -> Self {
        Self {
            rows: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_projection_passes_rows_through() {
        let enc = Encoder::identity_projection(3, true);
        assert_eq!(enc.encode(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
        let table: EmbeddingTable = [(4, vec![0.25, 0.0, 9.0])].into_iter().collect();
        assert_eq!(table.encode(&enc, 4).unwrap(), vec![0.25, 0.0, 9.0]);
        assert_eq!(table.encode(&enc, 5), Err(Error::UnknownExample(5)));
    }

    #[test]
    fn zero_projection_maps_everything_to_zero() {
        let spec = EncoderSpec::projection(3, 2, true);
        let enc = Encoder::from_layers(spec, vec![Layer::zeros(3, 2)]).unwrap();
        assert_eq!(enc.encode(&[5.0, 1.0, -7.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            enc.encode(&[1.0]),
            Err(Error::ShapeMismatch {
                expected: 3,
                actual: 1
            })
        );
    }

    #[test]
    fn zero_weight_mlp_outputs_its_bias() {
        let spec = EncoderSpec::mlp(2, vec![4, 3], 2, true);
        let mut layers: Vec<Layer> = spec
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| Layer::zeros(i, o))
            .collect();
        layers[2].bias = vec![0.3, -1.2];
        let enc = Encoder::from_layers(spec, layers).unwrap();
        assert_eq!(enc.encode(&[10.0, -3.0]).unwrap(), vec![0.3, -1.2]);
        assert_eq!(enc.encode(&[0.0, 0.0]).unwrap(), vec![0.3, -1.2]);
    }

    #[test]
    fn frozen_table_is_identity_with_no_params() {
        let enc = Encoder::frozen_table(2);
        assert!(!enc.is_trainable());
        let out = enc.encode_frozen_for_init(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(out, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn seeded_init_is_bounded_and_deterministic() {
        let spec = EncoderSpec::mlp(4, vec![8], 3, true);
        let a = Encoder::new(spec.clone(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = Encoder::new(spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.layers()[0].weight.iter().all(|w| w.abs() <= 0.5));
    }

    #[test]
    fn mlp_backward_matches_finite_differences() {
        let spec = EncoderSpec::mlp(3, vec![5], 2, true);
        let enc = Encoder::new(spec, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let x = [0.3, -0.7, 1.1];
        let upstream = [0.8, -0.4];
        // scalar objective: upstream · encode(x)
        let f = |e: &Encoder| -> f64 {
            e.encode(&x).unwrap().iter().zip(&upstream).map(|(a, b)| a * b).sum()
        };
        let mut grads = enc.zero_grads();
        enc.backward(&enc.forward(&x).unwrap(), &upstream, &mut grads);
        let h = 1e-6;
        for l in 0..enc.layers().len() {
            for w in 0..enc.layers()[l].weight.len() {
                let mut plus = enc.clone();
                plus.layers_mut()[l].weight[w] += h;
                let mut minus = enc.clone();
                minus.layers_mut()[l].weight[w] -= h;
                let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
                assert!((numeric - grads.layers[l].weight[w]).abs() < 1e-8);
            }
        }
    }
}
