//! Losses, analytic gradients, constraint projection and Adam.
//!
//! The task loss is cross-entropy on the mixture prediction (classification)
//! or squared error on the mixture estimate (regression), averaged over the
//! batch. The diversity loss is `Σ_{j<k} max(0, λ - |p_j - p_k|)^2`. The total
//! is `l0 + rho_d * l_div`.
//!
//! Variances are parameterised by their logarithm, so gradients reported for
//! `log_sigma` and `shared_log_sigma` are with respect to `ln σ`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::config::TrainConfig;
use crate::data::{EmbeddedExample, Example, Target};
use crate::dynamics::{self, Lambda};
use crate::encoder::{Encoder, EncoderGrads, EncoderTrace};
use crate::error::{Error, Result};
use crate::inference::{self, Output};
use crate::math;
use crate::store::{HeadMode, PrototypeId, PrototypeStore};

/// Probabilities below this are clamped before taking the log.
pub const LOG_FLOOR: f64 = 1e-12;

/// Everything trainable: prototypes, the encoder and the shared variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub store: PrototypeStore,
    pub encoder: Encoder,
    /// `ln σ` of the shared cluster variance read by the creation threshold.
    pub shared_log_sigma: f64,
}

impl Model {
    pub fn lambda(&self, config: &TrainConfig) -> Lambda {
        dynamics::compute_lambda(
            math::exp(self.shared_log_sigma),
            config.rho,
            config.alpha,
            self.store.dim(),
            config.lambda_floor,
        )
    }

    pub fn embed(&self, example: &Example) -> Result<EmbeddedExample> {
        Ok(EmbeddedExample {
            id: example.id,
            features: self.encoder.encode(&example.input)?,
            target: example.target,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l0: f64,
    pub l_div: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(l0: f64, l_div: f64, rho_d: f64) -> Self {
        Self {
            l0,
            l_div,
            total: l0 + rho_d * l_div,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeGrad {
    pub embedding: Vec<f64>,
    pub logits: Vec<f64>,
    pub log_sigma: f64,
}

/// Gradients of the total loss; `prototypes` follows store order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub prototypes: Vec<PrototypeGrad>,
    pub shared_log_sigma: f64,
    pub encoder: EncoderGrads,
}

impl Gradients {
    pub fn zeros(model: &Model) -> Self {
        Self {
            prototypes: model
                .store
                .prototypes()
                .iter()
                .map(|p| PrototypeGrad {
                    embedding: vec![0.0; p.embedding.len()],
                    logits: vec![0.0; p.logits.len()],
                    log_sigma: 0.0,
                })
                .collect(),
            shared_log_sigma: 0.0,
            encoder: model.encoder.zero_grads(),
        }
    }

    fn check_finite(&self) -> Result<()> {
        for g in &self.prototypes {
            if !g.embedding.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteGradient("prototype embedding"));
            }
            if !g.logits.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteGradient("prototype logits"));
            }
            if !g.log_sigma.is_finite() {
                return Err(Error::NonFiniteGradient("prototype variance"));
            }
        }
        if !self.shared_log_sigma.is_finite() {
            return Err(Error::NonFiniteGradient("shared variance"));
        }
        for l in &self.encoder.layers {
            if !l.weight.iter().chain(&l.bias).all(|v| v.is_finite()) {
                return Err(Error::NonFiniteGradient("encoder"));
            }
        }
        Ok(())
    }
}

/// Loss, gradients and the per-example importance seen by the backward pass.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub loss: LossBreakdown,
    pub grads: Gradients,
    /// Importance rows in store order, one per batch example.
    pub importance: Vec<Vec<f64>>,
}

/// Mean task loss of already-embedded examples, via the inference path.
pub fn task_loss(batch: &[EmbeddedExample], store: &PrototypeStore) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::ConfigInvalid {
            field: "batch",
            reason: "empty batch".into(),
        });
    }
    let mut sum = 0.0;
    for ex in batch {
        let pred = inference::predict(&ex.features, store)?;
        sum += match (&pred.output, ex.target) {
            (Output::ClassProbs(p), Target::Class(c)) => -math::ln(p[c].max(LOG_FLOOR)),
            (Output::Estimate(y_hat), Target::Value(y)) => (y_hat - y) * (y_hat - y),
            (Output::ClassProbs(_), _) => {
                return Err(Error::ModeMismatch {
                    expected: "classification",
                })
            }
            (Output::Estimate(_), _) => {
                return Err(Error::ModeMismatch {
                    expected: "regression",
                })
            }
        };
    }
    Ok(sum / batch.len() as f64)
}

/// Hinge gap `λ - |a - b|` and the distance, or `None` when the pair is at
/// least `λ` apart. Stops summing once the squared distance reaches `λ^2`.
fn hinge(a: &[f64], b: &[f64], lambda: f64) -> Option<(f64, f64)> {
    if lambda <= 0.0 {
        return None;
    }
    let bound = lambda * lambda;
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += (x - y) * (x - y);
        if s >= bound {
            return None;
        }
    }
    let r = math::sqrt(s);
    let gap = lambda - r;
    (gap > 0.0).then_some((gap, r))
}

/// `Σ_{j<k} max(0, λ - |p_j - p_k|)^2`.
pub fn diversity_loss(store: &PrototypeStore, lambda: f64) -> f64 {
    let protos = store.prototypes();
    let mut total = 0.0;
    for (j, pj) in protos.iter().enumerate() {
        for pk in &protos[j + 1..] {
            if let Some((gap, _)) = hinge(&pj.embedding, &pk.embedding, lambda) {
                total += gap * gap;
            }
        }
    }
    total
}

pub fn encode_batch(batch: &[Example], encoder: &Encoder) -> Result<Vec<EncoderTrace>> {
    batch.iter().map(|ex| encoder.forward(&ex.input)).collect()
}

/// Total loss and its exact gradients for one batch.
///
/// `traces` are the encoder forward passes of `batch`. `lambda` is the
/// threshold for this step; it only receives gradient when
/// `config.lambda_gradient` is set and it was not clamped.
pub fn backward(
    batch: &[Example],
    traces: &[EncoderTrace],
    model: &Model,
    lambda: Lambda,
    config: &TrainConfig,
) -> Result<BatchResult> {
    let store = &model.store;
    if batch.is_empty() {
        return Err(Error::ConfigInvalid {
            field: "batch",
            reason: "empty batch".into(),
        });
    }
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let protos = store.prototypes();
    let k = protos.len();
    let dim = store.dim();
    let inv_batch = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros(model);
    let mut importance = Vec::with_capacity(batch.len());
    let mut l0 = 0.0;

    let indicator = matches!(store.mode(), HeadMode::Classification { indicator: true, .. });
    let per_proto: Vec<Vec<f64>> = match store.mode() {
        HeadMode::Classification { .. } => protos
            .iter()
            .map(|p| inference::prototype_prediction(p, store.mode()))
            .collect::<Result<_>>()?,
        HeadMode::Regression { .. } => Vec::new(),
    };
    let inv_var: Vec<f64> = protos
        .iter()
        .map(|p| math::exp(-2.0 * p.log_sigma))
        .collect();

    let mut diff = vec![0.0; k * dim];
    let mut d2 = vec![0.0; k];
    let mut dz = vec![0.0; k];
    for (ex, trace) in batch.iter().zip(traces) {
        let f = trace.output();
        if f.len() != dim {
            return Err(Error::ShapeMismatch {
                expected: dim,
                actual: f.len(),
            });
        }
        // log densities, then normalized importance
        let mut z = vec![0.0; k];
        for (i, p) in protos.iter().enumerate() {
            let row = &mut diff[i * dim..(i + 1) * dim];
            let mut s = 0.0;
            for ((r, fv), pv) in row.iter_mut().zip(f).zip(&p.embedding) {
                *r = fv - pv;
                s += *r * *r;
            }
            d2[i] = s;
            z[i] = -0.5 * s * inv_var[i] - dim as f64 * p.log_sigma;
        }
        math::softmax_in_place(&mut z);

        match ex.target {
            Target::Class(y) => {
                let HeadMode::Classification { .. } = store.mode() else {
                    return Err(Error::ModeMismatch {
                        expected: "regression",
                    });
                };
                let p_y: f64 = z.iter().zip(&per_proto).map(|(zk, q)| zk * q[y]).sum();
                l0 += -math::ln(p_y.max(LOG_FLOOR));
                let g = if p_y > LOG_FLOOR {
                    -inv_batch / p_y
                } else {
                    0.0
                };
                for i in 0..k {
                    let q = &per_proto[i];
                    dz[i] = g * q[y];
                    if !indicator {
                        let scale = g * z[i];
                        for (c, dl) in grads.prototypes[i].logits.iter_mut().enumerate() {
                            let kron = if c == y { 1.0 } else { 0.0 };
                            *dl += scale * q[c] * (kron - q[y]);
                        }
                    }
                }
            }
            Target::Value(y) => {
                let HeadMode::Regression { .. } = store.mode() else {
                    return Err(Error::ModeMismatch {
                        expected: "classification",
                    });
                };
                let y_hat: f64 = z.iter().zip(protos).map(|(zk, p)| zk * p.logits[0]).sum();
                l0 += (y_hat - y) * (y_hat - y);
                let g = 2.0 * (y_hat - y) * inv_batch;
                for (i, p) in protos.iter().enumerate() {
                    dz[i] = g * p.logits[0];
                    grads.prototypes[i].logits[0] += g * z[i];
                }
            }
        }

        // back through the softmax to log densities
        let mean_dz: f64 = z.iter().zip(&dz).map(|(a, b)| a * b).sum();
        let mut df = vec![0.0; dim];
        for i in 0..k {
            let da = z[i] * (dz[i] - mean_dz);
            if da == 0.0 {
                continue;
            }
            let scale = da * inv_var[i];
            let row = &diff[i * dim..(i + 1) * dim];
            let pg = &mut grads.prototypes[i];
            for ((gp, dfv), r) in pg.embedding.iter_mut().zip(df.iter_mut()).zip(row) {
                *gp += scale * r;
                *dfv -= scale * r;
            }
            if config.train_sigmas {
                pg.log_sigma += da * (d2[i] * inv_var[i] - dim as f64);
            }
        }
        model.encoder.backward(trace, &df, &mut grads.encoder);
        importance.push(z);
    }
    l0 *= inv_batch;

    // diversity hinge
    let mut l_div = 0.0;
    let mut d_lambda = 0.0;
    for j in 0..k {
        for m in (j + 1)..k {
            let Some((gap, r)) = hinge(&protos[j].embedding, &protos[m].embedding, lambda.value)
            else {
                continue;
            };
            l_div += gap * gap;
            d_lambda += 2.0 * gap * config.rho_d;
            if r > 0.0 {
                let coef = -2.0 * gap * config.rho_d / r;
                for t in 0..dim {
                    let delta = protos[j].embedding[t] - protos[m].embedding[t];
                    grads.prototypes[j].embedding[t] += coef * delta;
                    grads.prototypes[m].embedding[t] -= coef * delta;
                }
            }
        }
    }
    if config.lambda_gradient {
        let sigma = math::exp(model.shared_log_sigma);
        grads.shared_log_sigma =
            d_lambda * dynamics::lambda_log_sigma_derivative(&lambda, sigma, config.rho, dim);
    }

    grads.check_finite()?;
    Ok(BatchResult {
        loss: LossBreakdown::new(l0, l_div, config.rho_d),
        grads,
        importance,
    })
}

/// Clamps home-class logits to `[0, ∞)` and all others to `(-∞, 0]`.
pub fn project_constraints(store: &mut PrototypeStore) {
    if !store.mode().is_classification() {
        return;
    }
    for p in store.prototypes_mut() {
        let home = p.home_class;
        for (c, l) in p.logits.iter_mut().enumerate() {
            *l = if c == home { l.max(0.0) } else { l.min(0.0) };
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One bias-corrected Adam update of `params`, without weight decay.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], cfg: &AdamConfig) -> Result<()> {
        for len in [params.len(), self.m.len(), self.v.len()] {
            if len != grads.len() {
                return Err(Error::ShapeMismatch {
                    expected: grads.len(),
                    actual: len,
                });
            }
        }
        self.t += 1;
        let bc1 = 1.0 - libm::pow(cfg.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(cfg.beta2, self.t as f64);
        for i in 0..grads.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= cfg.learning_rate * m_hat / (math::sqrt(v_hat) + cfg.eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeMoments {
    pub embedding: Moments,
    pub logits: Moments,
    pub log_sigma: Moments,
}

/// Adam state for every parameter group. Prototype slots are keyed by id and
/// created lazily, so spawned prototypes start with zero moments.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub adam: AdamConfig,
    pub prototypes: BTreeMap<PrototypeId, PrototypeMoments>,
    pub shared_log_sigma: Moments,
    /// `(weight, bias)` moments per encoder layer.
    pub encoder: Vec<(Moments, Moments)>,
}

impl OptimizerState {
    pub fn new(adam: AdamConfig, encoder: &Encoder) -> Self {
        Self {
            adam,
            prototypes: BTreeMap::new(),
            shared_log_sigma: Moments::zeros(1),
            encoder: encoder
                .layers()
                .iter()
                .map(|l| (Moments::zeros(l.weight.len()), Moments::zeros(l.bias.len())))
                .collect(),
        }
    }

    pub fn forget(&mut self, id: PrototypeId) {
        self.prototypes.remove(&id);
    }
}

/// Applies one Adam step to every trainable group, then re-projects logits.
pub fn optimizer_step(
    model: &mut Model,
    grads: &Gradients,
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    if grads.prototypes.len() != model.store.len() {
        return Err(Error::ShapeMismatch {
            expected: model.store.len(),
            actual: grads.prototypes.len(),
        });
    }
    let adam = state.adam;
    let indicator = matches!(
        model.store.mode(),
        HeadMode::Classification { indicator: true, .. }
    );
    for (p, g) in model.store.prototypes_mut().iter_mut().zip(&grads.prototypes) {
        let slot = state
            .prototypes
            .entry(p.id)
            .or_insert_with(|| PrototypeMoments {
                embedding: Moments::zeros(p.embedding.len()),
                logits: Moments::zeros(p.logits.len()),
                log_sigma: Moments::zeros(1),
            });
        slot.embedding.update(&mut p.embedding, &g.embedding, &adam)?;
        if !indicator {
            slot.logits.update(&mut p.logits, &g.logits, &adam)?;
        }
        if config.train_sigmas {
            let mut s = [p.log_sigma];
            slot.log_sigma.update(&mut s, &[g.log_sigma], &adam)?;
            p.log_sigma = s[0];
        }
    }
    if config.lambda_gradient {
        let mut s = [model.shared_log_sigma];
        state
            .shared_log_sigma
            .update(&mut s, &[grads.shared_log_sigma], &adam)?;
        model.shared_log_sigma = s[0];
    }
    if model.encoder.is_trainable() {
        if grads.encoder.layers.len() != model.encoder.layers().len() {
            return Err(Error::ShapeMismatch {
                expected: model.encoder.layers().len(),
                actual: grads.encoder.layers.len(),
            });
        }
        for ((layer, g), (mw, mb)) in model
            .encoder
            .layers_mut()
            .iter_mut()
            .zip(&grads.encoder.layers)
            .zip(state.encoder.iter_mut())
        {
            mw.update(&mut layer.weight, &g.weight, &adam)?;
            mb.update(&mut layer.bias, &g.bias, &adam)?;
        }
    }
    project_constraints(&mut model.store);
    Ok(())
}
