//! Prototype lifecycle: mixture initialization, threshold-gated creation,
//! the importance window and discounted pruning.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::config::TrainConfig;
use crate::data::{Dataset, EmbeddedExample, Target, Task};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::inference::ImportanceRow;
use crate::math;
use crate::store::{HeadMode, Prototype, PrototypeId, PrototypeStore, RegressionBins};

/// Seeds one prototype per class (or per nonempty target bin) from the mean
/// encoding of up to `n_init` sampled members.
pub fn init_prototypes<R: Rng + ?Sized>(
    dataset: &Dataset,
    encoder: &Encoder,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<PrototypeStore> {
    let dim = encoder.output_dim();
    match dataset.task {
        Task::Classification { classes } => {
            let mode = HeadMode::Classification {
                classes,
                indicator: config.indicator_logits,
            };
            let mut store = PrototypeStore::new(mode, dim, config.p_max);
            for class in 0..classes {
                let members: Vec<usize> = (0..dataset.len())
                    .filter(|&i| dataset.examples[i].target == Target::Class(class))
                    .collect();
                if members.is_empty() {
                    return Err(Error::EmptyClass { class });
                }
                let embedding = sampled_mean(dataset, &members, encoder, config.n_init, rng)?;
                store.add(Prototype::with_class_logits(
                    embedding,
                    class,
                    classes,
                    config.beta,
                    config.sigma0,
                    0,
                ))?;
            }
            Ok(store)
        }
        Task::Regression => {
            let bins = fit_bins(dataset, config.n_reg_bins)?;
            let mut store = PrototypeStore::new(HeadMode::Regression { bins }, dim, config.p_max);
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); bins.count];
            for (i, ex) in dataset.examples.iter().enumerate() {
                if let Target::Value(y) = ex.target {
                    members[bins.bin_of(y)].push(i);
                }
            }
            for (bin, idx) in members.iter().enumerate() {
                if idx.is_empty() {
                    continue;
                }
                let embedding = sampled_mean(dataset, idx, encoder, config.n_init, rng)?;
                let mean_y = idx
                    .iter()
                    .filter_map(|&i| dataset.examples[i].target.value())
                    .sum::<f64>()
                    / idx.len() as f64;
                store.add(Prototype::with_estimate(
                    embedding,
                    mean_y,
                    bin,
                    config.sigma0,
                    0,
                ))?;
            }
            Ok(store)
        }
    }
}

/// Equal-width bins over the target range; a constant target gets one bin.
pub fn fit_bins(dataset: &Dataset, count: usize) -> Result<RegressionBins> {
    let ys = dataset.examples.iter().filter_map(|e| e.target.value());
    let (min, max) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| {
        (lo.min(y), hi.max(y))
    });
    if min > max {
        return Err(Error::ConfigInvalid {
            field: "dataset",
            reason: "regression dataset has no targets".into(),
        });
    }
    if min == max {
        return Ok(RegressionBins {
            min,
            width: 0.0,
            count: 1,
        });
    }
    Ok(RegressionBins {
        min,
        width: (max - min) / count as f64,
        count,
    })
}

fn sampled_mean<R: Rng + ?Sized>(
    dataset: &Dataset,
    members: &[usize],
    encoder: &Encoder,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let take = n.min(members.len());
    let mut picked: Vec<usize> = index::sample(rng, members.len(), take)
        .into_iter()
        .map(|j| members[j])
        .collect();
    picked.sort_unstable();
    let inputs: Vec<&[f64]> = picked
        .iter()
        .map(|&i| dataset.examples[i].input.as_slice())
        .collect();
    let encoded = encoder.encode_frozen_for_init(&inputs)?;
    let mut mean = vec![0.0; encoder.output_dim()];
    for f in &encoded {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= take as f64;
    }
    Ok(mean)
}

/// Creation threshold, with the raw value kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lambda {
    pub value: f64,
    pub raw: f64,
    /// The raw value was non-positive and `value` is the floor.
    pub clamped: bool,
}

/// `2 sigma ln(alpha / (1 + rho/sigma)^(D/2))`, replaced by `floor` when it is
/// not positive.
pub fn compute_lambda(sigma: f64, rho: f64, alpha: f64, dim: usize, floor: f64) -> Lambda {
    let raw = 2.0 * sigma * (math::ln(alpha) - 0.5 * dim as f64 * math::ln(1.0 + rho / sigma));
    if raw > 0.0 {
        Lambda {
            value: raw,
            raw,
            clamped: false,
        }
    } else {
        Lambda {
            value: floor,
            raw,
            clamped: true,
        }
    }
}

/// `d lambda / d ln(sigma)` for the unclamped threshold.
pub fn lambda_log_sigma_derivative(lambda: &Lambda, sigma: f64, rho: f64, dim: usize) -> f64 {
    if lambda.clamped {
        0.0
    } else {
        lambda.raw + dim as f64 * sigma * rho / (sigma + rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Creation {
    Created(PrototypeId),
    /// Creation disabled by config or mode.
    Disabled,
    Warmup,
    /// Some same-class prototype lies within the threshold.
    Covered,
    /// The threshold was exceeded but the store is full.
    AtCapacity,
}

impl Creation {
    pub fn created(&self) -> Option<PrototypeId> {
        match *self {
            Creation::Created(id) => Some(id),
            _ => None,
        }
    }
}

/// Spawns a prototype at `example.features` when its squared distance to
/// every prototype of its own class exceeds `lambda`.
///
/// `step` is the optimizer step (gates warm-up); `example_step` becomes the
/// new prototype's creation time.
pub fn maybe_create(
    example: &EmbeddedExample,
    store: &mut PrototypeStore,
    lambda: f64,
    config: &TrainConfig,
    step: u64,
    example_step: u64,
) -> Result<Creation> {
    if !config.enable_creation {
        return Ok(Creation::Disabled);
    }
    let (class, proto) = match (store.mode(), example.target) {
        (HeadMode::Classification { classes, .. }, Target::Class(c)) => (
            c,
            Prototype::with_class_logits(
                example.features.clone(),
                c,
                classes,
                config.beta,
                config.sigma0,
                example_step,
            ),
        ),
        (HeadMode::Regression { bins }, Target::Value(y)) => {
            if !config.regression_creation {
                return Ok(Creation::Disabled);
            }
            let bin = bins.bin_of(y);
            (
                bin,
                Prototype::with_estimate(example.features.clone(), y, bin, config.sigma0, example_step),
            )
        }
        (HeadMode::Classification { .. }, _) => {
            return Err(Error::ModeMismatch {
                expected: "classification",
            })
        }
        (HeadMode::Regression { .. }, _) => {
            return Err(Error::ModeMismatch {
                expected: "regression",
            })
        }
    };
    if step < config.warmup_steps {
        return Ok(Creation::Warmup);
    }
    let nearest = store
        .query(Some(class))
        .iter()
        .map(|p| math::squared_distance(&example.features, &p.embedding))
        .fold(f64::INFINITY, f64::min);
    if nearest <= lambda {
        return Ok(Creation::Covered);
    }
    if store.is_full() {
        return Ok(Creation::AtCapacity);
    }
    Ok(Creation::Created(store.add(proto)?))
}

/// The last `delta` importance rows, one per example step.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceWindow {
    delta: usize,
    rows: VecDeque<ImportanceRow>,
    current_step: u64,
}

impl ImportanceWindow {
    pub fn new(delta: usize) -> Self {
        Self {
            delta,
            rows: VecDeque::new(),
            current_step: 0,
        }
    }

    /// Rebuilds a window from persisted rows (oldest first).
    pub fn restore(delta: usize, current_step: u64, rows: Vec<ImportanceRow>) -> Result<Self> {
        let mut window = Self::new(delta);
        for row in rows {
            window.record(row)?;
        }
        window.current_step = window.current_step.max(current_step);
        Ok(window)
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn current_step(&self) -> u64 {
        self.current_step
    }

    pub fn rows(&self) -> impl Iterator<Item = &ImportanceRow> {
        self.rows.iter()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn record(&mut self, row: ImportanceRow) -> Result<()> {
        if row.step < self.current_step {
            return Err(Error::NonMonotoneStep {
                step: row.step,
                current: self.current_step,
            });
        }
        self.current_step = row.step;
        self.rows.push_back(row);
        let delta = self.delta as u64;
        while self.rows.len() > self.delta
            || self
                .rows
                .front()
                .is_some_and(|r| r.step + delta < self.current_step)
        {
            self.rows.pop_front();
        }
        Ok(())
    }

    /// Linear discount `(i - T + delta) / delta` of a row recorded at step `i`.
    pub fn omega(&self, step: u64) -> f64 {
        (step as f64 - self.current_step as f64 + self.delta as f64) / self.delta as f64
    }

    /// Discounted average importance `(1/delta) Σ_i omega(i) z_ik` of each
    /// live prototype, in store order. Rows missing a prototype count as 0.
    pub fn scores(&self, store: &PrototypeStore) -> Vec<f64> {
        let slot: BTreeMap<PrototypeId, usize> = store
            .prototypes()
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id, i))
            .collect();
        let mut scores = vec![0.0; store.len()];
        for row in &self.rows {
            let w = self.omega(row.step);
            for (id, z) in &row.weights {
                if let Some(&i) = slot.get(id) {
                    scores[i] += w * z;
                }
            }
        }
        let inv = 1.0 / self.delta as f64;
        scores.iter_mut().for_each(|s| *s *= inv);
        scores
    }
}

/// Removes prototypes whose window score is below `epsilon`.
///
/// Prototypes younger than `delta / 2` example steps are exempt, and a class
/// always keeps at least one prototype: when every member of a class is
/// below threshold the highest-scoring one (lowest id on ties) survives.
/// Returns removed ids in ascending order.
pub fn prune(
    store: &mut PrototypeStore,
    window: &ImportanceWindow,
    config: &TrainConfig,
) -> Result<Vec<PrototypeId>> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let scores = window.scores(store);
    let now = window.current_step();
    let mut by_class: BTreeMap<usize, Vec<(PrototypeId, f64, bool)>> = BTreeMap::new();
    for (proto, &score) in store.prototypes().iter().zip(&scores) {
        let age = now.saturating_sub(proto.created_step);
        let young = 2 * age < config.delta as u64;
        let doomed = !young && score < config.epsilon;
        by_class
            .entry(proto.home_class)
            .or_default()
            .push((proto.id, score, doomed));
    }
    let mut removed = Vec::new();
    for members in by_class.values() {
        let mut doomed: Vec<(PrototypeId, f64)> = members
            .iter()
            .filter(|m| m.2)
            .map(|m| (m.0, m.1))
            .collect();
        if doomed.len() == members.len() {
            let keep = doomed
                .iter()
                .copied()
                .reduce(|best, cand| if cand.1 > best.1 { cand } else { best })
                .map(|k| k.0);
            doomed.retain(|d| Some(d.0) != keep);
        }
        removed.extend(doomed.into_iter().map(|d| d.0));
    }
    removed.sort_unstable();
    for &id in &removed {
        store.remove(id)?;
    }
    Ok(removed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Example;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn class_dataset(points: &[(&[f64], usize)], classes: usize) -> Dataset {
        let examples = points
            .iter()
            .enumerate()
            .map(|(i, (x, c))| Example {
                id: i as u64,
                input: x.to_vec(),
                target: Target::Class(*c),
            })
            .collect();
        Dataset::new(Task::Classification { classes }, points[0].0.len(), examples).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn init_with_one_example_per_class_copies_it() {
        let ds = class_dataset(&[(&[1.0, 2.0], 0), (&[-3.0, 0.5], 1)], 2);
        let cfg = TrainConfig::default();
        let store = init_prototypes(&ds, &Encoder::frozen_table(2), &cfg, &mut rng()).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.prototypes()[0].embedding, vec![1.0, 2.0]);
        assert_eq!(store.prototypes()[1].embedding, vec![-3.0, 0.5]);
        assert_eq!(store.prototypes()[0].sigma(), cfg.sigma0);
    }

    #[test]
    fn init_clamps_sample_size_to_class_size() {
        let ds = class_dataset(&[(&[0.0], 0), (&[3.0], 0), (&[6.0], 0), (&[1.0], 1)], 2);
        let cfg = TrainConfig {
            n_init: 8,
            ..TrainConfig::default()
        };
        let store = init_prototypes(&ds, &Encoder::frozen_table(1), &cfg, &mut rng()).unwrap();
        assert_eq!(store.prototypes()[0].embedding, vec![3.0]);
    }

    #[test]
    fn init_logit_pattern_uses_beta() {
        let ds = class_dataset(&[(&[0.0], 0), (&[1.0], 1)], 2);
        let store = init_prototypes(
            &ds,
            &Encoder::frozen_table(1),
            &TrainConfig::default(),
            &mut rng(),
        )
        .unwrap();
        assert_eq!(store.prototypes()[0].logits, vec![1.0, -1.0]);
        assert_eq!(store.prototypes()[1].logits, vec![-1.0, 1.0]);
    }

    #[test]
    fn init_requires_every_class() {
        let ds = class_dataset(&[(&[0.0], 0), (&[1.0], 2)], 3);
        let err = init_prototypes(
            &ds,
            &Encoder::frozen_table(1),
            &TrainConfig::default(),
            &mut rng(),
        );
        assert_eq!(err, Err(Error::EmptyClass { class: 1 }));
    }

    #[test]
    fn init_subsample_is_seeded() {
        let pts: Vec<(Vec<f64>, usize)> = (0..40).map(|i| (vec![i as f64], i % 2)).collect();
        let refs: Vec<(&[f64], usize)> = pts.iter().map(|(x, c)| (x.as_slice(), *c)).collect();
        let ds = class_dataset(&refs, 2);
        let cfg = TrainConfig::default();
        let enc = Encoder::frozen_table(1);
        let a = init_prototypes(&ds, &enc, &cfg, &mut rng()).unwrap();
        let b = init_prototypes(&ds, &enc, &cfg, &mut rng()).unwrap();
        assert_eq!(a, b);
        let c = init_prototypes(&ds, &enc, &cfg, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_ne!(a.prototypes()[0].embedding, c.prototypes()[0].embedding);
    }

    #[test]
    fn regression_init_uses_bin_means() {
        let examples = [(0.0, 0.0), (1.0, 0.5), (10.0, 9.0), (11.0, 10.0)]
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Example {
                id: i as u64,
                input: vec![x],
                target: Target::Value(y),
            })
            .collect();
        let ds = Dataset::new(Task::Regression, 1, examples).unwrap();
        let cfg = TrainConfig {
            n_reg_bins: 2,
            ..TrainConfig::default()
        };
        let store = init_prototypes(&ds, &Encoder::frozen_table(1), &cfg, &mut rng()).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.prototypes()[0].embedding, vec![0.5]);
        assert_eq!(store.prototypes()[0].logits, vec![0.25]);
        assert_eq!(store.prototypes()[1].logits, vec![9.5]);
    }

    #[test]
    fn constant_regression_target_falls_back_to_one_bin() {
        let examples = (0..3)
            .map(|i| Example {
                id: i,
                input: vec![i as f64],
                target: Target::Value(2.0),
            })
            .collect();
        let ds = Dataset::new(Task::Regression, 1, examples).unwrap();
        let store = init_prototypes(
            &ds,
            &Encoder::frozen_table(1),
            &TrainConfig::default(),
            &mut rng(),
        )
        .unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.prototypes()[0].logits, vec![2.0]);
    }

    #[test]
    fn lambda_examples() {
        let l = compute_lambda(1.0, 0.0, core::f64::consts::E, 7, 1e-3);
        assert!((l.value - 2.0).abs() < 1e-15);
        assert!(!l.clamped);

        let l = compute_lambda(0.5, 0.5, 0.1, 2, 1e-3);
        // ln(0.1 / 2) from mpmath
        assert!((l.raw - -2.995732273553991).abs() < 1e-12);
        assert!(l.clamped);
        assert_eq!(l.value, 1e-3);

        let l = compute_lambda(3.0, 0.0, 1.0, 4, 0.25);
        assert_eq!(l.raw, 0.0);
        assert!(l.clamped);
        assert_eq!(l.value, 0.25);
    }

    #[test]
    fn lambda_derivative_matches_finite_difference() {
        let (rho, alpha, dim) = (0.3, 50.0, 3);
        let s = 0.2f64;
        let l = compute_lambda(math::exp(s), rho, alpha, dim, 1e-3);
        let h = 1e-6;
        let up = compute_lambda(math::exp(s + h), rho, alpha, dim, 1e-3).value;
        let down = compute_lambda(math::exp(s - h), rho, alpha, dim, 1e-3).value;
        let analytic = lambda_log_sigma_derivative(&l, math::exp(s), rho, dim);
        assert!(((up - down) / (2.0 * h) - analytic).abs() < 1e-7);
    }

    fn store_with(points: &[(&[f64], usize)]) -> PrototypeStore {
        let mut store = PrototypeStore::new(
            HeadMode::Classification {
                classes: 2,
                indicator: false,
            },
            points[0].0.len(),
            8,
        );
        for (x, c) in points {
            store
                .add(Prototype::with_class_logits(x.to_vec(), *c, 2, 1.0, 1.0, 0))
                .unwrap();
        }
        store
    }

    fn example(x: &[f64], c: usize) -> EmbeddedExample {
        EmbeddedExample {
            id: 0,
            features: x.to_vec(),
            target: Target::Class(c),
        }
    }

    fn no_warmup() -> TrainConfig {
        TrainConfig {
            warmup_steps: 0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn example_on_prototype_creates_nothing() {
        let mut store = store_with(&[(&[1.0, 1.0], 0), (&[5.0, 5.0], 1)]);
        let c = maybe_create(&example(&[1.0, 1.0], 0), &mut store, 0.5, &no_warmup(), 0, 1);
        assert_eq!(c, Ok(Creation::Covered));
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn threshold_is_strict_and_class_restricted() {
        let lambda = 4.0;
        // other-class prototype sits on the example; same-class one at d^2 = lambda + 1
        let mut store = store_with(&[(&[0.0, 0.0], 1), (&[1.0, 2.0], 0)]);
        let ex = example(&[0.0, 0.0], 0);
        let c = maybe_create(&ex, &mut store, lambda, &no_warmup(), 0, 9).unwrap();
        let id = c.created().unwrap();
        let proto = store.get(id).unwrap();
        assert_eq!(proto.home_class, 0);
        assert_eq!(proto.created_step, 9);
        assert_eq!(proto.embedding, vec![0.0, 0.0]);
        assert_eq!(proto.logits, vec![1.0, -1.0]);
        // exactly at the threshold: no creation
        let mut store = store_with(&[(&[2.0, 0.0], 0), (&[9.0, 9.0], 1)]);
        let c = maybe_create(&ex, &mut store, lambda, &no_warmup(), 0, 1);
        assert_eq!(c, Ok(Creation::Covered));
    }

    #[test]
    fn warmup_blocks_creation() {
        let mut store = store_with(&[(&[0.0], 0), (&[0.0], 1)]);
        let cfg = TrainConfig {
            warmup_steps: 100,
            ..TrainConfig::default()
        };
        let far = example(&[1e3], 0);
        assert_eq!(maybe_create(&far, &mut store, 1.0, &cfg, 99, 1), Ok(Creation::Warmup));
        assert!(maybe_create(&far, &mut store, 1.0, &cfg, 100, 1)
            .unwrap()
            .created()
            .is_some());
    }

    #[test]
    fn full_store_declines() {
        let mut store = PrototypeStore::new(
            HeadMode::Classification {
                classes: 2,
                indicator: false,
            },
            1,
            2,
        );
        for c in 0..2 {
            store
                .add(Prototype::with_class_logits(vec![0.0], c, 2, 1.0, 1.0, 0))
                .unwrap();
        }
        let far = example(&[1e3], 0);
        assert_eq!(
            maybe_create(&far, &mut store, 1.0, &no_warmup(), 0, 1),
            Ok(Creation::AtCapacity)
        );
    }

    fn row(step: u64, weights: &[(u64, f64)]) -> ImportanceRow {
        ImportanceRow {
            example_id: step,
            step,
            weights: weights.iter().map(|&(i, z)| (PrototypeId(i), z)).collect(),
        }
    }

    #[test]
    fn window_is_a_ring_of_delta_rows() {
        let mut w = ImportanceWindow::new(3);
        assert_eq!(w.rows().count(), 0);
        for s in 1..=4 {
            w.record(row(s, &[(0, 1.0)])).unwrap();
        }
        let steps: Vec<u64> = w.rows().map(|r| r.step).collect();
        assert_eq!(steps, vec![2, 3, 4]);
        assert_eq!(
            w.record(row(3, &[])),
            Err(Error::NonMonotoneStep { step: 3, current: 4 })
        );
    }

    #[test]
    fn omega_is_linear_from_zero_to_one() {
        let mut w = ImportanceWindow::new(4);
        w.record(row(10, &[])).unwrap();
        assert_eq!(w.omega(10), 1.0);
        assert_eq!(w.omega(6), 0.0);
        assert_eq!(w.omega(8), 0.5);
    }

    #[test]
    fn discounted_score_arithmetic() {
        let mut store = store_with(&[(&[0.0], 0), (&[1.0], 0)]);
        let mut w = ImportanceWindow::new(4);
        for s in 1..=4 {
            w.record(row(s, &[(0, 0.1), (1, 0.9)])).unwrap();
        }
        let scores = w.scores(&store);
        assert!((scores[0] - 0.0625).abs() < 1e-15);
        let cfg = TrainConfig {
            delta: 4,
            ..TrainConfig::default()
        };
        for p in store.prototypes_mut() {
            p.created_step = 0;
        }
        assert_eq!(prune(&mut store, &w, &cfg), Ok(vec![]));
    }

    #[test]
    fn zero_importance_prototype_is_pruned_unless_last() {
        let mut store = store_with(&[(&[0.0], 0), (&[1.0], 0), (&[2.0], 1)]);
        let mut w = ImportanceWindow::new(4);
        for s in 4..=7 {
            w.record(row(s, &[(0, 1.0), (1, 0.0), (2, 0.0)])).unwrap();
        }
        let cfg = TrainConfig {
            delta: 4,
            ..TrainConfig::default()
        };
        let removed = prune(&mut store, &w, &cfg).unwrap();
        assert_eq!(removed, vec![PrototypeId(1)]);
        assert_eq!(store.class_len(1), 1);
        assert_eq!(prune(&mut store, &ImportanceWindow::new(4), &cfg), Err(Error::EmptyWindow));
    }

    #[test]
    fn recent_rows_weigh_more() {
        let store = store_with(&[(&[0.0], 0), (&[1.0], 0)]);
        let mut w = ImportanceWindow::new(4);
        w.record(row(1, &[(0, 1.0), (1, 0.0)])).unwrap();
        w.record(row(2, &[(0, 1.0), (1, 0.0)])).unwrap();
        w.record(row(3, &[(0, 0.5), (1, 0.5)])).unwrap();
        w.record(row(4, &[(0, 0.0), (1, 1.0)])).unwrap();
        let s = w.scores(&store);
        // proto 1 only matched near T, but with weights 0.75 and 1.0
        assert!((s[1] - (0.75 * 0.5 + 1.0) / 4.0).abs() < 1e-15);
        assert!((s[0] - (0.25 + 0.5 + 0.75 * 0.5) / 4.0).abs() < 1e-15);
        assert!(s[1] > s[0]);
    }

    #[test]
    fn young_prototypes_are_exempt() {
        let mut store = store_with(&[(&[0.0], 0), (&[1.0], 0)]);
        store.prototypes_mut()[1].created_step = 6;
        let mut w = ImportanceWindow::new(8);
        for s in 1..=8 {
            w.record(row(s, &[(0, 1.0), (1, 0.0)])).unwrap();
        }
        let cfg = TrainConfig {
            delta: 8,
            ..TrainConfig::default()
        };
        assert_eq!(prune(&mut store, &w, &cfg).unwrap(), vec![]);
        w.record(row(10, &[(0, 1.0), (1, 0.0)])).unwrap();
        assert_eq!(prune(&mut store, &w, &cfg).unwrap(), vec![PrototypeId(1)]);
    }
}
