use alloc::string::{String, ToString};

use crate::error::{Error, Result};

/// Every hyperparameter of the head, its dynamics and the training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// CRP concentration used by the creation threshold.
    pub alpha: f64,
    /// Standard deviation of the base distribution of cluster means.
    pub rho: f64,
    /// Initial per-prototype variance.
    pub sigma0: f64,
    /// Initial value of the shared cluster variance read by the creation threshold.
    pub sigma_shared: f64,
    /// Magnitude of the initial logits (+beta at home class, -beta elsewhere).
    pub beta: f64,
    /// Pruning threshold on the discounted window importance.
    pub epsilon: f64,
    /// Sliding window length, in examples.
    pub delta: usize,
    /// Pruning passes per epoch.
    pub m_per_epoch: usize,
    /// Weight of the diversity loss.
    pub rho_d: f64,
    pub p_max: usize,
    /// Optimizer steps before creation is allowed.
    pub warmup_steps: u64,
    /// Examples averaged per initial prototype.
    pub n_init: usize,
    /// Target bins for regression initialization.
    pub n_reg_bins: usize,
    /// Replacement for a non-positive creation threshold.
    pub lambda_floor: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub enable_creation: bool,
    pub enable_pruning: bool,
    /// Replace per-prototype softmax by a one-hot of the home class.
    pub indicator_logits: bool,
    /// Train per-prototype variances.
    pub train_sigmas: bool,
    /// Let the diversity loss differentiate through the threshold into the
    /// shared variance. Off by default: the threshold is a per-step constant.
    pub lambda_gradient: bool,
    /// Allow creation in regression mode, using target bins as pseudo-classes.
    pub regression_creation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            rho: 0.0,
            sigma0: 1.0,
            sigma_shared: 1.0,
            beta: 1.0,
            epsilon: 1e-3,
            delta: 800,
            m_per_epoch: 4,
            rho_d: 1e-5,
            p_max: 256,
            warmup_steps: 100,
            n_init: 8,
            n_reg_bins: 10,
            lambda_floor: 1e-3,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 5,
            patience: 1,
            seed: 0,
            enable_creation: true,
            enable_pruning: true,
            indicator_logits: false,
            train_sigmas: true,
            lambda_gradient: false,
            regression_creation: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        positive("alpha", self.alpha)?;
        nonnegative("rho", self.rho)?;
        positive("sigma0", self.sigma0)?;
        positive("sigma_shared", self.sigma_shared)?;
        positive("beta", self.beta)?;
        positive("epsilon", self.epsilon)?;
        nonnegative("rho_d", self.rho_d)?;
        positive("lambda_floor", self.lambda_floor)?;
        positive("learning_rate", self.learning_rate)?;
        at_least_one("delta", self.delta)?;
        at_least_one("m_per_epoch", self.m_per_epoch)?;
        at_least_one("p_max", self.p_max)?;
        at_least_one("n_init", self.n_init)?;
        at_least_one("n_reg_bins", self.n_reg_bins)?;
        at_least_one("batch_size", self.batch_size)?;
        at_least_one("max_epochs", self.max_epochs)?;
        at_least_one("patience", self.patience)?;
        Ok(())
    }
}

fn reject(field: &'static str, reason: String) -> Error {
    Error::ConfigInvalid { field, reason }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(reject(field, "must be a positive finite number".to_string()))
    }
}

fn nonnegative(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(reject(field, "must be a nonnegative finite number".to_string()))
    }
}

fn at_least_one(field: &'static str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(reject(field, "must be at least 1".to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_nonpositive_alpha_and_zero_batch() {
        let cfg = TrainConfig {
            alpha: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            cfg.validate(),
            Err(Error::ConfigInvalid { field: "alpha", .. })
        ));
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            rho: f64::NAN,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
