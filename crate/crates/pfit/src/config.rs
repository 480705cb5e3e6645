//! Flat `key = value` configuration files.
//!
//! Keys are the [`TrainConfig`] field names plus the encoder keys
//! `encoder` (`frozen_table`, `projection` or `mlp`), `encoder_output_dim`,
//! `encoder_hidden` (comma-separated widths) and `encoder_trainable`.
//! `#` starts a comment. Unknown keys are errors.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use pfit_core::{Encoder, EncoderKind, EncoderSpec, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Stream used for encoder weight initialization, distinct from the
/// trainer's shuffle and init streams.
const ENCODER_STREAM: u64 = 2;

macro_rules! train_fields {
    ($apply:ident) => {
        $apply!(
            alpha,
            rho,
            sigma0,
            sigma_shared,
            beta,
            epsilon,
            delta,
            m_per_epoch,
            rho_d,
            p_max,
            warmup_steps,
            n_init,
            n_reg_bins,
            lambda_floor,
            learning_rate,
            batch_size,
            max_epochs,
            patience,
            seed,
            enable_creation,
            enable_pruning,
            indicator_logits,
            train_sigmas,
            lambda_gradient,
            regression_creation
        )
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Defaults to the dataset dimension.
    pub output_dim: Option<usize>,
    pub hidden: Vec<usize>,
    pub trainable: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::FrozenTable,
            output_dim: None,
            hidden: Vec::new(),
            trainable: true,
        }
    }
}

impl EncoderConfig {
    pub fn spec(&self, input_dim: usize) -> EncoderSpec {
        let out = self.output_dim.unwrap_or(input_dim);
        match self.kind {
            EncoderKind::FrozenTable => EncoderSpec::frozen_table(input_dim),
            EncoderKind::FrozenTableWithProjection => {
                EncoderSpec::projection(input_dim, out, self.trainable)
            }
            EncoderKind::Mlp => EncoderSpec::mlp(input_dim, self.hidden.clone(), out, self.trainable),
        }
    }

    /// Square projections start at the identity so training begins from the
    /// raw features; everything else draws seeded uniform weights.
    pub fn build(&self, input_dim: usize, seed: u64) -> Result<Encoder> {
        let spec = self.spec(input_dim);
        if spec.kind == EncoderKind::FrozenTable {
            return Ok(Encoder::frozen_table(input_dim));
        }
        if spec.kind == EncoderKind::FrozenTableWithProjection && spec.output_dim == input_dim {
            return Ok(Encoder::identity_projection(input_dim, self.trainable));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ENCODER_STREAM);
        Ok(Encoder::new(spec, &mut rng)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub encoder: EncoderConfig,
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::config(key, format!("invalid value {raw:?}")))
}

trait Render {
    fn render(&self) -> String;
}

impl Render for f64 {
    fn render(&self) -> String {
        format!("{self:?}")
    }
}

macro_rules! render_display {
    ($($t:ty),*) => {$(
        impl Render for $t {
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
render_display!(usize, u64, bool);

fn kind_name(kind: EncoderKind) -> &'static str {
    match kind {
        EncoderKind::FrozenTable => "frozen_table",
        EncoderKind::FrozenTableWithProjection => "projection",
        EncoderKind::Mlp => "mlp",
    }
}

impl RunConfig {
    /// Assigns one key. Values are checked for syntax here and for range in
    /// [`RunConfig::validate`].
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let cfg = &mut self.train;
        macro_rules! assign {
            ($($f:ident),*) => {
                match key {
                    $(stringify!($f) => cfg.$f = value(key, raw)?,)*
                    "encoder" => {
                        self.encoder.kind = match raw {
                            "frozen_table" => EncoderKind::FrozenTable,
                            "projection" => EncoderKind::FrozenTableWithProjection,
                            "mlp" => EncoderKind::Mlp,
                            _ => return Err(Error::config(key, format!("unknown encoder {raw:?}"))),
                        }
                    }
                    "encoder_output_dim" => self.encoder.output_dim = Some(value(key, raw)?),
                    "encoder_hidden" => {
                        self.encoder.hidden = raw
                            .split(',')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(|s| value(key, s))
                            .collect::<Result<_>>()?
                    }
                    "encoder_trainable" => self.encoder.trainable = value(key, raw)?,
                    _ => return Err(Error::config(key, "unknown key")),
                }
            };
        }
        train_fields!(assign);
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::config(item, "expected key=value"))?;
            self.set(key.trim(), raw.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.encoder.output_dim == Some(0) {
            return Err(Error::config("encoder_output_dim", "must be positive"));
        }
        if self.encoder.kind == EncoderKind::Mlp && self.encoder.hidden.contains(&0) {
            return Err(Error::config("encoder_hidden", "widths must be positive"));
        }
        Ok(())
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let cfg = &self.train;
        macro_rules! collect {
            ($($f:ident),*) => { vec![$((stringify!($f), cfg.$f.render())),*] };
        }
        let mut pairs = train_fields!(collect);
        pairs.push(("encoder", kind_name(self.encoder.kind).to_string()));
        if let Some(d) = self.encoder.output_dim {
            pairs.push(("encoder_output_dim", d.to_string()));
        }
        let hidden: Vec<String> = self.encoder.hidden.iter().map(usize::to_string).collect();
        pairs.push(("encoder_hidden", hidden.join(",")));
        pairs.push(("encoder_trainable", self.encoder.trainable.to_string()));
        pairs
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, raw) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}", i + 1), "expected key = value"))?;
        cfg.set(key.trim(), raw.trim())?;
    }
    Ok(cfg)
}

pub fn format_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    for (key, value) in cfg.pairs() {
        let _ = writeln!(out, "{key} = {value}");
    }
    out
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
