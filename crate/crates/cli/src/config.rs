//! Training run configuration, read from a flat TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use so3diff::ddpm::{Contraction, VpSchedule};
use so3diff::io::ModelKind;
use so3diff::nn::AdamConfig;
use so3diff::sgm::VeSchedule;
use so3diff::train::TrainConfig;

/// Every key is optional except `model` and `data`; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// `sgm` or `ddpm`.
    pub model: String,
    /// Training set written by `gen-data`.
    pub data: PathBuf,
    /// Directory for checkpoints and the loss curve.
    pub out_dir: PathBuf,
    /// Checkpoint to continue from.
    pub resume: Option<PathBuf>,
    pub seed: u64,
    /// `f32` or `f64`.
    pub precision: String,

    /// Total optimizer steps, counting any resumed ones.
    pub iterations: u64,
    pub batch_size: usize,
    pub log_every: u64,
    pub ckpt_every: u64,

    pub hidden_layers: usize,
    pub hidden_width: usize,

    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,

    pub t_max: f64,
    pub eps_min: f64,
    pub sigma_eps: f64,

    pub n_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    /// `quantile` or `quat-power`.
    pub contraction: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ve = VeSchedule::default();
        let adam = AdamConfig::default();
        RunConfig {
            model: String::new(),
            data: PathBuf::new(),
            out_dir: PathBuf::from("run"),
            resume: None,
            seed: 0,
            precision: "f64".into(),
            iterations: 400_000,
            batch_size: 1024,
            log_every: 100,
            ckpt_every: 10_000,
            hidden_layers: 3,
            hidden_width: 256,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            t_max: ve.t_max,
            eps_min: ve.eps_min,
            sigma_eps: ve.sigma_eps,
            n_steps: 100,
            beta_min: 1e-4,
            beta_max: 0.3,
            contraction: Contraction::default().name().into(),
        }
    }
}

/// A rejected field and the reason.
#[derive(Debug)]
pub struct FieldError {
    pub field: &'static str,
    pub msg: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.msg)
    }
}

fn field(field: &'static str, msg: impl Into<String>) -> FieldError {
    FieldError {
        field,
        msg: msg.into(),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))?;
        // relative paths are taken relative to the config file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data, &mut cfg.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(r) = cfg.resume.as_mut().filter(|r| r.is_relative()) {
            *r = base.join(&*r);
        }
        Ok(cfg)
    }

    pub fn kind(&self) -> Result<ModelKind, FieldError> {
        ModelKind::from_name(&self.model).ok_or_else(|| {
            field(
                "model",
                format!("expected `sgm` or `ddpm`, got `{}`", self.model),
            )
        })
    }

    pub fn hidden(&self) -> Vec<usize> {
        vec![self.hidden_width; self.hidden_layers]
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn ve_schedule(&self) -> VeSchedule {
        VeSchedule {
            t_max: self.t_max,
            eps_min: self.eps_min,
            sigma_eps: self.sigma_eps,
        }
    }

    pub fn vp_schedule(&self) -> Result<VpSchedule, FieldError> {
        let contraction = Contraction::from_name(&self.contraction).ok_or_else(|| {
            field(
                "contraction",
                format!(
                    "expected `quantile` or `quat-power`, got `{}`",
                    self.contraction
                ),
            )
        })?;
        let mut s = VpSchedule::linear(self.n_steps, self.beta_min, self.beta_max)
            .map_err(|e| field("beta_min/beta_max", e.to_string()))?;
        s.contraction = contraction;
        Ok(s)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            batch_size: self.batch_size,
            log_every: self.log_every,
            ckpt_every: self.ckpt_every,
        }
    }

    /// Checks every field against the ranges accepted by the library.
    pub fn validate(&self) -> Result<(), FieldError> {
        let kind = self.kind()?;
        if self.data.as_os_str().is_empty() {
            return Err(field("data", "a training set path is required"));
        }
        if self.precision != "f32" && self.precision != "f64" {
            return Err(field(
                "precision",
                format!("expected `f32` or `f64`, got `{}`", self.precision),
            ));
        }
        if self.batch_size == 0 {
            return Err(field("batch_size", "must be positive"));
        }
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(field("hidden_layers/hidden_width", "must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(field("lr", "must be positive and finite"));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(field(name, "must lie in [0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(field("adam_eps", "must be positive"));
        }
        match kind {
            ModelKind::Sgm => {
                let pos = |v: f64| v > 0.0 && v.is_finite();
                if !pos(self.t_max) {
                    return Err(field("t_max", "must be positive and finite"));
                }
                if !pos(self.eps_min) || self.eps_min >= self.t_max {
                    return Err(field("eps_min", "must be positive and below t_max"));
                }
                if !pos(self.sigma_eps) {
                    return Err(field("sigma_eps", "must be positive and finite"));
                }
            }
            ModelKind::Ddpm => {
                if self.n_steps == 0 {
                    return Err(field("n_steps", "must be positive"));
                }
                if !(self.beta_min > 0.0 && self.beta_min < 1.0) {
                    return Err(field("beta_min", "must lie in (0, 1)"));
                }
                if !(self.beta_max > 0.0 && self.beta_max < 1.0) {
                    return Err(field("beta_max", "must lie in (0, 1)"));
                }
                self.vp_schedule()?;
            }
        }
        Ok(())
    }
}
