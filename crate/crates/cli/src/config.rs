//! Flat key-value run configuration.
//!
//! Values are resolved as command-line flags, then the config file, then the
//! built-in defaults. Every key is optional in the file; unknown keys are
//! rejected.

use std::path::Path;

use anyhow::{bail, Context, Result};
use epp_core::pipeline::{ForecastConfig, StatsConfig};
use epp_core::popstats::{DEFAULT_QUANTILE, DEFAULT_WINDOW_SECONDS};
use epp_core::{Ablation, BackboneKind, SlopeEstimator, SynthConfig, TrainConfig, TrainMode};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // corpus
    pub k_core: usize,
    pub num_parts: usize,
    pub grid_steps: usize,

    // popularity statistics
    pub window_seconds: f64,
    /// Overrides `window_seconds` when positive.
    pub window_steps: usize,
    pub quantile: f64,

    // forecasting
    pub ma_fraction: f64,
    /// Overrides `ma_fraction` when positive.
    pub ma_window: usize,
    pub delta_item: usize,
    pub delta_user: usize,
    pub slope_estimator: SlopeEstimator,

    // training
    pub alpha: f64,
    pub lambda: f64,
    pub dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub seed: u64,
    pub mode: TrainMode,
    pub no_quality: bool,
    pub no_consistency: bool,
    pub ips_cap: f64,
    pub backbone: BackboneKind,
    pub num_layers: usize,
    /// Early-stopping patience in epochs; 0 disables early stopping.
    pub patience: usize,
    pub k: usize,

    // synthetic generator
    pub synth_num_users: usize,
    pub synth_num_items: usize,
    pub synth_num_steps: usize,
    pub synth_interactions_per_step: usize,
    pub synth_long_tail_exponent: f64,
    pub synth_conformity_mean: f64,
    pub synth_conformity_spread: f64,
    pub synth_conformity_drift: f64,
    pub synth_latent_dim: usize,
    pub synth_preference_sharpness: f64,
    pub synth_quality_weight: f64,
    pub synth_trend_items: usize,
    pub synth_trend_steps: usize,
    pub synth_trend_boost: f64,
    pub synth_allow_repeats: bool,
    pub synth_step_seconds: i64,
    pub synth_start_timestamp: i64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let s = SynthConfig::default();
        let f = ForecastConfig::default();
        Self {
            k_core: 0,
            num_parts: 10,
            grid_steps: 100,
            window_seconds: DEFAULT_WINDOW_SECONDS,
            window_steps: 0,
            quantile: DEFAULT_QUANTILE,
            ma_fraction: f.ma_fraction,
            ma_window: 0,
            delta_item: f.delta_item,
            delta_user: f.delta_user,
            slope_estimator: f.estimator,
            alpha: t.alpha,
            lambda: t.lambda,
            dim: t.dim,
            lr: t.lr,
            epochs: t.epochs,
            batch_size: t.batch_size,
            negatives_per_positive: t.negatives_per_positive,
            seed: t.seed,
            mode: t.mode,
            no_quality: false,
            no_consistency: false,
            ips_cap: t.ips_cap,
            backbone: t.backbone,
            num_layers: t.num_layers,
            patience: t.patience.unwrap_or(0),
            k: t.eval_k,
            synth_num_users: s.num_users,
            synth_num_items: s.num_items,
            synth_num_steps: s.num_steps,
            synth_interactions_per_step: s.interactions_per_step,
            synth_long_tail_exponent: s.long_tail_exponent,
            synth_conformity_mean: s.conformity_mean,
            synth_conformity_spread: s.conformity_spread,
            synth_conformity_drift: s.conformity_drift,
            synth_latent_dim: s.latent_dim,
            synth_preference_sharpness: s.preference_sharpness,
            synth_quality_weight: s.quality_weight,
            synth_trend_items: s.trend_items,
            synth_trend_steps: s.trend_steps,
            synth_trend_boost: s.trend_boost,
            synth_allow_repeats: s.allow_repeats,
            synth_step_seconds: s.step_seconds,
            synth_start_timestamp: s.start_timestamp,
        }
    }
}


impl RunConfig {
    /// Merges the optional file with `overrides` (already TOML values) and
    /// validates the result.
    pub fn resolve(file: Option<&Path>, overrides: toml::Table) -> Result<Self> {
        Self::resolve_over(toml::Table::new(), file, overrides)
    }

    /// Like [`RunConfig::resolve`], layered on top of `base` (typically the
    /// configuration a model was trained with).
    pub fn resolve_over(
        base: toml::Table,
        file: Option<&Path>,
        overrides: toml::Table,
    ) -> Result<Self> {
        let mut table = base;
        let from_file = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => toml::Table::new(),
        };
        for (key, value) in from_file.into_iter().chain(overrides) {
            table.insert(key, value);
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_parts < 2 {
            bail!("num_parts must be at least 2");
        }
        if self.grid_steps == 0 {
            bail!("grid_steps must be positive");
        }
        if self.k == 0 {
            bail!("k must be positive");
        }
        if !(self.ma_fraction > 0.0 && self.ma_fraction <= 1.0) && self.ma_window == 0 {
            bail!("ma_fraction must lie in (0, 1]");
        }
        self.stats().validate()?;
        self.train().validate()?;
        self.synth().validate()?;
        Ok(())
    }

    pub fn stats(&self) -> StatsConfig {
        StatsConfig {
            window_seconds: self.window_seconds,
            window_steps: (self.window_steps > 0).then_some(self.window_steps),
            quantile: self.quantile,
        }
    }

    pub fn forecast(&self) -> ForecastConfig {
        ForecastConfig {
            ma_fraction: self.ma_fraction,
            ma_window: (self.ma_window > 0).then_some(self.ma_window),
            delta_item: self.delta_item,
            delta_user: self.delta_user,
            estimator: self.slope_estimator,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            alpha: self.alpha,
            lambda: self.lambda,
            dim: self.dim,
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            negatives_per_positive: self.negatives_per_positive,
            seed: self.seed,
            mode: self.mode,
            ablation: Ablation {
                no_quality: self.no_quality,
                no_consistency: self.no_consistency,
            },
            ips_cap: self.ips_cap,
            backbone: self.backbone,
            num_layers: self.num_layers,
            patience: (self.patience > 0).then_some(self.patience),
            eval_k: self.k,
        }
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            num_users: self.synth_num_users,
            num_items: self.synth_num_items,
            num_steps: self.synth_num_steps,
            interactions_per_step: self.synth_interactions_per_step,
            long_tail_exponent: self.synth_long_tail_exponent,
            conformity_mean: self.synth_conformity_mean,
            conformity_spread: self.synth_conformity_spread,
            conformity_drift: self.synth_conformity_drift,
            latent_dim: self.synth_latent_dim,
            preference_sharpness: self.synth_preference_sharpness,
            quality_weight: self.synth_quality_weight,
            trend_items: self.synth_trend_items,
            trend_steps: self.synth_trend_steps,
            trend_boost: self.synth_trend_boost,
            allow_repeats: self.synth_allow_repeats,
            step_seconds: self.synth_step_seconds,
            start_timestamp: self.synth_start_timestamp,
            num_parts: self.num_parts,
            grid_steps: self.grid_steps,
        }
    }
}

/// Parses `key=value`, reading the value as a TOML scalar and falling back
/// to a bare string.
pub fn parse_assignment(text: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = text
        .split_once('=')
        .with_context(|| format!("expected key=value, got {text:?}"))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}
