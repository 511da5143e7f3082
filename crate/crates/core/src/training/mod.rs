//! Deconfounded training loop and its baselines.

pub mod adam;
pub mod loss;
pub mod sampler;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use loss::{batch_loss, ips_weights, BatchLoss, LossContext, Sample};
pub use sampler::sample_negative;

use crate::backbone::{init_params, BackboneKind, InteractionGraph, ModelParams, DEFAULT_LAYERS};
use crate::corpus::SplitDataset;
use crate::error::{Error, Result};
use crate::evaluation::metrics;
use crate::inference::{
    rank_users, InferenceStats, InterventionMode, Scorer, ScoringRule, DEFAULT_K,
};
use crate::popstats::{PersonalPopularityTable, PopularityTable};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// Backdoor-adjusted prediction score with conformity and quality.
    #[default]
    CausalEpp,
    /// BPR on the raw matching score.
    PlainBackbone,
    /// BPR on the matching score, each positive weighted by capped inverse
    /// normalized popularity.
    Ips,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::CausalEpp => "causal-epp",
            TrainMode::PlainBackbone => "plain",
            TrainMode::Ips => "ips",
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "causal-epp" | "causalepp" | "epp" => Ok(TrainMode::CausalEpp),
            "plain" | "plain-backbone" | "backbone" => Ok(TrainMode::PlainBackbone),
            "ips" => Ok(TrainMode::Ips),
            other => Err(format!(
                "unknown mode {other:?} (expected causal-epp, plain or ips)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Drop the quality term and its loss; `q` stays at zero.
    pub no_quality: bool,
    /// Fix the consistency factor at 1.
    pub no_consistency: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub seed: u64,
    pub mode: TrainMode,
    pub ablation: Ablation,
    pub ips_cap: f64,
    pub backbone: BackboneKind,
    pub num_layers: usize,
    /// Early-stopping patience on validation Recall@k; `None` disables it.
    pub patience: Option<usize>,
    pub eval_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda: 0.2,
            dim: 64,
            lr: 1e-3,
            epochs: 100,
            batch_size: 8192,
            negatives_per_positive: 1,
            seed: 2024,
            mode: TrainMode::CausalEpp,
            ablation: Ablation::default(),
            ips_cap: 10.0,
            backbone: BackboneKind::Mf,
            num_layers: DEFAULT_LAYERS,
            patience: Some(10),
            eval_k: DEFAULT_K,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha >= 0.0) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.lr > 0.0) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if self.dim == 0 || self.batch_size == 0 || self.negatives_per_positive == 0 {
            return bad("dim, batch_size and negatives_per_positive must be positive".into());
        }
        if self.eval_k == 0 {
            return bad("eval_k must be positive".into());
        }
        if !(self.ips_cap > 0.0) {
            return bad(format!("ips_cap must be > 0, got {}", self.ips_cap));
        }
        Ok(())
    }

    pub fn scoring_rule(&self) -> ScoringRule {
        ScoringRule {
            mode: self.mode,
            ablation: self.ablation,
            alpha: self.alpha,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub bpr_loss: f64,
    pub quality_loss: f64,
    pub total_loss: f64,
    /// Validation Recall@k, when a validation set exists.
    pub val_recall: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    /// Loss on the very first batch, before any update.
    pub initial_bpr_loss: f64,
    pub ips_weight_max: Option<f64>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Training-time inputs derived from the popularity tables.
pub struct TrainInputs<'a> {
    pub dataset: &'a SplitDataset,
    pub pop: &'a PopularityTable,
    pub pers: &'a PersonalPopularityTable,
}

/// Positive tuples with `s_u^t` looked up at each interaction's own step.
pub fn positives(inputs: &TrainInputs<'_>) -> Vec<(usize, usize, f64)> {
    inputs
        .dataset
        .train
        .iter()
        .map(|x| {
            let step = inputs.dataset.step_of(x.timestamp);
            (x.user, x.item, inputs.pers.personal(x.user, step))
        })
        .collect()
}

pub fn loss_context(pop: &PopularityTable, cfg: &TrainConfig) -> LossContext {
    LossContext {
        avg_pop: pop.avg_local.clone(),
        global: pop.global.clone(),
        ips_weight: (cfg.mode == TrainMode::Ips).then(|| ips_weights(&pop.global, cfg.ips_cap)),
    }
}

/// Mini-batch Adam training. Returns the parameters of the best validation
/// epoch when early stopping is active, else the final parameters.
pub fn train(inputs: &TrainInputs<'_>, cfg: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    let started = Instant::now();
    let ds = inputs.dataset;
    let mut params = init_params(
        ds.num_users,
        ds.num_items,
        cfg.dim,
        cfg.backbone,
        cfg.num_layers,
        cfg.seed,
    );
    let graph = (cfg.backbone == BackboneKind::LightGcn)
        .then(|| InteractionGraph::from_interactions(&ds.train, ds.num_users, ds.num_items));
    let ctx = loss_context(inputs.pop, cfg);
    let train_items = ds.train_items_by_user();
    let mut positives = positives(inputs);

    let val_truth = held_out_truth(&ds.validation_items_by_user(), &train_items);
    let val_users: Vec<usize> = (0..ds.num_users).filter(|&u| !val_truth[u].is_empty()).collect();
    let inf_stats = InferenceStats::from_tables(inputs.pop, inputs.pers, &ds.grid);

    // sampling stream is independent of the init stream
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut adam = AdamState::new(&params);
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        initial_bpr_loss: f64::NAN,
        ips_weight_max: ctx
            .ips_weight
            .as_ref()
            .map(|w| w.iter().copied().fold(0.0, f64::max)),
        wall_seconds: 0.0,
    };
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        positives.shuffle(&mut rng);
        let (mut bpr_sum, mut q_sum, mut n) = (0.0, 0.0, 0usize);
        for (b, chunk) in positives.chunks(cfg.batch_size).enumerate() {
            let mut batch = Vec::with_capacity(chunk.len() * cfg.negatives_per_positive);
            for &(user, pos, s_value) in chunk {
                for _ in 0..cfg.negatives_per_positive {
                    let neg = sample_negative(user, &mut rng, &train_items[user], ds.num_items)?;
                    batch.push(Sample {
                        user,
                        pos,
                        neg,
                        s_value,
                    });
                }
            }
            let out = batch_loss(&params, graph.as_ref(), &batch, &ctx, cfg);
            if !out.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    detail: format!("bpr={} quality={}", out.bpr, out.quality),
                });
            }
            if report.initial_bpr_loss.is_nan() {
                report.initial_bpr_loss = out.bpr;
            }
            bpr_sum += out.bpr * batch.len() as f64;
            q_sum += out.quality * batch.len() as f64;
            n += batch.len();
            adam_step(&mut params, &out.grads, &mut adam, cfg.lr);
        }
        let bpr_loss = if n > 0 { bpr_sum / n as f64 } else { 0.0 };
        let quality_loss = if n > 0 { q_sum / n as f64 } else { 0.0 };

        let val_recall = if cfg.patience.is_some() && !val_users.is_empty() {
            let scorer = Scorer::new(&params, graph.as_ref(), cfg.scoring_rule());
            let rankings = rank_users(
                &scorer,
                &inf_stats,
                InterventionMode::NoIntervention,
                None,
                &val_users,
                &train_items,
                cfg.eval_k,
            );
            Some(metrics(&rankings, &val_truth, cfg.eval_k)?.recall_at_k)
        } else {
            None
        };
        report.epochs.push(EpochRecord {
            epoch,
            bpr_loss,
            quality_loss,
            total_loss: bpr_loss + cfg.lambda * quality_loss,
            val_recall,
        });

        if let (Some(patience), Some(recall)) = (cfg.patience, val_recall) {
            if best.as_ref().is_none_or(|(r, _)| recall > *r) {
                best = Some((recall, params.clone()));
                report.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        } else {
            report.best_epoch = epoch;
        }
    }
    if let Some((_, p)) = best {
        params = p;
    }
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok((params, report))
}

/// Held-out items per user minus that user's training items.
pub fn held_out_truth(held_out: &[Vec<usize>], train_items: &[Vec<usize>]) -> Vec<Vec<usize>> {
    held_out
        .iter()
        .zip(train_items)
        .map(|(h, t)| {
            h.iter()
                .copied()
                .filter(|i| t.binary_search(i).is_err())
                .collect()
        })
        .collect()
}
