//! Glue that turns a split into statistics, plans and evaluated rankings.

use serde::{Deserialize, Serialize};

use crate::backbone::InteractionGraph;
use crate::corpus::SplitDataset;
use crate::error::{Error, Result};
use crate::evaluation::{bias_report, metrics, BiasReport, MetricsReport};
use crate::forecast::{build_intervention, InterventionPlan, SlopeEstimator};
use crate::inference::{rank_users, InferenceStats, InterventionMode, RankingResult, Scorer};
use crate::popstats::{
    local_popularity, personal_popularity, PersonalPopularityTable, PopularityTable,
    DEFAULT_QUANTILE, DEFAULT_WINDOW_SECONDS,
};
use crate::training::held_out_truth;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsConfig {
    /// Popularity window `w1` in wall-clock seconds.
    pub window_seconds: f64,
    /// Overrides `window_seconds` with an explicit step count.
    pub window_steps: Option<usize>,
    pub quantile: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            window_seconds: DEFAULT_WINDOW_SECONDS,
            window_steps: None,
            quantile: DEFAULT_QUANTILE,
        }
    }
}

impl StatsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "quantile must lie in (0, 1), got {}",
                self.quantile
            )));
        }
        if self.window_steps == Some(0) || !(self.window_seconds > 0.0) {
            return Err(Error::InvalidConfig("popularity window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastConfig {
    /// `w2` as a fraction of the grid length.
    pub ma_fraction: f64,
    /// Overrides `ma_fraction` with an explicit step count.
    pub ma_window: Option<usize>,
    pub delta_item: usize,
    pub delta_user: usize,
    pub estimator: SlopeEstimator,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            ma_fraction: 0.10,
            ma_window: None,
            delta_item: 5,
            delta_user: 10,
            estimator: SlopeEstimator::BackwardDifference,
        }
    }
}

/// Popularity tables built from the training part of a split.
#[derive(Clone, Debug)]
pub struct StatsBundle {
    pub pop: PopularityTable,
    pub pers: PersonalPopularityTable,
}

impl StatsBundle {
    pub fn build(ds: &SplitDataset, cfg: &StatsConfig) -> Result<Self> {
        cfg.validate()?;
        let window = cfg
            .window_steps
            .unwrap_or_else(|| ds.grid.steps_for_seconds(cfg.window_seconds));
        let pop = local_popularity(&ds.train, ds.num_items, &ds.grid, window);
        let pers = personal_popularity(&ds.train, &pop, &ds.grid, ds.num_users, cfg.quantile);
        Ok(Self { pop, pers })
    }

    pub fn inference_stats(&self, ds: &SplitDataset) -> InferenceStats {
        InferenceStats::from_tables(&self.pop, &self.pers, &ds.grid)
    }

    pub fn plan(&self, ds: &SplitDataset, cfg: &ForecastConfig) -> InterventionPlan {
        let w2 = cfg
            .ma_window
            .unwrap_or_else(|| crate::forecast::ma_window_for(&ds.grid, cfg.ma_fraction));
        build_intervention(
            &self.pop,
            &self.pers,
            &ds.grid,
            w2,
            cfg.delta_item,
            cfg.delta_user,
            cfg.estimator,
        )
    }
}

pub fn train_graph(ds: &SplitDataset) -> InteractionGraph {
    InteractionGraph::from_interactions(&ds.train, ds.num_users, ds.num_items)
}

/// Test items per user, minus that user's training items.
pub fn test_truth(ds: &SplitDataset) -> Vec<Vec<usize>> {
    held_out_truth(&ds.test_items_by_user(), &ds.train_items_by_user())
}

pub struct Evaluation {
    pub metrics: MetricsReport,
    pub bias: BiasReport,
    pub rankings: Vec<RankingResult>,
}

/// Ranks every user with a nonempty `truth` and scores the result.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_against(
    scorer: &Scorer<'_>,
    ds: &SplitDataset,
    stats: &StatsBundle,
    mode: InterventionMode,
    plan: Option<&InterventionPlan>,
    truth: &[Vec<usize>],
    k: usize,
) -> Result<Evaluation> {
    let users: Vec<usize> = (0..ds.num_users).filter(|&u| !truth[u].is_empty()).collect();
    let inf = stats.inference_stats(ds);
    let rankings = rank_users(
        scorer,
        &inf,
        mode,
        plan,
        &users,
        &ds.train_items_by_user(),
        k,
    );
    let metrics = metrics(&rankings, truth, k)?;
    let bias = bias_report(&rankings, &stats.pop.global, &ds.test);
    Ok(Evaluation {
        metrics,
        bias,
        rankings,
    })
}
