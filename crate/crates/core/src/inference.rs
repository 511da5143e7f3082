//! Scoring with or without intervention, and top-k ranking.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::backbone::{
    conformity_value, item_mlp, matching_score, propagate, softplus, InteractionGraph,
    ModelParams, PropagatedEmbeddings,
};
use crate::corpus::TimeGrid;
use crate::forecast::InterventionPlan;
use crate::popstats::{PersonalPopularityTable, PopularityTable};
use crate::training::{Ablation, TrainMode};

/// Default ranking cutoff.
pub const DEFAULT_K: usize = 20;

/// Which `(s, p)` pair feeds the conformity effect at inference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterventionMode {
    /// `(s_u^T, E_p[p_i])`, as during training.
    NoIntervention,
    /// `(s_u*, p_i*)` from the forecast plan.
    Intervened,
    /// `(s_u^T, E[p])` with one population-wide average for every item.
    EliminateP,
    /// Fixed `(p, s)` applied to every user and item.
    GridValues { p: f64, s: f64 },
}

/// Statistics frozen at the last training step.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceStats {
    pub s_last: Vec<f64>,
    pub avg_local: Vec<f64>,
    pub population_mean: f64,
}

impl InferenceStats {
    pub fn from_tables(
        pop: &PopularityTable,
        pers: &PersonalPopularityTable,
        grid: &TimeGrid,
    ) -> Self {
        let t = grid.last_train_step;
        Self {
            s_last: (0..pers.num_users).map(|u| pers.personal(u, t)).collect(),
            avg_local: pop.avg_local.clone(),
            population_mean: pop.population_mean(),
        }
    }
}

/// How a trained model turns parameters into scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoringRule {
    pub mode: TrainMode,
    pub ablation: Ablation,
    pub alpha: f64,
}

/// Frozen model ready for read-only scoring.
#[derive(Clone, Debug)]
pub struct Scorer<'a> {
    pub params: &'a ModelParams,
    pub prop: PropagatedEmbeddings,
    mlp: Vec<f64>,
    rule: ScoringRule,
}

impl<'a> Scorer<'a> {
    pub fn new(params: &'a ModelParams, graph: Option<&InteractionGraph>, rule: ScoringRule) -> Self {
        let prop = propagate(params, graph);
        let mlp = (0..params.num_items).map(|i| item_mlp(params, i)).collect();
        Self {
            params,
            prop,
            mlp,
            rule,
        }
    }

    pub fn rule(&self) -> ScoringRule {
        self.rule
    }

    pub fn mlp_output(&self, item: usize) -> f64 {
        self.mlp[item]
    }

    /// Scores every item for `user`.
    pub fn score_all(
        &self,
        user: usize,
        stats: &InferenceStats,
        mode: InterventionMode,
        plan: Option<&InterventionPlan>,
    ) -> Vec<f64> {
        let n = self.params.num_items;
        if self.rule.mode != TrainMode::CausalEpp {
            return (0..n).map(|i| matching_score(&self.prop, user, i)).collect();
        }
        let use_quality = !self.rule.ablation.no_quality;
        let use_consistency = !self.rule.ablation.no_consistency;
        let plan_ref = || plan.expect("intervened scoring needs an intervention plan");
        (0..n)
            .map(|i| {
                let (s, p) = match mode {
                    InterventionMode::NoIntervention => (stats.s_last[user], stats.avg_local[i]),
                    InterventionMode::Intervened => {
                        let plan = plan_ref();
                        (plan.s_star[user], plan.p_star[i])
                    }
                    InterventionMode::EliminateP => (stats.s_last[user], stats.population_mean),
                    InterventionMode::GridValues { p, s } => (s, p),
                };
                let c = conformity_value(s, p, self.rule.alpha, self.mlp[i], use_consistency);
                let q = if use_quality { self.params.quality[i] } else { 0.0 };
                (q + c).tanh() * softplus(matching_score(&self.prop, user, i))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub user: usize,
    pub ranked_items: Vec<usize>,
    pub scores: Vec<f64>,
    /// Fewer than `k` candidates were available.
    pub short: bool,
}

/// The `k` best items outside `exclude` (sorted ids), ties by ascending id.
pub fn top_k(user: usize, scores: &[f64], exclude: &[usize], k: usize) -> RankingResult {
    assert!(k >= 1, "k must be at least 1");
    let mut candidates: Vec<usize> = (0..scores.len())
        .filter(|i| exclude.binary_search(i).is_err())
        .collect();
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    let short = candidates.len() < k;
    if !short && candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, cmp);
        candidates.truncate(k);
    }
    candidates.sort_by(cmp);
    RankingResult {
        user,
        scores: candidates.iter().map(|&i| scores[i]).collect(),
        ranked_items: candidates,
        short,
    }
}

/// Ranks every user in `users`, excluding their training items.
pub fn rank_users(
    scorer: &Scorer<'_>,
    stats: &InferenceStats,
    mode: InterventionMode,
    plan: Option<&InterventionPlan>,
    users: &[usize],
    train_items: &[Vec<usize>],
    k: usize,
) -> Vec<RankingResult> {
    users
        .iter()
        .map(|&u| {
            let scores = scorer.score_all(u, stats, mode, plan);
            top_k(u, &scores, &train_items[u], k)
        })
        .collect()
}

/// `user_id\trank\titem_id\tscore` rows, rank starting at 1.
pub fn recommendations_tsv(rankings: &[RankingResult]) -> String {
    let mut out = String::from("user_id\trank\titem_id\tscore\n");
    for r in rankings {
        for (pos, (item, score)) in r.ranked_items.iter().zip(&r.scores).enumerate() {
            writeln!(out, "{}\t{}\t{}\t{}", r.user, pos + 1, item, score).unwrap();
        }
    }
    out
}
