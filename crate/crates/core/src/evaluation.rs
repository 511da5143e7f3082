//! Top-k accuracy metrics and the popular-item recommendation report.

use serde::{Deserialize, Serialize};

use crate::corpus::Interaction;
use crate::error::{Error, Result};
use crate::inference::RankingResult;

/// Share of the catalogue counted as "popular" in the bias report.
pub const POPULAR_SHARE: f64 = 0.20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub recall_at_k: f64,
    pub precision_at_k: f64,
    pub ndcg_at_k: f64,
    pub num_users_evaluated: usize,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "k,recall,precision,ndcg,num_users";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.k, self.recall_at_k, self.precision_at_k, self.ndcg_at_k, self.num_users_evaluated
        )
    }
}

/// Per-user metric values, before averaging.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UserMetrics {
    pub hits: usize,
    pub recall: f64,
    pub precision: f64,
    pub ndcg: f64,
}

/// Binary-relevance metrics of one ranking against a sorted truth set.
pub fn user_metrics(ranked: &[usize], truth: &[usize], k: usize) -> UserMetrics {
    let mut hits = 0;
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().take(k).enumerate() {
        if truth.binary_search(item).is_ok() {
            hits += 1;
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let ideal: f64 = (0..k.min(truth.len()))
        .map(|pos| 1.0 / ((pos + 2) as f64).log2())
        .sum();
    UserMetrics {
        hits,
        recall: hits as f64 / truth.len() as f64,
        precision: hits as f64 / k as f64,
        ndcg: if ideal > 0.0 { dcg / ideal } else { 0.0 },
    }
}

/// Averages Recall / Precision / NDCG at `k` over users with a nonempty
/// truth set. `truth[u]` must be sorted. A user with truth but no ranking
/// counts as all misses.
pub fn metrics(rankings: &[RankingResult], truth: &[Vec<usize>], k: usize) -> Result<MetricsReport> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    let mut by_user: Vec<Option<&RankingResult>> = vec![None; truth.len()];
    for r in rankings {
        if r.user < by_user.len() {
            by_user[r.user] = Some(r);
        }
    }
    let (mut recall, mut precision, mut ndcg) = (0.0, 0.0, 0.0);
    let mut n = 0usize;
    for (u, items) in truth.iter().enumerate() {
        if items.is_empty() {
            continue;
        }
        n += 1;
        let ranked = by_user[u].map_or(&[][..], |r| r.ranked_items.as_slice());
        let m = user_metrics(ranked, items, k);
        recall += m.recall;
        precision += m.precision;
        ndcg += m.ndcg;
    }
    let avg = |v: f64| if n == 0 { 0.0 } else { v / n as f64 };
    Ok(MetricsReport {
        k,
        recall_at_k: avg(recall),
        precision_at_k: avg(precision),
        ndcg_at_k: avg(ndcg),
        num_users_evaluated: n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    /// Sorted ids of the top-20% items by global count.
    pub popular_item_set: Vec<usize>,
    pub popular_ratio_recommended: f64,
    pub popular_ratio_ground_truth: f64,
}

impl BiasReport {
    pub const CSV_HEADER: &'static str = "group,recommended_ratio,ground_truth_ratio";

    pub fn csv_rows(&self) -> String {
        format!(
            "popular,{},{}\nother,{},{}\n",
            self.popular_ratio_recommended,
            self.popular_ratio_ground_truth,
            1.0 - self.popular_ratio_recommended,
            1.0 - self.popular_ratio_ground_truth
        )
    }
}

/// Top `POPULAR_SHARE` of items by count (at least one), ties by lower id.
pub fn popular_items(global: &[u64]) -> Vec<usize> {
    let n_pop = ((global.len() as f64 * POPULAR_SHARE).floor() as usize)
        .max(1)
        .min(global.len());
    let mut order: Vec<usize> = (0..global.len()).collect();
    order.sort_by(|&a, &b| global[b].cmp(&global[a]).then(a.cmp(&b)));
    order.truncate(n_pop);
    order.sort_unstable();
    order
}

/// Share of recommendation slots and of held-out interactions that land on
/// popular items.
pub fn bias_report(rankings: &[RankingResult], global: &[u64], test: &[Interaction]) -> BiasReport {
    let popular = popular_items(global);
    let is_pop = |i: &usize| popular.binary_search(i).is_ok();
    let slots: usize = rankings.iter().map(|r| r.ranked_items.len()).sum();
    let pop_slots: usize = rankings
        .iter()
        .map(|r| r.ranked_items.iter().filter(|i| is_pop(i)).count())
        .sum();
    let pop_test = test.iter().filter(|x| is_pop(&x.item)).count();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    BiasReport {
        popular_ratio_recommended: ratio(pop_slots, slots),
        popular_ratio_ground_truth: ratio(pop_test, test.len()),
        popular_item_set: popular,
    }
}
