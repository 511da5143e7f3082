//! Brute-force reference implementations shared by integration tests.
#![allow(dead_code)]

use epp_core::backbone::{init_params, InteractionGraph, ModelParams};
use epp_core::corpus::chronological_split;
use epp_core::training::loss::{batch_loss, LossContext, Sample};
use epp_core::{BackboneKind, Interaction, SplitDataset, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random log of `n` interactions over a skewed item distribution, split
/// 9/1 over a `steps`-step grid.
pub fn random_split(seed: u64, n: usize, users: usize, items: usize, steps: usize) -> SplitDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log: Vec<Interaction> = (0..n)
        .map(|_| {
            let u = rng.random_range(0..users);
            // squaring a uniform draw skews mass toward low ids
            let r: f64 = rng.random();
            let i = ((r * r) * items as f64) as usize;
            Interaction::new(u, i.min(items - 1), rng.random_range(0..10_000))
        })
        .collect();
    log.sort_by_key(|x| x.timestamp);
    let mut ds = chronological_split(&log, 10, steps).unwrap();
    ds.num_users = users;
    ds.num_items = items;
    ds
}

/// Window count of `item` (or of everything) over steps `(t − w, t]`,
/// recounted from scratch.
pub fn window_count(ds: &SplitDataset, item: Option<usize>, t: usize, w: usize) -> u64 {
    ds.train
        .iter()
        .filter(|x| {
            let s = ds.grid.step_index(x.timestamp);
            s <= t && s + w > t && item.is_none_or(|i| x.item == i)
        })
        .count() as u64
}

pub fn brute_local(ds: &SplitDataset, item: usize, t: usize, w: usize) -> f64 {
    let total = window_count(ds, None, t, w);
    if total == 0 {
        0.0
    } else {
        window_count(ds, Some(item), t, w) as f64 / total as f64
    }
}

/// Every statistic recomputed naively: each `p_i^t` by a full scan of the
/// training log, thresholds by sorting, `s_u^t` by direct counting.
pub struct BruteTables {
    /// `[item][step]`.
    pub local: Vec<Vec<f64>>,
    pub threshold: Vec<f64>,
    /// `[user][step]`.
    pub personal: Vec<Vec<f64>>,
    pub avg_local: Vec<f64>,
}

impl BruteTables {
    /// `quantile_percent` is the popular share in whole percent.
    pub fn new(ds: &SplitDataset, w: usize, quantile_percent: usize) -> Self {
        let ns = ds.grid.num_steps;
        let local: Vec<Vec<f64>> = (0..ds.num_items)
            .map(|i| (0..ns).map(|t| brute_local(ds, i, t, w)).collect())
            .collect();
        let threshold: Vec<f64> = (0..ns)
            .map(|t| {
                let mut nz: Vec<f64> = local.iter().map(|row| row[t]).filter(|&p| p > 0.0).collect();
                if nz.is_empty() {
                    return f64::INFINITY;
                }
                nz.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let rank = (nz.len() * (100 - quantile_percent)).div_ceil(100).max(1);
                nz[rank - 1]
            })
            .collect();
        let popular_at = |item: usize, step: usize| local[item][step] > threshold[step];
        let step = |x: &Interaction| ds.grid.step_index(x.timestamp);
        let personal = (0..ds.num_users)
            .map(|u| {
                let mine: Vec<&Interaction> = ds.train.iter().filter(|x| x.user == u).collect();
                (0..ns)
                    .map(|t| {
                        let window: Vec<&&Interaction> = mine
                            .iter()
                            .filter(|x| step(x) <= t && step(x) + w > t)
                            .collect();
                        if !window.is_empty() {
                            let hits = window.iter().filter(|x| popular_at(x.item, t)).count();
                            hits as f64 / window.len() as f64
                        } else if mine.is_empty() {
                            0.0
                        } else {
                            let hits = mine.iter().filter(|x| popular_at(x.item, step(x))).count();
                            hits as f64 / mine.len() as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let avg_local = (0..ds.num_items)
            .map(|i| {
                let mut sum = 0.0;
                let mut n = 0usize;
                for x in ds.train.iter().filter(|x| x.item == i) {
                    sum += local[i][step(x)];
                    n += 1;
                }
                if n == 0 {
                    0.0
                } else {
                    sum / n as f64
                }
            })
            .collect();
        Self {
            local,
            threshold,
            personal,
            avg_local,
        }
    }
}

/// Per-user Recall, Precision and NDCG at `k` with binary relevance,
/// written out longhand and averaged over users with nonempty truth.
pub fn naive_metrics(ranked: &[Vec<usize>], truth: &[Vec<usize>], k: usize) -> (f64, f64, f64) {
    let (mut r, mut p, mut n, mut users) = (0.0, 0.0, 0.0, 0usize);
    for (list, rel) in ranked.iter().zip(truth) {
        if rel.is_empty() {
            continue;
        }
        users += 1;
        let mut hits = 0usize;
        let mut dcg = 0.0;
        for (pos, item) in list.iter().take(k).enumerate() {
            if rel.contains(item) {
                hits += 1;
                dcg += 1.0 / ((pos + 2) as f64).log2();
            }
        }
        let mut idcg = 0.0;
        for pos in 0..rel.len().min(k) {
            idcg += 1.0 / ((pos + 2) as f64).log2();
        }
        r += hits as f64 / rel.len() as f64;
        p += hits as f64 / k as f64;
        n += dcg / idcg;
    }
    let users = users as f64;
    (r / users, p / users, n / users)
}

/// Brute-force k-core: repeatedly drop every edge whose user or item has
/// fewer than `k` edges until nothing changes.
pub fn brute_k_core(edges: &[(usize, usize)], k: usize) -> Vec<bool> {
    let mut keep = vec![true; edges.len()];
    loop {
        let mut changed = false;
        for e in 0..edges.len() {
            if !keep[e] {
                continue;
            }
            let (u, i) = edges[e];
            let du = (0..edges.len()).filter(|&f| keep[f] && edges[f].0 == u).count();
            let di = (0..edges.len()).filter(|&f| keep[f] && edges[f].1 == i).count();
            if du < k || di < k {
                keep[e] = false;
                changed = true;
            }
        }
        if !changed {
            return keep;
        }
    }
}

/// A small model with every parameter pushed away from zero so all paths
/// carry gradient.
pub fn toy_model(users: usize, items: usize, dim: usize, kind: BackboneKind, layers: usize, seed: u64) -> ModelParams {
    let mut p = init_params(users, items, dim, kind, layers, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
    p.mlp_b2 = rng.random_range(-0.5..0.5);
    p
}

/// Largest `|a − n| / max(|a|, |n|, 1e-6)` between analytic and central
/// finite-difference gradients of the batch objective, over every scalar.
pub fn max_gradient_error(
    params: &ModelParams,
    graph: Option<&InteractionGraph>,
    batch: &[Sample],
    ctx: &LossContext,
    cfg: &TrainConfig,
    h: f64,
) -> f64 {
    let analytic = batch_loss(params, graph, batch, ctx, cfg).grads;
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for t in 0..7 {
        let len = params.tensors()[t].len();
        for j in 0..len {
            let orig = probe.tensors()[t][j];
            probe.tensors_mut()[t][j] = orig + h;
            let up = batch_loss(&probe, graph, batch, ctx, cfg).total;
            probe.tensors_mut()[t][j] = orig - h;
            let down = batch_loss(&probe, graph, batch, ctx, cfg).total;
            probe.tensors_mut()[t][j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.tensors()[t][j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

/// Every (user, positive, negative) combination of a 3×4 toy, with
/// personal popularity values kept off the `s = p` kink.
pub fn toy_batch() -> (Vec<Sample>, LossContext) {
    let positives = [(0, 0, 0.35), (0, 1, 0.8), (1, 2, 0.1), (2, 0, 0.55), (2, 3, 0.9)];
    let negatives = [[2, 3], [0, 3], [0, 1], [1, 2], [1, 2]];
    let mut batch = Vec::new();
    for (&(user, pos, s), negs) in positives.iter().zip(negatives) {
        for neg in negs {
            batch.push(Sample {
                user,
                pos,
                neg,
                s_value: s,
            });
        }
    }
    let ctx = LossContext {
        avg_pop: vec![0.45, 0.2, 0.3, 0.05],
        global: vec![3, 1, 2, 1],
        ips_weight: None,
    };
    (batch, ctx)
}

pub fn toy_graph() -> InteractionGraph {
    let log = [(0, 0), (0, 1), (1, 2), (2, 0), (2, 3)]
        .iter()
        .enumerate()
        .map(|(t, &(u, i))| Interaction::new(u, i, t as i64))
        .collect::<Vec<_>>();
    InteractionGraph::from_interactions(&log, 3, 4)
}
