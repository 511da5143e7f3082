//! Synthetic conformity-driven interaction generator.
//!
//! Each event picks a user uniformly and draws an item from the mixture
//! `(1 − w_u^t) · pref(u, ·) / Σ pref(u, ·) + w_u^t · p^t`, where `p^t` is the
//! exposure popularity at generator step `t`: a power law over a random item
//! order, optionally with a set of items whose popularity ramps up over the
//! last few steps. The mixture keeps the ground truth needed to check
//! debiasing behavior.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{chronological_split, Interaction, SplitDataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    /// Generator steps; independent of the statistics grid.
    pub num_steps: usize,
    pub interactions_per_step: usize,
    pub long_tail_exponent: f64,
    /// Base conformity weight shared by all users.
    pub conformity_mean: f64,
    /// Standard deviation of the per-user offset around `conformity_mean`.
    pub conformity_spread: f64,
    /// Scale of the per-user linear drift over the whole horizon.
    pub conformity_drift: f64,
    pub latent_dim: usize,
    pub preference_sharpness: f64,
    pub quality_weight: f64,
    pub trend_items: usize,
    pub trend_steps: usize,
    /// Exposure multiplier reached by trending items at the last step is
    /// `1 + trend_boost`.
    pub trend_boost: f64,
    pub allow_repeats: bool,
    pub step_seconds: i64,
    pub start_timestamp: i64,
    pub num_parts: usize,
    pub grid_steps: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_users: 200,
            num_items: 300,
            num_steps: 100,
            interactions_per_step: 150,
            long_tail_exponent: 1.5,
            conformity_mean: 0.6,
            conformity_spread: 0.0,
            conformity_drift: 0.0,
            latent_dim: 8,
            preference_sharpness: 3.0,
            quality_weight: 1.0,
            trend_items: 0,
            trend_steps: 20,
            trend_boost: 8.0,
            allow_repeats: true,
            step_seconds: 86_400,
            start_timestamp: 1_262_304_000,
            num_parts: 10,
            grid_steps: 100,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_users == 0 || self.num_items == 0 {
            return bad("synthetic corpus needs at least one user and one item");
        }
        if self.num_steps == 0 || self.interactions_per_step == 0 {
            return bad("synthetic corpus needs positive steps and events per step");
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive");
        }
        if self.step_seconds <= 0 {
            return bad("step_seconds must be positive");
        }
        if !(0.0..=1.0).contains(&self.conformity_mean) {
            return bad("conformity_mean must lie in [0, 1]");
        }
        if self.trend_items > self.num_items {
            return bad("trend_items exceeds num_items");
        }
        if self.trend_steps > self.num_steps {
            return bad("trend_steps exceeds num_steps");
        }
        Ok(())
    }
}

/// What the generator knows and the learner does not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthGroundTruth {
    pub num_users: usize,
    pub num_items: usize,
    pub num_steps: usize,
    /// `num_users × num_items`, row-major, values in `(0, 1]`.
    pub preference: Vec<f64>,
    /// `num_users × num_steps`, row-major, values in `[0, 1]`.
    pub conformity_weight: Vec<f64>,
    pub item_quality_true: Vec<f64>,
    /// `num_steps × num_items`, row-major; each row sums to 1.
    pub exposure: Vec<f64>,
    pub trending_items: Vec<usize>,
}

impl SynthGroundTruth {
    pub fn preference(&self, user: usize, item: usize) -> f64 {
        self.preference[user * self.num_items + item]
    }

    pub fn conformity(&self, user: usize, step: usize) -> f64 {
        self.conformity_weight[user * self.num_steps + step]
    }

    pub fn exposure_at(&self, step: usize) -> &[f64] {
        &self.exposure[step * self.num_items..(step + 1) * self.num_items]
    }

    /// Click distribution of `user` at generator step `step`, before any
    /// no-repeat restriction.
    pub fn click_distribution(&self, user: usize, step: usize) -> Vec<f64> {
        let w = self.conformity(user, step);
        let row = &self.preference[user * self.num_items..(user + 1) * self.num_items];
        let z: f64 = row.iter().sum();
        row.iter()
            .zip(self.exposure_at(step))
            .map(|(&pref, &pop)| (1.0 - w) * pref / z + w * pop)
            .collect()
    }

    /// The user's `k` most preferred items outside `exclude` (sorted ids),
    /// ties broken by ascending id.
    pub fn top_preferred(&self, user: usize, k: usize, exclude: &[usize]) -> Vec<usize> {
        let mut items: Vec<usize> = (0..self.num_items)
            .filter(|i| exclude.binary_search(i).is_err())
            .collect();
        items.sort_by(|&a, &b| {
            self.preference(user, b)
                .total_cmp(&self.preference(user, a))
                .then(a.cmp(&b))
        });
        items.truncate(k);
        items
    }
}

/// Generates a corpus and returns it already split chronologically.
pub fn generate_synthetic(
    config: &SynthConfig,
    seed: u64,
) -> Result<(SplitDataset, SynthGroundTruth)> {
    let (events, truth) = generate_events(config, seed)?;
    let mut split = chronological_split(&events, config.num_parts, config.grid_steps)?;
    split.num_users = config.num_users;
    split.num_items = config.num_items;
    Ok((split, truth))
}

/// Raw timestamp-sorted event list plus ground truth.
pub fn generate_events(
    config: &SynthConfig,
    seed: u64,
) -> Result<(Vec<Interaction>, SynthGroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nu, ni, ns) = (config.num_users, config.num_items, config.num_steps);

    let quality: Vec<f64> = (0..ni).map(|_| rng.random::<f64>()).collect();
    let preference = preference_matrix(config, &quality, &mut rng);
    let conformity_weight = conformity_schedule(config, &mut rng);
    let (exposure, trending_items) = exposure_schedule(config, &mut rng);

    let truth = SynthGroundTruth {
        num_users: nu,
        num_items: ni,
        num_steps: ns,
        preference,
        conformity_weight,
        item_quality_true: quality,
        exposure,
        trending_items,
    };

    let pref_norm: Vec<f64> = truth
        .preference
        .chunks(ni)
        .flat_map(|row| {
            let z: f64 = row.iter().sum();
            row.iter().map(move |p| p / z)
        })
        .collect();

    let mut clicked = vec![false; if config.allow_repeats { 0 } else { nu * ni }];
    let mut remaining = vec![ni; nu];
    let mut events = Vec::with_capacity(ns * config.interactions_per_step);
    let mut weights = vec![0.0; ni];
    for step in 0..ns {
        let exposure = truth.exposure_at(step);
        let mut stamps: Vec<i64> = (0..config.interactions_per_step)
            .map(|_| rng.random_range(0..config.step_seconds))
            .collect();
        stamps.sort_unstable();
        for offset in stamps {
            if !config.allow_repeats && remaining.iter().all(|&r| r == 0) {
                break;
            }
            let user = loop {
                let u = rng.random_range(0..nu);
                if config.allow_repeats || remaining[u] > 0 {
                    break u;
                }
            };
            let w = truth.conformity(user, step);
            let prefs = &pref_norm[user * ni..(user + 1) * ni];
            for (i, slot) in weights.iter_mut().enumerate() {
                let seen = !config.allow_repeats && clicked[user * ni + i];
                *slot = if seen {
                    0.0
                } else {
                    (1.0 - w) * prefs[i] + w * exposure[i]
                };
            }
            let item = sample_index(&weights, &mut rng);
            if !config.allow_repeats {
                clicked[user * ni + item] = true;
                remaining[user] -= 1;
            }
            events.push(Interaction::new(
                user,
                item,
                config.start_timestamp + step as i64 * config.step_seconds + offset,
            ));
        }
    }
    Ok((events, truth))
}

fn sample_index(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = i;
        if target < w {
            return i;
        }
        target -= w;
    }
    last
}

fn preference_matrix(config: &SynthConfig, quality: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let d = config.latent_dim;
    let mut gauss = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| StandardNormal.sample(&mut *rng))
            .collect::<Vec<f64>>()
    };
    let users = gauss(config.num_users * d);
    let items = gauss(config.num_items * d);
    let scale = config.preference_sharpness / (d as f64).sqrt();
    let mut out = Vec::with_capacity(config.num_users * config.num_items);
    for u in 0..config.num_users {
        let xu = &users[u * d..(u + 1) * d];
        let logits: Vec<f64> = (0..config.num_items)
            .map(|i| {
                let yi = &items[i * d..(i + 1) * d];
                let dot: f64 = xu.iter().zip(yi).map(|(a, b)| a * b).sum();
                scale * dot + config.quality_weight * (2.0 * quality[i] - 1.0)
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.extend(logits.iter().map(|l| (l - max).exp()));
    }
    out
}

fn conformity_schedule(config: &SynthConfig, rng: &mut impl Rng) -> Vec<f64> {
    let ns = config.num_steps;
    let mut out = Vec::with_capacity(config.num_users * ns);
    for _ in 0..config.num_users {
        let offset: f64 = StandardNormal.sample(&mut *rng);
        let drift: f64 = StandardNormal.sample(&mut *rng);
        let base = config.conformity_mean + config.conformity_spread * offset;
        for t in 0..ns {
            let phase = if ns > 1 {
                t as f64 / (ns - 1) as f64 - 0.5
            } else {
                0.0
            };
            let w = base + config.conformity_drift * drift * phase;
            out.push(w.clamp(0.0, 1.0));
        }
    }
    out
}

fn exposure_schedule(config: &SynthConfig, rng: &mut impl Rng) -> (Vec<f64>, Vec<usize>) {
    let ni = config.num_items;
    let mut order: Vec<usize> = (0..ni).collect();
    order.shuffle(rng);
    let mut base = vec![0.0; ni];
    for (rank, &item) in order.iter().enumerate() {
        base[item] = ((rank + 1) as f64).powf(-config.long_tail_exponent);
    }
    // trending items come from outside the head (top 20%) of the order
    let head = ni / 5;
    let mut tail: Vec<usize> = order[head.min(ni)..].to_vec();
    tail.shuffle(rng);
    let mut trending: Vec<usize> = tail.into_iter().take(config.trend_items).collect();
    trending.sort_unstable();

    let ns = config.num_steps;
    let ramp_start = ns - config.trend_steps;
    let mut out = Vec::with_capacity(ns * ni);
    for t in 0..ns {
        let mut row = base.clone();
        if t >= ramp_start && config.trend_steps > 0 {
            let frac = (t - ramp_start + 1) as f64 / config.trend_steps as f64;
            for &i in &trending {
                row[i] *= 1.0 + config.trend_boost * frac;
            }
        }
        let z: f64 = row.iter().sum();
        out.extend(row.iter().map(|w| w / z));
    }
    (out, trending)
}
