//! Popularity statistics over the training time grid.
//!
//! All counts are kept as integers and each statistic is produced by a
//! single division, so results are reproducible bit-for-bit.

use std::fmt::Write as _;

use crate::corpus::{Interaction, TimeGrid};

/// Default high-popularity quantile (top 20%).
pub const DEFAULT_QUANTILE: f64 = 0.20;

/// Six months, in seconds (average Gregorian month).
pub const DEFAULT_WINDOW_SECONDS: f64 = 6.0 * 2_629_746.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PopularityTable {
    pub num_items: usize,
    pub num_steps: usize,
    pub window_steps: usize,
    /// Item-major: `local[i * num_steps + t]` is `p_i^t`.
    pub local: Vec<f64>,
    /// `|D^{window}|` per step.
    pub window_totals: Vec<u64>,
    /// Training interaction count per item.
    pub global: Vec<u64>,
    /// Mean local popularity over each item's own training interactions.
    pub avg_local: Vec<f64>,
}

impl PopularityTable {
    #[inline]
    pub fn local(&self, item: usize, step: usize) -> f64 {
        self.local[item * self.num_steps + step]
    }

    pub fn series(&self, item: usize) -> &[f64] {
        &self.local[item * self.num_steps..(item + 1) * self.num_steps]
    }

    pub fn step_values(&self, step: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_items).map(move |i| self.local(i, step))
    }

    /// Mean local popularity over every training interaction, i.e. the
    /// single population-level average of `p`.
    pub fn population_mean(&self) -> f64 {
        let total: u64 = self.global.iter().sum();
        if total == 0 {
            return 0.0;
        }
        let sum: f64 = self
            .avg_local
            .iter()
            .zip(&self.global)
            .map(|(a, &d)| a * d as f64)
            .sum();
        sum / total as f64
    }

    /// `step,item_id,local_pop` rows, dense over items and steps.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,item_id,local_pop\n");
        for t in 0..self.num_steps {
            for i in 0..self.num_items {
                writeln!(out, "{t},{i},{}", self.local(i, t)).unwrap();
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PersonalPopularityTable {
    pub num_users: usize,
    pub num_steps: usize,
    /// User-major: `personal[u * num_steps + t]` is `s_u^t`.
    pub personal: Vec<f64>,
    /// `p̂^t` per step; `+∞` when nothing has nonzero popularity.
    pub threshold: Vec<f64>,
    pub quantile: f64,
    /// Lifetime high-popularity ratio used when a user is inactive in a window.
    pub lifetime: Vec<f64>,
}

impl PersonalPopularityTable {
    #[inline]
    pub fn personal(&self, user: usize, step: usize) -> f64 {
        self.personal[user * self.num_steps + step]
    }

    pub fn series(&self, user: usize) -> &[f64] {
        &self.personal[user * self.num_steps..(user + 1) * self.num_steps]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,user_id,personal_pop\n");
        for t in 0..self.num_steps {
            for u in 0..self.num_users {
                writeln!(out, "{t},{u},{}", self.personal(u, t)).unwrap();
            }
        }
        out
    }

    pub fn threshold_csv(&self) -> String {
        let mut out = String::from("step,threshold\n");
        for (t, v) in self.threshold.iter().enumerate() {
            writeln!(out, "{t},{v}").unwrap();
        }
        out
    }
}

fn bucket_by_step(train: &[Interaction], grid: &TimeGrid) -> Vec<Vec<(usize, usize)>> {
    let mut buckets = vec![Vec::new(); grid.num_steps];
    for x in train {
        buckets[grid.step_index(x.timestamp)].push((x.user, x.item));
    }
    buckets
}

/// Builds `p_i^t` over the half-open step window `(t − window_steps, t]`,
/// along with global counts and per-item average local popularity.
pub fn local_popularity(
    train: &[Interaction],
    num_items: usize,
    grid: &TimeGrid,
    window_steps: usize,
) -> PopularityTable {
    assert!(window_steps >= 1, "window_steps must be at least 1");
    let ns = grid.num_steps;
    let buckets = bucket_by_step(train, grid);

    let mut local = vec![0.0; num_items * ns];
    let mut window_totals = vec![0u64; ns];
    let mut counts = vec![0u64; num_items];
    let mut total = 0u64;
    for t in 0..ns {
        for &(_, i) in &buckets[t] {
            counts[i] += 1;
            total += 1;
        }
        if t >= window_steps {
            for &(_, i) in &buckets[t - window_steps] {
                counts[i] -= 1;
                total -= 1;
            }
        }
        window_totals[t] = total;
        if total > 0 {
            for (i, &c) in counts.iter().enumerate() {
                if c > 0 {
                    local[i * ns + t] = c as f64 / total as f64;
                }
            }
        }
    }

    let mut global = vec![0u64; num_items];
    for x in train {
        global[x.item] += 1;
    }
    let mut table = PopularityTable {
        num_items,
        num_steps: ns,
        window_steps,
        local,
        window_totals,
        global,
        avg_local: Vec::new(),
    };
    table.avg_local = avg_local_popularity(train, &table, grid);
    table
}

/// Nearest-rank `(1 − quantile)` quantile of the nonzero popularities at
/// `step`. Items strictly above it are "popular". `+∞` when no item has
/// nonzero popularity.
pub fn high_pop_threshold(pop: &PopularityTable, step: usize, quantile: f64) -> f64 {
    let mut values: Vec<f64> = pop.step_values(step).filter(|&p| p > 0.0).collect();
    nearest_rank_upper(&mut values, quantile)
}

fn nearest_rank_upper(values: &mut [f64], quantile: f64) -> f64 {
    assert!(
        quantile > 0.0 && quantile < 1.0,
        "quantile must lie in (0, 1)"
    );
    if values.is_empty() {
        return f64::INFINITY;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    // guard against 0.8 * 5 = 4.000000000000001 style round-up
    let rank = (((1.0 - quantile) * n as f64) - 1e-9).ceil().max(1.0) as usize;
    values[rank.min(n) - 1]
}

/// Evolving personal popularity `s_u^t`: the share of a user's window
/// interactions whose item is popular at `t`. Users with no window activity
/// fall back to their lifetime ratio (each interaction judged at its own
/// step); users with no history get 0.
pub fn personal_popularity(
    train: &[Interaction],
    pop: &PopularityTable,
    grid: &TimeGrid,
    num_users: usize,
    quantile: f64,
) -> PersonalPopularityTable {
    let ns = grid.num_steps;
    let w = pop.window_steps;
    let threshold: Vec<f64> = (0..ns)
        .map(|t| high_pop_threshold(pop, t, quantile))
        .collect();
    let popular = |item: usize, t: usize| pop.local(item, t) > threshold[t];

    let buckets = bucket_by_step(train, grid);

    let mut life_hits = vec![0u64; num_users];
    let mut life_total = vec![0u64; num_users];
    for (t, bucket) in buckets.iter().enumerate() {
        for &(u, i) in bucket {
            life_total[u] += 1;
            if popular(i, t) {
                life_hits[u] += 1;
            }
        }
    }
    let lifetime: Vec<f64> = life_hits
        .iter()
        .zip(&life_total)
        .map(|(&h, &n)| if n == 0 { 0.0 } else { h as f64 / n as f64 })
        .collect();

    let mut personal = vec![0.0; num_users * ns];
    let mut hits = vec![0u64; num_users];
    let mut totals = vec![0u64; num_users];
    let mut touched = Vec::new();
    for t in 0..ns {
        let lo = (t + 1).saturating_sub(w);
        for bucket in &buckets[lo..=t] {
            for &(u, i) in bucket {
                if totals[u] == 0 {
                    touched.push(u);
                }
                totals[u] += 1;
                if popular(i, t) {
                    hits[u] += 1;
                }
            }
        }
        for u in 0..num_users {
            personal[u * ns + t] = if totals[u] > 0 {
                hits[u] as f64 / totals[u] as f64
            } else {
                lifetime[u]
            };
        }
        for &u in &touched {
            hits[u] = 0;
            totals[u] = 0;
        }
        touched.clear();
    }

    PersonalPopularityTable {
        num_users,
        num_steps: ns,
        personal,
        threshold,
        quantile,
        lifetime,
    }
}

/// `E_p[p_i]`: mean of `p_i^t` over the steps of item `i`'s own training
/// interactions, summed in input order. Items never seen get 0.
pub fn avg_local_popularity(
    train: &[Interaction],
    pop: &PopularityTable,
    grid: &TimeGrid,
) -> Vec<f64> {
    let mut sum = vec![0.0; pop.num_items];
    let mut count = vec![0u64; pop.num_items];
    for x in train {
        sum[x.item] += pop.local(x.item, grid.step_index(x.timestamp));
        count[x.item] += 1;
    }
    sum.iter()
        .zip(&count)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(steps: usize) -> TimeGrid {
        // one second per step
        TimeGrid::new(0, steps as i64, steps).unwrap()
    }

    fn ev(u: usize, i: usize, t: i64) -> Interaction {
        Interaction::new(u, i, t)
    }

    #[test]
    fn sole_item_has_full_share() {
        let train: Vec<_> = (0..7).map(|k| ev(k, 2, 3)).collect();
        let g = grid(5);
        let pop = local_popularity(&train, 4, &g, 2);
        assert_eq!(pop.local(2, 3), 1.0);
        assert_eq!(pop.local(2, 4), 1.0);
        assert_eq!(pop.local(0, 3), 0.0);
    }

    #[test]
    fn three_of_ten() {
        let mut train: Vec<_> = (0..3).map(|k| ev(k, 0, 1)).collect();
        train.extend((0..7).map(|k| ev(k, 1 + k % 3, 2)));
        let pop = local_popularity(&train, 4, &grid(4), 2);
        assert_eq!(pop.window_totals[2], 10);
        assert_eq!(pop.local(0, 2), 0.3);
        // step 3 window (1, 3] drops step 1
        assert_eq!(pop.local(0, 3), 0.0);
    }

    #[test]
    fn empty_window_is_zero() {
        let train = vec![ev(0, 0, 3)];
        let pop = local_popularity(&train, 2, &grid(5), 1);
        assert!(pop.step_values(0).all(|p| p == 0.0));
        assert_eq!(pop.window_totals[0], 0);
    }

    #[test]
    fn threshold_nearest_rank() {
        let mut v = vec![0.5, 0.1, 0.3, 0.2, 0.4];
        assert_eq!(nearest_rank_upper(&mut v, 0.2), 0.4);
        let mut v = vec![0.25; 4];
        assert_eq!(nearest_rank_upper(&mut v, 0.2), 0.25);
        assert_eq!(nearest_rank_upper(&mut [], 0.2), f64::INFINITY);
    }

    #[test]
    fn identical_popularity_has_no_popular_items() {
        let train: Vec<_> = (0..4).map(|i| ev(0, i, 0)).collect();
        let g = grid(2);
        let pop = local_popularity(&train, 4, &g, 1);
        let thr = high_pop_threshold(&pop, 0, 0.2);
        assert_eq!(thr, 0.25);
        assert!(pop.step_values(0).all(|p| !(p > thr)));
    }

    #[test]
    fn personal_ratio_half() {
        // step 0: item 0 dominant (popular); items 1..=4 sparse
        let mut train = Vec::new();
        for k in 0..10 {
            train.push(ev(1 + k, 0, 0));
        }
        for i in 1..=4 {
            train.push(ev(20, i, 0));
        }
        // user 0: two popular clicks, two unpopular
        train.push(ev(0, 0, 0));
        train.push(ev(0, 0, 0));
        train.push(ev(0, 1, 0));
        train.push(ev(0, 2, 0));
        let g = grid(1);
        let pop = local_popularity(&train, 5, &g, 1);
        let pers = personal_popularity(&train, &pop, &g, 21, 0.2);
        assert_eq!(pers.personal(0, 0), 0.5);
        assert_eq!(pers.personal(20, 0), 0.0);
        assert_eq!(pers.personal(1, 0), 1.0);
    }

    #[test]
    fn inactive_user_uses_lifetime_ratio() {
        // steps 0..3 each: item 0 heavily clicked by filler users, item 1 once.
        let mut train = Vec::new();
        for t in 0..3 {
            for k in 0..8 {
                train.push(ev(10 + k, 0, t));
            }
            for i in 1..=5 {
                train.push(ev(20, i, t));
            }
        }
        // user 0: 6 clicks at steps 0..3, 3 on item 0 (popular) and 3 on tail items
        for t in 0..3 {
            train.push(ev(0, 0, t));
            train.push(ev(0, 1 + t as usize, t));
        }
        train.sort_by_key(|x| x.timestamp);
        let g = grid(6);
        let pop = local_popularity(&train, 6, &g, 1);
        let pers = personal_popularity(&train, &pop, &g, 21, 0.2);
        assert_eq!(pers.lifetime[0], 0.5);
        // inactive at step 5 (window is step 5 only)
        assert_eq!(pers.personal(0, 5), 0.5);
        // a user with no history at all
        assert_eq!(pers.personal(5, 2), 0.0);
    }

    #[test]
    fn avg_local_mean_of_own_steps() {
        // item 0 gets p=0.2 at step 0 and p=0.4 at step 1
        let mut train = vec![ev(0, 0, 0)];
        train.extend((0..4).map(|k| ev(k, 1, 0)));
        train.extend((0..2).map(|k| ev(k, 0, 1)));
        train.extend((0..3).map(|k| ev(k, 2, 1)));
        let g = grid(2);
        let pop = local_popularity(&train, 4, &g, 1);
        assert_eq!(pop.local(0, 0), 0.2);
        assert_eq!(pop.local(0, 1), 0.4);
        // (0.2 + 0.4 + 0.4) / 3
        assert_eq!(pop.avg_local[0], (0.2 + 0.4 + 0.4) / 3.0);
        assert_eq!(pop.avg_local[3], 0.0);
        let single = vec![ev(0, 1, 1)];
        let p1 = local_popularity(&single, 2, &g, 1);
        assert_eq!(p1.avg_local[1], p1.local(1, 1));
    }

    #[test]
    fn global_counts() {
        let train = vec![ev(0, 1, 0), ev(1, 1, 1), ev(0, 0, 1)];
        let pop = local_popularity(&train, 3, &grid(2), 1);
        assert_eq!(pop.global, vec![1, 2, 0]);
    }
}
