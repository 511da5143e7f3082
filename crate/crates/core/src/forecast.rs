//! Moving-average trend extrapolation of popularity series.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::TimeGrid;
use crate::error::{Error, Result};
use crate::popstats::{PersonalPopularityTable, PopularityTable};

/// How the gradient of the moving-average line is estimated at `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlopeEstimator {
    /// `MA_t − MA_{t−1}`.
    #[default]
    BackwardDifference,
    /// Least-squares slope over the last `w2` moving-average points.
    Regression,
}

/// Mean of the last `min(w2, t + 1)` values ending at index `t`.
pub fn moving_average(series: &[f64], w2: usize, t: usize) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::InvalidConfig("moving average of an empty series".into()));
    }
    if w2 == 0 {
        return Err(Error::InvalidConfig("moving-average window must be positive".into()));
    }
    if t >= series.len() {
        return Err(Error::InvalidConfig(format!(
            "index {t} outside series of length {}",
            series.len()
        )));
    }
    Ok(ma_unchecked(series, w2, t))
}

fn ma_unchecked(series: &[f64], w2: usize, t: usize) -> f64 {
    let lo = (t + 1).saturating_sub(w2);
    let window = &series[lo..=t];
    window.iter().sum::<f64>() / window.len() as f64
}

/// Backward difference of the moving-average line at `t`; 0 at `t = 0`.
pub fn ma_slope(series: &[f64], w2: usize, t: usize) -> f64 {
    slope_with(series, w2, t, SlopeEstimator::BackwardDifference)
}

pub fn slope_with(series: &[f64], w2: usize, t: usize, estimator: SlopeEstimator) -> f64 {
    let w2 = w2.max(1);
    if t == 0 || series.len() < 2 || t >= series.len() {
        return 0.0;
    }
    match estimator {
        SlopeEstimator::BackwardDifference => {
            ma_unchecked(series, w2, t) - ma_unchecked(series, w2, t - 1)
        }
        SlopeEstimator::Regression => {
            let lo = (t + 1).saturating_sub(w2);
            let points: Vec<(f64, f64)> = (lo..=t)
                .map(|k| (k as f64, ma_unchecked(series, w2, k)))
                .collect();
            if points.len() < 2 {
                return 0.0;
            }
            let n = points.len() as f64;
            let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
            let my = points.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
            sxy / sxx
        }
    }
}

/// Forecast intervention values at the last training step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionPlan {
    pub p_star: Vec<f64>,
    pub s_star: Vec<f64>,
    pub p_last: Vec<f64>,
    pub p_slope: Vec<f64>,
    pub s_last: Vec<f64>,
    pub s_slope: Vec<f64>,
    pub delta_item: usize,
    pub delta_user: usize,
    pub ma_window: usize,
}

impl InterventionPlan {
    pub fn items_csv(&self) -> String {
        let mut out = String::from("item_id,p_T,slope,p_star\n");
        for i in 0..self.p_star.len() {
            writeln!(
                out,
                "{i},{},{},{}",
                self.p_last[i], self.p_slope[i], self.p_star[i]
            )
            .unwrap();
        }
        out
    }

    pub fn users_csv(&self) -> String {
        let mut out = String::from("user_id,s_T,slope,s_star\n");
        for u in 0..self.s_star.len() {
            writeln!(
                out,
                "{u},{},{},{}",
                self.s_last[u], self.s_slope[u], self.s_star[u]
            )
            .unwrap();
        }
        out
    }
}

/// `w2` as a share of the grid length, at least one step.
pub fn ma_window_for(grid: &TimeGrid, fraction: f64) -> usize {
    ((grid.num_steps as f64 * fraction).round() as usize).max(1)
}

/// Extrapolates each item's and user's series from step `T` by
/// `slope · delta`, clamping `p*` to `≥ 0` and `s*` to `[0, 1]`.
pub fn build_intervention(
    pop: &PopularityTable,
    pers: &PersonalPopularityTable,
    grid: &TimeGrid,
    w2: usize,
    delta_item: usize,
    delta_user: usize,
    estimator: SlopeEstimator,
) -> InterventionPlan {
    let t = grid.last_train_step;
    let mut plan = InterventionPlan {
        p_star: Vec::with_capacity(pop.num_items),
        s_star: Vec::with_capacity(pers.num_users),
        p_last: Vec::with_capacity(pop.num_items),
        p_slope: Vec::with_capacity(pop.num_items),
        s_last: Vec::with_capacity(pers.num_users),
        s_slope: Vec::with_capacity(pers.num_users),
        delta_item,
        delta_user,
        ma_window: w2,
    };
    for i in 0..pop.num_items {
        let series = pop.series(i);
        let slope = slope_with(series, w2, t, estimator);
        plan.p_last.push(series[t]);
        plan.p_slope.push(slope);
        plan.p_star
            .push((series[t] + slope * delta_item as f64).max(0.0));
    }
    for u in 0..pers.num_users {
        let series = pers.series(u);
        let slope = slope_with(series, w2, t, estimator);
        plan.s_last.push(series[t]);
        plan.s_slope.push(slope);
        plan.s_star
            .push((series[t] + slope * delta_user as f64).clamp(0.0, 1.0));
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ma_examples() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 3, 3).unwrap(), 3.0);
        assert!((moving_average(&[0.7; 3], 5, 2).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(moving_average(&[4.0, 9.0, 1.0], 1, 1).unwrap(), 9.0);
        // short prefix averages what exists
        assert_eq!(moving_average(&[2.0, 4.0], 5, 1).unwrap(), 3.0);
        assert!(moving_average(&[], 2, 0).is_err());
    }

    #[test]
    fn slope_examples() {
        assert_eq!(ma_slope(&[0.3; 6], 3, 5), 0.0);
        assert_eq!(ma_slope(&[0.0, 1.0, 2.0, 3.0, 4.0], 2, 4), 1.0);
        assert_eq!(ma_slope(&[0.0, 0.0, 10.0], 2, 2), 5.0);
        assert_eq!(ma_slope(&[5.0], 2, 0), 0.0);
        assert_eq!(ma_slope(&[1.0, 5.0], 2, 0), 0.0);
    }

    #[test]
    fn regression_slope_on_ramp() {
        let ramp: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let s = slope_with(&ramp, 4, 19, SlopeEstimator::Regression);
        assert!((s - 1.0).abs() < 1e-12);
    }

    fn arb_series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn ma_is_linear((x, y) in arb_series(), a in -3.0f64..3.0, b in -3.0f64..3.0, w2 in 1usize..8) {
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            for t in 0..x.len() {
                let lhs = moving_average(&mix, w2, t).unwrap();
                let rhs = a * moving_average(&x, w2, t).unwrap() + b * moving_average(&y, w2, t).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-9);
            }
        }

        #[test]
        fn increasing_series_forecasts_up(start in 0.0f64..1.0, steps in prop::collection::vec(1e-3f64..0.1, 3..20), w2 in 1usize..6) {
            let mut series = vec![start];
            for d in steps {
                let last = *series.last().unwrap();
                series.push(last + d);
            }
            let t = series.len() - 1;
            prop_assert!(ma_slope(&series, w2, t) > 0.0);
        }
    }
}
