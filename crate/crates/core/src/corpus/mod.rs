//! Interaction logs, the time grid and the chronological split.

pub mod io;
pub mod synth;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One click: `user` interacted with `item` at `timestamp` (epoch seconds).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub timestamp: i64,
    pub rating: Option<f64>,
}

impl Interaction {
    pub fn new(user: usize, item: usize, timestamp: i64) -> Self {
        Self {
            user,
            item,
            timestamp,
            rating: None,
        }
    }
}

/// Uniform binning of the training time range into `num_steps` steps.
///
/// Step boundaries are computed with exact integer arithmetic over the
/// covered extent, so `step_of` never drifts at the edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub origin: i64,
    /// Seconds covered by the grid (`max − min + 1` of the training range).
    pub extent: i64,
    pub step_duration: f64,
    pub num_steps: usize,
    pub last_train_step: usize,
}

impl TimeGrid {
    pub fn new(origin: i64, extent: i64, num_steps: usize) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::InvalidConfig("num_steps must be positive".into()));
        }
        if extent <= 0 {
            return Err(Error::InvalidConfig("time extent must be positive".into()));
        }
        let mut grid = Self {
            origin,
            extent,
            step_duration: extent as f64 / num_steps as f64,
            num_steps,
            last_train_step: 0,
        };
        grid.last_train_step = (grid.step_of(origin + extent - 1).max(0) as usize).min(num_steps - 1);
        Ok(grid)
    }

    /// Grid spanning `[min_ts, max_ts]` inclusive.
    pub fn spanning(min_ts: i64, max_ts: i64, num_steps: usize) -> Result<Self> {
        Self::new(min_ts, max_ts - min_ts + 1, num_steps)
    }

    /// Raw step number; may fall outside `[0, num_steps)` for timestamps
    /// beyond the training range.
    pub fn step_of(&self, timestamp: i64) -> i64 {
        let offset = (timestamp - self.origin) as i128 * self.num_steps as i128;
        offset.div_euclid(self.extent as i128) as i64
    }

    /// Step clamped into `[0, last_train_step]`; used for statistic lookups.
    pub fn step_index(&self, timestamp: i64) -> usize {
        (self.step_of(timestamp).max(0) as usize).min(self.last_train_step)
    }

    /// Converts a wall-clock window to a step count, rounded up, at least 1.
    pub fn steps_for_seconds(&self, seconds: f64) -> usize {
        ((seconds / self.step_duration).ceil() as usize).max(1)
    }
}

/// Output of [`chronological_split`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: Vec<Interaction>,
    pub validation: Vec<Interaction>,
    pub test: Vec<Interaction>,
    pub grid: TimeGrid,
    pub num_users: usize,
    pub num_items: usize,
}

impl SplitDataset {
    /// Per-user sorted, deduplicated training items.
    pub fn train_items_by_user(&self) -> Vec<Vec<usize>> {
        items_by_user(&self.train, self.num_users)
    }

    pub fn test_items_by_user(&self) -> Vec<Vec<usize>> {
        items_by_user(&self.test, self.num_users)
    }

    pub fn validation_items_by_user(&self) -> Vec<Vec<usize>> {
        items_by_user(&self.validation, self.num_users)
    }

    /// Step of a training-time statistic lookup for `timestamp`.
    pub fn step_of(&self, timestamp: i64) -> usize {
        self.grid.step_index(timestamp)
    }
}

pub(crate) fn items_by_user(interactions: &[Interaction], num_users: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); num_users];
    for x in interactions {
        out[x.user].push(x.item);
    }
    for items in &mut out {
        items.sort_unstable();
        items.dedup();
    }
    out
}

/// A loaded log together with the original id strings of the dense ids.
#[derive(Clone, Debug, Default)]
pub struct InteractionLog {
    pub interactions: Vec<Interaction>,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
}

impl InteractionLog {
    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }
}

/// Loads a `user_id, item_id, rating, timestamp` log, applies iterative
/// k-core filtering and remaps ids densely. Output is sorted by timestamp.
pub fn load_interactions(path: &Path, k_core: usize) -> Result<Vec<Interaction>> {
    load_log(path, k_core).map(|log| log.interactions)
}

/// Like [`load_interactions`] but keeps the id remapping tables.
pub fn load_log(path: &Path, k_core: usize) -> Result<InteractionLog> {
    let text = std::fs::read_to_string(path)?;
    let rows = io::parse_rows(&text, path)?;
    build_log(rows, k_core)
}

/// A parsed row before id remapping.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRow {
    pub user: String,
    pub item: String,
    pub rating: Option<f64>,
    pub timestamp: i64,
}

/// Filters, sorts and remaps raw rows.
pub fn build_log(mut rows: Vec<RawRow>, k_core: usize) -> Result<InteractionLog> {
    // stable: equal timestamps keep file order
    rows.sort_by_key(|r| r.timestamp);

    let edges: Vec<(&str, &str)> = rows
        .iter()
        .map(|r| (r.user.as_str(), r.item.as_str()))
        .collect();
    let keep = k_core_mask(&edges, k_core);

    let mut user_index: HashMap<&str, usize> = HashMap::new();
    let mut item_index: HashMap<&str, usize> = HashMap::new();
    let mut log = InteractionLog::default();
    for (row, kept) in rows.iter().zip(&keep) {
        if !*kept {
            continue;
        }
        let user = *user_index.entry(row.user.as_str()).or_insert_with(|| {
            log.user_ids.push(row.user.clone());
            log.user_ids.len() - 1
        });
        let item = *item_index.entry(row.item.as_str()).or_insert_with(|| {
            log.item_ids.push(row.item.clone());
            log.item_ids.len() - 1
        });
        log.interactions.push(Interaction {
            user,
            item,
            timestamp: row.timestamp,
            rating: row.rating,
        });
    }
    if log.interactions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(log)
}

/// Marks the edges that survive iterative k-core filtering: repeat until
/// every remaining user and item has at least `k` edges. Duplicate edges
/// count once per occurrence.
pub fn k_core_mask<U, I>(edges: &[(U, I)], k: usize) -> Vec<bool>
where
    U: std::hash::Hash + Eq + Copy,
    I: std::hash::Hash + Eq + Copy,
{
    let mut keep = vec![true; edges.len()];
    if k == 0 {
        return keep;
    }
    loop {
        let mut user_deg: HashMap<U, usize> = HashMap::new();
        let mut item_deg: HashMap<I, usize> = HashMap::new();
        for (e, _) in edges.iter().zip(&keep).filter(|(_, k)| **k) {
            *user_deg.entry(e.0).or_default() += 1;
            *item_deg.entry(e.1).or_default() += 1;
        }
        let mut changed = false;
        for (e, kept) in edges.iter().zip(keep.iter_mut()) {
            if *kept && (user_deg[&e.0] < k || item_deg[&e.1] < k) {
                *kept = false;
                changed = true;
            }
        }
        if !changed {
            return keep;
        }
    }
}

/// Splits timestamp-sorted interactions by count: the first
/// `(num_parts − 1) / num_parts` go to training, the last part is halved into
/// validation (which takes the odd one) and test. The grid covers the
/// training time range only.
pub fn chronological_split(
    interactions: &[Interaction],
    num_parts: usize,
    num_steps: usize,
) -> Result<SplitDataset> {
    if num_parts < 2 {
        return Err(Error::InvalidConfig("num_parts must be at least 2".into()));
    }
    let n = interactions.len();
    if n < num_parts {
        return Err(Error::TooFewInteractions {
            needed: num_parts,
            got: n,
        });
    }
    if interactions
        .windows(2)
        .any(|w| w[0].timestamp > w[1].timestamp)
    {
        return Err(Error::InvalidConfig(
            "interactions must be sorted by timestamp".into(),
        ));
    }
    let n_train = n * (num_parts - 1) / num_parts;
    let rest = n - n_train;
    let n_val = rest.div_ceil(2);

    let train = interactions[..n_train].to_vec();
    let validation = interactions[n_train..n_train + n_val].to_vec();
    let test = interactions[n_train + n_val..].to_vec();

    let grid = TimeGrid::spanning(
        train.first().map_or(0, |x| x.timestamp),
        train.last().map_or(0, |x| x.timestamp),
        num_steps,
    )?;
    let num_users = interactions.iter().map(|x| x.user + 1).max().unwrap_or(0);
    let num_items = interactions.iter().map(|x| x.item + 1).max().unwrap_or(0);
    Ok(SplitDataset {
        train,
        validation,
        test,
        grid,
        num_users,
        num_items,
    })
}
