//! On-disk layout of prepared datasets and trained models.
//!
//! A dataset directory holds `train.tsv`, `validation.tsv`, `test.tsv`, the
//! `dataset.toml` sidecar with the time grid, and optionally id maps
//! (`user_ids.tsv`, `item_ids.tsv`) or `ground_truth.json` for synthetic
//! corpora. A model directory holds `model.bin`, `model.toml` and
//! `train_report.jsonl`.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use epp_core::checkpoint::{self, CheckpointMeta};
use epp_core::corpus::io::{read_interactions, write_interactions};
use epp_core::{ModelParams, SplitDataset, SynthGroundTruth, TimeGrid, TrainReport};
use serde::{Deserialize, Serialize};

pub const TRAIN_FILE: &str = "train.tsv";
pub const VALIDATION_FILE: &str = "validation.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const DATASET_SIDECAR: &str = "dataset.toml";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const MODEL_FILE: &str = "model.bin";
pub const MODEL_SIDECAR: &str = "model.toml";
pub const REPORT_FILE: &str = "train_report.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub source: String,
    pub num_users: usize,
    pub num_items: usize,
    pub num_train: usize,
    pub num_validation: usize,
    pub num_test: usize,
    pub grid_origin: i64,
    pub grid_extent: i64,
    pub grid_steps: usize,
    pub last_train_step: usize,
}

pub fn write_dataset(
    dir: &Path,
    ds: &SplitDataset,
    source: &str,
    ids: Option<(&[String], &[String])>,
) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_interactions(&dir.join(TRAIN_FILE), &ds.train)?;
    write_interactions(&dir.join(VALIDATION_FILE), &ds.validation)?;
    write_interactions(&dir.join(TEST_FILE), &ds.test)?;
    let sidecar = DatasetSidecar {
        source: source.to_string(),
        num_users: ds.num_users,
        num_items: ds.num_items,
        num_train: ds.train.len(),
        num_validation: ds.validation.len(),
        num_test: ds.test.len(),
        grid_origin: ds.grid.origin,
        grid_extent: ds.grid.extent,
        grid_steps: ds.grid.num_steps,
        last_train_step: ds.grid.last_train_step,
    };
    std::fs::write(dir.join(DATASET_SIDECAR), toml::to_string(&sidecar)?)?;
    if let Some((users, items)) = ids {
        std::fs::write(dir.join("user_ids.tsv"), id_map(users))?;
        std::fs::write(dir.join("item_ids.tsv"), id_map(items))?;
    }
    Ok(())
}

fn id_map(ids: &[String]) -> String {
    let mut out = String::from("index\toriginal_id\n");
    for (i, id) in ids.iter().enumerate() {
        writeln!(out, "{i}\t{id}").unwrap();
    }
    out
}

pub fn read_dataset(dir: &Path) -> Result<SplitDataset> {
    let sidecar_path = dir.join(DATASET_SIDECAR);
    let text = std::fs::read_to_string(&sidecar_path)
        .with_context(|| format!("reading {}", sidecar_path.display()))?;
    let side: DatasetSidecar =
        toml::from_str(&text).with_context(|| format!("parsing {}", sidecar_path.display()))?;
    let grid = TimeGrid::new(side.grid_origin, side.grid_extent, side.grid_steps)?;
    let ds = SplitDataset {
        train: read_interactions(&dir.join(TRAIN_FILE))?,
        validation: read_interactions(&dir.join(VALIDATION_FILE))?,
        test: read_interactions(&dir.join(TEST_FILE))?,
        grid,
        num_users: side.num_users,
        num_items: side.num_items,
    };
    let all = ds.train.iter().chain(&ds.validation).chain(&ds.test);
    for x in all {
        if x.user >= ds.num_users || x.item >= ds.num_items {
            bail!(
                "interaction ({}, {}) outside the {}x{} universe declared in {}",
                x.user,
                x.item,
                ds.num_users,
                ds.num_items,
                sidecar_path.display()
            );
        }
    }
    if ds.grid.last_train_step != side.last_train_step {
        bail!("{} is inconsistent with its grid", sidecar_path.display());
    }
    Ok(ds)
}

pub fn write_ground_truth(dir: &Path, truth: &SynthGroundTruth) -> Result<()> {
    let path = dir.join(GROUND_TRUTH_FILE);
    std::fs::write(&path, serde_json::to_vec(truth)?)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn read_ground_truth(dir: &Path) -> Result<SynthGroundTruth> {
    let path = dir.join(GROUND_TRUTH_FILE);
    let bytes = std::fs::read(&path).with_context(|| {
        format!(
            "reading {} (only synthetic datasets carry preference ground truth)",
            path.display()
        )
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub struct StoredModel {
    pub params: ModelParams,
    pub meta: CheckpointMeta,
}

pub fn write_model(
    dir: &Path,
    params: &ModelParams,
    meta: &CheckpointMeta,
    report: &TrainReport,
) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    checkpoint::save(&dir.join(MODEL_FILE), params)?;
    std::fs::write(dir.join(MODEL_SIDECAR), toml::to_string(meta)?)?;
    let mut lines = String::new();
    for record in &report.epochs {
        lines.push_str(&serde_json::to_string(record)?);
        lines.push('\n');
    }
    std::fs::write(dir.join(REPORT_FILE), lines)?;
    Ok(())
}

pub fn read_model(dir: &Path) -> Result<StoredModel> {
    let bin = dir.join(MODEL_FILE);
    let params =
        checkpoint::load(&bin).with_context(|| format!("loading checkpoint {}", bin.display()))?;
    let side = dir.join(MODEL_SIDECAR);
    let meta: CheckpointMeta = toml::from_str(
        &std::fs::read_to_string(&side).with_context(|| format!("reading {}", side.display()))?,
    )
    .with_context(|| format!("parsing {}", side.display()))?;
    if meta.backbone_kind != params.kind || meta.dim != params.dim {
        bail!("{} does not describe {}", side.display(), bin.display());
    }
    Ok(StoredModel { params, meta })
}
