//! Flat binary checkpoint layout.
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"EPPCKPT\0"
//! 8       4     version (u32 LE, currently 1)
//! 12      4     backbone kind (u32 LE: 0 = MF, 1 = LightGCN)
//! 16      4     num_layers (u32 LE)
//! 20      4     reserved (0)
//! 24      8     num_users (u64 LE)
//! 32      8     num_items (u64 LE)
//! 40      8     dim (u64 LE)
//! 48      8     hidden (u64 LE)
//! 56      ...   f64 LE arrays: user_emb, item_emb, quality, mlp_w1,
//!               mlp_b1, mlp_w2, mlp_b2
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::{BackboneKind, ModelParams};
use crate::error::{Error, Result};
use crate::inference::ScoringRule;
use crate::training::{Ablation, TrainConfig, TrainMode};

pub const MAGIC: &[u8; 8] = b"EPPCKPT\0";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 56;

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.num_scalars());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let kind: u32 = match params.kind {
        BackboneKind::Mf => 0,
        BackboneKind::LightGcn => 1,
    };
    out.extend_from_slice(&kind.to_le_bytes());
    out.extend_from_slice(&(params.num_layers as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for n in [params.num_users, params.num_items, params.dim, params.hidden] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for tensor in params.tensors() {
        for v in tensor {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()) as usize;
    if u32_at(8) != VERSION {
        return Err(bad("unsupported version"));
    }
    let kind = match u32_at(12) {
        0 => BackboneKind::Mf,
        1 => BackboneKind::LightGcn,
        _ => return Err(bad("unknown backbone kind")),
    };
    let num_layers = u32_at(16) as usize;
    let (num_users, num_items, dim, hidden) = (u64_at(24), u64_at(32), u64_at(40), u64_at(48));
    let sizes = [
        num_users * dim,
        num_items * dim,
        num_items,
        dim * hidden,
        hidden,
        hidden,
        1,
    ];
    let total: usize = sizes.iter().sum();
    if bytes.len() != HEADER_LEN + 8 * total {
        return Err(bad("payload length does not match header"));
    }
    let mut floats = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| -> Vec<f64> { floats.by_ref().take(n).collect() };
    let user_emb = take(sizes[0]);
    let item_emb = take(sizes[1]);
    let quality = take(sizes[2]);
    let mlp_w1 = take(sizes[3]);
    let mlp_b1 = take(sizes[4]);
    let mlp_w2 = take(sizes[5]);
    let mlp_b2 = take(1)[0];
    Ok(ModelParams {
        num_users,
        num_items,
        dim,
        hidden,
        kind,
        num_layers,
        user_emb,
        item_emb,
        quality,
        mlp_w1,
        mlp_b1,
        mlp_w2,
        mlp_b2,
    })
}

pub fn save(path: &Path, params: &ModelParams) -> Result<()> {
    std::fs::write(path, encode(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelParams> {
    decode(&std::fs::read(path)?)
}

/// Sidecar describing how the stored parameters are to be scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub backbone_kind: BackboneKind,
    pub dim: usize,
    pub num_layers: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub mode: TrainMode,
    pub ablation: Ablation,
    pub seed: u64,
}

impl CheckpointMeta {
    pub fn from_config(cfg: &TrainConfig, params: &ModelParams) -> Self {
        Self {
            backbone_kind: params.kind,
            dim: params.dim,
            num_layers: params.num_layers,
            alpha: cfg.alpha,
            lambda: cfg.lambda,
            mode: cfg.mode,
            ablation: cfg.ablation,
            seed: cfg.seed,
        }
    }

    pub fn scoring_rule(&self) -> ScoringRule {
        ScoringRule {
            mode: self.mode,
            ablation: self.ablation,
            alpha: self.alpha,
        }
    }
}
