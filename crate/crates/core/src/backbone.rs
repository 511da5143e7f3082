//! Learnable parameters and the forward model.
//!
//! The prediction score is `tanh(q_i + c_ui) · softplus(m_ui)`, with the
//! matching score `m_ui` from MF or LightGCN propagation and the conformity
//! effect `c_ui = exp(−α|s − p|) · p · MLP(i)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::Interaction;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    #[default]
    Mf,
    LightGcn,
}

impl BackboneKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackboneKind::Mf => "mf",
            BackboneKind::LightGcn => "lightgcn",
        }
    }
}

impl std::str::FromStr for BackboneKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mf" => Ok(BackboneKind::Mf),
            "lightgcn" | "light-gcn" => Ok(BackboneKind::LightGcn),
            other => Err(format!("unknown backbone {other:?} (expected mf or lightgcn)")),
        }
    }
}

/// Default LightGCN depth.
pub const DEFAULT_LAYERS: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub num_users: usize,
    pub num_items: usize,
    pub dim: usize,
    pub hidden: usize,
    pub kind: BackboneKind,
    pub num_layers: usize,
    /// `num_users × dim`, row-major.
    pub user_emb: Vec<f64>,
    /// `num_items × dim`, row-major.
    pub item_emb: Vec<f64>,
    pub quality: Vec<f64>,
    /// `dim × hidden`, row-major.
    pub mlp_w1: Vec<f64>,
    pub mlp_b1: Vec<f64>,
    pub mlp_w2: Vec<f64>,
    pub mlp_b2: f64,
}

pub fn hidden_width(dim: usize) -> usize {
    (dim / 2).max(1)
}

/// Embeddings and MLP weights from `Normal(0, 0.1/√dim)`, biases and
/// quality at zero.
pub fn init_params(
    num_users: usize,
    num_items: usize,
    dim: usize,
    kind: BackboneKind,
    num_layers: usize,
    seed: u64,
) -> ModelParams {
    assert!(dim >= 1, "embedding dimension must be positive");
    let hidden = hidden_width(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.1 / (dim as f64).sqrt()).expect("valid std");
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| normal.sample(&mut rng)).collect() };
    let user_emb = draw(num_users * dim);
    let item_emb = draw(num_items * dim);
    let mlp_w1 = draw(dim * hidden);
    let mlp_w2 = draw(hidden);
    ModelParams {
        num_users,
        num_items,
        dim,
        hidden,
        kind,
        num_layers: if kind == BackboneKind::Mf { 0 } else { num_layers },
        user_emb,
        item_emb,
        quality: vec![0.0; num_items],
        mlp_w1,
        mlp_b1: vec![0.0; hidden],
        mlp_w2,
        mlp_b2: 0.0,
    }
}

impl ModelParams {
    pub fn user_row(&self, u: usize) -> &[f64] {
        &self.user_emb[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item_row(&self, i: usize) -> &[f64] {
        &self.item_emb[i * self.dim..(i + 1) * self.dim]
    }

    /// Every tensor in declaration order.
    pub fn tensors(&self) -> [&[f64]; 7] {
        [
            &self.user_emb,
            &self.item_emb,
            &self.quality,
            &self.mlp_w1,
            &self.mlp_b1,
            &self.mlp_w2,
            std::slice::from_ref(&self.mlp_b2),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 7] {
        [
            &mut self.user_emb,
            &mut self.item_emb,
            &mut self.quality,
            &mut self.mlp_w1,
            &mut self.mlp_b1,
            &mut self.mlp_w2,
            std::slice::from_mut(&mut self.mlp_b2),
        ]
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            user_emb: vec![0.0; self.user_emb.len()],
            item_emb: vec![0.0; self.item_emb.len()],
            quality: vec![0.0; self.quality.len()],
            mlp_w1: vec![0.0; self.mlp_w1.len()],
            mlp_b1: vec![0.0; self.mlp_b1.len()],
            mlp_w2: vec![0.0; self.mlp_w2.len()],
            mlp_b2: 0.0,
            ..self.clone_shape()
        }
    }

    fn clone_shape(&self) -> ModelParams {
        ModelParams {
            num_users: self.num_users,
            num_items: self.num_items,
            dim: self.dim,
            hidden: self.hidden,
            kind: self.kind,
            num_layers: self.num_layers,
            user_emb: Vec::new(),
            item_emb: Vec::new(),
            quality: Vec::new(),
            mlp_w1: Vec::new(),
            mlp_b1: Vec::new(),
            mlp_w2: Vec::new(),
            mlp_b2: 0.0,
        }
    }
}

/// Gradients share the parameter layout.
pub type ParamGrads = ModelParams;

/// Symmetric-normalized bipartite adjacency of the training graph.
/// Repeated (user, item) pairs form a single edge.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionGraph {
    pub num_users: usize,
    pub num_items: usize,
    /// `(item, 1/√(|N_u||N_i|))` per user.
    pub user_adj: Vec<Vec<(usize, f64)>>,
    /// `(user, 1/√(|N_u||N_i|))` per item.
    pub item_adj: Vec<Vec<(usize, f64)>>,
}

impl InteractionGraph {
    pub fn from_interactions(
        interactions: &[Interaction],
        num_users: usize,
        num_items: usize,
    ) -> Self {
        let mut edges: Vec<(usize, usize)> =
            interactions.iter().map(|x| (x.user, x.item)).collect();
        edges.sort_unstable();
        edges.dedup();
        let mut udeg = vec![0usize; num_users];
        let mut ideg = vec![0usize; num_items];
        for &(u, i) in &edges {
            udeg[u] += 1;
            ideg[i] += 1;
        }
        let mut user_adj = vec![Vec::new(); num_users];
        let mut item_adj = vec![Vec::new(); num_items];
        for &(u, i) in &edges {
            let w = 1.0 / ((udeg[u] * ideg[i]) as f64).sqrt();
            user_adj[u].push((i, w));
            item_adj[i].push((u, w));
        }
        Self {
            num_users,
            num_items,
            user_adj,
            item_adj,
        }
    }

    /// One application of the normalized adjacency. Isolated nodes carry
    /// their own row forward unchanged. The operator is symmetric, so the
    /// same routine propagates gradients.
    fn apply(&self, users: &[f64], items: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
        let mut next_u = vec![0.0; users.len()];
        let mut next_i = vec![0.0; items.len()];
        for (u, adj) in self.user_adj.iter().enumerate() {
            let dst = &mut next_u[u * dim..(u + 1) * dim];
            if adj.is_empty() {
                dst.copy_from_slice(&users[u * dim..(u + 1) * dim]);
                continue;
            }
            for &(i, w) in adj {
                for (d, s) in dst.iter_mut().zip(&items[i * dim..(i + 1) * dim]) {
                    *d += w * s;
                }
            }
        }
        for (i, adj) in self.item_adj.iter().enumerate() {
            let dst = &mut next_i[i * dim..(i + 1) * dim];
            if adj.is_empty() {
                dst.copy_from_slice(&items[i * dim..(i + 1) * dim]);
                continue;
            }
            for &(u, w) in adj {
                for (d, s) in dst.iter_mut().zip(&users[u * dim..(u + 1) * dim]) {
                    *d += w * s;
                }
            }
        }
        (next_u, next_i)
    }

    /// `Σ_{k=0..K} A^k x / (K + 1)` applied to a user/item pair of matrices.
    pub fn layer_mean(
        &self,
        users: &[f64],
        items: &[f64],
        dim: usize,
        layers: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut acc_u = users.to_vec();
        let mut acc_i = items.to_vec();
        let mut cur = (users.to_vec(), items.to_vec());
        for _ in 0..layers {
            cur = self.apply(&cur.0, &cur.1, dim);
            acc_u.iter_mut().zip(&cur.0).for_each(|(a, b)| *a += b);
            acc_i.iter_mut().zip(&cur.1).for_each(|(a, b)| *a += b);
        }
        let scale = 1.0 / (layers + 1) as f64;
        acc_u.iter_mut().for_each(|v| *v *= scale);
        acc_i.iter_mut().for_each(|v| *v *= scale);
        // exact copy rather than K+1 rounded additions
        for (u, adj) in self.user_adj.iter().enumerate() {
            if adj.is_empty() {
                acc_u[u * dim..(u + 1) * dim].copy_from_slice(&users[u * dim..(u + 1) * dim]);
            }
        }
        for (i, adj) in self.item_adj.iter().enumerate() {
            if adj.is_empty() {
                acc_i[i * dim..(i + 1) * dim].copy_from_slice(&items[i * dim..(i + 1) * dim]);
            }
        }
        (acc_u, acc_i)
    }
}

/// Final user and item representations used by the matching score.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagatedEmbeddings {
    pub dim: usize,
    pub user_final: Vec<f64>,
    pub item_final: Vec<f64>,
}

impl PropagatedEmbeddings {
    pub fn user(&self, u: usize) -> &[f64] {
        &self.user_final[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.item_final[i * self.dim..(i + 1) * self.dim]
    }
}

/// MF: the base embeddings. LightGCN: layer mean over `K` propagation rounds.
pub fn propagate(params: &ModelParams, graph: Option<&InteractionGraph>) -> PropagatedEmbeddings {
    let (user_final, item_final) = match (params.kind, graph) {
        (BackboneKind::LightGcn, Some(g)) if params.num_layers > 0 => {
            g.layer_mean(&params.user_emb, &params.item_emb, params.dim, params.num_layers)
        }
        (BackboneKind::LightGcn, None) if params.num_layers > 0 => {
            panic!("LightGCN propagation needs the training graph")
        }
        _ => (params.user_emb.clone(), params.item_emb.clone()),
    };
    PropagatedEmbeddings {
        dim: params.dim,
        user_final,
        item_final,
    }
}

/// Pulls gradients on the final embeddings back onto the base embeddings,
/// accumulating into `grads`.
pub fn propagate_backward(
    params: &ModelParams,
    graph: Option<&InteractionGraph>,
    d_user_final: &[f64],
    d_item_final: &[f64],
    grads: &mut ParamGrads,
) {
    let (du, di) = match (params.kind, graph) {
        (BackboneKind::LightGcn, Some(g)) if params.num_layers > 0 => {
            g.layer_mean(d_user_final, d_item_final, params.dim, params.num_layers)
        }
        _ => (d_user_final.to_vec(), d_item_final.to_vec()),
    };
    grads.user_emb.iter_mut().zip(&du).for_each(|(a, b)| *a += b);
    grads.item_emb.iter_mut().zip(&di).for_each(|(a, b)| *a += b);
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn matching_score(prop: &PropagatedEmbeddings, u: usize, i: usize) -> f64 {
    dot(prop.user(u), prop.item(i))
}

/// Numerically stable `ln(1 + eˣ)`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Hidden activations of the item MLP.
pub fn item_mlp_hidden(params: &ModelParams, i: usize) -> Vec<f64> {
    let e = params.item_row(i);
    let h = params.hidden;
    let mut pre = params.mlp_b1.clone();
    for (d, &x) in e.iter().enumerate() {
        let row = &params.mlp_w1[d * h..(d + 1) * h];
        for (p, w) in pre.iter_mut().zip(row) {
            *p += x * w;
        }
    }
    pre.iter_mut().for_each(|v| *v = v.tanh());
    pre
}

/// `w2 · tanh(W1ᵀ e_i + b1) + b2` on the base item embedding.
pub fn item_mlp(params: &ModelParams, i: usize) -> f64 {
    dot(&params.mlp_w2, &item_mlp_hidden(params, i)) + params.mlp_b2
}

/// Accumulates `d_out · ∂MLP(i)/∂θ` into `grads`, including the base item
/// embedding row.
pub fn item_mlp_backward(
    params: &ModelParams,
    i: usize,
    hidden: &[f64],
    d_out: f64,
    grads: &mut ParamGrads,
) {
    if d_out == 0.0 {
        return;
    }
    let h = params.hidden;
    grads.mlp_b2 += d_out;
    let mut d_pre = vec![0.0; h];
    for k in 0..h {
        grads.mlp_w2[k] += d_out * hidden[k];
        d_pre[k] = d_out * params.mlp_w2[k] * (1.0 - hidden[k] * hidden[k]);
    }
    for (k, g) in grads.mlp_b1.iter_mut().enumerate() {
        *g += d_pre[k];
    }
    let e = params.item_row(i);
    for d in 0..params.dim {
        let wrow = &params.mlp_w1[d * h..(d + 1) * h];
        let grow = &mut grads.mlp_w1[d * h..(d + 1) * h];
        let mut de = 0.0;
        for k in 0..h {
            grow[k] += e[d] * d_pre[k];
            de += wrow[k] * d_pre[k];
        }
        grads.item_emb[i * params.dim + d] += de;
    }
}

/// `exp(−α|s − p|)`.
pub fn consistency_score(s: f64, p: f64, alpha: f64) -> f64 {
    (-alpha * (s - p).abs()).exp()
}

/// Conformity effect `consistency(s, p) · p · mlp_out`; with
/// `use_consistency = false` the consistency factor is fixed at 1.
pub fn conformity_value(s: f64, p: f64, alpha: f64, mlp_out: f64, use_consistency: bool) -> f64 {
    let g = if use_consistency {
        consistency_score(s, p, alpha)
    } else {
        1.0
    };
    g * p * mlp_out
}

/// Partial derivatives of [`conformity_value`] with respect to
/// `(s, p, mlp_out)`. At `s = p` the subgradient of `|·|` is taken as 0.
pub fn conformity_partials(
    s: f64,
    p: f64,
    alpha: f64,
    mlp_out: f64,
    use_consistency: bool,
) -> (f64, f64, f64) {
    if !use_consistency {
        return (0.0, mlp_out, p);
    }
    let g = consistency_score(s, p, alpha);
    let sign = (s - p).signum() * if s == p { 0.0 } else { 1.0 };
    let d_s = -alpha * sign * g * p * mlp_out;
    let d_p = (alpha * sign * p + 1.0) * g * mlp_out;
    (d_s, d_p, g * p)
}

/// Conformity for item `i` with the MLP evaluated from `params`.
pub fn conformity(params: &ModelParams, i: usize, s: f64, p: f64, alpha: f64) -> f64 {
    conformity_value(s, p, alpha, item_mlp(params, i), true)
}

/// `tanh(q_i + c) · softplus(m_ui)`.
pub fn predict_score(
    params: &ModelParams,
    prop: &PropagatedEmbeddings,
    u: usize,
    i: usize,
    c_value: f64,
) -> f64 {
    (params.quality[i] + c_value).tanh() * softplus(matching_score(prop, u, i))
}
