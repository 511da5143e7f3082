//! BPR + quality loss with hand-derived gradients.
//!
//! For the causal model each item score is
//! `y = tanh(q + c) · softplus(m)` with `c = g(s, p) · p · MLP(i)` and
//! `p = E_p[p_i]`. Gradients flow through the tanh gate, the softplus, the
//! consistency exponential, the MLP and (for LightGCN) the propagation.

use super::{TrainConfig, TrainMode};
use crate::backbone::{
    conformity_partials, conformity_value, item_mlp_backward, item_mlp_hidden, propagate,
    propagate_backward, sigmoid, softplus, InteractionGraph, ModelParams, ParamGrads,
};

/// One `(u, i, t, j)` training tuple with its step-resolved statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
    /// `s_u^t` at the positive interaction's step.
    pub s_value: f64,
}

/// Per-item quantities the loss reads but never updates.
#[derive(Clone, Debug, PartialEq)]
pub struct LossContext {
    /// `E_p[p_i]`.
    pub avg_pop: Vec<f64>,
    /// Global counts `d_i`.
    pub global: Vec<u64>,
    /// IPS weight per positive item; `None` outside IPS mode.
    pub ips_weight: Option<Vec<f64>>,
}

/// `min(max_d / d_i, cap)`; items never seen get the cap.
pub fn ips_weights(global: &[u64], cap: f64) -> Vec<f64> {
    let max = global.iter().copied().max().unwrap_or(0) as f64;
    global
        .iter()
        .map(|&d| {
            if d == 0 {
                cap
            } else {
                (max / d as f64).min(cap)
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct BatchLoss {
    /// Mean BPR term.
    pub bpr: f64,
    /// Mean quality term (0 when the quality path is disabled).
    pub quality: f64,
    /// `bpr + λ · quality`: the differentiated objective.
    pub total: f64,
    pub grads: ParamGrads,
}

struct ItemEval {
    tanh_a: f64,
    sp_m: f64,
    sig_m: f64,
    cons_p: f64,
    y: f64,
}

/// Loss and gradient of `mean BPR + λ · mean quality` over `batch`.
pub fn batch_loss(
    params: &ModelParams,
    graph: Option<&InteractionGraph>,
    batch: &[Sample],
    ctx: &LossContext,
    cfg: &TrainConfig,
) -> BatchLoss {
    let mut grads = params.zeros_like();
    if batch.is_empty() {
        return BatchLoss {
            bpr: 0.0,
            quality: 0.0,
            total: 0.0,
            grads,
        };
    }
    let dim = params.dim;
    let prop = propagate(params, graph);
    let mut d_user = vec![0.0; prop.user_final.len()];
    let mut d_item = vec![0.0; prop.item_final.len()];
    let scale = 1.0 / batch.len() as f64;

    let causal = cfg.mode == TrainMode::CausalEpp;
    let use_quality = causal && !cfg.ablation.no_quality;
    let use_consistency = !cfg.ablation.no_consistency;

    // MLP forward per touched item, and its accumulated upstream gradient.
    let mut hidden: Vec<Option<Vec<f64>>> = vec![None; if causal { params.num_items } else { 0 }];
    let mut mlp_out = vec![0.0; hidden.len()];
    let mut d_mlp = vec![0.0; hidden.len()];
    if causal {
        for s in batch {
            for i in [s.pos, s.neg] {
                if hidden[i].is_none() {
                    let h = item_mlp_hidden(params, i);
                    mlp_out[i] = crate::backbone::dot(&params.mlp_w2, &h) + params.mlp_b2;
                    hidden[i] = Some(h);
                }
            }
        }
    }

    let mut bpr_sum = 0.0;
    let mut q_sum = 0.0;
    for s in batch {
        let u = s.user;
        let uf = prop.user(u);
        let m_pos = crate::backbone::dot(uf, prop.item(s.pos));
        let m_neg = crate::backbone::dot(uf, prop.item(s.neg));
        let weight = ctx.ips_weight.as_ref().map_or(1.0, |w| w[s.pos]);

        if !causal {
            let diff = m_pos - m_neg;
            bpr_sum += weight * softplus(-diff);
            let g = weight * (sigmoid(diff) - 1.0) * scale;
            accumulate_match(&mut d_user, &mut d_item, &prop, u, s.pos, g, dim);
            accumulate_match(&mut d_user, &mut d_item, &prop, u, s.neg, -g, dim);
            continue;
        }

        let eval = |i: usize, m: f64| -> ItemEval {
            let p = ctx.avg_pop[i];
            let c = conformity_value(s.s_value, p, cfg.alpha, mlp_out[i], use_consistency);
            let q = if use_quality { params.quality[i] } else { 0.0 };
            let tanh_a = (q + c).tanh();
            let sp_m = softplus(m);
            let (_, _, cons_p) =
                conformity_partials(s.s_value, p, cfg.alpha, mlp_out[i], use_consistency);
            ItemEval {
                tanh_a,
                sp_m,
                sig_m: sigmoid(m),
                cons_p,
                y: tanh_a * sp_m,
            }
        };
        let ei = eval(s.pos, m_pos);
        let ej = eval(s.neg, m_neg);
        let diff = ei.y - ej.y;
        bpr_sum += weight * softplus(-diff);
        let g = weight * (sigmoid(diff) - 1.0) * scale;

        for (item, e, dy) in [(s.pos, &ei, g), (s.neg, &ej, -g)] {
            let da = dy * (1.0 - e.tanh_a * e.tanh_a) * e.sp_m;
            let dm = dy * e.tanh_a * e.sig_m;
            if use_quality {
                grads.quality[item] += da;
            }
            d_mlp[item] += da * e.cons_p;
            accumulate_match(&mut d_user, &mut d_item, &prop, u, item, dm, dim);
        }

        if use_quality {
            let sign = match ctx.global[s.pos].cmp(&ctx.global[s.neg]) {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Less => -1.0,
                std::cmp::Ordering::Equal => 0.0,
            };
            let x = sign * (params.quality[s.pos] - params.quality[s.neg]);
            q_sum += softplus(-x);
            let gq = cfg.lambda * (sigmoid(x) - 1.0) * sign * scale;
            grads.quality[s.pos] += gq;
            grads.quality[s.neg] -= gq;
        }
    }

    if causal {
        for (i, h) in hidden.iter().enumerate() {
            if let Some(h) = h {
                item_mlp_backward(params, i, h, d_mlp[i], &mut grads);
            }
        }
    }
    propagate_backward(params, graph, &d_user, &d_item, &mut grads);

    let bpr = bpr_sum * scale;
    let quality = q_sum * scale;
    BatchLoss {
        bpr,
        quality,
        total: bpr + cfg.lambda * quality,
        grads,
    }
}

fn accumulate_match(
    d_user: &mut [f64],
    d_item: &mut [f64],
    prop: &crate::backbone::PropagatedEmbeddings,
    u: usize,
    i: usize,
    g: f64,
    dim: usize,
) {
    if g == 0.0 {
        return;
    }
    let (uf, itf) = (prop.user(u), prop.item(i));
    for d in 0..dim {
        d_user[u * dim + d] += g * itf[d];
        d_item[i * dim + d] += g * uf[d];
    }
}

/// Derivative of one item's causal score with respect to `s`, for
/// inspecting how personal popularity enters the objective.
pub fn score_sensitivity_to_s(
    quality: f64,
    m: f64,
    s: f64,
    p: f64,
    mlp_out: f64,
    alpha: f64,
    use_consistency: bool,
) -> f64 {
    let c = conformity_value(s, p, alpha, mlp_out, use_consistency);
    let t = (quality + c).tanh();
    let (ds, _, _) = conformity_partials(s, p, alpha, mlp_out, use_consistency);
    (1.0 - t * t) * softplus(m) * ds
}
