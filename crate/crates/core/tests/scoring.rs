mod common;

use common::*;
use epp_core::backbone::{
    consistency_score, item_mlp, propagate, softplus, InteractionGraph,
};
use epp_core::forecast::InterventionPlan;
use epp_core::inference::{rank_users, InferenceStats, ScoringRule};
use epp_core::{Ablation, BackboneKind, InterventionMode, Scorer, TrainMode};

fn causal_rule(alpha: f64) -> ScoringRule {
    ScoringRule {
        mode: TrainMode::CausalEpp,
        ablation: Ablation::default(),
        alpha,
    }
}

fn stats() -> InferenceStats {
    InferenceStats {
        s_last: vec![0.9, 0.1, 0.5],
        avg_local: vec![0.45, 0.2, 0.3, 0.05],
        population_mean: 0.25,
    }
}

#[test]
fn three_item_scores_match_hand_evaluation() {
    // one user, three items, dim 2, every weight chosen by hand
    let mut p = toy_model(1, 3, 2, BackboneKind::Mf, 0, 1);
    p.user_emb = vec![1.0, -0.5];
    p.item_emb = vec![0.5, 0.0, 1.0, 1.0, -1.0, 2.0];
    p.quality = vec![0.2, -0.1, 0.0];
    p.mlp_w1 = vec![1.0, 0.5]; // dim 2 × hidden 1
    p.mlp_b1 = vec![0.0];
    p.mlp_w2 = vec![2.0];
    p.mlp_b2 = 0.1;
    let s = 0.6;
    let pops = [0.5, 0.2, 0.3];
    let alpha = 1.0;

    // longhand: m = u·v; MLP = 2·tanh(v·[1, .5]) + .1; c = e^{-α|s-p|}·p·MLP
    let by_hand = |m: f64, q: f64, v: [f64; 2], pi: f64| -> f64 {
        let mlp = 2.0 * (v[0] + 0.5 * v[1]).tanh() + 0.1;
        let c = (-alpha * (s - pi as f64).abs()).exp() * pi * mlp;
        (q + c).tanh() * (1.0 + m.exp()).ln()
    };
    let expected = [
        by_hand(0.5, 0.2, [0.5, 0.0], pops[0]),
        by_hand(0.5, -0.1, [1.0, 1.0], pops[1]),
        by_hand(-2.0, 0.0, [-1.0, 2.0], pops[2]),
    ];
    let scorer = Scorer::new(&p, None, causal_rule(alpha));
    let st = InferenceStats {
        s_last: vec![s],
        avg_local: pops.to_vec(),
        population_mean: 0.3,
    };
    let got = scorer.score_all(0, &st, InterventionMode::NoIntervention, None);
    for (g, e) in got.iter().zip(expected) {
        assert!((g - e).abs() < 1e-14, "{g} vs {e}");
    }
    // spot-check one value fully expanded as a constant
    let mlp0 = 2.0 * 0.5f64.tanh() + 0.1;
    assert!((item_mlp(&p, 0) - mlp0).abs() < 1e-15);
    let c0 = consistency_score(0.6, 0.5, 1.0) * 0.5 * mlp0;
    assert!((got[0] - (0.2 + c0).tanh() * softplus(0.5)).abs() < 1e-15);
}

#[test]
fn lightgcn_with_zero_layers_scores_like_mf() {
    let ds = random_split(4, 500, 12, 20, 20);
    let graph = InteractionGraph::from_interactions(&ds.train, ds.num_users, ds.num_items);
    let mf = toy_model(12, 20, 8, BackboneKind::Mf, 0, 5);
    let mut gcn = mf.clone();
    gcn.kind = BackboneKind::LightGcn;
    gcn.num_layers = 0;
    let st = InferenceStats {
        s_last: vec![0.3; 12],
        avg_local: (0..20).map(|i| i as f64 / 40.0).collect(),
        population_mean: 0.2,
    };
    for rule in [causal_rule(0.5), ScoringRule { mode: TrainMode::PlainBackbone, ..causal_rule(0.5) }] {
        let a = Scorer::new(&mf, None, rule);
        let b = Scorer::new(&gcn, Some(&graph), rule);
        for u in 0..12 {
            let x = a.score_all(u, &st, InterventionMode::NoIntervention, None);
            let y = b.score_all(u, &st, InterventionMode::NoIntervention, None);
            for (x, y) in x.iter().zip(&y) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn isolated_nodes_keep_their_base_embedding() {
    let ds = random_split(8, 200, 10, 30, 10);
    let graph = InteractionGraph::from_interactions(&ds.train, ds.num_users, ds.num_items);
    let p = toy_model(10, 30, 4, BackboneKind::LightGcn, 3, 2);
    let prop = propagate(&p, Some(&graph));
    for i in 0..30 {
        if ds.train.iter().all(|x| x.item != i) {
            assert_eq!(prop.item(i), p.item_row(i));
        }
    }
}

fn flat_plan(st: &InferenceStats) -> InterventionPlan {
    InterventionPlan {
        p_star: st.avg_local.clone(),
        s_star: st.s_last.clone(),
        p_last: st.avg_local.clone(),
        p_slope: vec![0.0; st.avg_local.len()],
        s_last: st.s_last.clone(),
        s_slope: vec![0.0; st.s_last.len()],
        delta_item: 5,
        delta_user: 10,
        ma_window: 3,
    }
}

#[test]
fn zero_slope_intervention_matches_plain_inference() {
    let p = toy_model(3, 4, 4, BackboneKind::Mf, 0, 6);
    let scorer = Scorer::new(&p, None, causal_rule(0.5));
    let st = stats();
    let plan = flat_plan(&st);
    for u in 0..3 {
        let a = scorer.score_all(u, &st, InterventionMode::NoIntervention, None);
        let b = scorer.score_all(u, &st, InterventionMode::Intervened, Some(&plan));
        assert_eq!(a, b);
    }
}

#[test]
fn zero_grid_popularity_leaves_quality_and_matching_only() {
    let p = toy_model(3, 4, 4, BackboneKind::Mf, 0, 6);
    let scorer = Scorer::new(&p, None, causal_rule(0.5));
    let prop = propagate(&p, None);
    let got = scorer.score_all(1, &stats(), InterventionMode::GridValues { p: 0.0, s: 0.7 }, None);
    for (i, g) in got.iter().enumerate() {
        let m: f64 = prop.user(1).iter().zip(prop.item(i)).map(|(a, b)| a * b).sum();
        assert!((g - p.quality[i].tanh() * softplus(m)).abs() < 1e-15);
    }
}

#[test]
fn eliminate_p_uses_one_popularity_for_every_item() {
    let p = toy_model(3, 4, 4, BackboneKind::Mf, 0, 6);
    let scorer = Scorer::new(&p, None, causal_rule(0.5));
    let st = stats();
    let a = scorer.score_all(2, &st, InterventionMode::EliminateP, None);
    let b = scorer.score_all(2, &st, InterventionMode::GridValues { p: 0.25, s: 0.5 }, None);
    assert_eq!(a, b);
}

#[test]
fn rankings_exclude_training_items_and_are_sorted() {
    let p = toy_model(3, 4, 4, BackboneKind::Mf, 0, 6);
    let scorer = Scorer::new(&p, None, causal_rule(0.5));
    let train = vec![vec![0, 2], vec![], vec![0, 1, 2, 3]];
    let r = rank_users(&scorer, &stats(), InterventionMode::NoIntervention, None, &[0, 1, 2], &train, 3);
    assert_eq!(r[0].ranked_items.len(), 2);
    assert!(r[0].short && !r[1].short && r[2].ranked_items.is_empty());
    for res in &r {
        assert!(res.scores.windows(2).all(|w| w[0] >= w[1]));
        assert!(res.ranked_items.iter().all(|i| !train[res.user].contains(i)));
    }
}
