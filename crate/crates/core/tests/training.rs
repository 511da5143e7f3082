mod common;

use common::random_split;
use epp_core::checkpoint;
use epp_core::pipeline::{StatsBundle, StatsConfig};
use epp_core::training::{ips_weights, train, TrainInputs};
use epp_core::{Ablation, BackboneKind, SplitDataset, TrainConfig, TrainMode};

fn toy() -> (SplitDataset, StatsBundle) {
    let ds = random_split(12, 1200, 20, 60, 20);
    let stats = StatsBundle::build(
        &ds,
        &StatsConfig {
            window_steps: Some(4),
            ..Default::default()
        },
    )
    .unwrap();
    (ds, stats)
}

fn cfg(mode: TrainMode) -> TrainConfig {
    TrainConfig {
        mode,
        dim: 8,
        lr: 0.01,
        epochs: 200,
        batch_size: 256,
        patience: None,
        ..TrainConfig::default()
    }
}

fn run(ds: &SplitDataset, stats: &StatsBundle, c: &TrainConfig) -> (epp_core::ModelParams, epp_core::TrainReport) {
    let inputs = TrainInputs {
        dataset: ds,
        pop: &stats.pop,
        pers: &stats.pers,
    };
    train(&inputs, c).unwrap()
}

#[test]
fn training_reduces_bpr_loss_in_every_mode() {
    let (ds, stats) = toy();
    for mode in [TrainMode::CausalEpp, TrainMode::PlainBackbone, TrainMode::Ips] {
        let (params, report) = run(&ds, &stats, &cfg(mode));
        let last = report.epochs.last().unwrap();
        assert!(last.bpr_loss < report.initial_bpr_loss, "{mode:?}");
        assert!(params.all_finite());
        for e in &report.epochs {
            assert!(e.bpr_loss >= 0.0 && e.quality_loss >= 0.0 && e.total_loss.is_finite());
        }
    }
}

#[test]
fn identical_seeds_give_identical_models() {
    let (ds, stats) = toy();
    let c = TrainConfig {
        epochs: 15,
        patience: Some(3),
        ..cfg(TrainMode::CausalEpp)
    };
    let (a, ra) = run(&ds, &stats, &c);
    let (b, rb) = run(&ds, &stats, &c);
    assert_eq!(checkpoint::encode(&a), checkpoint::encode(&b));
    assert_eq!(ra.epochs, rb.epochs);
    let (other, _) = run(&ds, &stats, &TrainConfig { seed: 5, ..c });
    assert_ne!(checkpoint::encode(&a), checkpoint::encode(&other));
}

#[test]
fn no_quality_keeps_quality_at_zero() {
    let (ds, stats) = toy();
    let c = TrainConfig {
        epochs: 20,
        ablation: Ablation {
            no_quality: true,
            no_consistency: false,
        },
        ..cfg(TrainMode::CausalEpp)
    };
    let (params, report) = run(&ds, &stats, &c);
    assert!(params.quality.iter().all(|&q| q == 0.0));
    assert!(report.epochs.iter().all(|e| e.quality_loss == 0.0));
}

#[test]
fn ips_weights_are_capped() {
    let (ds, stats) = toy();
    let w = ips_weights(&stats.pop.global, 10.0);
    assert!(w.iter().all(|&x| x <= 10.0 && x >= 1.0));
    let (_, report) = run(&ds, &stats, &TrainConfig { epochs: 2, ..cfg(TrainMode::Ips) });
    assert!(report.ips_weight_max.unwrap() <= 10.0);
}

#[test]
fn early_stopping_restores_the_best_epoch() {
    let (ds, stats) = toy();
    let c = TrainConfig {
        epochs: 60,
        patience: Some(2),
        ..cfg(TrainMode::PlainBackbone)
    };
    let (_, report) = run(&ds, &stats, &c);
    let recalls: Vec<f64> = report.epochs.iter().map(|e| e.val_recall.unwrap()).collect();
    let best = recalls[report.best_epoch];
    assert!(recalls.iter().all(|&r| r <= best));
    assert!(report.epochs.len() <= report.best_epoch + 3);
}

#[test]
fn lightgcn_trains_and_round_trips_through_a_checkpoint() {
    let (ds, stats) = toy();
    let c = TrainConfig {
        epochs: 10,
        backbone: BackboneKind::LightGcn,
        num_layers: 2,
        ..cfg(TrainMode::CausalEpp)
    };
    let (params, report) = run(&ds, &stats, &c);
    assert!(report.epochs.last().unwrap().bpr_loss < report.initial_bpr_loss);
    let dir = tempdir();
    let path = dir.join("model.bin");
    checkpoint::save(&path, &params).unwrap();
    assert_eq!(checkpoint::load(&path).unwrap(), params);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn invalid_configs_are_rejected() {
    let (ds, stats) = toy();
    let inputs = TrainInputs {
        dataset: &ds,
        pop: &stats.pop,
        pers: &stats.pers,
    };
    for bad in [
        TrainConfig { lr: 0.0, ..cfg(TrainMode::CausalEpp) },
        TrainConfig { alpha: -1.0, ..cfg(TrainMode::CausalEpp) },
        TrainConfig { lambda: -0.1, ..cfg(TrainMode::CausalEpp) },
        TrainConfig { dim: 0, ..cfg(TrainMode::CausalEpp) },
    ] {
        assert!(train(&inputs, &bad).is_err());
    }
}

fn tempdir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("epp-train-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
