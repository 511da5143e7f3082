//! Fixtures shared by the criterion benches.

use epp_core::backbone::{init_params, InteractionGraph};
use epp_core::corpus::synth::generate_synthetic;
use epp_core::pipeline::{StatsBundle, StatsConfig};
use epp_core::training::{loss_context, positives, LossContext, Sample, TrainInputs};
use epp_core::{BackboneKind, ModelParams, SplitDataset, SynthConfig, TrainConfig};

pub struct Fixture {
    pub ds: SplitDataset,
    pub stats: StatsBundle,
    pub graph: InteractionGraph,
    pub cfg: TrainConfig,
    pub ctx: LossContext,
    pub batch: Vec<Sample>,
}

impl Fixture {
    /// Default synthetic corpus with a 1024-sample batch drawn in log order.
    pub fn new() -> Self {
        let (ds, _) = generate_synthetic(&SynthConfig::default(), 1).expect("synthetic corpus");
        let stats_cfg = StatsConfig {
            window_steps: Some(10),
            ..Default::default()
        };
        let stats = StatsBundle::build(&ds, &stats_cfg).expect("stats");
        let graph = InteractionGraph::from_interactions(&ds.train, ds.num_users, ds.num_items);
        let cfg = TrainConfig::default();
        let ctx = loss_context(&stats.pop, &cfg);
        let inputs = TrainInputs {
            dataset: &ds,
            pop: &stats.pop,
            pers: &stats.pers,
        };
        let train_items = ds.train_items_by_user();
        // deterministic negatives: first unclicked item after the positive
        let batch = positives(&inputs)
            .into_iter()
            .take(1024)
            .map(|(user, pos, s_value)| {
                let neg = (1..ds.num_items)
                    .map(|k| (pos + k) % ds.num_items)
                    .find(|i| train_items[user].binary_search(i).is_err())
                    .expect("an unclicked item");
                Sample {
                    user,
                    pos,
                    neg,
                    s_value,
                }
            })
            .collect();
        Fixture {
            ds,
            stats,
            graph,
            cfg,
            ctx,
            batch,
        }
    }

    pub fn model(&self, kind: BackboneKind, layers: usize) -> ModelParams {
        init_params(self.ds.num_users, self.ds.num_items, self.cfg.dim, kind, layers, 1)
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}
