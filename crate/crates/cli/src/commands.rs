use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use epp_core::checkpoint::CheckpointMeta;
use epp_core::corpus::synth::generate_synthetic;
use epp_core::corpus::{chronological_split, load_log};
use epp_core::forecast::moving_average;
use epp_core::inference::{rank_users, recommendations_tsv, ScoringRule};
use epp_core::pipeline::{evaluate_against, test_truth, train_graph, StatsBundle};
use epp_core::training::{held_out_truth, train, TrainInputs};
use epp_core::{BackboneKind, InterventionMode, Scorer, SplitDataset, TrainMode};
use serde::Serialize;

use crate::config::{parse_assignment, RunConfig};
use crate::store::{self, StoredModel};
use crate::{Cli, Command, EvaluateArgs, InferenceArgs, InterventionArg, TruthArg};

pub const RUN_CONFIG_FILE: &str = "run.toml";

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Prepare(a) => {
            let mut over = Overrides::new(cli)?;
            over.opt("k_core", a.k_core);
            over.opt("grid_steps", a.grid_steps);
            let cfg = over.resolve(cli)?;
            if a.synth {
                prepare_synth(&cfg, &a.out)
            } else {
                let input = a.input.as_deref().context("--input is required")?;
                prepare_log(&cfg, input, &a.out)
            }
        }
        Command::Synth(a) => {
            let mut over = Overrides::new(cli)?;
            over.opt("grid_steps", a.grid_steps);
            prepare_synth(&over.resolve(cli)?, &a.out)
        }
        Command::Stats(a) => {
            let mut over = Overrides::new(cli)?;
            over.opt("window_steps", a.window_steps);
            over.opt("quantile", a.quantile);
            let cfg = over.resolve(cli)?;
            stats(&cfg, &a.data, a.out.as_deref().unwrap_or(&a.data))
        }
        Command::Train(a) => {
            let mut over = Overrides::new(cli)?;
            over.opt("mode", a.mode.as_deref().map(parse_mode).transpose()?);
            over.opt(
                "backbone",
                a.backbone.as_deref().map(parse_backbone).transpose()?,
            );
            over.opt("num_layers", a.layers);
            over.flag("no_quality", a.no_quality);
            over.flag("no_consistency", a.no_consistency);
            over.opt("epochs", a.epochs);
            over.opt("lr", a.lr);
            over.opt("dim", a.dim);
            over.opt("batch_size", a.batch_size);
            over.opt("alpha", a.alpha);
            over.opt("lambda", a.lambda);
            over.opt("window_steps", a.window_steps);
            let cfg = over.resolve(cli)?;
            train_cmd(&cfg, &a.data, &a.out)
        }
        Command::Recommend(a) => {
            let ctx = InferenceContext::load(cli, &a.inference)?;
            let rankings = ctx.rank(&(0..ctx.ds.num_users).collect::<Vec<_>>())?;
            emit(a.output.as_deref(), &recommendations_tsv(&rankings))
        }
        Command::Evaluate(a) => evaluate_cmd(cli, a, false),
        Command::BiasReport(a) => evaluate_cmd(cli, a, true),
        Command::Sweep(a) => {
            let mut over = Overrides::new(cli)?;
            over.opt("k", a.k);
            let model = store::read_model(&a.model)?;
            let cfg = over.resolve_for_model(cli, &a.model)?;
            let ds = store::read_dataset(&a.data)?;
            let stats = StatsBundle::build(&ds, &cfg.stats())?;
            let truth = truth_sets(&ds, &a.data, a.truth, cfg.k)?;
            let graph = graph_for(&model, &ds);
            let alphas = if a.alpha.is_empty() {
                vec![model.meta.alpha]
            } else {
                a.alpha.clone()
            };
            let mut out = String::from("delta_item,delta_user,alpha,k,recall,precision,ndcg,num_users\n");
            for &di in &a.delta_item {
                for &du in &a.delta_user {
                    let mut fc = cfg.forecast();
                    fc.delta_item = di;
                    fc.delta_user = du;
                    let plan = stats.plan(&ds, &fc);
                    for &alpha in &alphas {
                        let rule = ScoringRule {
                            alpha,
                            ..model.meta.scoring_rule()
                        };
                        let scorer = Scorer::new(&model.params, graph.as_ref(), rule);
                        let ev = evaluate_against(
                            &scorer,
                            &ds,
                            &stats,
                            InterventionMode::Intervened,
                            Some(&plan),
                            &truth,
                            cfg.k,
                        )?;
                        let m = ev.metrics;
                        writeln!(
                            out,
                            "{di},{du},{alpha},{},{},{},{},{}",
                            m.k, m.recall_at_k, m.precision_at_k, m.ndcg_at_k, m.num_users_evaluated
                        )?;
                    }
                }
            }
            emit(a.output.as_deref(), &out)
        }
        Command::Plotdata(a) => {
            let over = Overrides::new(cli)?;
            let cfg = match &a.model {
                Some(m) => over.resolve_for_model(cli, m)?,
                None => over.resolve(cli)?,
            };
            plotdata(&cfg, &a.data, a.model.as_deref(), &a.out)
        }
    }
}

fn parse_mode(s: &str) -> Result<TrainMode> {
    s.parse().map_err(anyhow::Error::msg)
}

fn parse_backbone(s: &str) -> Result<BackboneKind> {
    s.parse().map_err(anyhow::Error::msg)
}

/// Command-line values that take precedence over the config file.
struct Overrides(toml::Table);

impl Overrides {
    fn new(cli: &Cli) -> Result<Self> {
        let mut table = toml::Table::new();
        for item in &cli.set {
            let (k, v) = parse_assignment(item)?;
            table.insert(k, v);
        }
        let mut over = Self(table);
        over.opt("seed", cli.seed);
        Ok(over)
    }

    fn opt<T: Serialize>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.0
                .insert(key.into(), toml::Value::try_from(v).expect("scalar"));
        }
    }

    fn flag(&mut self, key: &str, on: bool) {
        if on {
            self.0.insert(key.into(), toml::Value::Boolean(true));
        }
    }

    fn resolve(self, cli: &Cli) -> Result<RunConfig> {
        RunConfig::resolve(cli.config.as_deref(), self.0)
    }

    /// Resolves on top of the configuration the model was trained with.
    fn resolve_for_model(self, cli: &Cli, model_dir: &Path) -> Result<RunConfig> {
        let path = model_dir.join(RUN_CONFIG_FILE);
        let base = match std::fs::read_to_string(&path) {
            Ok(text) => text
                .parse::<toml::Table>()
                .with_context(|| format!("parsing {}", path.display()))?,
            Err(_) => toml::Table::new(),
        };
        RunConfig::resolve_over(base, cli.config.as_deref(), self.0)
    }
}

fn prepare_log(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let log = load_log(input, cfg.k_core)?;
    let mut ds = chronological_split(&log.interactions, cfg.num_parts, cfg.grid_steps)?;
    ds.num_users = log.num_users();
    ds.num_items = log.num_items();
    store::write_dataset(
        out,
        &ds,
        &input.display().to_string(),
        Some((&log.user_ids, &log.item_ids)),
    )?;
    eprintln!(
        "prepared {} users, {} items: {} train / {} validation / {} test",
        ds.num_users,
        ds.num_items,
        ds.train.len(),
        ds.validation.len(),
        ds.test.len()
    );
    Ok(())
}

fn prepare_synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (ds, truth) = generate_synthetic(&cfg.synth(), cfg.seed)?;
    store::write_dataset(out, &ds, &format!("synthetic seed={}", cfg.seed), None)?;
    store::write_ground_truth(out, &truth)?;
    std::fs::write(out.join("synth.toml"), toml::to_string(&cfg.synth())?)?;
    eprintln!(
        "generated {} users, {} items: {} train / {} validation / {} test",
        ds.num_users,
        ds.num_items,
        ds.train.len(),
        ds.validation.len(),
        ds.test.len()
    );
    Ok(())
}

fn stats(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let ds = store::read_dataset(data)?;
    let stats = StatsBundle::build(&ds, &cfg.stats())?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("local_popularity.csv"), stats.pop.to_csv())?;
    std::fs::write(out.join("personal_popularity.csv"), stats.pers.to_csv())?;
    std::fs::write(out.join("thresholds.csv"), stats.pers.threshold_csv())?;
    std::fs::write(out.join("item_stats.csv"), item_stats_csv(&stats))?;
    eprintln!(
        "window {} steps over {} steps; statistics written to {}",
        stats.pop.window_steps,
        stats.pop.num_steps,
        out.display()
    );
    Ok(())
}

fn item_stats_csv(stats: &StatsBundle) -> String {
    let mut out = String::from("item_id,global_pop,avg_local_pop\n");
    for (i, (d, p)) in stats.pop.global.iter().zip(&stats.pop.avg_local).enumerate() {
        writeln!(out, "{i},{d},{p}").unwrap();
    }
    out
}

fn train_cmd(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let ds = store::read_dataset(data)?;
    let stats = StatsBundle::build(&ds, &cfg.stats())?;
    let tc = cfg.train();
    eprintln!(
        "training {} / {} (dim {}, {} epochs max) on {} interactions",
        tc.mode.as_str(),
        tc.backbone.as_str(),
        tc.dim,
        tc.epochs,
        ds.train.len()
    );
    let inputs = TrainInputs {
        dataset: &ds,
        pop: &stats.pop,
        pers: &stats.pers,
    };
    let (params, report) = train(&inputs, &tc)?;
    if let Some(w) = report.ips_weight_max {
        eprintln!("ips weights: max {w} (cap {})", tc.ips_cap);
    }
    for r in &report.epochs {
        eprintln!(
            "epoch {:>3}  bpr {:.5}  quality {:.5}  total {:.5}  val_recall {}",
            r.epoch,
            r.bpr_loss,
            r.quality_loss,
            r.total_loss,
            r.val_recall.map_or("-".to_string(), |v| format!("{v:.5}"))
        );
    }
    let meta = CheckpointMeta::from_config(&tc, &params);
    store::write_model(out, &params, &meta, &report)?;
    std::fs::write(out.join(RUN_CONFIG_FILE), toml::to_string(cfg)?)?;
    eprintln!(
        "best epoch {} of {}; {:.2}s; model written to {}",
        report.best_epoch,
        report.epochs.len(),
        report.wall_seconds,
        out.display()
    );
    Ok(())
}

struct InferenceContext {
    ds: SplitDataset,
    model: StoredModel,
    stats: StatsBundle,
    plan: epp_core::InterventionPlan,
    mode: InterventionMode,
    k: usize,
    data_dir: std::path::PathBuf,
}

impl InferenceContext {
    fn load(cli: &Cli, a: &InferenceArgs) -> Result<Self> {
        let mut over = Overrides::new(cli)?;
        over.opt("k", a.k);
        over.opt("delta_item", a.delta_item);
        over.opt("delta_user", a.delta_user);
        let cfg = over.resolve_for_model(cli, &a.model)?;
        let model = store::read_model(&a.model)?;
        let ds = store::read_dataset(&a.data)?;
        if model.params.num_users != ds.num_users || model.params.num_items != ds.num_items {
            bail!(
                "model shape {}x{} does not match dataset {}x{}",
                model.params.num_users,
                model.params.num_items,
                ds.num_users,
                ds.num_items
            );
        }
        let stats = StatsBundle::build(&ds, &cfg.stats())?;
        let plan = stats.plan(&ds, &cfg.forecast());
        let mode = match a.intervention {
            InterventionArg::None => InterventionMode::NoIntervention,
            InterventionArg::Intervened => InterventionMode::Intervened,
            InterventionArg::EliminateP => InterventionMode::EliminateP,
            InterventionArg::Grid => InterventionMode::GridValues {
                p: a.grid_p,
                s: a.grid_s,
            },
        };
        Ok(Self {
            ds,
            model,
            stats,
            plan,
            mode,
            k: cfg.k,
            data_dir: a.data.clone(),
        })
    }

    fn scorer(&self) -> Scorer<'_> {
        let graph = graph_for(&self.model, &self.ds);
        Scorer::new(&self.model.params, graph.as_ref(), self.model.meta.scoring_rule())
    }

    fn rank(&self, users: &[usize]) -> Result<Vec<epp_core::RankingResult>> {
        let inf = self.stats.inference_stats(&self.ds);
        Ok(rank_users(
            &self.scorer(),
            &inf,
            self.mode,
            Some(&self.plan),
            users,
            &self.ds.train_items_by_user(),
            self.k,
        ))
    }
}

fn graph_for(model: &StoredModel, ds: &SplitDataset) -> Option<epp_core::InteractionGraph> {
    (model.params.kind == BackboneKind::LightGcn).then(|| train_graph(ds))
}

fn truth_sets(ds: &SplitDataset, data: &Path, truth: TruthArg, k: usize) -> Result<Vec<Vec<usize>>> {
    Ok(match truth {
        TruthArg::Test => test_truth(ds),
        TruthArg::Validation => {
            held_out_truth(&ds.validation_items_by_user(), &ds.train_items_by_user())
        }
        TruthArg::Preference => {
            let gt = store::read_ground_truth(data)?;
            if gt.num_users != ds.num_users || gt.num_items != ds.num_items {
                bail!("ground truth does not match the dataset shape");
            }
            let train_items = ds.train_items_by_user();
            (0..ds.num_users)
                .map(|u| {
                    let mut top = gt.top_preferred(u, k, &train_items[u]);
                    top.sort_unstable();
                    top
                })
                .collect()
        }
    })
}

fn mode_name(mode: InterventionMode) -> String {
    match mode {
        InterventionMode::NoIntervention => "none".into(),
        InterventionMode::Intervened => "intervened".into(),
        InterventionMode::EliminateP => "eliminate-p".into(),
        InterventionMode::GridValues { p, s } => format!("grid(p={p};s={s})"),
    }
}

#[derive(Serialize)]
struct EvaluationRecord<'a> {
    intervention: String,
    truth: &'a str,
    metrics: &'a epp_core::MetricsReport,
    bias: &'a epp_core::BiasReport,
}

fn evaluate_cmd(cli: &Cli, a: &EvaluateArgs, bias_only: bool) -> Result<()> {
    let ctx = InferenceContext::load(cli, &a.inference)?;
    let truth = truth_sets(&ctx.ds, &ctx.data_dir, a.truth, ctx.k)?;
    let scorer = ctx.scorer();
    let ev = evaluate_against(
        &scorer,
        &ctx.ds,
        &ctx.stats,
        ctx.mode,
        Some(&ctx.plan),
        &truth,
        ctx.k,
    )?;
    let truth_name = match a.truth {
        TruthArg::Test => "test",
        TruthArg::Validation => "validation",
        TruthArg::Preference => "preference",
    };
    let mode = mode_name(ctx.mode);
    let text = if bias_only {
        if a.csv {
            format!(
                "intervention,{}\n{}",
                epp_core::BiasReport::CSV_HEADER,
                ev.bias
                    .csv_rows()
                    .lines()
                    .map(|l| format!("{mode},{l}\n"))
                    .collect::<String>()
            )
        } else {
            serde_json::to_string_pretty(&ev.bias)? + "\n"
        }
    } else if a.csv {
        format!(
            "intervention,truth,{}\n{mode},{truth_name},{}\n",
            epp_core::MetricsReport::CSV_HEADER,
            ev.metrics.csv_row()
        )
    } else {
        let rec = EvaluationRecord {
            intervention: mode,
            truth: truth_name,
            metrics: &ev.metrics,
            bias: &ev.bias,
        };
        serde_json::to_string_pretty(&rec)? + "\n"
    };
    eprintln!(
        "recall@{} {:.5}  precision@{} {:.5}  ndcg@{} {:.5}  popular share {:.3} (test {:.3})",
        ev.metrics.k,
        ev.metrics.recall_at_k,
        ev.metrics.k,
        ev.metrics.precision_at_k,
        ev.metrics.k,
        ev.metrics.ndcg_at_k,
        ev.bias.popular_ratio_recommended,
        ev.bias.popular_ratio_ground_truth
    );
    emit(a.output.as_deref(), &text)
}

fn plotdata(cfg: &RunConfig, data: &Path, model_dir: Option<&Path>, out: &Path) -> Result<()> {
    let ds = store::read_dataset(data)?;
    let stats = StatsBundle::build(&ds, &cfg.stats())?;
    let fc = cfg.forecast();
    let plan = stats.plan(&ds, &fc);
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("popularity_timeline.csv"), stats.pop.to_csv())?;
    std::fs::write(out.join("personal_timeline.csv"), stats.pers.to_csv())?;

    let w2 = plan.ma_window;
    let mut ma = String::from("item_id,step,local_pop,moving_average\n");
    for i in 0..ds.num_items {
        let series = stats.pop.series(i);
        for t in 0..series.len() {
            writeln!(ma, "{i},{t},{},{}", series[t], moving_average(series, w2, t)?)?;
        }
    }
    std::fs::write(out.join("moving_average.csv"), ma)?;
    std::fs::write(out.join("intervention_items.csv"), plan.items_csv())?;
    std::fs::write(out.join("intervention_users.csv"), plan.users_csv())?;

    if let Some(dir) = model_dir {
        let model = store::read_model(dir)?;
        let mut q = String::from("item_id,global_pop,quality\n");
        for (i, (d, qi)) in stats.pop.global.iter().zip(&model.params.quality).enumerate() {
            writeln!(q, "{i},{d},{qi}")?;
        }
        std::fs::write(out.join("quality_scatter.csv"), q)?;

        let graph = graph_for(&model, &ds);
        let scorer = Scorer::new(&model.params, graph.as_ref(), model.meta.scoring_rule());
        let truth = test_truth(&ds);
        let mut bars = format!("intervention,{}\n", epp_core::BiasReport::CSV_HEADER);
        let modes: &[InterventionMode] = if model.meta.mode == TrainMode::CausalEpp {
            &[InterventionMode::NoIntervention, InterventionMode::Intervened]
        } else {
            &[InterventionMode::NoIntervention]
        };
        for &mode in modes {
            let ev = evaluate_against(&scorer, &ds, &stats, mode, Some(&plan), &truth, cfg.k)?;
            for line in ev.bias.csv_rows().lines() {
                writeln!(bars, "{},{line}", mode_name(mode))?;
            }
        }
        std::fs::write(out.join("bias_bars.csv"), bars)?;
    }
    eprintln!("plot data written to {}", out.display());
    Ok(())
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                other => Ok(other?),
            }
        }
    }
}
