use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::thread;

use anyhow::Context;
use hgat::autodiff::{grad_check_with, ParamStore, Stencil};
use hgat::corpus::{dataset_stats, generate_synthetic, load_dataset, save_dataset, Dataset, Split, SyntheticSpec};
use hgat::graph::{assemble_hetero_graph, decompose, write_graph, write_views};
use hgat::model::{load_pretrained, Ablation, HgatModel, ModelError};
use hgat::seed::derive_seed;
use hgat::train::{
    ablation_run, default_count_checkpoints, default_time_checkpoints, early_detection_sweep, evaluate, fit,
    history_jsonl, restore_model, split_for, targets, Metrics, RunSettings, SweepMode, SweepOptions,
};
use serde_json::json;

use crate::artifacts::{dataset_hashes, sha256_hex, OutputDir};
use crate::config::RunConfig;
use crate::failure::{ConfigError, NumericError};

pub const CHECKPOINT: &str = "checkpoint.json";

type Summary = anyhow::Result<serde_json::Value>;

fn load_data(cfg: &RunConfig) -> anyhow::Result<(Dataset, BTreeMap<String, String>)> {
    let dir = cfg.data()?;
    let d = load_dataset(dir)?;
    Ok((d, dataset_hashes(dir)?))
}

fn pretrained(cfg: &RunConfig) -> anyhow::Result<Option<HashMap<String, Vec<f64>>>> {
    Ok(cfg.pretrained.as_deref().map(load_pretrained).transpose()?)
}

fn split_sizes(s: &Split) -> serde_json::Value {
    json!({"train": s.train_ids.len(), "val": s.val_ids.len(), "test": s.test_ids.len()})
}

fn f1_table(m: &Metrics) -> BTreeMap<String, f64> {
    m.per_class.iter().map(|(code, s)| (code.clone(), s.f1)).collect()
}

pub fn gen_synthetic(cfg: &RunConfig) -> Summary {
    let seed = cfg.seed()?;
    let mut out = OutputDir::create(cfg.out()?)?;
    let d = generate_synthetic(&cfg.synthetic, seed)?;
    save_dataset(&d, out.root())?;
    for f in ["tweets.jsonl", "events.jsonl", "users.jsonl", "meta.json"] {
        out.track(f);
    }
    let manifest = out.seal("gen-synthetic", cfg.echo(), BTreeMap::new())?;
    Ok(json!({
        "command": "gen-synthetic",
        "tweets": d.tweets().len(),
        "events": d.events().len(),
        "users": d.users().len(),
        "manifest": manifest,
    }))
}

/// Writes `stats.json` when an output directory is given.
pub fn stats(cfg: &RunConfig) -> Summary {
    let (d, inputs) = load_data(cfg)?;
    let report = dataset_stats(&d);
    if let Some(dir) = &cfg.out {
        let mut out = OutputDir::create(dir)?;
        out.write_json("stats.json", &report)?;
        out.seal("stats", cfg.echo(), inputs)?;
    }
    Ok(serde_json::to_value(report)?)
}

/// Graph edge lists; with `views`, also the two meta-path views.
pub fn build_graph(cfg: &RunConfig, views: bool) -> Summary {
    let (d, inputs) = load_data(cfg)?;
    let mut out = OutputDir::create(cfg.out()?)?;
    let g = assemble_hetero_graph(&d, &cfg.graph)?;
    for f in write_graph(&g, out.root())? {
        out.track(f);
    }
    if views {
        let (tw, tu) = decompose(&g);
        for f in write_views(&g, &[&tw, &tu], out.root())? {
            out.track(f);
        }
    }
    let command = if views { "export-graph" } else { "build-graph" };
    out.seal(command, cfg.echo(), inputs)?;
    Ok(json!({
        "command": command,
        "tweets": g.n_tweets(),
        "words": g.n_words(),
        "users": g.n_users(),
        "tw_edges": g.tweet_word.len(),
        "ww_edges": g.word_word.len(),
        "tu_edges": g.tweet_user.len(),
    }))
}

pub fn train(cfg: &RunConfig) -> Summary {
    let seed = cfg.seed()?;
    let (d, inputs) = load_data(cfg)?;
    let mut out = OutputDir::create(cfg.out()?)?;
    let pre = pretrained(cfg)?;
    let settings = cfg.settings();
    let split = split_for(&d, seed)?;
    let (outcome, test) = fit(&d, &split, &settings, pre.as_ref())?;

    out.write("history.jsonl", history_jsonl(&outcome.history).as_bytes())?;
    let meta = json!({"seed": seed, "settings": settings});
    out.write(CHECKPOINT, outcome.model.params().to_json(meta).as_bytes())?;
    out.write_json("split.json", &split)?;
    let report = json!({
        "ablation": settings.model.ablation.as_str(),
        "epochs_run": outcome.history.len(),
        "best_epoch": outcome.best_epoch,
        "best_val_accuracy": outcome.best_val_accuracy,
        "split": split_sizes(&split),
        "test": test,
    });
    out.write_json("report.json", &report)?;
    out.seal("train", cfg.echo(), inputs)?;
    Ok(json!({
        "command": "train",
        "test_accuracy": test.accuracy,
        "f1": f1_table(&test),
        "best_epoch": outcome.best_epoch,
        "epochs_run": outcome.history.len(),
    }))
}

pub fn eval(cfg: &RunConfig, checkpoint: &Path) -> Summary {
    let (store, meta) = ParamStore::load(checkpoint)?;
    let seed = meta["seed"]
        .as_u64()
        .with_context(|| format!("{}: meta has no seed", checkpoint.display()))?;
    let settings: RunSettings = serde_json::from_value(meta["settings"].clone())
        .with_context(|| format!("{}: meta has no usable settings", checkpoint.display()))?;
    let (d, mut inputs) = load_data(cfg)?;
    let bytes = std::fs::read(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    inputs.insert(CHECKPOINT.to_string(), sha256_hex(&bytes));

    let split = split_for(&d, seed)?;
    let model = restore_model(&d, &settings, store)?;
    let test = evaluate(&model, &d, &split.test_ids)?;
    let mut out = OutputDir::create(cfg.out()?)?;
    out.write_json("eval.json", &json!({"seed": seed, "split": split_sizes(&split), "test": test}))?;
    out.seal("eval", cfg.echo(), inputs)?;
    Ok(json!({"command": "eval", "test_accuracy": test.accuracy, "f1": f1_table(&test)}))
}

pub fn early_sweep(cfg: &RunConfig) -> Summary {
    let seed = cfg.seed()?;
    let (d, inputs) = load_data(cfg)?;
    let mut out = OutputDir::create(cfg.out()?)?;
    let pre = pretrained(cfg)?;
    let checkpoints = match (&cfg.sweep.checkpoints, cfg.sweep.mode) {
        (Some(c), _) => c.clone(),
        (None, SweepMode::Time) => default_time_checkpoints(d.time_unit())?,
        (None, SweepMode::Count) => default_count_checkpoints(),
    };
    let opts = SweepOptions {
        mode: cfg.sweep.mode,
        checkpoints,
        reuse_model: cfg.sweep.reuse_model,
    };
    let split = split_for(&d, seed)?;
    let curve = early_detection_sweep(&d, &split, &cfg.settings(), &opts, pre.as_ref())?;

    out.write_json("sweep.json", &curve)?;
    let mut csv = String::from("checkpoint,accuracy,events_kept\n");
    for ((c, a), k) in curve.checkpoints.iter().zip(&curve.accuracy).zip(&curve.events_kept) {
        csv.push_str(&format!("{c},{a},{k}\n"));
    }
    out.write("sweep.csv", csv.as_bytes())?;
    out.seal("early-sweep", cfg.echo(), inputs)?;
    Ok(json!({
        "command": "early-sweep",
        "checkpoints": curve.checkpoints.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
        "accuracy": curve.accuracy,
    }))
}

pub fn ablate(cfg: &RunConfig, modes: &[String]) -> Summary {
    let seed = cfg.seed()?;
    let modes = modes
        .iter()
        .map(|m| m.trim().parse::<Ablation>().map_err(ConfigError))
        .collect::<Result<Vec<_>, _>>()?;
    if modes.is_empty() {
        return Err(ConfigError("no ablation modes given".into()).into());
    }
    let (d, inputs) = load_data(cfg)?;
    let mut out = OutputDir::create(cfg.out()?)?;
    let pre = pretrained(cfg)?;
    let split = split_for(&d, seed)?;
    let settings = cfg.settings();
    let runs = thread::scope(|s| {
        let handles: Vec<_> = modes
            .iter()
            .map(|&m| {
                let (d, split, settings, pre) = (&d, &split, &settings, pre.as_ref());
                s.spawn(move || ablation_run(d, split, settings, m, pre))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("ablation worker panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let rows: Vec<_> = modes
        .iter()
        .zip(&runs)
        .map(|(m, (outcome, test))| {
            json!({
                "mode": m.as_str(),
                "accuracy": test.accuracy,
                "f1": f1_table(test),
                "best_epoch": outcome.best_epoch,
                "metrics": test,
            })
        })
        .collect();
    out.write_json("ablation.json", &json!({"split": split_sizes(&split), "rows": rows}))?;
    out.seal("ablate", cfg.echo(), inputs)?;
    let accuracy: BTreeMap<&str, f64> = modes.iter().zip(&runs).map(|(m, (_, t))| (m.as_str(), t.accuracy)).collect();
    Ok(json!({"command": "ablate", "accuracy": accuracy}))
}

/// Four labeled tweets, two-word pools and one user per class.
fn tiny_corpus(seed: u64) -> anyhow::Result<Dataset> {
    let spec = SyntheticSpec {
        class_counts: vec![1; 4],
        pool_size: 2,
        text_overlap: 0.0,
        vocab_size: 0,
        words_per_tweet: 3,
        noise_words_per_tweet: 0,
        users_per_class: 1,
        events_per_tweet: 2,
        user_feature_dim: Some(4),
        ..SyntheticSpec::default()
    };
    Ok(generate_synthetic(&spec, derive_seed(seed, "grad-check"))?)
}

pub fn grad_check(cfg: &RunConfig, eps: f64, stencil: &str, threshold: f64) -> Summary {
    let seed = cfg.seed()?;
    let stencil = match stencil {
        "five-point" | "five_point" => Stencil::FivePoint,
        "central" => Stencil::Central,
        other => return Err(ConfigError(format!("unknown stencil `{other}`")).into()),
    };
    if !(eps > 0.0) || !(threshold > 0.0) {
        return Err(ConfigError("eps and threshold must be positive".into()).into());
    }
    let (d, inputs) = match &cfg.data {
        Some(_) => load_data(cfg)?,
        None => (tiny_corpus(seed)?, BTreeMap::new()),
    };
    let mut out = OutputDir::create(cfg.out()?)?;
    let pre = pretrained(cfg)?;
    let g = assemble_hetero_graph(&d, &cfg.graph)?;
    let model = HgatModel::new(&d, &g, cfg.model.clone(), derive_seed(seed, "init"), pre.as_ref())?;
    let ids: Vec<String> = d.labeled_ids().map(str::to_string).collect();
    let t = targets(&d, &ids)?;
    let lambda = cfg.train.weight_decay;

    {
        let mut tape = hgat::autodiff::Tape::new();
        let bound = tape.bind_all(model.params())?;
        model.loss(&mut tape, &bound, &t, lambda)?;
    }
    let report = grad_check_with(model.params(), eps, stencil, |tape, bound| {
        model.loss(tape, bound, &t, lambda).map(|(l, _)| l).map_err(|e| match e {
            ModelError::Tensor(e) => e,
            other => unreachable!("loss succeeded once: {other}"),
        })
    })?;
    let passed = report.max_rel_error < threshold;
    let summary = json!({
        "command": "grad-check",
        "nodes": g.n_nodes(),
        "eps": eps,
        "stencil": stencil,
        "threshold": threshold,
        "max_rel_error": report.max_rel_error,
        "checked": report.checked,
        "skipped_kinks": report.skipped_kinks,
        "passed": passed,
    });
    let per_param: BTreeMap<&str, f64> = report.per_param.iter().map(|(n, e)| (n.as_str(), *e)).collect();
    out.write_json("grad_check.json", &json!({"summary": summary, "per_param": per_param}))?;
    out.seal("grad-check", cfg.echo(), inputs)?;
    if !passed {
        return Err(NumericError(format!(
            "max relative gradient error {:e} exceeds {threshold:e}",
            report.max_rel_error
        ))
        .into());
    }
    Ok(summary)
}
