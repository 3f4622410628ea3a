//! `hgat`: reproducible rumor-detection runs driven by a TOML config.
//!
//! Every command reads an optional `--config FILE`, applies its flags on
//! top (flags win), writes its artifacts under `--out DIR` together with
//! `manifest.json`, and prints a one-line JSON summary. Errors go to stderr
//! as one JSON line; exit codes are 2 (config), 3 (data), 4 (numeric).

mod artifacts;
mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_override, Override, RunConfig};
use failure::{classify, report, ConfigError, Failure};

#[derive(Debug, Parser)]
#[command(name = "hgat", version, about = "Heterogeneous graph attention rumor detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset directory.
    GenSynthetic {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Dataset statistics (tweets, users, events, per-class counts).
    Stats {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Build the weighted tweet–word–user graph and write its edge lists.
    BuildGraph {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        graph: GraphArgs,
    },
    /// Write the graph plus both meta-path views (self-loops included).
    ExportGraph {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        graph: GraphArgs,
    },
    /// Train a model; writes history.jsonl, checkpoint.json and report.json.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Evaluate a checkpoint on the test split it was trained with.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Test accuracy at propagation checkpoints (elapsed time or count).
    EarlySweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Train the full model and both single-view ablations on one split.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Modes to run, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "full,tw_only,tu_only")]
        modes: Vec<String>,
    },
    /// Finite-difference check of every parameter gradient.
    GradCheck {
        #[command(flatten)]
        common: Common,
        /// Dataset directory; a tiny synthetic corpus when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        /// Difference formula: five-point (O(ε⁴)) or central (O(ε²)).
        #[arg(long, default_value = "five-point")]
        stencil: String,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Top-level seed; split, init and shuffle seeds derive from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Set any config field, e.g. `--set model.heads=8` or
    /// `--set synthetic.class_counts=[50,50,50,50]`. Repeatable; applied
    /// after the config file and before the dedicated flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset directory (tweets.jsonl, events.jsonl, users.jsonl, meta.json).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Tweets per class for all four classes.
    #[arg(long)]
    per_class: Option<i64>,
    /// Signal preset: signal, text-only, propagation-only or signal-free.
    #[arg(long)]
    preset: Option<String>,
    /// Fraction of each class word pool shared by all classes.
    #[arg(long)]
    text_overlap: Option<f64>,
    /// Probability an interaction comes from the class-free crowd.
    #[arg(long)]
    user_overlap: Option<f64>,
}

#[derive(Debug, Args)]
struct GraphArgs {
    /// Co-occurrence window size.
    #[arg(long)]
    window: Option<i64>,
    /// Minimum document frequency for a vocabulary word.
    #[arg(long)]
    min_df: Option<i64>,
    /// Word–word edges in the tweet–word view: include or exclude.
    #[arg(long)]
    ww_edges: Option<String>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// full, tw_only or tu_only.
    #[arg(long)]
    ablation: Option<String>,
    /// Attention heads K.
    #[arg(long)]
    heads: Option<i64>,
    /// Output width per head.
    #[arg(long)]
    head_dim: Option<i64>,
    /// Word embedding width N.
    #[arg(long)]
    word_dim: Option<i64>,
    /// Projected tweet–user width D.
    #[arg(long)]
    proj_dim: Option<i64>,
    /// mask or log_weight.
    #[arg(long)]
    edge_weight_mode: Option<String>,
    /// Aggregation activation: elu, leaky_relu, tanh or identity.
    #[arg(long)]
    aggregation: Option<String>,
    /// Whitespace-separated pretrained word vectors.
    #[arg(long)]
    pretrained: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<i64>,
    #[arg(long)]
    batch_size: Option<i64>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// L2 coefficient.
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    patience: Option<i64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// time or count.
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated, strictly increasing; `inf` keeps every event.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<f64>>,
    /// Train once on full data and re-evaluate per checkpoint.
    #[arg(long)]
    reuse_model: bool,
}

#[derive(Default)]
struct Overrides(Vec<Override>);

impl Overrides {
    fn put(&mut self, key: &str, v: Option<impl Into<toml::Value>>) {
        if let Some(v) = v {
            self.0.push((key.to_string(), v.into()));
        }
    }

    fn path(&mut self, key: &str, v: &Option<PathBuf>) {
        self.put(key, v.as_ref().map(|p| p.to_string_lossy().into_owned()));
    }

    fn common(&mut self, c: &Common) -> Result<(), ConfigError> {
        for s in &c.set {
            self.0.push(parse_override(s)?);
        }
        self.put("seed", c.seed.map(|s| s as i64));
        self.path("out", &c.out);
        Ok(())
    }

    fn synth(&mut self, s: &SynthArgs) -> Result<(), ConfigError> {
        if let Some(p) = &s.preset {
            let (text, user) = match p.as_str() {
                "signal" => (0.2, 0.2),
                "text-only" => (0.2, 1.0),
                "propagation-only" => (1.0, 0.2),
                "signal-free" => (1.0, 1.0),
                other => return Err(ConfigError(format!("unknown preset `{other}`"))),
            };
            self.put("synthetic.text_overlap", Some(text));
            self.put("synthetic.user_overlap", Some(user));
        }
        self.put(
            "synthetic.class_counts",
            s.per_class.map(|n| toml::Value::Array(vec![n.into(); 4])),
        );
        self.put("synthetic.text_overlap", s.text_overlap);
        self.put("synthetic.user_overlap", s.user_overlap);
        Ok(())
    }

    fn graph(&mut self, g: &GraphArgs) {
        self.put("graph.window_size", g.window);
        self.put("graph.min_df", g.min_df);
        self.put("graph.ww_edges", g.ww_edges.clone());
    }

    fn model(&mut self, m: &ModelArgs) {
        self.put("model.ablation", m.ablation.clone());
        self.put("model.heads", m.heads);
        self.put("model.head_dim", m.head_dim);
        self.put("model.word_dim", m.word_dim);
        self.put("model.proj_dim", m.proj_dim);
        self.put("model.edge_weight_mode", m.edge_weight_mode.clone());
        self.put("model.aggregation", m.aggregation.clone());
        self.path("pretrained", &m.pretrained);
    }

    fn train(&mut self, t: &TrainArgs) {
        self.put("train.epochs", t.epochs);
        self.put("train.batch_size", t.batch_size);
        self.put("train.lr", t.lr);
        self.put("train.weight_decay", t.weight_decay);
        self.put("train.patience", t.patience);
    }

    fn sweep(&mut self, s: &SweepArgs) {
        self.put("sweep.mode", s.mode.clone());
        self.put(
            "sweep.checkpoints",
            s.checkpoints
                .as_ref()
                .map(|c| toml::Value::Array(c.iter().map(|&x| x.into()).collect())),
        );
        if s.reuse_model {
            self.put("sweep.reuse_model", Some(true));
        }
    }
}

fn load(common: &Common, fill: impl FnOnce(&mut Overrides) -> Result<(), ConfigError>) -> anyhow::Result<RunConfig> {
    let mut o = Overrides::default();
    o.common(common)?;
    fill(&mut o)?;
    RunConfig::load(common.config.as_deref(), o.0)
}

fn graph_config(common: &Common, data: &DataArgs, graph: &GraphArgs) -> anyhow::Result<RunConfig> {
    load(common, |o| {
        o.path("data", &data.data);
        o.graph(graph);
        Ok(())
    })
}

fn run(cli: Cli) -> anyhow::Result<serde_json::Value> {
    match cli.command {
        Command::GenSynthetic { common, synth } => commands::gen_synthetic(&load(&common, |o| o.synth(&synth))?),
        Command::Stats { common, data } => commands::stats(&load(&common, |o| {
            o.path("data", &data.data);
            Ok(())
        })?),
        Command::BuildGraph { common, data, graph } => commands::build_graph(&graph_config(&common, &data, &graph)?, false),
        Command::ExportGraph { common, data, graph } => commands::build_graph(&graph_config(&common, &data, &graph)?, true),
        Command::Train {
            common,
            data,
            graph,
            model,
            train,
        } => commands::train(&load(&common, |o| {
            o.path("data", &data.data);
            o.graph(&graph);
            o.model(&model);
            o.train(&train);
            Ok(())
        })?),
        Command::Eval {
            common,
            data,
            checkpoint,
        } => commands::eval(
            &load(&common, |o| {
                o.path("data", &data.data);
                Ok(())
            })?,
            &checkpoint,
        ),
        Command::EarlySweep {
            common,
            data,
            graph,
            model,
            train,
            sweep,
        } => commands::early_sweep(&load(&common, |o| {
            o.path("data", &data.data);
            o.graph(&graph);
            o.model(&model);
            o.train(&train);
            o.sweep(&sweep);
            Ok(())
        })?),
        Command::Ablate {
            common,
            data,
            graph,
            model,
            train,
            modes,
        } => commands::ablate(
            &load(&common, |o| {
                o.path("data", &data.data);
                o.graph(&graph);
                o.model(&model);
                o.train(&train);
                Ok(())
            })?,
            &modes,
        ),
        Command::GradCheck {
            common,
            data,
            graph,
            model,
            eps,
            stencil,
            threshold,
        } => commands::grad_check(
            &load(&common, |o| {
                o.path("data", &data);
                o.graph(&graph);
                o.model(&model);
                Ok(())
            })?,
            eps,
            &stencil,
            threshold,
        ),
    }
}

/// Causes joined by `: `, skipping a cause whose text its parent already
/// ends with.
fn chain_message(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let s = cause.to_string();
        if msg.ends_with(&s) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&s);
    }
    msg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", report(Failure::Config, first));
            return ExitCode::from(Failure::Config.code() as u8);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind = classify(&e);
            eprintln!("{}", report(kind, &chain_message(&e)));
            ExitCode::from(kind.code() as u8)
        }
    }
}
