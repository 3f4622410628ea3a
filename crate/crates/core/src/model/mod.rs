//! Heterogeneous graph attention over the tweet–word and tweet–user views.

mod config;
mod features;
pub mod layers;

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use config::{Ablation, Activation, EdgeWeightMode, ImportanceScope, LossForm, ModelConfig, OffsetMode};
pub use features::{init_features, load_pretrained, NodeFeatures};

use crate::autodiff::{BoundParams, Csr, Matrix, ParamStore, Tape, TensorError, Var};
use crate::corpus::{Dataset, NUM_CLASSES};
use crate::graph::{decompose, GraphError, HeteroGraph, SubgraphView};
use crate::seed::derive_seed;
use layers::{AttentionOptions, HeadVars};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("pretrained vectors: {0}")]
    Pretrained(String),
    #[error("parameters do not fit this model: {0}")]
    Incompatible(String),
}

pub const EMBED_WORD: &str = "embed.word";
pub const PROJ_TWEET_M: &str = "proj.tweet.M";
pub const PROJ_USER_M: &str = "proj.user.M";
pub const PROJ_TWEET_OFFSET: &str = "proj.tweet.offset";
pub const PROJ_USER_OFFSET: &str = "proj.user.offset";
pub const SUB_W: &str = "sub.W";
pub const SUB_A: &str = "sub.a";
pub const CLS_W: &str = "cls.W";
pub const CLS_B: &str = "cls.b";

pub fn head_w(view: &str, k: usize) -> String {
    format!("{view}.head{k}.W")
}

pub fn head_a(view: &str, k: usize) -> String {
    format!("{view}.head{k}.a")
}

/// Glorot/Xavier uniform in `±sqrt(6 / (rows + cols))`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}

/// Values recorded by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `|T| x 4` logits.
    pub logits: Var,
    /// `|T| x 4` class probabilities.
    pub probs: Var,
    /// `1 x 2` subgraph weights `(β_tw, β_tu)`, full model only.
    pub beta: Option<Var>,
    /// `(w_tw, w_tu)` 1x1 importances, full model only.
    pub importances: Option<(Var, Var)>,
    /// Per-head coefficients of the tweet–word view.
    pub tw_attention: Vec<Var>,
    /// Per-head coefficients of the tweet–user view.
    pub tu_attention: Vec<Var>,
    /// Parameters that feed the output.
    pub active: Vec<Var>,
}

/// The model: fixed graph views and user features plus trainable
/// parameters.
#[derive(Clone, Debug)]
pub struct HgatModel {
    config: ModelConfig,
    tw_view: SubgraphView,
    tu_view: SubgraphView,
    tweet_groups: Arc<Csr>,
    user_features: Matrix,
    params: ParamStore,
}

impl HgatModel {
    /// Builds views from `g` and initializes features and parameters from
    /// `seed`.
    pub fn new(
        d: &Dataset,
        g: &HeteroGraph,
        config: ModelConfig,
        seed: u64,
        pretrained: Option<&HashMap<String, Vec<f64>>>,
    ) -> Result<Self, ModelError> {
        config.validate().map_err(ModelError::Config)?;
        let feats = init_features(d, g, &config, derive_seed(seed, "features"), pretrained)?;
        let (tw_view, tu_view) = decompose(g);
        let params = init_params(&config, &feats, g.n_tweets(), derive_seed(seed, "params"));
        Ok(Self {
            config,
            tw_view,
            tu_view,
            tweet_groups: feats.tweet_groups,
            user_features: feats.user_features,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn tw_view(&self) -> &SubgraphView {
        &self.tw_view
    }

    pub fn tu_view(&self) -> &SubgraphView {
        &self.tu_view
    }

    pub fn user_features(&self) -> &Matrix {
        &self.user_features
    }

    pub fn n_tweets(&self) -> usize {
        self.tw_view.n_tweets
    }

    pub fn set_ablation(&mut self, ablation: Ablation) {
        self.config.ablation = ablation;
    }

    /// Replaces the parameters after checking that names and shapes match.
    pub fn load_params(&mut self, store: ParamStore) -> Result<(), ModelError> {
        let mine: Vec<(&str, (usize, usize))> = self.params.iter().map(|(n, m)| (n, m.shape())).collect();
        let theirs: Vec<(&str, (usize, usize))> = store.iter().map(|(n, m)| (n, m.shape())).collect();
        if mine != theirs {
            let diff = mine
                .iter()
                .zip(&theirs)
                .find(|(a, b)| a != b)
                .map(|(a, b)| format!("expected {} {:?}, found {} {:?}", a.0, a.1, b.0, b.1))
                .unwrap_or_else(|| format!("expected {} parameters, found {}", mine.len(), theirs.len()));
            return Err(ModelError::Incompatible(diff));
        }
        self.params = store;
        Ok(())
    }

    /// Swaps in the tweet–user view of another graph over the same tweets
    /// and users, e.g. one built from truncated propagation.
    pub fn replace_tu_view(&mut self, g: &HeteroGraph) -> Result<(), ModelError> {
        let (_, tu) = decompose(g);
        if tu.n_tweets != self.tu_view.n_tweets || tu.n_nodes() != self.tu_view.n_nodes() {
            return Err(ModelError::Incompatible(format!(
                "tweet-user view has {} nodes, model expects {}",
                tu.n_nodes(),
                self.tu_view.n_nodes()
            )));
        }
        self.tu_view = tu;
        Ok(())
    }

    /// Parameter names the current ablation mode reads.
    pub fn active_param_names(&self) -> Vec<String> {
        let ablation = self.config.ablation;
        self.params
            .names()
            .filter(|n| {
                let tw = *n == EMBED_WORD || n.starts_with("tw.");
                let frozen = *n == PROJ_TWEET_OFFSET && self.config.tweet_offsets == OffsetMode::Frozen;
                let tu = (n.starts_with("proj.") || n.starts_with("tu.")) && !frozen;
                let sub = n.starts_with("sub.");
                n.starts_with("cls.")
                    || match ablation {
                        Ablation::Full => tw || tu || sub,
                        Ablation::TwOnly => tw,
                        Ablation::TuOnly => tu,
                    }
            })
            .map(str::to_string)
            .collect()
    }

    fn heads(&self, bound: &BoundParams, view: &str) -> Result<Vec<HeadVars>, TensorError> {
        (0..self.config.heads)
            .map(|k| {
                Ok(HeadVars {
                    w: bound.get(&head_w(view, k))?,
                    a: bound.get(&head_a(view, k))?,
                })
            })
            .collect()
    }

    /// Records the forward pass over all tweets. `bound` must hold every
    /// parameter the ablation mode reads; word embeddings are detached in
    /// `tu_only` mode.
    pub fn forward(&self, tape: &mut Tape, bound: &BoundParams) -> Result<ForwardOutput, ModelError> {
        let cfg = &self.config;
        let nt = self.n_tweets();
        let tweet_rows: Vec<usize> = (0..nt).collect();
        let opts = AttentionOptions {
            leaky_slope: cfg.leaky_slope,
            aggregation: cfg.aggregation,
            edge_weight_mode: cfg.edge_weight_mode,
        };
        let use_tw = cfg.ablation != Ablation::TuOnly;
        let use_tu = cfg.ablation != Ablation::TwOnly;
        let mut active = Vec::new();
        for name in self.active_param_names() {
            active.push(bound.get(&name)?);
        }

        let mut embed = bound.get(EMBED_WORD)?;
        if !use_tw {
            embed = tape.detach(embed)?;
        }
        let x_tweets = tape.group_mean(embed, &self.tweet_groups)?;

        let mut tw = None;
        let mut tw_attention = Vec::new();
        if use_tw {
            let x = tape.concat(&[x_tweets, embed], crate::autodiff::Axis::Rows)?;
            let heads = self.heads(bound, "tw")?;
            let out = layers::attention_layer(tape, &self.tw_view, x, &heads, &opts)?;
            tw_attention = out.coefficients;
            tw = Some(out.output);
        }

        let mut tu = None;
        let mut tu_attention = Vec::new();
        if use_tu {
            let users = tape.constant(self.user_features.clone())?;
            let m_tweet = bound.get(PROJ_TWEET_M)?;
            let pt = match cfg.tweet_offsets {
                OffsetMode::Learned => layers::project(tape, x_tweets, bound.get(PROJ_TWEET_OFFSET)?, m_tweet)?,
                OffsetMode::Frozen => {
                    let mt = tape.transpose(m_tweet)?;
                    tape.matmul(x_tweets, mt)?
                }
            };
            let pu = layers::project(tape, users, bound.get(PROJ_USER_OFFSET)?, bound.get(PROJ_USER_M)?)?;
            let x = tape.concat(&[pt, pu], crate::autodiff::Axis::Rows)?;
            let heads = self.heads(bound, "tu")?;
            let out = layers::attention_layer(tape, &self.tu_view, x, &heads, &opts)?;
            tu_attention = out.coefficients;
            tu = Some(out.output);
        }

        let (fused, beta, importances) = match (tw, tu) {
            (Some(tw), Some(tu)) => {
                let (w_sub, a_sub) = (bound.get(SUB_W)?, bound.get(SUB_A)?);
                let scope = |tape: &mut Tape, x: Var| match cfg.importance_scope {
                    ImportanceScope::AllNodes => Ok(x),
                    ImportanceScope::TweetsOnly => tape.gather_rows(x, &tweet_rows),
                };
                let s_tw = scope(tape, tw)?;
                let s_tu = scope(tape, tu)?;
                let w_tw = layers::subgraph_importance(tape, s_tw, w_sub, a_sub)?;
                let w_tu = layers::subgraph_importance(tape, s_tu, w_sub, a_sub)?;
                let t_tw = tape.gather_rows(tw, &tweet_rows)?;
                let t_tu = tape.gather_rows(tu, &tweet_rows)?;
                let (fused, beta) = layers::fuse(tape, t_tw, t_tu, w_tw, w_tu)?;
                (fused, Some(beta), Some((w_tw, w_tu)))
            }
            (Some(x), None) | (None, Some(x)) => (tape.gather_rows(x, &tweet_rows)?, None, None),
            (None, None) => unreachable!("every ablation mode keeps one view"),
        };
        let (logits, probs) = layers::classify(tape, fused, bound.get(CLS_W)?, bound.get(CLS_B)?)?;
        Ok(ForwardOutput {
            logits,
            probs,
            beta,
            importances,
            tw_attention,
            tu_attention,
            active,
        })
    }

    /// Forward pass plus the regularized batch loss. `targets` holds
    /// `(tweet_row, class_index)` pairs.
    pub fn loss(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        targets: &[(usize, usize)],
        lambda: f64,
    ) -> Result<(Var, ForwardOutput), ModelError> {
        let out = self.forward(tape, bound)?;
        let l = layers::loss(tape, out.probs, targets, &out.active, lambda, self.config.loss_form)?;
        Ok((l, out))
    }

    /// Class probabilities of every tweet, `|T| x 4`.
    pub fn predict(&self) -> Result<Matrix, ModelError> {
        let mut tape = Tape::new();
        let bound = tape.bind_all(&self.params)?;
        let out = self.forward(&mut tape, &bound)?;
        Ok(tape.value(out.probs).clone())
    }
}

fn init_params(cfg: &ModelConfig, feats: &NodeFeatures, n_tweets: usize, seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamStore::new();
    let (n, f, d) = (cfg.word_dim, feats.user_features.cols(), cfg.proj_dim);
    let (k_out, h) = (cfg.head_dim, cfg.hidden_dim());
    p.insert(EMBED_WORD, feats.word_embeddings.clone());
    p.insert(PROJ_TWEET_M, glorot_uniform(d, n, &mut rng));
    p.insert(PROJ_USER_M, glorot_uniform(d, f, &mut rng));
    p.insert(PROJ_TWEET_OFFSET, Matrix::zeros(n_tweets, n));
    p.insert(PROJ_USER_OFFSET, Matrix::zeros(feats.user_features.rows(), f));
    for (view, d_in) in [("tw", n), ("tu", d)] {
        for k in 0..cfg.heads {
            p.insert(head_w(view, k), glorot_uniform(k_out, d_in, &mut rng));
            p.insert(head_a(view, k), glorot_uniform(2 * k_out, 1, &mut rng));
        }
    }
    p.insert(SUB_W, glorot_uniform(cfg.sub_att_dim, h, &mut rng));
    p.insert(SUB_A, glorot_uniform(cfg.sub_att_dim, 1, &mut rng));
    p.insert(CLS_W, glorot_uniform(h, NUM_CLASSES, &mut rng));
    p.insert(CLS_B, Matrix::zeros(1, NUM_CLASSES));
    p
}

#[cfg(test)]
mod tests;
