//! Weighted heterogeneous tweet–word–user graph and its meta-path views.
//!
//! Global node ids are laid out as `[tweets | words | users]`. Each
//! undirected edge is stored once in canonical orientation (tweet → word,
//! lower word → higher word, tweet → user); self-loops of weight 1 are
//! added only when the views are built.

mod export;
mod text;
mod views;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Csr;
use crate::corpus::{Dataset, PropagationEvent};

pub use export::{write_graph, write_views, GraphHeader};
pub use text::{
    build_vocabulary, count_cooccurrence, tfidf, tokenize, CooccurrenceCounts, Vocabulary, MENTION_TOKEN, URL_TOKEN,
};
pub use views::{decompose, MetaPath, SubgraphView};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid graph config: {0}")]
    InvalidConfig(String),
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("unknown word `{0}`")]
    UnknownWord(String),
    #[error("unknown word id {0}")]
    UnknownWordId(usize),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WordEdges {
    Include,
    Exclude,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub window_size: usize,
    pub min_df: usize,
    /// Whether word–word edges join the tweet–word view.
    pub ww_edges: WordEdges,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            window_size: 5,
            min_df: 1,
            ww_edges: WordEdges::Include,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Tweet,
    Word,
    User,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    pub config: GraphConfig,
    pub tweet_ids: Vec<String>,
    pub vocab: Vocabulary,
    pub user_ids: Vec<String>,
    /// Vocabulary-encoded token sequence of every tweet.
    pub tweet_words: Vec<Vec<usize>>,
    pub tweet_word: Vec<Edge>,
    pub word_word: Vec<Edge>,
    pub tweet_user: Vec<Edge>,
}

impl HeteroGraph {
    pub fn n_tweets(&self) -> usize {
        self.tweet_ids.len()
    }

    pub fn n_words(&self) -> usize {
        self.vocab.len()
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_tweets() + self.n_words() + self.n_users()
    }

    pub fn word_node(&self, w: usize) -> usize {
        self.n_tweets() + w
    }

    pub fn user_node(&self, u: usize) -> usize {
        self.n_tweets() + self.n_words() + u
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        if node < self.n_tweets() {
            NodeKind::Tweet
        } else if node < self.n_tweets() + self.n_words() {
            NodeKind::Word
        } else {
            NodeKind::User
        }
    }

    /// External name of a node: tweet id, word, or user id.
    pub fn node_name(&self, node: usize) -> &str {
        match self.kind(node) {
            NodeKind::Tweet => &self.tweet_ids[node],
            NodeKind::Word => self.vocab.word(node - self.n_tweets()),
            NodeKind::User => &self.user_ids[node - self.n_tweets() - self.n_words()],
        }
    }

    /// Per-tweet word groups (with repetition) for feature averaging.
    pub fn tweet_word_groups(&self) -> Arc<Csr> {
        Arc::new(Csr::from_lists(self.tweet_words.iter().map(|d| d.iter().copied())))
    }
}

/// Weight of a tweet–user edge for one interaction at `elapsed`.
pub fn tweet_user_weight(event: &PropagationEvent) -> f64 {
    1.0 / (event.elapsed + 1.0)
}

/// Tokenizes every tweet with [`tokenize`].
pub fn tokenize_corpus(d: &Dataset) -> Vec<Vec<String>> {
    d.tweets().iter().map(|t| tokenize(&t.text)).collect()
}

pub fn assemble_hetero_graph(d: &Dataset, cfg: &GraphConfig) -> Result<HeteroGraph, GraphError> {
    let tokens = tokenize_corpus(d);
    let vocab = build_vocabulary(&tokens, cfg.min_df)?;
    if vocab.is_empty() {
        return Err(GraphError::EmptyVocabulary);
    }
    let docs: Vec<Vec<usize>> = tokens.iter().map(|t| vocab.encode(t)).collect();
    let n_tweets = docs.len();

    let mut tweet_word = Vec::new();
    for (t, doc) in docs.iter().enumerate() {
        let mut distinct: Vec<usize> = doc.clone();
        distinct.sort_unstable();
        distinct.dedup();
        for w in distinct {
            let weight = tfidf(&docs, &vocab, t, w)?;
            if weight > 0.0 {
                tweet_word.push(Edge {
                    src: t,
                    dst: n_tweets + w,
                    weight,
                });
            }
        }
    }

    let counts = count_cooccurrence(&docs, &vocab, cfg.window_size)?;
    let mut word_word = Vec::new();
    for &(i, j) in counts.pair_windows.keys() {
        let weight = counts.pmi(i, j)?;
        if weight > 0.0 {
            word_word.push(Edge {
                src: n_tweets + i,
                dst: n_tweets + j,
                weight,
            });
        }
    }

    let tweet_idx = d.tweet_index();
    let user_idx = d.user_index();
    let user_base = n_tweets + vocab.len();
    let mut best: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for e in d.events() {
        let key = (tweet_idx[e.source_tweet_id.as_str()], user_idx[e.user_id.as_str()]);
        let w = tweet_user_weight(e);
        best.entry(key).and_modify(|cur| *cur = cur.max(w)).or_insert(w);
    }
    let tweet_user = best
        .into_iter()
        .map(|((t, u), weight)| Edge {
            src: t,
            dst: user_base + u,
            weight,
        })
        .collect();

    Ok(HeteroGraph {
        config: cfg.clone(),
        tweet_ids: d.tweets().iter().map(|t| t.id.clone()).collect(),
        vocab,
        user_ids: d.users().iter().map(|u| u.id.clone()).collect(),
        tweet_words: docs,
        tweet_word,
        word_word,
        tweet_user,
    })
}
