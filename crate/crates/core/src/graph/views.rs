use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Edge, HeteroGraph, WordEdges};
use crate::autodiff::Csr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaPath {
    /// Tweet–word view (carries word–word edges when enabled).
    Tw,
    /// Tweet–user view.
    Tu,
}

impl MetaPath {
    pub fn as_str(self) -> &'static str {
        match self {
            MetaPath::Tw => "tw",
            MetaPath::Tu => "tu",
        }
    }
}

/// One meta-path view with local node ids: tweets occupy `0..n_tweets`,
/// the other node type follows. Every node's neighbor list contains the
/// node itself (weight 1) and is sorted by local id.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgraphView {
    pub meta_path: MetaPath,
    /// Global node id of each local node.
    pub nodes: Vec<usize>,
    pub n_tweets: usize,
    pub neighbors: Arc<Csr>,
    /// Edge weight per neighbor slot, aligned with `neighbors`.
    pub weights: Vec<f64>,
}

impl SubgraphView {
    fn build(meta_path: MetaPath, nodes: Vec<usize>, n_tweets: usize, global_to_local: impl Fn(usize) -> usize, edges: &[&Edge]) -> Self {
        let n = nodes.len();
        let mut lists: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 1.0)]).collect();
        for e in edges {
            let (a, b) = (global_to_local(e.src), global_to_local(e.dst));
            lists[a].push((b, e.weight));
            lists[b].push((a, e.weight));
        }
        let mut weights = Vec::new();
        let mut idx = Vec::with_capacity(n);
        for mut l in lists {
            l.sort_by_key(|&(j, _)| j);
            weights.extend(l.iter().map(|&(_, w)| w));
            idx.push(l.into_iter().map(|(j, _)| j).collect::<Vec<_>>());
        }
        Self {
            meta_path,
            nodes,
            n_tweets,
            neighbors: Arc::new(Csr::from_lists(idx)),
            weights,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn neighbors_of(&self, i: usize) -> &[usize] {
        self.neighbors.row(i)
    }

    /// Number of undirected non-self edges.
    pub fn n_edges(&self) -> usize {
        (self.neighbors.nnz() - self.n_nodes()) / 2
    }

    /// Local tweet ids, i.e. `0..n_tweets`.
    pub fn tweet_rows(&self) -> Vec<usize> {
        (0..self.n_tweets).collect()
    }
}

/// Splits `g` into the tweet–word and tweet–user views.
pub fn decompose(g: &HeteroGraph) -> (SubgraphView, SubgraphView) {
    let nt = g.n_tweets();
    let nw = g.n_words();
    let nu = g.n_users();

    let mut tw_edges: Vec<&Edge> = g.tweet_word.iter().collect();
    if g.config.ww_edges == WordEdges::Include {
        tw_edges.extend(g.word_word.iter());
    }
    let tw = SubgraphView::build(MetaPath::Tw, (0..nt + nw).collect(), nt, |id| id, &tw_edges);

    let tu_edges: Vec<&Edge> = g.tweet_user.iter().collect();
    let user_base = nt + nw;
    let tu_nodes = (0..nt).chain(user_base..user_base + nu).collect();
    let tu = SubgraphView::build(
        MetaPath::Tu,
        tu_nodes,
        nt,
        |id| if id < nt { id } else { id - nw },
        &tu_edges,
    );
    (tw, tu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dataset, EventKind, Label, PropagationEvent, TweetRecord};
    use crate::graph::{assemble_hetero_graph, GraphConfig};

    fn dataset(with_events: bool) -> Dataset {
        let tweets = ["storm hits city", "city storm warning", "cat video", "storm cat"]
            .iter()
            .enumerate()
            .map(|(i, t)| TweetRecord {
                id: format!("t{i}"),
                text: t.to_string(),
                label: Some(Label::ALL[i % 4]),
            })
            .collect();
        let events = if with_events {
            vec![("t0", "a", 0.0), ("t0", "b", 2.0), ("t1", "a", 4.0), ("t3", "c", 1.0)]
                .into_iter()
                .map(|(t, u, e)| PropagationEvent {
                    source_tweet_id: t.into(),
                    user_id: u.into(),
                    elapsed: e,
                    kind: EventKind::Reply,
                })
                .collect()
        } else {
            vec![]
        };
        Dataset::new(tweets, events, vec![], "m").unwrap()
    }

    fn check_symmetric_with_self(v: &SubgraphView) {
        for i in 0..v.n_nodes() {
            assert!(v.neighbors_of(i).contains(&i));
            for &j in v.neighbors_of(i) {
                assert!(v.neighbors_of(j).contains(&i), "{i} -> {j} not mirrored");
            }
        }
    }

    #[test]
    fn views_partition_edges() {
        let g = assemble_hetero_graph(&dataset(true), &GraphConfig::default()).unwrap();
        let (tw, tu) = decompose(&g);
        assert_eq!(tw.n_nodes(), g.n_tweets() + g.n_words());
        assert_eq!(tu.n_nodes(), g.n_tweets() + g.n_users());
        assert_eq!(tw.n_edges(), g.tweet_word.len() + g.word_word.len());
        assert_eq!(tu.n_edges(), g.tweet_user.len());
        check_symmetric_with_self(&tw);
        check_symmetric_with_self(&tu);
        // tu view: tweet-user only.
        for (i, _, j) in tu.neighbors.entries() {
            if i != j {
                assert!((i < tu.n_tweets) != (j < tu.n_tweets));
            }
        }
        assert_eq!(tw.weights.len(), tw.neighbors.nnz());
    }

    #[test]
    fn no_users_means_self_loops_only() {
        let g = assemble_hetero_graph(&dataset(false), &GraphConfig::default()).unwrap();
        let (_, tu) = decompose(&g);
        assert_eq!(tu.n_nodes(), 4);
        for i in 0..4 {
            assert_eq!(tu.neighbors_of(i), &[i]);
        }
    }

    #[test]
    fn word_edges_can_be_excluded() {
        let d = dataset(true);
        let g = assemble_hetero_graph(
            &d,
            &GraphConfig {
                ww_edges: WordEdges::Exclude,
                ..GraphConfig::default()
            },
        )
        .unwrap();
        assert!(!g.word_word.is_empty());
        let (tw, _) = decompose(&g);
        assert_eq!(tw.n_edges(), g.tweet_word.len());
    }
}
