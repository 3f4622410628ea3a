use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, GraphConfig, GraphError, HeteroGraph, SubgraphView};

pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphHeader {
    pub format_version: u32,
    pub tweets: usize,
    pub words: usize,
    pub users: usize,
    pub tw_edges: usize,
    pub ww_edges: usize,
    pub tu_edges: usize,
    pub config: GraphConfig,
}

impl GraphHeader {
    pub fn of(g: &HeteroGraph) -> Self {
        Self {
            format_version: GRAPH_FORMAT_VERSION,
            tweets: g.n_tweets(),
            words: g.n_words(),
            users: g.n_users(),
            tw_edges: g.tweet_word.len(),
            ww_edges: g.word_word.len(),
            tu_edges: g.tweet_user.len(),
            config: g.config.clone(),
        }
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub(crate) fn fmt_weight(w: f64) -> String {
    format!("{w:.16e}")
}

fn edge_tsv(g: &HeteroGraph, edges: &[Edge]) -> String {
    let mut s = String::from("src_id\tdst_id\tweight\n");
    for e in edges {
        let _ = writeln!(s, "{}\t{}\t{}", g.node_name(e.src), g.node_name(e.dst), fmt_weight(e.weight));
    }
    s
}

fn write(path: &Path, body: &str) -> Result<(), GraphError> {
    fs::write(path, body).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `header.json`, `tw.tsv`, `ww.tsv` and `tu.tsv` into `dir`.
/// Returns the written file names.
pub fn write_graph(g: &HeteroGraph, dir: &Path) -> Result<Vec<String>, GraphError> {
    fs::create_dir_all(dir).map_err(|source| GraphError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let header = serde_json::to_string_pretty(&GraphHeader::of(g)).expect("header serialization");
    write(&dir.join("header.json"), &(header + "\n"))?;
    write(&dir.join("tw.tsv"), &edge_tsv(g, &g.tweet_word))?;
    write(&dir.join("ww.tsv"), &edge_tsv(g, &g.word_word))?;
    write(&dir.join("tu.tsv"), &edge_tsv(g, &g.tweet_user))?;
    Ok(["header.json", "tw.tsv", "ww.tsv", "tu.tsv"].map(String::from).to_vec())
}

/// Writes each view's neighbor lists (self-loops included) as
/// `<meta_path>_view.tsv` with columns `src_id, dst_id, weight`.
pub fn write_views(g: &HeteroGraph, views: &[&SubgraphView], dir: &Path) -> Result<Vec<String>, GraphError> {
    fs::create_dir_all(dir).map_err(|source| GraphError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut names = Vec::new();
    for v in views {
        let mut s = String::from("src_id\tdst_id\tweight\n");
        for (i, k, j) in v.neighbors.entries() {
            let _ = writeln!(
                s,
                "{}\t{}\t{}",
                g.node_name(v.nodes[i]),
                g.node_name(v.nodes[j]),
                fmt_weight(v.weights[k])
            );
        }
        let name = format!("{}_view.tsv", v.meta_path.as_str());
        write(&dir.join(&name), &s)?;
        names.push(name);
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_round_trip_through_text() {
        for w in [0.1, 1.0 / 3.0, 0.405_465_108_108_164_4, 1e-300, 123456.789] {
            let s = fmt_weight(w);
            assert_eq!(s.parse::<f64>().unwrap(), w, "{s}");
        }
    }
}
