use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ModelConfig, ModelError};
use crate::autodiff::{Csr, Matrix};
use crate::corpus::Dataset;
use crate::graph::HeteroGraph;

/// Initial node representations.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeFeatures {
    /// `|W| x N`, trainable.
    pub word_embeddings: Matrix,
    /// `|U| x F`, fixed.
    pub user_features: Matrix,
    /// Vocabulary tokens of each tweet (with repetition).
    pub tweet_groups: Arc<Csr>,
}

impl NodeFeatures {
    /// `|T| x N` mean of each tweet's word rows; zero row for a tweet with
    /// no vocabulary token.
    pub fn tweet_features(&self) -> Matrix {
        let n = self.word_embeddings.cols();
        let mut out = Matrix::zeros(self.tweet_groups.n_rows(), n);
        for t in 0..self.tweet_groups.n_rows() {
            let words = self.tweet_groups.row(t);
            if words.is_empty() {
                continue;
            }
            for &w in words {
                for (o, &x) in out.row_mut(t).iter_mut().zip(self.word_embeddings.row(w)) {
                    *o += x;
                }
            }
            let inv = 1.0 / words.len() as f64;
            out.row_mut(t).iter_mut().for_each(|o| *o *= inv);
        }
        out
    }
}

/// Whitespace-separated text vectors: `word v1 v2 ... vN` per line.
pub fn load_pretrained(path: &Path) -> Result<HashMap<String, Vec<f64>>, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Pretrained(format!("{}: {e}", path.display())))?;
    let mut out = HashMap::new();
    let mut dim = None;
    for (n, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values = parts
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ModelError::Pretrained(format!("line {}: {e}", n + 1)))?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(ModelError::Pretrained(format!(
                    "line {}: {} values, expected {d}",
                    n + 1,
                    values.len()
                )))
            }
            _ => {}
        }
        out.insert(word.to_string(), values);
    }
    Ok(out)
}

/// Word rows come from `pretrained` when it has the word, otherwise
/// `uniform(-s, s)`; user rows from the dataset, otherwise standard normal.
/// Draws happen in vocabulary order, then user order.
pub fn init_features(
    d: &Dataset,
    g: &HeteroGraph,
    cfg: &ModelConfig,
    seed: u64,
    pretrained: Option<&HashMap<String, Vec<f64>>>,
) -> Result<NodeFeatures, ModelError> {
    let n = cfg.word_dim;
    if let Some(p) = pretrained {
        if let Some(v) = p.values().next() {
            if v.len() != n {
                return Err(ModelError::Pretrained(format!(
                    "embedding width {} does not match word_dim {n}",
                    v.len()
                )));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = cfg.embedding_init_scale;
    let mut words = Matrix::zeros(g.n_words(), n);
    for (i, w) in g.vocab.words().iter().enumerate() {
        match pretrained.and_then(|p| p.get(w)) {
            Some(v) => words.row_mut(i).copy_from_slice(v),
            None => words.row_mut(i).iter_mut().for_each(|x| *x = rng.random_range(-s..s)),
        }
    }

    let f = d.user_feature_dim().unwrap_or(cfg.user_dim);
    let mut users = Matrix::zeros(d.users().len(), f);
    for (i, u) in d.users().iter().enumerate() {
        match &u.features {
            Some(v) => users.row_mut(i).copy_from_slice(v),
            None => users
                .row_mut(i)
                .iter_mut()
                .for_each(|x| *x = StandardNormal.sample(&mut rng)),
        }
    }
    Ok(NodeFeatures {
        word_embeddings: words,
        user_features: users,
        tweet_groups: g.tweet_word_groups(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, PropagationEvent, EventKind, TweetRecord, UserRecord};
    use crate::graph::{assemble_hetero_graph, GraphConfig};

    fn dataset() -> Dataset {
        let tweets = vec![
            TweetRecord { id: "1".into(), text: "alpha beta".into(), label: Some(Label::NonRumor) },
            TweetRecord { id: "2".into(), text: "beta gamma".into(), label: Some(Label::TrueRumor) },
            TweetRecord { id: "3".into(), text: "rare".into(), label: None },
        ];
        let events = vec![PropagationEvent {
            source_tweet_id: "1".into(),
            user_id: "plain".into(),
            elapsed: 1.0,
            kind: EventKind::Retweet,
        }];
        let users = vec![UserRecord { id: "rich".into(), features: Some(vec![1.0, 2.0, 3.0]) }];
        Dataset::new(tweets, events, users, "m").unwrap()
    }

    #[test]
    fn tweet_rows_are_word_means() {
        let d = dataset();
        let g = assemble_hetero_graph(&d, &GraphConfig { min_df: 2, ..GraphConfig::default() }).unwrap();
        let f = init_features(&d, &g, &ModelConfig::default(), 5, None).unwrap();
        let x = f.tweet_features();
        let beta = g.vocab.lookup("beta").unwrap();
        // Only "beta" survives min_df = 2.
        assert_eq!(x.row(0), f.word_embeddings.row(beta));
        assert!(x.row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_word_mean_is_exact() {
        let d = dataset();
        let g = assemble_hetero_graph(&d, &GraphConfig::default()).unwrap();
        let f = init_features(&d, &g, &ModelConfig::default(), 5, None).unwrap();
        let (a, b) = (g.vocab.lookup("alpha").unwrap(), g.vocab.lookup("beta").unwrap());
        let x = f.tweet_features();
        for c in 0..16 {
            let expect = (f.word_embeddings.get(a, c) + f.word_embeddings.get(b, c)) / 2.0;
            assert_eq!(x.get(0, c), expect);
        }
    }

    #[test]
    fn users_keep_given_features_and_sample_the_rest() {
        let d = dataset();
        let g = assemble_hetero_graph(&d, &GraphConfig::default()).unwrap();
        let f1 = init_features(&d, &g, &ModelConfig::default(), 9, None).unwrap();
        let f2 = init_features(&d, &g, &ModelConfig::default(), 9, None).unwrap();
        assert_eq!(f1.user_features.cols(), 3);
        assert_eq!(f1.user_features.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(f1, f2);
        let f3 = init_features(&d, &g, &ModelConfig::default(), 10, None).unwrap();
        assert_ne!(f1.user_features.row(1), f3.user_features.row(1));
    }

    #[test]
    fn pretrained_rows_used_and_width_checked() {
        let d = dataset();
        let g = assemble_hetero_graph(&d, &GraphConfig::default()).unwrap();
        let cfg = ModelConfig { word_dim: 2, ..ModelConfig::default() };
        let mut p = HashMap::new();
        p.insert("gamma".to_string(), vec![0.5, -0.5]);
        let f = init_features(&d, &g, &cfg, 1, Some(&p)).unwrap();
        assert_eq!(f.word_embeddings.row(g.vocab.lookup("gamma").unwrap()), &[0.5, -0.5]);
        p.insert("gamma".to_string(), vec![0.5, -0.5, 1.0]);
        assert!(matches!(init_features(&d, &g, &cfg, 1, Some(&p)), Err(ModelError::Pretrained(_))));
    }

    #[test]
    fn pretrained_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vec.txt");
        std::fs::write(&path, "a 1 2\nb 3 4\n").unwrap();
        let p = load_pretrained(&path).unwrap();
        assert_eq!(p["b"], vec![3.0, 4.0]);
        std::fs::write(&path, "a 1 2\nb 3\n").unwrap();
        assert!(load_pretrained(&path).is_err());
    }
}
