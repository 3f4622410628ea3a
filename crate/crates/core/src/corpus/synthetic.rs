//! Seeded rumor-like corpora with controllable text and propagation signal.
//!
//! Each class owns a word pool and a user group. `text_overlap` is the
//! fraction of every class pool drawn from one shared block of words;
//! `user_overlap` is the probability that an event's user comes from a
//! shared crowd instead of the class group (and that its delay follows the
//! crowd profile). Setting both to 1 removes all class signal.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, EventKind, Label, PropagationEvent, TweetRecord, UserRecord, NUM_CLASSES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    /// Tweets per class, in [`Label::ALL`] order (1 to 4 entries).
    pub class_counts: Vec<usize>,
    /// Words per class pool.
    pub pool_size: usize,
    /// Fraction of each class pool shared by all classes, in `[0, 1]`.
    pub text_overlap: f64,
    /// Size of the background vocabulary used for noise words.
    pub vocab_size: usize,
    pub words_per_tweet: usize,
    pub noise_words_per_tweet: usize,
    /// Users per class group; the shared crowd has the same size.
    pub users_per_class: usize,
    /// Probability an event's user is drawn from the shared crowd.
    pub user_overlap: f64,
    pub events_per_tweet: usize,
    /// Mean propagation delay per class group (exponential), in `time_unit`.
    pub delay_means: Vec<f64>,
    /// Mean delay for crowd events.
    pub crowd_delay_mean: f64,
    /// When set, users carry credibility features: group centroid plus
    /// unit-variance noise, centroid norm `feature_signal`.
    pub user_feature_dim: Option<usize>,
    pub feature_signal: f64,
    pub time_unit: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            class_counts: vec![25; NUM_CLASSES],
            pool_size: 20,
            text_overlap: 0.2,
            vocab_size: 200,
            words_per_tweet: 8,
            noise_words_per_tweet: 2,
            users_per_class: 20,
            user_overlap: 0.2,
            events_per_tweet: 10,
            delay_means: vec![30.0, 60.0, 120.0, 240.0],
            crowd_delay_mean: 90.0,
            user_feature_dim: Some(16),
            feature_signal: 4.0,
            time_unit: "minutes".to_string(),
        }
    }
}

impl SyntheticSpec {
    /// Signal only in text: class pools differ, propagation is shared.
    pub fn text_signal_only(mut self) -> Self {
        self.user_overlap = 1.0;
        self
    }

    /// Signal only in propagation: one shared word pool.
    pub fn propagation_signal_only(mut self) -> Self {
        self.text_overlap = 1.0;
        self
    }

    /// No class signal at all.
    pub fn signal_free(mut self) -> Self {
        self.text_overlap = 1.0;
        self.user_overlap = 1.0;
        self
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::InvalidSynthetic(m.to_string()));
        if self.class_counts.is_empty() || self.class_counts.len() > NUM_CLASSES {
            return bad("class_counts must list 1 to 4 classes");
        }
        if self.class_counts.iter().all(|&c| c == 0) {
            return bad("no tweets requested");
        }
        if self.pool_size == 0 || self.words_per_tweet == 0 {
            return bad("word pools and tweets must be non-empty");
        }
        if self.noise_words_per_tweet > 0 && self.vocab_size == 0 {
            return bad("noise words need a non-empty vocabulary");
        }
        if !(0.0..=1.0).contains(&self.text_overlap) || !(0.0..=1.0).contains(&self.user_overlap) {
            return bad("overlap ratios must lie in [0, 1]");
        }
        if self.events_per_tweet > 0 && self.users_per_class == 0 {
            return bad("events need a non-empty user pool");
        }
        if self.delay_means.len() < self.class_counts.len() {
            return bad("delay_means needs one entry per class");
        }
        if self.delay_means.iter().chain([&self.crowd_delay_mean]).any(|&m| !(m > 0.0)) {
            return bad("delay means must be positive");
        }
        Ok(())
    }
}

/// Builds a dataset that is a pure function of `(spec, seed)`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset, CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = spec.class_counts.len();

    let shared = ((spec.text_overlap * spec.pool_size as f64).round() as usize).min(spec.pool_size);
    let own = spec.pool_size - shared;
    let shared_words: Vec<String> = (0..shared).map(|i| format!("common{i:03}")).collect();
    let pools: Vec<Vec<String>> = (0..n_classes)
        .map(|c| {
            let mut p = shared_words.clone();
            p.extend((0..own).map(|i| format!("{}{i:03}", Label::ALL[c].code().to_lowercase())));
            p
        })
        .collect();
    let background: Vec<String> = (0..spec.vocab_size).map(|i| format!("bg{i:03}")).collect();

    let group_id = |g: usize, i: usize| {
        if g == n_classes {
            format!("crowd{i:03}")
        } else {
            format!("{}user{i:03}", Label::ALL[g].code().to_lowercase())
        }
    };

    let mut tweets = Vec::new();
    let mut events = Vec::new();
    let mut n = 0usize;
    for (c, &count) in spec.class_counts.iter().enumerate() {
        let class_delay = Exp::new(1.0 / spec.delay_means[c]).expect("positive rate");
        let crowd_delay = Exp::new(1.0 / spec.crowd_delay_mean).expect("positive rate");
        for _ in 0..count {
            let id = format!("t{n:04}");
            n += 1;
            let mut words: Vec<&str> = (0..spec.words_per_tweet)
                .map(|_| pools[c].choose(&mut rng).expect("non-empty pool").as_str())
                .collect();
            for _ in 0..spec.noise_words_per_tweet {
                let w = background.choose(&mut rng).expect("non-empty vocabulary");
                let at = rng.random_range(0..=words.len());
                words.insert(at, w);
            }
            tweets.push(TweetRecord {
                id: id.clone(),
                text: words.join(" "),
                label: Some(Label::ALL[c]),
            });
            for _ in 0..spec.events_per_tweet {
                let crowd = rng.random::<f64>() < spec.user_overlap;
                let group = if crowd { n_classes } else { c };
                let user = group_id(group, rng.random_range(0..spec.users_per_class));
                let delay = if crowd {
                    crowd_delay.sample(&mut rng)
                } else {
                    class_delay.sample(&mut rng)
                };
                let kind = if rng.random::<f64>() < 0.7 {
                    EventKind::Retweet
                } else {
                    EventKind::Reply
                };
                events.push(PropagationEvent {
                    source_tweet_id: id.clone(),
                    user_id: user,
                    elapsed: (delay * 1000.0).round() / 1000.0,
                    kind,
                });
            }
        }
    }

    // Users in order of first appearance; optional credibility features.
    let mut users: Vec<UserRecord> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for e in &events {
        if seen.insert(e.user_id.clone()) {
            users.push(UserRecord {
                id: e.user_id.clone(),
                features: None,
            });
        }
    }
    if let Some(dim) = spec.user_feature_dim {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let centroids: Vec<Vec<f64>> = (0..n_classes)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.iter().map(|x| x * spec.feature_signal / norm).collect()
            })
            .collect();
        for u in &mut users {
            let group = (0..n_classes).find(|&g| u.id.starts_with(&format!("{}user", Label::ALL[g].code().to_lowercase())));
            let feats = (0..dim)
                .map(|k| {
                    let centre = group.map_or(0.0, |g| centroids[g][k]);
                    let x: f64 = centre + normal.sample(&mut rng);
                    (x * 1e6).round() / 1e6
                })
                .collect();
            u.features = Some(feats);
        }
    }

    Dataset::new(tweets, events, users, spec.time_unit.clone())
}
