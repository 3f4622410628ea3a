//! Rumor corpus: source tweets, propagation events and users.

mod io;
mod split;
mod stats;
mod synthetic;
mod truncate;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_dataset, save_dataset};
pub use split::{split_dataset, Split, MIN_LABELED_FOR_SPLIT};
pub use stats::{dataset_stats, StatsReport};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use truncate::{truncate_events, Deadline};

/// Veracity class of a source tweet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "non-rumor", alias = "non_rumor")]
    NonRumor,
    #[serde(rename = "false-rumor", alias = "false", alias = "false_rumor")]
    FalseRumor,
    #[serde(rename = "true-rumor", alias = "true", alias = "true_rumor")]
    TrueRumor,
    #[serde(rename = "unverified")]
    Unverified,
}

pub const NUM_CLASSES: usize = 4;

impl Label {
    pub const ALL: [Label; NUM_CLASSES] = [Label::NonRumor, Label::FalseRumor, Label::TrueRumor, Label::Unverified];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    /// Two-letter code: NR, FR, TR, UR.
    pub fn code(self) -> &'static str {
        match self {
            Label::NonRumor => "NR",
            Label::FalseRumor => "FR",
            Label::TrueRumor => "TR",
            Label::Unverified => "UR",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Reply,
    Retweet,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Reply => "reply",
            EventKind::Retweet => "retweet",
        }
    }
}

/// A user retweeting or replying to a source tweet after `elapsed` time
/// units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationEvent {
    pub source_tweet_id: String,
    pub user_id: String,
    pub elapsed: f64,
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

pub const DEFAULT_TIME_UNIT: &str = "minutes";

/// A validated corpus. Construct through [`Dataset::new`] or
/// [`load_dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    tweets: Vec<TweetRecord>,
    events: Vec<PropagationEvent>,
    users: Vec<UserRecord>,
    time_unit: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("event references unknown source tweet `{0}`")]
    DanglingTweet(String),
    #[error("user `{user}` has {found} features, expected {expected}")]
    InconsistentDimension { user: String, expected: usize, found: usize },
    #[error("tweet `{0}` has empty text")]
    EmptyText(String),
    #[error("event for tweet `{tweet}` has invalid elapsed time {elapsed}")]
    InvalidElapsed { tweet: String, elapsed: f64 },
    #[error("dataset has no source tweets")]
    NoTweets,
    #[error("need at least {required} labeled tweets to split, found {found}")]
    TooFewLabeled { found: usize, required: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSynthetic(String),
}

impl Dataset {
    /// Validates the parts and appends a featureless [`UserRecord`] for
    /// every event user that has none, in order of first appearance.
    pub fn new(
        tweets: Vec<TweetRecord>,
        events: Vec<PropagationEvent>,
        mut users: Vec<UserRecord>,
        time_unit: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        if tweets.is_empty() {
            return Err(CorpusError::NoTweets);
        }
        let mut tweet_ids = HashSet::with_capacity(tweets.len());
        for t in &tweets {
            if !tweet_ids.insert(t.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    kind: "tweet",
                    id: t.id.clone(),
                });
            }
            if t.text.trim().is_empty() {
                return Err(CorpusError::EmptyText(t.id.clone()));
            }
        }
        for e in &events {
            if !tweet_ids.contains(e.source_tweet_id.as_str()) {
                return Err(CorpusError::DanglingTweet(e.source_tweet_id.clone()));
            }
            if !(e.elapsed >= 0.0) || !e.elapsed.is_finite() {
                return Err(CorpusError::InvalidElapsed {
                    tweet: e.source_tweet_id.clone(),
                    elapsed: e.elapsed,
                });
            }
        }

        let mut user_ids: HashSet<String> = HashSet::with_capacity(users.len());
        let mut dim: Option<usize> = None;
        for u in &users {
            if !user_ids.insert(u.id.clone()) {
                return Err(CorpusError::DuplicateId {
                    kind: "user",
                    id: u.id.clone(),
                });
            }
            if let Some(f) = &u.features {
                match dim {
                    None => dim = Some(f.len()),
                    Some(d) if d != f.len() => {
                        return Err(CorpusError::InconsistentDimension {
                            user: u.id.clone(),
                            expected: d,
                            found: f.len(),
                        })
                    }
                    _ => {}
                }
            }
        }
        for e in &events {
            if user_ids.insert(e.user_id.clone()) {
                users.push(UserRecord {
                    id: e.user_id.clone(),
                    features: None,
                });
            }
        }

        Ok(Self {
            tweets,
            events,
            users,
            time_unit: time_unit.into(),
        })
    }

    pub fn tweets(&self) -> &[TweetRecord] {
        &self.tweets
    }

    pub fn events(&self) -> &[PropagationEvent] {
        &self.events
    }

    pub fn users(&self) -> &[UserRecord] {
        &self.users
    }

    pub fn time_unit(&self) -> &str {
        &self.time_unit
    }

    /// Common dimension of the users that carry features.
    pub fn user_feature_dim(&self) -> Option<usize> {
        self.users.iter().find_map(|u| u.features.as_ref().map(Vec::len))
    }

    pub fn labeled_ids(&self) -> impl Iterator<Item = &str> {
        self.tweets.iter().filter(|t| t.label.is_some()).map(|t| t.id.as_str())
    }

    /// Tweet id → position in [`Dataset::tweets`].
    pub fn tweet_index(&self) -> HashMap<&str, usize> {
        self.tweets.iter().enumerate().map(|(i, t)| (t.id.as_str(), i)).collect()
    }

    pub fn user_index(&self) -> HashMap<&str, usize> {
        self.users.iter().enumerate().map(|(i, u)| (u.id.as_str(), i)).collect()
    }

    /// Same tweets and users with a different event list. Events must refer
    /// to existing tweets and users.
    pub(crate) fn with_events(&self, events: Vec<PropagationEvent>) -> Self {
        Self {
            tweets: self.tweets.clone(),
            events,
            users: self.users.clone(),
            time_unit: self.time_unit.clone(),
        }
    }
}
