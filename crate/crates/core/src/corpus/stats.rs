use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Dataset, Label};

/// Dataset summary in the shape of the usual Twitter15/16 statistics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub source_tweets: usize,
    pub users: usize,
    /// Retweet and reply events.
    pub events: usize,
    /// Keyed by class code (NR, FR, TR, UR); every class is present.
    pub per_class: BTreeMap<String, usize>,
    pub unlabeled: usize,
    pub time_unit: String,
}

pub fn dataset_stats(d: &Dataset) -> StatsReport {
    let mut per_class: BTreeMap<String, usize> = Label::ALL.iter().map(|l| (l.code().to_string(), 0)).collect();
    let mut unlabeled = 0;
    for t in d.tweets() {
        match t.label {
            Some(l) => *per_class.get_mut(l.code()).unwrap() += 1,
            None => unlabeled += 1,
        }
    }
    StatsReport {
        source_tweets: d.tweets().len(),
        users: d.users().len(),
        events: d.events().len(),
        per_class,
        unlabeled,
        time_unit: d.time_unit().to_string(),
    }
}
