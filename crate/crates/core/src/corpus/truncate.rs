use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Dataset, PropagationEvent};

/// Early-detection cut-off applied to propagation events.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum Deadline {
    /// Keep events with `elapsed <= x`.
    ElapsedTime(f64),
    /// Keep, per source tweet, the `k` earliest events.
    RetweetCount(usize),
}

fn event_order(a: &PropagationEvent, b: &PropagationEvent) -> Ordering {
    a.elapsed
        .total_cmp(&b.elapsed)
        .then_with(|| a.user_id.cmp(&b.user_id))
        .then_with(|| a.kind.as_str().cmp(b.kind.as_str()))
}

/// Returns `d` with its event list cut at `deadline`. Tweets, users and
/// the relative order of surviving events are unchanged. Count ties break
/// on `(elapsed, user_id, kind)`.
pub fn truncate_events(d: &Dataset, deadline: Deadline) -> Dataset {
    let events = match deadline {
        Deadline::ElapsedTime(x) => d.events().iter().filter(|e| e.elapsed <= x).cloned().collect(),
        Deadline::RetweetCount(k) => {
            let mut per_tweet: HashMap<&str, Vec<usize>> = HashMap::new();
            for (i, e) in d.events().iter().enumerate() {
                per_tweet.entry(e.source_tweet_id.as_str()).or_default().push(i);
            }
            let mut keep = vec![false; d.events().len()];
            for idx in per_tweet.values_mut() {
                idx.sort_by(|&a, &b| event_order(&d.events()[a], &d.events()[b]).then(a.cmp(&b)));
                for &i in idx.iter().take(k) {
                    keep[i] = true;
                }
            }
            d.events()
                .iter()
                .zip(keep)
                .filter_map(|(e, k)| k.then(|| e.clone()))
                .collect()
        }
    };
    d.with_events(events)
}
