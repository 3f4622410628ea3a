//! Edge sets and weights checked against a brute-force evaluation over all
//! node pairs.

use std::collections::BTreeMap;

use hgat::corpus::{Dataset, EventKind, PropagationEvent, TweetRecord};
use hgat::graph::{assemble_hetero_graph, tokenize, GraphConfig};
use proptest::prelude::*;

type EdgeMap = BTreeMap<(String, String), f64>;

struct Expected {
    tw: EdgeMap,
    ww: EdgeMap,
    tu: EdgeMap,
}

fn brute_force(d: &Dataset, window: usize, min_df: usize) -> Expected {
    let raw: Vec<Vec<String>> = d.tweets().iter().map(|t| tokenize(&t.text)).collect();
    let n_docs = raw.len();
    let df = |w: &str| raw.iter().filter(|doc| doc.iter().any(|x| x == w)).count();
    let mut words: Vec<String> = raw.iter().flatten().cloned().collect();
    words.sort();
    words.dedup();
    words.retain(|w| df(w) >= min_df);
    let docs: Vec<Vec<String>> = raw
        .iter()
        .map(|doc| doc.iter().filter(|w| words.contains(w)).cloned().collect())
        .collect();

    let mut tw = EdgeMap::new();
    for (t, doc) in docs.iter().enumerate() {
        for w in &words {
            let n = doc.iter().filter(|x| *x == w).count();
            if n == 0 {
                continue;
            }
            let weight = (n as f64 / doc.len() as f64) * (n_docs as f64 / df(w) as f64).ln();
            if weight > 0.0 {
                tw.insert((d.tweets()[t].id.clone(), w.clone()), weight);
            }
        }
    }

    let mut windows: Vec<&[String]> = Vec::new();
    for doc in &docs {
        if doc.is_empty() {
            continue;
        }
        if doc.len() <= window {
            windows.push(doc);
        } else {
            for s in 0..=doc.len() - window {
                windows.push(&doc[s..s + window]);
            }
        }
    }
    let total = windows.len() as u128;
    let count = |pred: &dyn Fn(&[String]) -> bool| windows.iter().filter(|w| pred(w)).count() as u128;
    let mut ww = EdgeMap::new();
    for (a, wa) in words.iter().enumerate() {
        for wb in &words[a + 1..] {
            let joint = count(&|w| w.contains(wa) && w.contains(wb));
            if joint == 0 {
                continue;
            }
            let na = count(&|w| w.contains(wa));
            let nb = count(&|w| w.contains(wb));
            if joint * total > na * nb {
                let weight = ((joint * total) as f64 / (na * nb) as f64).ln();
                let key = if wa < wb { (wa.clone(), wb.clone()) } else { (wb.clone(), wa.clone()) };
                ww.insert(key, weight);
            }
        }
    }

    let mut tu = EdgeMap::new();
    for t in d.tweets() {
        for u in d.users() {
            let best = d
                .events()
                .iter()
                .filter(|e| e.source_tweet_id == t.id && e.user_id == u.id)
                .map(|e| 1.0 / (e.elapsed + 1.0))
                .fold(None, |acc: Option<f64>, w| Some(acc.map_or(w, |a| a.max(w))));
            if let Some(w) = best {
                tu.insert((t.id.clone(), u.id.clone()), w);
            }
        }
    }
    Expected { tw, ww, tu }
}

fn assert_same(kind: &str, got: &EdgeMap, expected: &EdgeMap) {
    assert_eq!(got.len(), expected.len(), "{kind} edge count");
    for (k, &e) in expected {
        let g = *got.get(k).unwrap_or_else(|| panic!("{kind} edge {k:?} missing"));
        let rel = (g - e).abs() / e.abs().max(f64::MIN_POSITIVE);
        assert!(rel < 1e-12, "{kind} {k:?}: {g} vs {e}");
    }
}

fn corpus() -> impl Strategy<Value = Dataset> {
    let tweet = prop::collection::vec(0usize..60, 1..12);
    let event = (0usize..50, 0usize..8, 0u32..500, any::<bool>());
    (prop::collection::vec(tweet, 1..50), prop::collection::vec(event, 0..80)).prop_map(|(tweets, events)| {
        let n = tweets.len();
        let tweets: Vec<TweetRecord> = tweets
            .into_iter()
            .enumerate()
            .map(|(i, ws)| TweetRecord {
                id: format!("t{i}"),
                text: ws.iter().map(|w| format!("w{w}")).collect::<Vec<_>>().join(" "),
                label: None,
            })
            .collect();
        let events = events
            .into_iter()
            .map(|(t, u, e, reply)| PropagationEvent {
                source_tweet_id: format!("t{}", t % n),
                user_id: format!("u{u}"),
                elapsed: e as f64 / 4.0,
                kind: if reply { EventKind::Reply } else { EventKind::Retweet },
            })
            .collect();
        Dataset::new(tweets, events, vec![], "minutes").unwrap()
    })
}

fn graph_maps(d: &Dataset, cfg: &GraphConfig) -> Option<(EdgeMap, EdgeMap, EdgeMap)> {
    let g = assemble_hetero_graph(d, cfg).ok()?;
    let collect = |edges: &[hgat::graph::Edge]| -> EdgeMap {
        edges
            .iter()
            .map(|e| ((g.node_name(e.src).to_string(), g.node_name(e.dst).to_string()), e.weight))
            .collect()
    };
    Some((collect(&g.tweet_word), collect(&g.word_word), collect(&g.tweet_user)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn assembled_graph_equals_brute_force(d in corpus(), window in 2usize..7, min_df in 1usize..3) {
        let cfg = GraphConfig { window_size: window, min_df, ..GraphConfig::default() };
        let expected = brute_force(&d, window, min_df);
        match graph_maps(&d, &cfg) {
            Some((tw, ww, tu)) => {
                assert_same("tweet-word", &tw, &expected.tw);
                let ww_sorted: EdgeMap = ww
                    .into_iter()
                    .map(|((a, b), w)| if a < b { ((a, b), w) } else { ((b, a), w) })
                    .collect();
                assert_same("word-word", &ww_sorted, &expected.ww);
                assert_same("tweet-user", &tu, &expected.tu);
            }
            None => {
                // Only an empty vocabulary may fail.
                let any_word = d.tweets().iter().any(|t| !tokenize(&t.text).is_empty());
                prop_assert!(!any_word || min_df > 1);
            }
        }
    }
}

#[test]
fn hand_sized_corpus() {
    let tweets = ["a b c", "a b", "c d"]
        .iter()
        .enumerate()
        .map(|(i, t)| TweetRecord {
            id: format!("t{i}"),
            text: t.to_string(),
            label: None,
        })
        .collect();
    let d = Dataset::new(tweets, vec![], vec![], "minutes").unwrap();
    let (tw, ww, _) = graph_maps(&d, &GraphConfig { window_size: 2, ..GraphConfig::default() }).unwrap();
    // Windows [a b] [b c] [a b] [c d]: a in 2, b in 3, both in 2 of 4.
    let ab = ww[&("a".to_string(), "b".to_string())];
    assert!((ab - (2.0f64 * 4.0 / (2.0 * 3.0)).ln()).abs() < 1e-15);
    // d appears only in t2: tf 1/2, idf ln 3.
    assert!((tw[&("t2".to_string(), "d".to_string())] - 0.5 * 3f64.ln()).abs() < 1e-15);
}
