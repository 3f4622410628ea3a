//! Dataset directory layout:
//!
//! - `tweets.jsonl`: `{"id", "text", "label"?}` (required)
//! - `events.jsonl`: `{"source_tweet_id", "user_id", "elapsed", "kind"}`
//! - `users.jsonl`: `{"id", "features"?: [f64]}`
//! - `meta.json`: `{"time_unit"}`
//!
//! Missing optional files read as empty (or the default time unit).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, DEFAULT_TIME_UNIT};

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    time_unit: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path, required: bool) -> Result<Vec<T>, CorpusError> {
    if !required && !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file = path.file_name().map_or_else(String::new, |f| f.to_string_lossy().into_owned());
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            file: file.clone(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, CorpusError> {
    let tweets = read_jsonl(&dir.join("tweets.jsonl"), true)?;
    let events = read_jsonl(&dir.join("events.jsonl"), false)?;
    let users = read_jsonl(&dir.join("users.jsonl"), false)?;
    let meta_path = dir.join("meta.json");
    let time_unit = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        let meta: Meta = serde_json::from_str(&text).map_err(|e| CorpusError::Parse {
            file: "meta.json".into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        meta.time_unit
    } else {
        DEFAULT_TIME_UNIT.to_string()
    };
    Dataset::new(tweets, events, users, time_unit)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("record serialization");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))
}

/// Writes all four files; output is a pure function of `d`.
pub fn save_dataset(d: &Dataset, dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_jsonl(&dir.join("tweets.jsonl"), d.tweets())?;
    write_jsonl(&dir.join("events.jsonl"), d.events())?;
    write_jsonl(&dir.join("users.jsonl"), d.users())?;
    let meta_path = dir.join("meta.json");
    let meta = serde_json::to_string_pretty(&Meta {
        time_unit: d.time_unit().to_string(),
    })
    .expect("meta serialization");
    fs::write(&meta_path, meta + "\n").map_err(io_err(&meta_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    #[test]
    fn loads_three_tweet_fixture() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "tweets.jsonl",
            concat!(
                r#"{"id":"1","text":"obama injured","label":"false"}"#,
                "\n",
                r#"{"id":"2","text":"sunny day","label":"non-rumor"}"#,
                "\n\n",
                r#"{"id":"3","text":"unconfirmed reports"}"#,
                "\n"
            ),
        );
        write(
            dir.path(),
            "events.jsonl",
            r#"{"source_tweet_id":"1","user_id":"u1","elapsed":3.5,"kind":"retweet"}"#,
        );
        write(dir.path(), "meta.json", r#"{"time_unit":"hours"}"#);
        let d = load_dataset(dir.path()).unwrap();
        assert_eq!(d.tweets().len(), 3);
        assert_eq!(d.users().len(), 1);
        assert_eq!(d.time_unit(), "hours");
        assert_eq!(d.tweets()[2].label, None);
    }

    #[test]
    fn parse_error_carries_line_number() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "tweets.jsonl", "{\"id\":\"1\",\"text\":\"a\"}\n{oops\n");
        match load_dataset(dir.path()) {
            Err(CorpusError::Parse { line, file, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(file, "tweets.jsonl");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn dangling_event_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "tweets.jsonl", r#"{"id":"1","text":"a"}"#);
        write(
            dir.path(),
            "events.jsonl",
            r#"{"source_tweet_id":"7","user_id":"u","elapsed":0,"kind":"reply"}"#,
        );
        assert!(matches!(load_dataset(dir.path()), Err(CorpusError::DanglingTweet(id)) if id == "7"));
    }

    #[test]
    fn inconsistent_feature_dimension_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "tweets.jsonl", r#"{"id":"1","text":"a"}"#);
        write(
            dir.path(),
            "users.jsonl",
            "{\"id\":\"a\",\"features\":[1,2,3,4]}\n{\"id\":\"b\",\"features\":[1,2,3,4,5]}\n",
        );
        assert!(matches!(
            load_dataset(dir.path()),
            Err(CorpusError::InconsistentDimension { .. })
        ));
    }

    #[test]
    fn missing_tweets_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(CorpusError::Io { .. })));
    }
}
