use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::GraphError;

pub const URL_TOKEN: &str = "<url>";
pub const MENTION_TOKEN: &str = "<mention>";

/// Lowercases, maps URLs and @-mentions to sentinels, and splits on
/// whitespace and punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let lower = chunk.to_lowercase();
        if lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.") {
            out.push(URL_TOKEN.to_string());
            continue;
        }
        if let Some(rest) = lower.strip_prefix('@') {
            if rest.chars().next().is_some_and(|c| c.is_alphanumeric() || c == '_') {
                out.push(MENTION_TOKEN.to_string());
                continue;
            }
        }
        out.extend(
            lower
                .split(|c: char| !(c.is_alphanumeric() || c == '_'))
                .filter(|s| !s.is_empty())
                .map(str::to_string),
        );
    }
    out
}

/// Retained words sorted by descending document frequency, then word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    doc_freq: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_parts(words: Vec<String>, doc_freq: Vec<usize>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, doc_freq, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn lookup(&self, word: &str) -> Result<usize, GraphError> {
        self.id(word).ok_or_else(|| GraphError::UnknownWord(word.to_string()))
    }

    /// Number of tweets containing word `i`.
    pub fn doc_freq(&self, i: usize) -> usize {
        self.doc_freq[i]
    }

    /// Maps tokens to word ids, dropping words outside the vocabulary.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.id(t)).collect()
    }
}

pub fn build_vocabulary(docs: &[Vec<String>], min_df: usize) -> Result<Vocabulary, GraphError> {
    if min_df == 0 {
        return Err(GraphError::InvalidConfig("min_df must be at least 1".into()));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let distinct: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
        for w in distinct {
            *df.entry(w).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = df.into_iter().filter(|&(_, c)| c >= min_df).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let (words, doc_freq) = kept.into_iter().map(|(w, c)| (w.to_string(), c)).unzip();
    Ok(Vocabulary::from_parts(words, doc_freq))
}

/// Sliding-window statistics for word co-occurrence.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooccurrenceCounts {
    pub total_windows: u64,
    /// Windows containing word `i`.
    pub word_windows: Vec<u64>,
    /// Windows containing both words, keyed `(i, j)` with `i < j`.
    pub pair_windows: BTreeMap<(usize, usize), u64>,
}

impl CooccurrenceCounts {
    fn new(n_words: usize) -> Self {
        Self {
            total_windows: 0,
            word_windows: vec![0; n_words],
            pair_windows: BTreeMap::new(),
        }
    }

    fn add_window(&mut self, window: &[usize]) {
        let distinct: BTreeSet<usize> = window.iter().copied().collect();
        if distinct.is_empty() {
            return;
        }
        self.total_windows += 1;
        for &w in &distinct {
            self.word_windows[w] += 1;
        }
        let ws: Vec<usize> = distinct.into_iter().collect();
        for (a, &i) in ws.iter().enumerate() {
            for &j in &ws[a + 1..] {
                *self.pair_windows.entry((i, j)).or_default() += 1;
            }
        }
    }

    /// Adds another partial count. Integer addition, so merge order does not
    /// matter.
    pub fn merge(&mut self, other: &CooccurrenceCounts) {
        self.total_windows += other.total_windows;
        if self.word_windows.len() < other.word_windows.len() {
            self.word_windows.resize(other.word_windows.len(), 0);
        }
        for (a, b) in self.word_windows.iter_mut().zip(&other.word_windows) {
            *a += b;
        }
        for (&k, &v) in &other.pair_windows {
            *self.pair_windows.entry(k).or_default() += v;
        }
    }

    pub fn pair(&self, i: usize, j: usize) -> u64 {
        let key = if i <= j { (i, j) } else { (j, i) };
        if i == j {
            return self.word_windows.get(i).copied().unwrap_or(0);
        }
        self.pair_windows.get(&key).copied().unwrap_or(0)
    }

    /// Natural-log PMI of words `i` and `j`; `-inf` when they never share
    /// a window.
    pub fn pmi(&self, i: usize, j: usize) -> Result<f64, GraphError> {
        let n = self.word_windows.len();
        for w in [i, j] {
            if w >= n || self.word_windows[w] == 0 {
                return Err(GraphError::UnknownWordId(w));
            }
        }
        let joint = self.pair(i, j);
        if joint == 0 {
            return Ok(f64::NEG_INFINITY);
        }
        // #(i,j) · #W / (#(i) · #(j)), products taken in integers.
        let num = joint as u128 * self.total_windows as u128;
        let den = self.word_windows[i] as u128 * self.word_windows[j] as u128;
        Ok((num as f64 / den as f64).ln())
    }
}

/// Windows slide with stride 1 inside each tweet and never cross tweets; a
/// tweet shorter than the window is one window, an empty tweet none.
pub fn count_cooccurrence(
    docs: &[Vec<usize>],
    vocab: &Vocabulary,
    window_size: usize,
) -> Result<CooccurrenceCounts, GraphError> {
    if window_size < 2 {
        return Err(GraphError::InvalidConfig("window_size must be at least 2".into()));
    }
    let mut counts = CooccurrenceCounts::new(vocab.len());
    for doc in docs {
        if doc.len() <= window_size {
            counts.add_window(doc);
        } else {
            for w in doc.windows(window_size) {
                counts.add_window(w);
            }
        }
    }
    Ok(counts)
}

/// TF-IDF of `word` in tweet `tweet`, over vocabulary-encoded tweets.
pub fn tfidf(docs: &[Vec<usize>], vocab: &Vocabulary, tweet: usize, word: usize) -> Result<f64, GraphError> {
    if word >= vocab.len() {
        return Err(GraphError::UnknownWordId(word));
    }
    let doc = &docs[tweet];
    let n = doc.iter().filter(|&&w| w == word).count();
    if n == 0 {
        return Ok(0.0);
    }
    let tf = n as f64 / doc.len() as f64;
    let idf = (docs.len() as f64 / vocab.doc_freq(word) as f64).ln();
    Ok(tf * idf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<Vec<String>> {
        texts.iter().map(|t| tokenize(t)).collect()
    }

    fn encoded(texts: &[&str]) -> (Vocabulary, Vec<Vec<usize>>) {
        let d = docs(texts);
        let v = build_vocabulary(&d, 1).unwrap();
        let e = d.iter().map(|t| v.encode(t)).collect();
        (v, e)
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Obama INJURED!"), vec!["obama", "injured"]);
        assert_eq!(tokenize("see http://x.co"), vec!["see", "<url>"]);
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("@cnn says: #breaking"), vec!["<mention>", "says", "breaking"]);
    }

    #[test]
    fn vocabulary_counts_document_frequency() {
        let v = build_vocabulary(&docs(&["a b", "a"]), 1).unwrap();
        assert_eq!(v.words(), &["a", "b"]);
        assert_eq!((v.doc_freq(0), v.doc_freq(1)), (2, 1));
        let v = build_vocabulary(&docs(&["a b", "a"]), 2).unwrap();
        assert_eq!(v.words(), &["a"]);
        let v = build_vocabulary(&docs(&["a a"]), 1).unwrap();
        assert_eq!(v.doc_freq(0), 1);
        assert!(build_vocabulary(&docs(&["a"]), 0).is_err());
    }

    #[test]
    fn window_counts_by_hand() {
        let (v, e) = encoded(&["a b", "a c"]);
        let c = count_cooccurrence(&e, &v, 2).unwrap();
        let (a, b) = (v.lookup("a").unwrap(), v.lookup("b").unwrap());
        assert_eq!(c.total_windows, 2);
        assert_eq!(c.word_windows[a], 2);
        assert_eq!(c.word_windows[b], 1);
        assert_eq!(c.pair(a, b), 1);

        let (v, e) = encoded(&["a b c"]);
        assert_eq!(count_cooccurrence(&e, &v, 2).unwrap().total_windows, 2);

        let (v, e) = encoded(&["a"]);
        let c = count_cooccurrence(&e, &v, 5).unwrap();
        assert_eq!((c.total_windows, c.word_windows[0]), (1, 1));
        assert!(count_cooccurrence(&e, &v, 1).is_err());
    }

    #[test]
    fn repeated_word_counts_window_once() {
        let (v, e) = encoded(&["a a b"]);
        let c = count_cooccurrence(&e, &v, 5).unwrap();
        assert_eq!(c.word_windows[v.lookup("a").unwrap()], 1);
        assert_eq!(c.pair(0, 1), 1);
    }

    #[test]
    fn pmi_by_hand() {
        let (v, e) = encoded(&["a b", "a c"]);
        let c = count_cooccurrence(&e, &v, 2).unwrap();
        let (a, b, cc) = (v.lookup("a").unwrap(), v.lookup("b").unwrap(), v.lookup("c").unwrap());
        assert_eq!(c.pmi(a, b).unwrap(), 0.0);
        assert_eq!(c.pmi(b, cc).unwrap(), f64::NEG_INFINITY);

        let (v, e) = encoded(&["a b", "a b", "c d"]);
        let c = count_cooccurrence(&e, &v, 2).unwrap();
        let p = c.pmi(v.lookup("a").unwrap(), v.lookup("b").unwrap()).unwrap();
        assert!((p - 1.5f64.ln()).abs() < 1e-15);
        assert!(c.pmi(0, 99).is_err());
    }

    #[test]
    fn tfidf_by_hand() {
        let (v, e) = encoded(&["a a b", "b c"]);
        let (a, b) = (v.lookup("a").unwrap(), v.lookup("b").unwrap());
        let w = tfidf(&e, &v, 0, a).unwrap();
        assert!((w - 2.0 / 3.0 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(tfidf(&e, &v, 0, b).unwrap(), 0.0);
        assert_eq!(tfidf(&e, &v, 1, a).unwrap(), 0.0);
        assert!(tfidf(&e, &v, 0, 42).is_err());
    }

    #[test]
    fn merge_is_order_independent() {
        let (v, e) = encoded(&["a b c d", "c d e", "a e"]);
        let whole = count_cooccurrence(&e, &v, 3).unwrap();
        let parts: Vec<_> = e
            .iter()
            .map(|d| count_cooccurrence(std::slice::from_ref(d), &v, 3).unwrap())
            .collect();
        let mut fwd = CooccurrenceCounts::default();
        parts.iter().for_each(|p| fwd.merge(p));
        let mut rev = CooccurrenceCounts::default();
        parts.iter().rev().for_each(|p| rev.merge(p));
        assert_eq!(fwd, whole);
        assert_eq!(rev, whole);
    }
}
