use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset};

pub const MIN_LABELED_FOR_SPLIT: usize = 8;

/// Disjoint train / validation / test partition of the labeled tweet ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.train_ids.len() + self.val_ids.len() + self.test_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sizes for `n` labeled tweets: `val = max(1, ⌊n/10⌋)`,
/// `train = ⌊3/4 · (n − val)⌋`, remainder to test.
pub(crate) fn split_sizes(n: usize) -> (usize, usize, usize) {
    let val = (n / 10).max(1);
    let rest = n - val;
    let train = rest * 3 / 4;
    (train, val, rest - train)
}

/// Shuffles the labeled ids (in dataset order) with a seeded ChaCha8 stream
/// and cuts validation, train and test in that order.
pub fn split_dataset(d: &Dataset, seed: u64) -> Result<Split, CorpusError> {
    let mut ids: Vec<String> = d.labeled_ids().map(str::to_string).collect();
    if ids.len() < MIN_LABELED_FOR_SPLIT {
        return Err(CorpusError::TooFewLabeled {
            found: ids.len(),
            required: MIN_LABELED_FOR_SPLIT,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let (train, val, _) = split_sizes(ids.len());
    let test_ids = ids.split_off(val + train);
    let train_ids = ids.split_off(val);
    Ok(Split {
        train_ids,
        val_ids: ids,
        test_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::tweet;
    use crate::corpus::Label;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn labeled(n: usize, unlabeled: usize) -> Dataset {
        let mut tweets: Vec<_> = (0..n)
            .map(|i| tweet(&format!("t{i}"), "w", Some(Label::ALL[i % 4])))
            .collect();
        tweets.extend((0..unlabeled).map(|i| tweet(&format!("u{i}"), "w", None)));
        Dataset::new(tweets, vec![], vec![], "minutes").unwrap()
    }

    #[test]
    fn full_scale_sizes() {
        assert_eq!(split_sizes(1490), (1005, 149, 336));
    }

    #[test]
    fn minimum_size_keeps_one_validation_tweet() {
        let s = split_dataset(&labeled(8, 0), 1).unwrap();
        assert_eq!((s.train_ids.len(), s.val_ids.len(), s.test_ids.len()), (5, 1, 2));
    }

    #[test]
    fn too_few_rejected() {
        assert!(matches!(
            split_dataset(&labeled(7, 5), 0),
            Err(CorpusError::TooFewLabeled { found: 7, required: 8 })
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let d = labeled(40, 3);
        assert_eq!(split_dataset(&d, 11).unwrap(), split_dataset(&d, 11).unwrap());
        assert_ne!(split_dataset(&d, 11).unwrap(), split_dataset(&d, 12).unwrap());
    }

    proptest! {
        #[test]
        fn split_is_partition_of_labeled(n in 8usize..200, unlabeled in 0usize..10, seed in any::<u64>()) {
            let d = labeled(n, unlabeled);
            let s = split_dataset(&d, seed).unwrap();
            let all: HashSet<&str> = d.labeled_ids().collect();
            let mut seen = HashSet::new();
            for id in s.train_ids.iter().chain(&s.val_ids).chain(&s.test_ids) {
                prop_assert!(seen.insert(id.as_str()), "duplicate {}", id);
            }
            prop_assert_eq!(seen, all);
            let (tr, va, te) = split_sizes(n);
            prop_assert_eq!((s.train_ids.len(), s.val_ids.len(), s.test_ids.len()), (tr, va, te));
        }
    }
}
