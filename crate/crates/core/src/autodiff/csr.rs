use serde::{Deserialize, Serialize};

/// Compressed row lists: row `i` owns `indices[offsets[i]..offsets[i + 1]]`.
///
/// Used both for attention neighborhoods (every row non-empty, contains
/// itself) and for tweet → token groups (rows may be empty).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Csr {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl Csr {
    pub fn from_lists<I, L>(lists: I) -> Self
    where
        I: IntoIterator<Item = L>,
        L: IntoIterator<Item = usize>,
    {
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        for list in lists {
            indices.extend(list);
            offsets.push(indices.len());
        }
        Self { offsets, indices }
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn range(&self, row: usize) -> std::ops::Range<usize> {
        self.offsets[row]..self.offsets[row + 1]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[usize] {
        &self.indices[self.range(row)]
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Largest referenced column index plus one (0 when empty).
    pub fn max_index_bound(&self) -> usize {
        self.indices.iter().max().map_or(0, |m| m + 1)
    }

    /// First row with no entries, if any.
    pub fn first_empty_row(&self) -> Option<usize> {
        (0..self.n_rows()).find(|&r| self.offsets[r] == self.offsets[r + 1])
    }

    /// Iterator over `(row, edge_slot, column)` triples in storage order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.n_rows()).flat_map(move |r| self.range(r).map(move |k| (r, k, self.indices[k])))
    }
}
