use std::fmt;

use itertools::Itertools;
use serde::{Serialize, Serializer};

use crate::error::{invalid, Result};

/// A sorted set of distinct 1-based channel indices drawn from `{1, ..., universe}`.
///
/// Used for sensor sets, actuator sets, isolated attack supports and the
/// supervisor's switching signal. Ordering is lexicographic on the sorted
/// index list, which is the tie-break order used by observer selection.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexSet {
    indices: Vec<usize>,
    universe: usize,
}

impl IndexSet {
    /// Builds a set from 1-based indices. Input order is irrelevant; duplicates
    /// and out-of-range indices are rejected.
    pub fn new(indices: impl IntoIterator<Item = usize>, universe: usize) -> Result<Self> {
        let mut indices: Vec<usize> = indices.into_iter().collect();
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid(format!("duplicate index {} in index set", w[0])));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i > universe) {
            return Err(invalid(format!("index {bad} outside of 1..={universe}")));
        }
        Ok(Self { indices, universe })
    }

    pub fn empty(universe: usize) -> Self {
        Self {
            indices: Vec::new(),
            universe,
        }
    }

    pub fn full(universe: usize) -> Self {
        Self {
            indices: (1..=universe).collect(),
            universe,
        }
    }

    /// Builds a set from 0-based positions.
    pub fn from_zero_based(positions: impl IntoIterator<Item = usize>, universe: usize) -> Result<Self> {
        Self::new(positions.into_iter().map(|p| p + 1), universe)
    }

    /// All subsets of `{1, ..., universe}` with exactly `size` elements, in lexicographic order.
    pub fn combinations(universe: usize, size: usize) -> Vec<Self> {
        (1..=universe)
            .combinations(size)
            .map(|indices| Self { indices, universe })
            .collect()
    }

    /// Subsets of `self` with `size` elements, lexicographic.
    pub fn subsets(&self, size: usize) -> Vec<Self> {
        self.indices
            .iter()
            .copied()
            .combinations(size)
            .map(|indices| Self {
                indices,
                universe: self.universe,
            })
            .collect()
    }

    /// Supersets of `self` within the universe with `size` elements, lexicographic.
    pub fn supersets(&self, size: usize) -> Vec<Self> {
        if size < self.len() {
            return Vec::new();
        }
        let rest = self.complement();
        rest.indices
            .iter()
            .copied()
            .combinations(size - self.len())
            .map(|extra| self.union_unchecked(&extra))
            .collect()
    }

    fn union_unchecked(&self, extra: &[usize]) -> Self {
        let mut indices: Vec<usize> = self.indices.iter().chain(extra).copied().collect();
        indices.sort_unstable();
        Self {
            indices,
            universe: self.universe,
        }
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// 0-based positions, for matrix row/column selection.
    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().map(|i| i - 1)
    }

    pub fn complement(&self) -> Self {
        Self {
            indices: (1..=self.universe).filter(|i| !self.contains(*i)).collect(),
            universe: self.universe,
        }
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.indices.iter().all(|i| other.contains(*i))
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.indices.iter().all(|i| !other.contains(*i))
    }

    pub fn union(&self, other: &Self) -> Self {
        let extra: Vec<usize> = other.indices.iter().copied().filter(|i| !self.contains(*i)).collect();
        self.union_unchecked(&extra)
    }
}

/// Renders as semicolon-joined indices, e.g. `1;3;4`; the empty set renders as an empty string.
impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.indices.iter().join(";"))
    }
}

impl Serialize for IndexSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.indices.serialize(serializer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        assert!(IndexSet::new([1, 1], 3).is_err());
        assert!(IndexSet::new([0], 3).is_err());
        assert!(IndexSet::new([4], 3).is_err());
        assert_eq!(IndexSet::new([3, 1], 3).unwrap().indices(), &[1, 3]);
    }

    #[test]
    fn combination_counts() {
        assert_eq!(IndexSet::combinations(4, 3).len(), 4);
        assert_eq!(IndexSet::combinations(4, 2).len(), 6);
        assert_eq!(IndexSet::combinations(4, 0), vec![IndexSet::empty(4)]);
        let first = &IndexSet::combinations(4, 2)[0];
        assert_eq!(first.indices(), &[1, 2]);
    }

    #[test]
    fn subsets_and_supersets() {
        let j = IndexSet::new([1, 3, 4], 4).unwrap();
        let subs = j.subsets(2);
        assert_eq!(subs.len(), 3);
        assert!(subs.iter().all(|s| s.is_subset(&j)));

        let ju = IndexSet::new([2], 3).unwrap();
        let sups = ju.supersets(2);
        assert_eq!(
            sups,
            vec![IndexSet::new([1, 2], 3).unwrap(), IndexSet::new([2, 3], 3).unwrap()]
        );
        assert!(ju.supersets(0).is_empty());
    }

    #[test]
    fn complement_and_display() {
        let w = IndexSet::new([3], 3).unwrap();
        assert_eq!(w.complement().to_string(), "1;2");
        assert_eq!(IndexSet::empty(3).to_string(), "");
        assert!(w.is_disjoint(&w.complement()));
        assert_eq!(w.union(&w.complement()), IndexSet::full(3));
    }

    #[test]
    fn lexicographic_order() {
        let a = IndexSet::new([1, 2, 4], 4).unwrap();
        let b = IndexSet::new([1, 3, 4], 4).unwrap();
        assert!(a < b);
    }
}
