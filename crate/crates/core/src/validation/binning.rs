use serde::{Deserialize, Serialize};

use crate::error::{GbsError, Result};
use crate::pattern::OutputPattern;

/// Ordered disjoint mode subsets covering all modes (0-based indices).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningPartition {
    subsets: Vec<Vec<usize>>,
}

impl BinningPartition {
    pub fn new(subsets: Vec<Vec<usize>>, m: usize) -> Result<Self> {
        let mut seen = vec![false; m];
        for set in &subsets {
            if set.is_empty() {
                return Err(GbsError::InvalidInput("partition has an empty subset".into()));
            }
            for &j in set {
                if j >= m || seen[j] {
                    return Err(GbsError::InvalidInput(format!("mode {j} is out of range or repeated")));
                }
                seen[j] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(GbsError::InvalidInput("partition does not cover every mode".into()));
        }
        Ok(Self { subsets })
    }

    pub fn singletons(m: usize) -> Self {
        Self { subsets: (0..m).map(|j| vec![j]).collect() }
    }

    /// Adjacent pairs `{1,2},{3,4},…`; a trailing odd mode forms its own subset.
    pub fn adjacent_pairs(m: usize) -> Self {
        Self { subsets: (0..m).collect::<Vec<_>>().chunks(2).map(|c| c.to_vec()).collect() }
    }

    /// Parses `"1,2|3,4|5"` (1-based mode numbers).
    pub fn parse(text: &str, m: usize) -> Result<Self> {
        let subsets = text
            .split('|')
            .map(|part| {
                part.split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<usize>()
                            .ok()
                            .filter(|&v| v >= 1)
                            .map(|v| v - 1)
                            .ok_or_else(|| GbsError::InvalidInput(format!("bad mode number '{t}'")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(subsets, m)
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn m(&self) -> usize {
        self.subsets.iter().map(Vec::len).sum()
    }

    /// Per-subset photon sums.
    pub fn apply(&self, s: &OutputPattern) -> OutputPattern {
        OutputPattern(self.subsets.iter().map(|set| set.iter().map(|&j| s.0[j]).sum()).collect())
    }

    /// Largest count a subset can hold, `m_sub · n_cutoff`.
    pub fn subset_cutoffs(&self, n_cutoff: u16) -> Vec<u16> {
        self.subsets.iter().map(|s| s.len() as u16 * n_cutoff).collect()
    }

    /// Human-readable 1-based form, `"1,2|3,4|5"`.
    pub fn to_spec_string(&self) -> String {
        self.subsets
            .iter()
            .map(|s| s.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join("|")
    }
}
