use serde::{Deserialize, Serialize};

use crate::error::{GbsError, Result};

/// Photon counts per output mode.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutputPattern(pub Vec<u16>);

impl OutputPattern {
    pub fn new(counts: Vec<u16>) -> Self {
        Self(counts)
    }

    /// Builds a pattern and checks every count against the per-mode cap.
    pub fn with_cutoff(counts: Vec<u16>, n_cutoff: u16) -> Result<Self> {
        if let Some(c) = counts.iter().find(|&&c| c > n_cutoff) {
            return Err(GbsError::InvalidInput(format!("count {c} exceeds cutoff {n_cutoff}")));
        }
        Ok(Self(counts))
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0; m])
    }

    pub fn m(&self) -> usize {
        self.0.len()
    }

    pub fn counts(&self) -> &[u16] {
        &self.0
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&c| c as u32).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn max_count(&self) -> u16 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn l2_distance(&self, other: &OutputPattern) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Iterates every pattern in `{0..=n_cutoff}^m` in lexicographic order.
    pub fn enumerate(m: usize, n_cutoff: u16) -> impl Iterator<Item = OutputPattern> {
        let total = (n_cutoff as u64 + 1).checked_pow(m as u32).unwrap_or(u64::MAX);
        (0..total).map(move |idx| Self::from_index(idx, m, n_cutoff))
    }

    /// Pattern with lexicographic rank `idx` in `{0..=n_cutoff}^m`.
    pub fn from_index(mut idx: u64, m: usize, n_cutoff: u16) -> OutputPattern {
        let base = n_cutoff as u64 + 1;
        let mut counts = vec![0u16; m];
        for slot in counts.iter_mut().rev() {
            *slot = (idx % base) as u16;
            idx /= base;
        }
        OutputPattern(counts)
    }
}

impl From<Vec<u16>> for OutputPattern {
    fn from(v: Vec<u16>) -> Self {
        Self(v)
    }
}
