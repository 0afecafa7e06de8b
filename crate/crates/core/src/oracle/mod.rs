//! Exhaustive probability tables over a truncated Hilbert space and the
//! statistics computed from them.
//!
//! Tables store raw probabilities. Dropping the zero pattern and
//! renormalizing are explicit steps ([`ProbabilityTable::exclude_zero`],
//! [`ProbabilityTable::normalize`]) because the loss transform needs the
//! complete raw table.

mod io;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{GbsError, Result};
use crate::exec::{tree_sum, Exec};
use crate::gaussian::{check_unit_interval, GaussianState};
use crate::matchpoly::{binomial, ProbabilityKernel};
use crate::pattern::OutputPattern;
use crate::validation::BinningPartition;

pub use stats::{structure_stats, StructureStats};

/// Default cap on the number of enumerated patterns.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityTable {
    pub m: usize,
    /// Largest count any mode of a stored pattern may hold.
    pub n_cutoff: u16,
    pub entries: BTreeMap<OutputPattern, f64>,
    pub zero_excluded: bool,
    pub normalized: bool,
    /// `1 − Σ p` of the raw enumeration (probability beyond the cutoff).
    pub truncation_deficit: f64,
}

/// Header fields shared by the NDJSON table format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableHeader {
    pub m: usize,
    pub n_cutoff: u16,
    pub zero_excluded: bool,
    pub normalized: bool,
    pub truncation_deficit: f64,
    pub n_entries: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl ProbabilityTable {
    pub fn new(m: usize, n_cutoff: u16, entries: BTreeMap<OutputPattern, f64>) -> Result<Self> {
        for (s, &p) in &entries {
            if s.m() != m || s.max_count() > n_cutoff {
                return Err(GbsError::InvalidInput(format!("pattern {:?} does not fit m={m}, cutoff={n_cutoff}", s.0)));
            }
            if !(p >= 0.0) {
                return Err(GbsError::InvalidInput(format!("negative probability {p}")));
            }
        }
        let total: f64 = entries.values().sum();
        Ok(Self { m, n_cutoff, entries, zero_excluded: false, normalized: false, truncation_deficit: 1.0 - total })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        tree_sum(&self.entries.values().copied().collect::<Vec<_>>())
    }

    pub fn get(&self, s: &OutputPattern) -> f64 {
        self.entries.get(s).copied().unwrap_or(0.0)
    }

    /// Drops the all-zero pattern.
    pub fn exclude_zero(&self) -> Self {
        let mut out = self.clone();
        out.entries.retain(|s, _| !s.is_zero());
        out.zero_excluded = true;
        out.normalized = false;
        out
    }

    /// Rescales so the stored probabilities sum to one.
    pub fn normalize(&self) -> Result<Self> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(GbsError::InvalidInput("cannot normalize a table with zero mass".into()));
        }
        let mut out = self.clone();
        for p in out.entries.values_mut() {
            *p /= total;
        }
        out.normalized = true;
        Ok(out)
    }

    /// Zero-excluded, renormalized copy: the distribution samplers draw from.
    pub fn sampling_distribution(&self) -> Result<Self> {
        self.exclude_zero().normalize()
    }

    /// Patterns sorted by probability (descending), ties broken
    /// lexicographically on the pattern.
    pub fn sorted_desc(&self) -> Vec<(&OutputPattern, f64)> {
        let mut v: Vec<_> = self.entries.iter().map(|(s, &p)| (s, p)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }

    /// True when every pattern of `{0..=n_cutoff}^m` is present.
    pub fn is_complete(&self) -> bool {
        (self.n_cutoff as u64 + 1).checked_pow(self.m as u32) == Some(self.entries.len() as u64)
    }

    fn dense(&self) -> Result<Vec<f64>> {
        if !self.is_complete() {
            return Err(GbsError::InvalidInput("operation needs a complete table".into()));
        }
        Ok(self.entries.values().copied().collect())
    }

    fn from_dense(&self, values: Vec<f64>) -> Self {
        let entries = OutputPattern::enumerate(self.m, self.n_cutoff).zip(values).collect();
        Self { entries, ..self.clone() }
    }

    /// Table over binned patterns: probabilities of patterns with equal
    /// subset sums are merged.
    pub fn binned(&self, partition: &BinningPartition) -> Result<Self> {
        if partition.m() != self.m {
            return Err(GbsError::InvalidInput("partition does not match table modes".into()));
        }
        let mut entries = BTreeMap::new();
        for (s, &p) in &self.entries {
            *entries.entry(partition.apply(s)).or_insert(0.0) += p;
        }
        let cutoff = partition.subset_cutoffs(self.n_cutoff).into_iter().max().unwrap_or(0);
        Ok(Self { m: partition.len(), n_cutoff: cutoff, entries, ..self.clone() })
    }

    pub fn header(&self) -> TableHeader {
        TableHeader {
            m: self.m,
            n_cutoff: self.n_cutoff,
            zero_excluded: self.zero_excluded,
            normalized: self.normalized,
            truncation_deficit: self.truncation_deficit,
            n_entries: self.entries.len(),
            config_hash: None,
        }
    }
}

/// Enumeration limits and parallelism.
#[derive(Clone, Copy, Debug)]
pub struct EnumerationOptions {
    pub budget: u64,
    pub exec: Exec,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self { budget: DEFAULT_BUDGET, exec: Exec::Parallel }
    }
}

/// Raw probabilities of every pattern in `{0..=n_cutoff}^m`, zero pattern included.
pub fn enumerate_ideal(state: &GaussianState, n_cutoff: u16) -> Result<ProbabilityTable> {
    enumerate_with(state, n_cutoff, EnumerationOptions::default())
}

/// [`enumerate_ideal`] for any (pure or mixed) state with explicit options.
pub fn enumerate_with(state: &GaussianState, n_cutoff: u16, opts: EnumerationOptions) -> Result<ProbabilityTable> {
    let m = state.m();
    let count = pattern_budget_check(m, n_cutoff, opts.budget)?;
    let kernel = ProbabilityKernel::new(state)?;
    let probs = opts.exec.try_map(count as usize, |idx| {
        let s = OutputPattern::from_index(idx as u64, m, n_cutoff);
        kernel.probability(s.counts())
    })?;
    let entries: BTreeMap<_, _> = OutputPattern::enumerate(m, n_cutoff).zip(probs).collect();
    ProbabilityTable::new(m, n_cutoff, entries)
}

/// Number of patterns `(n_cutoff+1)^m`, or a resource error above `budget`.
pub fn pattern_budget_check(m: usize, n_cutoff: u16, budget: u64) -> Result<u64> {
    match (n_cutoff as u64 + 1).checked_pow(m as u32) {
        Some(c) if c <= budget => Ok(c),
        _ => Err(GbsError::ResourceLimit(format!(
            "(n_cutoff+1)^m = {}^{m} patterns exceeds the budget of {budget}",
            n_cutoff as u64 + 1
        ))),
    }
}

/// Balanced loss applied to an ideal table by binomial thinning of each mode.
///
/// The thinning factorizes over modes, so it is applied one mode axis at a
/// time; patterns above the cutoff are not represented and cannot feed mass
/// down.
pub fn lossy_probabilities(ideal: &ProbabilityTable, eta_t: f64) -> Result<ProbabilityTable> {
    check_unit_interval("eta_t", eta_t)?;
    let mut dense = ideal.dense()?;
    let base = ideal.n_cutoff as usize + 1;
    let kernel: Vec<Vec<f64>> = (0..base)
        .map(|from| {
            (0..base)
                .map(|to| {
                    if to > from {
                        0.0
                    } else {
                        binomial(from as u64, to as u64) * eta_t.powi(to as i32) * (1.0 - eta_t).powi((from - to) as i32)
                    }
                })
                .collect()
        })
        .collect();
    let m = ideal.m;
    for axis in 0..m {
        let stride = base.pow((m - 1 - axis) as u32);
        let mut next = vec![0.0; dense.len()];
        for (idx, &p) in dense.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let digit = (idx / stride) % base;
            let root = idx - digit * stride;
            for (to, w) in kernel[digit].iter().enumerate().take(digit + 1) {
                next[root + to * stride] += p * w;
            }
        }
        dense = next;
    }
    Ok(ideal.from_dense(dense))
}

/// Convolution of the actual-part table with the K virtual-part tables,
/// restricted to the cutoff, with the zero pattern removed and the result
/// renormalized.
pub fn distinguishable_probabilities(
    actual: &ProbabilityTable,
    virtuals: &[ProbabilityTable],
    n_cutoff: u16,
) -> Result<ProbabilityTable> {
    let m = actual.m;
    for t in virtuals.iter().chain(std::iter::once(actual)) {
        if t.m != m || t.n_cutoff != n_cutoff {
            return Err(GbsError::InvalidInput("all tables must share m and n_cutoff".into()));
        }
    }
    let mut acc: BTreeMap<OutputPattern, f64> = actual.entries.clone();
    for v in virtuals {
        let support: Vec<(&OutputPattern, f64)> = v.entries.iter().filter(|(_, &p)| p > 0.0).map(|(s, &p)| (s, p)).collect();
        let mut next = BTreeMap::new();
        for (a, &pa) in acc.iter().filter(|(_, &p)| p > 0.0) {
            for (b, pb) in &support {
                let sum: Option<Vec<u16>> = a
                    .0
                    .iter()
                    .zip(&b.0)
                    .map(|(&x, &y)| Some(x + y).filter(|&c| c <= n_cutoff))
                    .collect();
                if let Some(s) = sum {
                    *next.entry(OutputPattern(s)).or_insert(0.0) += pa * pb;
                }
            }
        }
        acc = next;
    }
    let mut table = ProbabilityTable::new(m, n_cutoff, acc)?;
    table = table.exclude_zero().normalize()?;
    Ok(table)
}

/// Restriction to patterns with every count ≤ `n_max`, renormalized.
pub fn marginal_probabilities(table: &ProbabilityTable, n_max: u16) -> Result<ProbabilityTable> {
    if n_max >= table.n_cutoff {
        return Err(GbsError::InvalidParameter(format!(
            "n_max = {n_max} must be below n_cutoff = {}",
            table.n_cutoff
        )));
    }
    let entries: BTreeMap<_, _> =
        table.entries.iter().filter(|(s, _)| s.max_count() <= n_max).map(|(s, &p)| (s.clone(), p)).collect();
    let restricted = ProbabilityTable {
        entries,
        n_cutoff: n_max,
        ..table.clone()
    };
    restricted.normalize()
}

/// Output Hilbert-space dimension including the zero state:
/// `(n_cutoff+1)^m`, or `Π (m_sub,i · n_cutoff + 1)` under a binning partition.
pub fn hilbert_dim(m: usize, n_cutoff: u16, partition: Option<&BinningPartition>) -> Result<u128> {
    let c = n_cutoff as u128;
    match partition {
        None => Ok((c + 1).pow(m as u32)),
        Some(p) => {
            if p.m() != m {
                return Err(GbsError::InvalidInput("partition does not cover the modes".into()));
            }
            Ok(p.subsets().iter().map(|s| s.len() as u128 * c + 1).product())
        }
    }
}

/// Nonzero output patterns in the truncated space: `(n_cutoff+1)^m − 1`
/// in general, and `((n_cutoff+1)^m − 1)/2` for the lossless count.
pub fn output_pattern_counts(m: usize, n_cutoff: u16) -> (u128, u128) {
    let d = (n_cutoff as u128 + 1).pow(m as u32);
    (d - 1, (d - 1) / 2)
}
