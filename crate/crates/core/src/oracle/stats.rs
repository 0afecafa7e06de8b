use serde::{Deserialize, Serialize};

use super::ProbabilityTable;
use crate::error::{GbsError, Result};

/// Shape statistics of a distribution over nonzero patterns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureStats {
    pub k: usize,
    pub top_k_mass: f64,
    /// Probability-weighted L2 distance to the most probable pattern.
    pub mean_l2: f64,
    pub short_tail_mass: f64,
    pub long_tail_mass: f64,
    pub short_thresh: f64,
    pub long_thresh: f64,
}

/// Drops the zero pattern, renormalizes, then measures how concentrated the
/// distribution is around its most probable pattern.
///
/// `short_tail_mass` is the mass with `L2 ≤ short_thresh`, `long_tail_mass`
/// the mass with `L2 ≥ long_thresh`.
pub fn structure_stats(table: &ProbabilityTable, k: usize, short_thresh: f64, long_thresh: f64) -> Result<StructureStats> {
    let dist = table.exclude_zero();
    if dist.is_empty() || !(dist.total() > 0.0) {
        return Err(GbsError::InvalidInput("structure statistics need a nonempty table".into()));
    }
    let dist = dist.normalize()?;
    let sorted = dist.sorted_desc();
    let top_k_mass = sorted.iter().take(k).map(|(_, p)| p).sum::<f64>();
    let s1 = sorted[0].0;
    let eps = 1e-12;
    let (mut mean_l2, mut short, mut long) = (0.0, 0.0, 0.0);
    for (s, p) in &sorted {
        let d = s.l2_distance(s1);
        mean_l2 += d * p;
        if d <= short_thresh + eps {
            short += p;
        }
        if d >= long_thresh - eps {
            long += p;
        }
    }
    Ok(StructureStats {
        k,
        top_k_mass: top_k_mass.min(1.0),
        mean_l2,
        short_tail_mass: short,
        long_tail_mass: long,
        short_thresh,
        long_thresh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::OutputPattern;
    use std::collections::BTreeMap;

    #[test]
    fn uniform_top_ten() {
        let entries: BTreeMap<_, _> = OutputPattern::enumerate(2, 10).filter(|s| !s.is_zero()).take(100).map(|s| (s, 0.01)).collect();
        assert_eq!(entries.len(), 100);
        let t = ProbabilityTable::new(2, 10, entries).unwrap();
        let st = structure_stats(&t, 10, 0.0, 3.0).unwrap();
        assert!((st.top_k_mass - 0.1).abs() < 1e-12);
    }

    #[test]
    fn point_mass_has_zero_spread() {
        let mut e = BTreeMap::new();
        e.insert(OutputPattern(vec![0, 0]), 0.5);
        e.insert(OutputPattern(vec![2, 0]), 0.5);
        let st = structure_stats(&ProbabilityTable::new(2, 2, e).unwrap(), 10, 0.0, 3.0).unwrap();
        assert_eq!(st.mean_l2, 0.0);
        assert_eq!(st.short_tail_mass, 1.0);
        assert_eq!(st.long_tail_mass, 0.0);
    }

    #[test]
    fn ties_break_lexicographically() {
        let mut e = BTreeMap::new();
        e.insert(OutputPattern(vec![2, 0]), 0.5);
        e.insert(OutputPattern(vec![0, 1]), 0.5);
        let st = structure_stats(&ProbabilityTable::new(2, 2, e).unwrap(), 1, 0.0, 2.0).unwrap();
        // s1 = (0,1); the other pattern sits at distance √5.
        assert!((st.mean_l2 - 0.5 * 5f64.sqrt()).abs() < 1e-12);
        assert!((st.long_tail_mass - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_table_is_an_error() {
        let mut e = BTreeMap::new();
        e.insert(OutputPattern(vec![0]), 1.0);
        let t = ProbabilityTable::new(1, 2, e).unwrap();
        assert!(matches!(structure_stats(&t, 10, 0.0, 3.0), Err(GbsError::InvalidInput(_))));
    }
}
