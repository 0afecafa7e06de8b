use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{GbsError, Result};
use crate::exec::{tree_sum, Exec};
use crate::pattern::OutputPattern;
use crate::samplers::SampleSet;

pub const MAX_ORDER: usize = 8;

/// All set partitions of `{0..t}` as lists of blocks, in restricted-growth
/// order: `t = 3` gives `{012}, {01}{2}, {02}{1}, {0}{12}, {0}{1}{2}`.
pub fn set_partitions(t: usize) -> Result<Vec<Vec<Vec<usize>>>> {
    if !(1..=MAX_ORDER).contains(&t) {
        return Err(GbsError::InvalidParameter(format!("order {t} must lie in 1..={MAX_ORDER}")));
    }
    let mut out = Vec::new();
    let mut rgs = vec![0usize; t];
    grow(&mut rgs, 1, 0, &mut out);
    Ok(out)
}

fn grow(rgs: &mut [usize], i: usize, max: usize, out: &mut Vec<Vec<Vec<usize>>>) {
    if i == rgs.len() {
        let mut blocks = vec![Vec::new(); max + 1];
        for (e, &b) in rgs.iter().enumerate() {
            blocks[b].push(e);
        }
        out.push(blocks);
        return;
    }
    for b in 0..=max + 1 {
        rgs[i] = b;
        grow(rgs, i + 1, max.max(b), out);
    }
}

/// Cumulant weights `(|π|-1)! (-1)^{|π|-1}` paired with the block bitmasks.
fn cumulant_terms(t: usize) -> Result<Vec<(f64, Vec<usize>)>> {
    Ok(set_partitions(t)?
        .into_iter()
        .map(|p| {
            let b = p.len();
            let fact: f64 = (1..b).map(|k| k as f64).product();
            let sign = if b % 2 == 1 { 1.0 } else { -1.0 };
            let masks = p.iter().map(|block| block.iter().fold(0usize, |m, &e| m | 1 << e)).collect();
            (sign * fact, masks)
        })
        .collect())
}

/// Empirical `⟨Π_{i∈S} n_{modes[i]}⟩` for every subset mask `S`.
fn subset_moments(samples: &[OutputPattern], modes: &[usize]) -> Vec<f64> {
    let t = modes.len();
    let mut sums = vec![0.0; 1 << t];
    for s in samples {
        let counts: Vec<f64> = modes.iter().map(|&o| s.0[o] as f64).collect();
        for (mask, acc) in sums.iter_mut().enumerate() {
            let mut prod = 1.0;
            for (i, c) in counts.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    prod *= c;
                }
            }
            *acc += prod;
        }
    }
    let n = samples.len() as f64;
    sums.into_iter().map(|s| s / n).collect()
}

fn check_modes(samples: &[OutputPattern], modes: &[usize]) -> Result<()> {
    if samples.is_empty() {
        return Err(GbsError::InvalidInput("correlator of an empty sample".into()));
    }
    let m = samples[0].m();
    for (i, &o) in modes.iter().enumerate() {
        if o >= m {
            return Err(GbsError::InvalidInput(format!("mode {o} out of range for {m} modes")));
        }
        if modes[..i].contains(&o) {
            return Err(GbsError::InvalidInput(format!("mode {o} repeated")));
        }
    }
    Ok(())
}

fn kappa(terms: &[(f64, Vec<usize>)], moments: &[f64]) -> f64 {
    terms.iter().map(|(w, masks)| w * masks.iter().map(|&b| moments[b]).product::<f64>()).sum()
}

/// Joint cumulant of the photon numbers of distinct 0-based `modes`,
/// built from empirical moments.
pub fn correlator(samples: &[OutputPattern], modes: &[usize]) -> Result<f64> {
    check_modes(samples, modes)?;
    let terms = cumulant_terms(modes.len())?;
    Ok(kappa(&terms, &subset_moments(samples, modes)))
}

/// One mode combination of a [`CorrelationReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPoint {
    /// 0-based output modes.
    pub modes: Vec<usize>,
    pub kappa_noise: f64,
    pub kappa_ideal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub t: usize,
    pub points: Vec<CorrelationPoint>,
    /// `Σ κ_noise / Σ κ_ideal`.
    pub gamma: f64,
}

impl CorrelationReport {
    /// `o1..ot,kappa_noise,kappa_ideal` with 1-based modes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let cols: Vec<String> = (1..=self.t).map(|i| format!("o{i}")).collect();
        writeln!(w, "{},kappa_noise,kappa_ideal", cols.join(","))?;
        for p in &self.points {
            let modes: Vec<String> = p.modes.iter().map(|o| (o + 1).to_string()).collect();
            writeln!(w, "{},{},{}", modes.join(","), p.kappa_noise, p.kappa_ideal)?;
        }
        Ok(())
    }
}

/// `t`-subsets of `0..m` in lexicographic order.
pub fn combinations(m: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if t == 0 || t > m {
        return out;
    }
    let mut c: Vec<usize> = (0..t).collect();
    loop {
        out.push(c.clone());
        let Some(i) = (0..t).rev().find(|&i| c[i] < m - t + i) else { break };
        c[i] += 1;
        for j in i + 1..t {
            c[j] = c[j - 1] + 1;
        }
    }
    out
}

/// Order-`t` correlators of both sets over every mode combination and the
/// ratio of their sums.
pub fn gamma_deviation(noise: &SampleSet, ideal: &SampleSet, t: usize, exec: Exec) -> Result<CorrelationReport> {
    if noise.m != ideal.m {
        return Err(GbsError::InvalidInput(format!("sets have {} and {} modes", noise.m, ideal.m)));
    }
    if noise.is_empty() || ideal.is_empty() {
        return Err(GbsError::InvalidInput("correlators need nonempty sample sets".into()));
    }
    let terms = cumulant_terms(t)?;
    if t > noise.m {
        return Err(GbsError::InvalidParameter(format!("order {t} exceeds {} modes", noise.m)));
    }
    let combos = combinations(noise.m, t);
    let points = exec.map(combos.len(), |i| {
        let modes = &combos[i];
        CorrelationPoint {
            modes: modes.clone(),
            kappa_noise: kappa(&terms, &subset_moments(&noise.patterns, modes)),
            kappa_ideal: kappa(&terms, &subset_moments(&ideal.patterns, modes)),
        }
    });
    let num = tree_sum(&points.iter().map(|p| p.kappa_noise).collect::<Vec<_>>());
    let den = tree_sum(&points.iter().map(|p| p.kappa_ideal).collect::<Vec<_>>());
    if den == 0.0 || !den.is_finite() {
        return Err(GbsError::UndefinedRatio(format!("order-{t} ideal correlators sum to {den}")));
    }
    Ok(CorrelationReport { t, points, gamma: num / den })
}
