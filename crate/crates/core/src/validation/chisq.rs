use std::io::Write;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::kmeans::{embed, ClusterModel};
use crate::error::{GbsError, Result};
use crate::exec::Exec;
use crate::pattern::OutputPattern;
use crate::rng::{derive_seed, RngStream};

/// Denominator of the expected cluster counts `E_ij = N_i N_j / D`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    /// `D = Σ_i N_i`, the contingency-table grand total.
    #[default]
    GrandTotal,
    /// `D = k`, the cluster count.
    ClusterCount,
}

/// One χ² evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub chi2: f64,
    /// Fraction of test samples outside every cluster radius.
    pub abandoned_fraction: f64,
    /// No test sample was accepted.
    pub degenerate: bool,
}

/// Repeated χ² values from the sample-box strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareRun {
    pub chi2_values: Vec<f64>,
    pub repetitions: usize,
    pub draw_size: usize,
    pub abandoned_fractions: Vec<f64>,
}

impl ChiSquareRun {
    /// `repetition,chi2,abandoned_fraction`, one row per repetition.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "repetition,chi2,abandoned_fraction")?;
        for (i, (c, a)) in self.chi2_values.iter().zip(&self.abandoned_fractions).enumerate() {
            writeln!(w, "{i},{c},{a}")?;
        }
        Ok(())
    }

    pub fn mean_abandoned(&self) -> f64 {
        if self.abandoned_fractions.is_empty() {
            return 0.0;
        }
        self.abandoned_fractions.iter().sum::<f64>() / self.abandoned_fractions.len() as f64
    }
}

/// χ² of the two-row contingency table of cluster counts.
pub fn chi_square_from_counts(bona: &[usize], test: &[usize], rule: Expectation) -> Result<f64> {
    if bona.len() != test.len() {
        return Err(GbsError::InvalidInput("count vectors differ in length".into()));
    }
    let k = bona.len();
    let n1: usize = bona.iter().sum();
    let n2: usize = test.iter().sum();
    let total = (n1 + n2) as f64;
    if total == 0.0 {
        return Err(GbsError::InvalidModel("every cluster is empty".into()));
    }
    let denom = match rule {
        Expectation::GrandTotal => total,
        Expectation::ClusterCount => k as f64,
    };
    let mut chi2 = 0.0;
    for (&a, &b) in bona.iter().zip(test) {
        let ni = (a + b) as f64;
        if ni == 0.0 {
            continue;
        }
        for (nij, nj) in [(a as f64, n1 as f64), (b as f64, n2 as f64)] {
            let e = ni * nj / denom;
            if e > 0.0 {
                chi2 += (nij - e) * (nij - e) / e;
            }
        }
    }
    Ok(chi2)
}

/// Bona fide samples go to their nearest centroid; test samples only when
/// inside that cluster's radius, otherwise they are abandoned.
pub fn chi_square_test(
    model: &ClusterModel,
    bona: &[OutputPattern],
    test: &[OutputPattern],
    rule: Expectation,
) -> Result<ChiSquare> {
    if bona.is_empty() || test.is_empty() {
        return Err(GbsError::InvalidInput("both draws must be nonempty".into()));
    }
    let bona_idx: Vec<usize> = bona.iter().map(|s| model.nearest(&embed(s)).0).collect();
    let test_idx: Vec<Option<usize>> = test.iter().map(|s| model.accept(&embed(s))).collect();
    counts_chi2(model.k, bona_idx.iter().map(|&i| Some(i)), test_idx.iter().copied(), test.len(), rule)
}

fn counts_chi2(
    k: usize,
    bona: impl Iterator<Item = Option<usize>>,
    test: impl Iterator<Item = Option<usize>>,
    n_test: usize,
    rule: Expectation,
) -> Result<ChiSquare> {
    let mut b = vec![0usize; k];
    let mut t = vec![0usize; k];
    for i in bona.flatten() {
        b[i] += 1;
    }
    let mut accepted = 0;
    for i in test.flatten() {
        t[i] += 1;
        accepted += 1;
    }
    let chi2 = chi_square_from_counts(&b, &t, rule)?;
    Ok(ChiSquare {
        chi2,
        abandoned_fraction: 1.0 - accepted as f64 / n_test as f64,
        degenerate: accepted == 0,
    })
}

/// Sample-box protocol settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSettings {
    pub repetitions: usize,
    pub draw_size: usize,
    pub seed: u64,
    pub expectation: Expectation,
}

/// Repeats the χ² test on random draws from two fixed sample boxes.
///
/// Each repetition draws `draw_size` distinct samples from each box and puts
/// them back afterwards. Cluster assignments of every box sample are computed
/// once, so a repetition only counts.
pub fn sample_box_run(
    model: &ClusterModel,
    bona_box: &[OutputPattern],
    test_box: &[OutputPattern],
    settings: BoxSettings,
    exec: Exec,
) -> Result<ChiSquareRun> {
    let BoxSettings { repetitions, draw_size, seed, expectation } = settings;
    if draw_size == 0 || draw_size > bona_box.len() || draw_size > test_box.len() {
        return Err(GbsError::InvalidParameter(format!(
            "draw size {draw_size} must be positive and fit both boxes ({} and {})",
            bona_box.len(),
            test_box.len()
        )));
    }
    let bona_idx = exec.map(bona_box.len(), |i| model.nearest(&embed(&bona_box[i])).0);
    let test_idx = exec.map(test_box.len(), |i| model.accept(&embed(&test_box[i])));
    let base = derive_seed(seed, "sample-box");
    let results = exec.try_map(repetitions, |r| {
        let mut rng = RngStream::new(base, r as u64).rng();
        let pick_b = index::sample(&mut rng, bona_box.len(), draw_size);
        let pick_t = index::sample(&mut rng, test_box.len(), draw_size);
        counts_chi2(
            model.k,
            pick_b.iter().map(|i| Some(bona_idx[i])),
            pick_t.iter().map(|i| test_idx[i]),
            draw_size,
            expectation,
        )
    })?;
    Ok(ChiSquareRun {
        chi2_values: results.iter().map(|c| c.chi2).collect(),
        repetitions,
        draw_size,
        abandoned_fractions: results.iter().map(|c| c.abandoned_fraction).collect(),
    })
}
