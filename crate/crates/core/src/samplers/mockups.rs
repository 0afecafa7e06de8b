use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::chain::{ChainRuleSampler, MAX_REDRAWS};
use super::set::{ModelTag, SampleSet};
use crate::error::{GbsError, Result};
use crate::exec::Exec;
use crate::gaussian::{apply_interferometer, xp_to_q, Interferometer, SqueezingSpec, XpCovariance};
use crate::linalg::CMatrix;
use crate::matchpoly::permanent_repeated;
use crate::oracle::{pattern_budget_check, EnumerationOptions, ProbabilityTable};
use crate::pattern::OutputPattern;
use crate::rng::RngStream;

fn check_modes(spec: &SqueezingSpec, itf: &Interferometer) -> Result<()> {
    spec.validate()?;
    if spec.m != itf.m() {
        return Err(GbsError::InvalidInput(format!("spec has {} modes, interferometer has {}", spec.m, itf.m())));
    }
    Ok(())
}

/// Raw output probabilities of thermal inputs with the same mean photon
/// number per squeezed mode, `perm(D_s) / (Π s_i! Π (1+⟨n_i⟩))` with
/// `D = T diag(⟨n⟩/(1+⟨n⟩)) T†`.
pub fn thermal_probabilities(
    spec: &SqueezingSpec,
    itf: &Interferometer,
    n_cutoff: u16,
    opts: EnumerationOptions,
) -> Result<ProbabilityTable> {
    check_modes(spec, itf)?;
    let m = spec.m;
    let count = pattern_budget_check(m, n_cutoff, opts.budget)?;
    let n = spec.mean_photons_per_mode();
    let ratio = n / (1.0 + n);
    let diag = CMatrix::from_fn(m, m, |i, j| {
        if i == j && i < spec.k {
            Complex64::new(ratio, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let t = itf.matrix();
    let d = t * diag * t.adjoint();
    let log_norm = -(spec.k as f64) * (1.0 + n).ln();
    let probs = opts.exec.map(count as usize, |idx| {
        let s = OutputPattern::from_index(idx as u64, m, n_cutoff);
        let perm = permanent_repeated(&d, s.counts()).re.max(0.0);
        let log_fact: f64 = s.0.iter().map(|&k| statrs::function::factorial::ln_factorial(k as u64)).sum();
        if perm == 0.0 {
            0.0
        } else {
            (perm.ln() + log_norm - log_fact).exp()
        }
    });
    let entries: BTreeMap<_, _> = OutputPattern::enumerate(m, n_cutoff).zip(probs).collect();
    ProbabilityTable::new(m, n_cutoff, entries)
}

/// Thermal-input mockup: enumerate, drop the zero pattern, draw.
pub fn sample_thermal(
    spec: &SqueezingSpec,
    itf: &Interferometer,
    n_samples: usize,
    n_cutoff: u16,
    seed: u64,
    opts: EnumerationOptions,
) -> Result<SampleSet> {
    let table = thermal_probabilities(spec, itf, n_cutoff, opts)?.exclude_zero();
    if !(table.total() > 0.0) {
        return Err(GbsError::SamplingDegeneracy("thermal input carries no photons".into()));
    }
    let mut set = categorical_sample(&table.normalize()?, n_samples, seed, opts.exec)?;
    set.model = ModelTag::Thermal;
    set.spec = Some(*spec);
    Ok(set)
}

/// Output coherent amplitudes `β_i = Σ_j T_ji α_j` with `α_j = √⟨n⟩ e^{iθ}`
/// on the squeezed input modes.
pub fn coherent_amplitudes(spec: &SqueezingSpec, itf: &Interferometer, theta: f64) -> Result<Vec<Complex64>> {
    check_modes(spec, itf)?;
    let a = Complex64::from_polar(spec.mean_photons_per_mode().sqrt(), theta);
    let t = itf.matrix();
    Ok((0..spec.m).map(|i| (0..spec.k).map(|j| t[(j, i)] * a).sum()).collect())
}

/// Raw output probabilities of the coherent mockup: a product of Poisson
/// laws with means `|β_i|²`.
pub fn coherent_probabilities(
    spec: &SqueezingSpec,
    itf: &Interferometer,
    theta: f64,
    n_cutoff: u16,
    opts: EnumerationOptions,
) -> Result<ProbabilityTable> {
    let means: Vec<f64> = coherent_amplitudes(spec, itf, theta)?.iter().map(|b| b.norm_sqr()).collect();
    let count = pattern_budget_check(spec.m, n_cutoff, opts.budget)?;
    let single: Vec<Vec<f64>> = means
        .iter()
        .map(|&mu| {
            (0..=n_cutoff)
                .map(|k| {
                    let log_fact = statrs::function::factorial::ln_factorial(k as u64);
                    if mu == 0.0 {
                        if k == 0 { 1.0 } else { 0.0 }
                    } else {
                        (k as f64 * mu.ln() - mu - log_fact).exp()
                    }
                })
                .collect()
        })
        .collect();
    let probs = opts.exec.map(count as usize, |idx| {
        let s = OutputPattern::from_index(idx as u64, spec.m, n_cutoff);
        s.0.iter().zip(&single).map(|(&k, p)| p[k as usize]).product::<f64>()
    });
    let entries: BTreeMap<_, _> = OutputPattern::enumerate(spec.m, n_cutoff).zip(probs).collect();
    ProbabilityTable::new(spec.m, n_cutoff, entries)
}

/// Coherent-input mockup: independent Poisson counts per output mode.
pub fn sample_coherent(
    spec: &SqueezingSpec,
    itf: &Interferometer,
    theta: f64,
    n_samples: usize,
    n_cutoff: u16,
    seed: u64,
    exec: Exec,
) -> Result<SampleSet> {
    let beta = coherent_amplitudes(spec, itf, theta)?;
    let laws: Vec<Option<Poisson<f64>>> = beta
        .iter()
        .map(|b| {
            let mean = b.norm_sqr();
            (mean > 0.0).then(|| Poisson::new(mean).map_err(|e| GbsError::InvalidParameter(e.to_string()))).transpose()
        })
        .collect::<Result<_>>()?;
    if laws.iter().all(Option::is_none) {
        return Err(GbsError::SamplingDegeneracy("coherent input has zero amplitude".into()));
    }
    let patterns = exec.try_map(n_samples, |i| {
        let mut rng = RngStream::new(seed, i as u64).rng();
        for _ in 0..MAX_REDRAWS {
            let s = OutputPattern(laws.iter().map(|l| l.as_ref().map_or(0.0, |p| p.sample(&mut rng)) as u16).collect());
            if !s.is_zero() && s.max_count() <= n_cutoff {
                return Ok(s);
            }
        }
        Err(GbsError::SamplingDegeneracy("no admissible coherent pattern".into()))
    })?;
    Ok(SampleSet {
        model: ModelTag::Coherent { theta },
        spec: Some(*spec),
        seed,
        m: spec.m,
        n_cutoff,
        partition: None,
        patterns,
    })
}

/// Squashed-input covariance: the x-quadrature of each squeezed input mode
/// carries `1 + 4⟨n⟩`, everything else is vacuum.
pub fn squashed_covariance(spec: &SqueezingSpec) -> Result<XpCovariance> {
    spec.validate()?;
    let m = spec.m;
    let x = 1.0 + 4.0 * spec.mean_photons_per_mode();
    XpCovariance::new(DMatrix::from_fn(2 * m, 2 * m, |i, j| match (i == j, i < spec.k) {
        (true, true) => x,
        (true, false) => 1.0,
        _ => 0.0,
    }))
}

/// Squashed-input mockup, sampled with the chain rule.
pub fn sample_squashed(
    spec: &SqueezingSpec,
    itf: &Interferometer,
    n_samples: usize,
    n_cutoff: u16,
    seed: u64,
    exec: Exec,
) -> Result<SampleSet> {
    check_modes(spec, itf)?;
    let state = apply_interferometer(&xp_to_q(&squashed_covariance(spec)?)?, itf)?;
    let sampler = ChainRuleSampler::new(&state, n_cutoff)?;
    let patterns = exec.try_map(n_samples, |i| sampler.draw(&mut RngStream::new(seed, i as u64).rng()))?;
    Ok(SampleSet { model: ModelTag::Squashed, spec: Some(*spec), seed, m: spec.m, n_cutoff, partition: None, patterns })
}

/// Inverse-CDF draws from a normalized, zero-excluded table.
pub fn categorical_sample(table: &ProbabilityTable, n_samples: usize, seed: u64, exec: Exec) -> Result<SampleSet> {
    if !table.normalized || !table.zero_excluded {
        return Err(GbsError::InvalidInput("categorical sampling needs a normalized, zero-excluded table".into()));
    }
    let patterns: Vec<&OutputPattern> = table.entries.keys().collect();
    let mut cdf = Vec::with_capacity(patterns.len());
    let mut acc = 0.0;
    for p in table.entries.values() {
        acc += p;
        cdf.push(acc);
    }
    if patterns.is_empty() || !(acc > 0.0) {
        return Err(GbsError::InvalidInput("table has no mass".into()));
    }
    let last = cdf.len() - 1;
    let draws = exec.map(n_samples, |i| {
        let u = RngStream::new(seed, i as u64).rng().random::<f64>() * acc;
        let idx = cdf.partition_point(|&c| c <= u).min(last);
        patterns[idx].clone()
    });
    Ok(SampleSet {
        model: ModelTag::Table,
        spec: None,
        seed,
        m: table.m,
        n_cutoff: table.n_cutoff,
        partition: None,
        patterns: draws,
    })
}
