use rand::Rng;
use serde::{Deserialize, Serialize};

use super::chain::{pick, ChainRuleSampler, MAX_REDRAWS};
use super::set::{ModelTag, SampleSet};
use crate::error::{GbsError, Result};
use crate::exec::Exec;
use crate::gaussian::{
    apply_interferometer, build_input_covariance, check_unit_interval, distinguishable_covariances, lossy_covariance,
    xp_to_q, GaussianState, Interferometer, SqueezingSpec, XpCovariance,
};
use crate::matchpoly::ProbabilityKernel;
use crate::pattern::OutputPattern;
use crate::rng::RngStream;

/// How lossy samples are produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMethod {
    /// Chain rule on the mixed lossy output state.
    #[default]
    Direct,
    /// Ideal draw followed by independent photon survival with probability η.
    Thinning,
}

/// How the virtual (distinguishable) parts are sampled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VirtualMethod {
    #[default]
    ChainRule,
    /// Photon number of the single squeezed input, then a multinomial split
    /// over outputs with weights `|T_ji|²`.
    Multinomial,
}

fn check_modes(spec: &SqueezingSpec, itf: &Interferometer) -> Result<()> {
    spec.validate()?;
    if spec.m != itf.m() {
        return Err(GbsError::InvalidInput(format!(
            "spec has {} modes, interferometer has {}",
            spec.m,
            itf.m()
        )));
    }
    Ok(())
}

fn through(v: &XpCovariance, itf: &Interferometer) -> Result<GaussianState> {
    apply_interferometer(&xp_to_q(v)?, itf)
}

/// Output state of ideal GBS.
pub fn ideal_state(spec: &SqueezingSpec, itf: &Interferometer) -> Result<GaussianState> {
    check_modes(spec, itf)?;
    through(&build_input_covariance(spec)?, itf)
}

/// Output state with balanced transmission `eta_t`.
pub fn lossy_state(spec: &SqueezingSpec, itf: &Interferometer, eta_t: f64) -> Result<GaussianState> {
    check_modes(spec, itf)?;
    through(&lossy_covariance(&build_input_covariance(spec)?, eta_t)?, itf)
}

/// Actual-part output state and the K virtual-part output states.
pub fn distinguishable_states(
    spec: &SqueezingSpec,
    itf: &Interferometer,
    eta_ind: f64,
) -> Result<(GaussianState, Vec<GaussianState>)> {
    check_modes(spec, itf)?;
    let (actual, virtuals) = distinguishable_covariances(spec, eta_ind)?;
    let virtuals = virtuals.iter().map(|v| through(v, itf)).collect::<Result<Vec<_>>>()?;
    Ok((through(&actual, itf)?, virtuals))
}

fn collect(
    model: ModelTag,
    spec: &SqueezingSpec,
    n_cutoff: u16,
    seed: u64,
    patterns: Vec<OutputPattern>,
) -> SampleSet {
    SampleSet { model, spec: Some(*spec), seed, m: spec.m, n_cutoff, partition: None, patterns }
}

/// Chain-rule samples of ideal GBS.
pub fn sample_ideal(
    spec: &SqueezingSpec,
    itf: &Interferometer,
    n_samples: usize,
    n_cutoff: u16,
    seed: u64,
    exec: Exec,
) -> Result<SampleSet> {
    let sampler = ChainRuleSampler::new(&ideal_state(spec, itf)?, n_cutoff)?;
    let patterns = exec.try_map(n_samples, |i| sampler.draw(&mut RngStream::new(seed, i as u64).rng()))?;
    Ok(collect(ModelTag::Ideal, spec, n_cutoff, seed, patterns))
}

/// Samples of GBS with balanced loss.
#[allow(clippy::too_many_arguments)]
pub fn sample_lossy(
    spec: &SqueezingSpec,
    itf: &Interferometer,
    eta_t: f64,
    n_samples: usize,
    n_cutoff: u16,
    seed: u64,
    method: LossMethod,
    exec: Exec,
) -> Result<SampleSet> {
    check_unit_interval("eta_t", eta_t)?;
    let patterns = match method {
        LossMethod::Direct => {
            let sampler = ChainRuleSampler::new(&lossy_state(spec, itf, eta_t)?, n_cutoff)?;
            exec.try_map(n_samples, |i| sampler.draw(&mut RngStream::new(seed, i as u64).rng()))?
        }
        LossMethod::Thinning => {
            let sampler = ChainRuleSampler::new(&ideal_state(spec, itf)?, n_cutoff)?;
            if eta_t == 0.0 {
                return Err(GbsError::SamplingDegeneracy("eta_t = 0 only produces the zero pattern".into()));
            }
            exec.try_map(n_samples, |i| {
                let mut rng = RngStream::new(seed, i as u64).rng();
                for _ in 0..MAX_REDRAWS {
                    let s = thin(&sampler.draw(&mut rng)?, eta_t, &mut rng);
                    if !s.is_zero() {
                        return Ok(s);
                    }
                }
                Err(GbsError::SamplingDegeneracy("all thinned patterns were zero".into()))
            })?
        }
    };
    Ok(collect(ModelTag::Loss { eta_t, method }, spec, n_cutoff, seed, patterns))
}

fn thin<R: Rng + ?Sized>(s: &OutputPattern, eta: f64, rng: &mut R) -> OutputPattern {
    OutputPattern(s.0.iter().map(|&n| (0..n).filter(|_| rng.random::<f64>() < eta).count() as u16).collect())
}

/// Draws for one virtual part under the multinomial shortcut.
struct MultinomialPart {
    /// Photon-number weights for `N = 0..=m·n_cutoff`, plus the leftover mass
    /// as a final entry meaning "too many photons".
    weights: Vec<f64>,
    /// Output-mode weights `|T_ji|²` for this input mode.
    spread: Vec<f64>,
}

impl MultinomialPart {
    fn new(spec: &SqueezingSpec, eta_ind: f64, input: usize, itf: &Interferometer, n_cutoff: u16) -> Result<Self> {
        let single = SqueezingSpec::new(1, 1, spec.r)?;
        let (_, v) = distinguishable_covariances(&single, eta_ind)?;
        let kernel = ProbabilityKernel::new(&xp_to_q(&v[0])?)?;
        let n_max = spec.m as u16 * n_cutoff;
        let mut weights = (0..=n_max).map(|n| kernel.probability(&[n])).collect::<Result<Vec<_>>>()?;
        let rest = (1.0 - weights.iter().sum::<f64>()).max(0.0);
        weights.push(rest);
        let t = itf.matrix();
        let spread = (0..spec.m).map(|j| t[(j, input)].norm_sqr()).collect();
        Ok(Self { weights, spread })
    }

    /// Adds this part's photons to `acc`; false when the part overflows.
    fn add<R: Rng + ?Sized>(&self, acc: &mut [u16], rng: &mut R) -> bool {
        let total: f64 = self.weights.iter().sum();
        let n = pick(&self.weights, total, rng);
        if n == self.weights.len() - 1 {
            return false;
        }
        let spread_total: f64 = self.spread.iter().sum();
        for _ in 0..n {
            acc[pick(&self.spread, spread_total, rng)] += 1;
        }
        true
    }
}

enum VirtualPart {
    Chain(ChainRuleSampler),
    Multinomial(MultinomialPart),
}

/// Samples of GBS with partial distinguishability: the actual part and the
/// K virtual parts are drawn independently and summed, with redraws when the
/// sum is zero or above the cutoff.
#[allow(clippy::too_many_arguments)]
pub fn sample_distinguishable(
    spec: &SqueezingSpec,
    itf: &Interferometer,
    eta_ind: f64,
    n_samples: usize,
    n_cutoff: u16,
    seed: u64,
    virtual_method: VirtualMethod,
    exec: Exec,
) -> Result<SampleSet> {
    let (actual, virtuals) = distinguishable_states(spec, itf, eta_ind)?;
    let actual = ChainRuleSampler::new(&actual, n_cutoff)?;
    let parts: Vec<VirtualPart> = match virtual_method {
        VirtualMethod::ChainRule => virtuals
            .iter()
            .map(|v| ChainRuleSampler::new(v, n_cutoff).map(VirtualPart::Chain))
            .collect::<Result<_>>()?,
        VirtualMethod::Multinomial => (0..spec.k)
            .map(|i| MultinomialPart::new(spec, eta_ind, i, itf, n_cutoff).map(VirtualPart::Multinomial))
            .collect::<Result<_>>()?,
    };
    let parts: Vec<VirtualPart> = parts
        .into_iter()
        .filter(|p| !matches!(p, VirtualPart::Chain(c) if c.is_vacuum()))
        .collect();
    if actual.is_vacuum() && parts.is_empty() {
        return Err(GbsError::SamplingDegeneracy("every part is vacuum".into()));
    }
    let m = spec.m;
    let patterns = exec.try_map(n_samples, |i| {
        let mut rng = RngStream::new(seed, i as u64).rng();
        'attempt: for _ in 0..MAX_REDRAWS {
            let mut acc = actual.draw_allow_zero(&mut rng)?.0;
            for part in &parts {
                match part {
                    VirtualPart::Chain(c) => {
                        for (a, b) in acc.iter_mut().zip(c.draw_allow_zero(&mut rng)?.0) {
                            *a += b;
                        }
                    }
                    VirtualPart::Multinomial(mp) => {
                        if !mp.add(&mut acc, &mut rng) {
                            continue 'attempt;
                        }
                    }
                }
            }
            let s = OutputPattern(acc);
            if !s.is_zero() && s.max_count() <= n_cutoff {
                return Ok(s);
            }
        }
        Err(GbsError::SamplingDegeneracy(format!("no admissible pattern within {MAX_REDRAWS} attempts for m={m}")))
    })?;
    Ok(collect(ModelTag::Distinguishable { eta_ind }, spec, n_cutoff, seed, patterns))
}
