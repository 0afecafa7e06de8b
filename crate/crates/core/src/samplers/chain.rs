use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{GbsError, Result};
use crate::gaussian::{doubled_indices, draw_with_factor, psd_factor, GaussianState};
use crate::linalg::{max_abs, CMatrix, CVector};
use crate::matchpoly::ProbabilityKernel;
use crate::pattern::OutputPattern;

/// Below this every conditional weight counts as numerically zero.
const WEIGHT_FLOOR: f64 = 1e-300;
/// Noise covariances smaller than this are treated as absent.
const NOISE_TOL: f64 = 1e-12;
/// Redraw cap for rejection loops; reaching it means the model almost never
/// produces an admissible pattern.
pub(crate) const MAX_REDRAWS: usize = 1_000_000;

/// Exact sampler for one Gaussian state, reusable across draws.
///
/// Mixed states are written as a pure state whose displacement is smeared
/// by classical Gaussian noise. Each draw first fixes that displacement,
/// then samples heterodyne outcomes for modes `2..m` from the pure state's
/// Q-function and walks the modes in order: at step `i` the state is
/// conditioned on the outcomes of modes `i+1..m`, and `s_i` is drawn from
/// `p(s_1..s_i)` of that conditional state over `0..=n_cutoff`.
///
/// Conditioning only moves the displacement, so the conditional covariances
/// and their kernels are computed once here.
#[derive(Clone, Debug)]
pub struct ChainRuleSampler {
    n_cutoff: u16,
    pure: GaussianState,
    noise: Option<DMatrix<f64>>,
    heterodyne: DMatrix<f64>,
    steps: Vec<Step>,
    vacuum: bool,
}

#[derive(Clone, Debug)]
struct Step {
    /// `Q_AB Q_BB⁻¹`, empty on the last step.
    gain: CMatrix,
    kernel: ProbabilityKernel,
}

/// Unnormalized conditional weights of every step of one draw.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChainTrace {
    pub steps: Vec<Vec<f64>>,
}

impl ChainRuleSampler {
    pub fn new(state: &GaussianState, n_cutoff: u16) -> Result<Self> {
        state.check_physical()?;
        let m = state.m();
        let vacuum = !state.has_displacement() && max_abs((state.q() - CMatrix::identity(2 * m, 2 * m)).iter()) < NOISE_TOL;
        let (pure, noise) = if vacuum {
            (state.clone(), None)
        } else {
            let (pure, noise) = state.pure_classical_split()?;
            let noise = if noise.amax() > NOISE_TOL { Some(psd_factor(&noise)?) } else { None };
            (pure, noise)
        };
        let tail: Vec<usize> = (1..m).collect();
        let heterodyne = if tail.is_empty() { DMatrix::zeros(0, 0) } else { psd_factor(&pure.heterodyne_covariance(&tail))? };
        let mut steps = Vec::with_capacity(m);
        if !vacuum {
            for i in 0..m {
                let kept: Vec<usize> = (0..=i).collect();
                let ia = doubled_indices(&kept, m);
                let ib = doubled_indices(&tail[i..], m);
                let q = pure.q();
                let sub = |r: &[usize], c: &[usize]| CMatrix::from_fn(r.len(), c.len(), |a, b| q[(r[a], c[b])]);
                let (gain, q_cond) = if ib.is_empty() {
                    (CMatrix::zeros(ia.len(), 0), sub(&ia, &ia))
                } else {
                    let q_ab = sub(&ia, &ib);
                    let q_bb_inv = sub(&ib, &ib)
                        .try_inverse()
                        .ok_or_else(|| GbsError::NumericalDegeneracy("Q_BB is singular".into()))?;
                    let gain = &q_ab * q_bb_inv;
                    let q_cond = sub(&ia, &ia) - &gain * q_ab.adjoint();
                    (gain, q_cond)
                };
                let cond = GaussianState::from_parts(q_cond, &vec![Complex64::new(0.0, 0.0); i + 1])?;
                steps.push(Step { gain, kernel: ProbabilityKernel::new_unchecked(&cond)? });
            }
        }
        Ok(Self { n_cutoff, pure, noise, heterodyne, steps, vacuum })
    }

    pub fn m(&self) -> usize {
        self.pure.m()
    }

    pub fn n_cutoff(&self) -> u16 {
        self.n_cutoff
    }

    pub fn is_vacuum(&self) -> bool {
        self.vacuum
    }

    /// Draws a nonzero pattern, redrawing whenever all counts are zero.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<OutputPattern> {
        if self.vacuum {
            return Err(GbsError::SamplingDegeneracy("vacuum state only produces the zero pattern".into()));
        }
        for _ in 0..MAX_REDRAWS {
            let s = self.draw_allow_zero(rng)?;
            if !s.is_zero() {
                return Ok(s);
            }
        }
        Err(GbsError::SamplingDegeneracy("zero pattern redrawn too many times".into()))
    }

    /// One draw from the cutoff-truncated chain rule, zero pattern allowed.
    pub fn draw_allow_zero<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<OutputPattern> {
        self.draw_inner(rng, None)
    }

    /// Like [`Self::draw_allow_zero`] and records the raw step weights.
    pub fn draw_traced<R: Rng + ?Sized>(&self, rng: &mut R, trace: &mut ChainTrace) -> Result<OutputPattern> {
        self.draw_inner(rng, Some(trace))
    }

    fn draw_inner<R: Rng + ?Sized>(&self, rng: &mut R, mut trace: Option<&mut ChainTrace>) -> Result<OutputPattern> {
        let m = self.m();
        if self.vacuum {
            return Ok(OutputPattern::zeros(m));
        }
        let mut beta = self.pure.beta();
        if let Some(f) = &self.noise {
            let d = draw_with_factor(f, rng);
            for (j, b) in beta.iter_mut().enumerate() {
                *b += Complex64::new(d[j], d[m + j]) * 0.5;
            }
        }
        let state = self.pure.with_beta(&beta)?;
        let tail: Vec<usize> = (1..m).collect();
        let outcomes = state.heterodyne_from_factor(&tail, &self.heterodyne, rng);
        let mut counts: Vec<u16> = Vec::with_capacity(m);
        let mut probe: Vec<u16> = Vec::with_capacity(m);
        for (i, step) in self.steps.iter().enumerate() {
            let k_a = i + 1;
            let nb = m - k_a;
            let mut alpha = CVector::zeros(2 * k_a);
            for j in 0..k_a {
                alpha[j] = beta[j];
            }
            if nb > 0 {
                let mut resid = CVector::zeros(2 * nb);
                for j in 0..nb {
                    let r = outcomes[i + j] - beta[k_a + j];
                    resid[j] = r;
                    resid[nb + j] = r.conj();
                }
                let shift = &step.gain * resid;
                for j in 0..k_a {
                    alpha[j] += shift[j];
                }
            }
            for j in 0..k_a {
                alpha[k_a + j] = alpha[j].conj();
            }
            let (gamma, log_norm) = step.kernel.displacement_terms(&alpha);
            probe.clear();
            probe.extend_from_slice(&counts);
            probe.push(0);
            let mut weights = Vec::with_capacity(self.n_cutoff as usize + 1);
            for k in 0..=self.n_cutoff {
                probe[i] = k;
                weights.push(step.kernel.probability_displaced(&probe, &gamma, log_norm)?);
            }
            let total: f64 = weights.iter().sum();
            if let Some(t) = trace.as_deref_mut() {
                t.steps.push(weights.clone());
            }
            if !(total > WEIGHT_FLOOR) {
                return Err(GbsError::SamplingDegeneracy(format!(
                    "all conditional weights vanish at mode {}",
                    i + 1
                )));
            }
            counts.push(pick(&weights, total, rng) as u16);
        }
        Ok(OutputPattern(counts))
    }
}

/// Index drawn proportionally to nonnegative `weights` summing to `total`.
pub(crate) fn pick<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = k;
            acc += w;
            if u < acc {
                return k;
            }
        }
    }
    last
}

/// Single draw from `state`, zero pattern excluded.
pub fn chain_rule_sample<R: Rng + ?Sized>(state: &GaussianState, n_cutoff: u16, rng: &mut R) -> Result<OutputPattern> {
    ChainRuleSampler::new(state, n_cutoff)?.draw(rng)
}
