use num_complex::Complex64;

use super::lhafmix::{greedy_pairing, lhafmix, mixed_pairing};
use super::reference::SymmetricComplexMatrix;
use crate::error::{GbsError, Result};
use crate::gaussian::{kernel_matrix, GaussianState};
use crate::linalg::{CMatrix, CVector};

/// Everything about a state that pattern probabilities share: the kernel
/// matrix, loop weights `γ = (Q⁻¹ᾱ)*` and the normalization
/// `exp(−½ ᾱ†Q⁻¹ᾱ) / √det Q`.
#[derive(Clone, Debug)]
pub struct ProbabilityKernel {
    m: usize,
    a: CMatrix,
    pure: Option<SymmetricComplexMatrix>,
    gamma: Vec<Complex64>,
    log_norm: f64,
    q_inv: CMatrix,
    log_det: f64,
}

impl ProbabilityKernel {
    /// Checks physicality, then precomputes the kernel.
    pub fn new(state: &GaussianState) -> Result<Self> {
        state.check_physical()?;
        Self::new_unchecked(state)
    }

    /// Skips the eigenvalue check; for states built internally from
    /// physical ones.
    pub fn new_unchecked(state: &GaussianState) -> Result<Self> {
        let m = state.m();
        let kernel = kernel_matrix(state)?;
        let chol = state
            .q()
            .clone()
            .cholesky()
            .ok_or_else(|| GbsError::NumericalDegeneracy("Q is not positive definite".into()))?;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.norm().ln()).sum::<f64>();
        let q_inv = chol.inverse();
        let mut out = Self {
            m,
            a: kernel.a,
            pure: kernel.pure_block.map(SymmetricComplexMatrix::new),
            gamma: Vec::new(),
            log_norm: 0.0,
            q_inv,
            log_det,
        };
        (out.gamma, out.log_norm) = out.displacement_terms(state.alpha());
        Ok(out)
    }

    /// Loop weights and log normalization for displacement `alpha`; the
    /// kernel itself does not depend on the displacement.
    pub fn displacement_terms(&self, alpha: &CVector) -> (Vec<Complex64>, f64) {
        let q_inv_alpha = &self.q_inv * alpha;
        let quad: Complex64 = alpha.iter().zip(q_inv_alpha.iter()).map(|(a, b)| a.conj() * b).sum();
        let gamma = q_inv_alpha.iter().map(|z| z.conj()).collect();
        (gamma, -0.5 * quad.re - 0.5 * self.log_det)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_pure(&self) -> bool {
        self.pure.is_some()
    }

    /// Probability of photon pattern `s`.
    pub fn probability(&self, s: &[u16]) -> Result<f64> {
        self.probability_displaced(s, &self.gamma, self.log_norm)
    }

    /// Probability of `s` for the same covariance with the displacement
    /// summarized by [`Self::displacement_terms`].
    pub fn probability_displaced(&self, s: &[u16], gamma: &[Complex64], log_norm: f64) -> Result<f64> {
        if s.len() != self.m {
            return Err(GbsError::InvalidInput(format!(
                "pattern has {} modes, state has {}",
                s.len(),
                self.m
            )));
        }
        let log_fact: f64 = s.iter().map(|&k| ln_factorial(k)).sum();
        let weight = match &self.pure {
            Some(b) => {
                let spec = greedy_pairing(s, b, &gamma[..self.m])?;
                lhafmix(&spec).norm_sqr()
            }
            None => {
                let spec = mixed_pairing(s, &self.a, gamma)?;
                lhafmix(&spec).re
            }
        };
        Ok((weight.max(0.0).ln() + log_norm - log_fact).exp())
    }
}

fn ln_factorial(k: u16) -> f64 {
    statrs::function::factorial::ln_factorial(k as u64)
}

/// Probability of detecting pattern `s` on `state`.
///
/// Pure states use `|lhaf(filldiag(B_s, β_s))|²`; mixed states use the loop
/// hafnian of `filldiag(A_s, γ_s)`. Without displacement both reduce to the
/// plain hafnian forms.
pub fn pattern_probability(state: &GaussianState, s: &[u16]) -> Result<f64> {
    ProbabilityKernel::new(state)?.probability(s)
}
