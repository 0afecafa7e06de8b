//! Gaussian states in the ℏ = 2 convention.
//!
//! Two orderings are used and never mixed implicitly:
//! * [`XpCovariance`] holds the real covariance in `(x_1..x_m, p_1..p_m)` order,
//!   vacuum = identity.
//! * [`GaussianState`] holds the Q-function covariance in
//!   `(x + ip, x − ip) / 2` order together with the displacement
//!   `ᾱ = (β, β*)`, vacuum = identity.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GbsError, Result};
use crate::linalg::{hermitize, symmetrize, CMatrix, CVector};
use crate::rng::RngStream;

const UNITARY_TOL: f64 = 1e-10;
/// Off-diagonal block norm below which a kernel matrix is treated as pure.
pub const PURITY_TOL: f64 = 1e-10;
/// Lowest admissible Q eigenvalue is `1/2 - PHYSICALITY_TOL`.
pub const PHYSICALITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqueezingSpec {
    /// Number of squeezed input modes (the first `k` modes).
    pub k: usize,
    pub m: usize,
    pub r: f64,
}

impl SqueezingSpec {
    pub fn new(k: usize, m: usize, r: f64) -> Result<Self> {
        let spec = Self { k, m, r };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.m {
            return Err(GbsError::InvalidSpec(format!(
                "need 1 <= K <= m, got K={} m={}",
                self.k, self.m
            )));
        }
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(GbsError::InvalidSpec(format!("squeezing r must be >= 0, got {}", self.r)));
        }
        Ok(())
    }

    /// Mean photon number of each squeezed input mode, `sinh² r`.
    pub fn mean_photons_per_mode(&self) -> f64 {
        self.r.sinh().powi(2)
    }
}

/// Real covariance matrix in `(x, p)` ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct XpCovariance {
    v: DMatrix<f64>,
}

impl XpCovariance {
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        if v.nrows() != v.ncols() || v.nrows() % 2 != 0 || v.nrows() == 0 {
            return Err(GbsError::InvalidInput(format!(
                "covariance must be 2m x 2m, got {}x{}",
                v.nrows(),
                v.ncols()
            )));
        }
        let scale = v.amax().max(1.0);
        if (&v - v.transpose()).amax() > 1e-10 * scale {
            return Err(GbsError::InvalidInput("covariance is not symmetric".into()));
        }
        Ok(Self { v: symmetrize(&v) })
    }

    pub fn vacuum(m: usize) -> Self {
        Self { v: DMatrix::identity(2 * m, 2 * m) }
    }

    pub fn m(&self) -> usize {
        self.v.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Splits the covariance into a pure-state covariance plus a positive
    /// semidefinite classical noise term, `V = S Sᵀ + W`, using the Williamson
    /// normal form `V = S diag(ν, ν) Sᵀ`.
    pub fn pure_classical_split(&self) -> Result<(XpCovariance, DMatrix<f64>)> {
        let m = self.m();
        let n = 2 * m;
        let eig = SymmetricEigen::new(self.v.clone());
        if eig.eigenvalues.min() <= 0.0 {
            return Err(GbsError::NumericalDegeneracy("covariance is not positive definite".into()));
        }
        let u = &eig.eigenvectors;
        let sqrt = u * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * u.transpose();
        let inv_sqrt =
            u * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * u.transpose();
        let mut omega = DMatrix::<f64>::zeros(n, n);
        for i in 0..m {
            omega[(i, m + i)] = 1.0;
            omega[(m + i, i)] = -1.0;
        }
        // i·V^{-1/2} Ω V^{-1/2} is Hermitian with eigenvalues ±1/ν.
        let k = &inv_sqrt * &omega * &inv_sqrt;
        let h: CMatrix = k.map(|x| Complex64::new(0.0, x));
        let heig = SymmetricEigen::new(hermitize(&h));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| heig.eigenvalues[b].total_cmp(&heig.eigenvalues[a]));
        let mut o = DMatrix::<f64>::zeros(n, n);
        let mut nu = vec![0.0; m];
        for (slot, &idx) in order.iter().take(m).enumerate() {
            let lam = heig.eigenvalues[idx];
            if lam <= 0.0 {
                return Err(GbsError::NumericalDegeneracy("symplectic spectrum degenerate".into()));
            }
            nu[slot] = 1.0 / lam;
            let e = heig.eigenvectors.column(idx);
            let s2 = std::f64::consts::SQRT_2;
            for r in 0..n {
                o[(r, slot)] = s2 * e[r].im;
                o[(r, m + slot)] = s2 * e[r].re;
            }
        }
        let mut d_inv_sqrt = DMatrix::<f64>::zeros(n, n);
        for i in 0..m {
            let v = 1.0 / nu[i].sqrt();
            d_inv_sqrt[(i, i)] = v;
            d_inv_sqrt[(m + i, m + i)] = v;
        }
        let s = &sqrt * &o * &d_inv_sqrt;
        let pure = symmetrize(&(&s * s.transpose()));
        let noise = symmetrize(&(&self.v - &pure));
        Ok((XpCovariance { v: pure }, noise))
    }
}

/// Ideal input covariance: `e^{2r}` on the x-quadratures and `e^{-2r}` on the
/// p-quadratures of the first K modes, vacuum elsewhere.
pub fn build_input_covariance(spec: &SqueezingSpec) -> Result<XpCovariance> {
    spec.validate()?;
    let m = spec.m;
    let mut v = DMatrix::<f64>::identity(2 * m, 2 * m);
    for i in 0..spec.k {
        v[(i, i)] = (2.0 * spec.r).exp();
        v[(m + i, m + i)] = (-2.0 * spec.r).exp();
    }
    Ok(XpCovariance { v })
}

/// Balanced loss: `η V0 + (1 − η) I`.
pub fn lossy_covariance(v0: &XpCovariance, eta_t: f64) -> Result<XpCovariance> {
    check_unit_interval("eta_t", eta_t)?;
    let n = v0.v.nrows();
    Ok(XpCovariance {
        v: &v0.v * eta_t + DMatrix::<f64>::identity(n, n) * (1.0 - eta_t),
    })
}

/// Actual-part covariance plus the K virtual-part covariances of the
/// partial-distinguishability model.
pub fn distinguishable_covariances(
    spec: &SqueezingSpec,
    eta_ind: f64,
) -> Result<(XpCovariance, Vec<XpCovariance>)> {
    check_unit_interval("eta_ind", eta_ind)?;
    let v_in = build_input_covariance(spec)?;
    let actual = lossy_covariance(&v_in, eta_ind)?;
    let m = spec.m;
    let virtuals = (0..spec.k)
        .map(|i| {
            let mut v = DMatrix::<f64>::identity(2 * m, 2 * m);
            v[(i, i)] = (1.0 - eta_ind) * (2.0 * spec.r).exp() + eta_ind;
            v[(m + i, m + i)] = (1.0 - eta_ind) * (-2.0 * spec.r).exp() + eta_ind;
            XpCovariance { v }
        })
        .collect();
    Ok((actual, virtuals))
}

pub(crate) fn check_unit_interval(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(GbsError::InvalidParameter(format!("{name} must lie in [0, 1], got {x}")));
    }
    Ok(())
}

/// `W = [[I, iI], [I, −iI]]`, mapping `(x, p)` to `(x + ip, x − ip)`.
fn w_matrix(m: usize) -> CMatrix {
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let mut w = CMatrix::zeros(2 * m, 2 * m);
    for j in 0..m {
        w[(j, j)] = one;
        w[(j, m + j)] = i;
        w[(m + j, j)] = one;
        w[(m + j, m + j)] = -i;
    }
    w
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    q: CMatrix,
    alpha: CVector,
}

impl GaussianState {
    pub fn vacuum(m: usize) -> Self {
        Self { q: CMatrix::identity(2 * m, 2 * m), alpha: CVector::zeros(2 * m) }
    }

    /// Builds a state from a Q-covariance and the first half `β` of the
    /// displacement; the second half is filled with `β*`.
    pub fn from_parts(q: CMatrix, beta: &[Complex64]) -> Result<Self> {
        if q.nrows() != q.ncols() || q.nrows() % 2 != 0 || q.nrows() != 2 * beta.len() {
            return Err(GbsError::InvalidInput("Q must be 2m x 2m with a length-m displacement".into()));
        }
        let m = beta.len();
        let mut alpha = CVector::zeros(2 * m);
        for (j, b) in beta.iter().enumerate() {
            alpha[j] = *b;
            alpha[m + j] = b.conj();
        }
        Ok(Self { q: hermitize(&q), alpha })
    }

    pub fn m(&self) -> usize {
        self.q.nrows() / 2
    }

    pub fn q(&self) -> &CMatrix {
        &self.q
    }

    /// Full displacement vector `ᾱ = (β, β*)`.
    pub fn alpha(&self) -> &CVector {
        &self.alpha
    }

    /// First half of the displacement (per-mode coherent amplitudes).
    pub fn beta(&self) -> Vec<Complex64> {
        self.alpha.rows(0, self.m()).iter().copied().collect()
    }

    pub fn has_displacement(&self) -> bool {
        self.alpha.iter().any(|a| a.norm() > 0.0)
    }

    pub fn with_beta(&self, beta: &[Complex64]) -> Result<Self> {
        Self::from_parts(self.q.clone(), beta)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.q.clone()).eigenvalues.min()
    }

    /// Errors unless all eigenvalues of Q are at least 1/2 (within tolerance).
    pub fn check_physical(&self) -> Result<()> {
        let lo = self.min_eigenvalue();
        if lo < 0.5 - PHYSICALITY_TOL {
            return Err(GbsError::InvalidState(format!("Q has eigenvalue {lo} < 1/2")));
        }
        Ok(())
    }

    /// Converts back to the real `(x, p)` covariance and mean vector.
    pub fn to_xp(&self) -> (XpCovariance, DVector<f64>) {
        let m = self.m();
        let w = w_matrix(m);
        let half = CMatrix::identity(2 * m, 2 * m).scale(0.5);
        let v = (w.adjoint() * (&self.q - half) * &w).map(|z| z.re);
        let mut mean = DVector::<f64>::zeros(2 * m);
        for j in 0..m {
            mean[j] = 2.0 * self.alpha[j].re;
            mean[m + j] = 2.0 * self.alpha[j].im;
        }
        (XpCovariance { v: symmetrize(&v) }, mean)
    }

    /// Reduced state on `modes` (partial trace over the rest).
    pub fn reduced(&self, modes: &[usize]) -> Self {
        let m = self.m();
        let idx = doubled_indices(modes, m);
        let q = CMatrix::from_fn(idx.len(), idx.len(), |a, b| self.q[(idx[a], idx[b])]);
        let alpha = CVector::from_iterator(idx.len(), idx.iter().map(|&i| self.alpha[i]));
        Self { q, alpha }
    }

    /// Splits a mixed state into a pure state plus classical Gaussian noise on
    /// the `(x, p)` displacement. Returns the pure state (same displacement)
    /// and the noise covariance.
    pub fn pure_classical_split(&self) -> Result<(GaussianState, DMatrix<f64>)> {
        let (v, _) = self.to_xp();
        let (pure, noise) = v.pure_classical_split()?;
        let mut state = xp_to_q(&pure)?;
        state.alpha = self.alpha.clone();
        Ok((state, noise))
    }

    /// Draws heterodyne outcomes (complex amplitudes) for `modes` from the
    /// state's Q-function marginal.
    pub fn sample_heterodyne<R: Rng + ?Sized>(&self, modes: &[usize], rng: &mut R) -> Result<Vec<Complex64>> {
        if modes.is_empty() {
            return Ok(Vec::new());
        }
        let factor = psd_factor(&self.heterodyne_covariance(modes))?;
        Ok(self.heterodyne_from_factor(modes, &factor, rng))
    }

    /// Covariance `V + I` of the heterodyne record `(x, p)` on `modes`.
    pub(crate) fn heterodyne_covariance(&self, modes: &[usize]) -> DMatrix<f64> {
        let (v, _) = self.to_xp();
        let idx = doubled_indices(modes, self.m());
        DMatrix::<f64>::from_fn(idx.len(), idx.len(), |a, b| {
            v.v[(idx[a], idx[b])] + if a == b { 1.0 } else { 0.0 }
        })
    }

    /// Heterodyne draw given a factor of [`Self::heterodyne_covariance`]; the
    /// outcome mean is the displacement `β` itself.
    pub(crate) fn heterodyne_from_factor<R: Rng + ?Sized>(
        &self,
        modes: &[usize],
        factor: &DMatrix<f64>,
        rng: &mut R,
    ) -> Vec<Complex64> {
        let draw = draw_with_factor(factor, rng);
        let k = modes.len();
        (0..k).map(|j| self.alpha[modes[j]] + Complex64::new(draw[j], draw[k + j]) * 0.5).collect()
    }
}

/// `L` with `L Lᵀ = cov`: Cholesky when it succeeds, otherwise a symmetric
/// eigendecomposition with tiny negative eigenvalues clipped.
pub(crate) fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = cov.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = SymmetricEigen::new(symmetrize(cov));
    if eig.eigenvalues.min() < -1e-9 * eig.eigenvalues.amax().max(1.0) {
        return Err(GbsError::NumericalDegeneracy("noise covariance is not positive semidefinite".into()));
    }
    let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * scale)
}

pub(crate) fn draw_with_factor<R: Rng + ?Sized>(factor: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let n = factor.ncols();
    let z = DVector::<f64>::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    factor * z
}

/// Row/column indices `{j} ∪ {j + m}` for a mode subset, in that order.
pub(crate) fn doubled_indices(modes: &[usize], m: usize) -> Vec<usize> {
    modes.iter().copied().chain(modes.iter().map(|&j| j + m)).collect()
}

/// `Q = ¼ W V W† + ½ I`, zero displacement.
pub fn xp_to_q(v: &XpCovariance) -> Result<GaussianState> {
    let m = v.m();
    let w = w_matrix(m);
    let vc: CMatrix = v.v.map(|x| Complex64::new(x, 0.0));
    let q = (&w * vc * w.adjoint()).scale(0.25) + CMatrix::identity(2 * m, 2 * m).scale(0.5);
    Ok(GaussianState { q: hermitize(&q), alpha: CVector::zeros(2 * m) })
}

/// Linear passive interferometer described by an m×m unitary.
#[derive(Clone, Debug, PartialEq)]
pub struct Interferometer {
    t: CMatrix,
    seed: Option<u64>,
}

impl Interferometer {
    pub fn new(t: CMatrix) -> Result<Self> {
        if t.nrows() != t.ncols() || t.nrows() == 0 {
            return Err(GbsError::InvalidInput("interferometer must be a non-empty square matrix".into()));
        }
        let dev = unitarity_defect(&t);
        if dev >= UNITARY_TOL {
            return Err(GbsError::InvalidInput(format!("matrix is not unitary (|T†T - I|_max = {dev:e})")));
        }
        Ok(Self { t, seed: None })
    }

    pub fn identity(m: usize) -> Self {
        Self { t: CMatrix::identity(m, m), seed: None }
    }

    pub fn m(&self) -> usize {
        self.t.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.t
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.m())
            .map(|i| (0..self.m()).map(|j| [self.t[(i, j)].re, self.t[(i, j)].im]).collect())
            .collect();
        let doc = InterferometerDoc { m: self.m(), seed: self.seed, t: rows };
        serde_json::to_string_pretty(&doc).expect("interferometer serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InterferometerDoc = serde_json::from_str(text)?;
        if doc.t.len() != doc.m || doc.t.iter().any(|r| r.len() != doc.m) {
            return Err(GbsError::Format("interferometer rows do not match m".into()));
        }
        let t = CMatrix::from_fn(doc.m, doc.m, |i, j| Complex64::new(doc.t[i][j][0], doc.t[i][j][1]));
        let mut itf = Self::new(t)?;
        itf.seed = doc.seed;
        Ok(itf)
    }
}

#[derive(Serialize, Deserialize)]
struct InterferometerDoc {
    m: usize,
    seed: Option<u64>,
    t: Vec<Vec<[f64; 2]>>,
}

pub fn unitarity_defect(t: &CMatrix) -> f64 {
    let n = t.nrows();
    (t.adjoint() * t - CMatrix::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Haar-random unitary: QR of a complex Ginibre matrix with the phases of
/// R's diagonal folded back into Q.
pub fn haar_unitary(m: usize, seed: u64) -> Result<Interferometer> {
    if m == 0 {
        return Err(GbsError::InvalidParameter("mode count must be >= 1".into()));
    }
    let mut rng = RngStream::new(seed, 0).rng();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = CMatrix::from_fn(m, m, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    });
    let qr = z.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..m {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..m {
            q[(i, j)] *= phase;
        }
    }
    Ok(Interferometer { t: q, seed: Some(seed) })
}

/// `Q_out = (T ⊕ T*) Q_in (T† ⊕ Tᵀ)`, `ᾱ_out = (T ⊕ T*) ᾱ_in`.
pub fn apply_interferometer(state: &GaussianState, itf: &Interferometer) -> Result<GaussianState> {
    let m = state.m();
    if itf.m() != m {
        return Err(GbsError::InvalidInput(format!(
            "state has {m} modes but interferometer has {}",
            itf.m()
        )));
    }
    let mut big = CMatrix::zeros(2 * m, 2 * m);
    big.view_mut((0, 0), (m, m)).copy_from(&itf.t);
    big.view_mut((m, m), (m, m)).copy_from(&itf.t.map(|z| z.conj()));
    let q = &big * &state.q * big.adjoint();
    let alpha = &big * &state.alpha;
    Ok(GaussianState { q: hermitize(&q), alpha })
}

/// `A = X (I − Q⁻¹)` with an optional pure block `B` when `A = B ⊕ B*`.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    pub a: CMatrix,
    pub pure_block: Option<CMatrix>,
}

pub fn kernel_matrix(state: &GaussianState) -> Result<KernelMatrix> {
    let m = state.m();
    let n = 2 * m;
    let qinv = state
        .q
        .clone()
        .try_inverse()
        .ok_or_else(|| GbsError::NumericalDegeneracy("Q is singular".into()))?;
    let ident = CMatrix::identity(n, n);
    let inner = ident - qinv;
    // Left-multiplying by X swaps the two row halves.
    let mut a = CMatrix::zeros(n, n);
    a.rows_mut(0, m).copy_from(&inner.rows(m, m));
    a.rows_mut(m, m).copy_from(&inner.rows(0, m));
    let a = symmetrize(&a);
    let off = a.view((0, m), (m, m)).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let pure_block = (off < PURITY_TOL).then(|| symmetrize(&a.view((0, 0), (m, m)).clone_owned()));
    Ok(KernelMatrix { a, pure_block })
}

/// Conditions on heterodyne outcomes of the modes not in `kept`.
///
/// `outcomes` lists the measured complex amplitudes of the discarded modes in
/// ascending mode order.
pub fn condition_on_heterodyne(
    state: &GaussianState,
    kept: &[usize],
    outcomes: &[Complex64],
) -> Result<GaussianState> {
    let m = state.m();
    let mut seen = vec![false; m];
    for &k in kept {
        if k >= m || seen[k] {
            return Err(GbsError::InvalidInput(format!("kept mode {k} is out of range or repeated")));
        }
        seen[k] = true;
    }
    let discarded: Vec<usize> = (0..m).filter(|&j| !seen[j]).collect();
    if discarded.len() != outcomes.len() {
        return Err(GbsError::InvalidInput(format!(
            "{} discarded modes but {} outcomes",
            discarded.len(),
            outcomes.len()
        )));
    }
    if discarded.is_empty() {
        return Ok(state.reduced(kept));
    }
    let ia = doubled_indices(kept, m);
    let ib = doubled_indices(&discarded, m);
    let sub = |r: &[usize], c: &[usize]| CMatrix::from_fn(r.len(), c.len(), |a, b| state.q[(r[a], c[b])]);
    let q_aa = sub(&ia, &ia);
    let q_ab = sub(&ia, &ib);
    let q_bb = sub(&ib, &ib);
    let q_bb_inv = q_bb
        .try_inverse()
        .ok_or_else(|| GbsError::NumericalDegeneracy("Q_BB is singular".into()))?;
    let gain = &q_ab * q_bb_inv;
    let q_cond = &q_aa - &gain * q_ab.adjoint();
    let nb = discarded.len();
    let mut resid = CVector::zeros(2 * nb);
    for j in 0..nb {
        resid[j] = outcomes[j] - state.alpha[discarded[j]];
        resid[nb + j] = outcomes[j].conj() - state.alpha[discarded[j] + m];
    }
    let alpha_a = CVector::from_iterator(ia.len(), ia.iter().map(|&i| state.alpha[i]));
    let mut alpha = alpha_a + gain * resid;
    // Keep the (β, β*) structure exact.
    let k = kept.len();
    for j in 0..k {
        alpha[k + j] = alpha[j].conj();
    }
    Ok(GaussianState { q: hermitize(&q_cond), alpha })
}
