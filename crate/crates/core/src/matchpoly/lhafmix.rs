//! Loop hafnians of matrices with repeated rows via photon pairing and the
//! finite-difference sieve.
//!
//! Photons are grouped into pairs of row indices `(i, j)` with multiplicity
//! `n_k`. The repeated matrix has `2·Σ n_k` rows: row `i` of the k-th pair
//! appears `n_k` times in the first half and row `j` `n_k` times in the
//! second half. Its loop hafnian is
//!
//! ```text
//! lhaf = 2^{-L} Σ_z (−1)^{Σ(n_k−z_k)/2} Π C(n_k, (n_k+z_k)/2) · [λ^L] exp(Σ_k c_k(z) λ^k)
//! c_k(z) = tr((C Z)^k)/(2k) + μ Z (C Z)^{k−1} μᵀ/2,   L = Σ n_k
//! ```
//!
//! where `Z = [[0, diag z], [diag z, 0]]` acts on the compact `2|n|` pair
//! space. The compact form equals the traces over the fully repeated matrix
//! with the `±1` matrix `X_z` of [`build_xz`] (checked in the tests).

use num_complex::Complex64;

use super::reference::{binomial, SymmetricComplexMatrix};
use crate::error::{GbsError, Result};
use crate::exec::{tree_sum, Exec};
use crate::linalg::{eigenvalues, CMatrix, CVector};

/// Photon-pair bookkeeping for [`lhafmix`].
#[derive(Clone, Debug)]
pub struct PairSpec {
    /// Row-index pairs into the source matrix. For pure-state pairing the
    /// index `m` (one past the last mode) denotes the virtual mode.
    pub pairs: Vec<(usize, usize)>,
    /// Multiplicity of each pair.
    pub n: Vec<usize>,
    /// `2|n| × 2|n|` matrix; slot `k` holds row `pairs[k].0`, slot `k + |n|`
    /// holds row `pairs[k].1` of the source matrix.
    pub c: CMatrix,
    /// Loop weights arranged like the rows of `c`.
    pub mu: CVector,
}

impl PairSpec {
    pub fn empty() -> Self {
        Self { pairs: Vec::new(), n: Vec::new(), c: CMatrix::zeros(0, 0), mu: CVector::zeros(0) }
    }

    /// Gathers `C` and `μ` from a source matrix and loop vector.
    pub fn from_pairs(source: &CMatrix, loops: &[Complex64], pairs: Vec<(usize, usize)>, n: Vec<usize>) -> Self {
        assert_eq!(pairs.len(), n.len());
        let p = pairs.len();
        let slot = |a: usize| if a < p { pairs[a].0 } else { pairs[a - p].1 };
        let c = CMatrix::from_fn(2 * p, 2 * p, |a, b| source[(slot(a), slot(b))]);
        let mu = CVector::from_iterator(2 * p, (0..2 * p).map(|a| loops[slot(a)]));
        Self { pairs, n, c, mu }
    }

    /// Total photon number `N = 2 Σ n_k`.
    pub fn total_photons(&self) -> usize {
        2 * self.n.iter().sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.total_photons() == 0
    }

    /// Number of sieve terms, `Π (n_k + 1)`.
    pub fn z_count(&self) -> usize {
        self.n.iter().map(|&k| k + 1).product()
    }

    /// The fully repeated matrix with loop weights on its diagonal; only for
    /// cross-checks against brute force.
    pub fn expanded(&self) -> SymmetricComplexMatrix {
        let p = self.pairs.len();
        let mut rows = Vec::new();
        for half in 0..2 {
            for k in 0..p {
                rows.extend(std::iter::repeat_n(k + half * p, self.n[k]));
            }
        }
        let mut g = CMatrix::from_fn(rows.len(), rows.len(), |a, b| self.c[(rows[a], rows[b])]);
        for (a, &r) in rows.iter().enumerate() {
            g[(a, a)] = self.mu[r];
        }
        SymmetricComplexMatrix::new(g)
    }
}

/// Pairs the photons of pattern `s` for a pure-state block `b` with loop
/// vector `beta`.
///
/// Photons in the same mode are paired first; leftover single photons are
/// paired across modes in ascending mode order. A final unpaired photon is
/// matched with a virtual mode carrying `b ⊕ [1]` and loop weight 1, which
/// leaves the loop hafnian unchanged.
pub fn greedy_pairing(s: &[u16], b: &SymmetricComplexMatrix, beta: &[Complex64]) -> Result<PairSpec> {
    let m = s.len();
    if b.n() != m || beta.len() != m {
        return Err(GbsError::InvalidInput(format!(
            "pattern has {m} modes, matrix {} and loop vector {}",
            b.n(),
            beta.len()
        )));
    }
    let mut pairs = Vec::new();
    let mut n = Vec::new();
    let mut singles = Vec::new();
    for (i, &si) in s.iter().enumerate() {
        if si >= 2 {
            pairs.push((i, i));
            n.push(si as usize / 2);
        }
        if si % 2 == 1 {
            singles.push(i);
        }
    }
    for w in singles.chunks(2) {
        match *w {
            [i, j] => pairs.push((i, j)),
            [i] => pairs.push((i, m)),
            _ => unreachable!(),
        }
        n.push(1);
    }
    if pairs.is_empty() {
        return Ok(PairSpec::empty());
    }
    let needs_virtual = singles.len() % 2 == 1;
    if needs_virtual {
        let g = b.direct_sum_one();
        let mut loops = beta.to_vec();
        loops.push(Complex64::new(1.0, 0.0));
        Ok(PairSpec::from_pairs(g.entries(), &loops, pairs, n))
    } else {
        Ok(PairSpec::from_pairs(b.entries(), beta, pairs, n))
    }
}

/// Pairing for a mixed-state kernel `A` (2m×2m): the k-th photon in mode `j`
/// pairs row `j` with row `j + m`, so pair `(j, j+m)` has multiplicity `s_j`.
pub fn mixed_pairing(s: &[u16], a: &CMatrix, gamma: &[Complex64]) -> Result<PairSpec> {
    let m = s.len();
    if a.nrows() != 2 * m || gamma.len() != 2 * m {
        return Err(GbsError::InvalidInput("kernel and pattern sizes disagree".into()));
    }
    let (pairs, n): (Vec<_>, Vec<_>) =
        s.iter().enumerate().filter(|(_, &c)| c > 0).map(|(j, &c)| ((j, j + m), c as usize)).unzip();
    if pairs.is_empty() {
        return Ok(PairSpec::empty());
    }
    Ok(PairSpec::from_pairs(a, gamma, pairs, n))
}

/// `X_z`: anti-block-diagonal `N×N` matrix with `diag(Λ_z)` blocks, where
/// `Λ_z` concatenates, per pair, `(n_k+z_k)/2` ones then `(n_k−z_k)/2`
/// minus-ones.
pub fn build_xz(n: &[usize], z: &[i64]) -> Result<CMatrix> {
    if n.len() != z.len() {
        return Err(GbsError::InvalidInput("n and z lengths differ".into()));
    }
    let mut lambda = Vec::new();
    for (&nk, &zk) in n.iter().zip(z) {
        let nk = nk as i64;
        if zk.abs() > nk || (nk - zk) % 2 != 0 {
            return Err(GbsError::InvalidInput(format!("z = {zk} is not admissible for n = {nk}")));
        }
        let plus = ((nk + zk) / 2) as usize;
        let minus = ((nk - zk) / 2) as usize;
        lambda.extend(std::iter::repeat_n(1.0, plus));
        lambda.extend(std::iter::repeat_n(-1.0, minus));
    }
    let l = lambda.len();
    let mut x = CMatrix::zeros(2 * l, 2 * l);
    for (a, &v) in lambda.iter().enumerate() {
        x[(a, l + a)] = Complex64::new(v, 0.0);
        x[(l + a, a)] = Complex64::new(v, 0.0);
    }
    Ok(x)
}

/// Products are cheaper than a Schur form up to about this many powers.
const DIRECT_TRACE_POWERS: usize = 8;

/// `[tr(M), tr(M²), …, tr(M^K)]` from the eigenvalues of `M`.
pub fn power_traces(m: &CMatrix, k_max: usize) -> Vec<Complex64> {
    if k_max <= DIRECT_TRACE_POWERS {
        return power_traces_direct(m, k_max);
    }
    power_traces_eigen(m, k_max)
}

fn power_traces_eigen(m: &CMatrix, k_max: usize) -> Vec<Complex64> {
    let ev = eigenvalues(m);
    let mut powers = ev.clone();
    let mut out = Vec::with_capacity(k_max);
    for k in 0..k_max {
        if k > 0 {
            for (p, e) in powers.iter_mut().zip(&ev) {
                *p *= e;
            }
        }
        out.push(powers.iter().sum());
    }
    out
}

/// Traces from explicit powers `M..M^⌈K/2⌉`, using
/// `tr(M^{a+b}) = Σ_ij (M^a)_ij (M^b)_ji`.
fn power_traces_direct(m: &CMatrix, k_max: usize) -> Vec<Complex64> {
    if k_max == 0 {
        return Vec::new();
    }
    let half = k_max.div_ceil(2);
    let mut powers = vec![m.clone()];
    for _ in 1..half {
        let next = powers.last().unwrap() * m;
        powers.push(next);
    }
    (1..=k_max)
        .map(|k| {
            if k <= half {
                powers[k - 1].trace()
            } else {
                let (a, b) = (&powers[half - 1], &powers[k - half - 1]);
                a.iter().zip(b.transpose().iter()).map(|(x, y)| x * y).sum()
            }
        })
        .collect()
}

/// Coefficients `e_0..e_L` of `exp(Σ_{k≥1} c_k λ^k)` truncated at degree `L`.
fn exp_series(c: &[Complex64], l: usize) -> Vec<Complex64> {
    let mut e = vec![Complex64::new(0.0, 0.0); l + 1];
    e[0] = Complex64::new(1.0, 0.0);
    for deg in 1..=l {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 1..=deg {
            acc += c[k - 1] * (k as f64) * e[deg - k];
        }
        e[deg] = acc / deg as f64;
    }
    e
}

/// Admissible `z` vector with mixed-radix rank `idx`.
fn z_from_index(n: &[usize], mut idx: usize) -> Vec<i64> {
    n.iter()
        .map(|&nk| {
            let t = idx % (nk + 1);
            idx /= nk + 1;
            2 * t as i64 - nk as i64
        })
        .collect()
}

fn sieve_term(spec: &PairSpec, z: &[i64]) -> Complex64 {
    let p = spec.pairs.len();
    let l: usize = spec.n.iter().sum();
    let mut sign_exp = 0i64;
    let mut weight = 1.0;
    for (&nk, &zk) in spec.n.iter().zip(z) {
        let up = ((nk as i64 + zk) / 2) as u64;
        sign_exp += (nk as i64 - zk) / 2;
        weight *= binomial(nk as u64, up);
    }
    if sign_exp % 2 != 0 {
        weight = -weight;
    }
    // C·Z: column b picks column partner(b) of C scaled by z_{b mod p}.
    let cz = CMatrix::from_fn(2 * p, 2 * p, |a, b| {
        let partner = if b < p { b + p } else { b - p };
        spec.c[(a, partner)] * z[b % p] as f64
    });
    let traces = power_traces(&cz, l);
    // μ Z as a row vector.
    let mu_z: Vec<Complex64> = (0..2 * p)
        .map(|b| {
            let partner = if b < p { b + p } else { b - p };
            spec.mu[partner] * z[b % p] as f64
        })
        .collect();
    let mut coeffs = Vec::with_capacity(l);
    let mut u = spec.mu.clone();
    for k in 1..=l {
        if k > 1 {
            u = &cz * u;
        }
        let quad: Complex64 = mu_z.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
        coeffs.push(traces[k - 1] / (2.0 * k as f64) + quad * 0.5);
    }
    exp_series(&coeffs, l)[l] * weight
}

/// Loop hafnian of the repeated matrix described by `spec`.
pub fn lhafmix(spec: &PairSpec) -> Complex64 {
    lhafmix_with(spec, Exec::Sequential)
}

/// [`lhafmix`] with an explicit execution policy for the `z` sum. The sum is
/// reduced as a pairwise tree in `z`-index order, so the value does not
/// depend on the worker count.
pub fn lhafmix_with(spec: &PairSpec, exec: Exec) -> Complex64 {
    if spec.is_empty() {
        return Complex64::new(1.0, 0.0);
    }
    let l: usize = spec.n.iter().sum();
    // Terms at z and −z are equal, so only z with a nonnegative pivot entry
    // are evaluated. An odd multiplicity never has z = 0, which makes the
    // split exact; otherwise pick the largest multiplicity.
    let pivot = spec
        .n
        .iter()
        .position(|&k| k % 2 == 1)
        .unwrap_or_else(|| (0..spec.n.len()).max_by_key(|&k| (spec.n[k], std::cmp::Reverse(k))).unwrap());
    let terms = exec.map(spec.z_count(), |idx| {
        let z = z_from_index(&spec.n, idx);
        match z[pivot].signum() {
            1 => sieve_term(spec, &z) * 2.0,
            0 => sieve_term(spec, &z),
            _ => Complex64::new(0.0, 0.0),
        }
    });
    tree_sum(&terms) / 2f64.powi(l as i32)
}
