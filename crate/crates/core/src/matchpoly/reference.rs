//! Brute-force matching polynomials and the permanent.

use num_complex::Complex64;

use crate::linalg::CMatrix;

/// Complex matrix with `entries = entriesᵀ`, enforced by averaging.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricComplexMatrix {
    entries: CMatrix,
}

impl SymmetricComplexMatrix {
    pub fn new(m: CMatrix) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "matrix must be square");
        let entries = (&m + m.transpose()) * Complex64::new(0.5, 0.0);
        Self { entries }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    /// `G ⊕ [1]`.
    pub fn direct_sum_one(&self) -> Self {
        let n = self.n();
        let mut e = CMatrix::zeros(n + 1, n + 1);
        e.view_mut((0, 0), (n, n)).copy_from(&self.entries);
        e[(n, n)] = Complex64::new(1.0, 0.0);
        Self { entries: e }
    }
}

fn matchings(m: &CMatrix, rest: &mut Vec<usize>, loops: bool) -> Complex64 {
    let Some(&first) = rest.first() else {
        return Complex64::new(1.0, 0.0);
    };
    let mut total = Complex64::new(0.0, 0.0);
    let snapshot = rest.clone();
    if loops {
        rest.remove(0);
        total += m[(first, first)] * matchings(m, rest, loops);
        *rest = snapshot.clone();
    }
    for k in 1..snapshot.len() {
        let partner = snapshot[k];
        let w = m[(first, partner)];
        if w == Complex64::new(0.0, 0.0) {
            continue;
        }
        let mut next: Vec<usize> = snapshot.iter().copied().filter(|&v| v != first && v != partner).collect();
        total += w * matchings(m, &mut next, loops);
    }
    *rest = snapshot;
    total
}

/// Sum over perfect matchings. Odd dimension gives zero; the empty matrix gives one.
pub fn hafnian_reference(m: &SymmetricComplexMatrix) -> Complex64 {
    if m.n() % 2 == 1 {
        return Complex64::new(0.0, 0.0);
    }
    let mut idx: Vec<usize> = (0..m.n()).collect();
    matchings(m.entries(), &mut idx, false)
}

/// Sum over matchings that may use self-loops (diagonal entries).
pub fn loop_hafnian_reference(m: &SymmetricComplexMatrix) -> Complex64 {
    let mut idx: Vec<usize> = (0..m.n()).collect();
    matchings(m.entries(), &mut idx, true)
}

/// Permanent by Ryser's inclusion–exclusion formula in Gray-code order,
/// `O(2ⁿ·n)`.
pub fn permanent(m: &CMatrix) -> Complex64 {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "permanent needs a square matrix");
    if n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let mut row_sums = vec![Complex64::new(0.0, 0.0); n];
    let mut total = Complex64::new(0.0, 0.0);
    let mut gray: u64 = 0;
    for step in 1u64..(1u64 << n) {
        let next = step ^ (step >> 1);
        let flipped = (gray ^ next).trailing_zeros() as usize;
        let added = next & (1 << flipped) != 0;
        for (i, rs) in row_sums.iter_mut().enumerate() {
            if added {
                *rs += m[(i, flipped)];
            } else {
                *rs -= m[(i, flipped)];
            }
        }
        gray = next;
        let prod: Complex64 = row_sums.iter().product();
        if (n - gray.count_ones() as usize) % 2 == 0 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    total
}

/// Permanent of the matrix whose row and column `i` are both repeated
/// `reps[i]` times, summing over column multiplicities instead of subsets
/// (`Π (reps_i + 1)` terms).
pub fn permanent_repeated(m: &CMatrix, reps: &[u16]) -> Complex64 {
    let n = m.nrows();
    assert_eq!(reps.len(), n);
    let total_n: u32 = reps.iter().map(|&r| r as u32).sum();
    if total_n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let active: Vec<usize> = (0..n).filter(|&i| reps[i] > 0).collect();
    let mut k = vec![0u16; active.len()];
    let mut total = Complex64::new(0.0, 0.0);
    loop {
        let chosen: u32 = k.iter().map(|&x| x as u32).sum();
        if chosen > 0 {
            let mut weight = 1.0;
            for (a, &ka) in k.iter().enumerate() {
                weight *= binomial(reps[active[a]] as u64, ka as u64);
            }
            let mut prod = Complex64::new(1.0, 0.0);
            for &i in &active {
                let s: Complex64 = active.iter().zip(&k).map(|(&j, &kj)| m[(i, j)] * kj as f64).sum();
                prod *= s.powu(reps[i] as u32);
            }
            let sign = if (total_n - chosen) % 2 == 0 { 1.0 } else { -1.0 };
            total += prod * (sign * weight);
        }
        // Mixed-radix increment.
        let mut pos = 0;
        loop {
            if pos == k.len() {
                return total;
            }
            if k[pos] < reps[active[pos]] {
                k[pos] += 1;
                break;
            }
            k[pos] = 0;
            pos += 1;
        }
    }
}

pub(crate) fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
