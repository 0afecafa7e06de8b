//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{ComplexField, DMatrix, DVector, Schur};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub fn symmetrize<T: ComplexField + Copy>(a: &DMatrix<T>) -> DMatrix<T> {
    (a + a.transpose()) * T::from_real(nalgebra::convert(0.5))
}

pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Largest entry modulus.
pub fn max_abs<'a>(entries: impl IntoIterator<Item = &'a Complex64>) -> f64 {
    entries.into_iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigenvalues of a general complex square matrix via its Schur form.
pub fn eigenvalues(m: &CMatrix) -> Vec<Complex64> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![m[(0, 0)]];
    }
    if n == 2 {
        // Closed form avoids iterative solver overhead on the hottest path.
        let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let half_tr = (a + d) * 0.5;
        let disc = (half_tr * half_tr - (a * d - b * c)).sqrt();
        return vec![half_tr + disc, half_tr - disc];
    }
    let t = Schur::new(m.clone()).unpack().1;
    (0..n).map(|i| t[(i, i)]).collect()
}
