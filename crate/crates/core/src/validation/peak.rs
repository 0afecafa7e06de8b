use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{GbsError, Result};

pub const DEFAULT_BINS: usize = 50;
const MIN_VALUES: usize = 100;
const SIGMA_FLOOR: f64 = 1e-9;
const MAX_ITERATIONS: usize = 500;

/// Single Gaussian fitted to the histogram of repeated χ² values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub x_c: f64,
    pub sigma: f64,
    pub amplitude: f64,
    /// Root-mean-square histogram residual of the fit.
    pub fit_residual: f64,
    /// Standard error of `x_c`.
    pub center_stderr: f64,
    /// The least-squares fit failed and mean/sd were used instead.
    pub fallback: bool,
    /// Every value was identical.
    pub degenerate: bool,
}

fn gauss(p: &Vector3<f64>, x: f64) -> f64 {
    let z = (x - p[1]) / p[2];
    p[0] * (-0.5 * z * z).exp()
}

/// Residuals and Jacobian of `a exp(-(x-c)²/2σ²)` against `(a, c, σ)`.
fn residuals(p: &Vector3<f64>, xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<Vector3<f64>>) {
    let mut r = Vec::with_capacity(xs.len());
    let mut jac = Vec::with_capacity(xs.len());
    for (&x, &y) in xs.iter().zip(ys) {
        let z = (x - p[1]) / p[2];
        let e = (-0.5 * z * z).exp();
        r.push(p[0] * e - y);
        jac.push(Vector3::new(e, p[0] * e * z / p[2], p[0] * e * z * z / p[2]));
    }
    (r, jac)
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Levenberg–Marquardt on the three Gaussian parameters.
fn levenberg_marquardt(mut p: Vector3<f64>, xs: &[f64], ys: &[f64]) -> Option<(Vector3<f64>, Matrix3<f64>, f64)> {
    let mut lambda = 1e-3;
    let (mut r, mut jac) = residuals(&p, xs, ys);
    let mut c = cost(&r);
    for _ in 0..MAX_ITERATIONS {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (ri, ji) in r.iter().zip(&jac) {
            jtj += ji * ji.transpose();
            jtr += ji * *ri;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for i in 0..3 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let step = damped.lu().solve(&(-jtr))?;
            let trial = p + step;
            if !(trial[2] > 0.0) || !trial.iter().all(|v| v.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let (tr, tj) = residuals(&trial, xs, ys);
            let tc = cost(&tr);
            if tc < c {
                let small = step.norm() <= 1e-12 * (p.norm() + 1e-12);
                let flat = c - tc <= 1e-15 * c.max(1e-300);
                p = trial;
                r = tr;
                jac = tj;
                c = tc;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if small || flat {
                    return finish(p, &jac, c, xs.len());
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No downhill step left: we are at the minimum to working precision.
            return finish(p, &jac, c, xs.len());
        }
    }
    None
}

fn finish(p: Vector3<f64>, jac: &[Vector3<f64>], c: f64, n: usize) -> Option<(Vector3<f64>, Matrix3<f64>, f64)> {
    let jtj: Matrix3<f64> = jac.iter().map(|j| j * j.transpose()).sum();
    let dof = n.saturating_sub(3).max(1) as f64;
    let cov = jtj.try_inverse()? * (c / dof);
    Some((p, cov, c))
}

/// Histograms `values` into `n_bins` equal-width bins over their range and
/// fits a single Gaussian by nonlinear least squares.
pub fn fit_gaussian_peak(values: &[f64], n_bins: usize) -> Result<PeakFit> {
    if values.len() < MIN_VALUES {
        return Err(GbsError::InvalidInput(format!("peak fit needs at least {MIN_VALUES} values, got {}", values.len())));
    }
    if n_bins < 4 {
        return Err(GbsError::InvalidParameter(format!("need at least 4 bins, got {n_bins}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(GbsError::InvalidInput("non-finite value in peak fit".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let fallback = |degenerate: bool| PeakFit {
        x_c: mean,
        sigma: sd.max(SIGMA_FLOOR),
        amplitude: 0.0,
        fit_residual: f64::NAN,
        center_stderr: sd / n.sqrt(),
        fallback: true,
        degenerate,
    };
    if hi - lo <= f64::EPSILON * mean.abs().max(1.0) {
        return Ok(fallback(true));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut ys = vec![0.0; n_bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(n_bins - 1);
        ys[b] += 1.0;
    }
    let xs: Vec<f64> = (0..n_bins).map(|b| lo + (b as f64 + 0.5) * width).collect();
    let peak = ys.iter().copied().fold(0.0, f64::max);
    let start = Vector3::new(peak, mean, sd.max(width / 2.0));
    match levenberg_marquardt(start, &xs, &ys) {
        Some((p, cov, c)) if p[1] >= lo && p[1] <= hi && p[2] > 0.0 && cov[(1, 1)] >= 0.0 => Ok(PeakFit {
            x_c: p[1],
            sigma: p[2].max(SIGMA_FLOOR),
            amplitude: p[0],
            fit_residual: (c / n_bins as f64).sqrt(),
            center_stderr: cov[(1, 1)].sqrt(),
            fallback: false,
            degenerate: false,
        }),
        _ => Ok(fallback(false)),
    }
}

/// Value of the fitted peak at `x`.
pub fn peak_density(fit: &PeakFit, x: f64) -> f64 {
    gauss(&Vector3::new(fit.amplitude, fit.x_c, fit.sigma), x)
}
