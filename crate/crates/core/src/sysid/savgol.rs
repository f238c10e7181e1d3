//! Savitzky–Golay differentiation and body-frame velocity estimation.

use nalgebra::{DMatrix, DVector};

use super::log::DriveLog;
use crate::error::{Error, Result};

/// Body-frame velocities estimated from a pose log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Velocities {
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub yaw_rate: Vec<f64>,
}

/// First-derivative weights of a least-squares polynomial fit of degree
/// `polyorder` over `window` unit-spaced samples, evaluated at offset
/// `at` from the window's first sample.
fn derivative_weights(window: usize, polyorder: usize, at: f64) -> Vec<f64> {
    let half = (window / 2) as f64;
    let a = DMatrix::from_fn(window, polyorder + 1, |i, k| (i as f64 - half).powi(k as i32));
    // Weights w solve w = A (AᵀA)⁻¹ d, where d is the derivative of the monomial basis at `at`.
    let x = at - half;
    let d = DVector::from_fn(polyorder + 1, |k, _| if k == 0 { 0.0 } else { k as f64 * x.powi(k as i32 - 1) });
    let ata = a.transpose() * &a;
    let sol = ata.cholesky().expect("Vandermonde normal matrix is positive definite").solve(&d);
    (a * sol).iter().copied().collect()
}

/// Savitzky–Golay first derivative of uniformly sampled `signal` with
/// sample spacing `dt`. Samples within `window/2` of either end use the fit
/// of the first or last full window.
pub fn savgol_derivative(signal: &[f64], dt: f64, window: usize, polyorder: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 || window <= polyorder {
        return Err(Error::Config(format!(
            "Savitzky-Golay window must be odd and exceed the polynomial order (window {window}, order {polyorder})"
        )));
    }
    let n = signal.len();
    if n < window {
        return Err(Error::Config(format!("signal of {n} samples is shorter than the filter window {window}")));
    }
    let half = window / 2;
    let center = derivative_weights(window, polyorder, half as f64);
    let mut out = vec![0.0; n];
    let apply = |w: &[f64], start: usize| -> f64 { w.iter().zip(&signal[start..start + window]).map(|(a, b)| a * b).sum::<f64>() / dt };
    for i in half..n - half {
        out[i] = apply(&center, i - half);
    }
    for j in 0..half {
        let w = derivative_weights(window, polyorder, j as f64);
        out[j] = apply(&w, 0);
        let w = derivative_weights(window, polyorder, (window - 1 - j) as f64);
        out[n - 1 - j] = apply(&w, n - window);
    }
    Ok(out)
}

/// Removes 2π jumps between consecutive angles.
pub fn unwrap_angles(a: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len());
    let mut offset = 0.0f64;
    for (i, &v) in a.iter().enumerate() {
        if i > 0 {
            let step: f64 = v + offset - out[i - 1];
            offset -= std::f64::consts::TAU * (step / std::f64::consts::TAU).round();
        }
        out.push(v + offset);
    }
    out
}

/// Differentiates position and unwrapped yaw, then rotates the world-frame
/// velocity into the body frame.
pub fn estimate_velocities(log: &DriveLog, window: usize, polyorder: usize) -> Result<Velocities> {
    let dt = log.dt();
    let yaw = unwrap_angles(&log.yaw);
    let dx = savgol_derivative(&log.x, dt, window, polyorder)?;
    let dy = savgol_derivative(&log.y, dt, window, polyorder)?;
    let yaw_rate = savgol_derivative(&yaw, dt, window, polyorder)?;
    let (vx, vy) = yaw
        .iter()
        .zip(dx.iter().zip(&dy))
        .map(|(&psi, (&a, &b))| {
            let (s, c) = psi.sin_cos();
            (c * a + s * b, -s * a + c * b)
        })
        .unzip();
    Ok(Velocities { vx, vy, yaw_rate })
}
