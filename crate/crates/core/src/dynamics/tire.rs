//! Combined-slip magic-formula tire.
//!
//! Each channel follows the pure-slip curve
//! `F = μ·Fz·D·sin(C·atan(Bσ − E(Bσ − atan(Bσ))))`. Under combined slip the
//! curve is evaluated on the resultant slip `σ = ‖(κ, α)‖` and split along
//! the slip direction, so the force vector stays inside the friction circle
//! of radius `μ·Fz·D`.

use super::params::TireCoeffs;
use crate::scalar::Scalar;

/// Pure-slip magic formula without the `μ·Fz·D` peak factor.
pub fn magic_formula<S: Scalar>(tire: &TireCoeffs<S>, slip: S) -> S {
    let bs = tire.b * slip;
    let inner = bs - tire.e * (bs - bs.atan());
    (tire.c * inner.atan()).sin()
}

/// Longitudinal and lateral force for slip ratio `kappa` and slip angle
/// `alpha` (rad) under normal load `fz` (N).
pub fn tire_forces<S: Scalar>(mu: S, tire: &TireCoeffs<S>, alpha: S, kappa: S, fz: S) -> (S, S) {
    let peak = mu * fz * tire.d;
    let sq = kappa * kappa + alpha * alpha;
    // MF(σ)/σ is even in σ; below the cutoff use its limit C·B.
    let ratio = if sq.value() < 1e-16 {
        tire.c * tire.b
    } else {
        let sigma = sq.sqrt();
        magic_formula(tire, sigma) / sigma
    };
    let scale = peak * ratio;
    (scale * kappa, scale * alpha)
}
