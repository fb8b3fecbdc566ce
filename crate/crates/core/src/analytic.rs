//! Closed-form singlet yield for one spin-1/2 nucleus with an axial
//! `diag{0, 0, a}` coupling.
//!
//! With the nuclear spin frozen along z, electron 2 feels the external field
//! plus a static bias `b = +-a/2` along z. Each branch yield is a rational
//! function of the Lorentzian weights `g(x) = k^2 / (k^2 + x^2)` evaluated at
//! the four precession frequencies `B`, `B1`, `B1 + B` and `|B1 - B|`.
//!
//! `B` and `k` are both rates here: the field enters as its Larmor angular
//! frequency in rad/us.

use crate::dynamics::singlet_yield_resolvent;
use crate::error::{CompassError, Result};
use crate::model::{larmor, FieldDirection, HyperfineTensor, NucleusSpec, RadicalPairModel};

/// Below this `B1` the branch angle is undefined and the numeric route is used.
pub const DEGENERATE_FIELD_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticParams {
    /// Larmor angular frequency of the external field, rad/us.
    pub field: f64,
    /// Axial hyperfine coupling, rad/us.
    pub a: f64,
    /// Recombination rate, 1/us.
    pub k: f64,
}

impl AnalyticParams {
    pub fn new(field: f64, a: f64, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(CompassError::InvalidArgument(format!("k must be positive, got {k}")));
        }
        if !(field >= 0.0 && field.is_finite() && a.is_finite()) {
            return Err(CompassError::InvalidArgument(
                "field must be non-negative and finite".into(),
            ));
        }
        Ok(Self { field, a, k })
    }

    /// Field given in uT.
    pub fn from_microtesla(field_ut: f64, a: f64, k: f64) -> Result<Self> {
        Self::new(larmor(field_ut), a, k)
    }
}

/// The field felt by electron 2: magnitude `B1` and polar angle `theta'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveField {
    pub magnitude: f64,
    pub angle: f64,
    pub degenerate: bool,
}

/// A branch value and whether it came from the numeric fallback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchYield {
    pub value: f64,
    pub delegated: bool,
}

pub fn g(x: f64, k: f64) -> f64 {
    k * k / (k * k + x * x)
}

pub fn effective_field(theta: f64, field: f64, b: f64) -> EffectiveField {
    let (s, co) = theta.sin_cos();
    let x = field * s;
    let z = field * co + b;
    let magnitude = x.hypot(z);
    EffectiveField {
        magnitude,
        angle: x.atan2(z),
        degenerate: magnitude < DEGENERATE_FIELD_EPS,
    }
}

fn closed_form(theta: f64, eff: EffectiveField, field: f64, k: f64) -> f64 {
    let cc = (theta - eff.angle).cos();
    let c2 = cc * cc;
    let b1 = eff.magnitude;
    0.25 * (1.0 + c2)
        + 0.25 * (1.0 - c2) * (g(b1, k) + g(field, k))
        + 0.125 * (1.0 - cc).powi(2) * g(b1 + field, k)
        + 0.125 * (1.0 + cc).powi(2) * g(b1 - field, k)
}

/// `Phi_S(theta, b)` for a fixed nuclear branch.
pub fn yield_branch(theta: f64, b: f64, params: &AnalyticParams) -> Result<BranchYield> {
    let eff = effective_field(theta, params.field, b);
    if !eff.degenerate {
        return Ok(BranchYield {
            value: closed_form(theta, eff, params.field, params.k),
            delegated: false,
        });
    }
    // Electron 2 sees no field. Evaluate numerically: a spin-free electron 2
    // with no hyperfine coupling and the branch bias cancelling the field.
    let value = degenerate_branch(theta, b, params)?;
    Ok(BranchYield {
        value,
        delegated: true,
    })
}

/// Numeric branch value: electron 2 coupled to a nucleus pinned in the state
/// that produces bias `b`, evaluated by the resolvent.
fn degenerate_branch(theta: f64, b: f64, params: &AnalyticParams) -> Result<f64> {
    // An axial coupling 2b to a spin-1/2 nucleus gives biases +-b; the branch
    // average of the pair minus the known +b partner isolates this branch.
    let omega = params.field;
    let model = RadicalPairModel {
        field_ut: omega / crate::model::GAMMA_E,
        k: params.k,
        nuclei: vec![NucleusSpec::spin_half(HyperfineTensor::axial(2.0 * b))],
        dephasing: Default::default(),
    };
    let both = singlet_yield_resolvent(&model, FieldDirection::polar(theta))?;
    let partner = effective_field(theta, omega, -b);
    let other = closed_form(theta, partner, omega, params.k);
    Ok(2.0 * both - other)
}

/// Branch average `1/2 [Phi_S(theta, a/2) + Phi_S(theta, -a/2)]`.
pub fn yield_avg(theta: f64, params: &AnalyticParams) -> Result<f64> {
    let up = yield_branch(theta, params.a / 2.0, params)?;
    let down = yield_branch(theta, -params.a / 2.0, params)?;
    Ok(0.5 * (up.value + down.value))
}

/// Large-coupling limit `1/4 (1 + cos^2 theta)`.
pub fn regime1_approx(theta: f64) -> f64 {
    0.25 * (1.0 + theta.cos().powi(2))
}

/// Weak-field large-coupling sensitivity `B^2 / (4 (k^2 + B^2))`.
pub fn weakfield_sensitivity(field: f64, k: f64) -> f64 {
    field * field / (4.0 * (k * k + field * field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn lorentzian() {
        assert_eq!(g(0.0, 1.3), 1.0);
        assert_eq!(g(0.7, 0.7), 0.5);
        assert!((g(2.0, 1.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn effective_field_cases() {
        let e = effective_field(0.0, 1.0, 0.5);
        assert!((e.magnitude - 1.5).abs() < 1e-15 && e.angle == 0.0 && !e.degenerate);
        let e = effective_field(PI / 2.0, 3.0, 4.0);
        assert!((e.magnitude - 5.0).abs() < 1e-14);
        assert!((e.angle.sin() - 0.6).abs() < 1e-14);
        let e = effective_field(0.0, 1.0, -1.0);
        assert!(e.degenerate && e.magnitude == 0.0);
    }

    #[test]
    fn parallel_branch_value() {
        let p = AnalyticParams::new(8.1, 4.0, 0.5).unwrap();
        let y = yield_branch(0.0, 2.0, &p).unwrap();
        assert!((y.value - (0.5 + 0.5 * g(2.0, 0.5))).abs() < 1e-14);
        let p = AnalyticParams::new(8.1, 400.0, 0.5).unwrap();
        let y = yield_branch(0.0, 200.0, &p).unwrap();
        assert!((y.value - 0.5).abs() < 1e-5);
    }

    #[test]
    fn zero_bias_retains_singlet() {
        let p = AnalyticParams::new(8.1, 0.0, 0.5).unwrap();
        for theta in [0.0, 0.3, 1.1, PI / 2.0, 2.5] {
            assert!((yield_branch(theta, 0.0, &p).unwrap().value - 1.0).abs() < 1e-14);
            assert!((yield_avg(theta, &p).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_branch_delegates() {
        let p = AnalyticParams::new(1.0, 2.0, 0.5).unwrap();
        let y = yield_branch(0.0, -1.0, &p).unwrap();
        assert!(y.delegated);
        assert!((0.0..=1.0).contains(&y.value));
        // continuity: the closed form just off the locus is close
        let near = yield_branch(1e-4, -1.0, &p).unwrap();
        assert!(!near.delegated);
        assert!((near.value - y.value).abs() < 1e-3, "{} vs {}", near.value, y.value);
    }

    #[test]
    fn regime_one_limits() {
        assert_eq!(regime1_approx(0.0), 0.5);
        assert!((regime1_approx(PI / 2.0) - 0.25).abs() < 1e-16);
        assert!((regime1_approx(PI / 4.0) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn weak_field_limits() {
        assert_eq!(weakfield_sensitivity(0.0, 0.5), 0.0);
        assert!((weakfield_sensitivity(0.5, 0.5) - 0.125).abs() < 1e-16);
        assert!((weakfield_sensitivity(1e8, 0.5) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(AnalyticParams::new(1.0, 1.0, 0.0).is_err());
        assert!(AnalyticParams::new(-1.0, 1.0, 1.0).is_err());
    }
}
