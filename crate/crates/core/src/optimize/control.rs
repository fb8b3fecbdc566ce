//! Time-dependent control fields applied to both electron spins.

use serde::{Deserialize, Serialize};

use crate::error::{CompassError, Result};
use crate::linalg::{c, ComplexMatrix};
use crate::model::{electron_spin_projection, GAMMA_E};

/// One `A sin(w t) + B cos(w t)` term; amplitudes in uT, `omega` in rad/us.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicTerm {
    pub sin_amp: f64,
    pub cos_amp: f64,
    pub omega: f64,
}

impl HarmonicTerm {
    pub fn new(sin_amp: f64, cos_amp: f64, omega: f64) -> Self {
        Self {
            sin_amp,
            cos_amp,
            omega,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlShape {
    HarmonicSum {
        terms: Vec<HarmonicTerm>,
    },
    /// `amplitudes[i]` holds on `[breakpoints[i-1], breakpoints[i])` with an
    /// implicit first breakpoint at 0; zero after the last breakpoint.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        amplitudes: Vec<f64>,
    },
}

fn default_direction() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

/// Control amplitude `C(t)` in uT along a fixed direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlField {
    pub shape: ControlShape,
    #[serde(default = "default_direction")]
    pub direction: [f64; 3],
    /// `c_max` in uT.
    pub amplitude_bound: f64,
    /// Field is zero for `t >= duration` (us).
    pub duration: f64,
}

impl ControlField {
    pub fn harmonic(terms: Vec<HarmonicTerm>, amplitude_bound: f64, duration: f64) -> Self {
        Self {
            shape: ControlShape::HarmonicSum { terms },
            direction: default_direction(),
            amplitude_bound,
            duration,
        }
    }

    pub fn piecewise(breakpoints: Vec<f64>, amplitudes: Vec<f64>, amplitude_bound: f64) -> Self {
        let duration = breakpoints.last().copied().unwrap_or(0.0);
        Self {
            shape: ControlShape::PiecewiseConstant {
                breakpoints,
                amplitudes,
            },
            direction: default_direction(),
            amplitude_bound,
            duration,
        }
    }

    /// Tilts the direction away from x toward z by `offset` radians.
    pub fn with_polar_offset(mut self, offset: f64) -> Self {
        let (s, co) = offset.sin_cos();
        self.direction = [co, 0.0, s];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let norm = self.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() < 1e-9) {
            return Err(CompassError::InvalidControl(format!(
                "direction must be a unit vector, |n| = {norm}"
            )));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(CompassError::InvalidControl(format!(
                "duration must be non-negative, got {}",
                self.duration
            )));
        }
        match &self.shape {
            ControlShape::HarmonicSum { terms } => {
                if terms
                    .iter()
                    .any(|t| !(t.sin_amp.is_finite() && t.cos_amp.is_finite() && t.omega.is_finite()))
                {
                    return Err(CompassError::InvalidControl("non-finite harmonic term".into()));
                }
            }
            ControlShape::PiecewiseConstant {
                breakpoints,
                amplitudes,
            } => {
                if breakpoints.len() != amplitudes.len() {
                    return Err(CompassError::InvalidControl(format!(
                        "{} breakpoints but {} amplitudes",
                        breakpoints.len(),
                        amplitudes.len()
                    )));
                }
                let mut prev = 0.0;
                for &b in breakpoints {
                    if !(b.is_finite() && b > prev) {
                        return Err(CompassError::InvalidControl(
                            "breakpoints must be strictly ascending".into(),
                        ));
                    }
                    prev = b;
                }
                if amplitudes.iter().any(|a| !a.is_finite()) {
                    return Err(CompassError::InvalidControl("non-finite amplitude".into()));
                }
            }
        }
        Ok(())
    }

    /// `C(t)` in uT.
    pub fn value(&self, t: f64) -> f64 {
        if t < 0.0 || t >= self.duration {
            return 0.0;
        }
        self.value_inside(t, |b| b <= t)
    }

    /// Left limit `C(t-)`, used when a step ends on a discontinuity.
    pub fn value_before(&self, t: f64) -> f64 {
        if t <= 0.0 || t > self.duration {
            return 0.0;
        }
        self.value_inside(t, |b| b < t)
    }

    fn value_inside(&self, t: f64, passed: impl Fn(f64) -> bool) -> f64 {
        match &self.shape {
            ControlShape::HarmonicSum { terms } => terms
                .iter()
                .map(|term| {
                    let (s, co) = (term.omega * t).sin_cos();
                    term.sin_amp * s + term.cos_amp * co
                })
                .sum(),
            ControlShape::PiecewiseConstant {
                breakpoints,
                amplitudes,
            } => {
                let idx = breakpoints.partition_point(|&b| passed(b));
                amplitudes.get(idx).copied().unwrap_or(0.0)
            }
        }
    }

    /// Guaranteed upper bound on `|C(t)|`.
    pub fn peak_bound(&self) -> f64 {
        match &self.shape {
            ControlShape::HarmonicSum { terms } => terms
                .iter()
                .map(|t| t.sin_amp.hypot(t.cos_amp))
                .sum(),
            ControlShape::PiecewiseConstant { amplitudes, .. } => {
                amplitudes.iter().fold(0.0f64, |m, a| m.max(a.abs()))
            }
        }
    }

    /// `max |C(t)|` over `samples` uniform points on `[0, duration)`; exact for
    /// piecewise-constant shapes.
    pub fn sampled_peak(&self, samples: usize) -> f64 {
        match &self.shape {
            ControlShape::PiecewiseConstant { .. } => self.peak_bound(),
            ControlShape::HarmonicSum { .. } => {
                let n = samples.max(2);
                (0..n)
                    .map(|i| self.value(self.duration * i as f64 / n as f64).abs())
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Amount by which the sampled peak exceeds `amplitude_bound`, in uT.
    pub fn amplitude_violation(&self, samples: usize) -> f64 {
        (self.sampled_peak(samples) - self.amplitude_bound).max(0.0)
    }

    /// Times at which `C(t)` may jump.
    pub fn discontinuities(&self) -> Vec<f64> {
        match &self.shape {
            ControlShape::HarmonicSum { .. } => vec![self.duration],
            ControlShape::PiecewiseConstant { breakpoints, .. } => breakpoints
                .iter()
                .copied()
                .filter(|&b| b <= self.duration)
                .chain(std::iter::once(self.duration))
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.peak_bound() == 0.0 || self.duration == 0.0
    }
}

pub fn control_value(control: &ControlField, t: f64) -> f64 {
    control.value(t)
}

/// Unit-amplitude control operator `gamma_e n_c . (S1 + S2)`.
pub fn control_operator(control: &ControlField, dims: &[usize]) -> Result<ComplexMatrix> {
    Ok(electron_spin_projection(control.direction, dims)? * c(GAMMA_E))
}

/// `gamma_e C(t) n_c . (S1 + S2)` embedded in the full space.
pub fn control_hamiltonian(control: &ControlField, t: f64, dims: &[usize]) -> Result<ComplexMatrix> {
    Ok(control_operator(control, dims)? * c(control.value(t)))
}
