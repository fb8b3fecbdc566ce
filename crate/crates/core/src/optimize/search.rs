//! Search over control fields for the largest sensitivity.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::dynamics::{controlled_yield, ControlledYieldOptions};
use crate::error::{CompassError, Result};
use crate::model::{FieldDirection, RadicalPairModel};
use crate::parallel::par_map;
use crate::sensitivity::{controlled_response, AngularResponse, ResponseOptions, ThetaRange};

use super::control::{ControlField, ControlShape, HarmonicTerm};
use super::nelder_mead::{nelder_mead, OptimizationReport, OptimizerOptions};

pub const PENALTY_WEIGHT: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlTemplate {
    Harmonic { terms: usize },
    Piecewise { segments: usize },
}

impl ControlTemplate {
    pub fn param_count(self) -> usize {
        match self {
            ControlTemplate::Harmonic { terms } => 3 * terms,
            ControlTemplate::Piecewise { segments } => 2 * segments,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConstraints {
    /// Amplitude bound, uT.
    pub c_max: f64,
    /// Largest harmonic angular frequency, rad/us.
    pub omega_max: f64,
    /// Longest control window, us; `None` means `14 / k`.
    pub duration: Option<f64>,
    /// Tilt of the control direction from x toward z, radians.
    pub polar_offset: f64,
}

impl Default for ControlConstraints {
    fn default() -> Self {
        Self {
            c_max: 1000.0,
            omega_max: 50.0,
            duration: None,
            polar_offset: 0.0,
        }
    }
}

impl ControlConstraints {
    pub fn window(&self, k: f64) -> f64 {
        self.duration.unwrap_or(14.0 / k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSearch {
    pub template: ControlTemplate,
    pub constraints: ControlConstraints,
    pub optimizer: OptimizerOptions,
    pub yield_options: ControlledYieldOptions,
    /// Used for the final reported response.
    pub response: ResponseOptions,
    /// Starting parameters in normalized coordinates (see [`decode`]).
    pub start: Option<Vec<f64>>,
}

impl ControlSearch {
    pub fn new(template: ControlTemplate, constraints: ControlConstraints) -> Self {
        Self {
            template,
            constraints,
            optimizer: OptimizerOptions::default(),
            yield_options: ControlledYieldOptions::default(),
            response: ResponseOptions::new(91, ThetaRange::Full),
            start: None,
        }
    }
}

/// Builds the control field from normalized parameters.
///
/// Harmonic: `[A/c_max, B/c_max, omega/omega_max]` per term, window fixed to
/// the constraint duration. Piecewise: segment lengths as fractions of the
/// window (absolute values, empty segments dropped) followed by amplitudes
/// over `c_max`.
pub fn decode(params: &[f64], template: ControlTemplate, cons: &ControlConstraints, k: f64) -> ControlField {
    let window = cons.window(k);
    let field = match template {
        ControlTemplate::Harmonic { .. } => {
            let terms = params
                .chunks(3)
                .map(|c| HarmonicTerm::new(c[0] * cons.c_max, c[1] * cons.c_max, c[2] * cons.omega_max))
                .collect();
            ControlField::harmonic(terms, cons.c_max, window)
        }
        ControlTemplate::Piecewise { segments } => {
            let (lengths, amps) = params.split_at(segments);
            let mut breakpoints = Vec::with_capacity(segments);
            let mut amplitudes = Vec::with_capacity(segments);
            let mut t = 0.0;
            for (len, amp) in lengths.iter().zip(amps) {
                let span = len.abs() * window;
                if span <= 1e-9 * window {
                    continue;
                }
                t += span;
                breakpoints.push(t);
                amplitudes.push(amp * cons.c_max);
            }
            ControlField::piecewise(breakpoints, amplitudes, cons.c_max)
        }
    };
    field.with_polar_offset(cons.polar_offset)
}

/// Normalized constraint violation.
pub fn violation(field: &ControlField, cons: &ControlConstraints, k: f64) -> f64 {
    let mut v = 0.0;
    match &field.shape {
        ControlShape::HarmonicSum { terms } => {
            let w = terms.iter().fold(0.0f64, |m, t| m.max(t.omega.abs()));
            let samples = ((field.duration * w * 8.0).ceil() as usize).max(1000);
            v += field.amplitude_violation(samples) / cons.c_max;
            v += terms
                .iter()
                .map(|t| (t.omega.abs() / cons.omega_max - 1.0).max(0.0))
                .sum::<f64>();
        }
        ControlShape::PiecewiseConstant { .. } => {
            v += field.amplitude_violation(0) / cons.c_max;
            v += (field.duration / cons.window(k) - 1.0).max(0.0);
        }
    }
    v
}

/// Default start: a slow ramp for harmonic fields, a delayed plateau for steps.
pub fn default_start(template: ControlTemplate, cons: &ControlConstraints, k: f64) -> Vec<f64> {
    match template {
        ControlTemplate::Harmonic { terms } => {
            let w = (20.0 / cons.window(k)) / cons.omega_max;
            (0..terms)
                .flat_map(|i| match i {
                    0 => [0.0, -0.3, w],
                    1 => [0.0, 0.3, 0.0],
                    _ => [0.0, 0.0, w * i as f64],
                })
                .collect()
        }
        ControlTemplate::Piecewise { segments } => {
            let mut p = vec![0.0; 2 * segments];
            for i in 0..segments {
                p[i] = if i == 0 { 0.08 } else { 0.3 / (segments - 1) as f64 };
                p[segments + i] = if i == 0 && segments > 1 { 0.0 } else { 0.9 };
            }
            p
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlReport {
    /// Minimization report; values are `-(Phi(pi/2) - Phi(0)) + penalty`.
    pub report: OptimizationReport,
    pub control: ControlField,
    pub baseline: AngularResponse,
    pub response: AngularResponse,
    pub sensitivity: f64,
    pub constraints: ControlConstraints,
    pub violation: f64,
}

/// Yield difference between perpendicular and parallel field, the quantity
/// driven by the search.
pub fn contrast(
    model: &RadicalPairModel,
    control: &ControlField,
    opts: &ControlledYieldOptions,
) -> Result<f64> {
    let angles = [FRAC_PI_2, 0.0];
    let ys = par_map(&angles, |&t| controlled_yield(model, FieldDirection::polar(t), Some(control), opts));
    Ok(ys[0].clone()? - ys[1].clone()?)
}

/// Maximizes the sensitivity over control fields of the given template.
///
/// The search drives `Phi(pi/2) - Phi(0)` minus the quadratic constraint
/// penalty; the reported sensitivity comes from a full angular response of
/// the best field.
pub fn optimize_control(model: &RadicalPairModel, search: &ControlSearch) -> Result<ControlReport> {
    model.validate()?;
    let cons = search.constraints;
    if !(cons.c_max.is_finite() && cons.c_max >= 0.0 && cons.omega_max > 0.0) {
        return Err(CompassError::InvalidArgument(
            "c_max must be non-negative and omega_max positive".into(),
        ));
    }
    let k = model.k;
    let window = cons.window(k);
    if !(window.is_finite() && window > 0.0) {
        return Err(CompassError::InvalidArgument(format!("control window must be positive, got {window}")));
    }
    let count = search.template.param_count();
    if count == 0 {
        return Err(CompassError::InvalidArgument("control template has no parameters".into()));
    }
    let baseline = controlled_response(model, None, &search.yield_options, search.response)?;

    if cons.c_max == 0.0 {
        let control = decode(&vec![0.0; count], search.template, &cons, k);
        let report = OptimizationReport {
            best_params: vec![0.0; count],
            best_value: -(baseline.sensitivity),
            evaluations: 0,
            converged: true,
            restarts: Vec::new(),
            trace: Vec::new(),
        };
        return Ok(ControlReport {
            report,
            control,
            sensitivity: baseline.sensitivity,
            response: baseline.clone(),
            baseline,
            constraints: cons,
            violation: 0.0,
        });
    }

    let x0 = match &search.start {
        Some(s) if s.len() == count => s.clone(),
        Some(s) => {
            return Err(CompassError::InvalidArgument(format!(
                "start has {} parameters, template needs {count}",
                s.len()
            )))
        }
        None => default_start(search.template, &cons, k),
    };
    let objective = |x: &[f64]| {
        let field = decode(x, search.template, &cons, k);
        if field.validate().is_err() {
            return f64::INFINITY;
        }
        let v = violation(&field, &cons, k);
        match contrast(model, &field, &search.yield_options) {
            Ok(c) => -c + PENALTY_WEIGHT * v * v,
            Err(_) => f64::INFINITY,
        }
    };
    let report = nelder_mead(objective, &x0, &search.optimizer)?;
    let control = decode(&report.best_params, search.template, &cons, k);
    let response = controlled_response(model, Some(&control), &search.yield_options, search.response)?;
    Ok(ControlReport {
        report,
        violation: violation(&control, &cons, k),
        control,
        sensitivity: response.sensitivity,
        response,
        baseline,
        constraints: cons,
    })
}
