//! Search over hyperfine tensors for the largest sensitivity.

use serde::{Deserialize, Serialize};

use crate::error::{CompassError, Result};
use crate::model::{HyperfineTensor, NucleusSpec, RadicalPairModel};
use crate::parallel::par_map;
use crate::sensitivity::{model_response, AngularResponse, ResponseOptions};

use super::nelder_mead::{nelder_mead, OptimizationReport, OptimizerOptions};

/// Largest Hilbert dimension accepted by the search.
pub const MAX_HILBERT_DIM: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TensorForm {
    /// `diag{0, 0, a}` per nucleus with `a >= 0`.
    #[default]
    Axial,
    /// `diag{tx, ty, tz}` per nucleus.
    Diagonal,
}

impl TensorForm {
    pub fn params_per_nucleus(self) -> usize {
        match self {
            TensorForm::Axial => 1,
            TensorForm::Diagonal => 3,
        }
    }

    /// Bounds in units of the Larmor frequency.
    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            TensorForm::Axial => (0.0, 20.0),
            TensorForm::Diagonal => (-20.0, 20.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperfineSearch {
    pub form: TensorForm,
    /// Per-parameter `(lower, upper)` in units of the Larmor frequency;
    /// `None` uses [`TensorForm::default_bounds`].
    pub bounds: Option<(f64, f64)>,
    /// Log-spaced coupling values (ratio to the Larmor frequency) tried
    /// before the simplex search to pick its start.
    pub coarse_points: usize,
    pub optimizer: OptimizerOptions,
    pub response: ResponseOptions,
}

impl Default for HyperfineSearch {
    fn default() -> Self {
        Self {
            form: TensorForm::Axial,
            bounds: None,
            coarse_points: 40,
            optimizer: OptimizerOptions {
                max_evaluations: 400,
                ..OptimizerOptions::default()
            },
            response: ResponseOptions::default(),
        }
    }
}

impl HyperfineSearch {
    pub fn with_form(mut self, form: TensorForm) -> Self {
        self.form = form;
        self
    }

    pub fn with_bounds(mut self, lower: f64, upper: f64) -> Self {
        self.bounds = Some((lower, upper));
        self
    }

    fn resolved_bounds(&self) -> Result<(f64, f64)> {
        let (lo, hi) = self.bounds.unwrap_or_else(|| self.form.default_bounds());
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(CompassError::InvalidArgument(format!(
                "invalid hyperfine bounds [{lo}, {hi}]"
            )));
        }
        if self.form == TensorForm::Axial && lo < 0.0 {
            return Err(CompassError::InvalidArgument(
                "axial coupling bounds must be non-negative".into(),
            ));
        }
        Ok((lo, hi))
    }
}

/// Bounded box mapping `p = lo + (hi - lo) sin^2(u)` so the simplex runs
/// unconstrained.
#[derive(Debug, Clone, Copy)]
struct BoxMap {
    lo: f64,
    hi: f64,
}

impl BoxMap {
    fn to_param(self, u: f64) -> f64 {
        self.lo + (self.hi - self.lo) * u.sin().powi(2)
    }

    fn to_search(self, p: f64) -> f64 {
        let s = ((p - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0);
        s.sqrt().asin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperfineReport {
    /// Minimization report; values are `-D_S` over search coordinates.
    pub report: OptimizationReport,
    pub tensors: Vec<HyperfineTensor>,
    pub model: RadicalPairModel,
    pub sensitivity: f64,
    pub response: AngularResponse,
    pub bounds: (f64, f64),
}

fn with_tensors(template: &RadicalPairModel, tensors: &[HyperfineTensor]) -> RadicalPairModel {
    let mut m = template.clone();
    m.nuclei = tensors.iter().map(|t| NucleusSpec::spin_half(*t)).collect();
    m
}

fn tensors_from(params: &[f64], form: TensorForm, omega: f64) -> Vec<HyperfineTensor> {
    match form {
        TensorForm::Axial => params.iter().map(|&a| HyperfineTensor::axial(a * omega)).collect(),
        TensorForm::Diagonal => params
            .chunks(3)
            .map(|c| HyperfineTensor::diagonal(c[0] * omega, c[1] * omega, c[2] * omega))
            .collect(),
    }
}

fn coarse_ratios(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let lo = lo.max(0.02).min(hi);
    if n < 2 || lo == hi {
        return vec![lo];
    }
    let (l, h) = (lo.ln(), hi.ln());
    (0..n).map(|i| (l + (h - l) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Maximizes the sensitivity over the tensors of `n_nuclei` spin-1/2 nuclei
/// on electron 2. Parameters are expressed as multiples of the Larmor
/// frequency.
pub fn optimize_hyperfine(
    template: &RadicalPairModel,
    n_nuclei: usize,
    search: &HyperfineSearch,
) -> Result<HyperfineReport> {
    template.validate()?;
    if n_nuclei == 0 {
        return Err(CompassError::InvalidArgument("at least one nucleus is required".into()));
    }
    let dim = 4usize.saturating_mul(1usize << n_nuclei.min(30));
    if dim > MAX_HILBERT_DIM {
        return Err(CompassError::InvalidArgument(format!(
            "{n_nuclei} nuclei give Hilbert dimension {dim} > {MAX_HILBERT_DIM}"
        )));
    }
    let omega = template.omega();
    if omega <= 0.0 {
        return Err(CompassError::InvalidArgument(
            "hyperfine search needs a non-zero field".into(),
        ));
    }
    let (lo, hi) = search.resolved_bounds()?;
    let boxmap = BoxMap { lo, hi };
    let form = search.form;
    let per = form.params_per_nucleus();

    let sensitivity_of = |params: &[f64]| -> Result<AngularResponse> {
        let model = with_tensors(template, &tensors_from(params, form, omega));
        model_response(&model, search.response)
    };

    // Coarse scan of a single axial coupling on the first nucleus picks the start.
    let ratios = coarse_ratios(lo.max(0.0), hi, search.coarse_points);
    let start_params = |r: f64| {
        let mut p = vec![0.0; n_nuclei * per];
        p[per - 1] = r;
        p.iter().map(|&v| v.clamp(lo, hi)).collect::<Vec<f64>>()
    };
    let coarse = par_map(&ratios, |&r| sensitivity_of(&start_params(r)).map(|s| s.sensitivity));
    let mut best_ratio = ratios[0];
    let mut best_coarse = f64::NEG_INFINITY;
    for (r, s) in ratios.iter().zip(coarse) {
        let s = s?;
        if s > best_coarse {
            best_coarse = s;
            best_ratio = *r;
        }
    }
    let x0: Vec<f64> = start_params(best_ratio).iter().map(|&p| boxmap.to_search(p)).collect();

    let objective = |u: &[f64]| {
        let params: Vec<f64> = u.iter().map(|&v| boxmap.to_param(v)).collect();
        match sensitivity_of(&params) {
            Ok(r) => -r.sensitivity,
            Err(_) => f64::INFINITY,
        }
    };
    let report = nelder_mead(objective, &x0, &search.optimizer)?;
    let params: Vec<f64> = report.best_params.iter().map(|&v| boxmap.to_param(v)).collect();
    let tensors = tensors_from(&params, form, omega);
    let model = with_tensors(template, &tensors);
    let response = model_response(&model, search.response)?;
    Ok(HyperfineReport {
        report,
        tensors,
        model,
        sensitivity: response.sensitivity,
        response,
        bounds: (lo, hi),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxialOptimum {
    /// Optimal `a` in rad/us.
    pub coupling: f64,
    pub sensitivity: f64,
}

/// Single-nucleus axial search.
pub fn optimize_axial(template: &RadicalPairModel, search: &HyperfineSearch) -> Result<AxialOptimum> {
    let search = HyperfineSearch {
        form: TensorForm::Axial,
        ..search.clone()
    };
    let r = optimize_hyperfine(template, 1, &search)?;
    Ok(AxialOptimum {
        coupling: r.tensors[0].matrix[2][2],
        sensitivity: r.sensitivity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_map_round_trip() {
        let b = BoxMap { lo: -2.0, hi: 5.0 };
        for p in [-2.0, 0.0, 1.3, 5.0] {
            assert!((b.to_param(b.to_search(p)) - p).abs() < 1e-12);
        }
        assert!(b.to_param(123.4) >= -2.0 && b.to_param(123.4) <= 5.0);
    }

    #[test]
    fn axial_optimum_near_one_third() {
        let m = RadicalPairModel::one_axial(46.0, 0.5, 0.0);
        let r = optimize_hyperfine(&m, 1, &HyperfineSearch::default()).unwrap();
        let ratio = r.tensors[0].matrix[2][2] / m.omega();
        assert!((r.sensitivity - 0.4028).abs() < 2e-3, "{}", r.sensitivity);
        assert!((ratio - 0.33).abs() < 0.03, "{ratio}");
        assert_eq!(-r.report.best_value, r.sensitivity);
    }

    #[test]
    fn strong_coupling_bound_gives_quarter() {
        let m = RadicalPairModel::one_axial(46.0, 0.5, 0.0);
        let search = HyperfineSearch::default().with_bounds(10.0, 20.0);
        let r = optimize_hyperfine(&m, 1, &search).unwrap();
        assert!((r.sensitivity - 0.25).abs() < 0.02, "{}", r.sensitivity);
        assert!(r.tensors[0].matrix[2][2] >= 10.0 * m.omega() - 1e-9);
    }

    #[test]
    fn rejects_large_spaces() {
        let m = RadicalPairModel::one_axial(46.0, 0.5, 0.0);
        assert!(optimize_hyperfine(&m, 4, &HyperfineSearch::default()).is_err());
        assert!(optimize_hyperfine(&m, 0, &HyperfineSearch::default()).is_err());
    }
}
