//! Angular response curves and the sensitivity `D_S = Phi_max - Phi_min`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::dynamics::{controlled_yield, singlet_yield, ControlledYieldOptions};
use crate::error::{CompassError, Result};
use crate::model::{FieldDirection, HyperfineTensor, NucleusSpec, RadicalPairModel};
use crate::optimize::control::ControlField;
use crate::parallel::par_map;

pub const DEFAULT_GRID: usize = 91;
pub const MIN_GRID: usize = 9;
/// Extrema are located to this width in theta.
pub const REFINE_TOL: f64 = 1e-6;

/// Polar-angle interval sampled for the response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThetaRange {
    /// `[0, pi/2]`, enough when `Phi(theta) = Phi(pi - theta)`.
    #[default]
    Half,
    /// `[0, pi]`.
    Full,
}

impl ThetaRange {
    pub fn upper(self) -> f64 {
        match self {
            ThetaRange::Half => FRAC_PI_2,
            ThetaRange::Full => PI,
        }
    }

    pub fn from_full(full: bool) -> Self {
        if full {
            ThetaRange::Full
        } else {
            ThetaRange::Half
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseOptions {
    pub grid_size: usize,
    pub range: ThetaRange,
}

impl Default for ResponseOptions {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_GRID,
            range: ThetaRange::Half,
        }
    }
}

impl ResponseOptions {
    pub fn new(grid_size: usize, range: ThetaRange) -> Self {
        Self { grid_size, range }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngularResponse {
    pub theta: Vec<f64>,
    pub yields: Vec<f64>,
    pub theta_max: f64,
    pub yield_max: f64,
    pub theta_min: f64,
    pub yield_min: f64,
    pub sensitivity: f64,
}

fn evaluate<F>(eval: &F, theta: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    match eval(theta) {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(CompassError::Evaluation {
            theta,
            message: format!("non-finite yield {v}"),
        }),
        Err(CompassError::Evaluation { theta, message }) => {
            Err(CompassError::Evaluation { theta, message })
        }
        Err(e) => Err(CompassError::Evaluation {
            theta,
            message: e.to_string(),
        }),
    }
}

/// Golden-section search for the maximum of `f` on `[lo, hi]`.
fn golden_max<F>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}

/// Refines the grid extremum at `idx`; `sign` is +1 for a maximum and -1 for
/// a minimum.
fn refine<F>(eval: &F, theta: &[f64], yields: &[f64], idx: usize, sign: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let lo = theta[idx.saturating_sub(1)];
    let hi = theta[(idx + 1).min(theta.len() - 1)];
    let signed = |t: f64| evaluate(eval, t).map(|v| sign * v);
    let (t, v) = golden_max(&signed, lo, hi, REFINE_TOL)?;
    let grid_best = sign * yields[idx];
    Ok(if v > grid_best {
        (t, sign * v)
    } else {
        (theta[idx], yields[idx])
    })
}

/// Samples `eval` on a uniform theta grid and refines both extrema.
pub fn angular_response<F>(eval: F, opts: ResponseOptions) -> Result<AngularResponse>
where
    F: Fn(f64) -> Result<f64> + Sync + Send,
{
    if opts.grid_size < MIN_GRID {
        return Err(CompassError::InvalidArgument(format!(
            "grid size must be at least {MIN_GRID}, got {}",
            opts.grid_size
        )));
    }
    let upper = opts.range.upper();
    let n = opts.grid_size;
    let theta: Vec<f64> = (0..n).map(|i| upper * i as f64 / (n - 1) as f64).collect();
    let yields = par_map(&theta, |&t| evaluate(&eval, t))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;

    let (mut imax, mut imin) = (0, 0);
    for (i, &v) in yields.iter().enumerate() {
        if v > yields[imax] {
            imax = i;
        }
        if v < yields[imin] {
            imin = i;
        }
    }
    let (theta_max, yield_max) = refine(&eval, &theta, &yields, imax, 1.0)?;
    let (theta_min, yield_min) = refine(&eval, &theta, &yields, imin, -1.0)?;
    Ok(AngularResponse {
        theta,
        yields,
        theta_max,
        yield_max,
        theta_min,
        yield_min,
        sensitivity: (yield_max - yield_min).max(0.0),
    })
}

/// Response of a time-independent model at `phi = 0`.
pub fn model_response(model: &RadicalPairModel, opts: ResponseOptions) -> Result<AngularResponse> {
    model.validate()?;
    angular_response(|t| singlet_yield(model, FieldDirection::polar(t)), opts)
}

/// Response of a model driven by `control`.
pub fn controlled_response(
    model: &RadicalPairModel,
    control: Option<&ControlField>,
    yield_opts: &ControlledYieldOptions,
    opts: ResponseOptions,
) -> Result<AngularResponse> {
    model.validate()?;
    angular_response(
        |t| controlled_yield(model, FieldDirection::polar(t), control, yield_opts),
        opts,
    )
}

/// Parameter varied by [`sensitivity_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanAxis {
    /// Axial coupling `a` of the single nucleus, rad/us.
    Hyperfine,
    /// Field magnitude, uT.
    Field,
    /// Recombination rate, 1/us.
    Rate,
    /// Dephasing rate, 1/us.
    Dephasing,
}

impl std::str::FromStr for ScanAxis {
    type Err = CompassError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(ScanAxis::Hyperfine),
            "B" | "b" => Ok(ScanAxis::Field),
            "k" => Ok(ScanAxis::Rate),
            "gamma" => Ok(ScanAxis::Dephasing),
            other => Err(CompassError::InvalidArgument(format!(
                "unknown scan axis '{other}', expected a, B, k or gamma"
            ))),
        }
    }
}

/// `template` with one axis set to `value`.
pub fn apply_axis(template: &RadicalPairModel, axis: ScanAxis, value: f64) -> Result<RadicalPairModel> {
    if !value.is_finite() {
        return Err(CompassError::InvalidArgument(format!("scan value {value} is not finite")));
    }
    let mut m = template.clone();
    match axis {
        ScanAxis::Hyperfine => match m.nuclei.as_mut_slice() {
            [n] => n.hyperfine = HyperfineTensor::axial(value).on_electron(n.hyperfine.electron),
            [] => m.nuclei.push(NucleusSpec::spin_half(HyperfineTensor::axial(value))),
            _ => {
                return Err(CompassError::InvalidArgument(
                    "hyperfine scan needs a template with one nucleus".into(),
                ))
            }
        },
        ScanAxis::Field => m.field_ut = value,
        ScanAxis::Rate => m.k = value,
        ScanAxis::Dephasing => m.dephasing.gamma = value,
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub value: f64,
    pub response: Result<AngularResponse>,
}

/// One response per value, in input order; failures are kept per point.
pub fn sensitivity_scan(
    template: &RadicalPairModel,
    axis: ScanAxis,
    values: &[f64],
    opts: ResponseOptions,
) -> Vec<ScanPoint> {
    par_map(values, |&value| ScanPoint {
        value,
        response: apply_axis(template, axis, value).and_then(|m| model_response(&m, opts)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifetimePoint {
    pub lifetime: f64,
    /// Coupling used (optimized or taken from the template).
    pub coupling: Option<f64>,
    pub sensitivity: Result<f64>,
}

/// For each lifetime `tau` (us) sets `k = 1/tau` and reports the sensitivity,
/// optionally after optimizing the axial coupling.
pub fn lifetime_sensitivity(
    template: &RadicalPairModel,
    lifetimes: &[f64],
    optimize_a: bool,
    search: &crate::optimize::HyperfineSearch,
) -> Vec<LifetimePoint> {
    par_map(lifetimes, |&tau| {
        if !(tau.is_finite() && tau > 0.0) {
            return LifetimePoint {
                lifetime: tau,
                coupling: None,
                sensitivity: Err(CompassError::InvalidArgument(format!(
                    "lifetime must be positive, got {tau}"
                ))),
            };
        }
        let mut model = template.clone();
        model.k = 1.0 / tau;
        if optimize_a {
            match crate::optimize::optimize_axial(&model, search) {
                Ok(r) => LifetimePoint {
                    lifetime: tau,
                    coupling: Some(r.coupling),
                    sensitivity: Ok(r.sensitivity),
                },
                Err(e) => LifetimePoint {
                    lifetime: tau,
                    coupling: None,
                    sensitivity: Err(e),
                },
            }
        } else {
            LifetimePoint {
                lifetime: tau,
                coupling: model.single_axial_coupling(),
                sensitivity: model_response(&model, search.response).map(|r| r.sensitivity),
            }
        }
    })
}
