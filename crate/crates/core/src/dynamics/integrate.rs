use std::io::Write;

use crate::error::{CompassError, Result};
use crate::linalg::{c, ComplexMatrix, I};
use crate::model::{
    build_hamiltonian, initial_state, model_lindblads, singlet_projector, expectation,
    FieldDirection, RadicalPairModel, DEPHASING_PREFACTOR, GAMMA_E,
};
use crate::optimize::control::{control_operator, ControlField};
use crate::table::format_number;

/// Trace drift that aborts a propagation.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PropagateOptions {
    /// Upper bound on the step, us.
    pub dt_max: f64,
    /// Per-component absolute error tolerance of the embedded estimate.
    pub atol: f64,
    /// Disables adaptation and uses this step (still clipped to
    /// discontinuities and the end time).
    pub fixed_step: Option<f64>,
    /// Steps resolve every frequency with this many steps per radian.
    pub steps_per_radian: f64,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self {
            dt_max: 0.01,
            atol: 1e-9,
            fixed_step: None,
            steps_per_radian: 50.0,
        }
    }
}

/// Sampled singlet probability `f_S(t)` and the final state.
#[derive(Debug, Clone)]
pub struct PropagationResult {
    pub times: Vec<f64>,
    pub singlet: Vec<f64>,
    pub final_state: ComplexMatrix,
    pub max_trace_drift: f64,
    pub steps: usize,
    pub rejected: usize,
}

impl PropagationResult {
    pub fn t_end(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

struct Generator {
    h0: ComplexMatrix,
    control: Option<(ComplexMatrix, ControlField)>,
    lindblads: Vec<ComplexMatrix>,
    decay: ComplexMatrix,
}

impl Generator {
    /// `end_of_step` selects the left limit of the control at `t`.
    fn hamiltonian(&self, t: f64, end_of_step: bool) -> ComplexMatrix {
        match &self.control {
            Some((op, field)) => {
                let amp = if end_of_step { field.value_before(t) } else { field.value(t) };
                if amp == 0.0 {
                    self.h0.clone()
                } else {
                    &self.h0 + op * c(amp)
                }
            }
            None => self.h0.clone(),
        }
    }

    fn rhs(&self, t: f64, end_of_step: bool, rho: &ComplexMatrix) -> ComplexMatrix {
        let h = self.hamiltonian(t, end_of_step);
        let mut out = (&h * rho - rho * &h) * (-I);
        if !self.lindblads.is_empty() {
            let mut jump = ComplexMatrix::zeros(rho.nrows(), rho.ncols());
            for l in &self.lindblads {
                jump += l * rho * l.adjoint();
            }
            out += (jump * c(2.0) - &self.decay * rho - rho * &self.decay) * c(DEPHASING_PREFACTOR);
        }
        out
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 7] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `d rho/dt = -i[H(t), rho] + L_P(rho)` from the singlet initial
/// state, sampling `f_S(t) = Tr(P_S rho(t))` at every accepted step.
pub fn propagate(
    model: &RadicalPairModel,
    dir: FieldDirection,
    control: Option<&ControlField>,
    t_end: f64,
    dt_max: f64,
) -> Result<PropagationResult> {
    let opts = PropagateOptions {
        dt_max,
        ..PropagateOptions::default()
    };
    propagate_with(model, dir, control, t_end, &opts)
}

pub fn propagate_with(
    model: &RadicalPairModel,
    dir: FieldDirection,
    control: Option<&ControlField>,
    t_end: f64,
    opts: &PropagateOptions,
) -> Result<PropagationResult> {
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(CompassError::InvalidArgument(format!("t_end must be >= 0, got {t_end}")));
    }
    if !(opts.dt_max > 0.0) {
        return Err(CompassError::InvalidArgument("dt_max must be positive".into()));
    }
    if let Some(field) = control {
        field.validate()?;
    }
    let dims = model.dims()?;
    let lindblads = model_lindblads(model)?;
    let decay = lindblads
        .iter()
        .fold(ComplexMatrix::zeros(dims.iter().product(), dims.iter().product()), |acc, l| {
            acc + l.adjoint() * l
        });
    let gen = Generator {
        h0: build_hamiltonian(model, dir)?,
        control: match control {
            Some(f) if !f.is_zero() => Some((control_operator(f, &dims)?, f.clone())),
            _ => None,
        },
        lindblads,
        decay,
    };
    let projector = singlet_projector(model)?;

    let fastest = [
        model.omega(),
        model.hyperfine_scale(),
        control.map_or(0.0, |f| GAMMA_E * f.peak_bound()),
        model.dephasing.gamma,
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    let mut h_cap = opts.dt_max;
    if fastest > 0.0 {
        h_cap = h_cap.min(1.0 / (opts.steps_per_radian * fastest));
    }
    if let Some(fixed) = opts.fixed_step {
        h_cap = h_cap.min(fixed);
    }

    let mut stops: Vec<f64> = control
        .map(|f| f.discontinuities())
        .unwrap_or_default()
        .into_iter()
        .filter(|&s| s > 0.0 && s < t_end)
        .collect();
    stops.push(t_end);
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let mut rho = initial_state(model)?;
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut singlet = vec![expectation(&projector, &rho)];
    let mut max_drift = (rho.trace().re - 1.0).abs();
    let mut h = h_cap;
    let (mut steps, mut rejected) = (0usize, 0usize);
    let mut stop_idx = 0;

    let mut k: Vec<ComplexMatrix> = Vec::with_capacity(7);
    while t_end > 0.0 && stop_idx < stops.len() {
        let stop = stops[stop_idx];
        let remaining = stop - t;
        if remaining <= 1e-14 * stop.max(1.0) {
            stop_idx += 1;
            continue;
        }
        let step = h.min(h_cap).min(remaining);
        if step < 1e-14 * t.max(1.0) {
            return Err(CompassError::StepUnderflow { t, h: step });
        }

        k.clear();
        k.push(gen.rhs(t, false, &rho));
        for s in 1..7 {
            let mut y = rho.clone();
            for (j, &a) in A[s].iter().enumerate() {
                if a != 0.0 {
                    y += &k[j] * c(a * step);
                }
            }
            k.push(gen.rhs(t + C[s] * step, C[s] == 1.0, &y));
        }
        let mut next = rho.clone();
        for (j, &b) in B5.iter().enumerate() {
            if b != 0.0 {
                next += &k[j] * c(b * step);
            }
        }

        let accept = if opts.fixed_step.is_some() {
            true
        } else {
            let mut err = ComplexMatrix::zeros(rho.nrows(), rho.ncols());
            for (j, &e) in ERR.iter().enumerate() {
                if e != 0.0 {
                    err += &k[j] * c(e * step);
                }
            }
            let err_max = err.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let ratio = if err_max > 0.0 { opts.atol / err_max } else { f64::INFINITY };
            let factor = (0.9 * ratio.powf(0.2)).clamp(0.2, 5.0);
            let ok = err_max <= opts.atol;
            h = (step * factor).min(h_cap);
            if !ok {
                rejected += 1;
            }
            ok
        };
        if !accept {
            continue;
        }

        // Keep the state exactly Hermitian.
        rho = (&next + next.adjoint()) * c(0.5);
        t = if step == remaining { stop } else { t + step };
        steps += 1;
        let drift = (rho.trace().re - 1.0).abs();
        max_drift = max_drift.max(drift);
        if drift > TRACE_DRIFT_LIMIT {
            return Err(CompassError::TraceDrift { t, drift });
        }
        times.push(t);
        singlet.push(expectation(&projector, &rho));
    }

    Ok(PropagationResult {
        times,
        singlet,
        final_state: rho,
        max_trace_drift: max_drift,
        steps,
        rejected,
    })
}

/// Quadrature yield with the bound on the neglected tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureYield {
    pub value: f64,
    /// `int_{t_end}^inf k e^{-kt} dt = e^{-k t_end}` bounds the truncation.
    pub tail_bound: f64,
}

/// Time-window factor: the window must reach `14 / k`.
pub const WINDOW_LIFETIMES: f64 = 14.0;

/// `int_0^{t_end} k e^{-kt} f_S(t) dt` by composite Simpson on the (possibly
/// non-uniform) sample grid.
pub fn singlet_yield_quadrature(result: &PropagationResult, k: f64) -> Result<QuadratureYield> {
    if !(k > 0.0) {
        return Err(CompassError::InvalidArgument(format!("rate must be positive, got {k}")));
    }
    let required = WINDOW_LIFETIMES / k;
    let t_end = result.t_end();
    if t_end < required * (1.0 - 1e-12) {
        return Err(CompassError::InsufficientWindow { t_end, required });
    }
    let t = &result.times;
    let g: Vec<f64> = t
        .iter()
        .zip(&result.singlet)
        .map(|(&ti, &fi)| k * (-k * ti).exp() * fi)
        .collect();
    Ok(QuadratureYield {
        value: weighted_simpson(t, &g),
        tail_bound: (-k * t_end).exp(),
    })
}

/// Composite Simpson for non-uniform nodes; a trailing odd interval is closed
/// with the quadratic through the last three nodes.
pub(crate) fn weighted_simpson(t: &[f64], g: &[f64]) -> f64 {
    let n = t.len();
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return 0.5 * (t[1] - t[0]) * (g[0] + g[1]);
    }
    let mut acc = 0.0;
    let mut i = 0;
    while i + 2 < n {
        acc += simpson_pair(t[i], t[i + 1], t[i + 2], g[i], g[i + 1], g[i + 2]);
        i += 2;
    }
    if i + 1 < n {
        // integrate the quadratic through (i-1, i, i+1) over [t_i, t_{i+1}]
        let (t0, t1, t2) = (t[i - 1], t[i], t[i + 1]);
        let (g0, g1, g2) = (g[i - 1], g[i], g[i + 1]);
        acc += quadratic_integral(t0, t1, t2, g0, g1, g2, t1, t2);
    }
    acc
}

fn simpson_pair(t0: f64, t1: f64, t2: f64, g0: f64, g1: f64, g2: f64) -> f64 {
    let h0 = t1 - t0;
    let h1 = t2 - t1;
    let s = h0 + h1;
    s / 6.0 * ((2.0 - h1 / h0) * g0 + s * s / (h0 * h1) * g1 + (2.0 - h0 / h1) * g2)
}

#[allow(clippy::too_many_arguments)]
fn quadratic_integral(t0: f64, t1: f64, t2: f64, g0: f64, g1: f64, g2: f64, a: f64, b: f64) -> f64 {
    // Lagrange basis integrated exactly on [a, b].
    let basis = |ti: f64, tj: f64, tk: f64| {
        let denom = (ti - tj) * (ti - tk);
        let anti = |x: f64| x * x * x / 3.0 - (tj + tk) * x * x / 2.0 + tj * tk * x;
        (anti(b) - anti(a)) / denom
    };
    g0 * basis(t0, t1, t2) + g1 * basis(t1, t0, t2) + g2 * basis(t2, t0, t1)
}

/// Writes `t_us,f_S` rows.
pub fn write_singlet_csv<W: Write>(result: &PropagationResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t_us,f_S")?;
    for (t, f) in result.times.iter().zip(&result.singlet) {
        writeln!(out, "{},{}", format_number(*t), format_number(*f))?;
    }
    Ok(())
}
