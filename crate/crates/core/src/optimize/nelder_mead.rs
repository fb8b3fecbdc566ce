//! Nelder-Mead simplex minimization with seeded restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CompassError, Result};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerOptions {
    pub max_evaluations: usize,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    /// Stop when `f_worst - f_best` falls below this...
    pub f_tol: f64,
    /// ...and every vertex is within this distance (max norm) of the best.
    pub x_tol: f64,
    /// Additional runs started around the incumbent after convergence.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 5000,
            initial_step: 0.1,
            f_tol: 1e-12,
            x_tol: 1e-8,
            restarts: 3,
            seed: 1,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = self.max_evaluations > 0
            && self.initial_step > 0.0
            && self.f_tol > 0.0
            && self.x_tol > 0.0
            && self.initial_step.is_finite();
        if positive {
            Ok(())
        } else {
            Err(CompassError::InvalidArgument(
                "optimizer budget, step and tolerances must be positive".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub start: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub best_params: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    /// True when the last run met both tolerances before the budget ran out.
    pub converged: bool,
    pub restarts: Vec<RestartRecord>,
    /// `(evaluation count, best value so far)` after each iteration.
    pub trace: Vec<(usize, f64)>,
}

struct Counter<F> {
    f: F,
    evaluations: usize,
    budget: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counter<F> {
    /// Past the budget the objective is no longer called.
    fn eval(&mut self, x: &[f64]) -> f64 {
        if self.exhausted() {
            return f64::INFINITY;
        }
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    fn exhausted(&self) -> bool {
        self.evaluations >= self.budget
    }
}

struct Simplex {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Simplex {
    fn sort(&mut self) {
        let mut idx: Vec<usize> = (0..self.points.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        self.points = idx.iter().map(|&i| self.points[i].clone()).collect();
        self.values = idx.iter().map(|&i| self.values[i]).collect();
    }

    fn converged(&self, f_tol: f64, x_tol: f64) -> bool {
        let n = self.values.len() - 1;
        let f_spread = self.values[n] - self.values[0];
        let x_spread = self.points[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&self.points[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        f_spread <= f_tol && x_spread <= x_tol
    }
}

fn combine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b - a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// One simplex run until tolerance or budget. Returns whether it converged.
fn run<F: FnMut(&[f64]) -> f64>(
    counter: &mut Counter<F>,
    mut simplex: Simplex,
    opts: &OptimizerOptions,
    trace: &mut Vec<(usize, f64)>,
) -> (Vec<f64>, f64, bool) {
    let n = simplex.points.len() - 1;
    loop {
        simplex.sort();
        trace.push((counter.evaluations, simplex.values[0]));
        if simplex.converged(opts.f_tol, opts.x_tol) {
            return (simplex.points[0].clone(), simplex.values[0], true);
        }
        if counter.exhausted() {
            return (simplex.points[0].clone(), simplex.values[0], false);
        }
        let mut centroid = vec![0.0; n];
        for p in &simplex.points[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let worst = simplex.points[n].clone();
        let f_worst = simplex.values[n];
        let reflected = combine(&centroid, &worst, -REFLECT);
        let f_r = counter.eval(&reflected);

        if f_r < simplex.values[0] {
            let expanded = combine(&centroid, &worst, -EXPAND);
            let f_e = counter.eval(&expanded);
            if f_e < f_r {
                simplex.points[n] = expanded;
                simplex.values[n] = f_e;
            } else {
                simplex.points[n] = reflected;
                simplex.values[n] = f_r;
            }
            continue;
        }
        if f_r < simplex.values[n - 1] {
            simplex.points[n] = reflected;
            simplex.values[n] = f_r;
            continue;
        }
        // contraction, outside when the reflection beat the worst vertex
        let (candidate, bound) = if f_r < f_worst {
            (combine(&centroid, &reflected, CONTRACT), f_r)
        } else {
            (combine(&centroid, &worst, CONTRACT), f_worst)
        };
        let f_c = counter.eval(&candidate);
        if f_c < bound {
            simplex.points[n] = candidate;
            simplex.values[n] = f_c;
            continue;
        }
        let best = simplex.points[0].clone();
        for i in 1..=n {
            simplex.points[i] = combine(&best, &simplex.points[i], SHRINK);
            simplex.values[i] = counter.eval(&simplex.points[i]);
        }
    }
}

/// Minimizes `objective` from `x0`. Non-finite objective values count as
/// `+inf`; the objective must be finite at `x0`.
pub fn nelder_mead<F>(objective: F, x0: &[f64], opts: &OptimizerOptions) -> Result<OptimizationReport>
where
    F: FnMut(&[f64]) -> f64,
{
    opts.validate()?;
    if x0.is_empty() {
        return Err(CompassError::InvalidArgument("empty start vector".into()));
    }
    let mut counter = Counter {
        f: objective,
        evaluations: 0,
        budget: opts.max_evaluations,
    };
    let f0 = counter.eval(x0);
    if !f0.is_finite() {
        return Err(CompassError::InvalidArgument(
            "objective is not finite at the start point".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut trace = Vec::new();
    let mut records = Vec::new();
    let (mut best_x, mut best_f) = (x0.to_vec(), f0);
    let mut converged = false;

    for attempt in 0..=opts.restarts {
        if counter.exhausted() {
            break;
        }
        let start = best_x.clone();
        let before = counter.evaluations;
        let mut points = vec![start.clone()];
        let mut values = vec![best_f];
        for i in 0..start.len() {
            let mut p = start.clone();
            let step = if attempt == 0 {
                opts.initial_step
            } else {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * opts.initial_step * rng.random_range(0.5..1.5)
            };
            p[i] += step;
            values.push(counter.eval(&p));
            points.push(p);
        }
        let (x, f, ok) = run(&mut counter, Simplex { points, values }, opts, &mut trace);
        records.push(RestartRecord {
            start,
            best_value: f,
            evaluations: counter.evaluations - before,
            converged: ok,
        });
        converged = ok;
        if f < best_f {
            best_x = x;
            best_f = f;
        }
    }

    Ok(OptimizationReport {
        best_params: best_x,
        best_value: best_f,
        evaluations: counter.evaluations,
        converged,
        restarts: records,
        trace,
    })
}
