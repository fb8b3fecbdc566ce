//! Experiment drivers behind the command-line subcommands. Each returns the
//! tables and text reports to write; nothing here touches the filesystem.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use serde::Serialize;

use crate::analytic::{yield_avg, AnalyticParams};
use crate::config::{ExperimentConfig, ModelConfig, OptimizeTarget};
use crate::dynamics::{propagate_with, singlet_yield, ControlledYieldOptions, PropagateOptions};
use crate::error::{CompassError, Result};
use crate::model::{DephasingSpec, FieldDirection, RadicalPairModel};
use crate::optimize::{
    optimize_axial, optimize_control, optimize_hyperfine, ControlField, ControlReport, ControlSearch,
    OptimizationReport, TensorForm,
};
use crate::parallel::par_map;
use crate::sensitivity::{
    angular_response, apply_axis, model_response, AngularResponse, ResponseOptions, ScanAxis,
};
use crate::table::{content_hash, format_number, ResultTable};

pub const TOOL_NAME: &str = "compass";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tables and text files produced by one command.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub tables: Vec<(String, ResultTable)>,
    pub texts: Vec<(String, String)>,
    /// Headline numbers, also printed by the CLI.
    pub summary: Vec<(String, String)>,
}

impl RunOutput {
    fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    pub fn table(&self, name: &str) -> Option<&ResultTable> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn text(&self, name: &str) -> Option<&str> {
        self.texts.iter().find(|(n, _)| n == name).map(|(_, t)| t.as_str())
    }

    pub fn summary_value(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Provenance written into every table header.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub command: String,
    pub config: ExperimentConfig,
    pub jobs: Option<usize>,
    /// Where the job count came from (`flag`, an environment variable, or
    /// `default`).
    pub jobs_source: String,
}

/// Keys whose values change between otherwise identical runs.
pub const VOLATILE_KEYS: [&str; 2] = ["jobs", "wall_time_s"];

/// Prepends provenance to every table header and appends run-specific
/// entries (job count, wall time) at its end.
pub fn stamp(out: &mut RunOutput, ctx: &RunContext, wall_time_s: f64) {
    let config_text = ctx.config.to_toml();
    let hash = content_hash(&config_text);
    for (_, table) in &mut out.tables {
        let mut meta = vec![
            ("tool".to_string(), format!("{TOOL_NAME} {TOOL_VERSION}")),
            ("command".to_string(), ctx.command.clone()),
            ("config_sha256".to_string(), hash.clone()),
            ("config".to_string(), config_text.clone()),
        ];
        meta.append(&mut table.metadata);
        meta.push((
            "jobs".to_string(),
            format!(
                "{} ({})",
                ctx.jobs.map_or("auto".to_string(), |j| j.to_string()),
                ctx.jobs_source
            ),
        ));
        meta.push(("wall_time_s".to_string(), format!("{wall_time_s:.3}")));
        table.metadata = meta;
    }
    for (_, text) in &mut out.texts {
        *text = format!("# {TOOL_NAME} {TOOL_VERSION} {} config_sha256={hash}\n{text}", ctx.command);
    }
}

/// Evaluates every point independently and in parallel; rows follow input
/// order and failures become error rows.
pub fn parallel_sweep<P, F>(columns: &[&str], points: &[P], eval: F) -> ResultTable
where
    P: Sync,
    F: Fn(&P) -> Result<Vec<f64>> + Sync + Send,
{
    let results = par_map(points, |p| eval(p));
    let mut table = ResultTable::new(columns.iter().copied());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(row) if row.len() == columns.len() => table.push(row),
            Ok(row) => table.push_error(format!("point {i}: {} values for {} columns", row.len(), columns.len())),
            Err(e) => table.push_error(format!("point {i}: {e}")),
        }
    }
    table
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (l, h) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (l + (h - l) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn response_meta(table: &mut ResultTable, r: &AngularResponse) {
    table.meta("D_S", format_number(r.sensitivity));
    table.meta("theta_max", format_number(r.theta_max));
    table.meta("theta_min", format_number(r.theta_min));
}

fn scan_row(value: f64, r: &AngularResponse) -> Vec<f64> {
    vec![value, r.sensitivity, r.theta_max, r.theta_min]
}

/// Singlet yield over the theta grid, with the closed form alongside when
/// the model is the single axial nucleus without dephasing.
pub fn cmd_yield(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let model = cfg.model()?;
    let response = model_response(&model, cfg.run.response())?;
    let analytic = match (model.single_axial_coupling(), model.dephasing.is_active()) {
        (Some(a), false) => Some(AnalyticParams::new(model.omega(), a, model.k)?),
        _ => None,
    };
    let mut table = match analytic {
        Some(_) => ResultTable::new(["theta_rad", "phi_S", "phi_S_analytic", "abs_diff"]),
        None => ResultTable::new(["theta_rad", "phi_S"]),
    };
    let mut max_diff: f64 = 0.0;
    for (&t, &y) in response.theta.iter().zip(&response.yields) {
        match &analytic {
            Some(p) => {
                let a = yield_avg(t, p)?;
                max_diff = max_diff.max((a - y).abs());
                table.push(vec![t, y, a, (a - y).abs()]);
            }
            None => table.push(vec![t, y]),
        }
    }
    response_meta(&mut table, &response);
    let mut out = RunOutput::default();
    out.note("D_S", format_number(response.sensitivity));
    out.note("theta_max", format_number(response.theta_max));
    out.note("theta_min", format_number(response.theta_min));
    if analytic.is_some() {
        table.meta("max_abs_diff", format_number(max_diff));
        out.note("max_abs_diff", format_number(max_diff));
    }
    out.tables.push(("yield.csv".into(), table));
    Ok(out)
}

/// Sensitivity against the coupling-to-field ratio, with the optional
/// contour grid and the optimized-coupling lifetime table.
pub fn cmd_fig1(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let template = cfg.model()?;
    let f1 = &cfg.run.fig1;
    let opts = cfg.run.response();
    let mut out = RunOutput::default();

    let ratios = log_space(f1.ratio_min, f1.ratio_max, f1.points);
    let omega = template.omega();
    let scan = parallel_sweep(&["a_over_B", "a_rad_per_us", "D_S", "theta_max", "theta_min"], &ratios, |&r| {
        let m = apply_axis(&template, ScanAxis::Hyperfine, r * omega)?;
        let resp = model_response(&m, opts)?;
        Ok(vec![r, r * omega, resp.sensitivity, resp.theta_max, resp.theta_min])
    });
    if let Some(ds) = scan.column("D_S") {
        let (i, best) = ds
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        out.note("best_D_S", format_number(best));
        out.note("best_a_over_B", format_number(ratios[i]));
        out.note("D_S_at_max_ratio", format_number(*ds.last().unwrap_or(&f64::NAN)));
    }
    out.tables.push(("fig1_scan.csv".into(), scan));

    if !f1.contour_fields_ut.is_empty() {
        let cr = log_space(f1.ratio_min, f1.ratio_max, f1.contour_ratios);
        let points: Vec<(f64, f64)> = f1
            .contour_fields_ut
            .iter()
            .flat_map(|&b| cr.iter().map(move |&r| (b, r)))
            .collect();
        let contour = parallel_sweep(&["field_ut", "a_over_B", "D_S"], &points, |&(b, r)| {
            let mut m = template.clone();
            m.field_ut = b;
            let m = apply_axis(&m, ScanAxis::Hyperfine, r * m.omega())?;
            Ok(vec![b, r, model_response(&m, opts)?.sensitivity])
        });
        out.tables.push(("fig1_contour.csv".into(), contour));
    }

    if !f1.lifetimes_us.is_empty() && !f1.lifetime_fields_ut.is_empty() {
        let search = cfg
            .run
            .optimize
            .hyperfine
            .search(cfg.run.seed, opts);
        let search = crate::optimize::HyperfineSearch {
            form: TensorForm::Axial,
            bounds: Some((0.0, f1.lifetime_ratio_max)),
            coarse_points: search.coarse_points.max(60),
            ..search
        };
        let points: Vec<(f64, f64)> = f1
            .lifetime_fields_ut
            .iter()
            .flat_map(|&b| f1.lifetimes_us.iter().map(move |&tau| (b, tau)))
            .collect();
        let life = parallel_sweep(
            &["field_ut", "tau_us", "a_opt_rad_per_us", "a_opt_over_B", "D_S"],
            &points,
            |&(b, tau)| {
                let mut m = template.clone();
                m.field_ut = b;
                m.k = 1.0 / tau;
                let best = optimize_axial(&m, &search)?;
                Ok(vec![b, tau, best.coupling, best.coupling / m.omega(), best.sensitivity])
            },
        );
        out.tables.push(("fig1_lifetime.csv".into(), life));
    }
    Ok(out)
}

fn control_search(cfg: &ExperimentConfig) -> ControlSearch {
    let cc = &cfg.run.optimize.control;
    ControlSearch {
        template: cc.template(),
        constraints: cc.constraints(),
        optimizer: cc.optimizer.options(cfg.run.seed),
        yield_options: ControlledYieldOptions {
            steps_per_radian: cc.steps_per_radian,
            ..ControlledYieldOptions::default()
        },
        response: cfg.run.full_response(),
        start: cc.start.clone(),
    }
}

/// Linear interpolation of `(t, y)` samples onto `grid`.
fn resample(t: &[f64], y: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut j = 0;
    grid.iter()
        .map(|&g| {
            while j + 2 < t.len() && t[j + 1] < g {
                j += 1;
            }
            let (t0, t1) = (t[j], t[(j + 1).min(t.len() - 1)]);
            if t1 <= t0 {
                return y[j];
            }
            let w = ((g - t0) / (t1 - t0)).clamp(0.0, 1.0);
            y[j] + w * (y[(j + 1).min(t.len() - 1)] - y[j])
        })
        .collect()
}

/// `f_S(t)` at theta = 0 and pi/2 with and without the control, on a
/// uniform grid over `[0, max(14/k, duration + 2/k)]`.
pub fn singlet_traces(
    model: &RadicalPairModel,
    control: &ControlField,
    step: f64,
) -> Result<ResultTable> {
    let t_end = (14.0 / model.k).max(control.duration + 2.0 / model.k);
    let n = (t_end / step).round().max(1.0) as usize;
    let grid: Vec<f64> = (0..=n).map(|i| t_end * i as f64 / n as f64).collect();
    let cases = [
        (0.0, false),
        (0.0, true),
        (FRAC_PI_2, false),
        (FRAC_PI_2, true),
    ];
    let runs = par_map(&cases, |&(theta, on)| {
        let field = if on && !control.is_zero() { Some(control) } else { None };
        propagate_with(model, FieldDirection::polar(theta), field, t_end, &PropagateOptions::default())
            .map(|r| resample(&r.times, &r.singlet, &grid))
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let mut table = ResultTable::new([
        "t_us",
        "f_S_theta0_free",
        "f_S_theta0_control",
        "f_S_theta90_free",
        "f_S_theta90_control",
        "C_uT",
    ]);
    for (i, &t) in grid.iter().enumerate() {
        table.push(vec![t, runs[0][i], runs[1][i], runs[2][i], runs[3][i], control.value(t)]);
    }
    Ok(table)
}

fn report_text(title: &str, report: &OptimizationReport, extra: &[(String, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[{title}]");
    for (k, v) in extra {
        let _ = writeln!(s, "{k} = {v}");
    }
    let _ = writeln!(s, "best_objective = {}", format_number(report.best_value));
    let _ = writeln!(s, "evaluations = {}", report.evaluations);
    let _ = writeln!(s, "converged = {}", report.converged);
    let params: Vec<String> = report.best_params.iter().map(|v| format_number(*v)).collect();
    let _ = writeln!(s, "best_params = [{}]", params.join(", "));
    for (i, r) in report.restarts.iter().enumerate() {
        let _ = writeln!(
            s,
            "run {i}: best = {}, evaluations = {}, converged = {}",
            format_number(r.best_value),
            r.evaluations,
            r.converged
        );
    }
    s
}

fn trace_table(report: &OptimizationReport, negate: bool) -> ResultTable {
    let mut t = ResultTable::new(["evaluations", "objective"]);
    for &(n, v) in &report.trace {
        t.push(vec![n as f64, if negate { -v } else { v }]);
    }
    t
}

#[derive(Serialize)]
struct ControlSnippet<'a> {
    control: &'a ControlField,
}

#[derive(Serialize)]
struct ModelSnippet {
    model: ModelConfig,
}

fn control_outputs(out: &mut RunOutput, report: &ControlReport, prefix: &str) {
    let mut resp = ResultTable::new(["theta_rad", "phi_S_uncontrolled", "phi_S_controlled"]);
    for ((&t, &a), &b) in report
        .baseline
        .theta
        .iter()
        .zip(&report.baseline.yields)
        .zip(&report.response.yields)
    {
        resp.push(vec![t, a, b]);
    }
    resp.meta("D_S_uncontrolled", format_number(report.baseline.sensitivity));
    resp.meta("D_S_controlled", format_number(report.sensitivity));
    resp.meta("converged", report.report.converged.to_string());
    out.tables.push((format!("{prefix}_response.csv"), resp));
    out.tables.push((format!("{prefix}_trace.csv"), trace_table(&report.report, false)));

    let extra = vec![
        ("D_S_uncontrolled".to_string(), format_number(report.baseline.sensitivity)),
        ("D_S_controlled".to_string(), format_number(report.sensitivity)),
        ("theta_max".to_string(), format_number(report.response.theta_max)),
        ("theta_min".to_string(), format_number(report.response.theta_min)),
        ("constraint_violation".to_string(), format_number(report.violation)),
        ("c_max_ut".to_string(), format_number(report.constraints.c_max)),
        ("omega_max".to_string(), format_number(report.constraints.omega_max)),
        ("polar_offset".to_string(), format_number(report.constraints.polar_offset)),
    ];
    out.texts.push((
        format!("{prefix}_report.txt"),
        report_text("control", &report.report, &extra),
    ));
    let snippet = toml::to_string(&ControlSnippet {
        control: &report.control,
    })
    .unwrap_or_default();
    out.texts.push((format!("{prefix}_best_control.toml"), snippet));
    out.note("D_S_uncontrolled", format_number(report.baseline.sensitivity));
    out.note("D_S_controlled", format_number(report.sensitivity));
    out.note("evaluations", report.report.evaluations);
    out.note("converged", report.report.converged);
}

/// Control optimization plus the response and trace comparison.
pub fn cmd_fig2(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let model = cfg.model()?;
    let search = control_search(cfg);
    let report = optimize_control(&model, &search)?;
    let mut out = RunOutput::default();
    control_outputs(&mut out, &report, "fig2");
    let traces = singlet_traces(&model, &report.control, cfg.run.fig2.trace_step_us)?;
    out.tables.push(("fig2_traces.csv".into(), traces));
    Ok(out)
}

/// Sensitivity against dephasing rate for each correlation `d`, and response
/// curves at selected rates.
pub fn cmd_fig3(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let template = cfg.model()?;
    let f3 = &cfg.run.fig3;
    let opts = cfg.run.full_response();
    let gammas = lin_space(0.0, f3.gamma_max, f3.gamma_points);
    let points: Vec<(f64, f64)> = f3
        .d_values
        .iter()
        .flat_map(|&d| gammas.iter().map(move |&g| (d, g)))
        .collect();
    let scan = parallel_sweep(&["d", "gamma_per_us", "D_S", "theta_max", "theta_min"], &points, |&(d, g)| {
        let m = template.clone().with_dephasing(DephasingSpec::new(g, d));
        let r = model_response(&m, opts)?;
        Ok(vec![d, g, r.sensitivity, r.theta_max, r.theta_min])
    });
    let mut out = RunOutput::default();
    out.tables.push(("fig3_scan.csv".into(), scan));

    if !f3.curve_gammas.is_empty() {
        let curves = par_map(&f3.curve_gammas, |&g| {
            let m = template.clone().with_dephasing(DephasingSpec::new(g, f3.curve_d));
            m.validate()?;
            angular_response(|t| singlet_yield(&m, FieldDirection::polar(t)), opts)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let mut cols = vec!["theta_rad".to_string()];
        cols.extend(f3.curve_gammas.iter().map(|g| format!("phi_S_gamma_{g}")));
        let mut table = ResultTable::new(cols);
        for i in 0..curves[0].theta.len() {
            let mut row = vec![curves[0].theta[i]];
            row.extend(curves.iter().map(|c| c.yields[i]));
            table.push(row);
        }
        table.meta("d", format_number(f3.curve_d));
        out.tables.push(("fig3_curves.csv".into(), table));
    }
    Ok(out)
}

/// Hyperfine or control optimization with a report and a reusable snippet.
pub fn cmd_optimize(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let model = cfg.model()?;
    let mut out = RunOutput::default();
    match cfg.run.optimize.target {
        OptimizeTarget::Hyperfine => {
            let hc = &cfg.run.optimize.hyperfine;
            let search = hc.search(cfg.run.seed, cfg.run.response());
            let r = optimize_hyperfine(&model, hc.nuclei, &search)?;
            let mut resp = ResultTable::new(["theta_rad", "phi_S"]);
            for (&t, &y) in r.response.theta.iter().zip(&r.response.yields) {
                resp.push(vec![t, y]);
            }
            response_meta(&mut resp, &r.response);
            out.tables.push(("optimize_response.csv".into(), resp));
            out.tables.push(("optimize_trace.csv".into(), trace_table(&r.report, true)));
            let omega = model.omega();
            let mut extra = vec![
                ("D_S".to_string(), format_number(r.sensitivity)),
                ("nuclei".to_string(), hc.nuclei.to_string()),
                ("form".to_string(), format!("{:?}", hc.form).to_lowercase()),
                ("bounds_over_B".to_string(), format!("[{}, {}]", r.bounds.0, r.bounds.1)),
            ];
            for (i, t) in r.tensors.iter().enumerate() {
                let d = [t.matrix[0][0], t.matrix[1][1], t.matrix[2][2]];
                extra.push((
                    format!("nucleus_{i}_diag_over_B"),
                    format!(
                        "[{}, {}, {}]",
                        format_number(d[0] / omega),
                        format_number(d[1] / omega),
                        format_number(d[2] / omega)
                    ),
                ));
            }
            out.texts.push(("optimize_report.txt".into(), report_text("hyperfine", &r.report, &extra)));
            let snippet = toml::to_string(&ModelSnippet {
                model: ModelConfig::from_model(&r.model),
            })
            .unwrap_or_default();
            out.texts.push(("optimize_best_model.toml".into(), snippet));
            out.note("D_S", format_number(r.sensitivity));
            if let Some(a) = r.model.single_axial_coupling() {
                out.note("a_over_B", format_number(a / omega));
            }
            out.note("evaluations", r.report.evaluations);
            out.note("converged", r.report.converged);
        }
        OptimizeTarget::Control => {
            let report = optimize_control(&model, &control_search(cfg))?;
            control_outputs(&mut out, &report, "optimize");
        }
    }
    Ok(out)
}

/// Sensitivity over the configured axis and values.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let template = cfg.model()?;
    let axis: ScanAxis = cfg.run.sweep.axis.parse().map_err(|e: CompassError| CompassError::Config(e.to_string()))?;
    let opts: ResponseOptions = cfg.run.response();
    let table = parallel_sweep(&["param_value", "D_S", "theta_max", "theta_min"], &cfg.run.sweep.values, |&v| {
        let m = apply_axis(&template, axis, v)?;
        Ok(scan_row(v, &model_response(&m, opts)?))
    });
    let mut table = table;
    table.meta("axis", cfg.run.sweep.axis.clone());
    let mut out = RunOutput::default();
    out.note("points", table.rows.len());
    out.note("errors", table.errors.len());
    out.tables.push(("sweep.csv".into(), table));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.run.grid = 19;
        cfg
    }

    #[test]
    fn yield_command_regime_two() {
        let out = cmd_yield(&quick()).unwrap();
        let t = out.table("yield.csv").unwrap();
        let phi = t.column("phi_S").unwrap();
        let spread = phi.iter().cloned().fold(f64::MIN, f64::max) - phi.iter().cloned().fold(f64::MAX, f64::min);
        assert!((spread - 0.40).abs() < 0.03);
        let diff = t.column("abs_diff").unwrap();
        assert!(diff.iter().all(|&d| d < 1e-8));
    }

    #[test]
    fn yield_command_without_coupling() {
        let mut cfg = quick();
        cfg.model.nuclei[0].axial_ratio = Some(0.0);
        let out = cmd_yield(&cfg).unwrap();
        let phi = out.table("yield.csv").unwrap().column("phi_S").unwrap();
        assert!(phi.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn sweep_records_errors_and_order() {
        let mut cfg = quick();
        cfg.run.sweep.axis = "k".into();
        cfg.run.sweep.values = vec![2.0, -1.0, 0.5];
        let out = cmd_sweep(&cfg).unwrap();
        let t = out.table("sweep.csv").unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.errors.len(), 1);
        assert_eq!(t.errors[0].0, 1);
        assert_eq!(t.rows[2][0], 0.5);
    }

    #[test]
    fn one_point_sweep_matches_direct_call() {
        let model = quick().model().unwrap();
        let opts = ResponseOptions::new(19, Default::default());
        let t = parallel_sweep(&["v", "D_S", "tmax", "tmin"], &[0.5], |&k| {
            let m = apply_axis(&model, ScanAxis::Rate, k)?;
            Ok(scan_row(k, &model_response(&m, opts)?))
        });
        let direct = model_response(&model, opts).unwrap();
        assert_eq!(t.rows[0], scan_row(0.5, &direct));
    }

    #[test]
    fn stamp_puts_volatile_entries_last() {
        let mut out = cmd_yield(&quick()).unwrap();
        let ctx = RunContext {
            command: "yield".into(),
            config: quick(),
            jobs: Some(2),
            jobs_source: "flag".into(),
        };
        stamp(&mut out, &ctx, 0.5);
        let meta = &out.tables[0].1.metadata;
        assert_eq!(meta[0].0, "tool");
        assert_eq!(meta[3].0, "config");
        let n = meta.len();
        assert_eq!(meta[n - 2].0, "jobs");
        assert_eq!(meta[n - 1].0, "wall_time_s");
    }

    #[test]
    fn resample_is_linear() {
        let t = [0.0, 1.0, 3.0];
        let y = [0.0, 1.0, 5.0];
        assert_eq!(resample(&t, &y, &[0.0, 0.5, 2.0, 3.0]), vec![0.0, 0.5, 3.0, 5.0]);
    }
}
