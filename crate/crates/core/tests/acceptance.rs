//! One line per acceptance criterion. Tolerances are pinned below; the
//! harness asserts that exactly the parts listed in `KNOWN_FAILURES` fail,
//! so a regression or an unexpected fix both turn the target red.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use compass_core::analytic::{weakfield_sensitivity, yield_avg, AnalyticParams};
use compass_core::dynamics::{propagate, singlet_yield, singlet_yield_quadrature, singlet_yield_resolvent};
use compass_core::experiments::parallel_sweep;
use compass_core::linalg::{hermitian_eig, hermiticity_error};
use compass_core::model::{larmor, GAMMA_E};
use compass_core::optimize::{
    optimize_axial, optimize_control, optimize_hyperfine, ControlConstraints, ControlSearch, ControlTemplate,
    HyperfineSearch, OptimizerOptions, TensorForm,
};
use compass_core::parallel::with_jobs;
use compass_core::sensitivity::{apply_axis, model_response, ResponseOptions, ScanAxis, ThetaRange};
use compass_core::{DephasingSpec, FieldDirection, HyperfineTensor, NucleusSpec, RadicalPairModel};

const B_UT: f64 = 46.0;
const K: f64 = 0.5;

const ORACLE_TOL: f64 = 1e-8;
const ORACLE_SECONDS: f64 = 5.0;
const REGIME2_DS: (f64, f64) = (0.40, 0.03);
const ANGLE_TOL: f64 = 1e-3;
const REGIME1_DS: (f64, f64) = (0.25, 0.02);
const REGIME1_PAR: (f64, f64) = (0.50, 0.01);
const REGIME1_PERP: (f64, f64) = (0.25, 0.01);
const WEAK_REL_TOL: f64 = 0.15;
const ZENO_MIN_YIELD: f64 = 0.98;
const ZENO_MAX_DS: f64 = 0.01;
const WEAK_FIELD_DS: f64 = 0.10;
const NANOTESLA_DS: f64 = 0.01;
const CONTROL_DS: f64 = 0.50;
const CONTROL_BUDGET: usize = 5000;
const CONTROL_SECONDS: f64 = 900.0;
const DEPHASING_SLACK: f64 = 0.01;
const FROZEN_TOL: f64 = 1e-6;
const MULTI_NUCLEUS_SLACK: f64 = 0.01;
const SYMMETRY_TOL: f64 = 1e-9;
const QUADRATURE_TOL: f64 = 1e-4;
const PROPERTY_SECONDS: f64 = 120.0;

/// Parts that fail for reasons recorded in the decisions ledger.
const KNOWN_FAILURES: [&str; 3] = ["3:phi_perp", "6:tens_of_nT", "8:correlated"];

/// D_S on the correlated (d = 1) and uncorrelated (d = 0) dephasing scans
/// at gamma = 0, 0.5, 1, 2, 4 per us, frozen from the first verified run.
const FROZEN_D1: [f64; 5] = [0.4027429331791317, 0.42639535926198135, 0.4304055154116255, 0.41963072190482886, 0.3868726234398019];
const FROZEN_D0: [f64; 5] = [0.4027429331791317, 0.09165850241802975, 0.14317772187302213, 0.18315984619572911, 0.20760391439603443];

struct Part {
    name: &'static str,
    pass: bool,
    detail: String,
}

type Check = fn() -> Vec<Part>;

fn part(name: &'static str, pass: bool, detail: String) -> Part {
    Part { name, pass, detail }
}

fn within(x: f64, (target, tol): (f64, f64)) -> bool {
    (x - target).abs() <= tol
}

fn half() -> ResponseOptions {
    ResponseOptions::new(91, ThetaRange::Half)
}

fn full() -> ResponseOptions {
    ResponseOptions::new(91, ThetaRange::Full)
}

fn regime2() -> RadicalPairModel {
    RadicalPairModel::one_axial(B_UT, K, larmor(B_UT) / 3.0)
}

fn criterion_1() -> Vec<Part> {
    let start = Instant::now();
    let omega = larmor(B_UT);
    let mut worst: f64 = 0.0;
    for ratio in [0.1, 1.0 / 3.0, 1.0, 3.0, 10.0] {
        for k in [0.25, 0.5, 2.0] {
            let m = RadicalPairModel::one_axial(B_UT, k, ratio * omega);
            let p = AnalyticParams::new(omega, ratio * omega, k).unwrap();
            for i in 0..=18 {
                let theta = PI / 36.0 * i as f64;
                let exact = singlet_yield_resolvent(&m, FieldDirection::polar(theta)).unwrap();
                worst = worst.max((yield_avg(theta, &p).unwrap() - exact).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    vec![
        part("1:agreement", worst < ORACLE_TOL, format!("max diff {worst:.2e}")),
        part("1:runtime", secs < ORACLE_SECONDS, format!("{secs:.2} s")),
    ]
}

fn criterion_2() -> Vec<Part> {
    let r = model_response(&regime2(), half()).unwrap();
    vec![
        part("2:D_S", within(r.sensitivity, REGIME2_DS), format!("D_S {:.4}", r.sensitivity)),
        part(
            "2:angles",
            (r.theta_max - FRAC_PI_2).abs() < ANGLE_TOL && r.theta_min < ANGLE_TOL,
            format!("theta_max {:.4} theta_min {:.4}", r.theta_max, r.theta_min),
        ),
    ]
}

fn criterion_3() -> Vec<Part> {
    let m = RadicalPairModel::one_axial(B_UT, K, 10.0 * larmor(B_UT));
    let r = model_response(&m, half()).unwrap();
    let par = singlet_yield(&m, FieldDirection::polar(0.0)).unwrap();
    let perp = singlet_yield(&m, FieldDirection::polar(FRAC_PI_2)).unwrap();
    vec![
        part("3:D_S", within(r.sensitivity, REGIME1_DS), format!("D_S {:.4}", r.sensitivity)),
        part("3:phi_par", within(par, REGIME1_PAR), format!("phi(0) {par:.4}")),
        part("3:phi_perp", within(perp, REGIME1_PERP), format!("phi(pi/2) {perp:.4}")),
    ]
}

fn criterion_4() -> Vec<Part> {
    let mut worst: f64 = 0.0;
    let mut residuals = Vec::new();
    for b in [0.1, 0.25, 0.5] {
        let m = RadicalPairModel::one_axial(b / GAMMA_E, K, 100.0);
        let ds = model_response(&m, half()).unwrap().sensitivity;
        let formula = weakfield_sensitivity(b, K);
        let rel = (ds - formula).abs() / formula;
        worst = worst.max(rel);
        residuals.push(format!("B={b}: {ds:.5} vs {formula:.5}"));
    }
    vec![part(
        "4:formula",
        worst <= WEAK_REL_TOL,
        format!("max rel {worst:.3} ({})", residuals.join(", ")),
    )]
}

fn criterion_5() -> Vec<Part> {
    let m = RadicalPairModel::one_axial(B_UT, 100.0, larmor(B_UT) / 3.0);
    let r = model_response(&m, half()).unwrap();
    let lowest = r.yields.iter().cloned().fold(f64::INFINITY, f64::min);
    vec![
        part("5:yields", lowest >= ZENO_MIN_YIELD, format!("min phi {lowest:.4}")),
        part("5:D_S", r.sensitivity < ZENO_MAX_DS, format!("D_S {:.2e}", r.sensitivity)),
    ]
}

fn optimized_ds(field_ut: f64, tau: f64) -> f64 {
    let m = RadicalPairModel::one_axial(field_ut, 1.0 / tau, 0.0);
    let search = HyperfineSearch {
        coarse_points: 60,
        ..HyperfineSearch::default()
    }
    .with_bounds(0.0, 2000.0);
    optimize_axial(&m, &search).unwrap().sensitivity
}

fn criterion_6() -> Vec<Part> {
    let weak = optimized_ds(4.6, 2.0);
    let tiny = optimized_ds(0.046, 10.0);
    let limit = weakfield_sensitivity(larmor(0.046), 0.1);
    vec![
        part("6:weak_field", weak > WEAK_FIELD_DS, format!("B=4.6uT tau=2us D_S {weak:.4}")),
        part(
            "6:tens_of_nT",
            tiny > NANOTESLA_DS,
            format!("B=46nT tau=10us D_S {tiny:.2e} (weak-field limit {limit:.2e})"),
        ),
    ]
}

fn criterion_7() -> Vec<Part> {
    let start = Instant::now();
    let template = RadicalPairModel::one_axial(B_UT, K, 0.0);
    let a = optimize_axial(&template, &HyperfineSearch::default()).unwrap().coupling;
    let model = RadicalPairModel::one_axial(B_UT, K, a);

    let mut harmonic = ControlSearch::new(ControlTemplate::Harmonic { terms: 2 }, ControlConstraints::default());
    harmonic.optimizer = OptimizerOptions {
        max_evaluations: 2000,
        ..OptimizerOptions::default()
    };
    let h = optimize_control(&model, &harmonic).unwrap();

    let reduced = ControlConstraints {
        c_max: 100.0,
        ..ControlConstraints::default()
    };
    let mut piecewise = ControlSearch::new(ControlTemplate::Piecewise { segments: 3 }, reduced);
    piecewise.optimizer = OptimizerOptions {
        max_evaluations: 1000,
        ..OptimizerOptions::default()
    };
    let p = optimize_control(&model, &piecewise).unwrap();
    let secs = start.elapsed().as_secs_f64();
    vec![
        part(
            "7:harmonic",
            h.sensitivity >= CONTROL_DS && h.report.evaluations <= CONTROL_BUDGET,
            format!(
                "D_S {:.4} from {:.4} in {} evals",
                h.sensitivity, h.baseline.sensitivity, h.report.evaluations
            ),
        ),
        part(
            "7:piecewise",
            p.sensitivity >= CONTROL_DS && p.report.evaluations <= CONTROL_BUDGET,
            format!("D_S {:.4} in {} evals", p.sensitivity, p.report.evaluations),
        ),
        part("7:runtime", secs <= CONTROL_SECONDS, format!("{secs:.0} s")),
    ]
}

fn dephasing_scan(d: f64) -> Vec<f64> {
    [0.0, 0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&g| {
            let m = regime2().with_dephasing(DephasingSpec::new(g, d));
            model_response(&m, full()).unwrap().sensitivity
        })
        .collect()
}

fn criterion_8() -> Vec<Part> {
    let d1 = dephasing_scan(1.0);
    let d0 = dephasing_scan(0.0);
    let robust = d1.iter().all(|&v| v >= d1[0] - DEPHASING_SLACK);
    let dip = d0[1..].iter().cloned().fold(f64::INFINITY, f64::min);
    let dip_at = d0.iter().position(|&v| v == dip).unwrap();
    let recovers = dip < d0[0] && d0[dip_at + 1..].iter().any(|&v| v > dip);
    let frozen = d1.iter().zip(&FROZEN_D1).chain(d0.iter().zip(&FROZEN_D0)).all(|(a, b)| (a - b).abs() < FROZEN_TOL);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    vec![
        part("8:correlated", robust, format!("d=1: {}", fmt(&d1))),
        part("8:uncorrelated", recovers, format!("d=0: {}", fmt(&d0))),
        part("8:frozen", frozen, format!("within {FROZEN_TOL:.0e} of archived scan")),
    ]
}

fn criterion_9() -> Vec<Part> {
    let template = RadicalPairModel::one_axial(B_UT, K, 0.0);
    let budget = |form| HyperfineSearch {
        optimizer: OptimizerOptions {
            max_evaluations: 300,
            ..OptimizerOptions::default()
        },
        ..HyperfineSearch::default().with_form(form)
    };
    let one = optimize_hyperfine(&template, 1, &budget(TensorForm::Axial)).unwrap().sensitivity;
    let two_axial = optimize_hyperfine(&template, 2, &budget(TensorForm::Axial)).unwrap().sensitivity;
    let two_diag = optimize_hyperfine(&template, 2, &budget(TensorForm::Diagonal)).unwrap().sensitivity;
    vec![part(
        "9:no_gain",
        two_axial <= one + MULTI_NUCLEUS_SLACK && two_diag <= one + MULTI_NUCLEUS_SLACK,
        format!("n=1 {one:.4}, n=2 axial {two_axial:.4}, n=2 diagonal {two_diag:.4}"),
    )]
}

fn diagonal_model(t: [f64; 3]) -> RadicalPairModel {
    let mut m = RadicalPairModel::new(B_UT, K);
    m.nuclei.push(NucleusSpec::spin_half(HyperfineTensor::diagonal(t[0], t[1], t[2])));
    m
}

fn criterion_10() -> Vec<Part> {
    let start = Instant::now();
    let tensors = [[1.0, 2.0, 3.0], [-4.0, 0.5, 6.0], [0.0, 0.0, 2.7]];
    let mut sym: f64 = 0.0;
    for t in tensors {
        let m = diagonal_model(t);
        for (theta, phi) in [(0.3, 0.2), (1.1, 2.5), (0.7, 4.0)] {
            let y = singlet_yield(&m, FieldDirection::new(theta, phi)).unwrap();
            let flipped = singlet_yield(&m, FieldDirection::new(PI - theta, phi + PI)).unwrap();
            let mirrored = singlet_yield(&m, FieldDirection::new(PI - theta, phi)).unwrap();
            sym = sym.max((y - flipped).abs()).max((y - mirrored).abs());
        }
    }
    let axial = regime2();
    for phi in [0.5, 1.7, 3.9] {
        let a = singlet_yield(&axial, FieldDirection::new(0.8, 0.0)).unwrap();
        let b = singlet_yield(&axial, FieldDirection::new(0.8, phi)).unwrap();
        sym = sym.max((a - b).abs());
    }

    let mut quad: f64 = 0.0;
    let mut density_ok = true;
    for (g, d) in [(0.0, 0.0), (0.7, 1.0), (1.5, -0.4)] {
        let m = regime2().with_dephasing(DephasingSpec::new(g, d));
        let dir = FieldDirection::polar(0.9);
        let run = propagate(&m, dir, None, 14.0 / K, 0.01).unwrap();
        let q = singlet_yield_quadrature(&run, K).unwrap();
        quad = quad.max((q.value - singlet_yield(&m, dir).unwrap()).abs());
        let rho = &run.final_state;
        let low = hermitian_eig(rho).unwrap().values[0];
        density_ok &= (rho.trace().re - 1.0).abs() < 1e-6 && hermiticity_error(rho) < 1e-9 && low > -1e-8;
    }

    let values: Vec<f64> = (0..60).map(|i| 0.02 * 1.15f64.powi(i)).collect();
    let sweep = || {
        let opts = ResponseOptions::new(31, ThetaRange::Half);
        parallel_sweep(&["a", "D_S"], &values, |&a| {
            let m = apply_axis(&regime2(), ScanAxis::Hyperfine, a)?;
            Ok(vec![a, model_response(&m, opts)?.sensitivity])
        })
        .body_csv()
    };
    let identical = with_jobs(Some(1), sweep) == with_jobs(Some(4), sweep);
    let secs = start.elapsed().as_secs_f64();
    vec![
        part("10:symmetries", sym < SYMMETRY_TOL, format!("max deviation {sym:.1e}")),
        part("10:quadrature", quad < QUADRATURE_TOL, format!("max diff {quad:.1e}")),
        part("10:density", density_ok, "trace, hermiticity, positivity".into()),
        part("10:determinism", identical, "60-point sweep, 1 vs 4 threads".into()),
        part("10:runtime", secs < PROPERTY_SECONDS, format!("{secs:.1} s")),
    ]
}

fn main() {
    let criteria: [(usize, Check); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut failing = Vec::new();
    for (id, run) in criteria {
        let parts = run();
        let ok = parts.iter().all(|p| p.pass);
        let details: Vec<String> = parts
            .iter()
            .map(|p| format!("{}{} [{}]", if p.pass { "" } else { "FAILED " }, p.name, p.detail))
            .collect();
        println!("criterion {id:>2}: {} | {}", if ok { "PASS" } else { "FAIL" }, details.join("; "));
        failing.extend(parts.iter().filter(|p| !p.pass).map(|p| p.name));
    }
    if failing != KNOWN_FAILURES {
        eprintln!("failing parts {failing:?} differ from the recorded set {KNOWN_FAILURES:?}");
        std::process::exit(1);
    }
    println!("acceptance: failing parts match the recorded set {KNOWN_FAILURES:?}");
}
