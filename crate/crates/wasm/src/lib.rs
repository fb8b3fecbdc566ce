//! Browser bindings: yield curve, coupling scan and dephasing scan for the
//! one-nucleus axial model. Numbers come back as `Float64Array`s.

use compass_core::model::larmor;
use compass_core::sensitivity::{model_response, ResponseOptions, ThetaRange};
use compass_core::{DephasingSpec, RadicalPairModel};
use wasm_bindgen::prelude::*;

fn model(field_ut: f64, k: f64, a_over_b: f64, gamma: f64, d: f64) -> RadicalPairModel {
    RadicalPairModel::one_axial(field_ut, k, a_over_b * larmor(field_ut))
        .with_dephasing(DephasingSpec::new(gamma, d))
}

fn js(e: compass_core::CompassError) -> JsError {
    JsError::new(&e.to_string())
}

/// Singlet yield on `grid` evenly spaced angles over `[0, pi]`, followed by
/// the sensitivity, so the result has `grid + 1` entries.
#[wasm_bindgen]
pub fn yield_curve(
    field_ut: f64,
    k: f64,
    a_over_b: f64,
    gamma: f64,
    d: f64,
    grid: usize,
) -> Result<Vec<f64>, JsError> {
    let m = model(field_ut, k, a_over_b, gamma, d);
    let r = model_response(&m, ResponseOptions::new(grid, ThetaRange::Full)).map_err(js)?;
    let mut out = r.yields;
    out.push(r.sensitivity);
    Ok(out)
}

/// Sensitivity at `points` log-spaced coupling ratios in `[lo, hi]`.
#[wasm_bindgen]
pub fn ratio_scan(field_ut: f64, k: f64, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, JsError> {
    if !(lo > 0.0 && hi > lo && points >= 2) {
        return Err(JsError::new("need 0 < lo < hi and at least 2 points"));
    }
    let opts = ResponseOptions::new(37, ThetaRange::Half);
    (0..points)
        .map(|i| {
            let r = (lo.ln() + (hi / lo).ln() * i as f64 / (points - 1) as f64).exp();
            model_response(&model(field_ut, k, r, 0.0, 0.0), opts).map(|x| x.sensitivity)
        })
        .collect::<compass_core::Result<Vec<f64>>>()
        .map_err(js)
}

/// Sensitivity at `points` dephasing rates evenly spaced over `[0, gamma_max]`.
#[wasm_bindgen]
pub fn dephasing_scan(
    field_ut: f64,
    k: f64,
    a_over_b: f64,
    d: f64,
    gamma_max: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    if !(gamma_max >= 0.0 && points >= 2) {
        return Err(JsError::new("need gamma_max >= 0 and at least 2 points"));
    }
    let opts = ResponseOptions::new(37, ThetaRange::Full);
    (0..points)
        .map(|i| {
            let g = gamma_max * i as f64 / (points - 1) as f64;
            model_response(&model(field_ut, k, a_over_b, g, d), opts).map(|x| x.sensitivity)
        })
        .collect::<compass_core::Result<Vec<f64>>>()
        .map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_ends_with_sensitivity() {
        let v = yield_curve(46.0, 0.5, 1.0 / 3.0, 0.0, 0.0, 19).unwrap();
        assert_eq!(v.len(), 20);
        assert!((v[19] - 0.4027).abs() < 1e-3);
    }

    #[test]
    fn scans_have_requested_length() {
        assert_eq!(ratio_scan(46.0, 0.5, 0.1, 10.0, 5).unwrap().len(), 5);
        let g = dephasing_scan(46.0, 0.5, 1.0 / 3.0, 1.0, 1.0, 3).unwrap();
        assert_eq!(g.len(), 3);
        assert!((g[0] - 0.4027).abs() < 1e-3);
    }
}
