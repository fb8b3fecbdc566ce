//! Experiment configuration in TOML.
//!
//! Every block rejects unknown keys. [`ExperimentConfig::parse`] validates the
//! whole document before returning, so a config that loads is safe to run.
//! See `docs/config.md` for the grammar.

use serde::{Deserialize, Serialize};

use crate::error::{CompassError, Result};
use crate::model::{larmor, DephasingSpec, Electron, HyperfineTensor, NucleusSpec, RadicalPairModel};
use crate::optimize::{
    ControlConstraints, ControlTemplate, HyperfineSearch, OptimizerOptions, TensorForm,
};
use crate::sensitivity::{ResponseOptions, ScanAxis, ThetaRange, MIN_GRID};

fn err(key: &str, msg: impl std::fmt::Display) -> CompassError {
    CompassError::Config(format!("{key}: {msg}"))
}

fn check_positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(err(key, format!("must be positive and finite, got {v}")))
    }
}

fn check_finite(key: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(err(key, format!("must be finite, got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NucleusConfig {
    #[serde(default = "half")]
    pub spin: f64,
    /// 1 or 2.
    #[serde(default = "two")]
    pub electron: u8,
    /// Axial coupling `a`, rad/us.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axial: Option<f64>,
    /// Axial coupling as a multiple of the Larmor frequency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axial_ratio: Option<f64>,
    /// Full tensor, rad/us, row major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor: Option<[[f64; 3]; 3]>,
}

fn half() -> f64 {
    0.5
}

fn two() -> u8 {
    2
}

impl NucleusConfig {
    pub fn axial_ratio(ratio: f64) -> Self {
        Self {
            spin: 0.5,
            electron: 2,
            axial: None,
            axial_ratio: Some(ratio),
            tensor: None,
        }
    }

    pub fn from_tensor(t: &HyperfineTensor) -> Self {
        let (axial, tensor) = match t.axial_coupling() {
            Some(a) => (Some(a), None),
            None => (None, Some(t.matrix)),
        };
        Self {
            spin: 0.5,
            electron: if t.electron == Electron::One { 1 } else { 2 },
            axial,
            axial_ratio: None,
            tensor,
        }
    }

    fn resolve(&self, key: &str, omega: f64) -> Result<NucleusSpec> {
        let electron = match self.electron {
            1 => Electron::One,
            2 => Electron::Two,
            other => return Err(err(&format!("{key}.electron"), format!("must be 1 or 2, got {other}"))),
        };
        let given = [self.axial.is_some(), self.axial_ratio.is_some(), self.tensor.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if given != 1 {
            return Err(err(key, "set exactly one of axial, axial_ratio or tensor"));
        }
        let tensor = if let Some(a) = self.axial {
            check_finite(&format!("{key}.axial"), a)?;
            HyperfineTensor::axial(a)
        } else if let Some(r) = self.axial_ratio {
            check_finite(&format!("{key}.axial_ratio"), r)?;
            HyperfineTensor::axial(r * omega)
        } else {
            let m = self.tensor.expect("counted above");
            if m.iter().flatten().any(|v| !v.is_finite()) {
                return Err(err(&format!("{key}.tensor"), "entries must be finite"));
            }
            HyperfineTensor {
                matrix: m,
                electron,
            }
        };
        let spec = NucleusSpec {
            spin: self.spin,
            hyperfine: tensor.on_electron(electron),
        };
        spec.dim().map_err(|e| err(&format!("{key}.spin"), e))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingConfig {
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub field_ut: f64,
    pub k_per_us: f64,
    #[serde(default)]
    pub nuclei: Vec<NucleusConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dephasing: Option<DephasingConfig>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            field_ut: 46.0,
            k_per_us: 0.5,
            nuclei: vec![NucleusConfig::axial_ratio(1.0 / 3.0)],
            dephasing: None,
        }
    }
}

impl ModelConfig {
    pub fn from_model(model: &RadicalPairModel) -> Self {
        Self {
            field_ut: model.field_ut,
            k_per_us: model.k,
            nuclei: model.nuclei.iter().map(|n| NucleusConfig {
                spin: n.spin,
                ..NucleusConfig::from_tensor(&n.hyperfine)
            }).collect(),
            dephasing: model.dephasing.is_active().then_some(DephasingConfig {
                gamma: model.dephasing.gamma,
                d: model.dephasing.d,
            }),
        }
    }

    pub fn build(&self) -> Result<RadicalPairModel> {
        check_positive("model.k_per_us", self.k_per_us)?;
        if !(self.field_ut.is_finite() && self.field_ut >= 0.0) {
            return Err(err("model.field_ut", format!("must be non-negative, got {}", self.field_ut)));
        }
        let omega = larmor(self.field_ut);
        let mut model = RadicalPairModel::new(self.field_ut, self.k_per_us);
        for (i, n) in self.nuclei.iter().enumerate() {
            model.nuclei.push(n.resolve(&format!("model.nuclei[{i}]"), omega)?);
        }
        if let Some(dp) = self.dephasing {
            if !(dp.gamma.is_finite() && dp.gamma >= 0.0) {
                return Err(err("model.dephasing.gamma", format!("must be non-negative, got {}", dp.gamma)));
            }
            check_finite("model.dephasing.d", dp.d)?;
            model.dephasing = DephasingSpec::new(dp.gamma, dp.d);
        }
        model.validate().map_err(|e| err("model", e))?;
        Ok(model)
    }
}

/// Optimizer settings without the seed, which lives in `[run]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub max_evaluations: usize,
    pub initial_step: f64,
    pub f_tol: f64,
    pub x_tol: f64,
    pub restarts: usize,
}

impl OptimizerConfig {
    fn with_budget(max_evaluations: usize) -> Self {
        let d = OptimizerOptions::default();
        Self {
            max_evaluations,
            initial_step: d.initial_step,
            f_tol: d.f_tol,
            x_tol: d.x_tol,
            restarts: d.restarts,
        }
    }

    pub fn options(&self, seed: u64) -> OptimizerOptions {
        OptimizerOptions {
            max_evaluations: self.max_evaluations,
            initial_step: self.initial_step,
            f_tol: self.f_tol,
            x_tol: self.x_tol,
            restarts: self.restarts,
            seed,
        }
    }

    fn validate(&self, key: &str) -> Result<()> {
        self.options(1).validate().map_err(|e| err(key, e))
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::with_budget(2000)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperfineConfig {
    pub nuclei: usize,
    pub form: TensorForm,
    /// `[lower, upper]` in units of the Larmor frequency.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 2]>,
    pub coarse_points: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for HyperfineConfig {
    fn default() -> Self {
        Self {
            nuclei: 1,
            form: TensorForm::Axial,
            bounds: None,
            coarse_points: 40,
            optimizer: OptimizerConfig::with_budget(400),
        }
    }
}

impl HyperfineConfig {
    pub fn search(&self, seed: u64, response: ResponseOptions) -> HyperfineSearch {
        HyperfineSearch {
            form: self.form,
            bounds: self.bounds.map(|[lo, hi]| (lo, hi)),
            coarse_points: self.coarse_points,
            optimizer: self.optimizer.options(seed),
            response,
        }
    }

    fn validate(&self, key: &str) -> Result<()> {
        if self.nuclei == 0 || self.nuclei > 3 {
            return Err(err(&format!("{key}.nuclei"), "must be 1, 2 or 3"));
        }
        if let Some([lo, hi]) = self.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(err(&format!("{key}.bounds"), "need finite lower < upper"));
            }
            if self.form == TensorForm::Axial && lo < 0.0 {
                return Err(err(&format!("{key}.bounds"), "axial couplings are non-negative"));
            }
        }
        if self.coarse_points == 0 {
            return Err(err(&format!("{key}.coarse_points"), "must be at least 1"));
        }
        self.optimizer.validate(&format!("{key}.optimizer"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    #[default]
    Harmonic,
    Piecewise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub shape: ControlKind,
    /// Harmonic term count.
    pub terms: usize,
    /// Piecewise segment count.
    pub segments: usize,
    pub c_max_ut: f64,
    pub omega_max: f64,
    /// Control window in us; defaults to `14 / k`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_us: Option<f64>,
    pub polar_offset: f64,
    /// Normalized start parameters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    /// Split-operator steps per radian of the fastest frequency.
    pub steps_per_radian: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for ControlConfig {
    fn default() -> Self {
        let c = ControlConstraints::default();
        Self {
            shape: ControlKind::Harmonic,
            terms: 2,
            segments: 3,
            c_max_ut: c.c_max,
            omega_max: c.omega_max,
            duration_us: None,
            polar_offset: 0.0,
            start: None,
            steps_per_radian: crate::dynamics::ControlledYieldOptions::default().steps_per_radian,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl ControlConfig {
    pub fn template(&self) -> ControlTemplate {
        match self.shape {
            ControlKind::Harmonic => ControlTemplate::Harmonic { terms: self.terms },
            ControlKind::Piecewise => ControlTemplate::Piecewise {
                segments: self.segments,
            },
        }
    }

    pub fn constraints(&self) -> ControlConstraints {
        ControlConstraints {
            c_max: self.c_max_ut,
            omega_max: self.omega_max,
            duration: self.duration_us,
            polar_offset: self.polar_offset,
        }
    }

    fn validate(&self, key: &str) -> Result<()> {
        let count = match self.shape {
            ControlKind::Harmonic => self.terms,
            ControlKind::Piecewise => self.segments,
        };
        if count == 0 {
            return Err(err(key, "terms/segments must be at least 1"));
        }
        if !(self.c_max_ut.is_finite() && self.c_max_ut >= 0.0) {
            return Err(err(&format!("{key}.c_max_ut"), "must be non-negative"));
        }
        check_positive(&format!("{key}.omega_max"), self.omega_max)?;
        if let Some(t) = self.duration_us {
            check_positive(&format!("{key}.duration_us"), t)?;
        }
        check_finite(&format!("{key}.polar_offset"), self.polar_offset)?;
        check_positive(&format!("{key}.steps_per_radian"), self.steps_per_radian)?;
        if let Some(s) = &self.start {
            if s.len() != self.template().param_count() {
                return Err(err(
                    &format!("{key}.start"),
                    format!("needs {} values, got {}", self.template().param_count(), s.len()),
                ));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(err(&format!("{key}.start"), "values must be finite"));
            }
        }
        self.optimizer.validate(&format!("{key}.optimizer"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeTarget {
    #[default]
    Hyperfine,
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeConfig {
    pub target: OptimizeTarget,
    pub hyperfine: HyperfineConfig,
    pub control: ControlConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig1Config {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub points: usize,
    /// Fields (uT) for the optional `(a/B, B)` contour; empty disables it.
    pub contour_fields_ut: Vec<f64>,
    pub contour_ratios: usize,
    /// Lifetimes (us) for the optimized-coupling table; empty disables it.
    pub lifetimes_us: Vec<f64>,
    pub lifetime_fields_ut: Vec<f64>,
    /// Upper bound on the optimized axial coupling, in units of the Larmor
    /// frequency.
    pub lifetime_ratio_max: f64,
}

impl Default for Fig1Config {
    fn default() -> Self {
        Self {
            ratio_min: 0.02,
            ratio_max: 50.0,
            points: 60,
            contour_fields_ut: Vec::new(),
            contour_ratios: 30,
            lifetimes_us: vec![0.5, 1.0, 2.0, 5.0, 10.0],
            lifetime_fields_ut: vec![46.0, 4.6, 0.046],
            lifetime_ratio_max: 2000.0,
        }
    }
}

impl Fig1Config {
    fn validate(&self) -> Result<()> {
        check_positive("run.fig1.ratio_min", self.ratio_min)?;
        check_positive("run.fig1.ratio_max", self.ratio_max)?;
        if self.ratio_max <= self.ratio_min {
            return Err(err("run.fig1.ratio_max", "must exceed ratio_min"));
        }
        if self.points < 2 {
            return Err(err("run.fig1.points", "must be at least 2"));
        }
        if !self.contour_fields_ut.is_empty() && self.contour_ratios < 2 {
            return Err(err("run.fig1.contour_ratios", "must be at least 2"));
        }
        for v in &self.contour_fields_ut {
            check_positive("run.fig1.contour_fields_ut", *v)?;
        }
        for v in &self.lifetimes_us {
            check_positive("run.fig1.lifetimes_us", *v)?;
        }
        for v in &self.lifetime_fields_ut {
            check_positive("run.fig1.lifetime_fields_ut", *v)?;
        }
        check_positive("run.fig1.lifetime_ratio_max", self.lifetime_ratio_max)

    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig2Config {
    /// Sample spacing of the `f_S(t)` traces, us.
    pub trace_step_us: f64,
}

impl Default for Fig2Config {
    fn default() -> Self {
        Self { trace_step_us: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig3Config {
    pub gamma_max: f64,
    pub gamma_points: usize,
    pub d_values: Vec<f64>,
    pub curve_gammas: Vec<f64>,
    pub curve_d: f64,
}

impl Default for Fig3Config {
    fn default() -> Self {
        Self {
            gamma_max: 4.0,
            gamma_points: 17,
            d_values: vec![0.0, 0.8, 1.0, -1.0],
            curve_gammas: vec![0.0, 0.5, 2.0],
            curve_d: 0.0,
        }
    }
}

impl Fig3Config {
    fn validate(&self) -> Result<()> {
        check_positive("run.fig3.gamma_max", self.gamma_max)?;
        if self.gamma_points < 2 {
            return Err(err("run.fig3.gamma_points", "must be at least 2"));
        }
        if self.d_values.is_empty() {
            return Err(err("run.fig3.d_values", "must not be empty"));
        }
        for d in &self.d_values {
            check_finite("run.fig3.d_values", *d)?;
        }
        for g in &self.curve_gammas {
            if !(g.is_finite() && *g >= 0.0) {
                return Err(err("run.fig3.curve_gammas", "must be non-negative"));
            }
        }
        check_finite("run.fig3.curve_d", self.curve_d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `a`, `B`, `k` or `gamma`.
    pub axis: String,
    pub values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: "a".into(),
            values: vec![0.5, 1.0, 2.7, 5.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: usize,
    pub full_theta: bool,
    pub seed: u64,
    pub fig1: Fig1Config,
    pub fig2: Fig2Config,
    pub fig3: Fig3Config,
    pub optimize: OptimizeConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: crate::sensitivity::DEFAULT_GRID,
            full_theta: false,
            seed: 1,
            fig1: Fig1Config::default(),
            fig2: Fig2Config::default(),
            fig3: Fig3Config::default(),
            optimize: OptimizeConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn response(&self) -> ResponseOptions {
        ResponseOptions::new(self.grid, ThetaRange::from_full(self.full_theta))
    }

    /// Full `[0, pi]` regardless of `full_theta`, for dephasing and control.
    pub fn full_response(&self) -> ResponseOptions {
        ResponseOptions::new(self.grid, ThetaRange::Full)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    /// Significant digits in CSV numbers (1 to 17).
    pub precision: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            precision: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Parses and validates.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CompassError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.build()?;
        let run = &self.run;
        if run.grid < MIN_GRID {
            return Err(err("run.grid", format!("must be at least {MIN_GRID}, got {}", run.grid)));
        }
        run.fig1.validate()?;
        check_positive("run.fig2.trace_step_us", run.fig2.trace_step_us)?;
        run.fig3.validate()?;
        run.optimize.hyperfine.validate("run.optimize.hyperfine")?;
        run.optimize.control.validate("run.optimize.control")?;
        run.sweep
            .axis
            .parse::<ScanAxis>()
            .map_err(|e| err("run.sweep.axis", e))?;
        if run.sweep.values.is_empty() {
            return Err(err("run.sweep.values", "must not be empty"));
        }
        for v in &run.sweep.values {
            check_finite("run.sweep.values", *v)?;
        }
        if !(1..=17).contains(&self.output.precision) {
            return Err(err("output.precision", "must be between 1 and 17"));
        }
        if self.output.dir.is_empty() {
            return Err(err("output.dir", "must not be empty"));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<RadicalPairModel> {
        self.model.build()
    }

    /// Canonical TOML for the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        let m = cfg.model().unwrap();
        assert!((m.single_axial_coupling().unwrap() - larmor(46.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_is_rejected_with_location() {
        let e = ExperimentConfig::parse("[model]\nfield_ut = 46.0\nk_per_us = 0.5\nbogus = 1\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("bogus"), "{msg}");
        assert!(msg.contains("line 4") || msg.contains("4:"), "{msg}");
    }

    #[test]
    fn validation_names_the_key() {
        let e = ExperimentConfig::parse("[model]\nfield_ut = 46.0\nk_per_us = -1.0\n").unwrap_err();
        assert!(e.to_string().contains("model.k_per_us"));
        let e = ExperimentConfig::parse("[run]\ngrid = 3\n").unwrap_err();
        assert!(e.to_string().contains("run.grid"));
        let text = "[model]\nfield_ut = 46.0\nk_per_us = 0.5\n[[model.nuclei]]\naxial = 1.0\naxial_ratio = 0.3\n";
        let e = ExperimentConfig::parse(text).unwrap_err();
        assert!(e.to_string().contains("model.nuclei[0]"));
    }

    #[test]
    fn tensor_and_dephasing() {
        let text = r#"
[model]
field_ut = 46.0
k_per_us = 0.5
[[model.nuclei]]
tensor = [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]]
electron = 1
[model.dephasing]
gamma = 0.5
d = 1.0
"#;
        let m = ExperimentConfig::parse(text).unwrap().model().unwrap();
        assert_eq!(m.nuclei[0].hyperfine.matrix[1][1], 2.0);
        assert_eq!(m.nuclei[0].hyperfine.electron, Electron::One);
        assert_eq!(m.dephasing, DephasingSpec::new(0.5, 1.0));
        let back = ModelConfig::from_model(&m).build().unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn documented_example_parses() {
        let doc = include_str!("../../../docs/config.md");
        let start = doc.find("```toml\n").unwrap() + 8;
        let end = start + doc[start..].find("```").unwrap();
        let cfg = ExperimentConfig::parse(&doc[start..end]).unwrap();
        assert_eq!(cfg.run.optimize.target, OptimizeTarget::Control);
        assert_eq!(cfg.run.optimize.control.constraints().c_max, 100.0);
        assert_eq!(cfg.model().unwrap().dephasing, DephasingSpec::new(0.5, 1.0));
    }
}
