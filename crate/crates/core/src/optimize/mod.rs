//! Derivative-free optimization of hyperfine tensors and control fields.

pub mod control;
pub mod hyperfine;
pub mod nelder_mead;
pub mod search;

pub use control::{ControlField, ControlShape, HarmonicTerm};
pub use hyperfine::{optimize_axial, optimize_hyperfine, AxialOptimum, HyperfineReport, HyperfineSearch, TensorForm};
pub use nelder_mead::{nelder_mead, OptimizationReport, OptimizerOptions, RestartRecord};
pub use search::{optimize_control, ControlConstraints, ControlReport, ControlSearch, ControlTemplate};
