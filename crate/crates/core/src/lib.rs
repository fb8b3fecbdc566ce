//! Radical-pair chemical compass: singlet-yield models, their angular
//! sensitivity, and derivative-free optimization of hyperfine couplings and
//! control fields.

pub mod analytic;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod parallel;
pub mod sensitivity;
pub mod table;

pub use error::{CompassError, Result};
pub use model::{DephasingSpec, FieldDirection, HyperfineTensor, NucleusSpec, RadicalPairModel};
