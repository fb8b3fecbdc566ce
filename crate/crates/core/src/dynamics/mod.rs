//! Open-system propagation and singlet-yield evaluation.
//!
//! Recombination with `k_S = k_T = k` is not part of the generator: the spin
//! state stays normalized and the yield is the exponentially weighted average
//! `Phi_S = int_0^inf k e^{-kt} f_S(t) dt`. For a time-independent generator
//! this is the resolvent `k <vec P_S, (k - L)^{-1} vec rho_0>`.

mod controlled;
mod integrate;
mod spectral;

pub use controlled::{controlled_yield, ControlledYieldOptions};
pub use integrate::{
    propagate, propagate_with, singlet_yield_quadrature, write_singlet_csv, PropagateOptions,
    PropagationResult, QuadratureYield,
};
pub use spectral::SpectralPropagator;

use crate::error::{CompassError, Result};
use crate::linalg::{c, solve_linear, unvectorize, vectorize, ComplexMatrix, I};
use crate::model::{
    build_hamiltonian, initial_state, model_lindblads, singlet_projector, FieldDirection,
    RadicalPairModel, DEPHASING_PREFACTOR,
};

/// Tolerance outside which a raw yield is treated as a numerical failure.
pub const YIELD_RANGE_TOL: f64 = 1e-9;

/// Superoperator `rho -> -i[H, rho] + 1/4 sum_k (2 L rho L^† - {L^† L, rho})`
/// acting on column-major vectorized density matrices.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    pub matrix: ComplexMatrix,
    pub hilbert_dim: usize,
    pub includes_dephasing: bool,
}

impl Liouvillian {
    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let v = &self.matrix * vectorize(rho);
        unvectorize(&v, self.hilbert_dim).expect("dimension fixed at construction")
    }
}

pub fn build_liouvillian(h: &ComplexMatrix, lindblads: &[ComplexMatrix]) -> Result<Liouvillian> {
    if !h.is_square() {
        return Err(CompassError::DimensionMismatch("Hamiltonian must be square".into()));
    }
    let n = h.nrows();
    if let Some(bad) = lindblads.iter().find(|l| l.shape() != (n, n)) {
        return Err(CompassError::DimensionMismatch(format!(
            "Lindblad operator is {}x{}, Hamiltonian is {n}x{n}",
            bad.nrows(),
            bad.ncols()
        )));
    }
    let id = ComplexMatrix::identity(n, n);
    // vec(A X B) = (B^T ⊗ A) vec(X)
    let mut l = (id.kronecker(h) - h.transpose().kronecker(&id)) * (-I);
    for op in lindblads {
        let ldl = op.adjoint() * op;
        let jump = op.conjugate().kronecker(op) * c(2.0);
        let anti = id.kronecker(&ldl) + ldl.transpose().kronecker(&id);
        l += (jump - anti) * c(DEPHASING_PREFACTOR);
    }
    Ok(Liouvillian {
        matrix: l,
        hilbert_dim: n,
        includes_dephasing: !lindblads.is_empty(),
    })
}

/// Clamps a yield into `[0, 1]`, rejecting values outside the tolerance band.
pub(crate) fn clamp_yield(raw: f64) -> Result<f64> {
    if !(-YIELD_RANGE_TOL..=1.0 + YIELD_RANGE_TOL).contains(&raw) {
        return Err(CompassError::InvalidArgument(format!(
            "singlet yield {raw} outside [0, 1]"
        )));
    }
    Ok(raw.clamp(0.0, 1.0))
}

/// Yield by one dense linear solve against `k - L`.
pub fn singlet_yield_resolvent(model: &RadicalPairModel, dir: FieldDirection) -> Result<f64> {
    let h = build_hamiltonian(model, dir)?;
    resolvent_yield_for(model, &h)
}

pub(crate) fn resolvent_yield_for(model: &RadicalPairModel, h: &ComplexMatrix) -> Result<f64> {
    let rho0 = initial_state(model)?;
    resolvent_yield_from(model, h, &rho0).and_then(clamp_yield)
}

/// Unclamped `k <vec P_S, (k - L)^{-1} vec rho>` for an arbitrary start state.
pub(crate) fn resolvent_yield_from(
    model: &RadicalPairModel,
    h: &ComplexMatrix,
    rho: &ComplexMatrix,
) -> Result<f64> {
    let liou = build_liouvillian(h, &model_lindblads(model)?)?;
    let n2 = liou.matrix.nrows();
    let system = ComplexMatrix::identity(n2, n2) * c(model.k) - &liou.matrix;
    let x = solve_linear(&system, &vectorize(rho))?;
    let p = vectorize(&singlet_projector(model)?);
    Ok(model.k * p.dotc(&x).re)
}

/// Without hyperfine coupling or dephasing the singlet is an eigenstate of
/// any field acting equally on both electrons, so it never decays.
pub(crate) fn singlet_is_stationary(model: &RadicalPairModel) -> bool {
    model.hyperfine_scale() == 0.0 && !model.dephasing.is_active()
}

/// Yield through the cheapest exact route: eigenbasis of `H` when there is
/// no dephasing, dense resolvent otherwise.
pub fn singlet_yield(model: &RadicalPairModel, dir: FieldDirection) -> Result<f64> {
    if singlet_is_stationary(model) {
        model.validate()?;
        return Ok(1.0);
    }
    if model.dephasing.is_active() {
        singlet_yield_resolvent(model, dir)
    } else {
        let h = build_hamiltonian(model, dir)?;
        let prop = SpectralPropagator::new(&h)?;
        let rho0 = prop.to_eigenbasis(&initial_state(model)?);
        let p = prop.to_eigenbasis(&singlet_projector(model)?);
        clamp_yield(prop.weighted_tail(&p, &rho0, model.k))
    }
}
