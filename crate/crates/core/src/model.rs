//! Radical-pair problem definition and operator assembly.
//!
//! Units: Hamiltonian terms are angular frequencies in rad/us, rates in 1/us,
//! magnetic fields in uT at the input boundary.

use serde::{Deserialize, Serialize};

use crate::error::{CompassError, Result};
use crate::linalg::{
    c, embed, pauli_z, spin_operators, twice_spin, ComplexMatrix, ComplexVector,
};

/// Electron gyromagnetic ratio magnitude, rad us^-1 uT^-1.
pub const GAMMA_E: f64 = 0.176_086_0;

/// Converts a field in uT to its Larmor angular frequency in rad/us.
pub fn larmor(field_ut: f64) -> f64 {
    GAMMA_E * field_ut
}

/// Which electron a nucleus couples to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Electron {
    One,
    #[default]
    Two,
}

impl Electron {
    pub fn site(self) -> usize {
        match self {
            Electron::One => 0,
            Electron::Two => 1,
        }
    }
}

/// 3x3 real hyperfine coupling tensor in rad/us.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperfineTensor {
    pub matrix: [[f64; 3]; 3],
    #[serde(default)]
    pub electron: Electron,
}

impl HyperfineTensor {
    pub fn diagonal(tx: f64, ty: f64, tz: f64) -> Self {
        Self {
            matrix: [[tx, 0.0, 0.0], [0.0, ty, 0.0], [0.0, 0.0, tz]],
            electron: Electron::Two,
        }
    }

    /// `diag{0, 0, a}`.
    pub fn axial(a: f64) -> Self {
        Self::diagonal(0.0, 0.0, a)
    }

    pub fn on_electron(mut self, electron: Electron) -> Self {
        self.electron = electron;
        self
    }

    /// `Some(a)` when the tensor is exactly `diag{0, 0, a}`.
    pub fn axial_coupling(&self) -> Option<f64> {
        let m = &self.matrix;
        let off = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .filter(|&(i, j)| !(i == 2 && j == 2))
            .all(|(i, j)| m[i][j] == 0.0);
        off.then_some(m[2][2])
    }

    /// Largest absolute entry, used for step-size bounds.
    pub fn scale(&self) -> f64 {
        self.matrix
            .iter()
            .flatten()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    fn validate(&self) -> Result<()> {
        if self.matrix.iter().flatten().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(CompassError::InvalidModel(
                "hyperfine tensor has non-finite entries".into(),
            ))
        }
    }
}

fn default_nuclear_spin() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NucleusSpec {
    #[serde(default = "default_nuclear_spin")]
    pub spin: f64,
    pub hyperfine: HyperfineTensor,
}

impl NucleusSpec {
    pub fn spin_half(hyperfine: HyperfineTensor) -> Self {
        Self {
            spin: 0.5,
            hyperfine,
        }
    }

    pub fn dim(&self) -> Result<usize> {
        Ok(twice_spin(self.spin)? as usize + 1)
    }
}

/// Pure dephasing of the two electron spins: rate `gamma` (1/us) and
/// correlation parameter `d` (0 uncorrelated, 1 correlated, -1 anti-correlated).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct DephasingSpec {
    pub gamma: f64,
    #[serde(default)]
    pub d: f64,
}

impl DephasingSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(gamma: f64, d: f64) -> Self {
        Self { gamma, d }
    }

    pub fn is_active(&self) -> bool {
        self.gamma > 0.0
    }
}

/// A complete radical-pair problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadicalPairModel {
    /// External field magnitude in uT.
    pub field_ut: f64,
    /// Recombination rate `k = k_S = k_T` in 1/us.
    pub k: f64,
    #[serde(default)]
    pub nuclei: Vec<NucleusSpec>,
    #[serde(default)]
    pub dephasing: DephasingSpec,
}

impl RadicalPairModel {
    pub fn new(field_ut: f64, k: f64) -> Self {
        Self {
            field_ut,
            k,
            nuclei: Vec::new(),
            dephasing: DephasingSpec::none(),
        }
    }

    /// One spin-1/2 nucleus with `diag{0, 0, a}` on electron 2.
    pub fn one_axial(field_ut: f64, k: f64, a: f64) -> Self {
        Self::new(field_ut, k).with_nucleus(NucleusSpec::spin_half(HyperfineTensor::axial(a)))
    }

    pub fn with_nucleus(mut self, nucleus: NucleusSpec) -> Self {
        self.nuclei.push(nucleus);
        self
    }

    pub fn with_dephasing(mut self, dephasing: DephasingSpec) -> Self {
        self.dephasing = dephasing;
        self
    }

    /// Larmor angular frequency of the external field, rad/us.
    pub fn omega(&self) -> f64 {
        larmor(self.field_ut)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(CompassError::InvalidModel(format!(
                "recombination rate must be positive, got {}",
                self.k
            )));
        }
        if !(self.field_ut.is_finite() && self.field_ut >= 0.0) {
            return Err(CompassError::InvalidModel(format!(
                "field magnitude must be non-negative, got {}",
                self.field_ut
            )));
        }
        if !(self.dephasing.gamma.is_finite() && self.dephasing.gamma >= 0.0) {
            return Err(CompassError::InvalidModel(format!(
                "dephasing rate must be non-negative, got {}",
                self.dephasing.gamma
            )));
        }
        if !self.dephasing.d.is_finite() {
            return Err(CompassError::InvalidModel("dephasing d must be finite".into()));
        }
        for n in &self.nuclei {
            n.dim()?;
            n.hyperfine.validate()?;
        }
        Ok(())
    }

    /// Subsystem dimensions: electron 1, electron 2, nuclei in order.
    pub fn dims(&self) -> Result<Vec<usize>> {
        let mut dims = vec![2, 2];
        for n in &self.nuclei {
            dims.push(n.dim()?);
        }
        Ok(dims)
    }

    pub fn hilbert_dim(&self) -> Result<usize> {
        Ok(self.dims()?.iter().product())
    }

    pub fn nuclear_dim(&self) -> Result<usize> {
        Ok(self.dims()?[2..].iter().product())
    }

    /// The single axial coupling `a` when the model is exactly the
    /// one-spin-1/2-nucleus `diag{0,0,a}` case on electron 2.
    pub fn single_axial_coupling(&self) -> Option<f64> {
        match self.nuclei.as_slice() {
            [n] if n.spin == 0.5 && n.hyperfine.electron == Electron::Two => {
                n.hyperfine.axial_coupling()
            }
            _ => None,
        }
    }

    /// Largest hyperfine tensor entry over all nuclei.
    pub fn hyperfine_scale(&self) -> f64 {
        self.nuclei
            .iter()
            .fold(0.0f64, |acc, n| acc.max(n.hyperfine.scale()))
    }
}

/// Magnetic field direction; `phi = 0` unless stated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FieldDirection {
    pub theta: f64,
    #[serde(default)]
    pub phi: f64,
}

impl FieldDirection {
    pub fn polar(theta: f64) -> Self {
        Self { theta, phi: 0.0 }
    }

    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }
}

/// Total electron spin component `n . (S1 + S2)` embedded in the full space.
pub fn electron_spin_projection(direction: [f64; 3], dims: &[usize]) -> Result<ComplexMatrix> {
    let s = spin_operators(0.5)?;
    let n = dims.iter().product();
    let mut out = ComplexMatrix::zeros(n, n);
    for site in 0..2 {
        for (axis, op) in s.components().into_iter().enumerate() {
            if direction[axis] != 0.0 {
                out += embed(op, site, dims)? * c(direction[axis]);
            }
        }
    }
    Ok(out)
}

/// `H = omega_B n.(S1 + S2) + sum_j S_e(j) . T_j . I_j`.
pub fn build_hamiltonian(model: &RadicalPairModel, dir: FieldDirection) -> Result<ComplexMatrix> {
    build_hamiltonian_with_omega(model, dir, model.omega())
}

/// As [`build_hamiltonian`] but with an explicit Zeeman angular frequency,
/// which may be negative (field-sign checks).
pub fn build_hamiltonian_with_omega(
    model: &RadicalPairModel,
    dir: FieldDirection,
    omega: f64,
) -> Result<ComplexMatrix> {
    model.validate()?;
    let dims = model.dims()?;
    let n_hat = dir.unit_vector();
    let mut h = electron_spin_projection(n_hat, &dims)? * c(omega);

    let electron = spin_operators(0.5)?;
    for (j, nucleus) in model.nuclei.iter().enumerate() {
        let nuc = spin_operators(nucleus.spin)?;
        let site = 2 + j;
        let e_site = nucleus.hyperfine.electron.site();
        let t = &nucleus.hyperfine.matrix;
        let s_ops = electron.components();
        let i_ops = nuc.components();
        for (p, s_op) in s_ops.iter().enumerate() {
            let s_full = embed(s_op, e_site, &dims)?;
            for (q, i_op) in i_ops.iter().enumerate() {
                if t[p][q] != 0.0 {
                    let i_full = embed(i_op, site, &dims)?;
                    h += &s_full * i_full * c(t[p][q]);
                }
            }
        }
    }
    Ok(h)
}

/// Electron singlet `(|ud> - |du>)/sqrt 2` in the 4-dim electron space.
pub fn singlet_vector() -> ComplexVector {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    ComplexVector::from_vec(vec![c(0.0), c(r), c(-r), c(0.0)])
}

/// `|T0> = (|ud> + |du>)/sqrt 2`.
pub fn triplet_zero_vector() -> ComplexVector {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    ComplexVector::from_vec(vec![c(0.0), c(r), c(r), c(0.0)])
}

fn electron_singlet_projector() -> ComplexMatrix {
    let s = singlet_vector();
    &s * s.adjoint()
}

/// `P_S = |S><S| ⊗ 1_nuclear`.
pub fn singlet_projector(model: &RadicalPairModel) -> Result<ComplexMatrix> {
    let dn = model.nuclear_dim()?;
    Ok(electron_singlet_projector().kronecker(&ComplexMatrix::identity(dn, dn)))
}

/// `rho_0 = |S><S| ⊗ (1_nuclear / d_nuclear)`.
pub fn initial_state(model: &RadicalPairModel) -> Result<ComplexMatrix> {
    let dn = model.nuclear_dim()?;
    let mixed = ComplexMatrix::identity(dn, dn) * c(1.0 / dn as f64);
    Ok(electron_singlet_projector().kronecker(&mixed))
}

/// Overall prefactor multiplying the dissipator built from
/// [`dephasing_operators`]: `L_P(rho) = 1/4 sum_k (2 L rho L^† - {L^† L, rho})`.
pub const DEPHASING_PREFACTOR: f64 = 0.25;

/// Lindblad operators `L1 = sqrt(g/(1+d^2)) (sz1 + d sz2)` and
/// `L2 = sqrt(g/(1+d^2)) (d sz1 + sz2)` with Pauli `sz`, embedded in the full
/// space. Pair them with [`DEPHASING_PREFACTOR`].
pub fn dephasing_operators(spec: &DephasingSpec, dims: &[usize]) -> Result<Vec<ComplexMatrix>> {
    if !(spec.gamma.is_finite() && spec.gamma >= 0.0) {
        return Err(CompassError::InvalidModel(format!(
            "dephasing rate must be non-negative, got {}",
            spec.gamma
        )));
    }
    if dims.len() < 2 || dims[0] != 2 || dims[1] != 2 {
        return Err(CompassError::DimensionMismatch(
            "dephasing acts on two spin-1/2 electrons in the first two factors".into(),
        ));
    }
    let norm = (spec.gamma / (1.0 + spec.d * spec.d)).sqrt();
    let z1 = embed(&pauli_z(), 0, dims)?;
    let z2 = embed(&pauli_z(), 1, dims)?;
    let l1 = (&z1 + &z2 * c(spec.d)) * c(norm);
    let l2 = (&z1 * c(spec.d) + &z2) * c(norm);
    Ok(vec![l1, l2])
}

/// Lindblad operators for a model, empty when dephasing is off.
pub fn model_lindblads(model: &RadicalPairModel) -> Result<Vec<ComplexMatrix>> {
    if model.dephasing.is_active() {
        dephasing_operators(&model.dephasing, &model.dims()?)
    } else {
        Ok(Vec::new())
    }
}

/// `Tr(P rho)` real part.
pub fn expectation(p: &ComplexMatrix, rho: &ComplexMatrix) -> f64 {
    crate::linalg::trace_product(p, rho).re
}
