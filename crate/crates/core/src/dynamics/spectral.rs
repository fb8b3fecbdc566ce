use crate::error::Result;
use crate::linalg::{hermitian_eig, ComplexMatrix, HermitianEigen, C64};

/// Exact closed-system evolution under a constant Hamiltonian, carried out in
/// its eigenbasis.
#[derive(Debug, Clone)]
pub struct SpectralPropagator {
    eig: HermitianEigen,
}

impl SpectralPropagator {
    pub fn new(h: &ComplexMatrix) -> Result<Self> {
        Ok(Self {
            eig: hermitian_eig(h)?,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig.values
    }

    /// `V^† M V`.
    pub fn to_eigenbasis(&self, m: &ComplexMatrix) -> ComplexMatrix {
        self.eig.vectors.adjoint() * m * &self.eig.vectors
    }

    /// `V M V^†`.
    pub fn from_eigenbasis(&self, m: &ComplexMatrix) -> ComplexMatrix {
        &self.eig.vectors * m * self.eig.vectors.adjoint()
    }

    /// `e^{-iH tau}` in the original basis.
    pub fn unitary(&self, tau: f64) -> ComplexMatrix {
        self.eig.map(|lam| C64::from_polar(1.0, -lam * tau))
    }

    /// Evolves an eigenbasis density matrix by `tau`.
    pub fn evolve(&self, rho_eig: &ComplexMatrix, tau: f64) -> ComplexMatrix {
        let lam = &self.eig.values;
        ComplexMatrix::from_fn(rho_eig.nrows(), rho_eig.ncols(), |m, n| {
            rho_eig[(m, n)] * C64::from_polar(1.0, -(lam[m] - lam[n]) * tau)
        })
    }

    /// `int_0^inf k e^{-kt} Tr(P rho(t)) dt` with both operators in the eigenbasis.
    pub fn weighted_tail(&self, p_eig: &ComplexMatrix, rho_eig: &ComplexMatrix, k: f64) -> f64 {
        self.weighted_sum(p_eig, rho_eig, |w| C64::new(k, 0.0) / C64::new(k, w))
    }

    /// `int_{t0}^{t0+span} k e^{-kt} Tr(P rho(t - t0)) dt`, where `rho_eig` is the
    /// state at `t0`.
    pub fn weighted_segment(
        &self,
        p_eig: &ComplexMatrix,
        rho_eig: &ComplexMatrix,
        k: f64,
        t0: f64,
        span: f64,
    ) -> f64 {
        let pre = k * (-k * t0).exp();
        self.weighted_sum(p_eig, rho_eig, |w| {
            let z = C64::new(k, w);
            let decay = (-z * span).exp();
            (C64::new(1.0, 0.0) - decay) / z * pre
        })
    }

    fn weighted_sum(
        &self,
        p_eig: &ComplexMatrix,
        rho_eig: &ComplexMatrix,
        kernel: impl Fn(f64) -> C64,
    ) -> f64 {
        let lam = &self.eig.values;
        let n = lam.len();
        let mut acc = C64::new(0.0, 0.0);
        for m in 0..n {
            for nn in 0..n {
                let term = p_eig[(nn, m)] * rho_eig[(m, nn)];
                if term.norm() > 0.0 {
                    acc += term * kernel(lam[m] - lam[nn]);
                }
            }
        }
        acc.re
    }
}
