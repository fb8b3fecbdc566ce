//! Dense complex linear algebra and spin operators.
//!
//! Matrices are plain `nalgebra` dense matrices over `Complex<f64>`. Composite
//! Hilbert spaces are ordered electron 1, electron 2, then nuclei in
//! declaration order; each spin factor uses the `S_z` eigenbasis in
//! descending `m` (so `|up>` is index 0).
//!
//! Superoperators act on density matrices vectorized column-major:
//! `vec(A X B) = (B^T ⊗ A) vec(X)`.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{CompassError, Result};

pub type C64 = Complex<f64>;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Hermiticity tolerance applied before eigendecomposition.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Angular-momentum matrices `S_x, S_y, S_z` for a single spin `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinOperators {
    twice_spin: u32,
    pub x: ComplexMatrix,
    pub y: ComplexMatrix,
    pub z: ComplexMatrix,
}

impl SpinOperators {
    pub fn spin(&self) -> f64 {
        f64::from(self.twice_spin) / 2.0
    }

    pub fn dim(&self) -> usize {
        self.twice_spin as usize + 1
    }

    /// Components in x, y, z order.
    pub fn components(&self) -> [&ComplexMatrix; 3] {
        [&self.x, &self.y, &self.z]
    }
}

/// Checks that `s` is a positive half-integer and returns `2s`.
pub fn twice_spin(s: f64) -> Result<u32> {
    let two_s = 2.0 * s;
    if !two_s.is_finite() || two_s < 0.5 || (two_s - two_s.round()).abs() > 1e-12 {
        return Err(CompassError::InvalidSpin(s));
    }
    Ok(two_s.round() as u32)
}

pub fn spin_operators(s: f64) -> Result<SpinOperators> {
    let twice = twice_spin(s)?;
    let s = f64::from(twice) / 2.0;
    let n = twice as usize + 1;
    let m = |i: usize| s - i as f64;

    let mut z = ComplexMatrix::zeros(n, n);
    let mut raise = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        z[(i, i)] = c(m(i));
        if i > 0 {
            // S+ |m_i> = sqrt(s(s+1) - m_i(m_i+1)) |m_i + 1>, and m_i + 1 = m_{i-1}.
            let mi = m(i);
            raise[(i - 1, i)] = c((s * (s + 1.0) - mi * (mi + 1.0)).sqrt());
        }
    }
    let lower = raise.adjoint();
    let x = (&raise + &lower) * c(0.5);
    let y = (&raise - &lower) * C64::new(0.0, -0.5);
    Ok(SpinOperators {
        twice_spin: twice,
        x,
        y,
        z,
    })
}

/// Pauli `sigma_z` in the descending basis.
pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![c(1.0), c(-1.0)]))
}

/// Places `op` on factor `site` of a tensor product with identities elsewhere.
pub fn embed(op: &ComplexMatrix, site: usize, dims: &[usize]) -> Result<ComplexMatrix> {
    if site >= dims.len() {
        return Err(CompassError::SiteOutOfRange {
            site,
            count: dims.len(),
        });
    }
    if !op.is_square() || op.nrows() != dims[site] {
        return Err(CompassError::DimensionMismatch(format!(
            "operator is {}x{} but subsystem {site} has dimension {}",
            op.nrows(),
            op.ncols(),
            dims[site]
        )));
    }
    let before: usize = dims[..site].iter().product();
    let after: usize = dims[site + 1..].iter().product();
    let left = ComplexMatrix::identity(before, before).kronecker(op);
    Ok(left.kronecker(&ComplexMatrix::identity(after, after)))
}

/// Largest entrywise deviation `max |M - M^dagger|`.
pub fn hermiticity_error(m: &ComplexMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    hermiticity_error(m) <= tol
}

pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

/// Eigenvalues (ascending) and unitary eigenvectors of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `V diag(f(lambda)) V^dagger`.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            scaled.column_mut(j).apply(|z| *z *= w);
        }
        scaled * self.vectors.adjoint()
    }
}

pub fn hermitian_eig(m: &ComplexMatrix) -> Result<HermitianEigen> {
    let err = hermiticity_error(m);
    if err > HERMITIAN_TOL {
        return Err(CompassError::NotHermitian(err));
    }
    // Symmetrize so the solver sees an exactly Hermitian input.
    let sym = (m + m.adjoint()) * c(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let n = m.nrows();
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    Ok(HermitianEigen { values, vectors })
}

/// Solves `A x = b` by LU with partial pivoting.
pub fn solve_linear(a: &ComplexMatrix, b: &ComplexVector) -> Result<ComplexVector> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(CompassError::DimensionMismatch(format!(
            "system matrix {}x{} with right-hand side of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for d in u.diagonal().iter() {
        lo = lo.min(d.norm());
        hi = hi.max(d.norm());
    }
    let pivot_ratio = if hi > 0.0 { lo / hi } else { 0.0 };
    if pivot_ratio < 1e-14 {
        return Err(CompassError::Singular { pivot_ratio });
    }
    lu.solve(b).ok_or(CompassError::Singular { pivot_ratio })
}

/// Column-major vectorization.
pub fn vectorize(m: &ComplexMatrix) -> ComplexVector {
    ComplexVector::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &ComplexVector, n: usize) -> Result<ComplexMatrix> {
    if v.len() != n * n {
        return Err(CompassError::DimensionMismatch(format!(
            "vector of length {} cannot be reshaped to {n}x{n}",
            v.len()
        )));
    }
    Ok(ComplexMatrix::from_column_slice(n, n, v.as_slice()))
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> ComplexMatrix {
        let mut state = seed;
        let mut next = || {
            // xorshift; test-only determinism
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state as f64 / u64::MAX as f64) - 0.5
        };
        let raw = ComplexMatrix::from_fn(n, n, |_, _| C64::new(next(), next()));
        &raw + raw.adjoint()
    }

    #[test]
    fn spin_half_matrices() {
        let s = spin_operators(0.5).unwrap();
        assert_eq!(s.z[(0, 0)], c(0.5));
        assert_eq!(s.z[(1, 1)], c(-0.5));
        assert!((s.x[(0, 1)] - c(0.5)).norm() < 1e-15);
        assert!((s.x[(1, 0)] - c(0.5)).norm() < 1e-15);
        let comm = commutator(&s.x, &s.y) - &s.z * I;
        assert!(comm.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn spin_one_z_is_descending() {
        let s = spin_operators(1.0).unwrap();
        let diag: Vec<f64> = s.z.diagonal().iter().map(|z| z.re).collect();
        assert_eq!(diag, vec![1.0, 0.0, -1.0]);
    }

    #[test]
    fn commutation_and_casimir_for_higher_spins() {
        for twice in 1..=5u32 {
            let s = f64::from(twice) / 2.0;
            let ops = spin_operators(s).unwrap();
            let n = ops.dim();
            let cyc = [
                (&ops.x, &ops.y, &ops.z),
                (&ops.y, &ops.z, &ops.x),
                (&ops.z, &ops.x, &ops.y),
            ];
            for (a, b, cc) in cyc {
                let d = commutator(a, b) - cc * I;
                assert!(d.iter().all(|z| z.norm() < 1e-12), "s = {s}");
            }
            let casimir = &ops.x * &ops.x + &ops.y * &ops.y + &ops.z * &ops.z;
            let expect = ComplexMatrix::identity(n, n) * c(s * (s + 1.0));
            assert!(max_abs_diff(&casimir, &expect) < 1e-12);
        }
    }

    #[test]
    fn rejects_non_half_integer_spin() {
        assert!(matches!(spin_operators(0.3), Err(CompassError::InvalidSpin(_))));
        assert!(spin_operators(0.0).is_err());
        assert!(spin_operators(-0.5).is_err());
    }

    #[test]
    fn embed_identity_and_sigma_z() {
        let id2 = ComplexMatrix::identity(2, 2);
        assert_eq!(embed(&id2, 0, &[2, 2]).unwrap(), ComplexMatrix::identity(4, 4));
        let z = embed(&pauli_z(), 1, &[2, 2]).unwrap();
        let diag: Vec<f64> = z.diagonal().iter().map(|v| v.re).collect();
        assert_eq!(diag, vec![1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn embed_trace_multiplies_by_other_dims() {
        let op = random_hermitian(3, 7);
        let dims = [2, 3, 2];
        let e = embed(&op, 1, &dims).unwrap();
        assert!((e.trace() - op.trace() * c(4.0)).norm() < 1e-12);
    }

    #[test]
    fn embed_errors() {
        let id2 = ComplexMatrix::identity(2, 2);
        assert!(matches!(
            embed(&id2, 2, &[2, 2]),
            Err(CompassError::SiteOutOfRange { .. })
        ));
        assert!(matches!(
            embed(&id2, 0, &[3, 2]),
            Err(CompassError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn distinct_site_operators_commute() {
        let dims = [2, 2, 3];
        let a = embed(&random_hermitian(2, 3), 0, &dims).unwrap();
        let b = embed(&random_hermitian(3, 5), 2, &dims).unwrap();
        assert!(commutator(&a, &b).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn eig_diagonal_and_sigma_x() {
        let m = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![c(3.0), c(1.0)]));
        let e = hermitian_eig(&m).unwrap();
        assert_eq!(e.values, vec![1.0, 3.0]);

        let sx = ComplexMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        let e = hermitian_eig(&sx).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        // eigenvector for -1 is (1, -1)/sqrt2 up to phase
        let v = e.vectors.column(0);
        assert!((v[0] + v[1]).norm() < 1e-12);
        assert!((v[0].norm() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn eig_two_by_two_matches_characteristic_roots() {
        let (a, d, b) = (1.3, -0.4, C64::new(0.7, -0.2));
        let m = ComplexMatrix::from_row_slice(2, 2, &[c(a), b, b.conj(), c(d)]);
        let disc = (((a - d) / 2.0).powi(2) + b.norm_sqr()).sqrt();
        let e = hermitian_eig(&m).unwrap();
        assert!((e.values[0] - ((a + d) / 2.0 - disc)).abs() < 1e-13);
        assert!((e.values[1] - ((a + d) / 2.0 + disc)).abs() < 1e-13);
    }

    #[test]
    fn eig_random_reconstruction() {
        let m = random_hermitian(8, 11);
        let e = hermitian_eig(&m).unwrap();
        let rebuilt = e.map(c);
        assert!(max_abs_diff(&rebuilt, &m) < 1e-10);
        let gram = e.vectors.adjoint() * &e.vectors;
        assert!(max_abs_diff(&gram, &ComplexMatrix::identity(8, 8)) < 1e-10);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let m = ComplexMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]);
        assert!(matches!(hermitian_eig(&m), Err(CompassError::NotHermitian(_))));
    }

    #[test]
    fn solve_trivial_systems() {
        let b = ComplexVector::from_vec(vec![C64::new(1.0, 2.0), c(-3.0)]);
        let x = solve_linear(&ComplexMatrix::identity(2, 2), &b).unwrap();
        assert_eq!(x, b);

        let a = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![c(2.0), c(4.0)]));
        let x = solve_linear(&a, &ComplexVector::from_vec(vec![c(2.0), c(8.0)])).unwrap();
        assert!((x[0] - c(1.0)).norm() < 1e-15 && (x[1] - c(2.0)).norm() < 1e-15);
    }

    #[test]
    fn solve_random_well_conditioned() {
        let n = 64;
        let a = random_hermitian(n, 19) + ComplexMatrix::identity(n, n) * c(20.0);
        let b = ComplexVector::from_fn(n, |i, _| C64::new(i as f64, 1.0));
        let x = solve_linear(&a, &b).unwrap();
        let residual = (&a * &x - &b).norm() / b.norm();
        assert!(residual < 1e-10, "residual {residual}");
    }

    #[test]
    fn solve_reports_singular() {
        let a = ComplexMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(2.0), c(4.0)]);
        let b = ComplexVector::from_vec(vec![c(1.0), c(1.0)]);
        assert!(matches!(solve_linear(&a, &b), Err(CompassError::Singular { .. })));
    }

    #[test]
    fn vectorization_is_column_major() {
        let m = ComplexMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(3.0), c(4.0)]);
        let v = vectorize(&m);
        let got: Vec<f64> = v.iter().map(|z| z.re).collect();
        assert_eq!(got, vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(unvectorize(&v, 2).unwrap(), m);
    }

    #[test]
    fn kron_vectorization_identity() {
        // vec(A X B) = (B^T kron A) vec(X)
        let a = random_hermitian(3, 1) + ComplexMatrix::identity(3, 3) * I;
        let b = random_hermitian(3, 2);
        let x = random_hermitian(3, 4) * I + random_hermitian(3, 9);
        let lhs = vectorize(&(&a * &x * &b));
        let rhs = b.transpose().kronecker(&a) * vectorize(&x);
        assert!((lhs - rhs).norm() < 1e-12);
    }
}
