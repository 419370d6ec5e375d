//! Dense complex linear algebra on cut-off spaces.
//!
//! Cut-off dimensions stay in the hundreds, so every norm here is computed
//! exactly from a Hermitian eigendecomposition or an SVD.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest entry modulus of `m - m†`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut defect = 0.0_f64;
    for j in 0..n {
        for i in 0..=j {
            defect = defect.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    defect
}

/// Hermitian part `(m + m†) / 2`.
pub fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn is_diagonal(m: &CMatrix) -> bool {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..n {
            if i != j && m[(i, j)] != C64::new(0.0, 0.0) {
                return false;
            }
        }
    }
    true
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = nalgebra::linalg::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])]);
    (values, vectors)
}

/// `V · diag(f(λ)) · V†` for a Hermitian `m = V diag(λ) V†`.
pub fn hermitian_function(m: &CMatrix, f: impl Fn(f64) -> C64) -> CMatrix {
    let n = m.nrows();
    if is_diagonal(m) {
        return CMatrix::from_fn(n, n, |i, j| if i == j { f(m[(i, i)].re) } else { C64::new(0.0, 0.0) });
    }
    let (values, vectors) = eigh(m);
    let mut scaled = vectors.clone();
    for (k, &lambda) in values.iter().enumerate() {
        let fk = f(lambda);
        for i in 0..n {
            scaled[(i, k)] *= fk;
        }
    }
    scaled * vectors.adjoint()
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.is_square() && is_diagonal(m) {
        return (0..m.nrows()).fold(0.0, |acc, i| acc.max(m[(i, i)].norm()));
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Spectral norm of a Hermitian matrix from its eigenvalues.
pub fn hermitian_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let (values, _) = eigh(m);
    values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// `‖U†U − I‖` in spectral norm.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    if is_diagonal(u) {
        return u.diagonal().iter().map(|z| (z.norm_sqr() - 1.0).abs()).fold(0.0, f64::max);
    }
    let gram = u.adjoint() * u - CMatrix::identity(n, n);
    hermitian_norm(&symmetrize(&gram))
}

/// Closest unitary matrix in any unitarily invariant norm (polar factor).
pub fn nearest_unitary(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    if n == 0 {
        return m.clone();
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    u * v_t
}

/// `acc += c·m`.
pub fn add_scaled(acc: &mut CMatrix, c: C64, m: &CMatrix) {
    assert_eq!(acc.shape(), m.shape());
    acc.iter_mut().zip(m.iter()).for_each(|(a, b)| *a += c * b);
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Integer power of a unitary matrix; negative exponents use the adjoint.
pub fn unitary_power(u: &CMatrix, q: i64) -> CMatrix {
    let n = u.nrows();
    let base = if q < 0 { u.adjoint() } else { u.clone() };
    let mut result = CMatrix::identity(n, n);
    let mut square = base;
    let mut e = q.unsigned_abs();
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &square;
        }
        e >>= 1;
        if e > 0 {
            square = &square * &square;
        }
    }
    result
}

/// Principal logarithm data of a unitary matrix.
#[derive(Debug, Clone)]
pub struct UnitaryLog {
    /// Eigenphases θ_k in (−π, π], with `U = V diag(e^{iθ}) V†`.
    pub phases: Vec<f64>,
    pub vectors: CMatrix,
    /// Smallest distance of any eigenphase to the branch cut at ±π.
    pub cut_distance: f64,
}

/// Eigenphases of a unitary matrix via the complex Schur form, which is
/// diagonal for normal matrices.
pub fn unitary_log(u: &CMatrix) -> Result<UnitaryLog> {
    let n = u.nrows();
    if n == 0 {
        return Ok(UnitaryLog { phases: Vec::new(), vectors: CMatrix::zeros(0, 0), cut_distance: f64::INFINITY });
    }
    let defect = unitarity_defect(u);
    if defect > 1e-8 {
        return Err(Error::NotUnitary(defect));
    }
    let (q, t) = nalgebra::linalg::Schur::new(u.clone()).unpack();
    let mut phases = Vec::with_capacity(n);
    let mut cut_distance = f64::INFINITY;
    for k in 0..n {
        let mut theta = t[(k, k)].arg();
        if theta <= -std::f64::consts::PI {
            theta = std::f64::consts::PI;
        }
        cut_distance = cut_distance.min(std::f64::consts::PI - theta.abs());
        phases.push(theta);
    }
    Ok(UnitaryLog { phases, vectors: q, cut_distance })
}

pub fn to_dense_vector(values: &[C64]) -> CVector {
    CVector::from_column_slice(values)
}
