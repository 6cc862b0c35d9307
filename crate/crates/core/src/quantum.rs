//! Complex linear algebra and quantum-state primitives.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tomography::ProcessMatrix;

pub use num_complex::Complex64 as C64;

/// Dense complex matrix, row/column counts carried by the matrix itself.
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Entrywise tolerance for structural checks (Hermiticity, unitarity, norms).
pub const STRUCTURAL_TOL: f64 = 1e-12;
/// Tolerance for spectral checks (trace, smallest eigenvalue).
pub const SPECTRAL_TOL: f64 = 1e-10;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Pauli matrix by index: 0 = identity, 1 = X, 2 = Y, 3 = Z.
pub fn pauli(index: usize) -> ComplexMatrix {
    match index {
        0 => ComplexMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ONE]),
        1 => ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        2 => ComplexMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        3 => ComplexMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        _ => panic!("pauli index {index} out of range"),
    }
}

/// The operator basis `{I, X, Y, Z}`.
pub fn pauli_basis() -> [ComplexMatrix; 4] {
    [pauli(0), pauli(1), pauli(2), pauli(3)]
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `max |U^dagger U - I|` entrywise.
pub fn unitarity_error(u: &ComplexMatrix) -> f64 {
    let n = u.nrows();
    max_abs_diff(&(u.adjoint() * u), &ComplexMatrix::identity(n, n))
}

pub fn hermiticity_error(m: &ComplexMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    let h = hermitize(m);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn hermitize(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).unscale(2.0)
}

/// Square root of a positive-semidefinite Hermitian matrix; negative
/// eigenvalues from roundoff are clamped to zero.
pub fn psd_sqrt(m: &ComplexMatrix) -> ComplexMatrix {
    let eig = hermitize(m).symmetric_eigen();
    let n = m.nrows();
    let mut d = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        d[(k, k)] = C64::new(eig.eigenvalues[k].max(0.0).sqrt(), 0.0);
    }
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: ComplexVector,
}

impl PureState {
    pub fn new(amplitudes: ComplexVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidArgument("empty state vector".into()));
        }
        let norm = amplitudes.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > STRUCTURAL_TOL {
            return Err(Error::Invariant(format!("state norm {norm} is not 1")));
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalized(amplitudes: ComplexVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidArgument(
                "cannot normalize a zero vector".into(),
            ));
        }
        Ok(Self {
            amplitudes: amplitudes.unscale(norm),
        })
    }

    pub fn from_slice(amplitudes: &[C64]) -> Result<Self> {
        Self::normalized(ComplexVector::from_column_slice(amplitudes))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim);
        let mut v = ComplexVector::zeros(dim);
        v[index] = ONE;
        Self { amplitudes: v }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &ComplexVector {
        &self.amplitudes
    }

    pub fn projector(&self) -> ComplexMatrix {
        &self.amplitudes * self.amplitudes.adjoint()
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            matrix: hermitize(&self.projector()),
        }
    }
}

/// Hermitian, positive-semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates the density-matrix invariants.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "density matrix must be square, got {:?}",
                matrix.shape()
            )));
        }
        if !is_finite(&matrix) {
            return Err(Error::Invariant("non-finite density matrix entry".into()));
        }
        let herm = hermiticity_error(&matrix);
        if herm > STRUCTURAL_TOL {
            return Err(Error::Invariant(format!(
                "not Hermitian (error {herm:.3e})"
            )));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > SPECTRAL_TOL || tr.im.abs() > SPECTRAL_TOL {
            return Err(Error::Invariant(format!("trace {tr} is not 1")));
        }
        let min_ev = hermitian_eigenvalues(&matrix)[0];
        if min_ev < -SPECTRAL_TOL {
            return Err(Error::Invariant(format!(
                "negative eigenvalue {min_ev:.3e}"
            )));
        }
        Ok(Self {
            matrix: hermitize(&matrix),
        })
    }

    /// Hermitizes and renormalizes a numerically produced matrix before
    /// validating it. Fails if the trace vanishes or the result is not PSD.
    pub fn from_unnormalized(matrix: ComplexMatrix) -> Result<Self> {
        let h = hermitize(&matrix);
        let tr = h.trace().re;
        if !(tr > 0.0) {
            return Err(Error::Invariant(format!("non-positive trace {tr}")));
        }
        Self::new(h.unscale(tr))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim, dim).unscale(dim as f64),
        }
    }

    /// `rho = (I + r . sigma) / 2`; requires `|r| <= 1`.
    pub fn from_bloch(r: &Vector3<f64>) -> Result<Self> {
        if r.norm() > 1.0 + SPECTRAL_TOL {
            return Err(Error::InvalidArgument(format!(
                "Bloch vector norm {} exceeds 1",
                r.norm()
            )));
        }
        let mut m = pauli(0);
        for (k, rk) in r.iter().enumerate() {
            m += pauli(k + 1).scale(*rk);
        }
        Self::new(m.unscale(2.0))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Expectation value `tr(rho O)`.
    pub fn expectation(&self, op: &ComplexMatrix) -> C64 {
        (&self.matrix * op).trace()
    }

    /// Trace distance `||rho - sigma||_1 / 2`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "trace distance between dims {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let diff = &self.matrix - &other.matrix;
        Ok(hermitian_eigenvalues(&diff)
            .iter()
            .map(|e| e.abs())
            .sum::<f64>()
            / 2.0)
    }
}

/// Partial trace of an arbitrary square matrix over the subsystems not in
/// `keep`. Kept subsystems retain their original order.
pub fn partial_trace_matrix(
    m: &ComplexMatrix,
    subsystem_dims: &[usize],
    keep: &[usize],
) -> Result<ComplexMatrix> {
    let total: usize = subsystem_dims.iter().product();
    if subsystem_dims.is_empty() || subsystem_dims.contains(&0) {
        return Err(Error::DimensionMismatch(
            "subsystem dims must be positive".into(),
        ));
    }
    if total != m.nrows() || !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "subsystem dims {subsystem_dims:?} multiply to {total}, matrix is {:?}",
            m.shape()
        )));
    }
    if keep.is_empty() {
        return Err(Error::InvalidArgument("keep set is empty".into()));
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.len() != keep.len() || *keep_sorted.last().unwrap() >= subsystem_dims.len() {
        return Err(Error::InvalidArgument(format!("invalid keep set {keep:?}")));
    }
    let n = subsystem_dims.len();
    let is_kept: Vec<bool> = (0..n).map(|k| keep_sorted.contains(&k)).collect();
    let kept_dim: usize = keep_sorted.iter().map(|&k| subsystem_dims[k]).product();

    // Split every full index into (kept index, traced index).
    let split: Vec<(usize, usize)> = (0..total)
        .map(|mut idx| {
            let mut digits = vec![0usize; n];
            for k in (0..n).rev() {
                digits[k] = idx % subsystem_dims[k];
                idx /= subsystem_dims[k];
            }
            let (mut kept, mut traced) = (0usize, 0usize);
            for k in 0..n {
                if is_kept[k] {
                    kept = kept * subsystem_dims[k] + digits[k];
                } else {
                    traced = traced * subsystem_dims[k] + digits[k];
                }
            }
            (kept, traced)
        })
        .collect();

    let mut out = ComplexMatrix::zeros(kept_dim, kept_dim);
    for i in 0..total {
        let (ki, ti) = split[i];
        for j in 0..total {
            let (kj, tj) = split[j];
            if ti == tj {
                out[(ki, kj)] += m[(i, j)];
            }
        }
    }
    Ok(out)
}

pub fn partial_trace(
    rho: &DensityMatrix,
    subsystem_dims: &[usize],
    keep: &[usize],
) -> Result<DensityMatrix> {
    let reduced = partial_trace_matrix(rho.matrix(), subsystem_dims, keep)?;
    DensityMatrix::from_unnormalized(reduced)
}

/// `<psi|rho|psi>`, clipped into `[0, 1]` only within the spectral tolerance.
pub fn state_fidelity(rho: &DensityMatrix, psi: &PureState) -> Result<f64> {
    if rho.dim() != psi.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state fidelity between dims {} and {}",
            rho.dim(),
            psi.dim()
        )));
    }
    let v = psi.amplitudes();
    let f = (v.adjoint() * rho.matrix() * v)[(0, 0)].re;
    Ok(clip_unit(f))
}

pub(crate) fn clip_unit(f: f64) -> f64 {
    if (-SPECTRAL_TOL..0.0).contains(&f) {
        0.0
    } else if f > 1.0 && f <= 1.0 + SPECTRAL_TOL {
        1.0
    } else {
        f
    }
}

/// Bloch vector `r_i = tr(sigma_i rho)`, with `|S>` at `+z`.
pub fn bloch_vector(rho: &DensityMatrix) -> Result<Vector3<f64>> {
    if rho.dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "Bloch vector needs a qubit, got dim {}",
            rho.dim()
        )));
    }
    Ok(bloch_of_matrix(rho.matrix()))
}

pub(crate) fn bloch_of_matrix(m: &ComplexMatrix) -> Vector3<f64> {
    Vector3::new(
        (pauli(1) * m).trace().re,
        (pauli(2) * m).trace().re,
        (pauli(3) * m).trace().re,
    )
}

/// Random qubit channel: a Haar-like random isometry from the qubit into
/// qubit (x) 4-dimensional environment, with the environment traced out.
pub fn random_cptp_qubit_channel(seed: u64) -> ProcessMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = ComplexMatrix::zeros(8, 2);
    for z in g.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *z = C64::new(re, im);
    }
    // Gram-Schmidt on the two columns gives the isometry.
    let mut cols: Vec<ComplexVector> = Vec::with_capacity(2);
    for c in 0..2 {
        let mut v: ComplexVector = g.column(c).into_owned();
        for u in &cols {
            let proj = (u.adjoint() * &v)[(0, 0)];
            v -= u * proj;
        }
        let n = v.norm();
        cols.push(v.unscale(n));
    }
    let isometry = ComplexMatrix::from_columns(&cols);
    let kraus: Vec<ComplexMatrix> = (0..4)
        .map(|k| isometry.rows(2 * k, 2).into_owned())
        .collect();
    ProcessMatrix::from_kraus(&kraus)
}

/// Plain real/imaginary row-major serialization shared by all matrix outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&ComplexMatrix> for MatrixRecord {
    fn from(m: &ComplexMatrix) -> Self {
        let mut re = Vec::with_capacity(m.len());
        let mut im = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            re,
            im,
        }
    }
}

impl MatrixRecord {
    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let n = self.rows * self.cols;
        if self.re.len() != n || self.im.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "matrix record {}x{} carries {} / {} entries",
                self.rows,
                self.cols,
                self.re.len(),
                self.im.len()
            )));
        }
        let entries: Vec<C64> = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(&r, &i)| C64::new(r, i))
            .collect();
        Ok(ComplexMatrix::from_row_slice(
            self.rows, self.cols, &entries,
        ))
    }
}
