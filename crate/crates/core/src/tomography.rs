//! Single-qubit state and process tomography.
//!
//! A qubit channel is stored as its process matrix `chi` in the Pauli
//! operator basis `A = (I, X, Y, Z)`:
//! `E(rho) = sum_mn chi_mn A_m rho A_n^dagger`.
//! The Choi matrix used internally lives on `in (x) out` and is
//! `J = sum_ab |a><b| (x) E(|a><b|) = sum_mn chi_mn |A_m>><<A_n|` with
//! `|A>> = sum_a |a> (x) A|a>`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::io::{Read, Write};

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::shot_rng;
use crate::quantum::{
    bloch_of_matrix, clip_unit, hermitian_eigenvalues, hermiticity_error, hermitize, kron,
    max_abs_diff, partial_trace_matrix, pauli, pauli_basis, ComplexMatrix, ComplexVector,
    DensityMatrix, MatrixRecord, PureState, C64, ONE, SPECTRAL_TOL, ZERO,
};
use crate::trap::{rotation, Outcome};

/// Hermiticity and positivity tolerance for process matrices.
pub const PROCESS_TOL: f64 = 1e-10;
/// Trace-preservation tolerance for process matrices.
pub const TRACE_PRESERVATION_TOL: f64 = 1e-8;
/// Singular-value threshold of the input-set rank test.
pub const INPUT_RANK_TOL: f64 = 1e-8;

/// Measurement basis of ion 3, realized by a carrier pre-rotation followed by
/// fluorescence detection. Bright projects on `R^dagger |S>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
    Y,
}

impl Basis {
    /// Serialization order of count tables.
    pub const ALL: [Basis; 3] = [Basis::Z, Basis::X, Basis::Y];

    /// Phase of the `pi/2` carrier pre-rotation; `None` for the Z basis.
    pub fn pre_rotation_phase(self) -> Option<f64> {
        match self {
            Basis::Z => None,
            Basis::X => Some(3.0 * FRAC_PI_2),
            Basis::Y => Some(PI),
        }
    }

    pub fn pre_rotation(self) -> ComplexMatrix {
        match self.pre_rotation_phase() {
            None => ComplexMatrix::identity(2, 2),
            Some(phi) => {
                let r = rotation(FRAC_PI_2, phi);
                ComplexMatrix::from_fn(2, 2, |i, j| r[(i, j)])
            }
        }
    }

    /// POVM element of `outcome`: `R^dagger P R` with `P` the projector on
    /// `S` (Bright) or `D` (Dark).
    pub fn projector(self, outcome: Outcome) -> ComplexMatrix {
        let r = self.pre_rotation();
        let k = match outcome {
            Outcome::Bright => 0,
            Outcome::Dark => 1,
        };
        let mut p = ComplexMatrix::zeros(2, 2);
        p[(k, k)] = ONE;
        r.adjoint() * p * r
    }

    fn index(self) -> usize {
        match self {
            Basis::Z => 0,
            Basis::X => 1,
            Basis::Y => 2,
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Z" => Ok(Basis::Z),
            "X" => Ok(Basis::X),
            "Y" => Ok(Basis::Y),
            other => Err(Error::InvalidArgument(format!("unknown basis {other:?}"))),
        }
    }
}

const OUTCOMES: [Outcome; 2] = [Outcome::Bright, Outcome::Dark];

fn outcome_index(o: Outcome) -> usize {
    match o {
        Outcome::Bright => 0,
        Outcome::Dark => 1,
    }
}

/// Bright/Dark counts in the Z, X and Y bases. Counts are real so that
/// expected counts (infinite statistics) share the representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsTable {
    counts: [[f64; 2]; 3],
}

impl CountsTable {
    /// Rows in Z, X, Y order, each `[bright, dark]`.
    pub fn new(counts: [[f64; 2]; 3]) -> Result<Self> {
        for row in &counts {
            for &c in row {
                if !c.is_finite() || c < 0.0 {
                    return Err(Error::InvalidArgument(format!("invalid count {c}")));
                }
            }
        }
        Ok(Self { counts })
    }

    /// Expected counts `shots * p` of `rho`.
    pub fn expected(rho: &ComplexMatrix, shots: f64) -> Result<Self> {
        let mut counts = [[0.0; 2]; 3];
        for basis in Basis::ALL {
            for o in OUTCOMES {
                let p = (rho * basis.projector(o)).trace().re.clamp(0.0, 1.0);
                counts[basis.index()][outcome_index(o)] = shots * p;
            }
        }
        Self::new(counts)
    }

    pub fn get(&self, basis: Basis, outcome: Outcome) -> f64 {
        self.counts[basis.index()][outcome_index(outcome)]
    }

    pub fn set(&mut self, basis: Basis, outcome: Outcome, count: f64) -> Result<()> {
        if !count.is_finite() || count < 0.0 {
            return Err(Error::InvalidArgument(format!("invalid count {count}")));
        }
        self.counts[basis.index()][outcome_index(outcome)] = count;
        Ok(())
    }

    pub fn basis_total(&self, basis: Basis) -> f64 {
        self.counts[basis.index()].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().flatten().sum()
    }

    pub fn bright_fraction(&self, basis: Basis) -> Option<f64> {
        let n = self.basis_total(basis);
        (n > 0.0).then(|| self.get(basis, Outcome::Bright) / n)
    }

    /// `(basis, outcome, count)` in serialization order.
    pub fn rows(&self) -> impl Iterator<Item = (Basis, Outcome, f64)> + '_ {
        Basis::ALL
            .into_iter()
            .flat_map(move |b| OUTCOMES.into_iter().map(move |o| (b, o, self.get(b, o))))
    }

    /// Whether every count is a whole number.
    pub fn is_integral(&self) -> bool {
        self.counts.iter().flatten().all(|c| c.fract() == 0.0)
    }

    /// CSV with header `basis,outcome,count`, rows Z, X, Y by Bright, Dark.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["basis", "outcome", "count"])?;
        for (b, o, c) in self.rows() {
            w.write_record([b.to_string(), o.to_string(), format!("{c}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["basis", "outcome", "count"] {
            return Err(Error::InvalidArgument(format!(
                "unexpected CSV header {headers:?}"
            )));
        }
        let mut table = Self {
            counts: [[0.0; 2]; 3],
        };
        for record in r.records() {
            let record = record?;
            let basis: Basis = record[0].parse()?;
            let outcome = match &record[1] {
                "Bright" => Outcome::Bright,
                "Dark" => Outcome::Dark,
                other => return Err(Error::InvalidArgument(format!("unknown outcome {other:?}"))),
            };
            let count: f64 = record[2]
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("count {:?}: {e}", &record[2])))?;
            table.set(basis, outcome, count)?;
        }
        Ok(table)
    }
}

/// Samples `shots_per_basis` detections per basis from `rho`. With zero
/// shots, the exact outcome probabilities are emitted as counts.
pub fn simulate_state_tomography<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    shots_per_basis: u64,
    rng: &mut R,
) -> Result<CountsTable> {
    if rho.dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "qubit state expected, got dim {}",
            rho.dim()
        )));
    }
    if shots_per_basis == 0 {
        return CountsTable::expected(rho.matrix(), 1.0);
    }
    let mut counts = [[0.0; 2]; 3];
    for basis in Basis::ALL {
        let p = rho
            .expectation(&basis.projector(Outcome::Bright))
            .re
            .clamp(0.0, 1.0);
        let bright = Binomial::new(shots_per_basis, p)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(rng);
        counts[basis.index()] = [bright as f64, (shots_per_basis - bright) as f64];
    }
    CountsTable::new(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MleOptions {
    /// Initial mixing weight of the `R rho R` update.
    pub dilution: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            dilution: 0.5,
            tolerance: 1e-10,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateEstimate {
    pub rho: DensityMatrix,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood of every accepted iterate, starting at `I/2`.
    pub likelihood_trace: Vec<f64>,
}

fn state_log_likelihood(rho: &ComplexMatrix, terms: &[(f64, ComplexMatrix)]) -> f64 {
    terms
        .iter()
        .map(|(n, proj)| n * (rho * proj).trace().re.max(f64::MIN_POSITIVE).ln())
        .sum()
}

/// Maximum-likelihood state from Pauli-basis counts.
pub fn mle_state(counts: &CountsTable) -> Result<DensityMatrix> {
    Ok(mle_state_with(counts, &MleOptions::default())?.rho)
}

/// Diluted `R rho R` iteration. A step that would lower the likelihood is
/// retried with half the dilution, so accepted iterates are monotone.
pub fn mle_state_with(counts: &CountsTable, options: &MleOptions) -> Result<StateEstimate> {
    if counts.total() <= 0.0 {
        return Err(Error::EmptyCounts);
    }
    if !(options.dilution > 0.0 && options.dilution <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "dilution {}",
            options.dilution
        )));
    }
    for b in Basis::ALL {
        if counts.basis_total(b) <= 0.0 {
            return Err(Error::InvalidArgument(format!("no counts in basis {b}")));
        }
    }
    // (count, projector) for observed outcomes; frequencies are per basis.
    let terms: Vec<(f64, ComplexMatrix)> = counts
        .rows()
        .filter(|&(_, _, c)| c > 0.0)
        .map(|(b, o, c)| (c, b.projector(o)))
        .collect();
    let freqs: Vec<(f64, &ComplexMatrix)> = counts
        .rows()
        .filter(|&(_, _, c)| c > 0.0)
        .zip(&terms)
        .map(|((b, _, c), (_, p))| (c / counts.basis_total(b) / Basis::ALL.len() as f64, p))
        .collect();

    let mut rho = ComplexMatrix::identity(2, 2).unscale(2.0);
    let mut ll = state_log_likelihood(&rho, &terms);
    let mut trace = vec![ll];
    let mut lambda = options.dilution;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        let mut r = ComplexMatrix::zeros(2, 2);
        for (f, proj) in &freqs {
            let p = (&rho * *proj).trace().re.max(f64::MIN_POSITIVE);
            r += proj.scale(f / p);
        }
        let rrr = &r * &rho * &r;
        let candidate = loop {
            let mut c = hermitize(&(rho.scale(1.0 - lambda) + rrr.scale(lambda)));
            let tr = c.trace().re;
            c.unscale_mut(tr);
            let ll_new = state_log_likelihood(&c, &terms);
            if ll_new >= ll || lambda < 1e-12 {
                break (c, ll_new);
            }
            lambda *= 0.5;
        };
        let (c, ll_new) = candidate;
        let change = max_abs_diff(&c, &rho);
        if ll_new >= ll {
            rho = c;
            ll = ll_new;
            trace.push(ll);
        }
        if change <= options.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("state MLE stopped after {iterations} iterations without converging");
    }
    Ok(StateEstimate {
        rho: DensityMatrix::from_unnormalized(rho)?,
        log_likelihood: ll,
        iterations,
        converged,
        likelihood_trace: trace,
    })
}

/// Process matrix in the `(I, X, Y, Z)` basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ProcessRecord", try_from = "ProcessRecord")]
pub struct ProcessMatrix {
    chi: ComplexMatrix,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProcessRecord {
    chi: MatrixRecord,
}

impl From<ProcessMatrix> for ProcessRecord {
    fn from(p: ProcessMatrix) -> Self {
        Self {
            chi: MatrixRecord::from(&p.chi),
        }
    }
}

impl TryFrom<ProcessRecord> for ProcessMatrix {
    type Error = Error;

    fn try_from(r: ProcessRecord) -> Result<Self> {
        ProcessMatrix::new(r.chi.to_matrix()?)
    }
}

/// `|A>> = sum_a |a> (x) A|a>` on `in (x) out`.
fn vectorize(a: &ComplexMatrix) -> ComplexVector {
    ComplexVector::from_fn(4, |k, _| a[(k % 2, k / 2)])
}

impl ProcessMatrix {
    /// Validated process matrix.
    pub fn new(chi: ComplexMatrix) -> Result<Self> {
        let p = Self::new_unchecked(chi)?;
        p.validate()?;
        Ok(p)
    }

    /// Any 4x4 matrix; used for linear-inversion estimates that may be
    /// unphysical.
    pub fn new_unchecked(chi: ComplexMatrix) -> Result<Self> {
        if chi.shape() != (4, 4) {
            return Err(Error::DimensionMismatch(format!(
                "chi must be 4x4, got {:?}",
                chi.shape()
            )));
        }
        Ok(Self { chi })
    }

    pub fn identity() -> Self {
        let mut chi = ComplexMatrix::zeros(4, 4);
        chi[(0, 0)] = ONE;
        Self { chi }
    }

    /// `chi = diag(1 - 3p/4, p/4, p/4, p/4)`.
    pub fn depolarizing(p: f64) -> Result<Self> {
        if !(0.0..=4.0 / 3.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("depolarizing strength {p}")));
        }
        let d = [1.0 - 0.75 * p, 0.25 * p, 0.25 * p, 0.25 * p];
        Ok(Self {
            chi: ComplexMatrix::from_fn(
                4,
                4,
                |i, j| if i == j { C64::new(d[i], 0.0) } else { ZERO },
            ),
        })
    }

    /// Conjugation by a 2x2 unitary.
    pub fn unitary(u: &ComplexMatrix) -> Self {
        Self::from_kraus(std::slice::from_ref(u))
    }

    pub fn from_kraus(kraus: &[ComplexMatrix]) -> Self {
        let basis = pauli_basis();
        let mut chi = ComplexMatrix::zeros(4, 4);
        for k in kraus {
            let c = ComplexVector::from_fn(4, |m, _| (basis[m].adjoint() * k).trace() / 2.0);
            chi += &c * c.adjoint();
        }
        Self { chi }
    }

    pub fn chi(&self) -> &ComplexMatrix {
        &self.chi
    }

    pub fn validate(&self) -> Result<()> {
        let herm = hermiticity_error(&self.chi);
        if herm > PROCESS_TOL {
            return Err(Error::Invariant(format!("chi not Hermitian ({herm:.3e})")));
        }
        let min = hermitian_eigenvalues(&self.chi)[0];
        if min < -PROCESS_TOL {
            return Err(Error::Invariant(format!("chi has eigenvalue {min:.3e}")));
        }
        let tp = self.trace_preservation_error();
        if tp > TRACE_PRESERVATION_TOL {
            return Err(Error::Invariant(format!(
                "chi not trace preserving ({tp:.3e})"
            )));
        }
        Ok(())
    }

    /// `max |sum_mn chi_mn A_n^dagger A_m - I|`.
    pub fn trace_preservation_error(&self) -> f64 {
        let a = pauli_basis();
        let mut s = ComplexMatrix::zeros(2, 2);
        for m in 0..4 {
            for n in 0..4 {
                s += (a[n].adjoint() * &a[m]).scale(1.0) * self.chi[(m, n)];
            }
        }
        max_abs_diff(&s, &ComplexMatrix::identity(2, 2))
    }

    /// `E(rho)` for any 2x2 operator.
    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let a = pauli_basis();
        let mut out = ComplexMatrix::zeros(2, 2);
        for m in 0..4 {
            let left = &a[m] * rho;
            for n in 0..4 {
                let c = self.chi[(m, n)];
                if c != ZERO {
                    out += (&left * a[n].adjoint()) * c;
                }
            }
        }
        out
    }

    pub fn to_choi(&self) -> ComplexMatrix {
        let v: Vec<ComplexVector> = pauli_basis().iter().map(vectorize).collect();
        let mut j = ComplexMatrix::zeros(4, 4);
        for m in 0..4 {
            for n in 0..4 {
                j += (&v[m] * v[n].adjoint()) * self.chi[(m, n)];
            }
        }
        j
    }

    pub fn from_choi(choi: &ComplexMatrix) -> Result<Self> {
        if choi.shape() != (4, 4) {
            return Err(Error::DimensionMismatch("Choi matrix must be 4x4".into()));
        }
        let v: Vec<ComplexVector> = pauli_basis().iter().map(vectorize).collect();
        let chi =
            ComplexMatrix::from_fn(4, 4, |m, n| (v[m].adjoint() * choi * &v[n])[(0, 0)] / 4.0);
        Ok(Self { chi })
    }

    /// `R_ij = tr(sigma_i E(sigma_j)) / 2` over `(I, X, Y, Z)`; real for
    /// Hermiticity-preserving maps.
    pub fn pauli_transfer(&self) -> nalgebra::Matrix4<f64> {
        let a = pauli_basis();
        let images: Vec<ComplexMatrix> = a.iter().map(|s| self.apply(s)).collect();
        nalgebra::Matrix4::from_fn(|i, j| 0.5 * (&a[i] * &images[j]).trace().re)
    }
}

/// A single-qubit map given by its action on operators.
pub trait QubitChannel {
    fn apply_channel(&self, rho: &ComplexMatrix) -> ComplexMatrix;
}

impl QubitChannel for ProcessMatrix {
    fn apply_channel(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        self.apply(rho)
    }
}

impl<F: Fn(&ComplexMatrix) -> ComplexMatrix> QubitChannel for F {
    fn apply_channel(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        self(rho)
    }
}

/// Linear inversion of `E(rho) = sum chi_mn A_m rho A_n^dagger` from the
/// images `E(I), E(X), E(Y), E(Z)`. Positivity is not enforced.
pub fn chi_from_channel(images: &[ComplexMatrix]) -> Result<ProcessMatrix> {
    if images.len() != 4 || images.iter().any(|m| m.shape() != (2, 2)) {
        return Err(Error::DimensionMismatch(
            "need the four 2x2 images of I, X, Y, Z".into(),
        ));
    }
    let a = pauli_basis();
    let mut choi = ComplexMatrix::zeros(4, 4);
    for x in 0..2 {
        for y in 0..2 {
            // E(|x><y|) = sum_j <y|sigma_j|x> / 2 E(sigma_j)
            let mut img = ComplexMatrix::zeros(2, 2);
            for j in 0..4 {
                img += &images[j] * (a[j][(y, x)] / 2.0);
            }
            for o1 in 0..2 {
                for o2 in 0..2 {
                    choi[(2 * x + o1, 2 * y + o2)] = img[(o1, o2)];
                }
            }
        }
    }
    ProcessMatrix::from_choi(&choi)
}

/// [`chi_from_channel`] for a channel given as a function.
pub fn chi_of<C: QubitChannel + ?Sized>(channel: &C) -> Result<ProcessMatrix> {
    let images: Vec<ComplexMatrix> = pauli_basis()
        .iter()
        .map(|s| channel.apply_channel(s))
        .collect();
    chi_from_channel(&images)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessMleOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ProcessMleOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-11,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessEstimate {
    pub process: ProcessMatrix,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Number of linearly independent operators among the inputs.
pub fn input_rank(inputs: &[DensityMatrix]) -> usize {
    if inputs.is_empty() {
        return 0;
    }
    // Real coordinates (tr rho, r_x, r_y, r_z) span the same space.
    let m = nalgebra::DMatrix::<f64>::from_fn(4, inputs.len(), |i, k| {
        let rho = inputs[k].matrix();
        if i == 0 {
            rho.trace().re
        } else {
            (rho * pauli(i)).trace().re
        }
    });
    m.singular_values()
        .iter()
        .filter(|&&s| s > INPUT_RANK_TOL)
        .count()
}

/// Maximum-likelihood CPTP process from per-input Pauli-basis counts.
pub fn mle_process(inputs: &[DensityMatrix], outputs: &[CountsTable]) -> Result<ProcessMatrix> {
    Ok(mle_process_with(inputs, outputs, &ProcessMleOptions::default())?.process)
}

/// Fixed-point iteration on the Choi matrix,
/// `J <- (L^-1/2 (x) I) K J K (L^-1/2 (x) I)` with
/// `K = sum n / p (rho^T (x) Pi)` and `L = tr_out(K J K)`. Every iterate is
/// positive and exactly trace preserving.
pub fn mle_process_with(
    inputs: &[DensityMatrix],
    outputs: &[CountsTable],
    options: &ProcessMleOptions,
) -> Result<ProcessEstimate> {
    if inputs.len() != outputs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} inputs but {} count tables",
            inputs.len(),
            outputs.len()
        )));
    }
    if inputs.iter().any(|r| r.dim() != 2) {
        return Err(Error::DimensionMismatch(
            "inputs must be qubit states".into(),
        ));
    }
    let rank = input_rank(inputs);
    if rank < 4 {
        return Err(Error::InsufficientInputs { rank });
    }
    if outputs.iter().all(|c| c.total() <= 0.0) {
        return Err(Error::EmptyCounts);
    }
    let terms: Vec<(f64, ComplexMatrix)> = inputs
        .iter()
        .zip(outputs)
        .flat_map(|(rho, counts)| {
            let rho_t = rho.matrix().transpose();
            counts
                .rows()
                .filter(|&(_, _, n)| n > 0.0)
                .map(move |(b, o, n)| (n, kron(&rho_t, &b.projector(o))))
        })
        .collect();
    let prob = |j: &ComplexMatrix, e: &ComplexMatrix| (j * e).trace().re.max(f64::MIN_POSITIVE);
    let log_likelihood =
        |j: &ComplexMatrix| -> f64 { terms.iter().map(|(n, e)| n * prob(j, e).ln()).sum() };

    let mut j = ComplexMatrix::identity(4, 4).unscale(2.0);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        let mut k = ComplexMatrix::zeros(4, 4);
        for (n, e) in &terms {
            k += e.scale(n / prob(&j, e));
        }
        let kjk = hermitize(&(&k * &j * &k));
        let lambda = partial_trace_matrix(&kjk, &[2, 2], &[0])?;
        let inv_sqrt = inverse_sqrt(&lambda)?;
        let left = kron(&inv_sqrt, &ComplexMatrix::identity(2, 2));
        let next = hermitize(&(&left * kjk * &left));
        let change = max_abs_diff(&next, &j);
        j = next;
        if change <= options.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("process MLE stopped after {iterations} iterations without converging");
    }
    let ll = log_likelihood(&j);
    let process = ProcessMatrix::from_choi(&j)?;
    let process = ProcessMatrix::new_unchecked(hermitize(process.chi()))?;
    Ok(ProcessEstimate {
        process,
        log_likelihood: ll,
        iterations,
        converged,
    })
}

fn inverse_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = hermitize(m).symmetric_eigen();
    let n = m.nrows();
    let mut d = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        let ev = eig.eigenvalues[k];
        if ev <= SPECTRAL_TOL {
            return Err(Error::Invariant(format!(
                "singular normalization ({ev:.3e})"
            )));
        }
        d[(k, k)] = C64::new(ev.sqrt().recip(), 0.0);
    }
    Ok(&eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

/// `tr(chi_ideal chi)`; the ideal should be rank one.
pub fn process_fidelity(chi: &ProcessMatrix, chi_ideal: &ProcessMatrix) -> f64 {
    let ev = hermitian_eigenvalues(chi_ideal.chi());
    if ev[ev.len() - 2] > 1e-8 {
        log::warn!("ideal process is not rank one; tr(chi_ideal chi) is not a fidelity");
    }
    (chi_ideal.chi() * chi.chi()).trace().re
}

/// The six Pauli eigenstates `+z, -z, +x, -x, +y, -y`.
pub fn pauli_eigenstates() -> [PureState; 6] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let s = |a: C64, b: C64| PureState::from_slice(&[a, b]).expect("normalized");
    let re = |x: f64| C64::new(x, 0.0);
    [
        s(ONE, ZERO),
        s(ZERO, ONE),
        s(re(h), re(h)),
        s(re(h), re(-h)),
        s(re(h), C64::new(0.0, h)),
        s(re(h), C64::new(0.0, -h)),
    ]
}

/// Mean of `<psi|E(psi)|psi>` over the six Pauli eigenstates.
pub fn average_fidelity<C: QubitChannel + ?Sized>(channel: &C) -> f64 {
    let states = pauli_eigenstates();
    let total: f64 = states
        .iter()
        .map(|psi| {
            let out = channel.apply_channel(&psi.projector());
            (psi.amplitudes().adjoint() * out * psi.amplitudes())[(0, 0)].re
        })
        .sum();
    clip_unit(total / states.len() as f64)
}

/// `(2 F_proc + 1) / 3`.
pub fn avg_from_process_fidelity(f_proc: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&f_proc) {
        return Err(Error::InvalidArgument(format!(
            "process fidelity {f_proc} outside [0, 1]"
        )));
    }
    Ok((2.0 * f_proc + 1.0) / 3.0)
}

/// `r_out = O S r_in + b` with `O` orthogonal and `S` symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    /// Row-major.
    pub o: [[f64; 3]; 3],
    pub s: [[f64; 3]; 3],
    pub b: [f64; 3],
    pub det_o: f64,
    /// Angle of `O`, degrees; absent when `O` is a reflection.
    pub rotation_angle_deg: Option<f64>,
    /// Descending.
    pub s_eigenvalues: [f64; 3],
}

fn to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

impl AffineMap {
    pub fn o_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.o[i][j])
    }

    pub fn s_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.s[i][j])
    }

    pub fn b_vector(&self) -> Vector3<f64> {
        Vector3::from(self.b)
    }

    pub fn apply(&self, r: &Vector3<f64>) -> Vector3<f64> {
        self.o_matrix() * self.s_matrix() * r + self.b_vector()
    }

    /// `E(I)` and `E(sigma_j)` rebuilt from `(O, S, b)`.
    pub fn channel_images(&self) -> [ComplexMatrix; 4] {
        let m = self.o_matrix() * self.s_matrix();
        let a = pauli_basis();
        let op = |v: Vector3<f64>, t: f64| {
            let mut out = ComplexMatrix::identity(2, 2).scale(t);
            for i in 0..3 {
                out += a[i + 1].scale(v[i]);
            }
            out
        };
        [
            op(self.b_vector(), 1.0),
            op(m.column(0).into_owned(), 0.0),
            op(m.column(1).into_owned(), 0.0),
            op(m.column(2).into_owned(), 0.0),
        ]
    }
}

/// Pauli transfer matrix factorized by polar decomposition `M = O S`.
pub fn affine_decompose(chi: &ProcessMatrix) -> AffineMap {
    let r = chi.pauli_transfer();
    let m: Matrix3<f64> = r.fixed_view::<3, 3>(1, 1).into_owned();
    let b = Vector3::new(r[(1, 0)], r[(2, 0)], r[(3, 0)]);
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let o = u * v_t;
    let s = v_t.transpose() * Matrix3::from_diagonal(&svd.singular_values) * v_t;
    let s = (s + s.transpose()) * 0.5;
    let det_o = o.determinant();
    let rotation_angle_deg = (det_o > 0.0).then(|| {
        ((o.trace() - 1.0) / 2.0)
            .clamp(-1.0, 1.0)
            .acos()
            .to_degrees()
    });
    let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    AffineMap {
        o: to_rows(&o),
        s: to_rows(&s),
        b: b.into(),
        det_o,
        rotation_angle_deg,
        s_eigenvalues: [ev[0], ev[1], ev[2]],
    }
}

/// Images of a latitude-longitude grid on the unit sphere: `resolution + 1`
/// latitudes (poles included) by `resolution` longitudes.
pub fn ellipsoid_mesh(map: &AffineMap, resolution: usize) -> Result<Vec<Vector3<f64>>> {
    if resolution < 8 {
        return Err(Error::InvalidArgument(format!(
            "mesh resolution {resolution} < 8"
        )));
    }
    let mut points = Vec::with_capacity((resolution + 1) * resolution);
    for i in 0..=resolution {
        let theta = PI * i as f64 / resolution as f64;
        for j in 0..resolution {
            let phi = 2.0 * PI * j as f64 / resolution as f64;
            let r = Vector3::new(
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            );
            points.push(map.apply(&r));
        }
    }
    Ok(points)
}

/// Output Bloch vectors of the channel for the given inputs.
pub fn bloch_images(chi: &ProcessMatrix, inputs: &[DensityMatrix]) -> Vec<Vector3<f64>> {
    inputs
        .iter()
        .map(|r| bloch_of_matrix(&chi.apply(r.matrix())))
        .collect()
}

/// Parametric bootstrap: counts are redrawn from the binomial distribution
/// predicted by `estimate` for every input and basis, and the process is
/// reconstructed again. Resample `k` uses the random stream `(seed, k)`.
pub fn bootstrap_process(
    inputs: &[DensityMatrix],
    outputs: &[CountsTable],
    estimate: &ProcessMatrix,
    resamples: usize,
    seed: u64,
) -> Result<Vec<ProcessMatrix>> {
    if outputs.iter().any(|c| !c.is_integral()) {
        return Err(Error::InvalidArgument(
            "bootstrap needs integer counts".into(),
        ));
    }
    (0..resamples)
        .into_par_iter()
        .map(|k| {
            let mut rng = shot_rng(seed, k as u64);
            let tables = inputs
                .iter()
                .zip(outputs)
                .map(|(rho, counts)| {
                    let out = estimate.apply(rho.matrix());
                    let mut table = CountsTable::new([[0.0; 2]; 3])?;
                    for basis in Basis::ALL {
                        let n = counts.basis_total(basis) as u64;
                        let p = (&out * basis.projector(Outcome::Bright))
                            .trace()
                            .re
                            .clamp(0.0, 1.0);
                        let bright = Binomial::new(n, p)
                            .map_err(|e| Error::InvalidArgument(e.to_string()))?
                            .sample(&mut rng);
                        table.set(basis, Outcome::Bright, bright as f64)?;
                        table.set(basis, Outcome::Dark, (n - bright) as f64)?;
                    }
                    Ok(table)
                })
                .collect::<Result<Vec<_>>>()?;
            mle_process(inputs, &tables)
        })
        .collect()
}

/// Sample standard deviation of each component.
pub fn component_std<const N: usize>(samples: &[[f64; N]]) -> [f64; N] {
    let mut out = [0.0; N];
    if samples.len() < 2 {
        return out;
    }
    let n = samples.len() as f64;
    for (i, o) in out.iter_mut().enumerate() {
        let mean = samples.iter().map(|s| s[i]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        *o = var.sqrt();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{bloch_vector, random_cptp_qubit_channel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        max_abs_diff(a, b) <= tol
    }

    #[test]
    fn bright_projectors_match_eigenstates() {
        // Bright selects -x in the X basis and -y in the Y basis.
        let cases = [
            (Basis::Z, Vector3::new(0.0, 0.0, 1.0)),
            (Basis::X, Vector3::new(-1.0, 0.0, 0.0)),
            (Basis::Y, Vector3::new(0.0, -1.0, 0.0)),
        ];
        for (basis, r) in cases {
            let p = DensityMatrix::new(basis.projector(Outcome::Bright)).unwrap();
            assert!((bloch_vector(&p).unwrap() - r).norm() < 1e-12, "{basis}");
            let sum = basis.projector(Outcome::Bright) + basis.projector(Outcome::Dark);
            assert!(close(&sum, &ComplexMatrix::identity(2, 2), 1e-12));
        }
    }

    #[test]
    fn eigenstates_round_trip_through_tomography() {
        for psi in pauli_eigenstates() {
            let counts = CountsTable::expected(&psi.projector(), 1.0).unwrap();
            let r = Vector3::from_fn(|i, _| {
                let basis = [Basis::X, Basis::Y, Basis::Z][i];
                let sign = if basis == Basis::Z { 1.0 } else { -1.0 };
                sign * (2.0 * counts.bright_fraction(basis).unwrap() - 1.0)
            });
            assert!((r - bloch_vector(&psi.to_density()).unwrap()).norm() < 1e-12);
        }
    }

    #[test]
    fn s_state_is_always_bright_in_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = simulate_state_tomography(&PureState::basis(2, 0).to_density(), 1000, &mut rng)
            .unwrap();
        assert_eq!(c.get(Basis::Z, Outcome::Bright), 1000.0);
        assert_eq!(c.get(Basis::Z, Outcome::Dark), 0.0);
        for b in Basis::ALL {
            assert_eq!(c.basis_total(b), 1000.0);
        }
    }

    #[test]
    fn mixed_state_gives_half_bright() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 20_000u64;
        let c = simulate_state_tomography(&DensityMatrix::maximally_mixed(2), n, &mut rng).unwrap();
        let sigma = (0.25 / n as f64).sqrt();
        for b in Basis::ALL {
            assert!((c.bright_fraction(b).unwrap() - 0.5).abs() < 5.0 * sigma);
        }
    }

    #[test]
    fn superposition_is_deterministic_in_its_basis() {
        // (|S> + |D>)/sqrt2 is +x, which is Dark in the X basis.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c =
            simulate_state_tomography(&pauli_eigenstates()[2].to_density(), 500, &mut rng).unwrap();
        assert_eq!(c.get(Basis::X, Outcome::Dark), 500.0);
    }

    #[test]
    fn csv_round_trip() {
        let c = CountsTable::new([[10.0, 90.0], [55.0, 45.0], [0.0, 100.0]]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "basis,outcome,count\nZ,Bright,10\nZ,Dark,90\nX,Bright,55\nX,Dark,45\nY,Bright,0\nY,Dark,100\n"
        );
        assert_eq!(CountsTable::read_csv(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn mle_recovers_pure_and_mixed_states() {
        let s = PureState::basis(2, 0).projector();
        let est = mle_state(&CountsTable::expected(&s, 1.0).unwrap()).unwrap();
        assert!(close(est.matrix(), &s, 1e-8));

        let mut m = ComplexMatrix::zeros(2, 2);
        m[(0, 0)] = C64::new(0.7, 0.0);
        m[(1, 1)] = C64::new(0.3, 0.0);
        let truth = DensityMatrix::new(m.clone()).unwrap();
        let est = mle_state(&CountsTable::expected(&m, 1.0).unwrap()).unwrap();
        assert!(est.trace_distance(&truth).unwrap() < 1e-6);
    }

    #[test]
    fn mle_rejects_empty_counts() {
        let c = CountsTable::new([[0.0; 2]; 3]).unwrap();
        assert!(matches!(mle_state(&c), Err(Error::EmptyCounts)));
    }

    #[test]
    fn chi_of_simple_channels() {
        let id = chi_of(&|r: &ComplexMatrix| r.clone()).unwrap();
        assert!(close(id.chi(), ProcessMatrix::identity().chi(), 1e-14));
        let x = pauli(1);
        let flip = chi_of(&|r: &ComplexMatrix| &x * r * &x).unwrap();
        assert!((flip.chi()[(1, 1)].re - 1.0).abs() < 1e-14);
        assert!((flip.chi().norm() - 1.0).abs() < 1e-14);
        let p = 0.3;
        let dep = chi_of(&|r: &ComplexMatrix| {
            r.scale(1.0 - p) + ComplexMatrix::identity(2, 2) * (r.trace() * p / 2.0)
        })
        .unwrap();
        assert!(close(
            dep.chi(),
            ProcessMatrix::depolarizing(p).unwrap().chi(),
            1e-14
        ));
    }

    #[test]
    fn choi_round_trip() {
        let chi = random_cptp_qubit_channel(4);
        let back = ProcessMatrix::from_choi(&chi.to_choi()).unwrap();
        assert!(close(chi.chi(), back.chi(), 1e-12));
        // E(rho) = tr_in[J (rho^T (x) I)]
        let rho = pauli_eigenstates()[4].projector();
        let j = chi.to_choi();
        let via_choi = partial_trace_matrix(
            &(j * kron(&rho.transpose(), &ComplexMatrix::identity(2, 2))),
            &[2, 2],
            &[1],
        )
        .unwrap();
        assert!(close(&via_choi, &chi.apply(&rho), 1e-12));
    }

    #[test]
    fn rank_test() {
        let states: Vec<DensityMatrix> =
            pauli_eigenstates().iter().map(|p| p.to_density()).collect();
        assert_eq!(input_rank(&states), 4);
        assert_eq!(input_rank(&states[..2]), 2);
        let outs = vec![CountsTable::new([[1.0, 0.0]; 3]).unwrap(); 3];
        assert!(matches!(
            mle_process(&states[..3], &outs),
            Err(Error::InsufficientInputs { rank: 3 })
        ));
    }

    #[test]
    fn affine_of_identity_and_depolarizing() {
        let a = affine_decompose(&ProcessMatrix::identity());
        assert!((a.o_matrix() - Matrix3::identity()).norm() < 1e-12);
        assert!((a.s_matrix() - Matrix3::identity()).norm() < 1e-12);
        assert_eq!(a.rotation_angle_deg, Some(0.0));
        let d = affine_decompose(&ProcessMatrix::depolarizing(0.3).unwrap());
        assert!((d.s_matrix() - Matrix3::identity() * 0.7).norm() < 1e-12);
        assert!(d.b_vector().norm() < 1e-12);
    }

    #[test]
    fn mesh_norms() {
        let a = affine_decompose(&ProcessMatrix::depolarizing(0.4).unwrap());
        for p in ellipsoid_mesh(&a, 12).unwrap() {
            assert!((p.norm() - 0.6).abs() < 1e-12);
        }
        assert!(ellipsoid_mesh(&a, 4).is_err());
    }

    #[test]
    fn fidelity_relations() {
        assert_eq!(avg_from_process_fidelity(1.0).unwrap(), 1.0);
        assert!((avg_from_process_fidelity(0.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(avg_from_process_fidelity(1.1).is_err());
        let dep = ProcessMatrix::depolarizing(0.2).unwrap();
        assert!((process_fidelity(&dep, &ProcessMatrix::identity()) - 0.85).abs() < 1e-14);
        assert!((average_fidelity(&dep) - 0.9).abs() < 1e-14);
    }

    #[test]
    fn process_json_round_trip() {
        let chi = random_cptp_qubit_channel(9);
        let json = serde_json::to_string(&chi).unwrap();
        let back: ProcessMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, chi);
    }
}
