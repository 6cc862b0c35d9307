//! Three-level ions sharing one truncated motional (center-of-mass) mode.
//!
//! Basis ordering: ion 0 is the most significant digit, the phonon number the
//! least significant, i.e. `index = ((l_0 * 3 + l_1) * 3 + ...) * F + n`.
//! Every pulse is a direct sum of 2x2 rotations on disjoint pairs of basis
//! states, which is how it is applied; the dense matrices are only built on
//! request.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use nalgebra::Matrix2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{ComplexMatrix, ComplexVector, DensityMatrix, C64, ONE, ZERO};

/// Default Fock cutoff: phonon numbers 0..=3.
pub const DEFAULT_FOCK_CUTOFF: usize = 4;
pub const DEFAULT_LEAKAGE_BUDGET: f64 = 1e-9;
pub const LEVELS_PER_ION: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IonLevel {
    S = 0,
    D = 1,
    /// Auxiliary Zeeman sublevel of the D manifold used to hide an ion.
    H = 2,
}

impl IonLevel {
    pub const ALL: [IonLevel; 3] = [IonLevel::S, IonLevel::D, IonLevel::H];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    /// Fluorescence observed: the ion was projected onto S.
    Bright,
    /// No fluorescence: D or H.
    Dark,
}

impl Outcome {
    pub fn flipped(self) -> Self {
        match self {
            Outcome::Bright => Outcome::Dark,
            Outcome::Dark => Outcome::Bright,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Bright => "Bright",
            Outcome::Dark => "Dark",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegisterDims {
    pub n_ions: usize,
    pub fock_cutoff: usize,
}

impl RegisterDims {
    pub fn new(n_ions: usize, fock_cutoff: usize) -> Result<Self> {
        if n_ions == 0 || fock_cutoff < 2 {
            return Err(Error::InvalidArgument(format!(
                "register needs n_ions >= 1 and fock_cutoff >= 2 (got {n_ions}, {fock_cutoff})"
            )));
        }
        Ok(Self {
            n_ions,
            fock_cutoff,
        })
    }

    pub fn dim(&self) -> usize {
        LEVELS_PER_ION.pow(self.n_ions as u32) * self.fock_cutoff
    }

    /// Subsystem dimensions in tensor order: ions then the motional mode.
    pub fn subsystem_dims(&self) -> Vec<usize> {
        let mut d = vec![LEVELS_PER_ION; self.n_ions];
        d.push(self.fock_cutoff);
        d
    }

    pub fn index(&self, levels: &[IonLevel], phonons: usize) -> usize {
        debug_assert_eq!(levels.len(), self.n_ions);
        debug_assert!(phonons < self.fock_cutoff);
        levels
            .iter()
            .fold(0usize, |acc, l| acc * LEVELS_PER_ION + l.index())
            * self.fock_cutoff
            + phonons
    }

    pub fn phonons_of(&self, index: usize) -> usize {
        index % self.fock_cutoff
    }

    pub fn level_of(&self, index: usize, ion: usize) -> IonLevel {
        let stride = LEVELS_PER_ION.pow((self.n_ions - 1 - ion) as u32) * self.fock_cutoff;
        IonLevel::ALL[(index / stride) % LEVELS_PER_ION]
    }

    /// Index with the given ion's level replaced.
    pub fn with_level(&self, index: usize, ion: usize, level: IonLevel) -> usize {
        let stride = LEVELS_PER_ION.pow((self.n_ions - 1 - ion) as u32) * self.fock_cutoff;
        let current = (index / stride) % LEVELS_PER_ION;
        index - current * stride + level.index() * stride
    }

    pub fn check_ion(&self, ion: usize) -> Result<()> {
        if ion >= self.n_ions {
            Err(Error::InvalidIon {
                ion,
                n_ions: self.n_ions,
            })
        } else {
            Ok(())
        }
    }
}

/// `R(theta, phi) = [[cos, -i e^{i phi} sin], [-i e^{-i phi} sin, cos]]` of
/// `theta/2`, in the ordered basis (lower level, upper level).
pub fn rotation(theta: f64, phi: f64) -> Matrix2<C64> {
    let (s, c) = (theta / 2.0).sin_cos();
    let minus_i = C64::new(0.0, -1.0);
    Matrix2::new(
        C64::new(c, 0.0),
        minus_i * C64::from_polar(s, phi),
        minus_i * C64::from_polar(s, -phi),
        C64::new(c, 0.0),
    )
}

/// A unitary that is a direct sum of 2x2 blocks on disjoint index pairs and
/// the identity elsewhere.
#[derive(Debug, Clone)]
pub struct PairUnitary {
    pairs: Vec<(usize, usize, Matrix2<C64>)>,
}

impl PairUnitary {
    pub(crate) fn from_pairs(pairs: Vec<(usize, usize, Matrix2<C64>)>) -> Self {
        Self { pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize, Matrix2<C64>)] {
        &self.pairs
    }

    pub fn to_matrix(&self, dim: usize) -> ComplexMatrix {
        let mut u = ComplexMatrix::identity(dim, dim);
        for &(i, j, r) in &self.pairs {
            u[(i, i)] = r[(0, 0)];
            u[(i, j)] = r[(0, 1)];
            u[(j, i)] = r[(1, 0)];
            u[(j, j)] = r[(1, 1)];
        }
        u
    }

    pub fn apply_vector(&self, v: &mut ComplexVector) {
        for &(i, j, r) in &self.pairs {
            let (a, b) = (v[i], v[j]);
            v[i] = r[(0, 0)] * a + r[(0, 1)] * b;
            v[j] = r[(1, 0)] * a + r[(1, 1)] * b;
        }
    }

    /// `rho -> U rho U^dagger` in place.
    pub fn apply_density(&self, rho: &mut ComplexMatrix) {
        let n = rho.ncols();
        for &(i, j, r) in &self.pairs {
            for c in 0..n {
                let (a, b) = (rho[(i, c)], rho[(j, c)]);
                rho[(i, c)] = r[(0, 0)] * a + r[(0, 1)] * b;
                rho[(j, c)] = r[(1, 0)] * a + r[(1, 1)] * b;
            }
        }
        for &(i, j, r) in &self.pairs {
            let (u00, u01, u10, u11) = (
                r[(0, 0)].conj(),
                r[(0, 1)].conj(),
                r[(1, 0)].conj(),
                r[(1, 1)].conj(),
            );
            for k in 0..n {
                let (a, b) = (rho[(k, i)], rho[(k, j)]);
                rho[(k, i)] = a * u00 + b * u01;
                rho[(k, j)] = a * u10 + b * u11;
            }
        }
    }
}

fn level_transition(
    dims: &RegisterDims,
    ion: usize,
    lower: IonLevel,
    upper: IonLevel,
    theta: f64,
    phi: f64,
) -> Result<PairUnitary> {
    dims.check_ion(ion)?;
    let r = rotation(theta, phi);
    let pairs = (0..dims.dim())
        .filter(|&k| dims.level_of(k, ion) == lower)
        .map(|k| (k, dims.with_level(k, ion, upper), r))
        .collect();
    Ok(PairUnitary { pairs })
}

pub(crate) fn carrier_pairs(
    dims: &RegisterDims,
    ion: usize,
    theta: f64,
    phi: f64,
) -> Result<PairUnitary> {
    level_transition(dims, ion, IonLevel::S, IonLevel::D, theta, phi)
}

pub(crate) fn hide_pairs(
    dims: &RegisterDims,
    ion: usize,
    theta: f64,
    phi: f64,
) -> Result<PairUnitary> {
    level_transition(dims, ion, IonLevel::S, IonLevel::H, theta, phi)
}

/// Blue sideband: `|S,n> <-> |D,n+1>` with area `theta * sqrt(n+1)`. The block
/// starting at the top Fock level has no partner and is left as identity.
pub(crate) fn sideband_pairs(
    dims: &RegisterDims,
    ion: usize,
    theta: f64,
    phi: f64,
) -> Result<PairUnitary> {
    dims.check_ion(ion)?;
    let top = dims.fock_cutoff - 1;
    let pairs = (0..dims.dim())
        .filter(|&k| dims.level_of(k, ion) == IonLevel::S && dims.phonons_of(k) < top)
        .map(|k| {
            let n = dims.phonons_of(k);
            let partner = dims.with_level(k, ion, IonLevel::D) + 1;
            (k, partner, rotation(theta * ((n + 1) as f64).sqrt(), phi))
        })
        .collect();
    Ok(PairUnitary { pairs })
}

pub fn carrier_unitary(
    dims: &RegisterDims,
    ion: usize,
    theta: f64,
    phi: f64,
) -> Result<ComplexMatrix> {
    Ok(carrier_pairs(dims, ion, theta, phi)?.to_matrix(dims.dim()))
}

pub fn sideband_unitary(
    dims: &RegisterDims,
    ion: usize,
    theta: f64,
    phi: f64,
) -> Result<ComplexMatrix> {
    Ok(sideband_pairs(dims, ion, theta, phi)?.to_matrix(dims.dim()))
}

pub fn hide_unitary(
    dims: &RegisterDims,
    ion: usize,
    theta: f64,
    phi: f64,
) -> Result<ComplexMatrix> {
    Ok(hide_pairs(dims, ion, theta, phi)?.to_matrix(dims.dim()))
}

/// One laser or timing operation. Ion indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Pulse {
    Carrier { ion: usize, theta: f64, phi: f64 },
    BlueSideband { ion: usize, theta: f64, phi: f64 },
    Hide { ion: usize, theta: f64, phi: f64 },
    Wait { duration_us: f64 },
    Detect { ion: usize },
}

impl Pulse {
    pub fn ion(&self) -> Option<usize> {
        match *self {
            Pulse::Carrier { ion, .. }
            | Pulse::BlueSideband { ion, .. }
            | Pulse::Hide { ion, .. }
            | Pulse::Detect { ion } => Some(ion),
            Pulse::Wait { .. } => None,
        }
    }

    /// Whether the pulse drives a laser transition (carries `theta`).
    pub fn is_laser(&self) -> bool {
        matches!(
            self,
            Pulse::Carrier { .. } | Pulse::BlueSideband { .. } | Pulse::Hide { .. }
        )
    }

    pub fn theta(&self) -> Option<f64> {
        match *self {
            Pulse::Carrier { theta, .. }
            | Pulse::BlueSideband { theta, .. }
            | Pulse::Hide { theta, .. } => Some(theta),
            _ => None,
        }
    }

    pub fn with_theta(self, new_theta: f64) -> Self {
        match self {
            Pulse::Carrier { ion, phi, .. } => Pulse::Carrier {
                ion,
                theta: new_theta,
                phi,
            },
            Pulse::BlueSideband { ion, phi, .. } => Pulse::BlueSideband {
                ion,
                theta: new_theta,
                phi,
            },
            Pulse::Hide { ion, phi, .. } => Pulse::Hide {
                ion,
                theta: new_theta,
                phi,
            },
            other => other,
        }
    }

    pub fn validate(&self, dims: &RegisterDims) -> Result<()> {
        if let Some(ion) = self.ion() {
            dims.check_ion(ion)?;
        }
        match *self {
            Pulse::Carrier { theta, phi, .. }
            | Pulse::BlueSideband { theta, phi, .. }
            | Pulse::Hide { theta, phi, .. } => {
                if !(theta >= 0.0) || !theta.is_finite() || !phi.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "invalid pulse angles in {self}"
                    )));
                }
            }
            Pulse::Wait { duration_us } => {
                if !(duration_us >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "negative wait {duration_us}"
                    )));
                }
            }
            Pulse::Detect { .. } => {}
        }
        Ok(())
    }

    pub(crate) fn unitary(&self, dims: &RegisterDims) -> Result<Option<PairUnitary>> {
        Ok(match *self {
            Pulse::Carrier { ion, theta, phi } => Some(carrier_pairs(dims, ion, theta, phi)?),
            Pulse::BlueSideband { ion, theta, phi } => Some(sideband_pairs(dims, ion, theta, phi)?),
            Pulse::Hide { ion, theta, phi } => Some(hide_pairs(dims, ion, theta, phi)?),
            Pulse::Wait { .. } | Pulse::Detect { .. } => None,
        })
    }
}

/// Formats an angle as a readable multiple of pi.
pub fn format_angle(a: f64) -> String {
    let x = a / PI;
    let near = |v: f64| (x - v).abs() < 1e-9;
    if near(0.0) {
        return "0".into();
    }
    if near(FRAC_1_SQRT_2) {
        return "π/√2".into();
    }
    for den in [1i64, 2, 4] {
        let num = (x * den as f64).round();
        if near(num / den as f64) {
            let num = num as i64;
            let n = match num {
                1 => "π".to_string(),
                -1 => "-π".to_string(),
                _ => format!("{num}π"),
            };
            return if den == 1 { n } else { format!("{n}/{den}") };
        }
    }
    format!("{a:.6}")
}

impl fmt::Display for Pulse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Pulse::Carrier { ion, theta, phi } => {
                write!(
                    f,
                    "R^C_{}({}, {})",
                    ion + 1,
                    format_angle(theta),
                    format_angle(phi)
                )
            }
            Pulse::BlueSideband { ion, theta, phi } => {
                write!(
                    f,
                    "R^+_{}({}, {})",
                    ion + 1,
                    format_angle(theta),
                    format_angle(phi)
                )
            }
            Pulse::Hide { ion, theta, phi } => {
                write!(
                    f,
                    "R^H_{}({}, {})",
                    ion + 1,
                    format_angle(theta),
                    format_angle(phi)
                )
            }
            Pulse::Wait { duration_us } => write!(f, "Wait {duration_us} us"),
            Pulse::Detect { ion } => write!(f, "Detect ion {}", ion + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    Pure(ComplexVector),
    Mixed(ComplexMatrix),
}

/// N ions plus one motional mode, with a monitor on the top Fock level.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapRegister {
    dims: RegisterDims,
    state: Representation,
    leakage_budget: f64,
    elapsed_us: f64,
    max_top_population: f64,
}

impl TrapRegister {
    /// All ions in `S`, motion in `n = 0`, pure representation.
    pub fn initialize(n_ions: usize, fock_cutoff: usize) -> Result<Self> {
        let dims = RegisterDims::new(n_ions, fock_cutoff)?;
        let mut v = ComplexVector::zeros(dims.dim());
        v[dims.index(&vec![IonLevel::S; n_ions], 0)] = ONE;
        Ok(Self {
            dims,
            state: Representation::Pure(v),
            leakage_budget: DEFAULT_LEAKAGE_BUDGET,
            elapsed_us: 0.0,
            max_top_population: 0.0,
        })
    }

    pub fn with_leakage_budget(mut self, budget: f64) -> Self {
        self.leakage_budget = budget;
        self
    }

    pub fn from_density(dims: RegisterDims, rho: DensityMatrix) -> Result<Self> {
        if rho.dim() != dims.dim() {
            return Err(Error::DimensionMismatch(format!(
                "density matrix dim {} does not match register dim {}",
                rho.dim(),
                dims.dim()
            )));
        }
        Ok(Self {
            dims,
            state: Representation::Mixed(rho.into_matrix()),
            leakage_budget: DEFAULT_LEAKAGE_BUDGET,
            elapsed_us: 0.0,
            max_top_population: 0.0,
        })
    }

    pub fn dims(&self) -> RegisterDims {
        self.dims
    }

    pub fn state(&self) -> &Representation {
        &self.state
    }

    pub fn leakage_budget(&self) -> f64 {
        self.leakage_budget
    }

    pub fn elapsed_us(&self) -> f64 {
        self.elapsed_us
    }

    pub fn max_top_population(&self) -> f64 {
        self.max_top_population
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.state, Representation::Pure(_))
    }

    pub fn to_mixed(mut self) -> Self {
        if let Representation::Pure(v) = &self.state {
            self.state = Representation::Mixed(v * v.adjoint());
        }
        self
    }

    pub fn density(&self) -> Result<DensityMatrix> {
        match &self.state {
            Representation::Pure(v) => DensityMatrix::from_unnormalized(v * v.adjoint()),
            Representation::Mixed(m) => DensityMatrix::from_unnormalized(m.clone()),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        match &self.state {
            Representation::Pure(v) => v.norm_squared(),
            Representation::Mixed(m) => m.trace().re,
        }
    }

    fn diagonal_weight(&self, select: impl Fn(usize) -> bool) -> f64 {
        match &self.state {
            Representation::Pure(v) => (0..v.len())
                .filter(|&k| select(k))
                .map(|k| v[k].norm_sqr())
                .sum(),
            Representation::Mixed(m) => (0..m.nrows())
                .filter(|&k| select(k))
                .map(|k| m[(k, k)].re)
                .sum(),
        }
    }

    pub fn level_population(&self, ion: usize, level: IonLevel) -> f64 {
        self.diagonal_weight(|k| self.dims.level_of(k, ion) == level) / self.norm_sqr()
    }

    pub fn phonon_population(&self, n: usize) -> f64 {
        self.diagonal_weight(|k| self.dims.phonons_of(k) == n) / self.norm_sqr()
    }

    pub fn top_fock_population(&self) -> f64 {
        self.phonon_population(self.dims.fock_cutoff - 1)
    }

    /// Reduced 3x3 state of one ion.
    pub fn reduced_ion(&self, ion: usize) -> Result<DensityMatrix> {
        self.dims.check_ion(ion)?;
        let rho = self.density()?;
        crate::quantum::partial_trace(&rho, &self.dims.subsystem_dims(), &[ion])
    }

    pub(crate) fn apply_unitary(&mut self, u: &PairUnitary) {
        match &mut self.state {
            Representation::Pure(v) => u.apply_vector(v),
            Representation::Mixed(m) => u.apply_density(m),
        }
    }

    /// Multiplies basis state `k` by `phases[k]`.
    pub(crate) fn apply_diagonal(&mut self, phases: &[C64]) {
        match &mut self.state {
            Representation::Pure(v) => {
                for (z, p) in v.iter_mut().zip(phases) {
                    *z *= p;
                }
            }
            Representation::Mixed(m) => apply_diagonal_density(m, phases),
        }
    }

    pub(crate) fn advance_time(&mut self, duration_us: f64) {
        self.elapsed_us += duration_us;
    }

    pub(crate) fn state_mut(&mut self) -> &mut Representation {
        &mut self.state
    }

    pub(crate) fn check_leakage(&mut self) -> Result<()> {
        let top = self.top_fock_population();
        self.max_top_population = self.max_top_population.max(top);
        if top > self.leakage_budget {
            return Err(Error::Leakage {
                population: top,
                budget: self.leakage_budget,
            });
        }
        Ok(())
    }

    /// Born probability of a Bright outcome on `ion`.
    pub fn bright_probability(&self, ion: usize) -> f64 {
        self.level_population(ion, IonLevel::S)
    }

    /// Projects onto the given outcome and renormalizes. Fails when the
    /// branch has zero probability (deterministic replay).
    pub fn collapse(mut self, ion: usize, outcome: Outcome) -> Result<(f64, Self)> {
        self.dims.check_ion(ion)?;
        let p = match outcome {
            Outcome::Bright => self.bright_probability(ion),
            Outcome::Dark => 1.0 - self.bright_probability(ion),
        };
        if p <= 1e-15 {
            return Err(Error::ZeroProbabilityBranch { ion });
        }
        let mask = outcome_mask(&self.dims, ion, outcome);
        project(&mut self.state, &mask);
        let norm = self.norm_sqr();
        match &mut self.state {
            Representation::Pure(v) => v.unscale_mut(norm.sqrt()),
            Representation::Mixed(m) => m.unscale_mut(norm),
        }
        Ok((p, self))
    }
}

pub(crate) fn apply_diagonal_density(m: &mut ComplexMatrix, phases: &[C64]) {
    let n = m.nrows();
    for j in 0..n {
        let pj = phases[j].conj();
        for i in 0..n {
            m[(i, j)] *= phases[i] * pj;
        }
    }
}

/// Basis states compatible with an outcome on `ion`.
pub(crate) fn outcome_mask(dims: &RegisterDims, ion: usize, outcome: Outcome) -> Vec<bool> {
    (0..dims.dim())
        .map(|k| {
            let bright = dims.level_of(k, ion) == IonLevel::S;
            bright == (outcome == Outcome::Bright)
        })
        .collect()
}

pub(crate) fn project(state: &mut Representation, mask: &[bool]) {
    match state {
        Representation::Pure(v) => {
            for (z, &keep) in v.iter_mut().zip(mask) {
                if !keep {
                    *z = ZERO;
                }
            }
        }
        Representation::Mixed(m) => project_density(m, mask),
    }
}

pub(crate) fn project_density(m: &mut ComplexMatrix, mask: &[bool]) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..n {
            if !(mask[i] && mask[j]) {
                m[(i, j)] = ZERO;
            }
        }
    }
}

/// Advances the register by one pulse. `Detect` is rejected; use
/// [`fluorescence_measure`].
pub fn apply_pulse(mut register: TrapRegister, pulse: &Pulse) -> Result<TrapRegister> {
    pulse.validate(&register.dims)?;
    match pulse {
        Pulse::Detect { .. } => return Err(Error::DetectInApplyPulse),
        Pulse::Wait { duration_us } => register.advance_time(*duration_us),
        _ => {
            let u = pulse.unitary(&register.dims)?.expect("laser pulse");
            register.apply_unitary(&u);
        }
    }
    register.check_leakage()?;
    Ok(register)
}

/// Projective fluorescence detection of one ion. The collapse follows the
/// true Born outcome; the reported outcome is flipped with probability
/// `detection_error`.
pub fn fluorescence_measure<R: Rng + ?Sized>(
    register: TrapRegister,
    ion: usize,
    detection_error: f64,
    rng: &mut R,
) -> Result<(Outcome, TrapRegister)> {
    register.dims.check_ion(ion)?;
    if !(0.0..=1.0).contains(&detection_error) {
        return Err(Error::InvalidArgument(format!(
            "detection error {detection_error}"
        )));
    }
    let p_bright = register.bright_probability(ion).clamp(0.0, 1.0);
    let actual = if rng.random::<f64>() < p_bright {
        Outcome::Bright
    } else {
        Outcome::Dark
    };
    let (_, collapsed) = register.collapse(ion, actual)?;
    let reported = if detection_error > 0.0 && rng.random::<f64>() < detection_error {
        actual.flipped()
    } else {
        actual
    };
    Ok((reported, collapsed))
}
