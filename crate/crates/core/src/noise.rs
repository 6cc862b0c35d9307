//! Error channels: quasi-static magnetic-field dephasing, pulse-area errors,
//! per-pulse depolarizing and detection errors.
//!
//! Phases are referenced to `S`: a detuning `d` advances the phase of `D`
//! relative to `S` as `exp(-i d t)`. The hidden level sees
//! `(1 + dephasing_ratio_h) * d`, so the `D`-`H` coherence of a hidden ion
//! dephases `dephasing_ratio_h` times as fast as the bare `S`-`D` qubit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{ComplexMatrix, ComplexVector, DensityMatrix, C64, ONE};
use crate::trap::{IonLevel, PairUnitary, Pulse, RegisterDims, Representation, TrapRegister};

/// Durations of a pi pulse of each kind and of one detection window. A pulse
/// of area `theta` lasts `theta / pi` times the pi time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseDurations {
    pub carrier_pi_us: f64,
    pub sideband_pi_us: f64,
    pub hide_pi_us: f64,
    pub detection_us: f64,
}

impl Default for PulseDurations {
    fn default() -> Self {
        Self {
            carrier_pi_us: 10.0,
            sideband_pi_us: 100.0,
            hide_pi_us: 10.0,
            detection_us: 250.0,
        }
    }
}

impl PulseDurations {
    pub fn duration_of(&self, pulse: &Pulse) -> f64 {
        use std::f64::consts::PI;
        match *pulse {
            Pulse::Carrier { theta, .. } => theta / PI * self.carrier_pi_us,
            Pulse::BlueSideband { theta, .. } => theta / PI * self.sideband_pi_us,
            Pulse::Hide { theta, .. } => theta / PI * self.hide_pi_us,
            Pulse::Wait { duration_us } => duration_us,
            Pulse::Detect { .. } => self.detection_us,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Standard deviation of the quasi-static S-D detuning, rad/us.
    pub detuning_sigma_sd: f64,
    /// Static (systematic) S-D detuning, rad/us.
    pub detuning_mean_sd: f64,
    /// Sensitivity of the hidden D-H coherence relative to S-D.
    pub dephasing_ratio_h: f64,
    /// One detuning draw shared by all ions (true) or one per ion.
    pub correlated_dephasing: bool,
    /// Fractional standard deviation of every pulse area.
    pub amplitude_error_sigma: f64,
    /// Depolarizing probability applied to the addressed ion after every
    /// carrier or sideband pulse.
    pub depolarizing_per_pulse: f64,
    /// Probability that a feed-forward PMT detection reports the wrong outcome.
    pub detection_error: f64,
    pub pulse_durations: PulseDurations,
    /// Gauss-Hermite nodes per independent detuning in exact evolution.
    pub quadrature_order: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            detuning_sigma_sd: 0.0,
            detuning_mean_sd: 0.0,
            dephasing_ratio_h: 2.0,
            correlated_dephasing: true,
            amplitude_error_sigma: 0.0,
            depolarizing_per_pulse: 0.0,
            detection_error: 0.0,
            pulse_durations: PulseDurations::default(),
            quadrature_order: 16,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} = {p} is not a probability"
                )))
            }
        };
        let nonneg = |name: &str, x: f64| {
            if x >= 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} = {x} must be finite and >= 0"
                )))
            }
        };
        prob("depolarizing_per_pulse", self.depolarizing_per_pulse)?;
        prob("detection_error", self.detection_error)?;
        nonneg("detuning_sigma_sd", self.detuning_sigma_sd)?;
        nonneg("amplitude_error_sigma", self.amplitude_error_sigma)?;
        nonneg("dephasing_ratio_h", self.dephasing_ratio_h)?;
        if !self.detuning_mean_sd.is_finite() {
            return Err(Error::InvalidArgument(
                "detuning_mean_sd must be finite".into(),
            ));
        }
        let d = &self.pulse_durations;
        nonneg("carrier_pi_us", d.carrier_pi_us)?;
        nonneg("sideband_pi_us", d.sideband_pi_us)?;
        nonneg("hide_pi_us", d.hide_pi_us)?;
        nonneg("detection_us", d.detection_us)?;
        if self.quadrature_order == 0 {
            return Err(Error::InvalidArgument(
                "quadrature_order must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.detuning_sigma_sd == 0.0
            && self.detuning_mean_sd == 0.0
            && self.amplitude_error_sigma == 0.0
            && self.depolarizing_per_pulse == 0.0
            && self.detection_error == 0.0
    }

    pub fn has_dephasing(&self) -> bool {
        self.detuning_sigma_sd != 0.0 || self.detuning_mean_sd != 0.0
    }

    /// H-level detuning for a given S-D detuning.
    pub fn hidden_detuning(&self, detuning_sd: f64) -> f64 {
        (1.0 + self.dephasing_ratio_h) * detuning_sd
    }
}

/// The quasi-static noise realization of one experimental repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotNoise {
    /// S-D detuning per ion, rad/us.
    pub detuning_sd: Vec<f64>,
    /// H detuning per ion, rad/us.
    pub detuning_h: Vec<f64>,
    /// Multiplicative factor on the area of the k-th laser pulse.
    pub amplitude_factors: Vec<f64>,
}

impl ShotNoise {
    pub fn zero(n_ions: usize, n_pulses: usize) -> Self {
        Self {
            detuning_sd: vec![0.0; n_ions],
            detuning_h: vec![0.0; n_ions],
            amplitude_factors: vec![1.0; n_pulses],
        }
    }

    /// Fixed detunings (one per ion), unit amplitude factors.
    pub fn with_detunings(config: &NoiseConfig, detuning_sd: Vec<f64>, n_pulses: usize) -> Self {
        let detuning_h = detuning_sd
            .iter()
            .map(|&d| config.hidden_detuning(d))
            .collect();
        Self {
            detuning_sd,
            detuning_h,
            amplitude_factors: vec![1.0; n_pulses],
        }
    }
}

/// Independent master seed for a sub-experiment (SplitMix64 finalizer).
pub fn derive_seed(master_seed: u64, tag: u64) -> u64 {
    let mut z = master_seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-shot random stream, keyed only by `(master_seed, shot_index)`.
pub fn shot_rng(master_seed: u64, shot_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(shot_index);
    rng
}

pub fn sample_shot_noise(
    config: &NoiseConfig,
    n_ions: usize,
    n_pulses: usize,
    master_seed: u64,
    shot_index: u64,
) -> ShotNoise {
    let mut rng = shot_rng(master_seed, shot_index);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let detuning_sd: Vec<f64> = if config.correlated_dephasing {
        let d = config.detuning_mean_sd + config.detuning_sigma_sd * normal();
        vec![d; n_ions]
    } else {
        (0..n_ions)
            .map(|_| config.detuning_mean_sd + config.detuning_sigma_sd * normal())
            .collect()
    };
    let amplitude_factors = (0..n_pulses)
        .map(|_| 1.0 + config.amplitude_error_sigma * normal())
        .collect();
    let detuning_h = detuning_sd
        .iter()
        .map(|&d| config.hidden_detuning(d))
        .collect();
    ShotNoise {
        detuning_sd,
        detuning_h,
        amplitude_factors,
    }
}

/// Diagonal of `exp(-i t sum_ions [d_SD P_D + d_H P_H])`.
pub(crate) fn phase_diagonal(dims: &RegisterDims, duration_us: f64, noise: &ShotNoise) -> Vec<C64> {
    (0..dims.dim())
        .map(|k| {
            let angle: f64 = (0..dims.n_ions)
                .map(|ion| match dims.level_of(k, ion) {
                    IonLevel::S => 0.0,
                    IonLevel::D => noise.detuning_sd[ion],
                    IonLevel::H => noise.detuning_h[ion],
                })
                .sum();
            C64::from_polar(1.0, -angle * duration_us)
        })
        .collect()
}

/// Free evolution under the quasi-static detunings for `duration_us`.
pub fn accrue_phase(
    mut register: TrapRegister,
    duration_us: f64,
    noise: &ShotNoise,
) -> Result<TrapRegister> {
    if !(duration_us >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "negative duration {duration_us}"
        )));
    }
    let dims = register.dims();
    if noise.detuning_sd.len() != dims.n_ions || noise.detuning_h.len() != dims.n_ions {
        return Err(Error::DimensionMismatch(
            "shot noise does not match register".into(),
        ));
    }
    if duration_us > 0.0
        && noise
            .detuning_sd
            .iter()
            .chain(&noise.detuning_h)
            .any(|&d| d != 0.0)
    {
        register.apply_diagonal(&phase_diagonal(&dims, duration_us, noise));
    }
    Ok(register)
}

fn ion_pauli_pairs(dims: &RegisterDims, ion: usize, which: usize) -> PairUnitary {
    // X and Y on the {S, D} subspace of one ion; H untouched.
    let (a, b) = match which {
        1 => (ONE, ONE),
        2 => (C64::new(0.0, -1.0), C64::new(0.0, 1.0)),
        _ => unreachable!(),
    };
    let block = nalgebra::Matrix2::new(C64::new(0.0, 0.0), a, b, C64::new(0.0, 0.0));
    PairUnitary::from_pairs(
        (0..dims.dim())
            .filter(|&k| dims.level_of(k, ion) == IonLevel::S)
            .map(|k| (k, dims.with_level(k, ion, IonLevel::D), block))
            .collect(),
    )
}

fn ion_z_diagonal(dims: &RegisterDims, ion: usize) -> Vec<C64> {
    (0..dims.dim())
        .map(|k| {
            if dims.level_of(k, ion) == IonLevel::D {
                -ONE
            } else {
                ONE
            }
        })
        .collect()
}

/// `rho -> (1 - 3p/4) rho + p/4 (X rho X + Y rho Y + Z rho Z)` on the `{S, D}`
/// subspace of `ion`, in place.
pub(crate) fn depolarize_density(m: &mut ComplexMatrix, dims: &RegisterDims, ion: usize, p: f64) {
    if p == 0.0 {
        return;
    }
    let mut acc = m.scale(1.0 - 0.75 * p);
    for which in [1, 2] {
        let mut t = m.clone();
        ion_pauli_pairs(dims, ion, which).apply_density(&mut t);
        acc += t.scale(p / 4.0);
    }
    let mut t = m.clone();
    crate::trap::apply_diagonal_density(&mut t, &ion_z_diagonal(dims, ion));
    acc += t.scale(p / 4.0);
    *m = acc;
}

/// Quantum-trajectory unravelling of [`depolarize_density`]: with probability
/// `3p/4` one of X, Y, Z (uniformly) is applied.
pub(crate) fn depolarize_pure<R: Rng + ?Sized>(
    v: &mut ComplexVector,
    dims: &RegisterDims,
    ion: usize,
    p: f64,
    rng: &mut R,
) {
    if p == 0.0 {
        return;
    }
    let u: f64 = rng.random();
    if u >= 0.75 * p {
        return;
    }
    match ((u / (0.25 * p)) as usize).min(2) {
        0 => ion_pauli_pairs(dims, ion, 1).apply_vector(v),
        1 => ion_pauli_pairs(dims, ion, 2).apply_vector(v),
        _ => {
            for (z, ph) in v.iter_mut().zip(ion_z_diagonal(dims, ion)) {
                *z *= ph;
            }
        }
    }
}

/// Depolarizing channel on one ion's qubit subspace of a register state.
pub fn apply_depolarizing(
    rho: &DensityMatrix,
    dims: &RegisterDims,
    ion: usize,
    p: f64,
) -> Result<DensityMatrix> {
    dims.check_ion(ion)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "depolarizing probability {p}"
        )));
    }
    if rho.dim() != dims.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state dim {} vs register dim {}",
            rho.dim(),
            dims.dim()
        )));
    }
    let mut m = rho.matrix().clone();
    depolarize_density(&mut m, dims, ion, p);
    DensityMatrix::from_unnormalized(m)
}

/// Applies [`apply_depolarizing`] to a register in either representation; a
/// pure register is converted to a density matrix.
pub fn depolarize_register(register: TrapRegister, ion: usize, p: f64) -> Result<TrapRegister> {
    let dims = register.dims();
    dims.check_ion(ion)?;
    let mut reg = register.to_mixed();
    if let Representation::Mixed(m) = reg.state_mut() {
        depolarize_density(m, &dims, ion, p);
    }
    Ok(reg)
}

/// Scales the area of a laser pulse by the shot's factor for `pulse_index`.
pub fn perturb_pulse(pulse: &Pulse, noise: &ShotNoise, pulse_index: usize) -> Result<Pulse> {
    if !pulse.is_laser() {
        return Err(Error::InvalidArgument(format!("cannot perturb {pulse}")));
    }
    let factor = *noise.amplitude_factors.get(pulse_index).ok_or_else(|| {
        Error::InvalidArgument(format!("no amplitude factor for pulse {pulse_index}"))
    })?;
    let theta = pulse.theta().expect("laser pulse");
    Ok(pulse.with_theta(theta * factor))
}
