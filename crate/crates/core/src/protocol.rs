//! The deterministic three-ion teleportation sequence.
//!
//! Ion 1 (index 0) carries the input, ions 2 and 3 (indices 1, 2) share the
//! Bell state `(|DS> + |SD>)/sqrt2`. The sequence is executed either
//! shot-by-shot on pure states ([`run_shot`]) or as an exact instrument on
//! density matrices, summed over measurement outcomes and averaged over the
//! quasi-static detuning by Gauss-Hermite quadrature ([`run_exact`]).
//!
//! Rows 34 and 35 (analysis pulse and final readout) are treated as ideal.
//! The phase offset `phi` applied to rows 30 and later is equivalent to a
//! frame rotation of ion 3; exact outputs are reported in the rotated frame,
//! so that `<psi|rho|psi>` is exactly the Bright probability after row 34.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{
    depolarize_density, depolarize_pure, derive_seed, phase_diagonal, sample_shot_noise, shot_rng,
    NoiseConfig, ShotNoise,
};
use crate::quadrature::gauss_hermite;
use rand::Rng;

use crate::quantum::{
    partial_trace_matrix, state_fidelity, ComplexMatrix, ComplexVector, DensityMatrix, PureState,
    C64,
};
use crate::tomography::{Basis, CountsTable};
use crate::trap::{
    apply_diagonal_density, outcome_mask, project_density, IonLevel, Outcome, PairUnitary, Pulse,
    RegisterDims, DEFAULT_FOCK_CUTOFF, DEFAULT_LEAKAGE_BUDGET,
};

pub const N_IONS: usize = 3;
pub const SOURCE_ION: usize = 0;
pub const PARTNER_ION: usize = 1;
pub const TARGET_ION: usize = 2;

/// Residual hidden or motional population tolerated in exact outputs.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Standard errors by which the shot estimate of the top-Fock population
/// must exceed the leakage budget before a batch is rejected.
const LEAKAGE_SIGMAS: f64 = 3.0;

/// Salt separating the measurement stream from the noise stream of a shot.
const MEASUREMENT_STREAM_SALT: u64 = 0x6d65_6173_7572_6521;

/// Input state `U_chi |S> = R^C(theta_chi, phi_chi) |S>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputStateSpec {
    #[serde(default)]
    pub label: String,
    pub theta_chi: f64,
    pub phi_chi: f64,
}

impl InputStateSpec {
    pub fn new(label: impl Into<String>, theta_chi: f64, phi_chi: f64) -> Self {
        Self {
            label: label.into(),
            theta_chi,
            phi_chi,
        }
    }

    /// The six Pauli eigenstates psi_1..psi_6:
    /// `|S>`, `|D>`, `(|D> - i|S>)/sqrt2`, `(|D> - |S>)/sqrt2`,
    /// `(|D> + i|S>)/sqrt2`, `(|D> + |S>)/sqrt2`, equal up to global phase.
    pub fn six_canonical() -> Vec<InputStateSpec> {
        vec![
            Self::new("psi1", 0.0, 0.0),
            Self::new("psi2", PI, 0.0),
            Self::new("psi3", FRAC_PI_2, PI),
            Self::new("psi4", FRAC_PI_2, FRAC_PI_2),
            Self::new("psi5", FRAC_PI_2, 0.0),
            Self::new("psi6", FRAC_PI_2, 3.0 * FRAC_PI_2),
        ]
    }

    pub fn state(&self) -> PureState {
        let r = crate::trap::rotation(self.theta_chi, self.phi_chi);
        PureState::from_slice(&[r[(0, 0)], r[(1, 0)]]).expect("rotation column is normalized")
    }

    pub fn density(&self) -> DensityMatrix {
        self.state().to_density()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SequenceMode {
    /// Row 34 applies the inverse of the input preparation.
    FidelityCheck,
    /// Row 34 is the pre-rotation into the given measurement basis.
    Tomography(Basis),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolOptions {
    pub fock_cutoff: usize,
    pub leakage_budget: f64,
    /// Row 7 stand-by time.
    pub standby_wait_us: f64,
    /// Row 28 rephasing wait.
    pub rephase_wait_us: f64,
    /// When false, the echo pulse on ion 3 (row 17) is moved to right after
    /// ion 3 is unhidden (row 29) and the rephasing wait is dropped: the same
    /// logical operation without refocusing.
    pub spin_echo: bool,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            fock_cutoff: DEFAULT_FOCK_CUTOFF,
            leakage_budget: DEFAULT_LEAKAGE_BUDGET,
            standby_wait_us: 1.0,
            rephase_wait_us: 300.0,
            spin_echo: true,
        }
    }
}

impl ProtocolOptions {
    pub fn dims(&self) -> Result<RegisterDims> {
        RegisterDims::new(N_IONS, self.fock_cutoff)
    }

    pub fn validate(&self) -> Result<()> {
        self.dims()?;
        if !(self.leakage_budget > 0.0) {
            return Err(Error::InvalidArgument("leakage_budget must be > 0".into()));
        }
        if !(self.standby_wait_us >= 0.0) || !(self.rephase_wait_us >= 0.0) {
            return Err(Error::InvalidArgument("waits must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    /// No quantum operation (initialization rows, disabled rows).
    Marker,
    /// Laser pulse or wait.
    Pulse(Pulse),
    /// Feed-forward PMT detection.
    Detect { ion: usize },
    /// Pulse applied only if the detection of `on_ion` reported `outcome`.
    Conditional {
        on_ion: usize,
        outcome: Outcome,
        pulse: Pulse,
    },
    /// Row 34; executed without noise.
    Analysis(Option<Pulse>),
    /// Row 35; ideal projective readout.
    Readout { ion: usize },
}

/// One row of the pulse table; `sub_step` orders rows inserted after a row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceStep {
    pub step_id: u8,
    pub sub_step: u8,
    pub action: Action,
    pub comment: String,
}

impl SequenceStep {
    fn new(step_id: u8, action: Action, comment: &str) -> Self {
        Self {
            step_id,
            sub_step: 0,
            action,
            comment: comment.to_string(),
        }
    }

    fn laser_pulse(&self) -> Option<&Pulse> {
        match &self.action {
            Action::Pulse(p) if p.is_laser() => Some(p),
            Action::Conditional { pulse, .. } => Some(pulse),
            _ => None,
        }
    }
}

impl fmt::Display for SequenceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let id = if self.sub_step == 0 {
            format!("{}", self.step_id)
        } else {
            format!("{}{}", self.step_id, (b'a' + self.sub_step) as char)
        };
        let action = match &self.action {
            Action::Marker => "-".to_string(),
            Action::Pulse(p) => p.to_string(),
            Action::Detect { ion } => format!("PMT detection of ion {}", ion + 1),
            Action::Conditional {
                on_ion,
                outcome,
                pulse,
            } => {
                format!("{pulse} if ion {} {}", on_ion + 1, outcome)
            }
            Action::Analysis(Some(p)) => p.to_string(),
            Action::Analysis(None) => "-".to_string(),
            Action::Readout { ion } => format!("Read out ion {}", ion + 1),
        };
        write!(f, "{id:>4} | {action:<34} | {}", self.comment)
    }
}

/// The 35-step teleportation sequence as executable steps.
pub fn build_sequence(
    input: &InputStateSpec,
    phase_offset: f64,
    mode: SequenceMode,
    options: &ProtocolOptions,
) -> Vec<SequenceStep> {
    use Action::*;
    let carrier = |ion, theta, phi| crate::trap::Pulse::Carrier { ion, theta, phi };
    let blue = |ion, theta, phi| crate::trap::Pulse::BlueSideband { ion, theta, phi };
    let hide = |ion, theta, phi| crate::trap::Pulse::Hide { ion, theta, phi };
    let (ion1, ion2, ion3) = (SOURCE_ION, PARTNER_ION, TARGET_ION);
    let p = phase_offset;
    let three_half = 3.0 * FRAC_PI_2;
    let composite = PI / 2f64.sqrt();

    let mut s = vec![
        SequenceStep::new(1, Marker, "Doppler preparation"),
        SequenceStep::new(2, Marker, "Sideband cooling"),
        SequenceStep::new(3, Marker, "Optical pumping"),
        SequenceStep::new(
            4,
            Pulse(blue(ion3, FRAC_PI_2, three_half)),
            "Entangle ion 3 with motional qubit",
        ),
        SequenceStep::new(
            5,
            Pulse(carrier(ion2, PI, three_half)),
            "Prepare ion 2 for entanglement",
        ),
        SequenceStep::new(
            6,
            Pulse(blue(ion2, PI, FRAC_PI_2)),
            "Entangle ion 2 with ion 3",
        ),
        SequenceStep::new(
            7,
            Pulse(crate::trap::Pulse::Wait {
                duration_us: options.standby_wait_us,
            }),
            "Stand-by for teleportation",
        ),
        SequenceStep::new(8, Pulse(hide(ion3, PI, 0.0)), "Hide target ion"),
        SequenceStep::new(
            9,
            Pulse(carrier(ion1, input.theta_chi, input.phi_chi)),
            "Prepare source ion 1 in the input state",
        ),
        SequenceStep::new(
            10,
            Pulse(blue(ion2, PI, three_half)),
            "Get motional qubit from ion 2",
        ),
        SequenceStep::new(
            11,
            Pulse(blue(ion1, composite, FRAC_PI_2)),
            "Composite pulse for phase gate",
        ),
        SequenceStep::new(
            12,
            Pulse(blue(ion1, PI, 0.0)),
            "Composite pulse for phase gate",
        ),
        SequenceStep::new(
            13,
            Pulse(blue(ion1, composite, FRAC_PI_2)),
            "Composite pulse for phase gate",
        ),
        SequenceStep::new(
            14,
            Pulse(blue(ion1, PI, 0.0)),
            "Composite pulse for phase gate",
        ),
        SequenceStep::new(
            15,
            Pulse(carrier(ion1, PI, FRAC_PI_2)),
            "Spin echo on ion 1",
        ),
    ];
    if options.spin_echo {
        s.push(SequenceStep::new(
            16,
            Pulse(hide(ion3, PI, PI)),
            "Unhide ion 3 for spin echo",
        ));
        s.push(SequenceStep::new(
            17,
            Pulse(carrier(ion3, PI, FRAC_PI_2)),
            "Spin echo on ion 3",
        ));
        s.push(SequenceStep::new(
            18,
            Pulse(hide(ion3, PI, 0.0)),
            "Hide ion 3 again",
        ));
    } else {
        s.push(SequenceStep::new(16, Marker, "Spin echo disabled"));
        s.push(SequenceStep::new(17, Marker, "Spin echo disabled"));
        s.push(SequenceStep::new(18, Marker, "Spin echo disabled"));
    }
    s.extend([
        SequenceStep::new(
            19,
            Pulse(blue(ion2, PI, FRAC_PI_2)),
            "Write motional qubit back to ion 2",
        ),
        SequenceStep::new(
            20,
            Pulse(carrier(ion1, FRAC_PI_2, three_half)),
            "Part of rotation into Bell basis",
        ),
        SequenceStep::new(
            21,
            Pulse(carrier(ion2, FRAC_PI_2, FRAC_PI_2)),
            "Finalize rotation into Bell basis",
        ),
        SequenceStep::new(22, Pulse(hide(ion2, PI, 0.0)), "Hide ion 2"),
        SequenceStep::new(
            23,
            Detect { ion: ion1 },
            "Read out ion 1 with photomultiplier",
        ),
        SequenceStep::new(24, Pulse(hide(ion1, PI, 0.0)), "Hide ion 1"),
        SequenceStep::new(25, Pulse(hide(ion2, PI, PI)), "Unhide ion 2"),
        SequenceStep::new(
            26,
            Detect { ion: ion2 },
            "Read out ion 2 with photomultiplier",
        ),
        SequenceStep::new(27, Pulse(hide(ion2, PI, 0.0)), "Hide ion 2"),
    ]);
    let rephase = if options.spin_echo {
        options.rephase_wait_us
    } else {
        0.0
    };
    s.push(SequenceStep::new(
        28,
        Pulse(crate::trap::Pulse::Wait {
            duration_us: rephase,
        }),
        "Let system rephase; part of spin echo",
    ));
    s.push(SequenceStep::new(
        29,
        Pulse(hide(ion3, PI, PI)),
        "Unhide ion 3",
    ));
    if !options.spin_echo {
        let mut moved = SequenceStep::new(
            29,
            Pulse(carrier(ion3, PI, FRAC_PI_2)),
            "Echo pulse on ion 3 without refocusing",
        );
        moved.sub_step = 1;
        s.push(moved);
    }
    s.extend([
        SequenceStep::new(
            30,
            Pulse(carrier(ion3, FRAC_PI_2, three_half + p)),
            "Change basis",
        ),
        SequenceStep::new(
            31,
            Conditional {
                on_ion: ion1,
                outcome: Outcome::Dark,
                pulse: carrier(ion3, PI, p),
            },
            "i sigma_x, with row 32 = -i sigma_z, conditioned on PMT detection 1",
        ),
        SequenceStep::new(
            32,
            Conditional {
                on_ion: ion1,
                outcome: Outcome::Dark,
                pulse: carrier(ion3, PI, FRAC_PI_2 + p),
            },
            "-i sigma_y, conditioned on PMT detection 1",
        ),
        SequenceStep::new(
            33,
            Conditional {
                on_ion: ion2,
                outcome: Outcome::Dark,
                pulse: carrier(ion3, PI, p),
            },
            "i sigma_x conditioned on PMT detection 2",
        ),
    ]);
    let analysis = match mode {
        SequenceMode::FidelityCheck => SequenceStep::new(
            34,
            Analysis(Some(carrier(ion3, input.theta_chi, input.phi_chi + PI + p))),
            "Inverse of input preparation with offset phi",
        ),
        SequenceMode::Tomography(basis) => SequenceStep::new(
            34,
            Analysis(
                basis
                    .pre_rotation_phase()
                    .map(|phi| carrier(ion3, FRAC_PI_2, phi + p)),
            ),
            match basis {
                Basis::Z => "No pre-rotation (Z basis)",
                Basis::X => "Tomography pre-rotation (X basis)",
                Basis::Y => "Tomography pre-rotation (Y basis)",
            },
        ),
    };
    s.push(analysis);
    s.push(SequenceStep::new(
        35,
        Readout { ion: ion3 },
        "Read out ion 3",
    ));
    s
}

/// Human-readable listing mirroring the pulse table.
pub fn format_sequence(sequence: &[SequenceStep]) -> String {
    let mut out = format!("{:>4} | {:<34} | {}\n", "step", "action", "comment");
    for step in sequence {
        out.push_str(&step.to_string());
        out.push('\n');
    }
    out
}

/// Checks ordering and that conditionals only refer to earlier detections.
pub fn validate_sequence(sequence: &[SequenceStep]) -> Result<()> {
    let mut detected = Vec::new();
    let mut last: Option<(u8, u8)> = None;
    for step in sequence {
        let key = (step.step_id, step.sub_step);
        if let Some(prev) = last {
            if key <= prev {
                return Err(Error::InvalidArgument(format!("step {key:?} out of order")));
            }
        }
        last = Some(key);
        match &step.action {
            Action::Detect { ion } => detected.push(*ion),
            Action::Conditional { on_ion, .. } if !detected.contains(on_ion) => {
                return Err(Error::InvalidArgument(format!(
                    "step {} conditions on an ion not yet detected",
                    step.step_id
                )));
            }
            _ => {}
        }
    }
    Ok(())
}

/// Index of the first step from row 30 on, where the phase offset enters.
fn reconstruction_start(sequence: &[SequenceStep]) -> usize {
    sequence
        .iter()
        .position(|s| s.step_id >= 30)
        .unwrap_or(sequence.len())
}

fn count_laser_pulses(sequence: &[SequenceStep]) -> usize {
    sequence
        .iter()
        .filter(|s| s.laser_pulse().is_some())
        .count()
}

fn step_duration(step: &SequenceStep, noise: &NoiseConfig) -> f64 {
    let d = &noise.pulse_durations;
    match &step.action {
        Action::Pulse(p) | Action::Conditional { pulse: p, .. } => d.duration_of(p),
        Action::Detect { .. } => d.detection_us,
        Action::Marker | Action::Analysis(_) | Action::Readout { .. } => 0.0,
    }
}

fn depolarizes(pulse: &Pulse) -> bool {
    matches!(pulse, Pulse::Carrier { .. } | Pulse::BlueSideband { .. })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellOutcome {
    SS,
    SD,
    DS,
    DD,
}

impl BellOutcome {
    pub const ALL: [BellOutcome; 4] = [
        BellOutcome::SS,
        BellOutcome::SD,
        BellOutcome::DS,
        BellOutcome::DD,
    ];

    /// Bright reads as S, Dark as D.
    pub fn from_outcomes(pmt1: Outcome, pmt2: Outcome) -> Self {
        match (pmt1, pmt2) {
            (Outcome::Bright, Outcome::Bright) => BellOutcome::SS,
            (Outcome::Bright, Outcome::Dark) => BellOutcome::SD,
            (Outcome::Dark, Outcome::Bright) => BellOutcome::DS,
            (Outcome::Dark, Outcome::Dark) => BellOutcome::DD,
        }
    }

    pub fn outcomes(self) -> (Outcome, Outcome) {
        match self {
            BellOutcome::SS => (Outcome::Bright, Outcome::Bright),
            BellOutcome::SD => (Outcome::Bright, Outcome::Dark),
            BellOutcome::DS => (Outcome::Dark, Outcome::Bright),
            BellOutcome::DD => (Outcome::Dark, Outcome::Dark),
        }
    }
}

impl fmt::Display for BellOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot_index: u64,
    pub pmt1: Outcome,
    pub pmt2: Outcome,
    pub final_outcome: Outcome,
    pub branch: BellOutcome,
    /// Largest top-Fock population reached after any pulse of this shot.
    pub peak_top_fock: f64,
}

/// A sequence prepared for repeated shots. Nominal pulse unitaries and
/// detection masks are built once; free evolution between operations is
/// merged into one phase kick per idle period.
pub struct ShotProgram {
    noise: NoiseConfig,
    dims: RegisterDims,
    leakage_budget: f64,
    ops: Vec<(f64, CompiledOp)>,
    n_pulses: usize,
    top_fock: Vec<usize>,
}

enum CompiledOp {
    Idle,
    Pulse {
        pulse: Pulse,
        index: usize,
        unitary: PairUnitary,
        condition: Option<(usize, Outcome)>,
    },
    Detect {
        ion: usize,
        bright: Vec<bool>,
    },
    Analysis(Option<PairUnitary>),
    Readout(Vec<bool>),
}

impl ShotProgram {
    pub fn compile(
        sequence: &[SequenceStep],
        noise: &NoiseConfig,
        options: &ProtocolOptions,
    ) -> Result<Self> {
        noise.validate()?;
        options.validate()?;
        validate_sequence(sequence)?;
        let dims = options.dims()?;
        let mut ops = Vec::with_capacity(sequence.len());
        let mut n_pulses = 0;
        for step in sequence {
            let op = match &step.action {
                Action::Marker | Action::Pulse(Pulse::Wait { .. }) => CompiledOp::Idle,
                Action::Pulse(pulse) | Action::Conditional { pulse, .. } => {
                    pulse.validate(&dims)?;
                    let condition = match &step.action {
                        Action::Conditional {
                            on_ion, outcome, ..
                        } => Some((*on_ion, *outcome)),
                        _ => None,
                    };
                    n_pulses += 1;
                    CompiledOp::Pulse {
                        pulse: *pulse,
                        index: n_pulses - 1,
                        unitary: pulse.unitary(&dims)?.expect("laser pulse"),
                        condition,
                    }
                }
                Action::Detect { ion } => {
                    dims.check_ion(*ion)?;
                    CompiledOp::Detect {
                        ion: *ion,
                        bright: outcome_mask(&dims, *ion, Outcome::Bright),
                    }
                }
                Action::Analysis(pulse) => CompiledOp::Analysis(match pulse {
                    Some(p) => {
                        p.validate(&dims)?;
                        p.unitary(&dims)?
                    }
                    None => None,
                }),
                Action::Readout { ion } => {
                    dims.check_ion(*ion)?;
                    CompiledOp::Readout(outcome_mask(&dims, *ion, Outcome::Bright))
                }
            };
            ops.push((step_duration(step, noise), op));
        }
        let top = dims.fock_cutoff - 1;
        Ok(Self {
            noise: noise.clone(),
            dims,
            leakage_budget: options.leakage_budget,
            ops,
            n_pulses,
            top_fock: (0..dims.dim())
                .filter(|&k| dims.phonons_of(k) == top)
                .collect(),
        })
    }

    /// Executes one experimental repetition on a fresh register.
    pub fn run(&self, master_seed: u64, shot_index: u64) -> Result<ShotRecord> {
        Ok(self.run_traced(master_seed, shot_index)?.0)
    }

    /// Also returns the top-Fock population after every compiled pulse
    /// (zero where a conditional pulse did not fire).
    fn run_traced(&self, master_seed: u64, shot_index: u64) -> Result<(ShotRecord, Vec<f64>)> {
        let dims = &self.dims;
        let noise = &self.noise;
        let shot_noise = sample_shot_noise(noise, N_IONS, self.n_pulses, master_seed, shot_index);
        let mut rng = shot_rng(master_seed ^ MEASUREMENT_STREAM_SALT, shot_index);
        let mut v = ComplexVector::zeros(dims.dim());
        v[0] = C64::new(1.0, 0.0);

        // The phase of basis state k depends only on the ion levels, i.e. on
        // k / fock_cutoff.
        let f = dims.fock_cutoff;
        let rates: Vec<f64> = (0..dims.dim() / f)
            .map(|class| {
                (0..N_IONS)
                    .map(|ion| match dims.level_of(class * f, ion) {
                        IonLevel::S => 0.0,
                        IonLevel::D => shot_noise.detuning_sd[ion],
                        IonLevel::H => shot_noise.detuning_h[ion],
                    })
                    .sum()
            })
            .collect();
        let dephasing = rates.iter().any(|&r| r != 0.0);
        let mut pending = 0.0;
        let flush = |v: &mut ComplexVector, pending: &mut f64| {
            if dephasing && *pending > 0.0 {
                let kicks: Vec<C64> = rates
                    .iter()
                    .map(|r| C64::from_polar(1.0, -r * *pending))
                    .collect();
                for (k, z) in v.iter_mut().enumerate() {
                    *z *= kicks[k / f];
                }
            }
            *pending = 0.0;
        };

        let mut pmt = [None::<Outcome>; N_IONS];
        let mut final_outcome = None;
        let mut tops = vec![0.0; self.n_pulses];
        for (duration, op) in &self.ops {
            pending += 0.5 * duration;
            match op {
                CompiledOp::Idle => {}
                CompiledOp::Pulse {
                    pulse,
                    index,
                    unitary,
                    condition,
                } => {
                    let fire = condition.map_or(true, |(ion, outcome)| pmt[ion] == Some(outcome));
                    if fire {
                        flush(&mut v, &mut pending);
                        let factor = shot_noise.amplitude_factors[*index];
                        if factor == 1.0 {
                            unitary.apply_vector(&mut v);
                        } else {
                            let noisy = crate::noise::perturb_pulse(pulse, &shot_noise, *index)?;
                            noisy
                                .unitary(dims)?
                                .expect("laser pulse")
                                .apply_vector(&mut v);
                        }
                        if depolarizes(pulse) && noise.depolarizing_per_pulse > 0.0 {
                            let ion = pulse.ion().expect("addressed pulse");
                            depolarize_pure(
                                &mut v,
                                dims,
                                ion,
                                noise.depolarizing_per_pulse,
                                &mut rng,
                            );
                        }
                        let top: f64 = self.top_fock.iter().map(|&k| v[k].norm_sqr()).sum();
                        tops[*index] = top;
                    }
                }
                CompiledOp::Detect { ion, bright } => {
                    flush(&mut v, &mut pending);
                    let actual = sample_projection(&mut v, bright, &mut rng);
                    let eps = noise.detection_error;
                    let reported = if eps > 0.0 && rng.random::<f64>() < eps {
                        actual.flipped()
                    } else {
                        actual
                    };
                    pmt[*ion] = Some(reported);
                }
                CompiledOp::Analysis(unitary) => {
                    flush(&mut v, &mut pending);
                    if let Some(u) = unitary {
                        u.apply_vector(&mut v);
                    }
                }
                CompiledOp::Readout(bright) => {
                    final_outcome = Some(sample_projection(&mut v, bright, &mut rng));
                }
            }
            pending += 0.5 * duration;
        }
        let missing = || Error::InvalidArgument("sequence lacks a detection or readout".into());
        let pmt1 = pmt[SOURCE_ION].ok_or_else(missing)?;
        let pmt2 = pmt[PARTNER_ION].ok_or_else(missing)?;
        let record = ShotRecord {
            shot_index,
            pmt1,
            pmt2,
            final_outcome: final_outcome.ok_or_else(missing)?,
            branch: BellOutcome::from_outcomes(pmt1, pmt2),
            peak_top_fock: tops.iter().copied().fold(0.0, f64::max),
        };
        Ok((record, tops))
    }

    /// The budget bounds the ensemble population after each pulse, which the
    /// shot mean estimates. A rare trajectory may exceed the budget on its
    /// own, so only an excess of more than three standard errors fails.
    fn check_leakage(&self, traces: &[Vec<f64>]) -> Result<()> {
        let n = traces.len() as f64;
        for pulse in 0..self.n_pulses {
            let mean = traces.iter().map(|t| t[pulse]).sum::<f64>() / n;
            let var = if traces.len() > 1 {
                traces
                    .iter()
                    .map(|t| (t[pulse] - mean).powi(2))
                    .sum::<f64>()
                    / (n - 1.0)
            } else {
                0.0
            };
            if mean - LEAKAGE_SIGMAS * (var / n).sqrt() > self.leakage_budget {
                return Err(Error::Leakage {
                    population: mean,
                    budget: self.leakage_budget,
                });
            }
        }
        Ok(())
    }
}

/// Born-rule projection of a normalized vector onto `bright` or its
/// complement; returns the true outcome.
fn sample_projection<R: Rng + ?Sized>(
    v: &mut ComplexVector,
    bright: &[bool],
    rng: &mut R,
) -> Outcome {
    let p_bright: f64 = v
        .iter()
        .zip(bright)
        .filter(|(_, &b)| b)
        .map(|(z, _)| z.norm_sqr())
        .sum();
    let outcome = if rng.random::<f64>() < p_bright.clamp(0.0, 1.0) {
        Outcome::Bright
    } else {
        Outcome::Dark
    };
    let keep_bright = outcome == Outcome::Bright;
    let mut norm = 0.0;
    for (z, &b) in v.iter_mut().zip(bright) {
        if b != keep_bright {
            *z = C64::new(0.0, 0.0);
        } else {
            norm += z.norm_sqr();
        }
    }
    v.unscale_mut(norm.sqrt());
    outcome
}

/// Executes one experimental repetition on a fresh register.
pub fn run_shot(
    sequence: &[SequenceStep],
    noise: &NoiseConfig,
    options: &ProtocolOptions,
    master_seed: u64,
    shot_index: u64,
) -> Result<ShotRecord> {
    let program = ShotProgram::compile(sequence, noise, options)?;
    let (record, tops) = program.run_traced(master_seed, shot_index)?;
    program.check_leakage(&[tops])?;
    Ok(record)
}

/// Runs `shots` repetitions in parallel; the result does not depend on
/// scheduling.
pub fn run_shots(
    sequence: &[SequenceStep],
    noise: &NoiseConfig,
    options: &ProtocolOptions,
    master_seed: u64,
    shots: u64,
) -> Result<Vec<ShotRecord>> {
    let program = ShotProgram::compile(sequence, noise, options)?;
    let (records, traces): (Vec<_>, Vec<_>) = (0..shots)
        .into_par_iter()
        .map(|i| program.run_traced(master_seed, i))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    program.check_leakage(&traces)?;
    Ok(records)
}

/// Unnormalized register state conditioned on the reported detections.
#[derive(Debug, Clone)]
struct Branch {
    reported: [Option<Outcome>; N_IONS],
    rho: ComplexMatrix,
}

fn total_trace(branches: &[Branch]) -> f64 {
    branches.iter().map(|b| b.rho.trace().re).sum()
}

fn check_branch_leakage(branches: &[Branch], dims: &RegisterDims, budget: f64) -> Result<()> {
    let top = dims.fock_cutoff - 1;
    let weight: f64 = branches
        .iter()
        .map(|b| {
            (0..dims.dim())
                .filter(|&k| dims.phonons_of(k) == top)
                .map(|k| b.rho[(k, k)].re)
                .sum::<f64>()
        })
        .sum();
    let population = weight / total_trace(branches);
    if population > budget {
        return Err(Error::Leakage { population, budget });
    }
    Ok(())
}

/// Exact evolution of `steps` on every branch for one detuning realization.
/// Stops before the analysis pulse.
fn evolve_branches(
    mut branches: Vec<Branch>,
    steps: &[SequenceStep],
    noise: &NoiseConfig,
    shot_noise: &ShotNoise,
    options: &ProtocolOptions,
    dims: &RegisterDims,
) -> Result<Vec<Branch>> {
    let dephasing = shot_noise.detuning_sd.iter().any(|&d| d != 0.0);
    let accrue = |branches: &mut Vec<Branch>, t: f64| {
        if dephasing && t > 0.0 {
            let phases = phase_diagonal(dims, t, shot_noise);
            for b in branches.iter_mut() {
                apply_diagonal_density(&mut b.rho, &phases);
            }
        }
    };
    let eps = noise.detection_error;
    for step in steps {
        if matches!(step.action, Action::Analysis(_) | Action::Readout { .. }) {
            break;
        }
        let half = 0.5 * step_duration(step, noise);
        accrue(&mut branches, half);
        match &step.action {
            Action::Marker | Action::Pulse(Pulse::Wait { .. }) => {}
            Action::Pulse(pulse) | Action::Conditional { pulse, .. } => {
                let u = pulse.unitary(dims)?.expect("laser pulse");
                let ion = pulse.ion().expect("addressed pulse");
                for b in branches.iter_mut() {
                    let fire = match &step.action {
                        Action::Conditional {
                            on_ion, outcome, ..
                        } => b.reported[*on_ion] == Some(*outcome),
                        _ => true,
                    };
                    if fire {
                        u.apply_density(&mut b.rho);
                        if depolarizes(pulse) {
                            depolarize_density(&mut b.rho, dims, ion, noise.depolarizing_per_pulse);
                        }
                    }
                }
                check_branch_leakage(&branches, dims, options.leakage_budget)?;
            }
            Action::Detect { ion } => {
                let mut next: Vec<Branch> = Vec::with_capacity(2 * branches.len());
                let mut push = |reported: [Option<Outcome>; N_IONS], rho: ComplexMatrix| {
                    if let Some(existing) = next.iter_mut().find(|b| b.reported == reported) {
                        existing.rho += rho;
                    } else {
                        next.push(Branch { reported, rho });
                    }
                };
                for b in branches {
                    for actual in [Outcome::Bright, Outcome::Dark] {
                        let mut rho = b.rho.clone();
                        project_density(&mut rho, &outcome_mask(dims, *ion, actual));
                        for (reported, weight) in [(actual, 1.0 - eps), (actual.flipped(), eps)] {
                            if weight == 0.0 {
                                continue;
                            }
                            let mut key = b.reported;
                            key[*ion] = Some(reported);
                            push(
                                key,
                                if weight == 1.0 {
                                    rho.clone()
                                } else {
                                    rho.scale(weight)
                                },
                            );
                        }
                    }
                }
                branches = next;
            }
            Action::Analysis(_) | Action::Readout { .. } => unreachable!(),
        }
        accrue(&mut branches, half);
    }
    Ok(branches)
}

/// Ion 3 after teleportation, conditioned on one pair of reported outcomes.
#[derive(Debug, Clone)]
pub struct BranchResult {
    pub branch: BellOutcome,
    pub probability: f64,
    pub rho: DensityMatrix,
}

#[derive(Debug, Clone)]
pub struct ExactOutcome {
    /// Outcome-averaged state of ion 3 in the phase-offset frame.
    pub rho: DensityMatrix,
    pub branches: Vec<BranchResult>,
}

/// Exact evolution split at row 30, so that the phase-independent prefix is
/// computed once per detuning node and reused for every phase offset.
#[derive(Debug, Clone)]
pub struct ExactRun {
    noise: NoiseConfig,
    options: ProtocolOptions,
    dims: RegisterDims,
    nodes: Vec<(f64, ShotNoise, Vec<Branch>)>,
    input: InputStateSpec,
    mode: SequenceMode,
}

impl ExactRun {
    pub fn prepare(
        input: &InputStateSpec,
        noise: &NoiseConfig,
        options: &ProtocolOptions,
    ) -> Result<Self> {
        let sequence = build_sequence(input, 0.0, SequenceMode::FidelityCheck, options);
        Self::prepare_sequence(input, &sequence, noise, options)
    }

    /// Runs the part of `sequence` before row 30.
    pub fn prepare_sequence(
        input: &InputStateSpec,
        sequence: &[SequenceStep],
        noise: &NoiseConfig,
        options: &ProtocolOptions,
    ) -> Result<Self> {
        noise.validate()?;
        options.validate()?;
        validate_sequence(sequence)?;
        if noise.amplitude_error_sigma > 0.0 {
            return Err(Error::NotChannelRepresentable(
                "pulse-area errors are only simulated shot by shot".into(),
            ));
        }
        let dims = options.dims()?;
        let prefix = &sequence[..reconstruction_start(sequence)];
        let n_pulses = count_laser_pulses(sequence);
        let realizations = detuning_nodes(noise)?;
        let mut initial = ComplexMatrix::zeros(dims.dim(), dims.dim());
        initial[(0, 0)] = C64::new(1.0, 0.0);
        let nodes = realizations
            .into_par_iter()
            .map(|(w, detunings)| {
                let sn = ShotNoise::with_detunings(noise, detunings, n_pulses);
                let start = vec![Branch {
                    reported: [None; N_IONS],
                    rho: initial.clone(),
                }];
                evolve_branches(start, prefix, noise, &sn, options, &dims).map(|b| (w, sn, b))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            noise: noise.clone(),
            options: options.clone(),
            dims,
            nodes,
            input: input.clone(),
            mode: SequenceMode::FidelityCheck,
        })
    }

    /// Completes rows 30 to 33 with the given phase offset.
    pub fn finish(&self, phase_offset: f64) -> Result<ExactOutcome> {
        let sequence = build_sequence(&self.input, phase_offset, self.mode, &self.options);
        let tail = &sequence[reconstruction_start(&sequence)..];
        self.finish_tail(tail, phase_offset)
    }

    fn finish_tail(&self, tail: &[SequenceStep], phase_offset: f64) -> Result<ExactOutcome> {
        let dims = self.dims;
        let per_node = self
            .nodes
            .par_iter()
            .map(|(w, sn, branches)| {
                evolve_branches(
                    branches.clone(),
                    tail,
                    &self.noise,
                    sn,
                    &self.options,
                    &dims,
                )
                .map(|b| (*w, b))
            })
            .collect::<Result<Vec<_>>>()?;

        // Weighted sum over nodes, in node order, keyed by reported outcomes.
        let mut merged: Vec<Branch> = Vec::new();
        for (w, branches) in per_node {
            for b in branches {
                let scaled = b.rho.scale(w);
                if let Some(m) = merged.iter_mut().find(|m| m.reported == b.reported) {
                    m.rho += scaled;
                } else {
                    merged.push(Branch {
                        reported: b.reported,
                        rho: scaled,
                    });
                }
            }
        }
        let total = total_trace(&merged);
        let check_residuals = self.noise.is_noiseless();
        let mut sum = ComplexMatrix::zeros(2, 2);
        let mut results = Vec::new();
        for b in &merged {
            let qubit = self.target_qubit(&b.rho, check_residuals)?;
            sum += &qubit;
            let p = qubit.trace().re / total;
            if p > 1e-14 {
                let (Some(o1), Some(o2)) = (b.reported[SOURCE_ION], b.reported[PARTNER_ION]) else {
                    return Err(Error::InvalidArgument(
                        "sequence lacks PMT detections".into(),
                    ));
                };
                results.push(BranchResult {
                    branch: BellOutcome::from_outcomes(o1, o2),
                    probability: p,
                    rho: frame_corrected(&qubit, phase_offset)?,
                });
            }
        }
        results.sort_by_key(|r| r.branch as u8);
        Ok(ExactOutcome {
            rho: frame_corrected(&sum, phase_offset)?,
            branches: results,
        })
    }

    /// Ion 3's `{S, D}` block; the hidden level must be empty.
    fn target_qubit(&self, rho: &ComplexMatrix, check_motion: bool) -> Result<ComplexMatrix> {
        let dims = self.dims;
        let tr = rho.trace().re;
        if tr <= 0.0 {
            return Ok(ComplexMatrix::zeros(2, 2));
        }
        let ion3 = partial_trace_matrix(rho, &dims.subsystem_dims(), &[TARGET_ION])?;
        let hidden = ion3[(IonLevel::H.index(), IonLevel::H.index())].re / tr;
        if hidden > RESIDUAL_TOL {
            return Err(Error::Invariant(format!(
                "ion 3 ends with hidden population {hidden:.3e}"
            )));
        }
        if check_motion {
            let motion = partial_trace_matrix(rho, &dims.subsystem_dims(), &[N_IONS])?;
            let excited = 1.0 - motion[(0, 0)].re / tr;
            if excited > RESIDUAL_TOL {
                return Err(Error::Invariant(format!(
                    "motional mode ends with excited population {excited:.3e}"
                )));
            }
        }
        Ok(ion3.view((0, 0), (2, 2)).into_owned())
    }
}

/// Undoes the phase-offset frame: `rho_SD -> rho_SD e^{-i phi}`.
fn frame_corrected(qubit: &ComplexMatrix, phase_offset: f64) -> Result<DensityMatrix> {
    let mut m = qubit.clone();
    let rot = C64::from_polar(1.0, -phase_offset);
    m[(0, 1)] *= rot;
    m[(1, 0)] *= rot.conj();
    DensityMatrix::from_unnormalized(m)
}

/// Quadrature nodes `(weight, per-ion S-D detuning)` for the configured
/// dephasing model.
fn detuning_nodes(noise: &NoiseConfig) -> Result<Vec<(f64, Vec<f64>)>> {
    let mean = noise.detuning_mean_sd;
    if noise.detuning_sigma_sd == 0.0 {
        return Ok(vec![(1.0, vec![mean; N_IONS])]);
    }
    let (x, w) = gauss_hermite(noise.quadrature_order);
    let sigma = noise.detuning_sigma_sd;
    if noise.correlated_dephasing {
        Ok(x.iter()
            .zip(&w)
            .map(|(x, w)| (*w, vec![mean + sigma * x; N_IONS]))
            .collect())
    } else {
        let n = x.len();
        let mut nodes = Vec::with_capacity(n.pow(N_IONS as u32));
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    nodes.push((
                        w[i] * w[j] * w[k],
                        vec![
                            mean + sigma * x[i],
                            mean + sigma * x[j],
                            mean + sigma * x[k],
                        ],
                    ));
                }
            }
        }
        Ok(nodes)
    }
}

/// State of ion 3 after teleportation (infinite statistics).
pub fn run_exact(
    input: &InputStateSpec,
    phase_offset: f64,
    noise: &NoiseConfig,
    options: &ProtocolOptions,
) -> Result<DensityMatrix> {
    Ok(ExactRun::prepare(input, noise, options)?
        .finish(phase_offset)?
        .rho)
}

/// Like [`run_exact`], with the per-branch conditional states.
pub fn run_exact_branches(
    input: &InputStateSpec,
    phase_offset: f64,
    noise: &NoiseConfig,
    options: &ProtocolOptions,
) -> Result<ExactOutcome> {
    ExactRun::prepare(input, noise, options)?.finish(phase_offset)
}

/// Exact evolution of an arbitrary (e.g. modified) sequence.
pub fn run_exact_sequence(
    input: &InputStateSpec,
    sequence: &[SequenceStep],
    phase_offset: f64,
    noise: &NoiseConfig,
    options: &ProtocolOptions,
) -> Result<ExactOutcome> {
    let run = ExactRun::prepare_sequence(input, sequence, noise, options)?;
    run.finish_tail(&sequence[reconstruction_start(sequence)..], phase_offset)
}

/// Fidelity of ions 2 and 3 with `(|DS> + |SD>)/sqrt2` after the Bell
/// preparation and the stand-by wait (rows 4 to 7), averaged over the
/// detuning distribution.
pub fn bell_prep_fidelity(noise: &NoiseConfig, options: &ProtocolOptions) -> Result<f64> {
    noise.validate()?;
    options.validate()?;
    let dims = options.dims()?;
    let sequence = build_sequence(
        &InputStateSpec::six_canonical()[0],
        0.0,
        SequenceMode::FidelityCheck,
        options,
    );
    let prefix: Vec<SequenceStep> = sequence.into_iter().filter(|s| s.step_id <= 7).collect();
    let n_pulses = count_laser_pulses(&prefix);
    let mut initial = ComplexMatrix::zeros(dims.dim(), dims.dim());
    initial[(0, 0)] = C64::new(1.0, 0.0);
    let mut total = 0.0;
    for (w, detunings) in detuning_nodes(noise)? {
        let sn = ShotNoise::with_detunings(noise, detunings, n_pulses);
        let start = vec![Branch {
            reported: [None; N_IONS],
            rho: initial.clone(),
        }];
        let out = evolve_branches(start, &prefix, noise, &sn, options, &dims)?;
        let pair = partial_trace_matrix(
            &out[0].rho,
            &dims.subsystem_dims(),
            &[PARTNER_ION, TARGET_ION],
        )?;
        // |DS> + |SD> in the 3x3 level space of ions 2 and 3
        let (ds, sd) = (
            IonLevel::D.index() * 3 + IonLevel::S.index(),
            IonLevel::S.index() * 3 + IonLevel::D.index(),
        );
        let f = 0.5 * (pair[(ds, ds)] + pair[(sd, sd)] + pair[(ds, sd)] + pair[(sd, ds)]).re;
        total += w * f;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FidelityMode {
    Exact,
    Sampled { shots: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    pub value: f64,
    /// Binomial standard error; zero in exact mode.
    pub stderr: f64,
    pub shots: u64,
}

/// `F_tele = <psi| rho_exp |psi>`: exactly, or as the Bright frequency of the
/// final readout over sampled shots.
pub fn teleportation_fidelity(
    input: &InputStateSpec,
    phase_offset: f64,
    noise: &NoiseConfig,
    options: &ProtocolOptions,
    mode: FidelityMode,
) -> Result<FidelityEstimate> {
    match mode {
        FidelityMode::Exact => {
            let rho = run_exact(input, phase_offset, noise, options)?;
            Ok(FidelityEstimate {
                value: state_fidelity(&rho, &input.state())?,
                stderr: 0.0,
                shots: 0,
            })
        }
        FidelityMode::Sampled { shots, seed } => {
            if shots == 0 {
                return Err(Error::InvalidArgument(
                    "sampled fidelity needs shots > 0".into(),
                ));
            }
            let seq = build_sequence(input, phase_offset, SequenceMode::FidelityCheck, options);
            let records = run_shots(&seq, noise, options, seed, shots)?;
            let bright = records
                .iter()
                .filter(|r| r.final_outcome == Outcome::Bright)
                .count();
            let f = bright as f64 / shots as f64;
            Ok(FidelityEstimate {
                value: f,
                stderr: (f * (1.0 - f) / shots as f64).sqrt(),
                shots,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCalibration {
    /// Optimal offset in `[0, 2 pi)`.
    pub phase: f64,
    pub fidelity: f64,
    /// `(phi, fidelity)` on the uniform grid, including the `2 pi` endpoint.
    pub sweep: Vec<(f64, f64)>,
}

/// Maximizes the exact fidelity of `reference` over the phase offset: a grid
/// search followed by one golden-section refinement around the best point.
pub fn calibrate_phase(
    noise: &NoiseConfig,
    options: &ProtocolOptions,
    reference: &InputStateSpec,
    grid: usize,
) -> Result<PhaseCalibration> {
    if grid < 8 {
        return Err(Error::InvalidArgument(format!(
            "calibration grid {grid} < 8"
        )));
    }
    let run = ExactRun::prepare(reference, noise, options)?;
    let psi = reference.state();
    let fidelity = |phi: f64| -> Result<f64> { state_fidelity(&run.finish(phi)?.rho, &psi) };
    let step = 2.0 * PI / grid as f64;
    let sweep = (0..=grid)
        .map(|k| {
            let phi = k as f64 * step;
            fidelity(phi).map(|f| (phi, f))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut best_phi, mut best_f) =
        sweep[..grid]
            .iter()
            .copied()
            .fold((0.0, f64::NEG_INFINITY), |acc, (p, f)| {
                if f > acc.1 {
                    (p, f)
                } else {
                    acc
                }
            });

    // Golden-section search on [best - step, best + step].
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (best_phi - step, best_phi + step);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (fidelity(c)?, fidelity(d)?);
    for _ in 0..40 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = fidelity(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = fidelity(d)?;
        }
        if (b - a).abs() < 1e-9 {
            break;
        }
    }
    let refined = 0.5 * (a + b);
    let f_refined = fidelity(refined)?;
    if f_refined > best_f {
        best_phi = refined;
        best_f = f_refined;
    }
    Ok(PhaseCalibration {
        phase: best_phi.rem_euclid(2.0 * PI),
        fidelity: best_f,
        sweep,
    })
}

/// Tomography counts of ion 3 after teleporting `input`: `shots` runs of the
/// sequence per basis, or the exact outcome probabilities when `shots == 0`.
pub fn tomography_counts(
    input: &InputStateSpec,
    phase_offset: f64,
    noise: &NoiseConfig,
    options: &ProtocolOptions,
    shots: u64,
    seed: u64,
) -> Result<CountsTable> {
    if shots == 0 {
        // The basis pre-rotation commutes with the frame correction.
        let rho = run_exact(input, phase_offset, noise, options)?;
        return CountsTable::expected(rho.matrix(), 1.0);
    }
    let mut counts = CountsTable::new([[0.0; 2]; 3])?;
    for (k, basis) in Basis::ALL.into_iter().enumerate() {
        let seq = build_sequence(
            input,
            phase_offset,
            SequenceMode::Tomography(basis),
            options,
        );
        let records = run_shots(&seq, noise, options, derive_seed(seed, k as u64), shots)?;
        let bright = records
            .iter()
            .filter(|r| r.final_outcome == Outcome::Bright)
            .count() as u64;
        counts.set(basis, Outcome::Bright, bright as f64)?;
        counts.set(basis, Outcome::Dark, (shots - bright) as f64)?;
    }
    Ok(counts)
}

/// Six-state average fidelity of measure-and-resend in the Z basis.
pub fn classical_baseline() -> f64 {
    let z_basis = [PureState::basis(2, 0), PureState::basis(2, 1)];
    let inputs = InputStateSpec::six_canonical();
    let total: f64 = inputs
        .iter()
        .map(|spec| classical_fidelity(&spec.state(), &z_basis))
        .sum();
    total / inputs.len() as f64
}

/// Fidelity of measure-and-resend in `basis` for one pure input.
pub fn classical_fidelity(psi: &PureState, basis: &[PureState]) -> f64 {
    basis
        .iter()
        .map(|e| {
            let overlap = (e.amplitudes().adjoint() * psi.amplitudes())[(0, 0)].norm_sqr();
            // outcome probability times the fidelity of the resent eigenstate
            overlap * overlap
        })
        .sum()
}
