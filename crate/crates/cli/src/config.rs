//! Experiment configuration: defaults, JSON file, command-line overrides.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use teleport_core::protocol::InputStateSpec;
use teleport_core::{NoiseConfig, ProtocolOptions};

use crate::error::CliError;

/// Every configuration key with its unit, shown by `--help`.
pub const CONFIG_KEYS: &str = "\
CONFIG FILE KEYS (JSON; unknown keys are rejected; flags override the file):
  seed                     integer, master seed of all random streams
  shots                    integer, repetitions per input (teleport) or per basis (tomography)
  exact                    bool, infinite-statistics mode (same as --exact)
  fock_cutoff              integer, number of motional levels kept (n = 0 .. cutoff-1)
  leakage_budget           probability, tolerated population of the top motional level
  phase_offset             radians, or \"calibrate\" to optimize it first
  calibration_input        label of the reference input for \"calibrate\" (default psi1)
  calibration_grid         integer, grid points over [0, 2 pi) before refinement (>= 8)
  inputs                   \"six-canonical\" or a list of {label, theta_chi [rad], phi_chi [rad]}
  output_dir               path, directory for all output files
  mode                     teleport|state-tomo|proc-tomo|calibrate|baseline|export-sequence (optional check)
  standby_wait_us          microseconds, stand-by wait after the Bell preparation
  rephase_wait_us          microseconds, rephasing wait of the spin echo
  spin_echo                bool, false moves the echo pulse after unhiding and drops the wait
  tomography_inputs        ideal|reconstructed, input states used for process tomography
  bootstrap_resamples      integer, parametric bootstrap resamples for error bars
  mesh_resolution          integer, latitude/longitude divisions of the ellipsoid mesh (>= 8)
  workers                  integer, worker threads (default: available parallelism)
  noise.detuning_sigma_sd  rad/us, std-dev of the quasi-static S-D detuning
  noise.detuning_mean_sd   rad/us, mean of the S-D detuning
  noise.dephasing_ratio_h  dimensionless, D-H dephasing rate relative to S-D
  noise.correlated_dephasing  bool, one detuning shared by all ions
  noise.amplitude_error_sigma dimensionless, relative std-dev of pulse areas (shots only)
  noise.depolarizing_per_pulse probability, per carrier/sideband pulse on the addressed ion
  noise.detection_error    probability, flip of a reported PMT outcome
  noise.quadrature_order   integer, Gauss-Hermite nodes for exact dephasing averages
  noise.pulse_durations.carrier_pi_us   microseconds per carrier pi pulse
  noise.pulse_durations.sideband_pi_us  microseconds per blue-sideband pi pulse
  noise.pulse_durations.hide_pi_us      microseconds per hide pi pulse
  noise.pulse_durations.detection_us    microseconds per PMT detection
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseKeyword {
    #[serde(rename = "calibrate")]
    Calibrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhaseOffset {
    Fixed(f64),
    Keyword(PhaseKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputsKeyword {
    #[serde(rename = "six-canonical")]
    SixCanonical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Inputs {
    Keyword(InputsKeyword),
    List(Vec<InputStateSpec>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Teleport,
    StateTomo,
    ProcTomo,
    Calibrate,
    Baseline,
    ExportSequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TomographyInputs {
    Ideal,
    Reconstructed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub shots: u64,
    pub exact: bool,
    pub fock_cutoff: usize,
    pub leakage_budget: f64,
    pub phase_offset: PhaseOffset,
    pub calibration_input: String,
    pub calibration_grid: usize,
    pub noise: NoiseConfig,
    pub inputs: Inputs,
    pub output_dir: PathBuf,
    pub mode: Option<Mode>,
    pub standby_wait_us: f64,
    pub rephase_wait_us: f64,
    pub spin_echo: bool,
    pub tomography_inputs: TomographyInputs,
    pub bootstrap_resamples: usize,
    pub mesh_resolution: usize,
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let protocol = ProtocolOptions::default();
        Self {
            seed: 1,
            shots: 10_000,
            exact: false,
            fock_cutoff: protocol.fock_cutoff,
            leakage_budget: protocol.leakage_budget,
            phase_offset: PhaseOffset::Fixed(0.0),
            calibration_input: "psi1".into(),
            calibration_grid: 32,
            noise: NoiseConfig::default(),
            inputs: Inputs::Keyword(InputsKeyword::SixCanonical),
            output_dir: PathBuf::from("out"),
            mode: None,
            standby_wait_us: protocol.standby_wait_us,
            rephase_wait_us: protocol.rephase_wait_us,
            spin_echo: protocol.spin_echo,
            tomography_inputs: TomographyInputs::Reconstructed,
            bootstrap_resamples: 200,
            mesh_resolution: 24,
            workers: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub shots: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub exact: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("{origin}:{}:{}: {e}", e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn resolve(
        path: Option<&Path>,
        overrides: &Overrides,
        mode: Mode,
    ) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(shots) = overrides.shots {
            config.shots = shots;
        }
        if let Some(out) = &overrides.out {
            config.output_dir = out.clone();
        }
        if overrides.workers.is_some() {
            config.workers = overrides.workers;
        }
        config.exact |= overrides.exact;
        if let Some(m) = config.mode {
            if m != mode {
                return Err(CliError::Config(format!(
                    "mode: config is for {m:?} but the {mode:?} subcommand was run"
                )));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, msg: String| Err(CliError::Config(format!("{key}: {msg}")));
        if let Err(e) = self.noise.validate() {
            return bad("noise", e.to_string());
        }
        if let Err(e) = self.protocol_options().validate() {
            return bad("fock_cutoff/leakage_budget/waits", e.to_string());
        }
        if !self.exact && self.shots == 0 {
            return bad("shots", "must be > 0 unless exact".into());
        }
        if let PhaseOffset::Fixed(phi) = self.phase_offset {
            if !phi.is_finite() {
                return bad("phase_offset", format!("{phi} is not finite"));
            }
        }
        if self.calibration_grid < 8 {
            return bad("calibration_grid", format!("{} < 8", self.calibration_grid));
        }
        if self.mesh_resolution < 8 {
            return bad("mesh_resolution", format!("{} < 8", self.mesh_resolution));
        }
        if self.workers == Some(0) {
            return bad("workers", "must be >= 1".into());
        }
        if self.exact && self.noise.amplitude_error_sigma > 0.0 {
            return bad(
                "noise.amplitude_error_sigma",
                "pulse-area errors have no exact channel; run with shots".into(),
            );
        }
        let inputs = self.input_specs();
        if inputs.is_empty() {
            return bad("inputs", "empty list".into());
        }
        let mut seen = BTreeSet::new();
        for spec in &inputs {
            let ok = spec
                .label
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ok {
                return bad(
                    "inputs",
                    format!("label {:?} must be [A-Za-z0-9_-]", spec.label),
                );
            }
            if !seen.insert(spec.label.clone()) {
                return bad("inputs", format!("duplicate label {:?}", spec.label));
            }
            if !spec.theta_chi.is_finite() || !spec.phi_chi.is_finite() {
                return bad("inputs", format!("{}: angles must be finite", spec.label));
            }
        }
        if self.calibration_spec().is_none() {
            return bad(
                "calibration_input",
                format!(
                    "{:?} is neither a configured nor a canonical input",
                    self.calibration_input
                ),
            );
        }
        Ok(())
    }

    pub fn protocol_options(&self) -> ProtocolOptions {
        ProtocolOptions {
            fock_cutoff: self.fock_cutoff,
            leakage_budget: self.leakage_budget,
            standby_wait_us: self.standby_wait_us,
            rephase_wait_us: self.rephase_wait_us,
            spin_echo: self.spin_echo,
        }
    }

    /// Configured inputs; unlabeled list entries become `input<k>`.
    pub fn input_specs(&self) -> Vec<InputStateSpec> {
        match &self.inputs {
            Inputs::Keyword(InputsKeyword::SixCanonical) => InputStateSpec::six_canonical(),
            Inputs::List(list) => list
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    let mut s = s.clone();
                    if s.label.is_empty() {
                        s.label = format!("input{}", k + 1);
                    }
                    s
                })
                .collect(),
        }
    }

    pub fn calibration_spec(&self) -> Option<InputStateSpec> {
        self.input_specs()
            .into_iter()
            .chain(InputStateSpec::six_canonical())
            .find(|s| s.label == self.calibration_input)
    }

    /// Shots per run, `0` in exact mode.
    pub fn effective_shots(&self) -> u64 {
        if self.exact {
            0
        } else {
            self.shots
        }
    }
}
