//! Subcommand implementations. Every command writes its files into the
//! configured output directory and prints a short summary on stdout.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use teleport_core::noise::derive_seed;
use teleport_core::protocol::{
    build_sequence, calibrate_phase, classical_baseline, classical_fidelity, format_sequence,
    teleportation_fidelity, tomography_counts, FidelityMode, InputStateSpec, PhaseCalibration,
    SequenceMode,
};
use teleport_core::quantum::{bloch_vector, state_fidelity, MatrixRecord};
use teleport_core::tomography::{
    affine_decompose, average_fidelity, avg_from_process_fidelity, bootstrap_process,
    component_std, ellipsoid_mesh, mle_process_with, mle_state_with, process_fidelity,
    simulate_state_tomography, MleOptions, ProcessEstimate, ProcessMleOptions, StateEstimate,
};
use teleport_core::{
    AffineMap, Basis, CountsTable, DensityMatrix, NoiseConfig, ProcessMatrix, PureState,
};

use crate::config::{ExperimentConfig, PhaseOffset, TomographyInputs};
use crate::error::CliError;
use crate::output::{CsvTable, OutputDir};

/// Random-stream tags; each input `k` adds `k` to its tag.
const TAG_TELEPORT: u64 = 0x100;
const TAG_OUTPUT_TOMOGRAPHY: u64 = 0x200;
const TAG_INPUT_TOMOGRAPHY: u64 = 0x300;
const TAG_BOOTSTRAP: u64 = 0x400;

/// Agreement required between the state-averaged and the process fidelity.
pub const FIDELITY_ROUTE_TOL: f64 = 0.02;

const LEVEL_LABELS: [&str; 2] = ["S", "D"];
const PAULI_LABELS: [&str; 4] = ["I", "X", "Y", "Z"];

/// Phase offset actually used by a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseChoice {
    pub phase_offset: f64,
    /// Reference input label when the offset was calibrated.
    pub calibrated_on: Option<String>,
}

fn exact_noise(config: &ExperimentConfig) -> NoiseConfig {
    // Pulse-area errors have no exact channel; they are zero-mean and leave
    // the optimal offset unchanged to first order.
    NoiseConfig {
        amplitude_error_sigma: 0.0,
        ..config.noise.clone()
    }
}

fn run_calibration(
    config: &ExperimentConfig,
) -> Result<(InputStateSpec, PhaseCalibration), CliError> {
    let reference = config
        .calibration_spec()
        .ok_or_else(|| CliError::Config("calibration_input: unknown label".into()))?;
    if config.noise.amplitude_error_sigma > 0.0 {
        log::warn!("calibrating without pulse-area errors (no exact channel)");
    }
    let cal = calibrate_phase(
        &exact_noise(config),
        &config.protocol_options(),
        &reference,
        config.calibration_grid,
    )?;
    Ok((reference, cal))
}

fn resolve_phase(config: &ExperimentConfig) -> Result<PhaseChoice, CliError> {
    match config.phase_offset {
        PhaseOffset::Fixed(phi) => Ok(PhaseChoice {
            phase_offset: phi,
            calibrated_on: None,
        }),
        PhaseOffset::Keyword(_) => {
            let (reference, cal) = run_calibration(config)?;
            log::info!(
                "calibrated phase offset {} on {}",
                cal.phase,
                reference.label
            );
            Ok(PhaseChoice {
                phase_offset: cal.phase,
                calibrated_on: Some(reference.label),
            })
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

// ---------------------------------------------------------------- teleport

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleportRow {
    pub input_label: String,
    pub theta_chi: f64,
    pub phi_chi: f64,
    pub f_exact: Option<f64>,
    pub f_sampled: Option<f64>,
    pub stderr: Option<f64>,
}

impl TeleportRow {
    /// Sampled value when available, exact otherwise.
    pub fn fidelity(&self) -> f64 {
        self.f_sampled.or(self.f_exact).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleportReport {
    pub phase: PhaseChoice,
    pub seed: u64,
    pub shots: u64,
    pub inputs: Vec<TeleportRow>,
    pub mean_fidelity_exact: Option<f64>,
    pub mean_fidelity_sampled: Option<f64>,
    pub mean_fidelity_stderr: Option<f64>,
    /// Largest minus smallest per-input fidelity.
    pub fidelity_span: f64,
    pub classical_baseline: f64,
    pub exceeds_classical: bool,
}

pub fn teleport(config: &ExperimentConfig) -> Result<TeleportReport, CliError> {
    let out = OutputDir::create(&config.output_dir)?;
    let phase = resolve_phase(config)?;
    let phi = phase.phase_offset;
    let options = config.protocol_options();
    let exact_available = config.noise.amplitude_error_sigma == 0.0;
    let shots = config.effective_shots();

    let mut rows = Vec::new();
    for (k, spec) in config.input_specs().into_iter().enumerate() {
        let f_exact = if exact_available {
            Some(
                teleportation_fidelity(&spec, phi, &config.noise, &options, FidelityMode::Exact)?
                    .value,
            )
        } else {
            None
        };
        let sampled = if shots > 0 {
            let mode = FidelityMode::Sampled {
                shots,
                seed: derive_seed(config.seed, TAG_TELEPORT + k as u64),
            };
            Some(teleportation_fidelity(
                &spec,
                phi,
                &config.noise,
                &options,
                mode,
            )?)
        } else {
            None
        };
        rows.push(TeleportRow {
            input_label: spec.label.clone(),
            theta_chi: spec.theta_chi,
            phi_chi: spec.phi_chi,
            f_exact,
            f_sampled: sampled.map(|s| s.value),
            stderr: sampled.map(|s| s.stderr),
        });
    }

    let n = rows.len() as f64;
    let collect =
        |f: fn(&TeleportRow) -> Option<f64>| -> Option<Vec<f64>> { rows.iter().map(f).collect() };
    let mean_exact = collect(|r| r.f_exact).map(|v| mean(&v));
    let mean_sampled = collect(|r| r.f_sampled).map(|v| mean(&v));
    let mean_stderr =
        collect(|r| r.stderr).map(|v| v.iter().map(|s| s * s).sum::<f64>().sqrt() / n);
    let per_input: Vec<f64> = rows.iter().map(TeleportRow::fidelity).collect();
    let span = per_input.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - per_input.iter().cloned().fold(f64::INFINITY, f64::min);
    let baseline = classical_baseline();
    let headline = mean_sampled.or(mean_exact).unwrap_or(f64::NAN);

    let mut table = CsvTable::new(&[
        "input_label",
        "theta_chi",
        "phi_chi",
        "f_exact",
        "f_sampled",
        "stderr",
    ]);
    let mut bars = CsvTable::new(&["input_label", "fidelity", "error", "classical_baseline"]);
    for r in &rows {
        table.push(vec![
            r.input_label.clone().into(),
            r.theta_chi.into(),
            r.phi_chi.into(),
            r.f_exact.into(),
            r.f_sampled.into(),
            r.stderr.into(),
        ]);
        bars.push(vec![
            r.input_label.clone().into(),
            r.fidelity().into(),
            r.stderr.unwrap_or(0.0).into(),
            baseline.into(),
        ]);
    }
    let report = TeleportReport {
        phase,
        seed: config.seed,
        shots,
        inputs: rows,
        mean_fidelity_exact: mean_exact,
        mean_fidelity_sampled: mean_sampled,
        mean_fidelity_stderr: mean_stderr,
        fidelity_span: span,
        classical_baseline: baseline,
        exceeds_classical: headline > baseline,
    };
    out.write_csv("fidelities.csv", &table)?;
    out.write_csv("fidelity_bars.csv", &bars)?;
    out.write_json("teleport_report.json", &report)?;

    for r in &report.inputs {
        println!(
            "{:<8} F = {:.4}{}",
            r.input_label,
            r.fidelity(),
            r.stderr.map(|s| format!(" +/- {s:.4}")).unwrap_or_default()
        );
    }
    match mean_stderr {
        Some(s) => println!("mean fidelity {headline:.4} +/- {s:.4}"),
        None => println!("mean fidelity {headline:.4} (exact)"),
    }
    println!(
        "classical baseline {baseline:.4}: {}",
        if report.exceeds_classical {
            "exceeded"
        } else {
            "not exceeded"
        }
    );
    Ok(report)
}

// -------------------------------------------------------------- state-tomo

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub label: String,
    pub theta_chi: f64,
    pub phi_chi: f64,
    pub rho: MatrixRecord,
    pub bloch: [f64; 3],
    /// `<psi| rho |psi>` against the ideal input.
    pub fidelity: f64,
    pub trace_distance: f64,
    pub purity: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl StateRecord {
    fn new(spec: &InputStateSpec, est: &StateEstimate) -> Result<Self, CliError> {
        let b = bloch_vector(&est.rho)?;
        Ok(Self {
            label: spec.label.clone(),
            theta_chi: spec.theta_chi,
            phi_chi: spec.phi_chi,
            rho: MatrixRecord::from(est.rho.matrix()),
            bloch: [b.x, b.y, b.z],
            fidelity: state_fidelity(&est.rho, &spec.state())?,
            trace_distance: est.rho.trace_distance(&spec.density())?,
            purity: est.rho.purity(),
            log_likelihood: est.log_likelihood,
            iterations: est.iterations,
            converged: est.converged,
        })
    }

    pub fn density(&self) -> Result<DensityMatrix, CliError> {
        Ok(DensityMatrix::new(self.rho.to_matrix()?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTomoReport {
    pub phase: PhaseChoice,
    pub seed: u64,
    pub shots_per_basis: u64,
    pub states: Vec<StateRecord>,
}

/// Output-state tomography of every configured input.
fn output_tomography(
    config: &ExperimentConfig,
    phi: f64,
) -> Result<Vec<(InputStateSpec, CountsTable, StateEstimate)>, CliError> {
    let options = config.protocol_options();
    let noise = if config.exact {
        exact_noise(config)
    } else {
        config.noise.clone()
    };
    config
        .input_specs()
        .into_iter()
        .enumerate()
        .map(|(k, spec)| {
            let seed = derive_seed(config.seed, TAG_OUTPUT_TOMOGRAPHY + k as u64);
            let counts =
                tomography_counts(&spec, phi, &noise, &options, config.effective_shots(), seed)?;
            let est = mle_state_with(&counts, &MleOptions::default())?;
            Ok((spec, counts, est))
        })
        .collect()
}

fn write_state(
    out: &OutputDir,
    record: &StateRecord,
    counts: &CountsTable,
) -> Result<(), CliError> {
    // The density-matrix invariants are checked before anything is written.
    let rho = record.density()?;
    let label = &record.label;
    let mut buf = Vec::new();
    counts.write_csv(&mut buf)?;
    out.write_text(
        &format!("counts_{label}.csv"),
        std::str::from_utf8(&buf).expect("csv is utf-8"),
    )?;
    out.write_json(&format!("rho_{label}.json"), record)?;
    let mut bars = CsvTable::new(&["row", "col", "re", "im"]);
    for (i, ri) in LEVEL_LABELS.iter().enumerate() {
        for (j, cj) in LEVEL_LABELS.iter().enumerate() {
            let z = rho.matrix()[(i, j)];
            bars.push(vec![(*ri).into(), (*cj).into(), z.re.into(), z.im.into()]);
        }
    }
    out.write_csv(&format!("rho_bars_{label}.csv"), &bars)?;
    Ok(())
}

fn non_converged(labels: Vec<String>, what: &str) -> Result<(), CliError> {
    if labels.is_empty() {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!(
            "{what}: {}",
            labels.join(", ")
        )))
    }
}

pub fn state_tomo(config: &ExperimentConfig) -> Result<StateTomoReport, CliError> {
    let out = OutputDir::create(&config.output_dir)?;
    let phase = resolve_phase(config)?;
    let results = output_tomography(config, phase.phase_offset)?;
    let mut states = Vec::new();
    for (spec, counts, est) in &results {
        let record = StateRecord::new(spec, est)?;
        write_state(&out, &record, counts)?;
        states.push(record);
    }
    let report = StateTomoReport {
        phase,
        seed: config.seed,
        shots_per_basis: config.effective_shots(),
        states,
    };
    out.write_json("state_tomo_report.json", &report)?;
    for s in &report.states {
        println!(
            "{:<8} F = {:.4}  D = {:.4}  bloch = ({:+.3}, {:+.3}, {:+.3})",
            s.label, s.fidelity, s.trace_distance, s.bloch[0], s.bloch[1], s.bloch[2]
        );
    }
    non_converged(
        report
            .states
            .iter()
            .filter(|s| !s.converged)
            .map(|s| s.label.clone())
            .collect(),
        "state MLE",
    )?;
    Ok(report)
}

// --------------------------------------------------------------- proc-tomo

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiRecord {
    pub process: ProcessMatrix,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Bootstrap standard deviations of the reported quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapErrors {
    pub resamples: usize,
    pub chi_ii: f64,
    pub f_proc: f64,
    pub f_avg: f64,
    pub s_eigenvalues: [f64; 3],
    pub b: [f64; 3],
    pub rotation_angle_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcTomoReport {
    pub phase: PhaseChoice,
    pub seed: u64,
    pub shots_per_basis: u64,
    pub tomography_inputs: TomographyInputs,
    pub chi_ii: f64,
    pub f_proc: f64,
    /// Six-state average of the reconstructed channel.
    pub f_avg_channel: f64,
    /// `(2 F_proc + 1) / 3`.
    pub f_avg_from_f_proc: f64,
    /// Mean fidelity of the reconstructed output states with the inputs.
    pub f_avg_states: f64,
    pub route_difference: f64,
    pub routes_agree: bool,
    pub s_eigenvalues: [f64; 3],
    pub rotation_angle_deg: Option<f64>,
    pub det_o: f64,
    pub b: [f64; 3],
    pub bootstrap: Option<BootstrapErrors>,
    pub mle_iterations: usize,
    pub mle_converged: bool,
}

fn input_states(
    config: &ExperimentConfig,
) -> Result<Vec<(DensityMatrix, Option<StateEstimate>)>, CliError> {
    config
        .input_specs()
        .into_iter()
        .enumerate()
        .map(|(k, spec)| {
            let ideal = spec.density();
            match config.tomography_inputs {
                TomographyInputs::Ideal => Ok((ideal, None)),
                TomographyInputs::Reconstructed => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                        config.seed,
                        TAG_INPUT_TOMOGRAPHY + k as u64,
                    ));
                    let counts =
                        simulate_state_tomography(&ideal, config.effective_shots(), &mut rng)?;
                    let est = mle_state_with(&counts, &MleOptions::default())?;
                    Ok((est.rho.clone(), Some(est)))
                }
            }
        })
        .collect()
}

fn summary(process: &ProcessMatrix) -> Result<[f64; 10], CliError> {
    let a = affine_decompose(process);
    let f_proc = process_fidelity(process, &ProcessMatrix::identity());
    Ok([
        process.chi()[(0, 0)].re,
        f_proc,
        avg_from_process_fidelity(f_proc)?,
        a.s_eigenvalues[0],
        a.s_eigenvalues[1],
        a.s_eigenvalues[2],
        a.b[0],
        a.b[1],
        a.b[2],
        a.rotation_angle_deg.unwrap_or(f64::NAN),
    ])
}

fn bootstrap_errors(
    config: &ExperimentConfig,
    inputs: &[DensityMatrix],
    outputs: &[CountsTable],
    estimate: &ProcessEstimate,
) -> Result<Option<BootstrapErrors>, CliError> {
    if config.exact || config.bootstrap_resamples < 2 {
        return Ok(None);
    }
    let samples = bootstrap_process(
        inputs,
        outputs,
        &estimate.process,
        config.bootstrap_resamples,
        derive_seed(config.seed, TAG_BOOTSTRAP),
    )?;
    let values = samples.iter().map(summary).collect::<Result<Vec<_>, _>>()?;
    let angles: Vec<[f64; 1]> = values
        .iter()
        .filter(|v| v[9].is_finite())
        .map(|v| [v[9]])
        .collect();
    let std = component_std(
        &values
            .iter()
            .map(|v| {
                let mut head = [0.0; 9];
                head.copy_from_slice(&v[..9]);
                head
            })
            .collect::<Vec<_>>(),
    );
    Ok(Some(BootstrapErrors {
        resamples: samples.len(),
        chi_ii: std[0],
        f_proc: std[1],
        f_avg: std[2],
        s_eigenvalues: [std[3], std[4], std[5]],
        b: [std[6], std[7], std[8]],
        rotation_angle_deg: (angles.len() >= 2).then(|| component_std(&angles)[0]),
    }))
}

pub fn proc_tomo(config: &ExperimentConfig) -> Result<ProcTomoReport, CliError> {
    let out = OutputDir::create(&config.output_dir)?;
    let phase = resolve_phase(config)?;
    let inputs = input_states(config)?;
    let results = output_tomography(config, phase.phase_offset)?;
    let input_rhos: Vec<DensityMatrix> = inputs.iter().map(|(r, _)| r.clone()).collect();
    let outputs: Vec<CountsTable> = results.iter().map(|(_, c, _)| c.clone()).collect();
    let estimate = mle_process_with(&input_rhos, &outputs, &ProcessMleOptions::default())?;
    let process = &estimate.process;
    process.validate()?;

    let map = affine_decompose(process);
    let f_proc = process_fidelity(process, &ProcessMatrix::identity());
    let f_avg_from_f_proc = avg_from_process_fidelity(f_proc)?;
    let f_avg_states = mean(
        &results
            .iter()
            .map(|(spec, _, est)| state_fidelity(&est.rho, &spec.state()))
            .collect::<Result<Vec<_>, _>>()?,
    );
    let route_difference = (f_avg_states - f_avg_from_f_proc).abs();
    let bootstrap = bootstrap_errors(config, &input_rhos, &outputs, &estimate)?;

    for (spec, counts, est) in &results {
        write_state(&out, &StateRecord::new(spec, est)?, counts)?;
    }
    let mut input_records = Vec::new();
    for (spec, (_, est)) in config.input_specs().iter().zip(&inputs) {
        if let Some(est) = est {
            input_records.push(StateRecord::new(spec, est)?);
        }
    }
    if !input_records.is_empty() {
        out.write_json("input_states.json", &input_records)?;
    }
    out.write_json(
        "chi.json",
        &ChiRecord {
            process: process.clone(),
            log_likelihood: estimate.log_likelihood,
            iterations: estimate.iterations,
            converged: estimate.converged,
        },
    )?;
    let mut chi_abs = CsvTable::new(&["row", "col", "abs", "re", "im"]);
    for (i, ri) in PAULI_LABELS.iter().enumerate() {
        for (j, cj) in PAULI_LABELS.iter().enumerate() {
            let z = process.chi()[(i, j)];
            chi_abs.push(vec![
                (*ri).into(),
                (*cj).into(),
                z.norm().into(),
                z.re.into(),
                z.im.into(),
            ]);
        }
    }
    out.write_csv("chi_abs.csv", &chi_abs)?;
    out.write_json::<AffineMap>("affine.json", &map)?;
    let mut mesh = CsvTable::new(&["x", "y", "z"]);
    for p in ellipsoid_mesh(&map, config.mesh_resolution)? {
        mesh.push(vec![p.x.into(), p.y.into(), p.z.into()]);
    }
    out.write_csv("ellipsoid.csv", &mesh)?;
    let mut points = CsvTable::new(&[
        "input_label",
        "in_x",
        "in_y",
        "in_z",
        "out_x",
        "out_y",
        "out_z",
    ]);
    for ((spec, _, est), (rho_in, _)) in results.iter().zip(&inputs) {
        let a = bloch_vector(rho_in)?;
        let b = bloch_vector(&est.rho)?;
        points.push(vec![
            spec.label.clone().into(),
            a.x.into(),
            a.y.into(),
            a.z.into(),
            b.x.into(),
            b.y.into(),
            b.z.into(),
        ]);
    }
    out.write_csv("bloch_points.csv", &points)?;

    let report = ProcTomoReport {
        phase,
        seed: config.seed,
        shots_per_basis: config.effective_shots(),
        tomography_inputs: config.tomography_inputs,
        chi_ii: process.chi()[(0, 0)].re,
        f_proc,
        f_avg_channel: average_fidelity(process),
        f_avg_from_f_proc,
        f_avg_states,
        route_difference,
        routes_agree: route_difference <= FIDELITY_ROUTE_TOL,
        s_eigenvalues: map.s_eigenvalues,
        rotation_angle_deg: map.rotation_angle_deg,
        det_o: map.det_o,
        b: map.b,
        bootstrap,
        mle_iterations: estimate.iterations,
        mle_converged: estimate.converged,
    };
    out.write_json("proc_tomo_report.json", &report)?;

    let err = |f: fn(&BootstrapErrors) -> f64| {
        report
            .bootstrap
            .as_ref()
            .map(|b| format!(" +/- {:.4}", f(b)))
            .unwrap_or_default()
    };
    println!("chi_II = {:.4}{}", report.chi_ii, err(|b| b.chi_ii));
    println!("F_proc = {:.4}{}", report.f_proc, err(|b| b.f_proc));
    println!(
        "mean fidelity: channel {:.4}, (2F_proc+1)/3 {:.4}, states {:.4} (|diff| {:.4})",
        report.f_avg_channel,
        report.f_avg_from_f_proc,
        report.f_avg_states,
        report.route_difference
    );
    println!(
        "S eigenvalues = ({:.3}, {:.3}, {:.3}), rotation = {}, b = ({:+.3}, {:+.3}, {:+.3})",
        map.s_eigenvalues[0],
        map.s_eigenvalues[1],
        map.s_eigenvalues[2],
        map.rotation_angle_deg
            .map_or("reflection".to_string(), |a| format!("{a:.2} deg")),
        map.b[0],
        map.b[1],
        map.b[2]
    );
    if !report.routes_agree {
        log::warn!(
            "state and process fidelities differ by {route_difference:.4} > {FIDELITY_ROUTE_TOL}"
        );
    }

    let mut stalled: Vec<String> = results
        .iter()
        .filter(|(_, _, e)| !e.converged)
        .map(|(s, _, _)| format!("output {}", s.label))
        .collect();
    stalled.extend(
        config
            .input_specs()
            .iter()
            .zip(&inputs)
            .filter(|(_, (_, e))| e.as_ref().is_some_and(|e| !e.converged))
            .map(|(s, _)| format!("input {}", s.label)),
    );
    if !estimate.converged {
        stalled.push(format!("process ({} iterations)", estimate.iterations));
    }
    non_converged(stalled, "MLE")?;
    Ok(report)
}

// --------------------------------------------------------------- calibrate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub reference: InputStateSpec,
    pub grid: usize,
    pub phase_offset: f64,
    pub fidelity: f64,
}

pub fn calibrate(config: &ExperimentConfig) -> Result<CalibrationReport, CliError> {
    let out = OutputDir::create(&config.output_dir)?;
    let (reference, cal) = run_calibration(config)?;
    let mut sweep = CsvTable::new(&["phi", "fidelity"]);
    for &(phi, f) in &cal.sweep {
        sweep.push(vec![phi.into(), f.into()]);
    }
    out.write_csv("phase_sweep.csv", &sweep)?;
    let report = CalibrationReport {
        reference,
        grid: config.calibration_grid,
        phase_offset: cal.phase,
        fidelity: cal.fidelity,
    };
    out.write_json("calibration.json", &report)?;
    println!(
        "phase offset {:.6} rad gives F = {:.6} on {}",
        report.phase_offset, report.fidelity, report.reference.label
    );
    Ok(report)
}

// ---------------------------------------------------------------- baseline

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEntry {
    pub label: String,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    /// Six-state average of measure-and-resend in the Z basis.
    pub classical_baseline: f64,
    pub per_input: Vec<BaselineEntry>,
}

pub fn baseline(config: &ExperimentConfig) -> Result<BaselineReport, CliError> {
    let out = OutputDir::create(&config.output_dir)?;
    let z_basis = [PureState::basis(2, 0), PureState::basis(2, 1)];
    let report = BaselineReport {
        classical_baseline: classical_baseline(),
        per_input: config
            .input_specs()
            .into_iter()
            .map(|s| BaselineEntry {
                fidelity: classical_fidelity(&s.state(), &z_basis),
                label: s.label,
            })
            .collect(),
    };
    out.write_json("baseline.json", &report)?;
    for e in &report.per_input {
        println!("{:<8} F = {:.4}", e.label, e.fidelity);
    }
    println!("classical baseline {:.6}", report.classical_baseline);
    Ok(report)
}

// --------------------------------------------------------- export-sequence

pub fn export_sequence(
    config: &ExperimentConfig,
    input: Option<&str>,
    basis: Option<Basis>,
) -> Result<String, CliError> {
    let out = OutputDir::create(&config.output_dir)?;
    let specs = config.input_specs();
    let spec = match input {
        None => specs[0].clone(),
        Some(label) => specs
            .into_iter()
            .chain(InputStateSpec::six_canonical())
            .find(|s| s.label == label)
            .ok_or_else(|| CliError::Config(format!("--input: unknown label {label:?}")))?,
    };
    let phase = resolve_phase(config)?;
    let mode = basis.map_or(SequenceMode::FidelityCheck, SequenceMode::Tomography);
    let listing = format_sequence(&build_sequence(
        &spec,
        phase.phase_offset,
        mode,
        &config.protocol_options(),
    ));
    out.write_text("sequence.txt", &listing)?;
    print!("{listing}");
    Ok(listing)
}
