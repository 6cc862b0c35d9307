use std::f64::consts::PI;

use teleport_core::protocol::{
    bell_prep_fidelity, build_sequence, calibrate_phase, classical_baseline, format_sequence,
    run_exact, run_exact_branches, run_exact_sequence, run_shots, teleportation_fidelity,
    tomography_counts, Action, BellOutcome, FidelityMode, InputStateSpec, ProtocolOptions,
    SequenceMode, SequenceStep,
};
use teleport_core::quantum::{max_abs_diff, pauli, state_fidelity, ComplexMatrix};
use teleport_core::tomography::mle_state;
use teleport_core::{NoiseConfig, Outcome};

fn noisy_options() -> ProtocolOptions {
    ProtocolOptions {
        fock_cutoff: 6,
        leakage_budget: 1e-6,
        ..ProtocolOptions::default()
    }
}

fn calibrated_noise() -> NoiseConfig {
    NoiseConfig {
        depolarizing_per_pulse: 0.025,
        detuning_sigma_sd: 0.0006,
        ..NoiseConfig::default()
    }
}

#[test]
fn sequence_listing_mirrors_the_pulse_table() {
    let seq = build_sequence(
        &InputStateSpec::six_canonical()[0],
        0.0,
        SequenceMode::FidelityCheck,
        &ProtocolOptions::default(),
    );
    let listing = format_sequence(&seq);
    assert_eq!(listing.lines().count(), 36);
    assert!(listing.contains("R^+_3(π/2, 3π/2)"), "{listing}");
    assert!(listing.contains("R^+_1(π/√2, π/2)"), "{listing}");
    assert!(listing.contains("R^H_3(π, π)"), "{listing}");
}

#[test]
fn hiding_protects_the_target_from_extra_detections() {
    let spec = &InputStateSpec::six_canonical()[2];
    let opts = noisy_options();
    let noise = NoiseConfig {
        depolarizing_per_pulse: 0.02,
        ..NoiseConfig::noiseless()
    };
    let base = build_sequence(spec, 0.0, SequenceMode::FidelityCheck, &opts);
    let mut extra: Vec<SequenceStep> = Vec::new();
    for step in &base {
        extra.push(step.clone());
        if let Action::Detect { ion } = step.action {
            extra.push(SequenceStep {
                step_id: step.step_id,
                sub_step: 1,
                action: Action::Detect { ion },
                comment: "repeated detection".into(),
            });
        }
    }
    let a = run_exact_sequence(spec, &base, 0.0, &noise, &opts).unwrap();
    let b = run_exact_sequence(spec, &extra, 0.0, &noise, &opts).unwrap();
    // Detection time only accrues phase, which is absent here.
    assert!(max_abs_diff(a.rho.matrix(), b.rho.matrix()) <= 1e-10);
}

#[test]
fn uncorrected_branches_are_pauli_rotated_inputs() {
    let opts = ProtocolOptions::default();
    for spec in InputStateSpec::six_canonical() {
        let seq: Vec<SequenceStep> = build_sequence(&spec, 0.0, SequenceMode::FidelityCheck, &opts)
            .into_iter()
            .map(|mut s| {
                if matches!(s.action, Action::Conditional { .. }) {
                    s.action = Action::Marker;
                }
                s
            })
            .collect();
        let out = run_exact_sequence(&spec, &seq, 0.0, &NoiseConfig::noiseless(), &opts).unwrap();
        let rho = spec.density().into_matrix();
        let (x, z) = (pauli(1), pauli(3));
        for b in &out.branches {
            let p: ComplexMatrix = match b.branch {
                BellOutcome::SS => ComplexMatrix::identity(2, 2),
                BellOutcome::SD => x.clone(),
                BellOutcome::DS => z.clone(),
                BellOutcome::DD => &z * &x,
            };
            let expected = &p * &rho * p.adjoint();
            assert!(
                max_abs_diff(b.rho.matrix(), &expected) <= 1e-9,
                "{} {}",
                spec.label,
                b.branch
            );
        }
    }
}

#[test]
fn spin_echo_never_hurts_under_correlated_dephasing() {
    let noise = NoiseConfig {
        detuning_sigma_sd: 0.0006,
        ..NoiseConfig::noiseless()
    };
    let echo = ProtocolOptions::default();
    let no_echo = ProtocolOptions {
        spin_echo: false,
        ..ProtocolOptions::default()
    };
    let mut gain = 0.0;
    for spec in InputStateSpec::six_canonical() {
        let f_echo = state_fidelity(
            &run_exact(&spec, 0.0, &noise, &echo).unwrap(),
            &spec.state(),
        )
        .unwrap();
        let f_none = state_fidelity(
            &run_exact(&spec, 0.0, &noise, &no_echo).unwrap(),
            &spec.state(),
        )
        .unwrap();
        assert!(
            f_echo >= f_none - 1e-9,
            "{}: {f_echo} < {f_none}",
            spec.label
        );
        gain += f_echo - f_none;
    }
    assert!(gain > 0.0);
}

#[test]
fn correlated_dephasing_spares_the_waiting_bell_state() {
    let short = ProtocolOptions::default();
    let long = ProtocolOptions {
        standby_wait_us: 5000.0,
        ..ProtocolOptions::default()
    };
    let correlated = NoiseConfig {
        detuning_sigma_sd: 0.0006,
        ..NoiseConfig::noiseless()
    };
    let independent = NoiseConfig {
        correlated_dephasing: false,
        quadrature_order: 8,
        ..correlated.clone()
    };
    let c_short = bell_prep_fidelity(&correlated, &short).unwrap();
    let c_long = bell_prep_fidelity(&correlated, &long).unwrap();
    assert!((c_short - c_long).abs() < 1e-12, "{c_short} vs {c_long}");
    let i_short = bell_prep_fidelity(&independent, &short).unwrap();
    let i_long = bell_prep_fidelity(&independent, &long).unwrap();
    assert!(i_long < i_short - 0.1, "{i_short} vs {i_long}");
}

#[test]
fn sampled_fidelity_converges_to_exact() {
    let opts = noisy_options();
    let noise = NoiseConfig {
        detection_error: 0.01,
        ..calibrated_noise()
    };
    let spec = &InputStateSpec::six_canonical()[2];
    let exact = teleportation_fidelity(spec, 0.0, &noise, &opts, FidelityMode::Exact).unwrap();
    let sampled = teleportation_fidelity(
        spec,
        0.0,
        &noise,
        &opts,
        FidelityMode::Sampled {
            shots: 10_000,
            seed: 17,
        },
    )
    .unwrap();
    let sigma = (exact.value * (1.0 - exact.value) / 10_000.0).sqrt();
    assert!(
        (sampled.value - exact.value).abs() <= 4.0 * sigma,
        "{} vs {}",
        sampled.value,
        exact.value
    );
}

#[test]
fn branch_probabilities_survive_noise() {
    let out = run_exact_branches(
        &InputStateSpec::six_canonical()[1],
        0.0,
        &calibrated_noise(),
        &noisy_options(),
    )
    .unwrap();
    let total: f64 = out.branches.iter().map(|b| b.probability).sum();
    assert!((total - 1.0).abs() < 1e-9);
    for b in &out.branches {
        assert!(
            (b.probability - 0.25).abs() < 0.05,
            "{} {}",
            b.branch,
            b.probability
        );
    }
}

#[test]
fn shots_reproduce_exact_branch_statistics() {
    let opts = ProtocolOptions::default();
    let spec = &InputStateSpec::six_canonical()[4];
    let seq = build_sequence(spec, 0.0, SequenceMode::FidelityCheck, &opts);
    let n = 4000;
    let records = run_shots(&seq, &NoiseConfig::noiseless(), &opts, 9, n).unwrap();
    for branch in BellOutcome::ALL {
        let k = records.iter().filter(|r| r.branch == branch).count() as f64;
        let sigma = (0.25 * 0.75 / n as f64).sqrt();
        assert!((k / n as f64 - 0.25).abs() < 5.0 * sigma);
    }
    assert!(records.iter().all(|r| r.final_outcome == Outcome::Bright));
}

#[test]
fn calibration_finds_the_noiseless_optimum() {
    let cal = calibrate_phase(
        &NoiseConfig::noiseless(),
        &ProtocolOptions::default(),
        &InputStateSpec::six_canonical()[0],
        16,
    )
    .unwrap();
    assert!((cal.fidelity - 1.0).abs() < 1e-9);
    let first = cal.sweep.first().unwrap().1;
    let last = cal.sweep.last().unwrap().1;
    assert!((first - last).abs() < 1e-9);
}

#[test]
fn calibration_compensates_a_deterministic_phase_error() {
    // A fixed detuning shifts the phase of the target coherence.
    let noise = NoiseConfig {
        detuning_mean_sd: 0.002,
        ..NoiseConfig::noiseless()
    };
    let opts = ProtocolOptions {
        spin_echo: false,
        ..ProtocolOptions::default()
    };
    let spec = &InputStateSpec::six_canonical()[0];
    let at_zero =
        state_fidelity(&run_exact(spec, 0.0, &noise, &opts).unwrap(), &spec.state()).unwrap();
    let cal = calibrate_phase(&noise, &opts, spec, 16).unwrap();
    assert!(at_zero < 0.99, "{at_zero}");
    assert!(cal.fidelity >= at_zero);
    assert!(cal.fidelity > 1.0 - 1e-6, "{}", cal.fidelity);
}

#[test]
fn calibration_is_stable_under_grid_refinement() {
    let noise = NoiseConfig {
        detuning_mean_sd: 0.001,
        detuning_sigma_sd: 0.0003,
        ..NoiseConfig::noiseless()
    };
    let opts = ProtocolOptions::default();
    let spec = &InputStateSpec::six_canonical()[2];
    let coarse = calibrate_phase(&noise, &opts, spec, 64).unwrap();
    let fine = calibrate_phase(&noise, &opts, spec, 128).unwrap();
    let d = (coarse.phase - fine.phase).rem_euclid(2.0 * PI);
    assert!(
        d.min(2.0 * PI - d) < 0.01,
        "{} vs {}",
        coarse.phase,
        fine.phase
    );
}

#[test]
fn exact_tomography_reconstructs_the_teleported_state() {
    let opts = ProtocolOptions::default();
    for spec in InputStateSpec::six_canonical() {
        let counts = tomography_counts(&spec, 0.0, &NoiseConfig::noiseless(), &opts, 0, 0).unwrap();
        let rho = mle_state(&counts).unwrap();
        assert!(
            rho.trace_distance(&spec.density()).unwrap() <= 1e-6,
            "{}",
            spec.label
        );
    }
}

#[test]
fn sampled_tomography_of_a_noiseless_run() {
    let opts = ProtocolOptions::default();
    let spec = &InputStateSpec::six_canonical()[0];
    let counts = tomography_counts(spec, 0.0, &NoiseConfig::noiseless(), &opts, 10_000, 4).unwrap();
    let rho = mle_state(&counts).unwrap();
    assert!(rho.trace_distance(&spec.density()).unwrap() <= 0.02);
}

#[test]
fn fully_depolarized_target_gives_one_half() {
    let noise = NoiseConfig {
        depolarizing_per_pulse: 1.0,
        ..NoiseConfig::noiseless()
    };
    let opts = ProtocolOptions {
        fock_cutoff: 8,
        leakage_budget: 1.0,
        ..ProtocolOptions::default()
    };
    let spec = &InputStateSpec::six_canonical()[0];
    let f = teleportation_fidelity(spec, 0.0, &noise, &opts, FidelityMode::Exact).unwrap();
    assert!((f.value - 0.5).abs() < 1e-9, "{}", f.value);
}

#[test]
fn baseline_is_two_thirds() {
    assert!((classical_baseline() - 2.0 / 3.0).abs() < 1e-12);
}
