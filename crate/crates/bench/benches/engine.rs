use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use teleport_core::protocol::{
    build_sequence, run_exact, run_shots, InputStateSpec, ProtocolOptions, SequenceMode,
};
use teleport_core::quantum::random_cptp_qubit_channel;
use teleport_core::tomography::{mle_process, mle_state, pauli_eigenstates, CountsTable};
use teleport_core::{DensityMatrix, NoiseConfig};

fn preset() -> (NoiseConfig, ProtocolOptions) {
    let noise = NoiseConfig {
        detuning_sigma_sd: 0.0006,
        depolarizing_per_pulse: 0.025,
        ..NoiseConfig::default()
    };
    let options = ProtocolOptions {
        fock_cutoff: 6,
        leakage_budget: 1e-6,
        ..ProtocolOptions::default()
    };
    (noise, options)
}

fn exact(c: &mut Criterion) {
    let spec = InputStateSpec::six_canonical()[2].clone();
    let opts = ProtocolOptions::default();
    c.bench_function("run_exact/noiseless", |b| {
        b.iter(|| run_exact(black_box(&spec), 0.0, &NoiseConfig::noiseless(), &opts).unwrap())
    });
    let (noise, opts) = preset();
    let mut group = c.benchmark_group("run_exact/preset");
    group.sample_size(10);
    group.bench_function("psi3", |b| {
        b.iter(|| run_exact(black_box(&spec), 0.0, &noise, &opts).unwrap())
    });
    group.finish();
}

fn shots(c: &mut Criterion) {
    let spec = InputStateSpec::six_canonical()[2].clone();
    let (noise, opts) = preset();
    let seq = build_sequence(&spec, 0.0, SequenceMode::FidelityCheck, &opts);
    let mut group = c.benchmark_group("run_shots/preset");
    group.sample_size(10);
    group.bench_function("1000", |b| {
        b.iter(|| run_shots(black_box(&seq), &noise, &opts, 1, 1000).unwrap())
    });
    group.finish();
}

fn tomography(c: &mut Criterion) {
    let inputs: Vec<DensityMatrix> = pauli_eigenstates().iter().map(|p| p.to_density()).collect();
    let chi = random_cptp_qubit_channel(4);
    let outputs: Vec<CountsTable> = inputs
        .iter()
        .map(|r| CountsTable::expected(&chi.apply(r.matrix()), 10_000.0).unwrap())
        .collect();
    c.bench_function("mle_state", |b| {
        b.iter(|| mle_state(black_box(&outputs[2])).unwrap())
    });
    c.bench_function("mle_process", |b| {
        b.iter(|| mle_process(black_box(&inputs), &outputs).unwrap())
    });
}

criterion_group!(benches, exact, shots, tomography);
criterion_main!(benches);
