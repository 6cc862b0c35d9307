use nalgebra::Matrix3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use teleport_core::quantum::{
    max_abs_diff, pauli, pauli_basis, random_cptp_qubit_channel, ComplexMatrix, ComplexVector,
    DensityMatrix, PureState, C64,
};
use teleport_core::tomography::{
    affine_decompose, average_fidelity, avg_from_process_fidelity, bootstrap_process,
    chi_from_channel, ellipsoid_mesh, mle_process, mle_process_with, mle_state, mle_state_with,
    pauli_eigenstates, process_fidelity, simulate_state_tomography, CountsTable, MleOptions,
    ProcessMatrix, ProcessMleOptions,
};

fn haar_state(rng: &mut ChaCha8Rng) -> PureState {
    let mut g = || -> f64 { StandardNormal.sample(rng) };
    let v = ComplexVector::from_vec(vec![C64::new(g(), g()), C64::new(g(), g())]);
    PureState::normalized(v).unwrap()
}

fn ideal_inputs() -> Vec<DensityMatrix> {
    pauli_eigenstates().iter().map(|p| p.to_density()).collect()
}

fn expected_outputs(chi: &ProcessMatrix, inputs: &[DensityMatrix]) -> Vec<CountsTable> {
    inputs
        .iter()
        .map(|r| CountsTable::expected(&chi.apply(r.matrix()), 1.0).unwrap())
        .collect()
}

#[test]
fn identity_chain_on_random_channels() {
    for seed in 0..200 {
        let chi = random_cptp_qubit_channel(seed);
        let f_proc = process_fidelity(&chi, &ProcessMatrix::identity());
        let lhs = average_fidelity(&chi);
        let rhs = avg_from_process_fidelity(f_proc).unwrap();
        assert!((lhs - rhs).abs() <= 1e-9, "seed {seed}: {lhs} vs {rhs}");
    }
}

#[test]
fn six_state_average_matches_haar_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in [1, 2, 3] {
        let chi = random_cptp_qubit_channel(seed);
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let psi = haar_state(&mut rng);
                let out = chi.apply(&psi.projector());
                (psi.amplitudes().adjoint() * out * psi.amplitudes())[(0, 0)].re
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let sigma = (var / n as f64).sqrt();
        let six = average_fidelity(&chi);
        assert!(
            (mean - six).abs() <= 4.0 * sigma,
            "{mean} vs {six} (sigma {sigma})"
        );
    }
}

#[test]
fn depolarizing_oracle() {
    for p in [0.1, 0.3, 0.7] {
        // E(rho) = (1 - p) rho + p tr(rho) I/2, expanded by hand in the Pauli basis.
        let images: Vec<ComplexMatrix> = pauli_basis()
            .iter()
            .map(|s| s.scale(1.0 - p) + ComplexMatrix::identity(2, 2) * (s.trace() * (p / 2.0)))
            .collect();
        let chi = chi_from_channel(&images).unwrap();
        let mut diag = ComplexMatrix::zeros(4, 4);
        diag[(0, 0)] = C64::new(1.0 - 0.75 * p, 0.0);
        for k in 1..4 {
            diag[(k, k)] = C64::new(0.25 * p, 0.0);
        }
        assert!(max_abs_diff(chi.chi(), &diag) < 1e-14);

        let inputs = ideal_inputs();
        let est = mle_process(&inputs, &expected_outputs(&chi, &inputs)).unwrap();
        assert!(max_abs_diff(est.chi(), &diag) < 1e-4);
    }
}

#[test]
fn unitary_channels() {
    let flip = chi_from_channel(
        &pauli_basis()
            .iter()
            .map(|s| pauli(1) * s * pauli(1))
            .collect::<Vec<_>>(),
    )
    .unwrap();
    assert!((flip.chi()[(1, 1)].re - 1.0).abs() < 1e-14);
    let a = affine_decompose(&flip);
    assert!((a.det_o - 1.0).abs() < 1e-12);
    assert!((a.rotation_angle_deg.unwrap() - 180.0).abs() < 1e-6);
}

#[test]
fn process_mle_recovers_random_channels() {
    let inputs = ideal_inputs();
    for seed in 0..8 {
        let chi = random_cptp_qubit_channel(seed);
        let est = mle_process_with(
            &inputs,
            &expected_outputs(&chi, &inputs),
            &ProcessMleOptions::default(),
        )
        .unwrap();
        est.process.validate().unwrap();
        let err = max_abs_diff(est.process.chi(), chi.chi());
        assert!(err <= 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn process_mle_identity_channel() {
    let inputs = ideal_inputs();
    let est = mle_process(
        &inputs,
        &expected_outputs(&ProcessMatrix::identity(), &inputs),
    )
    .unwrap();
    assert!(est.chi()[(0, 0)].re >= 1.0 - 1e-6);
}

#[test]
fn process_mle_with_four_independent_inputs() {
    let inputs: Vec<DensityMatrix> = ideal_inputs().into_iter().step_by(2).collect::<Vec<_>>();
    // +z, +x, +y: three states span only three dimensions.
    assert!(mle_process(
        &inputs,
        &vec![CountsTable::new([[1.0, 1.0]; 3]).unwrap(); 3]
    )
    .is_err());
    let mut four = inputs;
    four.push(pauli_eigenstates()[1].to_density());
    let chi = random_cptp_qubit_channel(3);
    let est = mle_process(&four, &expected_outputs(&chi, &four)).unwrap();
    assert!(max_abs_diff(est.chi(), chi.chi()) < 1e-4);
}

#[test]
fn affine_round_trip_on_random_channels() {
    for seed in 0..100 {
        let chi = random_cptp_qubit_channel(seed);
        let a = affine_decompose(&chi);
        let o = a.o_matrix();
        assert!((o * o.transpose() - Matrix3::identity()).abs().max() <= 1e-10);
        let s = a.s_matrix();
        assert!((s - s.transpose()).abs().max() <= 1e-10);
        assert!(a.s_eigenvalues[2] >= -1e-10);
        assert!(a.b_vector().norm() <= 1.0 + 1e-10);
        let rebuilt = a.channel_images();
        for (j, sigma) in pauli_basis().iter().enumerate() {
            assert!(
                max_abs_diff(&rebuilt[j], &chi.apply(sigma)) <= 1e-8,
                "seed {seed} j {j}"
            );
        }
        for p in ellipsoid_mesh(&a, 10).unwrap() {
            assert!(p.norm() <= 1.0 + 1e-10);
        }
    }
}

#[test]
fn depolarizing_affine_map() {
    for p in [0.1, 0.3, 0.7] {
        let a = affine_decompose(&ProcessMatrix::depolarizing(p).unwrap());
        assert!((a.s_matrix() - Matrix3::identity() * (1.0 - p)).abs().max() <= 1e-8);
        assert!((a.o_matrix() - Matrix3::identity()).abs().max() <= 1e-8);
        assert!(a.b_vector().norm() <= 1e-8);
        for q in ellipsoid_mesh(&a, 16).unwrap() {
            assert!((q.norm() - (1.0 - p)).abs() < 1e-12);
        }
    }
}

#[test]
fn state_mle_statistical_recovery() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut good = 0;
    let trials = 20;
    for _ in 0..trials {
        let psi = haar_state(&mut rng).to_density();
        let counts = simulate_state_tomography(&psi, 100_000, &mut rng).unwrap();
        let est = mle_state(&counts).unwrap();
        if est.trace_distance(&psi).unwrap() <= 0.02 {
            good += 1;
        }
    }
    assert!(good >= 19, "{good}/{trials}");
}

#[test]
fn bootstrap_is_reproducible() {
    let inputs = ideal_inputs();
    let chi = ProcessMatrix::depolarizing(0.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let outputs: Vec<CountsTable> = inputs
        .iter()
        .map(|r| {
            let out = DensityMatrix::from_unnormalized(chi.apply(r.matrix())).unwrap();
            simulate_state_tomography(&out, 2000, &mut rng).unwrap()
        })
        .collect();
    let est = mle_process(&inputs, &outputs).unwrap();
    let a = bootstrap_process(&inputs, &outputs, &est, 6, 1).unwrap();
    let b = bootstrap_process(&inputs, &outputs, &est, 6, 1).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 6);
    let expected = expected_outputs(&chi, &inputs);
    assert!(bootstrap_process(&inputs, &expected, &est, 2, 1).is_err());
}

fn counts_strategy() -> impl Strategy<Value = [[f64; 2]; 3]> {
    prop::array::uniform3(prop::array::uniform2(prop_oneof![
        Just(0.0),
        0.0..1e6f64,
        (0u32..5).prop_map(f64::from),
    ]))
    .prop_filter("each basis measured", |c| {
        c.iter().all(|r| r[0] + r[1] > 0.0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn state_mle_is_always_physical(counts in counts_strategy()) {
        let table = CountsTable::new(counts).unwrap();
        let est = mle_state_with(&table, &MleOptions { max_iterations: 2000, ..MleOptions::default() }).unwrap();
        prop_assert!(est.rho.eigenvalues()[0] >= -1e-10);
        prop_assert!((est.rho.matrix().trace().re - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn state_mle_likelihood_is_monotone(counts in counts_strategy()) {
        let table = CountsTable::new(counts).unwrap();
        let est = mle_state_with(&table, &MleOptions { max_iterations: 2000, ..MleOptions::default() }).unwrap();
        for w in est.likelihood_trace.windows(2) {
            prop_assert!(w[1] >= w[0], "{} then {}", w[0], w[1]);
        }
    }
}
