//! Sector-wise kernels checked against dense matrices built from the definitions.

mod common;

use common::*;
use ergon_core::circuits::{
    classical_run, simulate_circuit, CircuitGate, CircuitSpec, Register, RegisterState,
};
use ergon_core::dilation::{induced_channel, JointState, SectorDilation};
use ergon_core::gates::{builtin, Gate};
use ergon_core::linalg::{random_density, random_pure_state, CMatrix, CVector};
use ergon_core::spectra::{BatterySim, SystemSpec};

fn systems() -> Vec<SystemSpec> {
    vec![
        SystemSpec::uniform_qubits(1).unwrap(),
        SystemSpec::uniform_qubits(2).unwrap(),
        SystemSpec::ladder(3).unwrap(),
    ]
}

#[test]
fn apply_matches_dense_definition() {
    let mut rng = rng(11);
    for system in systems() {
        for r in [3, 4, 7] {
            let g = haar_gate(system.dim(), &mut rng);
            let battery = BatterySim::<f64>::sine(&system, r).unwrap();
            let dil = SectorDilation::build(&g, &system, &battery).unwrap();
            let dense = dense_dilation(&g.matrix, &system, battery.capacity());
            assert!(max_abs(&(dil.dense().unwrap() - &dense)) < 1e-14);

            let levels = battery.levels();
            let v = random_pure_state::<f64, _>(system.dim() * levels, &mut rng);
            let state =
                JointState::from_amplitudes(v.iter().copied().collect(), system.dim(), levels)
                    .unwrap();
            let out = dil.apply(&state).unwrap();
            let expect = &dense * &v;
            for (a, b) in out.amplitudes().iter().zip(expect.iter()) {
                assert!((a - b).norm() < 1e-13);
            }
        }
    }
}

#[test]
fn dense_dilation_commutes_with_total_energy() {
    let mut rng = rng(12);
    for system in systems() {
        let g = haar_gate(system.dim(), &mut rng);
        let battery = BatterySim::<f64>::sine(&system, 5).unwrap();
        let u = SectorDilation::build(&g, &system, &battery)
            .unwrap()
            .dense()
            .unwrap();
        let h = dense_total_energy(&system, battery.capacity());
        assert!(max_abs(&(&u * &h - &h * &u)) <= 1e-12);
        assert!(max_abs(&(u.adjoint() * &u - CMatrix::identity(u.nrows(), u.nrows()))) <= 1e-12);
    }
}

#[test]
fn plus_state_through_hadamard_dilation() {
    // |+⟩ ⊗ β under U_H: the system should come out close to |0⟩
    let system = SystemSpec::uniform_qubits(1).unwrap();
    let h: Gate<f64> = builtin("H").unwrap();
    let battery = BatterySim::<f64>::sine(&system, 40).unwrap();
    let plus = CVector::from_vec(vec![c(std::f64::consts::FRAC_1_SQRT_2); 2]);
    let joint = JointState::product(&plus, battery.amplitudes());
    let dense = dense_dilation(&h.matrix, &system, battery.capacity());
    let v = CVector::from_vec(joint.amplitudes().to_vec());
    let out = &dense * &v;
    let rho_dense = partial_trace_battery(&(&out * out.adjoint()), 2, battery.levels());
    let rho = SectorDilation::build(&h, &system, &battery)
        .unwrap()
        .apply(&joint)
        .unwrap()
        .reduced_system();
    assert!(max_abs(&(&rho - &rho_dense)) < 1e-14);
    assert!(rho[(0, 0)].re > 0.99);
}

#[test]
fn kraus_channel_matches_partial_trace() {
    let mut rng = rng(13);
    for system in systems() {
        let g = haar_gate(system.dim(), &mut rng);
        let battery = BatterySim::<f64>::sine(&system, 4).unwrap();
        let dil = SectorDilation::build(&g, &system, &battery).unwrap();
        let channel = induced_channel(&dil, &battery).unwrap();
        let u = dense_dilation(&g.matrix, &system, battery.capacity());
        let beta =
            CVector::from_iterator(battery.levels(), battery.amplitudes().iter().map(|&a| c(a)));
        let beta = &beta * beta.adjoint();
        for rank in 1..=system.dim() {
            let rho = random_density::<f64, _>(system.dim(), rank, &mut rng);
            let joint = rho.kronecker(&beta);
            let evolved = &u * joint * u.adjoint();
            let expect = partial_trace_battery(&evolved, system.dim(), battery.levels());
            assert!(max_abs(&(channel.apply(&rho) - expect)) < 1e-13);
        }
    }
}

/// Dense joint unitary of a local gate inside an `n`-qubit register with
/// a shared battery, from the local window `[k, capacity]`.
fn dense_local(g: &CMatrix<f64>, n: u32, targets: &[usize], capacity: u32) -> CMatrix<f64> {
    let reg = Register::qubits(n).unwrap();
    let embedded = reg.embed(g, targets).unwrap();
    let levels = capacity as usize + 1;
    let dim = reg.dim();
    let k = targets.len() as u32;
    let local_energy = |x: usize| {
        targets
            .iter()
            .filter(|&&t| (x >> (n as usize - 1 - t)) & 1 == 1)
            .count() as u32
    };
    let mut u = CMatrix::<f64>::zeros(dim * levels, dim * levels);
    for x in 0..dim {
        for b in 0..levels {
            let e = local_energy(x) + b as u32;
            let col = x * levels + b;
            if e >= k && e <= capacity {
                for y in 0..dim {
                    if embedded[(y, x)] == c(0.0) {
                        continue;
                    }
                    let row = y * levels + (e - local_energy(y)) as usize;
                    u[(row, col)] = embedded[(y, x)];
                }
            } else {
                u[(col, col)] = c(1.0);
            }
        }
    }
    u
}

#[test]
fn local_kernel_matches_dense_register_unitary() {
    let mut rng = rng(14);
    let n = 3;
    let capacity = 3 * n;
    let reg = Register::qubits(n).unwrap();
    let levels = capacity as usize + 1;
    for targets in [vec![0], vec![2], vec![0, 1], vec![2, 0], vec![1, 2, 0]] {
        let g = haar_gate(1 << targets.len(), &mut rng);
        let dense = dense_local(&g.matrix, n, &targets, capacity);
        let psi = random_pure_state::<f64, _>(reg.dim(), &mut rng);
        // arbitrary battery vector so that edge sectors are exercised too
        let bat: Vec<f64> = (0..levels).map(|b| 1.0 + b as f64).collect();
        let mut state = RegisterState::product(&reg, &psi, &bat).unwrap();
        let v = CVector::from_vec(state.amplitudes().to_vec());
        state.apply_gate(&reg, &g.matrix, &targets).unwrap();
        let expect = &dense * v;
        for (a, b) in state.amplitudes().iter().zip(expect.iter()) {
            assert!((a - b).norm() < 1e-12, "targets {targets:?}");
        }
    }
}

#[test]
fn circuit_equals_composed_single_gate_dilation() {
    // with the sine battery for the register every local sector is active,
    // so the circuit acts like the dilation of the composed unitary
    let mut rng = rng(15);
    let gates = vec![
        CircuitGate {
            gate: haar_gate(2, &mut rng),
            targets: vec![1],
        },
        CircuitGate {
            gate: haar_gate(4, &mut rng),
            targets: vec![1, 0],
        },
        CircuitGate {
            gate: haar_gate(2, &mut rng),
            targets: vec![0],
        },
    ];
    let circuit = CircuitSpec::new(2, gates, "random").unwrap();
    let composed = circuit.composed().unwrap();
    let system = SystemSpec::uniform_qubits(2).unwrap();
    let reg = circuit.register().unwrap();
    for r in [3, 6] {
        let battery = BatterySim::<f64>::sine(&system, r).unwrap();
        let psi = random_pure_state::<f64, _>(4, &mut rng);
        let mut state = RegisterState::product(&reg, &psi, battery.amplitudes()).unwrap();
        for g in &circuit.gates {
            state.apply_gate(&reg, &g.gate.matrix, &g.targets).unwrap();
        }
        let single = SectorDilation::build(&composed, &system, &battery)
            .unwrap()
            .apply(&JointState::product(&psi, battery.amplitudes()))
            .unwrap();
        for (a, b) in state.amplitudes().iter().zip(single.amplitudes()) {
            assert!((a - b).norm() < 1e-13);
        }
        let report = simulate_circuit(&circuit, r, &psi).unwrap();
        let ideal = composed.matrix.clone() * &psi;
        let direct = single.reduced_system();
        let f = (ideal.adjoint() * direct * &ideal)[(0, 0)].re;
        assert!((report.fidelity - f).abs() < 1e-13);
    }
}

#[test]
fn classical_run_matches_dense_unitary() {
    let names = ["H", "H", "H", "CZ", "CZ"];
    let targets = [vec![0], vec![1], vec![2], vec![0, 1], vec![1, 2]];
    let gates = names
        .iter()
        .zip(&targets)
        .map(|(n, t)| CircuitGate {
            gate: builtin(n).unwrap(),
            targets: t.clone(),
        })
        .collect();
    let circuit = CircuitSpec::<f64>::new(3, gates, "hhh-cz").unwrap();
    let u = circuit.composed().unwrap().matrix;
    for x in 0..8 {
        let rep = classical_run(&circuit, x, 3, None).unwrap();
        for y in 0..8 {
            assert!((rep.distribution[y] - u[(y, x)].norm_sqr()).abs() <= 1e-12);
        }
    }
}
