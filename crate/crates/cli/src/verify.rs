//! Fast invariant checks run by `ergon verify`.

use ergon_core::bounds::energy_lower_bound;
use ergon_core::circuits::{classical_run, simulate_circuit, CircuitGate, CircuitSpec};
use ergon_core::dilation::{composition_check, induced_channel, SectorDilation};
use ergon_core::fidelity::{
    analytic_infidelity, cxyzt_oracle, sine_overlap, worst_case_fidelity, WorstCaseOptions,
};
use ergon_core::gates::{builtin, Gate};
use ergon_core::linalg::{random_pure_state, CVector};
use ergon_core::spectra::BatterySim;
use ergon_core::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Failure, Status};

const GATES: [&str; 6] = ["X", "H", "T", "CNOT", "SWAP", "QFT2"];

struct Check {
    name: &'static str,
    run: fn(u64) -> Result<(bool, String)>,
}

fn battery_moments(_: u64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for name in GATES {
        let system = builtin::<f64>(name)?.natural_system()?;
        for r in [3, 4, 7, 20] {
            let b = BatterySim::<f64>::sine(&system, r)?;
            let expected = r as f64 * system.norm() as f64 / 2.0;
            worst = worst
                .max((b.norm_sqr() - 1.0).abs())
                .max((b.mean_energy() - expected).abs());
        }
    }
    Ok((worst < 1e-12, format!("max deviation {worst:.2e}")))
}

fn dilation_unitary(_: u64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for name in GATES {
        let gate = builtin::<f64>(name)?;
        let system = gate.natural_system()?;
        let b = BatterySim::<f64>::sine(&system, 6)?;
        let u = SectorDilation::build(&gate, &system, &b)?;
        let ch = induced_channel(&u, &b)?;
        worst = worst
            .max(u.block_unitarity_deviation())
            .max(ch.completeness_deviation());
    }
    Ok((worst < 1e-12, format!("max deviation {worst:.2e}")))
}

fn composition(_: u64) -> Result<(bool, String)> {
    let h = builtin::<f64>("H")?;
    let t = builtin::<f64>("T")?;
    let system = h.natural_system()?;
    let b = BatterySim::<f64>::sine(&system, 8)?;
    let err = composition_check(&h, &t, &system, &b)?;
    Ok((err < 1e-12, format!("{err:.2e}")))
}

fn overlap_table(_: u64) -> Result<(bool, String)> {
    let system = builtin::<f64>("CNOT")?.natural_system()?;
    let b = BatterySim::<f64>::sine(&system, 5)?;
    let d = system.dim();
    let mut worst = 0.0f64;
    for x in 0..d {
        for y in 0..d {
            for z in 0..d {
                for t in 0..d {
                    let e = |i: usize| system.energy(i) as i64;
                    let exact = sine_overlap::<f64>(b.l(), e(x) - e(y) - e(z) + e(t));
                    worst = worst.max((cxyzt_oracle(&system, &b, x, y, z, t) - exact).abs());
                }
            }
        }
    }
    Ok((worst < 1e-12, format!("max deviation {worst:.2e}")))
}

fn solver_vs_analytic(seed: u64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for name in ["X", "H", "CNOT"] {
        let gate = builtin::<f64>(name)?;
        let system = gate.natural_system()?;
        let b = BatterySim::<f64>::sine(&system, 60)?;
        let ch = induced_channel(&SectorDilation::build(&gate, &system, &b)?, &b)?;
        let opts = WorstCaseOptions {
            seed,
            probes: 200,
            ..Default::default()
        };
        let res = worst_case_fidelity(&ch, &gate.matrix, &opts)?;
        if !res.converged || !res.probes_consistent() {
            return Ok((false, format!("{name}: solver did not converge")));
        }
        let analytic = analytic_infidelity(&gate, &system, b.mean_energy())?;
        worst = worst.max((res.epsilon / analytic - 1.0).abs());
    }
    Ok((worst < 0.05, format!("max relative gap {worst:.3}")))
}

fn lower_bound_respected(seed: u64) -> Result<(bool, String)> {
    let mut margin = f64::INFINITY;
    for name in ["X", "H", "CNOT", "QFT2"] {
        let gate = builtin::<f64>(name)?;
        let system = gate.natural_system()?;
        for r in [4, 16, 64] {
            let b = BatterySim::<f64>::sine(&system, r)?;
            let ch = induced_channel(&SectorDilation::build(&gate, &system, &b)?, &b)?;
            let opts = WorstCaseOptions {
                seed,
                probes: 0,
                ..Default::default()
            };
            let eps = worst_case_fidelity(&ch, &gate.matrix, &opts)?.epsilon;
            let lower = energy_lower_bound(&gate, &system, eps.clamp(f64::MIN_POSITIVE, 1.0))?;
            if lower > 0.0 {
                margin = margin.min(b.mean_energy() / lower);
            }
        }
    }
    Ok((margin >= 1.0, format!("min mean/bound {margin:.2}")))
}

fn bell_pair() -> Result<CircuitSpec<f64>> {
    CircuitSpec::new(
        2,
        vec![
            CircuitGate {
                gate: builtin("H")?,
                targets: vec![0],
            },
            CircuitGate {
                gate: builtin("CNOT")?,
                targets: vec![0, 1],
            },
        ],
        "bell",
    )
}

fn circuit_energy(seed: u64) -> Result<(bool, String)> {
    let c = bell_pair()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi: CVector<f64> = random_pure_state(4, &mut rng);
    let run = simulate_circuit(&c, 100, &psi)?;
    Ok((
        run.energy_drift < 1e-10 && run.infidelity < 1e-3,
        format!(
            "drift {:.2e}, infidelity {:.2e}",
            run.energy_drift, run.infidelity
        ),
    ))
}

fn classical_exact(_: u64) -> Result<(bool, String)> {
    let c = CircuitSpec::<f64>::new(
        3,
        vec![
            CircuitGate {
                gate: builtin("X")?,
                targets: vec![0],
            },
            CircuitGate {
                gate: builtin("CNOT")?,
                targets: vec![0, 2],
            },
            CircuitGate {
                gate: builtin("SWAP")?,
                targets: vec![1, 2],
            },
        ],
        "classical",
    )?;
    let mut worst = 0.0f64;
    for x in 0..8 {
        worst = worst.max(classical_run(&c, x, 3, None)?.max_deviation);
    }
    Ok((worst < 1e-12, format!("max deviation {worst:.2e}")))
}

fn identity_exact(seed: u64) -> Result<(bool, String)> {
    let gate: Gate<f64> = builtin("I")?;
    let system = gate.natural_system()?;
    let b = BatterySim::<f64>::sine(&system, 3)?;
    let ch = induced_channel(&SectorDilation::build(&gate, &system, &b)?, &b)?;
    let opts = WorstCaseOptions {
        seed,
        ..Default::default()
    };
    let eps = worst_case_fidelity(&ch, &gate.matrix, &opts)?.epsilon;
    Ok((eps.abs() <= 1e-12, format!("epsilon {eps:.2e}")))
}

const CHECKS: [Check; 9] = [
    Check {
        name: "battery normalization and mean",
        run: battery_moments,
    },
    Check {
        name: "dilation unitarity and completeness",
        run: dilation_unitary,
    },
    Check {
        name: "dilation composition",
        run: composition,
    },
    Check {
        name: "overlap coefficients",
        run: overlap_table,
    },
    Check {
        name: "solver matches leading order",
        run: solver_vs_analytic,
    },
    Check {
        name: "energy lower bound respected",
        run: lower_bound_respected,
    },
    Check {
        name: "identity is exact",
        run: identity_exact,
    },
    Check {
        name: "circuit conserves energy",
        run: circuit_energy,
    },
    Check {
        name: "classical circuits are exact",
        run: classical_exact,
    },
];

pub fn run(seed: u64) -> std::result::Result<Status, Failure> {
    let mut failures = 0;
    for check in &CHECKS {
        let (ok, detail) = match (check.run)(seed) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failures += 1;
        }
        println!(
            "{} {}: {detail}",
            if ok { "PASS" } else { "FAIL" },
            check.name
        );
    }
    println!(
        "{} of {} checks passed",
        CHECKS.len() - failures,
        CHECKS.len()
    );
    Ok(if failures == 0 {
        Status::Ok
    } else {
        Status::PartialFailure
    })
}
