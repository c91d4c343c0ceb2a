use std::path::Path;

use ergon_core::bounds::{
    bound_report, capacity_lower_bound, corollary_bound, gate_profile, BoundReport, MeasureKind,
};
use ergon_core::circuits::{
    alternating_experiment, classical_run, simulate_circuit, CircuitSpec, RunReport,
};
use ergon_core::dilation::{induced_channel, SectorDilation};
use ergon_core::fidelity::{
    analytic_infidelity, diamond_sandwich, worst_case_fidelity, FidelityReport, WorstCaseOptions,
};
use ergon_core::gates::{builtin, load_matrix_file, Gate};
use ergon_core::io::{sig17, sig17_opt};
use ergon_core::linalg::{random_pure_state, CVector};
use ergon_core::scalar::Complex;
use ergon_core::spectra::{BatterySim, SystemSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{cell, emit, json, text_cell};
use crate::{
    BoundsArgs, CircuitArgs, Failure, Format, GateArgs, Measure, Mode, ScanArgs, SimulateArgs,
    SolverArgs, Status,
};

pub const CSV_HEADER: &str =
    "gate,R,mean_energy,f_wc,epsilon,analytic_epsilon,lower_bound_mean_energy,ratio";

fn resolve_gate(args: &GateArgs) -> Result<Gate<f64>, Failure> {
    match (&args.gate, &args.gate_file) {
        (_, Some(path)) => Ok(load_matrix_file(path)?),
        (Some(name), None) => Ok(builtin(name)?),
        (None, None) => Err(Failure::invalid("one of --gate or --gate-file is required")),
    }
}

/// Everything measured at one (gate, R) point.
struct Point {
    system: SystemSpec,
    capacity: u32,
    mean_energy: f64,
    fidelity: FidelityReport,
    analytic: f64,
    lower_bound: f64,
    converged: bool,
}

impl Point {
    fn ratio(&self) -> f64 {
        if self.lower_bound > 0.0 {
            self.mean_energy / self.lower_bound
        } else {
            f64::INFINITY
        }
    }
}

fn evaluate(gate: &Gate<f64>, r: u32, seed: u64, solver: SolverArgs) -> Result<Point, Failure> {
    let system = gate.natural_system()?;
    let battery = BatterySim::<f64>::sine(&system, r)?;
    let dilation = SectorDilation::build(gate, &system, &battery)?;
    let channel = induced_channel(&dilation, &battery)?;
    let opts = WorstCaseOptions {
        tol: solver.tol,
        max_iter: solver.max_iter,
        probes: solver.probes,
        seed,
    };
    let result = worst_case_fidelity(&channel, &gate.matrix, &opts)?;
    let eps = result.epsilon.clamp(0.0, 1.0);
    let profile = gate_profile(gate, &system)?;
    let lower = corollary_bound(
        profile.m_of_g,
        profile.m_of_gdag,
        system.norm() as f64,
        0.0,
        eps,
    )?
    .closed
    .max(0.0);
    Ok(Point {
        capacity: battery.capacity(),
        mean_energy: battery.mean_energy(),
        analytic: analytic_infidelity(gate, &system, battery.mean_energy())?,
        lower_bound: lower,
        converged: result.converged && result.probes_consistent(),
        fidelity: result.report(),
        system,
    })
}

#[derive(Serialize)]
struct SimulateReport {
    gate: String,
    #[serde(rename = "R")]
    r: u32,
    system_energies: Vec<u32>,
    capacity: u32,
    #[serde(serialize_with = "sig17")]
    mean_energy: f64,
    fidelity: FidelityReport,
    #[serde(serialize_with = "sig17")]
    analytic_epsilon: f64,
    #[serde(serialize_with = "sig17")]
    lower_bound_mean_energy: f64,
    #[serde(serialize_with = "sig17")]
    ratio: f64,
    /// `(1 - sqrt(F), sqrt(1 - F))`, bracketing half the diamond distance.
    #[serde(serialize_with = "sig17")]
    diamond_half_lower: f64,
    #[serde(serialize_with = "sig17")]
    diamond_half_upper: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bounds: Option<BoundReport>,
}

fn check_solver(s: &SolverArgs) -> Result<(), Failure> {
    if !(s.tol.is_finite() && s.tol >= 0.0) {
        return Err(Failure::invalid(format!(
            "--tol must be a finite non-negative number, got {}",
            s.tol
        )));
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<Status, Failure> {
    check_solver(&args.solver)?;
    let gate = resolve_gate(&args.gate)?;
    let p = evaluate(&gate, args.r, args.seed, args.solver)?;
    let eps = p.fidelity.epsilon;
    let bounds = if eps > 0.0 && eps <= 1.0 {
        Some(bound_report(
            &gate,
            &p.system,
            eps,
            MeasureKind::Energy,
            args.seed,
        )?)
    } else {
        None
    };
    let (lo, hi) = diamond_sandwich(p.fidelity.f_wc.clamp(0.0, 1.0))?;
    let text = match args.out.format.unwrap_or(Format::Json) {
        Format::Json => json(&SimulateReport {
            gate: gate.label.clone(),
            r: args.r,
            system_energies: p.system.energies().to_vec(),
            capacity: p.capacity,
            mean_energy: p.mean_energy,
            analytic_epsilon: p.analytic,
            lower_bound_mean_energy: p.lower_bound,
            ratio: p.ratio(),
            diamond_half_lower: lo / 2.0,
            diamond_half_upper: hi / 2.0,
            bounds,
            fidelity: p.fidelity.clone(),
        })?,
        Format::Csv => format!("{CSV_HEADER}\n{}\n", csv_row(&gate.label, args.r, &p)),
    };
    emit(args.out.out.as_deref(), &text)?;
    Ok(if p.converged {
        Status::Ok
    } else {
        Status::NotConverged
    })
}

fn csv_row(gate: &str, r: u32, p: &Point) -> String {
    [
        text_cell(gate),
        r.to_string(),
        cell(p.mean_energy),
        cell(p.fidelity.f_wc),
        cell(p.fidelity.epsilon),
        cell(p.analytic),
        cell(p.lower_bound),
        cell(p.ratio()),
    ]
    .join(",")
}

fn csv_error_row(gate: &str, r: u32) -> String {
    let mut cells = vec![text_cell(gate), r.to_string()];
    cells.extend(std::iter::repeat_n("error".to_string(), 6));
    cells.join(",")
}

/// Parses `start:stop:step` into an inclusive list.
pub fn parse_range(spec: &str) -> Result<Vec<u32>, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Failure::invalid(format!("--scan expects start:stop:step, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<u32> = parts
        .iter()
        .map(|p| p.trim().parse::<u32>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if step == 0 || start > stop {
        return Err(bad());
    }
    Ok((start..=stop).step_by(step as usize).collect())
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("ERGON_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Failure::invalid(format!(
                "ERGON_THREADS must be a positive integer, got {v:?}"
            ))
        })?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Failure::invalid(e.to_string()))
}

#[derive(Serialize)]
#[serde(untagged)]
enum ScanRow {
    Ok {
        gate: String,
        #[serde(rename = "R")]
        r: u32,
        #[serde(serialize_with = "sig17")]
        mean_energy: f64,
        #[serde(serialize_with = "sig17")]
        f_wc: f64,
        #[serde(serialize_with = "sig17")]
        epsilon: f64,
        #[serde(serialize_with = "sig17")]
        analytic_epsilon: f64,
        #[serde(serialize_with = "sig17")]
        lower_bound_mean_energy: f64,
        #[serde(serialize_with = "sig17")]
        ratio: f64,
        converged: bool,
    },
    Error {
        gate: String,
        #[serde(rename = "R")]
        r: u32,
        error: String,
    },
}

pub fn scan(args: &ScanArgs) -> Result<Status, Failure> {
    check_solver(&args.solver)?;
    let gates: Vec<Gate<f64>> = match &args.gate_file {
        Some(path) => vec![load_matrix_file(path)?],
        None if args.gate.is_empty() => {
            return Err(Failure::invalid("scan needs --gate or --gate-file"))
        }
        None => args
            .gate
            .iter()
            .map(|n| builtin(n.trim()).map_err(Failure::from))
            .collect::<Result<_, _>>()?,
    };
    let mut rs = match &args.scan {
        Some(spec) => parse_range(spec)?,
        None => Vec::new(),
    };
    rs.extend(&args.r);
    if rs.is_empty() {
        return Err(Failure::invalid(
            "scan grid is empty; pass --scan start:stop:step or --R",
        ));
    }
    let grid: Vec<(usize, u32)> = (0..gates.len())
        .flat_map(|g| rs.iter().map(move |&r| (g, r)))
        .collect();
    // results come back in grid order regardless of scheduling
    let results: Vec<Result<Point, Failure>> = thread_pool()?.install(|| {
        grid.par_iter()
            .map(|&(g, r)| evaluate(&gates[g], r, args.seed, args.solver))
            .collect()
    });

    let mut failed = false;
    let mut converged = true;
    let format = args.out.format.unwrap_or(Format::Csv);
    let mut csv = format!("{CSV_HEADER}\n");
    let mut rows = Vec::with_capacity(grid.len());
    for (&(g, r), res) in grid.iter().zip(results) {
        let label = gates[g].label.clone();
        match res {
            Ok(p) => {
                converged &= p.converged;
                csv.push_str(&csv_row(&label, r, &p));
                rows.push(ScanRow::Ok {
                    gate: label,
                    r,
                    mean_energy: p.mean_energy,
                    f_wc: p.fidelity.f_wc,
                    epsilon: p.fidelity.epsilon,
                    analytic_epsilon: p.analytic,
                    lower_bound_mean_energy: p.lower_bound,
                    ratio: p.ratio(),
                    converged: p.converged,
                });
            }
            Err(e) => {
                failed = true;
                eprintln!("error: {label} at R={r}: {}", e.message);
                csv.push_str(&csv_error_row(&label, r));
                rows.push(ScanRow::Error {
                    gate: label,
                    r,
                    error: e.message,
                });
            }
        }
        csv.push('\n');
    }
    let text = match format {
        Format::Csv => csv,
        Format::Json => json(&rows)?,
    };
    emit(args.out.out.as_deref(), &text)?;
    Ok(if failed {
        Status::PartialFailure
    } else if !converged {
        Status::NotConverged
    } else {
        Status::Ok
    })
}

fn basis_state(dim: usize, x: usize) -> Result<CVector<f64>, Failure> {
    if x >= dim {
        return Err(Failure::invalid(format!(
            "input {x} out of range for dimension {dim}"
        )));
    }
    let mut v = CVector::zeros(dim);
    v[x] = Complex::new(1.0, 0.0);
    Ok(v)
}

fn load_circuit(path: Option<&Path>) -> Result<CircuitSpec<f64>, Failure> {
    let path = path.ok_or_else(|| Failure::invalid("--file is required for this mode"))?;
    Ok(CircuitSpec::from_file(path)?)
}

pub fn circuit(args: &CircuitArgs) -> Result<Status, Failure> {
    if args.out.format == Some(Format::Csv) {
        return Err(Failure::invalid("circuit reports are JSON only"));
    }
    let out = args.out.out.as_deref();
    match args.mode {
        Mode::Quantum => {
            let c = load_circuit(args.file.as_deref())?;
            let input = basis_state(1 << c.n, args.input)?;
            let report = simulate_circuit(&c, args.r, &input)?;
            emit(out, &json(&report)?)?;
            Ok(Status::Ok)
        }
        Mode::Classical => {
            let c = load_circuit(args.file.as_deref())?;
            let report = classical_run(&c, args.input, args.r, args.energy)?;
            let mut table = format!(
                "{:>6}  {:>width$}  {:>24}\n",
                "y",
                "bits",
                "p(y)",
                width = c.n as usize
            );
            for (y, p) in report.distribution.iter().enumerate() {
                if *p > 0.0 {
                    let bits = format!("{y:0width$b}", width = c.n as usize);
                    table.push_str(&format!("{y:>6}  {bits}  {:>24}\n", cell(*p)));
                }
            }
            emit(None, &table)?;
            emit(out, &json(&report)?)?;
            Ok(Status::Ok)
        }
        Mode::Alternating => {
            let gate = if args.gate.gate.is_some() || args.gate.gate_file.is_some() {
                resolve_gate(&args.gate)?
            } else {
                load_circuit(args.file.as_deref())?.composed()?
            };
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let copies: Vec<CVector<f64>> = (0..2 * args.m as usize)
                .map(|_| random_pure_state(gate.dim(), &mut rng))
                .collect();
            let opts = WorstCaseOptions {
                seed: args.seed,
                probes: 2000,
                ..Default::default()
            };
            let report: RunReport = alternating_experiment(&gate, args.m, args.r, &copies, &opts)?;
            emit(out, &json(&report)?)?;
            let converged = report
                .alternating
                .as_ref()
                .is_some_and(|a| a.solver_converged);
            Ok(if converged {
                Status::Ok
            } else {
                Status::NotConverged
            })
        }
    }
}

#[derive(Serialize)]
struct BoundsEntry {
    report: BoundReport,
    /// Capacity any universal processor on this system needs at this error.
    #[serde(serialize_with = "sig17_opt")]
    universal_capacity_lower_bound: Option<f64>,
}

#[derive(Serialize)]
struct BoundsOutput {
    gate: String,
    system_energies: Vec<u32>,
    entries: Vec<BoundsEntry>,
}

pub fn bounds(args: &BoundsArgs) -> Result<Status, Failure> {
    let gate = resolve_gate(&args.gate)?;
    let system = gate.natural_system()?;
    let kind = match args.measure {
        Measure::Energy => MeasureKind::Energy,
        Measure::CapacityComplement => MeasureKind::CapacityComplement,
        Measure::Coherence => MeasureKind::RelEntropyCoherence,
    };
    let entries = args
        .epsilon
        .iter()
        .map(|&eps| {
            Ok(BoundsEntry {
                report: bound_report(&gate, &system, eps, kind, args.seed)?,
                universal_capacity_lower_bound: (kind != MeasureKind::RelEntropyCoherence)
                    .then(|| capacity_lower_bound(&system, eps))
                    .transpose()?,
            })
        })
        .collect::<Result<Vec<_>, ergon_core::Error>>()?;
    let text = match args.out.format.unwrap_or(Format::Json) {
        Format::Json => json(&BoundsOutput {
            gate: gate.label.clone(),
            system_energies: system.energies().to_vec(),
            entries,
        })?,
        Format::Csv => {
            let opt = |v: Option<f64>| v.map(cell).unwrap_or_default();
            let mut s = String::from(
                "gate,measure,epsilon,lower_mean,lower_capacity,achievable_mean,achievable_capacity,m_star,vacuous,universal_capacity_lower_bound\n",
            );
            for e in &entries {
                let r = &e.report;
                let measure = serde_json::to_value(r.measure)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default();
                s.push_str(
                    &[
                        text_cell(&r.gate),
                        measure,
                        cell(r.epsilon),
                        cell(r.lower_mean),
                        opt(r.lower_capacity),
                        opt(r.achievable_mean),
                        opt(r.achievable_capacity),
                        r.m_star.map(|m| m.to_string()).unwrap_or_default(),
                        r.vacuous.to_string(),
                        opt(e.universal_capacity_lower_bound),
                    ]
                    .join(","),
                );
                s.push('\n');
            }
            s
        }
    };
    emit(args.out.out.as_deref(), &text)?;
    Ok(Status::Ok)
}
