//! Circuits driven by one shared battery.
//!
//! The joint statevector lives on `register ⊗ battery` and is indexed
//! `x * levels + b`. A gate on `k` sites is applied sector by sector: for each
//! spectator configuration and each local energy `E = E_loc(x) + b` inside
//! `[k ||H_site||, capacity]` the gate acts on the local digits, and outside
//! that window it acts as the identity. The full joint unitary is never formed.

use std::path::Path;

use serde::Serialize;

use crate::dilation::{induced_channel, SectorDilation, DENSE_LIMIT};
use crate::error::{Error, Result};
use crate::fidelity::{worst_case_fidelity, WorstCaseOptions};
use crate::gates::{builtin, load_matrix_file, Gate};
use crate::io::{parse_json, sig17, sig17_opt, sig17_vec, CircuitFile};
use crate::linalg::{CMatrix, CVector};
use crate::scalar::{creal, czero, Complex, Real};
use crate::spectra::{BatterySim, SystemSpec};

/// Largest joint statevector the simulators will allocate.
pub const JOINT_LIMIT: usize = 1 << 24;

/// `sites` copies of one equally spaced site; digit `0` is the most significant.
#[derive(Debug, Clone)]
pub struct Register {
    sites: usize,
    site: SystemSpec,
    strides: Vec<usize>,
    energies: Vec<u32>,
}

impl Register {
    pub fn new(sites: usize, site: SystemSpec) -> Result<Self> {
        let d = site.dim();
        let dim = (0..sites)
            .try_fold(1usize, |acc, _| acc.checked_mul(d))
            .filter(|&n| n <= JOINT_LIMIT)
            .ok_or(Error::DimensionGuard {
                dim: usize::MAX,
                limit: JOINT_LIMIT,
            })?;
        let strides: Vec<usize> = (0..sites).map(|j| d.pow((sites - 1 - j) as u32)).collect();
        let energies = (0..dim)
            .map(|x| strides.iter().map(|&s| site.energy((x / s) % d)).sum())
            .collect();
        Ok(Self {
            sites,
            site,
            strides,
            energies,
        })
    }

    pub fn qubits(n: u32) -> Result<Self> {
        Self::new(n as usize, SystemSpec::uniform_qubits(1)?)
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn site(&self) -> &SystemSpec {
        &self.site
    }

    pub fn energy(&self, x: usize) -> u32 {
        self.energies[x]
    }

    /// Largest register energy.
    pub fn norm(&self) -> u32 {
        self.site.norm() * self.sites as u32
    }

    fn digit(&self, x: usize, site: usize) -> usize {
        (x / self.strides[site]) % self.site.dim()
    }

    fn check_targets(&self, targets: &[usize], gate_dim: usize) -> Result<()> {
        if targets.is_empty() {
            return Err(Error::InvalidCircuit("gate without targets".into()));
        }
        for (i, &t) in targets.iter().enumerate() {
            if t >= self.sites {
                return Err(Error::InvalidCircuit(format!(
                    "target {t} out of range for {} sites",
                    self.sites
                )));
            }
            if targets[..i].contains(&t) {
                return Err(Error::InvalidCircuit(format!("target {t} repeated")));
            }
        }
        let local = self.site.dim().pow(targets.len() as u32);
        if local != gate_dim {
            return Err(Error::DimensionMismatch {
                expected: local,
                found: gate_dim,
            });
        }
        Ok(())
    }

    /// Offsets and energies of the local configurations on `targets`.
    fn local_layout(&self, targets: &[usize]) -> (Vec<usize>, Vec<u32>) {
        let d = self.site.dim();
        let k = targets.len();
        let local_dim = d.pow(k as u32);
        let mut offsets = Vec::with_capacity(local_dim);
        let mut energies = Vec::with_capacity(local_dim);
        for l in 0..local_dim {
            let mut off = 0;
            let mut e = 0;
            for (i, &t) in targets.iter().enumerate() {
                let digit = (l / d.pow((k - 1 - i) as u32)) % d;
                off += digit * self.strides[t];
                e += self.site.energy(digit);
            }
            offsets.push(off);
            energies.push(e);
        }
        (offsets, energies)
    }

    fn spectator_bases(&self, targets: &[usize]) -> Vec<usize> {
        (0..self.dim())
            .filter(|&x| targets.iter().all(|&t| self.digit(x, t) == 0))
            .collect()
    }

    /// Applies a local gate to a register vector (no battery).
    pub fn apply_plain<T: Real>(
        &self,
        psi: &mut CVector<T>,
        gate: &CMatrix<T>,
        targets: &[usize],
    ) -> Result<()> {
        self.check_targets(targets, gate.nrows())?;
        if psi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: psi.len(),
            });
        }
        let (offsets, _) = self.local_layout(targets);
        let mut buf = vec![czero::<T>(); offsets.len()];
        for base in self.spectator_bases(targets) {
            for (slot, &off) in buf.iter_mut().zip(&offsets) {
                *slot = psi[base + off];
            }
            for (i, &off) in offsets.iter().enumerate() {
                let mut acc = czero();
                for (j, &v) in buf.iter().enumerate() {
                    acc += gate[(i, j)] * v;
                }
                psi[base + off] = acc;
            }
        }
        Ok(())
    }

    /// Dense embedding of a local gate into the full register.
    pub fn embed<T: Real>(&self, gate: &CMatrix<T>, targets: &[usize]) -> Result<CMatrix<T>> {
        let n = self.dim();
        if n > DENSE_LIMIT {
            return Err(Error::DimensionGuard {
                dim: n,
                limit: DENSE_LIMIT,
            });
        }
        let mut out = CMatrix::zeros(n, n);
        for c in 0..n {
            let mut col = CVector::zeros(n);
            col[c] = creal(T::one());
            self.apply_plain(&mut col, gate, targets)?;
            out.set_column(c, &col);
        }
        Ok(out)
    }
}

/// Register ⊗ battery statevector.
#[derive(Debug, Clone)]
pub struct RegisterState<T: Real> {
    amps: Vec<Complex<T>>,
    levels: usize,
}

impl<T: Real> RegisterState<T> {
    pub fn product(register: &Register, psi: &CVector<T>, battery: &[T]) -> Result<Self> {
        if psi.len() != register.dim() {
            return Err(Error::DimensionMismatch {
                expected: register.dim(),
                found: psi.len(),
            });
        }
        let levels = battery.len();
        if psi.len().saturating_mul(levels) > JOINT_LIMIT {
            return Err(Error::DimensionGuard {
                dim: psi.len().saturating_mul(levels),
                limit: JOINT_LIMIT,
            });
        }
        let mut amps = Vec::with_capacity(psi.len() * levels);
        for a in psi.iter() {
            amps.extend(battery.iter().map(|&w| *a * creal(w)));
        }
        Ok(Self { amps, levels })
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Applies the dilation of `gate` on `targets`, drawing on the shared battery.
    pub fn apply_gate(
        &mut self,
        register: &Register,
        gate: &CMatrix<T>,
        targets: &[usize],
    ) -> Result<()> {
        register.check_targets(targets, gate.nrows())?;
        let capacity = (self.levels - 1) as u32;
        let lo = register.site().norm() * targets.len() as u32;
        if lo > capacity {
            return Ok(());
        }
        let (offsets, energies) = register.local_layout(targets);
        let l = self.levels;
        let mut buf = vec![czero::<T>(); offsets.len()];
        for base in register.spectator_bases(targets) {
            // lo is the largest local energy, so e - E_loc never underflows
            for e in lo..=capacity {
                for (i, slot) in buf.iter_mut().enumerate() {
                    *slot = self.amps[(base + offsets[i]) * l + (e - energies[i]) as usize];
                }
                for i in 0..offsets.len() {
                    let mut acc = czero();
                    for (j, &v) in buf.iter().enumerate() {
                        acc += gate[(i, j)] * v;
                    }
                    self.amps[(base + offsets[i]) * l + (e - energies[i]) as usize] = acc;
                }
            }
        }
        Ok(())
    }

    /// Mean register and battery energies.
    pub fn energies(&self, register: &Register) -> (T, T) {
        let mut reg = T::zero();
        let mut bat = T::zero();
        for (k, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p == T::zero() {
                continue;
            }
            reg += p * T::of_int(register.energy(k / self.levels) as i64);
            bat += p * T::of_int((k % self.levels) as i64);
        }
        (reg, bat)
    }

    /// `⟨φ| Tr_B |Φ⟩⟨Φ| |φ⟩` for a register vector `φ`.
    pub fn overlap(&self, phi: &CVector<T>) -> T {
        let l = self.levels;
        let mut acc = T::zero();
        for b in 0..l {
            let mut z = czero();
            for (x, p) in phi.iter().enumerate() {
                z += p.conj() * self.amps[x * l + b];
            }
            acc += z.norm_sqr();
        }
        acc
    }

    /// Basis-measurement distribution of the register.
    pub fn register_distribution(&self) -> Vec<T> {
        self.amps
            .chunks(self.levels)
            .map(|row| row.iter().fold(T::zero(), |a, z| a + z.norm_sqr()))
            .collect()
    }

    /// Reduced state of the register.
    pub fn reduced_register(&self) -> CMatrix<T> {
        let l = self.levels;
        let d = self.amps.len() / l;
        let mut rho = CMatrix::zeros(d, d);
        for x in 0..d {
            for y in x..d {
                let mut acc = czero();
                for b in 0..l {
                    acc += self.amps[x * l + b] * self.amps[y * l + b].conj();
                }
                rho[(x, y)] = acc;
                rho[(y, x)] = acc.conj();
            }
        }
        rho
    }

    /// Reduced state of one site.
    pub fn reduced_site(&self, register: &Register, site: usize) -> CMatrix<T> {
        let d = register.site().dim();
        let l = self.levels;
        let stride = register.strides[site];
        let mut rho = CMatrix::zeros(d, d);
        for x in 0..register.dim() {
            if register.digit(x, site) != 0 {
                continue;
            }
            for i in 0..d {
                for j in 0..d {
                    let (xi, xj) = ((x + i * stride) * l, (x + j * stride) * l);
                    let mut acc = czero();
                    for b in 0..l {
                        acc += self.amps[xi + b] * self.amps[xj + b].conj();
                    }
                    rho[(i, j)] += acc;
                }
            }
        }
        rho
    }

    /// `|| Tr_B |Φ⟩⟨Φ| - |φ⟩⟨φ| ||_1`, computed in the span of the battery
    /// slices and `φ` without forming the register density matrix.
    pub fn trace_norm_to_pure(&self, phi: &CVector<T>) -> T {
        let l = self.levels;
        let d = self.amps.len() / l;
        // columns: the battery slices a_b (b = 0..l) then φ
        let cols: Vec<CVector<T>> = (0..l)
            .map(|b| CVector::from_fn(d, |x, _| self.amps[x * l + b]))
            .filter(|v| v.norm_squared() > T::zero())
            .chain(std::iter::once(phi.clone()))
            .collect();
        let m = cols.len();
        let gram = CMatrix::from_fn(m, m, |i, j| cols[i].dotc(&cols[j]));
        let (evals, evecs) = crate::linalg::hermitian_eigen(&gram);
        let root = CMatrix::from_fn(m, m, |i, j| {
            (0..m).fold(czero(), |acc, k| {
                acc + evecs[(i, k)] * creal(evals[k].max(T::zero()).sqrt()) * evecs[(j, k)].conj()
            })
        });
        // Tr_B Φ - φφ† = B J B† with B = [a_0 .. φ], J = diag(1, .., 1, -1)
        let mut signed = root.clone();
        for i in 0..m {
            signed[(m - 1, i)] = -signed[(m - 1, i)];
        }
        let core = &root * signed;
        crate::linalg::trace_norm_hermitian(&core)
    }
}

#[derive(Debug, Clone)]
pub struct CircuitGate<T: Real> {
    pub gate: Gate<T>,
    pub targets: Vec<usize>,
}

/// Gates on a qubit register; qubit 0 is the most significant bit and the first
/// target is the most significant bit of the gate's local index.
#[derive(Debug, Clone)]
pub struct CircuitSpec<T: Real> {
    pub n: u32,
    pub gates: Vec<CircuitGate<T>>,
    pub label: String,
}

impl<T: Real> CircuitSpec<T> {
    pub fn new(n: u32, gates: Vec<CircuitGate<T>>, label: impl Into<String>) -> Result<Self> {
        let register = Register::qubits(n)?;
        for g in &gates {
            register.check_targets(&g.targets, g.gate.dim())?;
        }
        Ok(Self {
            n,
            gates,
            label: label.into(),
        })
    }

    /// Reads a circuit file; `matrix_file` paths are relative to the file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: CircuitFile = parse_json(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let gates = file
            .gates
            .iter()
            .map(|entry| {
                let gate = match (&entry.name, &entry.matrix_file) {
                    (Some(name), None) => builtin(name)?,
                    (None, Some(file)) => load_matrix_file(&dir.join(file))?,
                    _ => {
                        return Err(Error::InvalidCircuit(
                            "each gate needs exactly one of name or matrix_file".into(),
                        ))
                    }
                };
                Ok(CircuitGate {
                    gate,
                    targets: entry.targets.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::new(file.qubits, gates, label)
    }

    pub fn register(&self) -> Result<Register> {
        Register::qubits(self.n)
    }

    /// `G_N ... G_1` as one gate.
    pub fn composed(&self) -> Result<Gate<T>> {
        let register = self.register()?;
        let mut u = CMatrix::identity(register.dim(), register.dim());
        for g in &self.gates {
            u = register.embed(&g.gate.matrix, &g.targets)? * u;
        }
        Gate::new(self.label.clone(), u)
    }

    /// `G_N ... G_1 |ψ⟩` without a battery.
    pub fn ideal_output(&self, psi: &CVector<T>) -> Result<CVector<T>> {
        let register = self.register()?;
        let mut out = psi.clone();
        for g in &self.gates {
            register.apply_plain(&mut out, &g.gate.matrix, &g.targets)?;
        }
        Ok(out)
    }
}

/// Energies after one step of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyStep {
    pub step: usize,
    pub gate: String,
    #[serde(serialize_with = "sig17")]
    pub register: f64,
    #[serde(serialize_with = "sig17")]
    pub battery: f64,
    #[serde(serialize_with = "sig17")]
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlternatingSummary {
    pub m: u32,
    /// Worst-case infidelity of a single gate at this battery size.
    #[serde(serialize_with = "sig17")]
    pub epsilon: f64,
    /// Trace distance `½||ρ_j - ideal_j||_1` of every copy.
    #[serde(serialize_with = "sig17_vec")]
    pub copy_trace_distances: Vec<f64>,
    /// `||ρ_out - ideal||_1` over all copies jointly.
    #[serde(serialize_with = "sig17")]
    pub cumulative_deviation: f64,
    /// `4 m sqrt(ε)`.
    #[serde(serialize_with = "sig17")]
    pub bound: f64,
    pub within_bound: bool,
    pub solver_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub mode: String,
    pub label: String,
    pub sites: usize,
    #[serde(rename = "R")]
    pub r: u32,
    pub capacity: u32,
    /// `⟨ideal| ρ_out |ideal⟩` for the register.
    #[serde(serialize_with = "sig17")]
    pub fidelity: f64,
    #[serde(serialize_with = "sig17")]
    pub infidelity: f64,
    /// Largest change of total mean energy over the run.
    #[serde(serialize_with = "sig17")]
    pub energy_drift: f64,
    pub energy_trace: Vec<EnergyStep>,
    /// Reduced register state as `[re, im]` pairs; omitted above 64 dimensions.
    #[serde(
        skip_serializing_if = "Option::is_none",
        serialize_with = "sig17_matrix_opt"
    )]
    pub final_register: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alternating: Option<AlternatingSummary>,
}

fn sig17_matrix_opt<S: serde::Serializer>(
    m: &Option<Vec<Vec<[f64; 2]>>>,
    s: S,
) -> Result<S::Ok, S::Error> {
    match m {
        Some(rows) => crate::io::sig17_matrix(rows, s),
        None => s.serialize_none(),
    }
}

const REPORT_MATRIX_LIMIT: usize = 64;

fn matrix_rows<T: Real>(m: &CMatrix<T>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|r| {
            (0..m.ncols())
                .map(|c| [m[(r, c)].re.as_f64(), m[(r, c)].im.as_f64()])
                .collect()
        })
        .collect()
}

struct Tracer {
    steps: Vec<EnergyStep>,
    start: f64,
    drift: f64,
}

impl Tracer {
    fn new() -> Self {
        Self {
            steps: Vec::new(),
            start: 0.0,
            drift: 0.0,
        }
    }

    fn record<T: Real>(&mut self, state: &RegisterState<T>, register: &Register, gate: &str) {
        let (reg, bat) = state.energies(register);
        let (reg, bat) = (reg.as_f64(), bat.as_f64());
        let total = reg + bat;
        if self.steps.is_empty() {
            self.start = total;
        }
        self.drift = self.drift.max((total - self.start).abs());
        self.steps.push(EnergyStep {
            step: self.steps.len(),
            gate: gate.to_string(),
            register: reg,
            battery: bat,
            total,
        });
    }
}

/// Runs the circuit with one sine battery of capacity `R n` shared by all gates.
pub fn simulate_circuit<T: Real>(
    c: &CircuitSpec<T>,
    r: u32,
    input: &CVector<T>,
) -> Result<RunReport> {
    let register = c.register()?;
    let system = SystemSpec::uniform_qubits(c.n)?;
    let battery = BatterySim::<T>::sine(&system, r)?;
    if (input.norm_squared() - T::one()).abs() > crate::spectra::state_tol::<T>() {
        return Err(Error::InvalidState("input state is not normalized".into()));
    }
    let mut state = RegisterState::product(&register, input, battery.amplitudes())?;
    let mut tracer = Tracer::new();
    tracer.record(&state, &register, "start");
    for g in &c.gates {
        state.apply_gate(&register, &g.gate.matrix, &g.targets)?;
        tracer.record(&state, &register, &g.gate.label);
    }
    let ideal = c.ideal_output(input)?;
    let fidelity = state.overlap(&ideal).as_f64();
    let final_register =
        (register.dim() <= REPORT_MATRIX_LIMIT).then(|| matrix_rows(&state.reduced_register()));
    Ok(RunReport {
        mode: "quantum".into(),
        label: c.label.clone(),
        sites: c.n as usize,
        r,
        capacity: battery.capacity(),
        fidelity,
        infidelity: 1.0 - fidelity,
        energy_drift: tracer.drift,
        energy_trace: tracer.steps,
        final_register,
        alternating: None,
    })
}

/// Applies `U_G`, `U_G†`, `U_G`, ... to `2m` fresh copies in turn, all powered by
/// one battery sized for a single gate. `copies` holds the `2m` input states.
pub fn alternating_experiment<T: Real>(
    gate: &Gate<T>,
    m: u32,
    r: u32,
    copies: &[CVector<T>],
    opts: &WorstCaseOptions,
) -> Result<RunReport> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let count = 2 * m as usize;
    if copies.len() != count {
        return Err(Error::InvalidParameter(format!(
            "expected {count} input copies, found {}",
            copies.len()
        )));
    }
    let site = gate.natural_system()?;
    let battery = BatterySim::<T>::sine(&site, r)?;
    let levels = battery.levels();
    let joint = (site.dim() as f64).powi(count as i32) * levels as f64;
    if joint > JOINT_LIMIT as f64 {
        return Err(Error::DimensionGuard {
            dim: joint.min(usize::MAX as f64) as usize,
            limit: JOINT_LIMIT,
        });
    }
    let register = Register::new(count, site.clone())?;
    let mut input = CVector::from_element(1, creal(T::one()));
    let mut ideal = input.clone();
    let dagger = gate.dagger();
    let mut ideal_copies = Vec::with_capacity(count);
    for (j, psi) in copies.iter().enumerate() {
        if psi.len() != site.dim() {
            return Err(Error::DimensionMismatch {
                expected: site.dim(),
                found: psi.len(),
            });
        }
        let g = if j % 2 == 0 { gate } else { &dagger };
        let out = &g.matrix * psi;
        input = input.kronecker(psi);
        ideal = ideal.kronecker(&out);
        ideal_copies.push(out);
    }
    if (input.norm_squared() - T::one()).abs() > crate::spectra::state_tol::<T>() {
        return Err(Error::InvalidState(
            "input copies are not normalized".into(),
        ));
    }

    let mut state = RegisterState::product(&register, &input, battery.amplitudes())?;
    let mut tracer = Tracer::new();
    tracer.record(&state, &register, "start");
    for j in 0..count {
        let g = if j % 2 == 0 { gate } else { &dagger };
        state.apply_gate(&register, &g.matrix, &[j])?;
        tracer.record(&state, &register, &g.label);
    }

    let copy_trace_distances = (0..count)
        .map(|j| {
            let rho = state.reduced_site(&register, j);
            let target = &ideal_copies[j] * ideal_copies[j].adjoint();
            (crate::linalg::trace_norm_hermitian(&(rho - target)) / T::of(2.0)).as_f64()
        })
        .collect();
    let cumulative = state.trace_norm_to_pure(&ideal).as_f64();

    let dilation = SectorDilation::build(gate, &site, &battery)?;
    let channel = induced_channel(&dilation, &battery)?;
    let single = worst_case_fidelity(&channel, &gate.matrix, opts)?;
    let epsilon = single.epsilon.as_f64().max(0.0);
    let bound = 4.0 * m as f64 * epsilon.sqrt();
    let fidelity = state.overlap(&ideal).as_f64();
    let final_register =
        (register.dim() <= REPORT_MATRIX_LIMIT).then(|| matrix_rows(&state.reduced_register()));
    Ok(RunReport {
        mode: "alternating".into(),
        label: gate.label.clone(),
        sites: count,
        r,
        capacity: battery.capacity(),
        fidelity,
        infidelity: 1.0 - fidelity,
        energy_drift: tracer.drift,
        energy_trace: tracer.steps,
        final_register,
        alternating: Some(AlternatingSummary {
            m,
            epsilon,
            copy_trace_distances,
            cumulative_deviation: cumulative,
            bound,
            within_bound: cumulative <= bound,
            solver_converged: single.converged,
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicalReport {
    pub label: String,
    pub qubits: u32,
    #[serde(rename = "R")]
    pub r: u32,
    pub input: usize,
    pub total_energy: u32,
    pub battery_level: u32,
    #[serde(serialize_with = "sig17_vec")]
    pub distribution: Vec<f64>,
    /// `|⟨y|G_N ... G_1|x⟩|²` from the battery-free statevector.
    #[serde(serialize_with = "sig17_vec")]
    pub ideal: Vec<f64>,
    #[serde(serialize_with = "sig17")]
    pub max_deviation: f64,
    #[serde(serialize_with = "sig17_opt")]
    pub battery_mean_after: Option<f64>,
}

/// Basis input `x` with the battery in the single level `E - E_x`. `energy`
/// defaults to `n`, the smallest total energy in the register's window.
pub fn classical_run<T: Real>(
    c: &CircuitSpec<T>,
    x: usize,
    r: u32,
    energy: Option<u32>,
) -> Result<ClassicalReport> {
    let register = c.register()?;
    if x >= register.dim() {
        return Err(Error::InvalidParameter(format!(
            "basis input {x} out of range for {} qubits",
            c.n
        )));
    }
    let system = SystemSpec::uniform_qubits(c.n)?;
    if r < 3 {
        return Err(Error::InvalidRepetition(r));
    }
    let (lo, hi) = (c.n, r * c.n);
    let total = energy.unwrap_or(lo);
    if total < lo || total > hi {
        return Err(Error::EnergyOutOfRange {
            energy: total,
            lo,
            hi,
        });
    }
    let level = total - register.energy(x);
    let battery = BatterySim::<T>::single_level(&system, r, level)?;
    let mut psi = CVector::zeros(register.dim());
    psi[x] = creal(T::one());
    let mut state = RegisterState::product(&register, &psi, battery.amplitudes())?;
    for g in &c.gates {
        state.apply_gate(&register, &g.gate.matrix, &g.targets)?;
    }
    let distribution: Vec<f64> = state
        .register_distribution()
        .into_iter()
        .map(|p| p.as_f64())
        .collect();
    let ideal: Vec<f64> = c
        .ideal_output(&psi)?
        .iter()
        .map(|z| z.norm_sqr().as_f64())
        .collect();
    let max_deviation = distribution
        .iter()
        .zip(&ideal)
        .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    Ok(ClassicalReport {
        label: c.label.clone(),
        qubits: c.n,
        r,
        input: x,
        total_energy: total,
        battery_level: level,
        distribution,
        ideal,
        max_deviation,
        battery_mean_after: Some(state.energies(&register).1.as_f64()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::builtin;

    fn gate(name: &str, targets: &[usize]) -> CircuitGate<f64> {
        CircuitGate {
            gate: builtin(name).unwrap(),
            targets: targets.to_vec(),
        }
    }

    fn zero_state(n: u32) -> CVector<f64> {
        let mut v = CVector::zeros(1 << n);
        v[0] = creal(1.0);
        v
    }

    #[test]
    fn embed_orders_targets_big_endian() {
        let reg = Register::qubits(2).unwrap();
        let cnot: Gate<f64> = builtin("CNOT").unwrap();
        assert_eq!(reg.embed(&cnot.matrix, &[0, 1]).unwrap(), cnot.matrix);
        // control on qubit 1: |01⟩ -> |11⟩
        let flipped = reg.embed(&cnot.matrix, &[1, 0]).unwrap();
        assert_eq!(flipped[(3, 1)], creal(1.0));
    }

    #[test]
    fn bad_targets_rejected() {
        let err = CircuitSpec::new(2, vec![gate("CNOT", &[0, 0])], "c");
        assert!(matches!(err, Err(Error::InvalidCircuit(_))));
        let err = CircuitSpec::new(2, vec![gate("H", &[2])], "c");
        assert!(matches!(err, Err(Error::InvalidCircuit(_))));
        let err = CircuitSpec::new(2, vec![gate("H", &[0, 1])], "c");
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn empty_circuit_is_exact() {
        let c = CircuitSpec::<f64>::new(2, vec![], "empty").unwrap();
        let rep = simulate_circuit(&c, 5, &zero_state(2)).unwrap();
        assert!((rep.fidelity - 1.0).abs() < 1e-14);
        assert_eq!(rep.energy_trace.len(), 1);
        assert!((rep.energy_trace[0].battery - 5.0).abs() < 1e-12);
    }

    #[test]
    fn bell_circuit_conserves_energy() {
        let c = CircuitSpec::new(2, vec![gate("H", &[0]), gate("CNOT", &[0, 1])], "bell").unwrap();
        let rep = simulate_circuit(&c, 200, &zero_state(2)).unwrap();
        assert!(rep.fidelity > 0.999);
        assert!(rep.energy_drift < 1e-12);
        for step in &rep.energy_trace {
            assert!(step.battery >= 0.0 && step.battery <= 400.0);
        }
    }

    #[test]
    fn classical_hadamard_is_even() {
        let c = CircuitSpec::new(1, vec![gate("H", &[0])], "h").unwrap();
        let rep = classical_run(&c, 0, 4, None).unwrap();
        assert!((rep.distribution[0] - 0.5).abs() < 1e-14);
        assert!((rep.distribution[1] - 0.5).abs() < 1e-14);
        assert_eq!(rep.total_energy, 1);
        assert_eq!(rep.battery_level, 1);
    }

    #[test]
    fn classical_energy_window_enforced() {
        let c = CircuitSpec::new(1, vec![gate("X", &[0])], "x").unwrap();
        assert!(matches!(
            classical_run(&c, 0, 4, Some(0)),
            Err(Error::EnergyOutOfRange { .. })
        ));
        assert!(matches!(
            classical_run(&c, 0, 4, Some(5)),
            Err(Error::EnergyOutOfRange { .. })
        ));
        let rep = classical_run(&c, 0, 4, Some(4)).unwrap();
        assert_eq!(rep.distribution, vec![0.0, 1.0]);
    }

    #[test]
    fn trace_norm_to_pure_matches_dense() {
        let c = CircuitSpec::new(2, vec![gate("H", &[0]), gate("CNOT", &[0, 1])], "bell").unwrap();
        let reg = c.register().unwrap();
        let bat = BatterySim::<f64>::sine(&SystemSpec::uniform_qubits(2).unwrap(), 3).unwrap();
        let mut st = RegisterState::product(&reg, &zero_state(2), bat.amplitudes()).unwrap();
        for g in &c.gates {
            st.apply_gate(&reg, &g.gate.matrix, &g.targets).unwrap();
        }
        let ideal = c.ideal_output(&zero_state(2)).unwrap();
        let dense = crate::linalg::trace_norm_hermitian(
            &(st.reduced_register() - &ideal * ideal.adjoint()),
        );
        assert!((st.trace_norm_to_pure(&ideal) - dense).abs() < 1e-12);
        assert!(dense > 1e-3);
    }

    #[test]
    fn alternating_guard() {
        let x: Gate<f64> = builtin("X").unwrap();
        let copies = vec![zero_state(1); 24];
        assert!(matches!(
            alternating_experiment(&x, 12, 64, &copies, &WorstCaseOptions::default()),
            Err(Error::DimensionGuard { .. })
        ));
    }
}
