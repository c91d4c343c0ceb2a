//! Energy-preserving dilation of a system gate onto system ⊗ battery.
//!
//! The joint space is split into total-energy sectors. On every sector whose
//! energy lies in the window `[||H_S||, ||H_B||]` each system level pairs with
//! a valid battery level, and the dilation acts there as the target gate in
//! the sector basis `|x⟩ ⊗ |E - E_x⟩`. All remaining sectors are left alone.
//! The joint operator is stored sector by sector and is never materialized
//! except on the small debug path [`SectorDilation::dense`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gates::Gate;
use crate::linalg::{ensure_unitary, CMatrix, CVector};
use crate::scalar::{cabs, creal, czero, Complex, Real};
use crate::spectra::{mean_energy, BatterySim, EnergyObservable, SystemSpec};

/// Joint dimension above which [`SectorDilation::dense`] refuses to run.
pub const DENSE_LIMIT: usize = 4096;

/// Closed interval of total energies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EnergyWindow {
    pub lo: u32,
    pub hi: u32,
}

impl EnergyWindow {
    pub fn contains(&self, e: u32) -> bool {
        self.lo <= e && e <= self.hi
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> {
        self.lo..=self.hi
    }
}

/// Pairs `(x, E - E_x)` of the total-energy-`E` eigenspace, ordered by `x`.
pub fn sector_basis(system: &SystemSpec, capacity: u32, energy: u32) -> Vec<(usize, u32)> {
    system
        .energies()
        .iter()
        .enumerate()
        .filter(|&(_, &ex)| ex <= energy && energy - ex <= capacity)
        .map(|(x, &ex)| (x, energy - ex))
        .collect()
}

/// Total energies on which every system level has a battery partner.
pub fn e_ok(system: &SystemSpec, capacity: u32) -> EnergyWindow {
    EnergyWindow {
        lo: system.norm(),
        hi: capacity,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sector {
    pub energy: u32,
    pub basis: Vec<(usize, u32)>,
    /// `true` when the gate acts on this sector, `false` for the identity.
    pub active: bool,
}

/// Statevector on system ⊗ battery, indexed `x * levels + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState<T: Real> {
    amps: Vec<Complex<T>>,
    dim_s: usize,
    levels: usize,
}

impl<T: Real> JointState<T> {
    pub fn zeros(dim_s: usize, levels: usize) -> Self {
        Self {
            amps: vec![czero(); dim_s * levels],
            dim_s,
            levels,
        }
    }

    pub fn from_amplitudes(amps: Vec<Complex<T>>, dim_s: usize, levels: usize) -> Result<Self> {
        if amps.len() != dim_s * levels {
            return Err(Error::DimensionMismatch {
                expected: dim_s * levels,
                found: amps.len(),
            });
        }
        Ok(Self {
            amps,
            dim_s,
            levels,
        })
    }

    /// `|x⟩ ⊗ |b⟩`.
    pub fn basis(dim_s: usize, levels: usize, x: usize, b: usize) -> Self {
        let mut s = Self::zeros(dim_s, levels);
        s.amps[x * levels + b] = creal(T::one());
        s
    }

    /// `|ψ⟩ ⊗ |β⟩` for a system vector and a real battery amplitude vector.
    pub fn product(system: &CVector<T>, battery: &[T]) -> Self {
        let levels = battery.len();
        let mut amps = Vec::with_capacity(system.len() * levels);
        for a in system.iter() {
            amps.extend(battery.iter().map(|&w| *a * creal(w)));
        }
        Self {
            amps,
            dim_s: system.len(),
            levels,
        }
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    pub fn amp(&self, x: usize, b: usize) -> Complex<T> {
        self.amps[x * self.levels + b]
    }

    pub fn dim_s(&self) -> usize {
        self.dim_s
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn norm_sqr(&self) -> T {
        self.amps.iter().fold(T::zero(), |a, z| a + z.norm_sqr())
    }

    pub fn inner(&self, other: &Self) -> Complex<T> {
        self.amps
            .iter()
            .zip(&other.amps)
            .fold(czero(), |a, (u, v)| a + u.conj() * v)
    }

    pub fn mean_energy(&self, system: &SystemSpec) -> Result<T> {
        if system.dim() != self.dim_s {
            return Err(Error::DimensionMismatch {
                expected: self.dim_s,
                found: system.dim(),
            });
        }
        mean_energy(&self.amps, &EnergyObservable::joint(system, self.levels))
    }

    /// `Tr_B |Φ⟩⟨Φ|`.
    pub fn reduced_system(&self) -> CMatrix<T> {
        let (d, l) = (self.dim_s, self.levels);
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

    /// `Tr_S |Φ⟩⟨Φ|`.
    pub fn reduced_battery(&self) -> CMatrix<T> {
        let (d, l) = (self.dim_s, self.levels);
        let mut beta = CMatrix::zeros(l, l);
        for x in 0..d {
            let row = &self.amps[x * l..(x + 1) * l];
            for (b, &u) in row.iter().enumerate() {
                if u == czero() {
                    continue;
                }
                for (c, &v) in row.iter().enumerate() {
                    beta[(b, c)] += u * v.conj();
                }
            }
        }
        beta
    }
}

/// Block-diagonal energy-preserving unitary `U_G`.
#[derive(Debug, Clone)]
pub struct SectorDilation<T: Real> {
    system: SystemSpec,
    capacity: u32,
    gate: Gate<T>,
    sectors: Vec<Sector>,
    window: EnergyWindow,
}

impl<T: Real> SectorDilation<T> {
    /// Builds `U_G` for a gate on an equally spaced system and a battery ladder.
    pub fn build(gate: &Gate<T>, system: &SystemSpec, battery: &BatterySim<T>) -> Result<Self> {
        Self::with_capacity(gate, system, battery.capacity())
    }

    pub fn with_capacity(gate: &Gate<T>, system: &SystemSpec, capacity: u32) -> Result<Self> {
        ensure_unitary(&gate.matrix, T::of(1e-10).max(T::eps() * T::of(1e3)))?;
        if gate.dim() != system.dim() {
            return Err(Error::DimensionMismatch {
                expected: system.dim(),
                found: gate.dim(),
            });
        }
        if !system.is_uniform() {
            return Err(Error::NonUniformSpectrum);
        }
        let window = e_ok(system, capacity);
        let sectors = (0..=system.norm() + capacity)
            .map(|e| Sector {
                energy: e,
                basis: sector_basis(system, capacity, e),
                active: window.contains(e),
            })
            .collect();
        Ok(Self {
            system: system.clone(),
            capacity,
            gate: gate.clone(),
            sectors,
            window,
        })
    }

    pub fn system(&self) -> &SystemSpec {
        &self.system
    }

    pub fn gate(&self) -> &Gate<T> {
        &self.gate
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn levels(&self) -> usize {
        self.capacity as usize + 1
    }

    pub fn joint_dim(&self) -> usize {
        self.system.dim() * self.levels()
    }

    pub fn e_ok(&self) -> EnergyWindow {
        self.window
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    /// Matrix of the dilation restricted to sector `energy`, in [`sector_basis`] order.
    pub fn block(&self, energy: u32) -> Option<CMatrix<T>> {
        let sector = self.sectors.get(energy as usize)?;
        let n = sector.basis.len();
        Some(if sector.active {
            CMatrix::from_fn(n, n, |i, j| {
                self.gate.matrix[(sector.basis[i].0, sector.basis[j].0)]
            })
        } else {
            CMatrix::identity(n, n)
        })
    }

    /// The dilation of `G†`, which equals `U_G†`.
    pub fn dagger(&self) -> Self {
        Self {
            gate: self.gate.dagger(),
            ..self.clone()
        }
    }

    /// Applies `U_G` sector by sector.
    pub fn apply(&self, state: &JointState<T>) -> Result<JointState<T>> {
        let mut out = state.clone();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, state: &mut JointState<T>) -> Result<()> {
        if state.dim_s != self.system.dim() || state.levels != self.levels() {
            return Err(Error::DimensionMismatch {
                expected: self.joint_dim(),
                found: state.amps.len(),
            });
        }
        let d = self.system.dim();
        let l = self.levels();
        let energies = self.system.energies();
        let g = &self.gate.matrix;
        let mut buf = vec![czero::<T>(); d];
        for e in self.window.iter() {
            // active sectors contain every x with b = e - E_x
            for (x, slot) in buf.iter_mut().enumerate() {
                *slot = state.amps[x * l + (e - energies[x]) as usize];
            }
            for x in 0..d {
                let mut acc = czero();
                for (y, &v) in buf.iter().enumerate() {
                    acc += g[(x, y)] * v;
                }
                state.amps[x * l + (e - energies[x]) as usize] = acc;
            }
        }
        Ok(())
    }

    /// Full joint unitary; only for joint dimensions up to [`DENSE_LIMIT`].
    pub fn dense(&self) -> Result<CMatrix<T>> {
        let n = self.joint_dim();
        if n > DENSE_LIMIT {
            return Err(Error::DimensionGuard {
                dim: n,
                limit: DENSE_LIMIT,
            });
        }
        let l = self.levels();
        let mut u = CMatrix::zeros(n, n);
        for sector in &self.sectors {
            let block = self.block(sector.energy).expect("sector exists");
            for (i, &(x, b)) in sector.basis.iter().enumerate() {
                for (j, &(y, c)) in sector.basis.iter().enumerate() {
                    u[(x * l + b as usize, y * l + c as usize)] = block[(i, j)];
                }
            }
        }
        Ok(u)
    }

    /// Largest `||B†B - I||_max` over all sector blocks.
    pub fn block_unitarity_deviation(&self) -> T {
        self.sectors
            .iter()
            .map(|s| {
                let b = self.block(s.energy).expect("sector exists");
                crate::linalg::unitarity_deviation(&b)
            })
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// Kraus representation `{K_b}` of the channel induced on the system.
#[derive(Debug, Clone)]
pub struct KrausChannel<T: Real> {
    /// `(battery level b, K_b)` for every level whose operator is not negligible.
    pub ops: Vec<(u32, CMatrix<T>)>,
    pub label: String,
    pub r: u32,
    /// Frobenius mass `Σ ||K_b||²_F` of the operators that were dropped.
    pub dropped_mass: T,
}

/// Operators with every entry below this modulus are dropped.
pub const KRAUS_DROP: f64 = 1e-14;

impl<T: Real> KrausChannel<T> {
    pub fn dim(&self) -> usize {
        self.ops.first().map(|(_, k)| k.nrows()).unwrap_or(0)
    }

    /// Single-operator channel `ρ ↦ G ρ G†`.
    pub fn ideal(gate: &Gate<T>) -> Self {
        Self {
            ops: vec![(0, gate.matrix.clone())],
            label: gate.label.clone(),
            r: 0,
            dropped_mass: T::zero(),
        }
    }

    pub fn apply(&self, rho: &CMatrix<T>) -> CMatrix<T> {
        let d = rho.nrows();
        self.ops.iter().fold(CMatrix::zeros(d, d), |acc, (_, k)| {
            acc + k * rho * k.adjoint()
        })
    }

    /// `||Σ K†K - I||_max`.
    pub fn completeness_deviation(&self) -> T {
        let d = self.dim();
        let sum = self
            .ops
            .iter()
            .fold(CMatrix::<T>::zeros(d, d), |acc, (_, k)| {
                acc + k.adjoint() * k
            });
        crate::linalg::max_abs(&(sum - CMatrix::identity(d, d)))
    }
}

/// `K_b = (I ⊗ ⟨b|) U_G (I ⊗ |β⟩)`.
pub fn induced_channel<T: Real>(
    dilation: &SectorDilation<T>,
    battery: &BatterySim<T>,
) -> Result<KrausChannel<T>> {
    let d = dilation.system().dim();
    let l = dilation.levels();
    if battery.levels() != l {
        return Err(Error::DimensionMismatch {
            expected: l,
            found: battery.levels(),
        });
    }
    let mut columns = Vec::with_capacity(d);
    for y in 0..d {
        let mut e = CVector::zeros(d);
        e[y] = creal(T::one());
        columns.push(dilation.apply(&JointState::product(&e, battery.amplitudes()))?);
    }
    let drop = T::of(KRAUS_DROP);
    let mut ops = Vec::new();
    let mut dropped_mass = T::zero();
    for b in 0..l {
        let k = CMatrix::from_fn(d, d, |x, y| columns[y].amp(x, b));
        if crate::linalg::max_abs(&k) > drop {
            ops.push((b as u32, k));
        } else {
            dropped_mass += k.iter().fold(T::zero(), |a, z| a + z.norm_sqr());
        }
    }
    Ok(KrausChannel {
        ops,
        label: dilation.gate().label.clone(),
        r: battery.r(),
        dropped_mass,
    })
}

/// Battery state `Tr_S[U_G (ρ ⊗ β) U_G†]` left over after one use of the dilation.
pub fn residual_battery<T: Real>(
    dilation: &SectorDilation<T>,
    battery: &BatterySim<T>,
    probe: &CMatrix<T>,
) -> Result<CMatrix<T>> {
    let d = dilation.system().dim();
    if probe.nrows() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: probe.nrows(),
        });
    }
    let (weights, vectors) = crate::linalg::hermitian_eigen(probe);
    let l = dilation.levels();
    let mut out = CMatrix::zeros(l, l);
    for (k, &w) in weights.iter().enumerate() {
        if w <= T::zero() {
            continue;
        }
        let v = vectors.column(k).into_owned();
        let evolved = dilation.apply(&JointState::product(&v, battery.amplitudes()))?;
        out += evolved.reduced_battery().scale(w);
    }
    Ok(out)
}

/// `max |(U_{G1} U_{G2} - U_{G1 G2}) P_ok|` over the basis of the good sectors.
pub fn composition_check<T: Real>(
    g1: &Gate<T>,
    g2: &Gate<T>,
    system: &SystemSpec,
    battery: &BatterySim<T>,
) -> Result<T> {
    let u1 = SectorDilation::build(g1, system, battery)?;
    let u2 = SectorDilation::build(g2, system, battery)?;
    let composed = Gate::new(
        format!("{}·{}", g1.label, g2.label),
        &g1.matrix * &g2.matrix,
    )?;
    let u12 = SectorDilation::build(&composed, system, battery)?;
    let (d, l) = (system.dim(), u1.levels());
    let mut worst = T::zero();
    for e in u1.e_ok().iter() {
        for (x, b) in sector_basis(system, battery.capacity(), e) {
            let input = JointState::basis(d, l, x, b as usize);
            let lhs = u1.apply(&u2.apply(&input)?)?;
            let rhs = u12.apply(&input)?;
            for (p, q) in lhs.amps.iter().zip(&rhs.amps) {
                worst = worst.max(cabs(*p - *q));
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::builtin;

    fn qubit() -> SystemSpec {
        SystemSpec::uniform_qubits(1).unwrap()
    }

    #[test]
    fn sector_basis_examples() {
        let s = qubit();
        assert_eq!(sector_basis(&s, 4, 1), vec![(0, 1), (1, 0)]);
        assert_eq!(sector_basis(&s, 4, 0), vec![(0, 0)]);
        assert_eq!(sector_basis(&s, 4, 5), vec![(1, 4)]);
    }

    #[test]
    fn e_ok_examples() {
        assert_eq!(e_ok(&qubit(), 4), EnergyWindow { lo: 1, hi: 4 });
        let two = SystemSpec::uniform_qubits(2).unwrap();
        assert_eq!(e_ok(&two, 6), EnergyWindow { lo: 2, hi: 6 });
        for e in 2..=6 {
            assert_eq!(sector_basis(&two, 6, e).len(), 4);
        }
        assert!(sector_basis(&two, 6, 1).len() < 4);
        assert!(sector_basis(&two, 6, 7).len() < 4);
    }

    #[test]
    fn x_block_in_sector_one() {
        let s = qubit();
        let b = BatterySim::<f64>::sine(&s, 4).unwrap();
        let u = SectorDilation::build(&builtin("X").unwrap(), &s, &b).unwrap();
        let block = u.block(1).unwrap();
        assert_eq!(block[(0, 1)].re, 1.0);
        assert_eq!(block[(1, 0)].re, 1.0);
        assert_eq!(cabs(block[(0, 0)]), 0.0);
        // edge sectors are the identity
        assert_eq!(u.block(0).unwrap(), CMatrix::identity(1, 1));
        assert_eq!(u.block(5).unwrap(), CMatrix::identity(1, 1));
    }

    #[test]
    fn identity_gate_dilates_to_identity() {
        let s = qubit();
        let b = BatterySim::<f64>::sine(&s, 4).unwrap();
        let u = SectorDilation::build(&builtin("I").unwrap(), &s, &b).unwrap();
        assert_eq!(u.dense().unwrap(), CMatrix::identity(10, 10));
    }

    #[test]
    fn x_moves_energy_into_the_system() {
        let s = qubit();
        let b = BatterySim::<f64>::sine(&s, 4).unwrap();
        let u = SectorDilation::build(&builtin("X").unwrap(), &s, &b).unwrap();
        let out = u.apply(&JointState::basis(2, 5, 0, 2)).unwrap();
        assert_eq!(out, JointState::basis(2, 5, 1, 1));
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = qubit();
        let b = BatterySim::<f64>::sine(&s, 4).unwrap();
        let mut m = builtin::<f64>("X").unwrap();
        m.matrix[(0, 0)] = creal(0.5);
        assert!(matches!(
            SectorDilation::build(&m, &s, &b),
            Err(Error::NonUnitary { .. })
        ));
        let gapped = SystemSpec::from_energies(vec![0, 2]).unwrap();
        assert!(matches!(
            SectorDilation::with_capacity(&builtin::<f64>("X").unwrap(), &gapped, 8),
            Err(Error::NonUniformSpectrum)
        ));
        let u = SectorDilation::build(&builtin("X").unwrap(), &s, &b).unwrap();
        assert!(u.apply(&JointState::zeros(2, 4)).is_err());
    }

    #[test]
    fn dense_path_is_guarded() {
        let s = SystemSpec::uniform_qubits(3).unwrap();
        let u =
            SectorDilation::<f64>::with_capacity(&builtin("QFT3").unwrap(), &s, 3 * 200).unwrap();
        assert!(matches!(u.dense(), Err(Error::DimensionGuard { .. })));
    }

    #[test]
    fn x_channel_on_ground_state_is_exact() {
        let s = qubit();
        let b = BatterySim::<f64>::sine(&s, 4).unwrap();
        let u = SectorDilation::build(&builtin("X").unwrap(), &s, &b).unwrap();
        let ch = induced_channel(&u, &b).unwrap();
        let mut rho = CMatrix::zeros(2, 2);
        rho[(0, 0)] = creal(1.0);
        let out = ch.apply(&rho);
        assert!((out[(1, 1)].re - 1.0).abs() < 1e-15);
        assert!(cabs(out[(0, 0)]) < 1e-15);
        assert!(ch.completeness_deviation() < 1e-12);
    }

    #[test]
    fn identity_channel_collapses_to_identity() {
        let s = qubit();
        let b = BatterySim::<f64>::sine(&s, 4).unwrap();
        let u = SectorDilation::build(&builtin("I").unwrap(), &s, &b).unwrap();
        let ch = induced_channel(&u, &b).unwrap();
        let total = ch
            .ops
            .iter()
            .fold(CMatrix::<f64>::zeros(2, 2), |acc, (_, k)| {
                acc + k.adjoint() * k
            });
        assert!(crate::linalg::max_abs(&(total - CMatrix::identity(2, 2))) < 1e-12);
        // each K_b is β_b · I
        for (lvl, k) in &ch.ops {
            let w = b.amplitudes()[*lvl as usize];
            assert!((k[(0, 0)].re - w).abs() < 1e-15 && (k[(1, 1)].re - w).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_battery_examples() {
        let s = qubit();
        let b = BatterySim::<f64>::sine(&s, 4).unwrap();
        let mixed = CMatrix::<f64>::identity(2, 2).scale(0.5);
        let beta = CMatrix::from_fn(5, 5, |i, j| creal(b.amplitudes()[i] * b.amplitudes()[j]));
        for name in ["I", "Z"] {
            let u = SectorDilation::build(&builtin(name).unwrap(), &s, &b).unwrap();
            let res = residual_battery(&u, &b, &mixed).unwrap();
            assert!(crate::linalg::max_abs(&(res - &beta)) < 1e-12, "{name}");
        }
        let u = SectorDilation::build(&builtin("X").unwrap(), &s, &b).unwrap();
        let res = residual_battery(&u, &b, &mixed).unwrap();
        let mean = (0..5).fold(0.0, |a, k| a + k as f64 * res[(k, k)].re);
        assert!((mean - 2.0).abs() < 1e-12);
        assert!((res.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn composition_examples() {
        let s = qubit();
        let b = BatterySim::<f64>::sine(&s, 4).unwrap();
        let i = builtin("I").unwrap();
        let x = builtin("X").unwrap();
        assert_eq!(composition_check(&i, &i, &s, &b).unwrap(), 0.0);
        assert!(composition_check(&x, &x, &s, &b).unwrap() <= 1e-12);
    }
}
