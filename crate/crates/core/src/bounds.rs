//! Resource measures, gate resource generation, and the lower/upper bounds on
//! the battery resources needed to implement a gate within worst-case error ε.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gates::Gate;
use crate::linalg::{
    hermitian_eigenvalues, random_pure_state, shannon_bits, von_neumann_bits, CMatrix, CVector,
};
use crate::scalar::{creal, Real};
use crate::spectra::SystemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum MeasureKind {
    /// `Tr[H ρ]`
    Energy,
    /// `Tr[ρ (||H|| I - H)]`
    CapacityComplement,
    /// `S(ρ_diag) - S(ρ)` in bits
    RelEntropyCoherence,
}

/// A resource monotone on one system together with its regularity constants.
#[derive(Debug, Clone)]
pub struct ResourceMeasure {
    pub kind: MeasureKind,
    energies: Vec<u32>,
}

impl ResourceMeasure {
    pub fn new(kind: MeasureKind, system: &SystemSpec) -> Self {
        Self {
            kind,
            energies: system.energies().to_vec(),
        }
    }

    fn norm(&self) -> u32 {
        self.energies.iter().copied().max().unwrap_or(0)
    }

    /// Lipschitz constant `K` in `|M(ρ) - M(σ)| ≤ K ||ρ - σ||₁ + c`.
    pub fn lipschitz<T: Real>(&self) -> T {
        match self.kind {
            MeasureKind::Energy | MeasureKind::CapacityComplement => T::of_int(self.norm() as i64),
            MeasureKind::RelEntropyCoherence => T::of_int(self.energies.len() as i64).log2(),
        }
    }

    /// Regularity offset `c`.
    pub fn offset<T: Real>(&self) -> T {
        match self.kind {
            MeasureKind::RelEntropyCoherence => T::of(2.0),
            _ => T::zero(),
        }
    }

    pub fn additive(&self) -> bool {
        true
    }

    pub fn value<T: Real>(&self, rho: &CMatrix<T>) -> Result<T> {
        if rho.nrows() != self.energies.len() {
            return Err(Error::DimensionMismatch {
                expected: self.energies.len(),
                found: rho.nrows(),
            });
        }
        let energy = || {
            self.energies
                .iter()
                .enumerate()
                .fold(T::zero(), |a, (i, &e)| {
                    a + rho[(i, i)].re * T::of_int(e as i64)
                })
        };
        Ok(match self.kind {
            MeasureKind::Energy => energy(),
            MeasureKind::CapacityComplement => {
                T::of_int(self.norm() as i64) * rho.trace().re - energy()
            }
            MeasureKind::RelEntropyCoherence => coherence_of_state(rho),
        })
    }
}

/// `Δ_G H_S = G† H_S G - H_S` and its extreme eigenvalues.
#[derive(Debug, Clone)]
pub struct GateResourceProfile<T: Real> {
    pub delta: CMatrix<T>,
    pub lambda_max: T,
    pub lambda_min: T,
    /// Largest energy increase `M(G) = λmax(Δ)`.
    pub m_of_g: T,
    /// Largest energy increase of the inverse, `M(G†) = -λmin(Δ)`.
    pub m_of_gdag: T,
}

impl<T: Real> GateResourceProfile<T> {
    pub fn spread(&self) -> T {
        self.lambda_max - self.lambda_min
    }
}

pub fn gate_profile<T: Real>(
    gate: &Gate<T>,
    system: &SystemSpec,
) -> Result<GateResourceProfile<T>> {
    crate::linalg::ensure_unitary(&gate.matrix, T::of(1e-10).max(T::eps() * T::of(1e3)))?;
    if gate.dim() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            found: gate.dim(),
        });
    }
    let h = CMatrix::from_diagonal(&CVector::from_iterator(
        system.dim(),
        system
            .energies()
            .iter()
            .map(|&e| creal(T::of_int(e as i64))),
    ));
    let g = &gate.matrix;
    let delta = g.adjoint() * &h * g - &h;
    let eig = hermitian_eigenvalues(&delta);
    // Tr Δ = 0 forces λmin ≤ 0 ≤ λmax; round-off around zero is snapped so
    // that energy-conserving gates report exactly zero generation
    let noise =
        T::eps() * T::of(64.0) * T::of_int((system.norm().max(1) as usize * gate.dim()) as i64);
    let snap = |v: T| if v.abs() <= noise { T::zero() } else { v };
    let lambda_min = snap(eig[0]).min(T::zero());
    let lambda_max = snap(eig[eig.len() - 1]).max(T::zero());
    Ok(GateResourceProfile {
        delta,
        lambda_max,
        lambda_min,
        m_of_g: lambda_max,
        m_of_gdag: T::zero() - lambda_min,
    })
}

/// Result of maximizing `m (M(G) + M(G†)) - 8 √ε K m² - c` over integer `m ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorollaryBound<T> {
    /// `(M(G)+M(G†))² / (32 K √ε) - c - 2 K √ε`
    pub closed: T,
    /// Exact integer maximum; never below `closed` and at most `2 K √ε` above it.
    pub integer_max: T,
    /// Smallest maximizing `m`; `None` when ε = 0.
    pub m_star: Option<u64>,
}

pub fn corollary_bound<T: Real>(mg: T, mgdag: T, k: T, c: T, eps: T) -> Result<CorollaryBound<T>> {
    if k <= T::zero() {
        return Err(Error::InvalidParameter(
            "Lipschitz constant must be positive".into(),
        ));
    }
    if !(eps >= T::zero() && eps <= T::one()) {
        return Err(Error::InvalidParameter(format!(
            "ε = {} outside [0, 1]",
            eps.as_f64()
        )));
    }
    let s = mg + mgdag;
    if eps == T::zero() {
        let inf = T::max_value().unwrap_or_else(T::one);
        let value = if s > T::zero() { inf } else { -c };
        return Ok(CorollaryBound {
            closed: value,
            integer_max: value,
            m_star: None,
        });
    }
    let root = eps.sqrt();
    let closed = s * s / (T::of(32.0) * k * root) - c - T::of(2.0) * k * root;
    let a = T::of(8.0) * root * k;
    let objective = |m: u64| {
        let mf = T::of_int(m as i64);
        mf * s - a * mf * mf - c
    };
    let center = (s / (T::of(2.0) * a)).max(T::zero());
    let lo = center.floor().to_u64().unwrap_or(0);
    let (m_star, integer_max) = [lo, lo + 1].into_iter().map(|m| (m, objective(m))).fold(
        (lo, objective(lo)),
        |best, cand| if cand.1 > best.1 { cand } else { best },
    );
    Ok(CorollaryBound {
        closed,
        integer_max,
        m_star: Some(m_star),
    })
}

fn check_eps<T: Real>(eps: T) -> Result<()> {
    if eps > T::zero() && eps <= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "ε = {} outside (0, 1]",
            eps.as_f64()
        )))
    }
}

/// Mean battery energy required by any energy-preserving implementation of
/// `gate` with worst-case infidelity `eps`; clamped at zero.
pub fn energy_lower_bound<T: Real>(gate: &Gate<T>, system: &SystemSpec, eps: T) -> Result<T> {
    check_eps(eps)?;
    let p = gate_profile(gate, system)?;
    if system.norm() == 0 {
        return Ok(T::zero());
    }
    let b = corollary_bound(
        p.m_of_g,
        p.m_of_gdag,
        T::of_int(system.norm() as i64),
        T::zero(),
        eps,
    )?;
    Ok(b.closed.max(T::zero()))
}

/// Battery capacity `||H_B||` required by a universal processor:
/// `||H_S|| / (4√ε) - 4 ||H_S|| √ε`, clamped at zero.
pub fn capacity_lower_bound<T: Real>(system: &SystemSpec, eps: T) -> Result<T> {
    check_eps(eps)?;
    let n = T::of_int(system.norm() as i64);
    let root = eps.sqrt();
    Ok((n / (T::of(4.0) * root) - T::of(4.0) * n * root).max(T::zero()))
}

/// Resources that suffice with the sine battery construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Achievability<T> {
    /// `π spread / (4√ε)`
    pub mean: T,
    /// `2 · mean`, since the sine state sits at half the capacity.
    pub capacity: T,
    /// Smallest battery parameter reaching `eps` at leading order (at least 3).
    pub r: u32,
}

pub fn achievable_energy<T: Real>(
    gate: &Gate<T>,
    system: &SystemSpec,
    eps: T,
) -> Result<Achievability<T>> {
    check_eps(eps)?;
    if !system.is_uniform() {
        return Err(Error::NonUniformSpectrum);
    }
    let spread = gate_profile(gate, system)?.spread();
    let root = eps.sqrt();
    let mean = T::pi() * spread / (T::of(4.0) * root);
    let norm = T::of_int(system.norm().max(1) as i64);
    let r = (T::pi() * spread / (T::of(2.0) * root * norm))
        .ceil()
        .to_u32()
        .unwrap_or(u32::MAX);
    Ok(Achievability {
        mean,
        capacity: T::of(2.0) * mean,
        r: r.max(3),
    })
}

/// Relative entropy of coherence `S(ρ_diag) - S(ρ)` in bits, in the computational (energy) basis.
pub fn coherence_of_state<T: Real>(rho: &CMatrix<T>) -> T {
    let diag = shannon_bits((0..rho.nrows()).map(|i| rho[(i, i)].re));
    (diag - von_neumann_bits(rho)).max(T::zero())
}

/// Coherence of a pure state, `H(|ψ_i|²)`.
pub fn coherence_of_pure<T: Real>(psi: &CVector<T>) -> T {
    shannon_bits(psi.iter().map(|a| a.norm_sqr()))
}

/// `(C(G) + C(G†))² / (32 √ε log₂ d) - 2` bits.
pub fn coherence_bound<T: Real>(cg: T, cgdag: T, dim: usize, eps: T) -> Result<T> {
    check_eps(eps)?;
    if dim < 2 {
        return Err(Error::InvalidParameter(
            "coherence bound needs d_S ≥ 2".into(),
        ));
    }
    let s = cg + cgdag;
    Ok(s * s / (T::of(32.0) * eps.sqrt() * T::of_int(dim as i64).log2()) - T::of(2.0))
}

/// Coherence needed by a universal processor: `log₂ d / (8 √ε) - 2` bits.
pub fn coherence_bound_universal<T: Real>(dim: usize, eps: T) -> Result<T> {
    check_eps(eps)?;
    if dim < 2 {
        return Err(Error::InvalidParameter(
            "coherence bound needs d_S ≥ 2".into(),
        ));
    }
    Ok(T::of_int(dim as i64).log2() / (T::of(8.0) * eps.sqrt()) - T::of(2.0))
}

/// Sampled lower estimate of the coherence generated by `gate`:
/// `max_ψ C(G|ψ⟩) - C(|ψ⟩)` over basis states and random pure inputs,
/// each refined by a shrinking random-perturbation ascent. Not a certificate.
pub fn coherence_generation_estimate<T: Real>(gate: &Gate<T>, trials: usize, seed: u64) -> T {
    let d = gate.dim();
    let gain = |psi: &CVector<T>| coherence_of_pure(&(&gate.matrix * psi)) - coherence_of_pure(psi);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<CVector<T>> = (0..d)
        .map(|k| {
            let mut e = CVector::zeros(d);
            e[k] = creal(T::one());
            e
        })
        .collect();
    starts.extend((0..trials.max(1)).map(|_| random_pure_state(d, &mut rng)));
    let mut best = T::zero();
    for start in starts {
        let mut psi = start;
        let mut value = gain(&psi);
        let mut step = T::of(0.1);
        for _ in 0..200 {
            let noise = random_pure_state::<T, _>(d, &mut rng);
            let mut cand = &psi + noise.scale(step);
            let n = cand.norm();
            cand.unscale_mut(n);
            let v = gain(&cand);
            if v > value {
                psi = cand;
                value = v;
            } else {
                step *= T::of(0.95);
            }
            if step < T::of(1e-6) {
                break;
            }
        }
        best = best.max(value);
    }
    best
}

/// Multi-battery lower bound versus single recycled battery upper bound for a circuit.
#[derive(Debug, Clone, Serialize)]
pub struct BudgetComparison {
    #[serde(serialize_with = "crate::io::sig17")]
    pub multi_lower: f64,
    #[serde(serialize_with = "crate::io::sig17")]
    pub single_upper: f64,
    pub assumptions: Vec<String>,
}

/// `N` gates on `n` qubits with total error budget `delta`.
///
/// With one battery per gate, each gate's infidelity is at least
/// `(||H_gate|| / (8 ⟨H_B⟩))²`; errors add up linearly, so keeping the total
/// below `delta` needs `⟨H_B⟩ ≥ √N ||H_gate|| / (8 √delta)` per gate and
/// `N^{3/2} ||H_gate|| / (8 √delta)` overall. One recycled battery needs at
/// most `π n / (2 √delta)`.
pub fn budget_comparison(
    gates: u64,
    qubits: u32,
    delta: f64,
    gate_norm: f64,
) -> Result<BudgetComparison> {
    if gates == 0 {
        return Err(Error::InvalidParameter(
            "circuit needs at least one gate".into(),
        ));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "δ = {delta} outside (0, 1]"
        )));
    }
    let root = delta.sqrt();
    let n = gates as f64;
    Ok(BudgetComparison {
        multi_lower: n.powf(1.5) * gate_norm / (8.0 * root),
        single_upper: std::f64::consts::PI * qubits as f64 / (2.0 * root),
        assumptions: vec![
            "each gate is powered by its own battery holding the same mean energy".into(),
            "per-gate infidelity is at least (||H_gate|| / (8 <H_B>))^2, the leading term of the universal mean-energy bound".into(),
            "per-gate errors accumulate linearly up to the total budget delta".into(),
            "the recycled battery uses the sine state sized for the whole register, energies in units of the qubit gap".into(),
        ],
    })
}

/// Evaluated bounds for one (gate, measure, ε) triple.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub gate: String,
    pub measure: MeasureKind,
    #[serde(serialize_with = "crate::io::sig17")]
    pub epsilon: f64,
    #[serde(serialize_with = "crate::io::sig17")]
    pub lower_mean: f64,
    #[serde(serialize_with = "crate::io::sig17_opt")]
    pub lower_capacity: Option<f64>,
    #[serde(serialize_with = "crate::io::sig17_opt")]
    pub achievable_mean: Option<f64>,
    #[serde(serialize_with = "crate::io::sig17_opt")]
    pub achievable_capacity: Option<f64>,
    pub m_star: Option<u64>,
    pub vacuous: bool,
}

/// Energy bounds (or coherence bounds, with sampled generation estimates) at error `eps`.
pub fn bound_report<T: Real>(
    gate: &Gate<T>,
    system: &SystemSpec,
    eps: T,
    measure: MeasureKind,
    seed: u64,
) -> Result<BoundReport> {
    check_eps(eps)?;
    match measure {
        MeasureKind::Energy | MeasureKind::CapacityComplement => {
            let p = gate_profile(gate, system)?;
            let k = T::of_int(system.norm().max(1) as i64);
            let cor = corollary_bound(p.m_of_g, p.m_of_gdag, k, T::zero(), eps)?;
            let raw = if system.norm() == 0 {
                T::zero()
            } else {
                cor.closed
            };
            let lower = raw.max(T::zero());
            // the complement measure has Δ → -Δ, so the same bound applies to ||H_B|| - ⟨H_B⟩
            let ach = achievable_energy(gate, system, eps).ok();
            Ok(BoundReport {
                gate: gate.label.clone(),
                measure,
                epsilon: eps.as_f64(),
                lower_mean: lower.as_f64(),
                lower_capacity: Some((lower + lower).as_f64()),
                achievable_mean: ach.map(|a| a.mean.as_f64()),
                achievable_capacity: ach.map(|a| a.capacity.as_f64()),
                m_star: cor.m_star,
                vacuous: raw <= T::zero(),
            })
        }
        MeasureKind::RelEntropyCoherence => {
            let cg = coherence_generation_estimate(gate, 64, seed);
            let cgd = coherence_generation_estimate(&gate.dagger(), 64, seed.wrapping_add(1));
            let raw = coherence_bound(cg, cgd, system.dim(), eps)?;
            let k = T::of_int(system.dim() as i64).log2();
            let cor = corollary_bound(cg, cgd, k, T::of(2.0), eps)?;
            Ok(BoundReport {
                gate: gate.label.clone(),
                measure,
                epsilon: eps.as_f64(),
                lower_mean: raw.max(T::zero()).as_f64(),
                lower_capacity: None,
                achievable_mean: None,
                achievable_capacity: None,
                m_star: cor.m_star,
                vacuous: raw <= T::zero(),
            })
        }
    }
}
