//! Energy ladders of the computational system and of the battery, and the
//! sine-shaped battery state that powers the dilations.
//!
//! Energies are integers in units of the level spacing (`ħω = 1`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Complex, Real};

/// Largest register handled by [`SystemSpec::uniform_qubits`].
pub const MAX_QUBITS: u32 = 24;

/// Diagonal system Hamiltonian in its eigenbasis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSpec {
    energies: Vec<u32>,
    uniform: bool,
}

impl SystemSpec {
    /// Builds a system from explicit basis energies. The minimum must be zero.
    pub fn from_energies(energies: Vec<u32>) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::InvalidSpectrum("empty spectrum".into()));
        }
        if energies[0] != 0 {
            return Err(Error::InvalidSpectrum(format!(
                "first energy must be 0, got {}",
                energies[0]
            )));
        }
        let max = *energies.iter().max().expect("non-empty");
        // equally spaced with unit gap: every value in 0..=max is occupied
        let mut seen = vec![false; max as usize + 1];
        for &e in &energies {
            seen[e as usize] = true;
        }
        let uniform = seen.iter().all(|&s| s);
        Ok(Self { energies, uniform })
    }

    /// Register of `n` unit-gap qubits; basis state `x` has energy `popcount(x)`.
    pub fn uniform_qubits(n: u32) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::InvalidParameter(format!(
                "qubit count must be in 1..={MAX_QUBITS}, got {n}"
            )));
        }
        let energies = (0..1u64 << n).map(|x| x.count_ones()).collect();
        Ok(Self {
            energies,
            uniform: true,
        })
    }

    /// Non-degenerate ladder `0, 1, ..., dim-1`.
    pub fn ladder(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpectrum("empty spectrum".into()));
        }
        Self::from_energies((0..dim as u32).collect())
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[u32] {
        &self.energies
    }

    pub fn energy(&self, x: usize) -> u32 {
        self.energies[x]
    }

    /// Operator norm `||H_S||`, i.e. the largest energy.
    pub fn norm(&self) -> u32 {
        self.energies.iter().copied().max().unwrap_or(0)
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn observable(&self) -> EnergyObservable {
        EnergyObservable {
            diagonal: self.energies.clone(),
            space: Space::System,
        }
    }

    /// Number of qubits if the dimension is a power of two.
    pub fn qubits(&self) -> Option<u32> {
        let d = self.dim();
        d.is_power_of_two().then(|| d.trailing_zeros())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatteryShape {
    /// Sine-shaped superposition over the interior levels.
    Sine,
    /// All weight on one level.
    Level(u32),
}

/// Battery ladder `0..=R·||H_S||` with a real amplitude vector over it.
#[derive(Debug, Clone, PartialEq)]
pub struct BatterySim<T> {
    r: u32,
    system_norm: u32,
    capacity: u32,
    l: u32,
    shape: BatteryShape,
    amplitudes: Vec<T>,
}

impl<T: Real> BatterySim<T> {
    /// Sine battery for an equally spaced system.
    ///
    /// Level `b` in `[||H_S||, (R-1)||H_S||]` carries amplitude
    /// `sqrt(2/L) sin((b - ||H_S|| + 1) π / L)` with `L = (R-2)||H_S|| + 2`;
    /// all other levels, including both ends of the ladder, are empty.
    pub fn sine(system: &SystemSpec, r: u32) -> Result<Self> {
        if r < 3 {
            return Err(Error::InvalidRepetition(r));
        }
        if !system.is_uniform() {
            return Err(Error::NonUniformSpectrum);
        }
        let norm = system.norm();
        if norm == 0 {
            return Err(Error::InvalidSpectrum(
                "fully degenerate system needs no battery".into(),
            ));
        }
        let capacity = r
            .checked_mul(norm)
            .ok_or_else(|| Error::InvalidParameter("battery capacity overflows".into()))?;
        let l = (r - 2) * norm + 2;
        let scale = (T::of(2.0) / T::of_int(l as i64)).sqrt();
        let step = T::pi() / T::of_int(l as i64);
        let amplitudes = (0..=capacity)
            .map(|b| {
                if b >= norm && b <= (r - 1) * norm {
                    scale * (T::of_int((b - norm + 1) as i64) * step).sin()
                } else {
                    T::zero()
                }
            })
            .collect();
        Ok(Self {
            r,
            system_norm: norm,
            capacity,
            l,
            shape: BatteryShape::Sine,
            amplitudes,
        })
    }

    /// Battery of the same ladder prepared in the single level `level`.
    pub fn single_level(system: &SystemSpec, r: u32, level: u32) -> Result<Self> {
        if r < 3 {
            return Err(Error::InvalidRepetition(r));
        }
        let norm = system.norm();
        let capacity = r * norm;
        if level > capacity {
            return Err(Error::InvalidParameter(format!(
                "battery level {level} exceeds capacity {capacity}"
            )));
        }
        let mut amplitudes = vec![T::zero(); capacity as usize + 1];
        amplitudes[level as usize] = T::one();
        Ok(Self {
            r,
            system_norm: norm,
            capacity,
            l: (r - 2) * norm + 2,
            shape: BatteryShape::Level(level),
            amplitudes,
        })
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    /// `||H_S||` of the system the battery was sized for.
    pub fn system_norm(&self) -> u32 {
        self.system_norm
    }

    /// `||H_B|| = R ||H_S||`.
    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn levels(&self) -> usize {
        self.capacity as usize + 1
    }

    /// The sine period parameter `L`.
    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn shape(&self) -> BatteryShape {
        self.shape
    }

    pub fn amplitudes(&self) -> &[T] {
        &self.amplitudes
    }

    /// Amplitude at level `b`; zero for any level outside the ladder.
    pub fn amplitude(&self, b: i64) -> T {
        if b < 0 || b > self.capacity as i64 {
            T::zero()
        } else {
            self.amplitudes[b as usize]
        }
    }

    pub fn norm_sqr(&self) -> T {
        self.amplitudes.iter().fold(T::zero(), |a, &x| a + x * x)
    }

    pub fn mean_energy(&self) -> T {
        self.amplitudes
            .iter()
            .enumerate()
            .fold(T::zero(), |a, (b, &x)| a + T::of_int(b as i64) * x * x)
    }

    pub fn observable(&self) -> EnergyObservable {
        EnergyObservable {
            diagonal: (0..=self.capacity).collect(),
            space: Space::Battery,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    System,
    Battery,
    Joint,
}

/// A diagonal energy operator over a named space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyObservable {
    pub diagonal: Vec<u32>,
    pub space: Space,
}

impl EnergyObservable {
    /// `H_S ⊗ I + I ⊗ H_B` with joint index `x * levels + b`.
    pub fn joint(system: &SystemSpec, battery_levels: usize) -> Self {
        let mut diagonal = Vec::with_capacity(system.dim() * battery_levels);
        for &e in system.energies() {
            diagonal.extend((0..battery_levels as u32).map(|b| e + b));
        }
        Self {
            diagonal,
            space: Space::Joint,
        }
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }
}

/// Anything whose squared modulus is a probability weight.
pub trait Amplitude<T> {
    fn weight(&self) -> T;
}

impl<T: Real> Amplitude<T> for Complex<T> {
    fn weight(&self) -> T {
        self.norm_sqr()
    }
}

macro_rules! real_amplitude {
    ($($t:ty),*) => {$(
        impl Amplitude<$t> for $t {
            fn weight(&self) -> $t {
                self * self
            }
        }
    )*};
}
real_amplitude!(f32, f64);

/// `Σ_k |ψ_k|² E_k` for a normalized state.
pub fn mean_energy<T: Real, A: Amplitude<T>>(state: &[A], obs: &EnergyObservable) -> Result<T> {
    if state.len() != obs.dim() {
        return Err(Error::DimensionMismatch {
            expected: obs.dim(),
            found: state.len(),
        });
    }
    let (norm, mean) =
        state
            .iter()
            .zip(&obs.diagonal)
            .fold((T::zero(), T::zero()), |(n, m), (a, &e)| {
                let w = a.weight();
                (n + w, m + w * T::of_int(e as i64))
            });
    if (norm - T::one()).abs() > state_tol::<T>() {
        return Err(Error::InvalidState(format!(
            "state norm² {} is not 1",
            norm.as_f64()
        )));
    }
    Ok(mean)
}

/// Normalization tolerance: 1e-10, relaxed for low-precision scalars.
pub(crate) fn state_tol<T: Real>() -> T {
    T::of(1e-10).max(T::eps() * T::of(1e3))
}
