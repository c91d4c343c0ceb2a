#![allow(dead_code)]

use ergon_core::gates::Gate;
use ergon_core::linalg::{haar_unitary, CMatrix, CVector};
use ergon_core::scalar::Complex;
use ergon_core::spectra::SystemSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn c(re: f64) -> Complex<f64> {
    Complex::new(re, 0.0)
}

pub fn haar_gate(dim: usize, rng: &mut ChaCha8Rng) -> Gate<f64> {
    Gate::new("haar", haar_unitary(dim, rng)).unwrap()
}

pub fn basis(dim: usize, k: usize) -> CVector<f64> {
    let mut v = CVector::zeros(dim);
    v[k] = c(1.0);
    v
}

/// Joint unitary straight from the definition: for total energy `E` the
/// states `|x, E - E_x⟩` exist for every `x` iff `||H_S|| ≤ E ≤ capacity`,
/// and there `U` acts as `G` on `x`; every other joint basis state is fixed.
pub fn dense_dilation(g: &CMatrix<f64>, system: &SystemSpec, capacity: u32) -> CMatrix<f64> {
    let d = system.dim();
    let levels = capacity as usize + 1;
    let n = d * levels;
    let mut u = CMatrix::<f64>::zeros(n, n);
    for x in 0..d {
        for b in 0..levels {
            let e = system.energy(x) + b as u32;
            let col = x * levels + b;
            if e >= system.norm() && e <= capacity {
                for y in 0..d {
                    let row = y * levels + (e - system.energy(y)) as usize;
                    u[(row, col)] = g[(y, x)];
                }
            } else {
                u[(col, col)] = c(1.0);
            }
        }
    }
    u
}

/// `diag(E_x + b)` on system ⊗ battery.
pub fn dense_total_energy(system: &SystemSpec, capacity: u32) -> CMatrix<f64> {
    let levels = capacity as usize + 1;
    let n = system.dim() * levels;
    CMatrix::from_fn(n, n, |r, k| {
        if r == k {
            c((system.energy(r / levels) + (r % levels) as u32) as f64)
        } else {
            c(0.0)
        }
    })
}

/// `Tr_B` of a joint density matrix.
pub fn partial_trace_battery(rho: &CMatrix<f64>, dim_s: usize, levels: usize) -> CMatrix<f64> {
    CMatrix::from_fn(dim_s, dim_s, |x, y| {
        (0..levels).fold(c(0.0), |acc, b| acc + rho[(x * levels + b, y * levels + b)])
    })
}

pub fn max_abs(m: &CMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// Least-squares slope of `ys` against `xs`.
pub fn linear_fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
