//! Built-in gate library and the JSON matrix file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ensure_unitary, CMatrix};
use crate::scalar::{cplx, Complex, Real};
use crate::spectra::SystemSpec;

/// Unitarity tolerance applied when gates enter the library.
pub const UNITARY_TOL: f64 = 1e-10;

/// A unitary together with a printable label.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate<T: Real> {
    pub label: String,
    pub matrix: CMatrix<T>,
}

impl<T: Real> Gate<T> {
    pub fn new(label: impl Into<String>, matrix: CMatrix<T>) -> Result<Self> {
        ensure_unitary(&matrix, T::of(UNITARY_TOL).max(T::eps() * T::of(1e3)))?;
        Ok(Self {
            label: label.into(),
            matrix,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dagger(&self) -> Self {
        Self {
            label: format!("{}†", self.label),
            matrix: self.matrix.adjoint(),
        }
    }

    /// Unit-gap system the gate naturally acts on: a qubit register when the
    /// dimension is a power of two, otherwise the ladder `0..dim`.
    pub fn natural_system(&self) -> Result<SystemSpec> {
        let d = self.dim();
        if d >= 2 && d.is_power_of_two() {
            SystemSpec::uniform_qubits(d.trailing_zeros())
        } else {
            SystemSpec::ladder(d)
        }
    }
}

fn from_rows<T: Real>(dim: usize, rows: &[(f64, f64)]) -> CMatrix<T> {
    CMatrix::from_fn(dim, dim, |r, c| {
        let (re, im) = rows[r * dim + c];
        cplx(T::of(re), T::of(im))
    })
}

/// Quantum Fourier transform on `n` qubits.
pub fn qft<T: Real>(n: u32) -> CMatrix<T> {
    let d = 1usize << n;
    let scale = T::one() / T::of_int(d as i64).sqrt();
    CMatrix::from_fn(d, d, |j, k| {
        let phase = T::two_pi() * T::of_int(((j * k) % d) as i64) / T::of_int(d as i64);
        cplx(phase.cos() * scale, phase.sin() * scale)
    })
}

/// Looks up a built-in gate: `I X Y Z H S T CNOT CZ SWAP` or `QFT<n>`.
pub fn builtin<T: Real>(name: &str) -> Result<Gate<T>> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let upper = name.to_ascii_uppercase();
    let m = match upper.as_str() {
        "I" => from_rows(2, &[(1., 0.), (0., 0.), (0., 0.), (1., 0.)]),
        "X" => from_rows(2, &[(0., 0.), (1., 0.), (1., 0.), (0., 0.)]),
        "Y" => from_rows(2, &[(0., 0.), (0., -1.), (0., 1.), (0., 0.)]),
        "Z" => from_rows(2, &[(1., 0.), (0., 0.), (0., 0.), (-1., 0.)]),
        "H" => from_rows(2, &[(h, 0.), (h, 0.), (h, 0.), (-h, 0.)]),
        "S" => from_rows(2, &[(1., 0.), (0., 0.), (0., 0.), (0., 1.)]),
        "T" => from_rows(2, &[(1., 0.), (0., 0.), (0., 0.), (h, h)]),
        "CNOT" | "CX" => permutation(4, &[0, 1, 3, 2]),
        "CZ" => {
            let mut m = CMatrix::identity(4, 4);
            m[(3, 3)] = cplx(-T::one(), T::zero());
            m
        }
        "SWAP" => permutation(4, &[0, 2, 1, 3]),
        other => match other.strip_prefix("QFT").map(str::parse::<u32>) {
            Some(Ok(n)) if (1..=10).contains(&n) => qft(n),
            _ => return Err(Error::UnknownGate(name.to_string())),
        },
    };
    Gate::new(upper, m)
}

/// Permutation matrix sending basis state `j` to `image[j]`.
fn permutation<T: Real>(dim: usize, image: &[usize]) -> CMatrix<T> {
    let mut m = CMatrix::zeros(dim, dim);
    for (j, &i) in image.iter().enumerate() {
        m[(i, j)] = cplx(T::one(), T::zero());
    }
    m
}

/// `{"dim": d, "matrix": [[[re, im], ...], ...]}`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixFile {
    pub dim: usize,
    pub matrix: Vec<Vec<[f64; 2]>>,
}

impl MatrixFile {
    pub fn to_gate<T: Real>(&self, label: impl Into<String>) -> Result<Gate<T>> {
        if self.matrix.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: self.matrix.len(),
            });
        }
        for row in &self.matrix {
            if row.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: row.len(),
                });
            }
        }
        let m = CMatrix::from_fn(self.dim, self.dim, |r, c| {
            let [re, im] = self.matrix[r][c];
            cplx(T::of(re), T::of(im))
        });
        Gate::new(label, m)
    }

    pub fn from_matrix<T: Real>(m: &CMatrix<T>) -> Self {
        Self {
            dim: m.nrows(),
            matrix: (0..m.nrows())
                .map(|r| {
                    (0..m.ncols())
                        .map(|c| {
                            let z: Complex<T> = m[(r, c)];
                            [z.re.as_f64(), z.im.as_f64()]
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

/// Reads and validates a gate matrix file.
pub fn load_matrix_file<T: Real>(path: &Path) -> Result<Gate<T>> {
    let text = std::fs::read_to_string(path)?;
    let file: MatrixFile = serde_json::from_str(&text)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "custom".into());
    file.to_gate(label)
}
