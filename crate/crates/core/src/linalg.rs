//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{cabs, czero, Complex, Real};

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

/// Largest entry modulus.
pub fn max_abs<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc.max(cabs(*z)))
}

/// `max |G†G - I|` over all entries.
pub fn unitarity_deviation<T: Real>(g: &CMatrix<T>) -> T {
    if !g.is_square() {
        return T::max_value().unwrap_or_else(T::one);
    }
    let prod = g.adjoint() * g;
    let id = CMatrix::<T>::identity(g.nrows(), g.ncols());
    max_abs(&(prod - id))
}

pub fn ensure_unitary<T: Real>(g: &CMatrix<T>, tol: T) -> Result<()> {
    if !g.is_square() {
        return Err(Error::DimensionMismatch {
            expected: g.nrows(),
            found: g.ncols(),
        });
    }
    let dev = unitarity_deviation(g);
    if dev > tol {
        return Err(Error::NonUnitary {
            deviation: dev.as_f64(),
        });
    }
    Ok(())
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending.
/// Columns of the returned matrix are the matching eigenvectors.
pub fn hermitian_eigen<T: Real>(m: &CMatrix<T>) -> (Vec<T>, CMatrix<T>) {
    let herm = (m + m.adjoint()).scale(T::of(0.5));
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

pub fn hermitian_eigenvalues<T: Real>(m: &CMatrix<T>) -> Vec<T> {
    hermitian_eigen(m).0
}

/// Checks that `rho` is a density matrix: square, Hermitian, unit trace, PSD (all within `tol`).
pub fn validate_density<T: Real>(rho: &CMatrix<T>, tol: T) -> Result<()> {
    if !rho.is_square() {
        return Err(Error::InvalidState("density matrix must be square".into()));
    }
    let herm_dev = max_abs(&(rho - rho.adjoint()));
    if herm_dev > tol {
        return Err(Error::InvalidState(format!(
            "not Hermitian (deviation {:e})",
            herm_dev.as_f64()
        )));
    }
    let tr = rho.trace();
    if (tr.re - T::one()).abs() > tol || tr.im.abs() > tol {
        return Err(Error::InvalidState(format!(
            "trace {} differs from one",
            tr.re.as_f64()
        )));
    }
    let min_eig = hermitian_eigenvalues(rho)
        .into_iter()
        .fold(T::max_value().unwrap_or_else(T::one), |a, b| a.min(b));
    if min_eig < -tol {
        return Err(Error::InvalidState(format!(
            "negative eigenvalue {:e}",
            min_eig.as_f64()
        )));
    }
    Ok(())
}

/// Shannon entropy in bits. Zero probabilities contribute nothing.
pub fn shannon_bits<T: Real>(probs: impl IntoIterator<Item = T>) -> T {
    let ln2 = T::ln_2();
    probs.into_iter().fold(T::zero(), |acc, p| {
        if p > T::zero() {
            acc - p * p.ln() / ln2
        } else {
            acc
        }
    })
}

/// Von Neumann entropy in bits.
pub fn von_neumann_bits<T: Real>(rho: &CMatrix<T>) -> T {
    // eigenvalues below round-off are clipped so log stays finite
    let cutoff = T::eps() * T::of(64.0);
    shannon_bits(
        hermitian_eigenvalues(rho)
            .into_iter()
            .map(|l| if l > cutoff { l } else { T::zero() }),
    )
}

/// Trace norm `||A||_1` of a Hermitian matrix.
pub fn trace_norm_hermitian<T: Real>(m: &CMatrix<T>) -> T {
    hermitian_eigenvalues(m)
        .into_iter()
        .fold(T::zero(), |acc, l| acc + l.abs())
}

pub fn kron<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a.kronecker(b)
}

pub fn projector<T: Real>(v: &CVector<T>) -> CMatrix<T> {
    v * v.adjoint()
}

/// `Tr(A B)` without forming the product.
pub fn trace_product<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Complex<T> {
    let n = a.nrows();
    let mut acc = czero();
    for i in 0..n {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

fn gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(T::of(re), T::of(im))
}

pub fn ginibre<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix<T> {
    CMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix with phases fixed.
pub fn haar_unitary<T: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix<T> {
    let z = ginibre::<T, R>(dim, dim, rng);
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..dim {
        let d = r[(c, c)];
        let n = cabs(d);
        let phase = if n > T::zero() {
            d / Complex::new(n, T::zero())
        } else {
            Complex::new(T::one(), T::zero())
        };
        for row in 0..dim {
            q[(row, c)] *= phase;
        }
    }
    q
}

pub fn random_pure_state<T: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CVector<T> {
    let v = CVector::from_fn(dim, |_, _| gaussian(rng));
    let n = v.norm();
    v.unscale(n)
}

/// Random density matrix `W W† / Tr(W W†)` with `W` a `dim x rank` Ginibre matrix.
pub fn random_density<T: Real, R: Rng + ?Sized>(
    dim: usize,
    rank: usize,
    rng: &mut R,
) -> CMatrix<T> {
    let w = ginibre::<T, R>(dim, rank.max(1), rng);
    let rho = &w * w.adjoint();
    let tr = rho.trace().re;
    rho.unscale(tr)
}
