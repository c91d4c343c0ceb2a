//! Fidelity of the induced channel against the target gate.
//!
//! The worst-case fidelity over all purifications reduces to minimizing the
//! entanglement fidelity `F(ρ) = Σ_b |Tr(ρ G† K_b)|²` over density matrices
//! `ρ`. `F` is a convex quadratic form in `ρ`, so a conditional-gradient
//! (Frank-Wolfe) iteration over the spectrahedron finds the global minimum; its
//! linear subproblem is solved by the lowest eigenvector of the gradient. When
//! the minimizer has high rank, a KKT solve on its face finishes the job.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::gate_profile;
use crate::dilation::{e_ok, KrausChannel};
use crate::error::{Error, Result};
use crate::gates::Gate;
use crate::linalg::{
    hermitian_eigen, random_density, random_pure_state, trace_product, validate_density, CMatrix,
    CVector,
};
use crate::scalar::{creal, czero, Complex, Real};
use crate::spectra::{BatterySim, SystemSpec};

/// Quadratic form `ρ ↦ Σ_b |Tr(ρ A_b)|²` with `A_b = G† K_b`, stored as a
/// `d² x d²` PSD matrix acting on the row-major vectorization of `ρ`.
#[derive(Debug, Clone)]
pub struct FidelityForm<T: Real> {
    dim: usize,
    q: CMatrix<T>,
}

impl<T: Real> FidelityForm<T> {
    pub fn new(channel: &KrausChannel<T>, gate: &CMatrix<T>) -> Result<Self> {
        let d = gate.nrows();
        if channel.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: channel.dim(),
            });
        }
        let n = d * d;
        let mut q = CMatrix::zeros(n, n);
        let gd = gate.adjoint();
        let mut a = CVector::zeros(n);
        for (_, k) in &channel.ops {
            let prod = &gd * k;
            // a[i d + j] = A_ji so that Tr(ρ A) = aᵀ vec(ρ)
            for i in 0..d {
                for j in 0..d {
                    a[i * d + j] = prod[(j, i)];
                }
            }
            for r in 0..n {
                let ar = a[r].conj();
                if ar == czero() {
                    continue;
                }
                for c in 0..n {
                    q[(r, c)] += ar * a[c];
                }
            }
        }
        Ok(Self { dim: d, q })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn vec_of(rho: &CMatrix<T>) -> CVector<T> {
        let d = rho.nrows();
        CVector::from_fn(d * d, |k, _| rho[(k / d, k % d)])
    }

    pub fn value(&self, rho: &CMatrix<T>) -> T {
        let u = Self::vec_of(rho);
        (u.adjoint() * &self.q * &u)[(0, 0)].re
    }

    /// Value on a pure state `|ψ⟩⟨ψ|`.
    pub fn value_pure(&self, psi: &CVector<T>) -> T {
        self.value(&(psi * psi.adjoint()))
    }

    /// Hermitian gradient `Γ` with `dF = Tr(dρ Γ)`.
    pub fn gradient(&self, rho: &CMatrix<T>) -> CMatrix<T> {
        let d = self.dim;
        let w = &self.q * Self::vec_of(rho);
        let wm = CMatrix::from_fn(d, d, |i, j| w[i * d + j]);
        &wm + wm.adjoint()
    }

    /// `u† Q u` along a direction, for the exact line search.
    fn curvature(&self, dir: &CMatrix<T>) -> T {
        let u = Self::vec_of(dir);
        (u.adjoint() * &self.q * &u)[(0, 0)].re
    }
}

/// `F(ρ) = Σ_b |Tr(ρ G† K_b)|²`, the fidelity between `(E⊗I)(Ψ)` and
/// `(G⊗I)(Ψ)` for any purification `Ψ` of `ρ`.
pub fn entanglement_fidelity<T: Real>(
    channel: &KrausChannel<T>,
    gate: &CMatrix<T>,
    rho: &CMatrix<T>,
) -> Result<T> {
    validate_density(rho, T::of(1e-10).max(T::eps() * T::of(1e3)))?;
    if rho.nrows() != gate.nrows() {
        return Err(Error::DimensionMismatch {
            expected: gate.nrows(),
            found: rho.nrows(),
        });
    }
    let gd = gate.adjoint();
    Ok(channel.ops.iter().fold(T::zero(), |acc, (_, k)| {
        acc + trace_product(rho, &(&gd * k)).norm_sqr()
    }))
}

#[derive(Debug, Clone, Copy)]
pub struct WorstCaseOptions {
    /// Stop when the Frank-Wolfe gap drops to this value.
    pub tol: f64,
    pub max_iter: usize,
    /// Random density matrices evaluated after convergence.
    pub probes: usize,
    pub seed: u64,
}

impl Default for WorstCaseOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 5000,
            probes: 10_000,
            seed: 0,
        }
    }
}

/// Pairwise Frank-Wolfe iterations before switching to the face solve and polish.
const FW_BUDGET: usize = 200;

/// Amount by which a random probe may undercut the solver before the result is flagged.
pub const PROBE_SLACK: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct FidelityResult<T: Real> {
    pub f_wc: T,
    pub epsilon: T,
    pub witness: CMatrix<T>,
    pub iterations: usize,
    /// Final Frank-Wolfe gap; `f_wc - gap` lower-bounds the true minimum.
    pub gap: T,
    pub converged: bool,
    /// Smallest value seen among the random probes, if any were run.
    pub probe_min: Option<T>,
}

impl<T: Real> FidelityResult<T> {
    /// No probe undercuts the solver by more than [`PROBE_SLACK`].
    pub fn probes_consistent(&self) -> bool {
        self.probe_min
            .map(|p| p >= self.f_wc - T::of(PROBE_SLACK))
            .unwrap_or(true)
    }

    pub fn report(&self) -> FidelityReport {
        FidelityReport {
            f_wc: self.f_wc.as_f64(),
            epsilon: self.epsilon.as_f64(),
            iterations: self.iterations,
            gap: self.gap.as_f64(),
            converged: self.converged,
            probe_min: self.probe_min.map(|p| p.as_f64()),
            probes_consistent: self.probes_consistent(),
            witness: self
                .witness
                .row_iter()
                .map(|row| row.iter().map(|z| [z.re.as_f64(), z.im.as_f64()]).collect())
                .collect(),
        }
    }
}

/// Serialized form of a [`FidelityResult`].
#[derive(Debug, Clone, Serialize)]
pub struct FidelityReport {
    #[serde(serialize_with = "crate::io::sig17")]
    pub f_wc: f64,
    #[serde(serialize_with = "crate::io::sig17")]
    pub epsilon: f64,
    pub iterations: usize,
    #[serde(serialize_with = "crate::io::sig17")]
    pub gap: f64,
    pub converged: bool,
    #[serde(serialize_with = "crate::io::sig17_opt")]
    pub probe_min: Option<f64>,
    pub probes_consistent: bool,
    #[serde(serialize_with = "crate::io::sig17_matrix")]
    pub witness: Vec<Vec<[f64; 2]>>,
}

/// Minimizes the entanglement fidelity over all density matrices.
///
/// Pairwise Frank-Wolfe: the iterate is kept as a convex combination of pure
/// states, starting from the computational basis (`ρ = I/d`). Each step moves
/// weight from the worst active pure state to the lowest eigenvector of the
/// gradient, with an exact line search since the objective is quadratic.
/// Convergence is certified by the ordinary Frank-Wolfe gap.
pub fn worst_case_fidelity<T: Real>(
    channel: &KrausChannel<T>,
    gate: &CMatrix<T>,
    opts: &WorstCaseOptions,
) -> Result<FidelityResult<T>> {
    let form = FidelityForm::new(channel, gate)?;
    let d = form.dim();
    let tol = T::of(opts.tol);
    let weight0 = T::one() / T::of_int(d as i64);
    let mut atoms: Vec<(CVector<T>, T)> = (0..d)
        .map(|k| {
            let mut e = CVector::zeros(d);
            e[k] = creal(T::one());
            (e, weight0)
        })
        .collect();
    let mut rho = CMatrix::<T>::identity(d, d).scale(weight0);
    let mut value = form.value(&rho);
    let mut gap = T::max_value().unwrap_or_else(T::one);
    let mut iterations = 0;
    let mut converged = false;
    let same_atom = T::one() - T::eps() * T::of(64.0);
    // pairwise steps settle low-rank minimizers quickly; the rest of the
    // budget goes to the projected-gradient polish
    let fw_budget = opts.max_iter.min(FW_BUDGET);
    while iterations < fw_budget {
        let grad = form.gradient(&rho);
        let (evals, evecs) = hermitian_eigen(&grad);
        let level = trace_product(&rho, &grad).re;
        gap = level - evals[0];
        if gap <= tol {
            converged = true;
            break;
        }
        iterations += 1;
        let (away_idx, away_val) = atoms
            .iter()
            .enumerate()
            .map(|(i, (v, _))| (i, (v.adjoint() * &grad * v)[(0, 0)].re))
            .fold(
                (0, T::min_value().unwrap_or_else(|| -T::one())),
                |best, c| {
                    if c.1 > best.1 {
                        c
                    } else {
                        best
                    }
                },
            );
        let away_gap = away_val - level;
        let toward = evecs.column(0).into_owned();
        // pairwise step: shift weight from the worst active atom to the new one
        let (a, wa) = atoms[away_idx].clone();
        let dir = &toward * toward.adjoint() - &a * a.adjoint();
        let slope = -(gap + away_gap);
        let curv = form.curvature(&dir);
        let step = if curv > T::zero() {
            (-slope / (T::of(2.0) * curv)).min(wa)
        } else {
            wa
        };
        let next = &rho + dir.scale(step);
        let next_value = form.value(&next);
        if next_value > value {
            // round-off stall: no descent left at this precision
            break;
        }
        atoms[away_idx].1 -= step;
        match atoms
            .iter_mut()
            .find(|(v, _)| (v.adjoint() * &toward)[(0, 0)].norm_sqr() >= same_atom)
        {
            Some((_, w)) => *w += step,
            None => atoms.push((toward, step)),
        }
        atoms.retain(|(_, w)| *w > T::eps());
        rho = next;
        value = next_value;
    }
    // face solve first; polish only if the support estimate was too coarse
    for polish_pass in [false, true] {
        if converged {
            break;
        }
        if polish_pass {
            let polished = polish(&form, rho, value, tol, opts.max_iter - iterations);
            rho = polished.0;
            value = polished.1;
            gap = polished.2;
            iterations += polished.3;
            converged = gap <= tol;
        }
        if let Some((face_rho, face_value, face_gap)) = face_solve(&form, &rho) {
            if face_gap < gap {
                rho = face_rho;
                value = face_value;
                gap = face_gap;
                converged = gap <= tol;
            }
        }
    }
    let mut result = FidelityResult {
        f_wc: value,
        epsilon: T::one() - value,
        witness: rho,
        iterations,
        gap: gap.max(T::zero()),
        converged,
        probe_min: None,
    };
    if opts.probes > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        result.probe_min = Some(probe_minimum(&form, opts.probes, &mut rng));
    }
    Ok(result)
}

/// Frank-Wolfe gap `Tr(ρΓ) - λ_min(Γ)`, an upper bound on `F(ρ) - min F`.
fn fw_gap<T: Real>(form: &FidelityForm<T>, rho: &CMatrix<T>) -> T {
    let grad = form.gradient(rho);
    let evals = hermitian_eigen(&grad).0;
    trace_product(rho, &grad).re - evals[0]
}

/// Euclidean projection onto the density matrices: project the spectrum onto
/// the probability simplex.
fn project_density<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    let (evals, evecs) = hermitian_eigen(m);
    let mut sorted = evals.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = T::zero();
    let mut theta = T::zero();
    for (k, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - T::one()) / T::of_int(k as i64 + 1);
        if v - t > T::zero() {
            theta = t;
        }
    }
    let d = m.nrows();
    let mut out = CMatrix::zeros(d, d);
    for (k, &v) in evals.iter().enumerate() {
        let w = (v - theta).max(T::zero());
        if w > T::zero() {
            let col = evecs.column(k);
            out += (col * col.adjoint()).scale(w);
        }
    }
    out
}

/// Accelerated projected gradient with restarts, used when Frank-Wolfe
/// zigzags on a high-rank face.
fn polish<T: Real>(
    form: &FidelityForm<T>,
    start: CMatrix<T>,
    start_value: T,
    tol: T,
    max_iter: usize,
) -> (CMatrix<T>, T, T, usize) {
    // gradient of u†Qu is Lipschitz with constant 2 λ_max(Q)
    let lip = T::of(2.0)
        * hermitian_eigen(&form.q)
            .0
            .last()
            .copied()
            .unwrap_or_else(T::one);
    if lip <= T::zero() {
        let gap = fw_gap(form, &start);
        return (start, start_value, gap, 0);
    }
    let step = T::one() / lip;
    let mut x = start;
    let mut value = start_value;
    let mut y = x.clone();
    let mut t = T::one();
    let mut gap = fw_gap(form, &x);
    let mut iters = 0;
    while iters < max_iter && gap > tol {
        iters += 1;
        let next = project_density(&(&y - form.gradient(&y).scale(step)));
        let next_value = form.value(&next);
        if next_value > value {
            // restart momentum
            y = x.clone();
            t = T::one();
            continue;
        }
        let t_next = (T::one() + (T::one() + T::of(4.0) * t * t).sqrt()) / T::of(2.0);
        y = &next + (&next - &x).scale((t - T::one()) / t_next);
        t = t_next;
        x = next;
        value = next_value;
        gap = fw_gap(form, &x);
    }
    (x, value, gap.max(T::zero()), iters)
}

/// Exact minimization over the face spanned by the numerical support of `rho`:
/// a KKT solve for the restricted quadratic with the trace constraint. Tries a
/// few rank cutoffs and keeps the PSD candidate with the smallest gap.
fn face_solve<T: Real>(form: &FidelityForm<T>, rho: &CMatrix<T>) -> Option<(CMatrix<T>, T, T)> {
    let d = rho.nrows();
    let (evals, evecs) = hermitian_eigen(rho);
    let mut best: Option<(CMatrix<T>, T, T)> = None;
    for cut in [1e-4, 1e-6, 1e-8] {
        let keep: Vec<usize> = (0..d).filter(|&k| evals[k] > T::of(cut)).collect();
        let r = keep.len();
        if r == 0 {
            continue;
        }
        // real basis of r x r Hermitian matrices mapped through the support
        let mut basis = Vec::with_capacity(r * r);
        let mut traces = Vec::with_capacity(r * r);
        let half = T::of(0.5).sqrt();
        for i in 0..r {
            for j in i..r {
                let vi = evecs.column(keep[i]);
                let vj = evecs.column(keep[j]);
                let outer = vi * vj.adjoint();
                if i == j {
                    basis.push(outer);
                    traces.push(T::one());
                } else {
                    basis.push((&outer + outer.adjoint()).scale(half));
                    traces.push(T::zero());
                    let rot = outer.map(|z| z * Complex::new(T::zero(), T::one()));
                    basis.push((&rot + rot.adjoint()).scale(half));
                    traces.push(T::zero());
                }
            }
        }
        let m = basis.len();
        let vecs: Vec<CVector<T>> = basis.iter().map(FidelityForm::vec_of).collect();
        let qv: Vec<CVector<T>> = vecs.iter().map(|v| &form.q * v).collect();
        let mut kkt = nalgebra::DMatrix::<T>::zeros(m + 1, m + 1);
        for a in 0..m {
            for b in 0..m {
                kkt[(a, b)] = T::of(2.0) * vecs[a].dotc(&qv[b]).re;
            }
            kkt[(a, m)] = traces[a];
            kkt[(m, a)] = traces[a];
        }
        let mut rhs = nalgebra::DVector::<T>::zeros(m + 1);
        rhs[m] = T::one();
        let Ok(sol) = kkt.svd(true, true).solve(&rhs, T::eps() * T::of(1e4)) else {
            continue;
        };
        let mut cand = CMatrix::zeros(d, d);
        for (a, b) in basis.iter().enumerate() {
            cand += b.scale(sol[a]);
        }
        let min_eig = hermitian_eigen(&cand).0[0];
        if min_eig < -T::of(1e-12) {
            continue;
        }
        let cand = project_density(&cand);
        let value = form.value(&cand);
        let gap = fw_gap(form, &cand).max(T::zero());
        if best.as_ref().is_none_or(|b| gap < b.2) {
            best = Some((cand, value, gap));
        }
    }
    best
}

/// Smallest form value among random pure and mixed states.
pub fn probe_minimum<T: Real>(form: &FidelityForm<T>, count: usize, rng: &mut ChaCha8Rng) -> T {
    let d = form.dim();
    let mut best = T::max_value().unwrap_or_else(T::one);
    for i in 0..count {
        let v = if i % 2 == 0 {
            form.value_pure(&random_pure_state(d, rng))
        } else {
            let rank = 1 + (i / 2) % d;
            form.value(&random_density(d, rank, rng))
        };
        best = best.min(v);
    }
    best
}

/// `C_xyzt = ⟨β| S_zt† S_xy |β⟩` summed term by term from the battery amplitudes,
/// with `S_xy = Σ_{E ∈ E_ok} |E - E_x⟩⟨E - E_y|`.
pub fn cxyzt_oracle<T: Real>(
    system: &SystemSpec,
    battery: &BatterySim<T>,
    x: usize,
    y: usize,
    z: usize,
    t: usize,
) -> T {
    let window = e_ok(system, battery.capacity());
    let [ex, ey, ez, et] = [x, y, z, t].map(|i| system.energy(i) as i64);
    let mut acc = T::zero();
    for e in window.iter() {
        let e = e as i64;
        let shifted = e - ex + ez;
        if shifted < window.lo as i64 || shifted > window.hi as i64 {
            continue;
        }
        acc += battery.amplitude(shifted - et) * battery.amplitude(e - ey);
    }
    acc
}

/// Raw closed-form expression for `C_xyzt` in the level energies, kept for
/// comparison. It disagrees with [`cxyzt_oracle`] at finite `R`; only its
/// large-`R` expansion is reliable. [`sine_overlap`] is the exact form.
pub fn cxyzt_closed<T: Real>(
    system: &SystemSpec,
    battery: &BatterySim<T>,
    x: usize,
    y: usize,
    z: usize,
    t: usize,
) -> T {
    let [ex, ey, ez, et] = [x, y, z, t].map(|i| system.energy(i) as i64);
    cxyzt_closed_energies(battery.l(), system.norm() as i64, [ex, ey, ez, et])
}

/// [`cxyzt_closed`] for explicit energies `[E_x, E_y, E_z, E_t]`.
pub fn cxyzt_closed_energies<T: Real>(l: u32, norm: i64, energies: [i64; 4]) -> T {
    let [x, y, z, t] = energies;
    let lf = T::of_int(l as i64);
    let a = T::pi() / lf;
    let first = T::of_int(l as i64 - x - y - 1) * (T::of_int(x - y - z + t) * a).cos() / lf;
    let second =
        (T::of_int(x + y + 1) * a).sin() * (T::of_int(2 * norm - t + z) * a).cos() / (lf * a.sin());
    first + second
}

/// Exact overlap `Σ_k s_k s_{k+shift}` of the normalized sine profile
/// `s_k = sqrt(2/L) sin(kπ/L)`, `k = 1..L-1`.
///
/// Because the sine state sits strictly inside the battery ladder,
/// `C_xyzt` equals this overlap at `shift = E_x - E_y - E_z + E_t`.
pub fn sine_overlap<T: Real>(l: u32, shift: i64) -> T {
    let s = shift.unsigned_abs() as i64;
    if s >= l as i64 {
        return T::zero();
    }
    let lf = T::of_int(l as i64);
    let a = T::pi() / lf;
    T::of_int(l as i64 - 1 - s) * (T::of_int(s) * a).cos() / lf
        + (T::of_int(1 + s) * a).sin() / (lf * a.sin())
}

/// Leading-order expansion `1 - shift² π² / (8 ⟨H_B⟩²)`.
pub fn cxyzt_leading<T: Real>(shift: i64, mean_battery_energy: T) -> T {
    let s = T::of_int(shift);
    T::one() - s * s * T::pi() * T::pi() / (T::of(8.0) * mean_battery_energy * mean_battery_energy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Provenance {
    ClosedForm,
    Oracle,
}

/// All `C_xyzt` for one system/battery pair, stored densely as `d⁴` values.
#[derive(Debug, Clone)]
pub struct CoefficientTable<T> {
    dim: usize,
    values: Vec<T>,
    pub provenance: Provenance,
}

impl<T: Real> CoefficientTable<T> {
    pub fn oracle(system: &SystemSpec, battery: &BatterySim<T>) -> Self {
        Self::fill(system.dim(), Provenance::Oracle, |x, y, z, t| {
            cxyzt_oracle(system, battery, x, y, z, t)
        })
    }

    pub fn closed_form(system: &SystemSpec, battery: &BatterySim<T>) -> Self {
        Self::fill(system.dim(), Provenance::ClosedForm, |x, y, z, t| {
            cxyzt_closed(system, battery, x, y, z, t)
        })
    }

    fn fill(
        dim: usize,
        provenance: Provenance,
        f: impl Fn(usize, usize, usize, usize) -> T,
    ) -> Self {
        let mut values = Vec::with_capacity(dim.pow(4));
        for x in 0..dim {
            for y in 0..dim {
                for z in 0..dim {
                    for t in 0..dim {
                        values.push(f(x, y, z, t));
                    }
                }
            }
        }
        Self {
            dim,
            values,
            provenance,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, x: usize, y: usize, z: usize, t: usize) -> T {
        let d = self.dim;
        self.values[((x * d + y) * d + z) * d + t]
    }
}

/// `F = Σ C_xyzt (ρG†)_xy G_yx (G†)_zt (Gρ)_tz`.
pub fn fidelity_via_coefficients<T: Real>(
    rho: &CMatrix<T>,
    gate: &CMatrix<T>,
    table: &CoefficientTable<T>,
) -> Result<T> {
    if table.provenance != Provenance::Oracle {
        return Err(Error::InvalidParameter(
            "fidelity expansion requires oracle coefficients".into(),
        ));
    }
    let d = table.dim();
    if rho.nrows() != d || gate.nrows() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: rho.nrows(),
        });
    }
    let rho_gd = rho * gate.adjoint();
    let g_rho = gate * rho;
    let gd = gate.adjoint();
    let mut acc: Complex<T> = czero();
    for x in 0..d {
        for y in 0..d {
            let left = rho_gd[(x, y)] * gate[(y, x)];
            for z in 0..d {
                for t in 0..d {
                    let c = table.get(x, y, z, t);
                    acc += left * gd[(z, t)] * g_rho[(t, z)] * Complex::new(c, T::zero());
                }
            }
        }
    }
    Ok(acc.re)
}

/// Leading-order worst-case infidelity `(π (λmax - λmin)(Δ_G H_S) / (4 ⟨H_B⟩))²`.
pub fn analytic_infidelity<T: Real>(
    gate: &Gate<T>,
    system: &SystemSpec,
    mean_battery_energy: T,
) -> Result<T> {
    if mean_battery_energy <= T::zero() {
        return Err(Error::InvalidParameter(
            "mean battery energy must be positive".into(),
        ));
    }
    let spread = gate_profile(gate, system)?.spread();
    let v = T::pi() * spread / (T::of(4.0) * mean_battery_energy);
    Ok(v * v)
}

/// Leading-order infidelity at a fixed input: `π² Var_ρ(Δ_G H_S) / (4 ⟨H_B⟩²)`.
pub fn variance_infidelity<T: Real>(
    gate: &Gate<T>,
    system: &SystemSpec,
    rho: &CMatrix<T>,
    mean_battery_energy: T,
) -> Result<T> {
    if mean_battery_energy <= T::zero() {
        return Err(Error::InvalidParameter(
            "mean battery energy must be positive".into(),
        ));
    }
    let delta = gate_profile(gate, system)?.delta;
    let m1 = trace_product(rho, &delta).re;
    let m2 = trace_product(rho, &(&delta * &delta)).re;
    let var = (m2 - m1 * m1).max(T::zero());
    Ok(T::pi() * T::pi() * var / (T::of(4.0) * mean_battery_energy * mean_battery_energy))
}

/// Diamond-distance interval `(2(1-√F), 2√(1-F))` implied by a worst-case fidelity.
pub fn diamond_sandwich<T: Real>(f_wc: T) -> Result<(T, T)> {
    let slack = T::eps() * T::of(16.0);
    if !(f_wc >= -slack && f_wc <= T::one() + slack) {
        return Err(Error::InvalidParameter(format!(
            "fidelity {} outside [0, 1]",
            f_wc.as_f64()
        )));
    }
    let f = f_wc.max(T::zero()).min(T::one());
    Ok((
        T::of(2.0) * (T::one() - f.sqrt()),
        T::of(2.0) * (T::one() - f).sqrt(),
    ))
}

/// Mean battery energy sufficient for diamond error `eps`: `π (d_S - 1) / √(2 eps)`.
pub fn diamond_achievable_energy<T: Real>(dim: usize, eps: T) -> Result<T> {
    if eps <= T::zero() {
        return Err(Error::InvalidParameter(
            "diamond error must be positive".into(),
        ));
    }
    Ok(T::pi() * T::of_int(dim as i64 - 1) / (T::of(2.0) * eps).sqrt())
}

/// Leading term of the mean-energy requirement at diamond error `eps`: `||H_S|| / (8 √(2 eps))`.
pub fn diamond_energy_requirement<T: Real>(system_norm: u32, eps: T) -> Result<T> {
    if eps <= T::zero() {
        return Err(Error::InvalidParameter(
            "diamond error must be positive".into(),
        ));
    }
    Ok(T::of_int(system_norm as i64) / (T::of(8.0) * (T::of(2.0) * eps).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::{induced_channel, SectorDilation};
    use crate::gates::builtin;

    fn plus() -> CMatrix<f64> {
        CMatrix::from_element(2, 2, creal(0.5))
    }

    fn x_channel(r: u32) -> (SystemSpec, BatterySim<f64>, Gate<f64>, KrausChannel<f64>) {
        let s = SystemSpec::uniform_qubits(1).unwrap();
        let b = BatterySim::sine(&s, r).unwrap();
        let g = builtin("X").unwrap();
        let u = SectorDilation::build(&g, &s, &b).unwrap();
        let ch = induced_channel(&u, &b).unwrap();
        (s, b, g, ch)
    }

    #[test]
    fn ideal_channel_has_unit_fidelity() {
        let g = builtin::<f64>("H").unwrap();
        let ch = KrausChannel::ideal(&g);
        assert!((entanglement_fidelity(&ch, &g.matrix, &plus()).unwrap() - 1.0).abs() < 1e-14);
        let res = worst_case_fidelity(
            &ch,
            &g.matrix,
            &WorstCaseOptions {
                probes: 100,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((res.f_wc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn x_channel_entanglement_fidelity() {
        let (_, _, g, ch) = x_channel(4);
        let mut ground = CMatrix::zeros(2, 2);
        ground[(0, 0)] = creal(1.0);
        assert!((entanglement_fidelity(&ch, &g.matrix, &ground).unwrap() - 1.0).abs() < 1e-14);
        assert!((entanglement_fidelity(&ch, &g.matrix, &plus()).unwrap() - 0.625).abs() < 1e-14);
    }

    #[test]
    fn rejects_invalid_density() {
        let (_, _, g, ch) = x_channel(4);
        let bad = CMatrix::<f64>::identity(2, 2);
        assert!(entanglement_fidelity(&ch, &g.matrix, &bad).is_err());
    }

    #[test]
    fn worst_case_x_r4() {
        let (_, _, g, ch) = x_channel(4);
        let res = worst_case_fidelity(&ch, &g.matrix, &WorstCaseOptions::default()).unwrap();
        assert!(res.converged);
        assert!(res.f_wc <= 0.625 + 1e-12);
        assert!(res.probes_consistent());
    }

    #[test]
    fn coefficient_oracle_on_small_battery() {
        let s = SystemSpec::uniform_qubits(1).unwrap();
        let b = BatterySim::<f64>::sine(&s, 4).unwrap();
        assert!((cxyzt_oracle(&s, &b, 0, 0, 0, 0) - 1.0).abs() < 1e-12);
        // shift E_x - E_y - E_z + E_t = -2: β₁β₃ = 1/4
        assert!((cxyzt_oracle(&s, &b, 0, 1, 1, 0) - 0.25).abs() < 1e-15);
        // raw closed form misses the normalization at small R
        assert!((cxyzt_closed(&s, &b, 0, 0, 0, 0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn closed_form_rejected_for_fidelity() {
        let s = SystemSpec::uniform_qubits(1).unwrap();
        let b = BatterySim::<f64>::sine(&s, 4).unwrap();
        let table = CoefficientTable::closed_form(&s, &b);
        let g = builtin::<f64>("X").unwrap();
        assert!(fidelity_via_coefficients(&plus(), &g.matrix, &table).is_err());
    }

    #[test]
    fn coefficient_path_matches_x_example() {
        let s = SystemSpec::uniform_qubits(1).unwrap();
        let b = BatterySim::<f64>::sine(&s, 4).unwrap();
        let table = CoefficientTable::oracle(&s, &b);
        let g = builtin::<f64>("X").unwrap();
        let f = fidelity_via_coefficients(&plus(), &g.matrix, &table).unwrap();
        assert!((f - 0.625).abs() < 1e-14);
    }

    #[test]
    fn analytic_examples() {
        let s = SystemSpec::uniform_qubits(1).unwrap();
        let i = builtin::<f64>("I").unwrap();
        assert_eq!(analytic_infidelity(&i, &s, 100.0).unwrap(), 0.0);
        let x = builtin::<f64>("X").unwrap();
        let e = analytic_infidelity(&x, &s, 100.0).unwrap();
        assert!((e - (std::f64::consts::PI / 200.0).powi(2)).abs() < 1e-15);
        let h = builtin::<f64>("H").unwrap();
        let e = analytic_infidelity(&h, &s, 100.0).unwrap();
        let expect = (std::f64::consts::PI * 2f64.sqrt() / 400.0).powi(2);
        assert!((e - expect).abs() < 1e-15);
        assert!(analytic_infidelity(&x, &s, 0.0).is_err());
    }

    #[test]
    fn variance_form_at_plus() {
        let s = SystemSpec::uniform_qubits(1).unwrap();
        let x = builtin::<f64>("X").unwrap();
        // Δ = diag(1, -1), variance 1 at |+⟩
        let v = variance_infidelity(&x, &s, &plus(), 100.0).unwrap();
        assert!((v - std::f64::consts::PI.powi(2) / 40_000.0).abs() < 1e-15);
    }

    #[test]
    fn diamond_sandwich_examples() {
        assert_eq!(diamond_sandwich::<f64>(1.0).unwrap(), (0.0, 0.0));
        let (lo, hi) = diamond_sandwich::<f64>(0.99).unwrap();
        assert!((lo - 0.010025).abs() < 1e-6 && (hi - 0.2).abs() < 1e-12);
        let (lo, hi) = diamond_sandwich::<f64>(0.625).unwrap();
        assert!((lo - 0.418861).abs() < 1e-6 && (hi - 1.224745).abs() < 1e-6);
        assert!(diamond_sandwich::<f64>(1.5).is_err());
        assert!(diamond_achievable_energy::<f64>(2, 0.0).is_err());
        let e = diamond_achievable_energy::<f64>(2, 0.5).unwrap();
        assert!((e - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn sine_overlap_normalized() {
        for l in [3u32, 4, 10, 57] {
            assert!((sine_overlap::<f64>(l, 0) - 1.0).abs() < 1e-14);
            assert!(
                (sine_overlap::<f64>(l, 1) - (std::f64::consts::PI / l as f64).cos()).abs() < 1e-14
            );
        }
        assert_eq!(sine_overlap::<f64>(5, 7), 0.0);
    }
}
