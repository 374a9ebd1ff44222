//! Spectrum and resolvent-norm computations.
//!
//! Eigenvalues mu of the evolution operator solve the quadratic pencil
//!     Q(mu) u = (mu^2 M_H - mu alpha M_g1 + K_tot) u = 0,   v = -mu u,
//! which is S(-mu) u = 0 for the shifted Schur matrix, so eigenpairs are
//! refined by inverse iteration and a quadratic Rayleigh functional on
//! the banded solver. Candidate values come from a dense real Schur
//! sweep of the 2n x 2n first-order block below `DENSE_EIG_MAX_NODES`
//! nodes and from shift-invert Arnoldi above.
//!
//! The resolvent norm on the imaginary axis is the largest singular
//! value of R(i omega) in the energy norm, computed by power iteration
//! on R* R where R* = G^{-1} R^H G is the energy-space adjoint; one
//! banded factorization per omega serves both applications because the
//! Schur matrix is complex symmetric.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Error;
use crate::operator::{Generator, State};
use crate::Result;

/// Mesh size at and below which the dense eigenvalue path runs.
pub const DENSE_EIG_MAX_NODES: usize = 600;
/// Relative tolerance on successive power-iteration estimates.
pub const POWER_TOL: f64 = 1e-8;
/// Power iteration cap; exceeding it is a convergence error.
pub const POWER_MAX_ITERS: usize = 5000;
/// Euclidean pencil residual each reported eigenpair must meet.
pub const PENCIL_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SpectrumResult {
    /// Pencil roots sorted by distance from the shift.
    pub eigenvalues: Vec<Complex64>,
    /// Position parts of the eigenvectors, unit Euclidean norm.
    pub eigenvectors: Vec<Vec<Complex64>>,
    /// ||Q(mu) u|| / ||u|| per pair.
    pub residuals: Vec<f64>,
    pub min_real_part: f64,
    pub shift: Complex64,
}

#[derive(Debug, Clone)]
pub struct ResolventSample {
    pub omega: f64,
    /// ||R(i omega)|| in the energy norm.
    pub norm: f64,
    pub iterations: usize,
    /// Rayleigh-quotient estimates of norm^2, one per iteration;
    /// nondecreasing up to roundoff.
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub samples: Vec<ResolventSample>,
    /// Least-squares slope of log norm against log omega over the local
    /// maxima of the sampled curve (all samples if fewer than two peaks).
    pub slope: f64,
    /// max over samples of norm / omega^2.
    pub sup_scaled: f64,
    pub peaks_used: usize,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| y.conj() * x).sum()
}

fn nrm2(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// ||R(i omega)||, the largest energy-norm singular value of the
/// resolvent on the imaginary axis.
pub fn resolvent_norm(gen: &Generator, omega: f64) -> Result<ResolventSample> {
    if !omega.is_finite() {
        return Err(Error::invalid(format!("omega = {omega} is not finite")));
    }
    let lambda = Complex64::new(0.0, omega);
    // Deterministic start vector tied to the frequency.
    let mut rng = ChaCha8Rng::seed_from_u64(omega.to_bits() ^ 0x7761_7665);
    let mut x = State::random(gen.n(), &mut rng);
    let nx = gen.energy_norm(&x);
    x.scale(Complex64::new(1.0 / nx, 0.0));
    let mut estimates = Vec::new();
    let mut prev = 0.0f64;
    for it in 1..=POWER_MAX_ITERS {
        let y = gen.resolve(lambda, &x)?.state;
        let rho = gen.energy_inner(&y, &y).re;
        estimates.push(rho);
        if it >= 10 && (rho - prev).abs() <= POWER_TOL * rho {
            return Ok(ResolventSample { omega, norm: rho.sqrt(), iterations: it, estimates });
        }
        prev = rho;
        let mut t = apply_energy_adjoint(gen, lambda, &y)?;
        let nt = gen.energy_norm(&t);
        if nt == 0.0 {
            return Err(Error::LinearSolver("power iteration collapsed to zero".into()));
        }
        t.scale(Complex64::new(1.0 / nt, 0.0));
        x = t;
    }
    Err(Error::Convergence {
        what: format!("resolvent-norm power iteration at omega = {omega}"),
        iterations: POWER_MAX_ITERS,
    })
}

/// Applies R(lambda)* = G^{-1} (A + lambda)^{-H} G in the energy space.
/// Eliminating the adjoint system blockwise gives
///     S(conj lambda) s = K_tot y_u + conj(lambda) M_H y_v,
///     q = M_H s,
///     p = alpha M_g1 s + conj(lambda) M_H s - M_H y_v,
/// and the result is (K_tot^{-1} p, s).
fn apply_energy_adjoint(gen: &Generator, lambda: Complex64, y: &State) -> Result<State> {
    let sys = gen.system();
    let lc = lambda.conj();
    let z1 = sys.k_tot.mul_complex_alloc(&y.u);
    let z2 = sys.m_h.mul_complex_alloc(&y.v);
    let rhs: Vec<Complex64> = z1.iter().zip(z2.iter()).map(|(a, b)| a + lc * b).collect();
    let s = gen.schur_solve_adjoint(lambda, &rhs)?;
    let g1s = sys.m_g1.mul_complex_alloc(&s);
    let mhs = sys.m_h.mul_complex_alloc(&s);
    let p: Vec<Complex64> = (0..gen.n())
        .map(|i| sys.alpha * g1s[i] + lc * mhs[i] - z2[i])
        .collect();
    Ok(State { u: gen.solve_k_tot(&p), v: s })
}

/// Log-spaced sweep of the resolvent norm over [omega_min, omega_max].
/// Samples run in parallel on the current rayon pool; errors are
/// reported for the smallest offending frequency.
pub fn resolvent_sweep(
    gen: &Generator,
    omega_min: f64,
    omega_max: f64,
    n_samples: usize,
) -> Result<SweepResult> {
    if !(omega_min > 0.0) || !(omega_max > omega_min) {
        return Err(Error::invalid(format!(
            "need 0 < omega_min < omega_max, got ({omega_min}, {omega_max})"
        )));
    }
    if n_samples < 8 {
        return Err(Error::invalid(format!("need at least 8 samples, got {n_samples}")));
    }
    let (la, lb) = (omega_min.ln(), omega_max.ln());
    let grid: Vec<f64> = (0..n_samples)
        .map(|i| match i {
            0 => omega_min,
            i if i == n_samples - 1 => omega_max,
            i => (la + (lb - la) * i as f64 / (n_samples - 1) as f64).exp(),
        })
        .collect();
    let results: Vec<Result<ResolventSample>> =
        grid.par_iter().map(|&w| resolvent_norm(gen, w)).collect();
    let mut samples = Vec::with_capacity(n_samples);
    for r in results {
        samples.push(r?);
    }
    let (slope, peaks_used) = peak_slope(&samples);
    let sup_scaled = samples
        .iter()
        .map(|s| s.norm / (s.omega * s.omega))
        .fold(0.0f64, f64::max);
    Ok(SweepResult { samples, slope, sup_scaled, peaks_used })
}

/// Least-squares slope of log norm vs log omega over interior local
/// maxima; falls back to every sample when fewer than two peaks exist.
fn peak_slope(samples: &[ResolventSample]) -> (f64, usize) {
    let mut idx: Vec<usize> = (1..samples.len().saturating_sub(1))
        .filter(|&i| {
            samples[i].norm >= samples[i - 1].norm && samples[i].norm >= samples[i + 1].norm
        })
        .collect();
    let peaks = idx.len();
    if peaks < 2 {
        idx = (0..samples.len()).collect();
    }
    let pts: Vec<(f64, f64)> = idx
        .iter()
        .map(|&i| (samples[i].omega.ln(), samples[i].norm.ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    ((n * sxy - sx * sy) / (n * sxx - sx * sx), peaks)
}

/// The `count` pencil eigenvalues nearest `shift`, with eigenvectors and
/// residuals. Dispatches on mesh size.
pub fn quadratic_eigs(gen: &Generator, count: usize, shift: Complex64) -> Result<SpectrumResult> {
    if count == 0 || count > 2 * gen.n() {
        return Err(Error::invalid(format!(
            "count must lie in 1..={}, got {count}",
            2 * gen.n()
        )));
    }
    if !shift.re.is_finite() || !shift.im.is_finite() {
        return Err(Error::invalid("shift must be finite"));
    }
    let candidates = if gen.n() <= DENSE_EIG_MAX_NODES {
        dense_candidates(gen)?
    } else {
        arnoldi_candidates(gen, count, shift)?
    };
    finish_spectrum(gen, candidates, count, shift)
}

/// Dense path: real Schur eigenvalues of the 2n x 2n first-order block.
pub fn dense_spectrum(gen: &Generator, count: usize, shift: Complex64) -> Result<SpectrumResult> {
    if count == 0 || count > 2 * gen.n() {
        return Err(Error::invalid(format!("count must lie in 1..={}", 2 * gen.n())));
    }
    finish_spectrum(gen, dense_candidates(gen)?, count, shift)
}

/// Shift-invert Arnoldi path, usable at any size.
pub fn arnoldi_spectrum(gen: &Generator, count: usize, shift: Complex64) -> Result<SpectrumResult> {
    if count == 0 || count > 2 * gen.n() {
        return Err(Error::invalid(format!("count must lie in 1..={}", 2 * gen.n())));
    }
    finish_spectrum(gen, arnoldi_candidates(gen, count, shift)?, count, shift)
}

fn dense_candidates(gen: &Generator) -> Result<Vec<Complex64>> {
    let sys = gen.system();
    let n = gen.n();
    let m_h = sys.m_h.to_dense();
    let chol = m_h
        .cholesky()
        .ok_or_else(|| Error::LinearSolver("M_H lost positive definiteness".into()))?;
    let top = chol.solve(&sys.k_tot.to_dense());
    let bot = chol.solve(&(sys.m_g1.to_dense() * sys.alpha));
    let mut a = nalgebra::DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, n + i)] = -1.0;
        for j in 0..n {
            a[(n + i, j)] = top[(i, j)];
            a[(n + i, n + j)] = bot[(i, j)];
        }
    }
    Ok(a.complex_eigenvalues().iter().copied().collect())
}

/// Shift-invert Arnoldi on the first-order system: Krylov space of
/// (A - sigma)^{-1} built with modified Gram-Schmidt, Ritz values mapped
/// back through mu = sigma + 1/nu.
fn arnoldi_candidates(gen: &Generator, count: usize, sigma: Complex64) -> Result<Vec<Complex64>> {
    let n = gen.n();
    let dim = 2 * n;
    let m = (2 * count + 40).min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(
        sigma.re.to_bits() ^ sigma.im.to_bits().rotate_left(17) ^ 0x6569_6773,
    );
    let mut v0: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let s0 = nrm2(&v0);
    for c in v0.iter_mut() {
        *c /= s0;
    }
    let mut basis: Vec<Vec<Complex64>> = vec![v0];
    let mut h = nalgebra::DMatrix::<Complex64>::zeros(m + 1, m);
    let mut m_eff = m;
    for j in 0..m {
        let x = State {
            u: basis[j][..n].to_vec(),
            v: basis[j][n..].to_vec(),
        };
        let y = gen.resolve(-sigma, &x)?.state;
        let mut w: Vec<Complex64> = y.u.iter().chain(y.v.iter()).copied().collect();
        for i in 0..=j {
            let hij = dot(&w, &basis[i]);
            h[(i, j)] = hij;
            for (wc, bc) in w.iter_mut().zip(basis[i].iter()) {
                *wc -= hij * bc;
            }
        }
        // One reorthogonalization pass keeps the basis orthonormal.
        for i in 0..=j {
            let corr = dot(&w, &basis[i]);
            h[(i, j)] += corr;
            for (wc, bc) in w.iter_mut().zip(basis[i].iter()) {
                *wc -= corr * bc;
            }
        }
        let beta = nrm2(&w);
        h[(j + 1, j)] = Complex64::new(beta, 0.0);
        if beta < 1e-12 {
            m_eff = j + 1;
            break;
        }
        for c in w.iter_mut() {
            *c /= beta;
        }
        basis.push(w);
    }
    let hm = h.view((0, 0), (m_eff, m_eff)).into_owned();
    let ritz = hm
        .eigenvalues()
        .ok_or_else(|| Error::Convergence {
            what: "Arnoldi Hessenberg eigenvalue extraction".into(),
            iterations: m_eff,
        })?;
    let mut mus: Vec<Complex64> = ritz
        .iter()
        .filter(|nu| nu.norm() > 1e-14)
        .map(|nu| sigma + 1.0 / nu)
        .collect();
    // The block is real: close the candidate set under conjugation so a
    // complex shift still yields the mirrored partners.
    let conjs: Vec<Complex64> = mus.iter().map(|m| m.conj()).collect();
    mus.extend(conjs);
    Ok(mus)
}

/// Sorts candidates by distance from the shift, polishes each by inverse
/// iteration with a quadratic Rayleigh functional, and assembles the
/// result. Eigenvalues of multiplicity two appear twice among the
/// candidates and are kept; polished duplicates closer than the pencil
/// tolerance to an already-accepted value count as the same root only
/// when their vectors coincide.
fn finish_spectrum(
    gen: &Generator,
    mut candidates: Vec<Complex64>,
    count: usize,
    shift: Complex64,
) -> Result<SpectrumResult> {
    candidates.sort_by(|a, b| {
        let da = (a - shift).norm();
        let db = (b - shift).norm();
        da.partial_cmp(&db)
            .unwrap()
            .then(a.re.partial_cmp(&b.re).unwrap())
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    let mut eigenvalues: Vec<Complex64> = Vec::with_capacity(count);
    let mut eigenvectors: Vec<Vec<Complex64>> = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    let mut failures = 0usize;
    for &cand in candidates.iter() {
        if eigenvalues.len() == count {
            break;
        }
        match polish_pair(gen, cand) {
            Ok((mu, u, res)) => {
                // Reject a duplicate only if it reproduces both the value
                // and (up to phase) the vector of an accepted pair.
                let dup = eigenvalues.iter().zip(eigenvectors.iter()).any(|(m, vv)| {
                    (mu - m).norm() <= 1e-9 * (1.0 + mu.norm())
                        && dot(&u, vv).norm() > 1.0 - 1e-6
                });
                if !dup {
                    eigenvalues.push(mu);
                    eigenvectors.push(u);
                    residuals.push(res);
                }
            }
            Err(_) => failures += 1,
        }
    }
    if eigenvalues.len() < count {
        return Err(Error::Convergence {
            what: format!(
                "eigenpair extraction near {shift} ({} of {count} converged, {failures} rejected)",
                eigenvalues.len()
            ),
            iterations: candidates.len(),
        });
    }
    let min_real_part = eigenvalues.iter().map(|m| m.re).fold(f64::INFINITY, f64::min);
    Ok(SpectrumResult { eigenvalues, eigenvectors, residuals, min_real_part, shift })
}

/// Inverse iteration on S(-mu) plus the quadratic Rayleigh functional:
/// given u, the scalar equation a mu^2 + b mu + c = 0 with
/// a = u^H M_H u, b = -alpha u^H M_g1 u, c = u^H K_tot u updates mu.
fn polish_pair(gen: &Generator, mu0: Complex64) -> Result<(Complex64, Vec<Complex64>, f64)> {
    let n = gen.n();
    let sys = gen.system();
    let mut rng = ChaCha8Rng::seed_from_u64(
        mu0.re.to_bits().wrapping_mul(0x9e37_79b9).wrapping_add(mu0.im.to_bits()),
    );
    let mut u: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let s = nrm2(&u);
    for c in u.iter_mut() {
        *c /= s;
    }
    let mut mu = mu0;
    let mut best: Option<(Complex64, Vec<Complex64>, f64)> = None;
    for _ in 0..12 {
        // Solve S(-mu) w = u; if -mu is numerically at the spectrum,
        // nudge the shift off the root instead of failing.
        let solve_shift = -mu;
        let w = match gen.schur_solve(solve_shift, &u) {
            Ok((w, _)) => w,
            Err(Error::AtEigenvalue { .. }) => {
                let eps = 1e-11 * (1.0 + mu.norm());
                let (w, _) = gen.schur_solve(solve_shift + Complex64::new(eps, eps), &u)?;
                w
            }
            Err(e) => return Err(e),
        };
        let sw = nrm2(&w);
        if !sw.is_finite() || sw == 0.0 {
            break;
        }
        u = w.into_iter().map(|c| c / sw).collect();
        // Quadratic Rayleigh functional.
        let a = sys.m_h.sesquilinear(&u, &u);
        let b = -sys.alpha * sys.m_g1.sesquilinear(&u, &u);
        let c = sys.k_tot.sesquilinear(&u, &u);
        let disc = (b * b - 4.0 * a * c).sqrt();
        let r1 = (-b + disc) / (2.0 * a);
        let r2 = (-b - disc) / (2.0 * a);
        mu = if (r1 - mu).norm() <= (r2 - mu).norm() { r1 } else { r2 };
        let res = pencil_residual(gen, mu, &u);
        if best.as_ref().map_or(true, |(_, _, r)| res < *r) {
            best = Some((mu, u.clone(), res));
        }
        if res <= PENCIL_TOL * 1e-3 {
            break;
        }
    }
    let (mu, u, res) = best.ok_or_else(|| Error::Convergence {
        what: format!("inverse iteration at candidate {mu0}"),
        iterations: 12,
    })?;
    if res > PENCIL_TOL {
        return Err(Error::Convergence {
            what: format!("eigenpair at {mu} has residual {res:e}"),
            iterations: 12,
        });
    }
    Ok((mu, u, res))
}

/// ||mu^2 M_H u - mu alpha M_g1 u + K_tot u|| / ||u||, Euclidean.
pub fn pencil_residual(gen: &Generator, mu: Complex64, u: &[Complex64]) -> f64 {
    let sys = gen.system();
    let mh = sys.m_h.mul_complex_alloc(u);
    let mg = sys.m_g1.mul_complex_alloc(u);
    let kt = sys.k_tot.mul_complex_alloc(u);
    let mut ss = 0.0;
    for i in 0..u.len() {
        ss += (mu * mu * mh[i] - mu * sys.alpha * mg[i] + kt[i]).norm_sqr();
    }
    ss.sqrt() / nrm2(u)
}
