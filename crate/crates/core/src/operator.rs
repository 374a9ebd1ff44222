//! The first-order evolution operator of the closed loop and its
//! resolvent. States X = (u, v) carry position and velocity over all
//! mesh nodes; the inner-boundary trace rides along through the shared
//! node values, so no separate trace vector is stored.
//!
//! In nodal coordinates the operator is
//!     A (u, v) = (-v,  M_H^{-1} (K_tot u + alpha M_g1 v))
//! and the energy inner product is (X1, X2) = u2^H K_tot u1 + v2^H M_H v1.
//! Applying A costs one M_H solve; (A + lambda) X = F reduces by Schur
//! elimination of v to
//!     S(lambda) u = M_H g + (alpha M_g1 + lambda M_H) f,
//!     v = lambda u - f,
//! with S(lambda) = K_tot + lambda alpha M_g1 + lambda^2 M_H. Each
//! distinct lambda gets one banded LU factorization, cached for reuse;
//! S is complex symmetric, so the conjugate-transposed system solves
//! through the same factorization.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rand::Rng;

use crate::assembly::AssembledSystem;
use crate::banded::{factor_combination, BandedLu};
use crate::error::Error;
use crate::Result;

/// Relative residual a shifted solve must reach in the energy norm.
pub const RESOLVENT_TOL: f64 = 1e-10;
/// Pivot floor, relative to the largest matrix entry, below which a
/// shifted system is declared singular (shift at the discrete spectrum).
pub const PIVOT_REL_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Vec<Complex64>,
    pub v: Vec<Complex64>,
}

impl State {
    pub fn zeros(n: usize) -> Self {
        State { u: vec![Complex64::default(); n], v: vec![Complex64::default(); n] }
    }

    pub fn from_real(u: &[f64], v: &[f64]) -> Self {
        State {
            u: u.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            v: v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        }
    }

    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        let mut draw = |_: usize| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        State { u: (0..n).map(&mut draw).collect(), v: (0..n).map(&mut draw).collect() }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// self += c * other
    pub fn axpy(&mut self, c: Complex64, other: &State) {
        for (a, b) in self.u.iter_mut().zip(other.u.iter()) {
            *a += c * b;
        }
        for (a, b) in self.v.iter_mut().zip(other.v.iter()) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: Complex64) {
        for a in self.u.iter_mut().chain(self.v.iter_mut()) {
            *a *= c;
        }
    }

    pub fn scaled(&self, c: Complex64) -> State {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    pub fn sub(&self, other: &State) -> State {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other);
        out
    }
}

/// Outcome of one shifted solve (A + lambda) X = F.
#[derive(Debug, Clone)]
pub struct ResolventSolve {
    pub state: State,
    /// ||(A + lambda) X - F|| / ||F|| in the energy norm.
    pub residual: f64,
    /// Whether the factorization of S(lambda) came from the cache.
    pub factorization_reused: bool,
}

pub struct Generator {
    sys: AssembledSystem,
    m_h_lu: BandedLu,
    k_tot_lu: BandedLu,
    cache: Mutex<HashMap<(u64, u64), Arc<BandedLu>>>,
}

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

impl Generator {
    /// Factors the two Gram matrices up front; both are positive
    /// definite for a valid mesh.
    pub fn new(sys: AssembledSystem) -> Result<Self> {
        let m_h_lu = factor_combination(&[(one(), &sys.m_h)], PIVOT_REL_FLOOR)
            .map_err(|s| Error::LinearSolver(format!("M_H singular at column {}", s.column)))?;
        let k_tot_lu = factor_combination(&[(one(), &sys.k_tot)], PIVOT_REL_FLOOR)
            .map_err(|s| Error::LinearSolver(format!("K_tot singular at column {}", s.column)))?;
        Ok(Generator { sys, m_h_lu, k_tot_lu, cache: Mutex::new(HashMap::new()) })
    }

    pub fn system(&self) -> &AssembledSystem {
        &self.sys
    }

    pub fn n(&self) -> usize {
        self.sys.n
    }

    pub fn alpha(&self) -> f64 {
        self.sys.alpha
    }

    fn check_state(&self, x: &State) -> Result<()> {
        if x.u.len() != self.sys.n || x.v.len() != self.sys.n {
            return Err(Error::invalid(format!(
                "state length {}/{} does not match system size {}",
                x.u.len(),
                x.v.len(),
                self.sys.n
            )));
        }
        Ok(())
    }

    /// A X = (-v, M_H^{-1} (K_tot u + alpha M_g1 v)).
    pub fn apply(&self, x: &State) -> Result<State> {
        self.check_state(x)?;
        let mut w = self.sys.k_tot.mul_complex_alloc(&x.u);
        let g1v = self.sys.m_g1.mul_complex_alloc(&x.v);
        for (wi, gi) in w.iter_mut().zip(g1v.iter()) {
            *wi += self.sys.alpha * gi;
        }
        self.m_h_lu.solve_in_place(&mut w);
        Ok(State { u: x.v.iter().map(|c| -c).collect(), v: w })
    }

    /// (X1, X2) in the energy space; the second argument is conjugated.
    pub fn energy_inner(&self, x1: &State, x2: &State) -> Complex64 {
        self.sys.k_tot.sesquilinear(&x2.u, &x1.u) + self.sys.m_h.sesquilinear(&x2.v, &x1.v)
    }

    pub fn energy_norm(&self, x: &State) -> f64 {
        self.energy_inner(x, x).re.max(0.0).sqrt()
    }

    /// E(X) = 1/2 ||X||^2.
    pub fn energy(&self, x: &State) -> f64 {
        0.5 * self.energy_inner(x, x).re
    }

    /// alpha v^H M_g1 v, the instantaneous dissipation rate.
    pub fn feedback_form(&self, v: &[Complex64]) -> f64 {
        (self.sys.alpha * self.sys.m_g1.sesquilinear(v, v)).re
    }

    /// |(A X, X) - alpha v^H M_g1 v - 2i Im (u, v)_V| / max(1, ||X||^2):
    /// the defect in the closed-loop dissipation identity.
    pub fn dissipation_residual(&self, x: &State) -> Result<f64> {
        let ax = self.apply(x)?;
        let lhs = self.energy_inner(&ax, x);
        let v_prod = self.sys.k_tot.sesquilinear(&x.v, &x.u); // (u, v)_V
        let rhs = Complex64::new(self.feedback_form(&x.v), 2.0 * v_prod.im);
        let scale = self.energy_inner(x, x).re.max(1.0);
        Ok((lhs - rhs).norm() / scale)
    }

    fn factorization(&self, lambda: Complex64) -> Result<(Arc<BandedLu>, bool)> {
        let key = (lambda.re.to_bits(), lambda.im.to_bits());
        if let Some(lu) = self.cache.lock().unwrap().get(&key) {
            return Ok((lu.clone(), true));
        }
        let lu = factor_combination(
            &[
                (one(), &self.sys.k_tot),
                (lambda * self.sys.alpha, &self.sys.m_g1),
                (lambda * lambda, &self.sys.m_h),
            ],
            PIVOT_REL_FLOOR,
        )
        .map_err(|_| Error::AtEigenvalue { lambda })?;
        let lu = Arc::new(lu);
        self.cache.lock().unwrap().insert(key, lu.clone());
        Ok((lu, false))
    }

    /// Solves S(lambda) x = rhs through the cached factorization.
    /// Returns the solution and whether the factorization was reused.
    pub fn schur_solve(&self, lambda: Complex64, rhs: &[Complex64]) -> Result<(Vec<Complex64>, bool)> {
        if !lambda.re.is_finite() || !lambda.im.is_finite() {
            return Err(Error::invalid(format!("lambda = {lambda} is not finite")));
        }
        let (lu, reused) = self.factorization(lambda)?;
        Ok((lu.solve(rhs), reused))
    }

    /// Solves S(lambda)^H x = rhs. S is complex symmetric, so
    /// S(lambda)^H = conj(S(lambda)) and the same factorization applies
    /// to conjugated data.
    pub fn schur_solve_adjoint(&self, lambda: Complex64, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        let conj_rhs: Vec<Complex64> = rhs.iter().map(|c| c.conj()).collect();
        let (x, _) = self.schur_solve(lambda, &conj_rhs)?;
        Ok(x.into_iter().map(|c| c.conj()).collect())
    }

    pub fn solve_m_h(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        self.m_h_lu.solve(rhs)
    }

    pub fn solve_k_tot(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        self.k_tot_lu.solve(rhs)
    }

    /// Solves (A + lambda) X = F by Schur elimination. The residual is
    /// measured in the energy norm relative to ||F||; one refinement pass
    /// runs if the direct solve misses `RESOLVENT_TOL`, and a persistent
    /// miss is classified as lambda sitting at the spectrum.
    pub fn resolve(&self, lambda: Complex64, f: &State) -> Result<ResolventSolve> {
        self.check_state(f)?;
        let f_norm = self.energy_norm(f);
        if f_norm == 0.0 {
            return Ok(ResolventSolve {
                state: State::zeros(self.sys.n),
                residual: 0.0,
                factorization_reused: false,
            });
        }
        let (mut x, reused) = self.solve_once(lambda, f)?;
        let mut residual = self.shifted_residual(lambda, &x, f)? / f_norm;
        if residual > RESOLVENT_TOL {
            // One round of iterative refinement through the same
            // factorization.
            let defect = self.shifted_apply(lambda, &x)?.sub(f);
            let (corr, _) = self.solve_once(lambda, &defect)?;
            x.axpy(Complex64::new(-1.0, 0.0), &corr);
            residual = self.shifted_residual(lambda, &x, f)? / f_norm;
        }
        if residual > RESOLVENT_TOL {
            return Err(Error::AtEigenvalue { lambda });
        }
        Ok(ResolventSolve { state: x, residual, factorization_reused: reused })
    }

    fn solve_once(&self, lambda: Complex64, f: &State) -> Result<(State, bool)> {
        let n = self.sys.n;
        let mut rhs = self.sys.m_h.mul_complex_alloc(&f.v);
        let g1f = self.sys.m_g1.mul_complex_alloc(&f.u);
        let mhf = self.sys.m_h.mul_complex_alloc(&f.u);
        for i in 0..n {
            rhs[i] += self.sys.alpha * g1f[i] + lambda * mhf[i];
        }
        let (u, reused) = self.schur_solve(lambda, &rhs)?;
        let v: Vec<Complex64> = (0..n).map(|i| lambda * u[i] - f.u[i]).collect();
        Ok((State { u, v }, reused))
    }

    fn shifted_apply(&self, lambda: Complex64, x: &State) -> Result<State> {
        let mut ax = self.apply(x)?;
        ax.axpy(lambda, x);
        Ok(ax)
    }

    fn shifted_residual(&self, lambda: Complex64, x: &State, f: &State) -> Result<f64> {
        let r = self.shifted_apply(lambda, x)?.sub(f);
        Ok(self.energy_norm(&r))
    }
}
