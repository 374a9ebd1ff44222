//! Checks the geometric multiplier hypotheses for a candidate vector
//! field h on a meshed domain:
//!
//! (a) the symmetric part of the Jacobian of h is uniformly positive
//!     definite in the bulk,
//! (b) h is parallel to the outward normal on the inner boundary loop,
//!     h = (h.nu) nu with h.nu <= 0 there,
//! (c) h has a strictly positive outward normal component on the outer
//!     boundary.
//!
//! The checks are sampled: (a) at triangle barycenters, (b) and (c) at
//! boundary edge midpoints against the polygonal edge normals. On a
//! polygonal approximation of a curved boundary a field normal to the
//! true curve picks up O(h) tangential leakage away from midpoints, so
//! the default tolerance is the coarse `POLYGONAL_PARALLEL_TOL`; fields
//! aligned with the actual polygon earn the tight `EXACT_PARALLEL_TOL`.

use std::sync::Arc;

use crate::error::Error;
use crate::mesh::{BoundaryTag, LevelSetDomain, Mesh};
use crate::Result;

/// Relative tolerance for tangency on exact polygonal geometry.
pub const EXACT_PARALLEL_TOL: f64 = 1e-8;
/// Relative tolerance for tangency on polygonal approximations of
/// smooth boundaries.
pub const POLYGONAL_PARALLEL_TOL: f64 = 1e-3;

type FieldFn = dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync;
type JacobianFn = dyn Fn([f64; 2]) -> [[f64; 2]; 2] + Send + Sync;

/// A candidate multiplier field with an optional analytic Jacobian.
/// Without one, the Jacobian is approximated by central differences
/// with relative step `fd_step`.
#[derive(Clone)]
pub struct VectorField {
    pub h: Arc<FieldFn>,
    pub jacobian: Option<Arc<JacobianFn>>,
    pub fd_step: f64,
}

impl VectorField {
    pub fn new(h: impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static) -> Self {
        VectorField { h: Arc::new(h), jacobian: None, fd_step: 1e-6 }
    }

    pub fn with_jacobian(
        mut self,
        j: impl Fn([f64; 2]) -> [[f64; 2]; 2] + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = step;
        self
    }

    /// The identity field h(x) = x; Jacobian I, rho = 1.
    pub fn radial() -> Self {
        VectorField::new(|p| p).with_jacobian(|_| [[1.0, 0.0], [0.0, 1.0]])
    }

    /// The rigid rotation h(x, y) = (y, -x); skew Jacobian, rho = 0.
    pub fn rotation() -> Self {
        VectorField::new(|p| [p[1], -p[0]]).with_jacobian(|_| [[0.0, 1.0], [-1.0, 0.0]])
    }

    fn eval(&self, p: [f64; 2]) -> Result<[f64; 2]> {
        let v = (self.h)(p);
        if v.iter().all(|c| c.is_finite()) {
            Ok(v)
        } else {
            Err(Error::Evaluation(format!(
                "field value {v:?} at ({}, {}) is not finite",
                p[0], p[1]
            )))
        }
    }

    fn eval_jacobian(&self, p: [f64; 2]) -> Result<[[f64; 2]; 2]> {
        let j = match &self.jacobian {
            Some(j) => j(p),
            None => {
                let d = self.fd_step * (1.0 + (p[0] * p[0] + p[1] * p[1]).sqrt());
                let mut j = [[0.0; 2]; 2];
                for col in 0..2 {
                    let mut hi = p;
                    let mut lo = p;
                    hi[col] += d;
                    lo[col] -= d;
                    let fhi = self.eval(hi)?;
                    let flo = self.eval(lo)?;
                    j[0][col] = (fhi[0] - flo[0]) / (2.0 * d);
                    j[1][col] = (fhi[1] - flo[1]) / (2.0 * d);
                }
                j
            }
        };
        if j.iter().flatten().all(|c| c.is_finite()) {
            Ok(j)
        } else {
            Err(Error::Evaluation(format!(
                "Jacobian {j:?} at ({}, {}) is not finite",
                p[0], p[1]
            )))
        }
    }
}

/// Outcome of the hypothesis checks, with the raw sampled quantities so
/// callers can apply their own tolerances.
#[derive(Debug, Clone)]
pub struct MultiplierReport {
    /// min over barycenters of the smallest eigenvalue of sym(Dh).
    pub rho: f64,
    /// Barycenter attaining rho.
    pub rho_argmin: [f64; 2],
    /// max over inner-boundary midpoints of ||h - (h.nu) nu||.
    pub parallel_residual: f64,
    /// max over inner-boundary midpoints of h.nu (signed).
    pub inner_max_normal: f64,
    /// min over outer-boundary midpoints of h.nu.
    pub outer_min_normal: f64,
    /// max sampled ||h||, the scale the tangency tolerance is relative to.
    pub field_scale: f64,
    /// Absolute tangency tolerance used for the verdicts.
    pub parallel_tol: f64,
    /// True when the Jacobian came from finite differences.
    pub jacobian_from_fd: bool,
    /// (a): rho > 0.
    pub bulk_ok: bool,
    /// (b): tangent on the inner loop with nonpositive normal part,
    /// within the tolerance.
    pub inner_ok: bool,
    /// (c): outer_min_normal > 0.
    pub outer_ok: bool,
}

impl MultiplierReport {
    pub fn all_ok(&self) -> bool {
        self.bulk_ok && self.inner_ok && self.outer_ok
    }
}

/// Where a hypothesis sample was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    /// Triangle barycenter; carries lambda_min.
    Bulk,
    /// Inner-loop edge midpoint; carries h.nu and the tangential defect.
    InnerBoundary,
    /// Outer-loop edge midpoint; carries h.nu.
    OuterBoundary,
}

/// One sampled evaluation of the field against the hypotheses.
#[derive(Debug, Clone)]
pub struct HypothesisSample {
    pub kind: SampleKind,
    pub point: [f64; 2],
    pub h: [f64; 2],
    /// Smallest eigenvalue of sym(Dh); bulk samples only.
    pub lambda_min: Option<f64>,
    /// Signed normal component; boundary samples only.
    pub h_dot_nu: Option<f64>,
    /// ||h - (h.nu) nu||; inner-boundary samples only.
    pub parallel_defect: Option<f64>,
}

impl HypothesisSample {
    fn h_norm(&self) -> f64 {
        (self.h[0] * self.h[0] + self.h[1] * self.h[1]).sqrt()
    }
}

/// Evaluates the field at every barycenter and boundary-edge midpoint,
/// in mesh order (triangles first, then boundary edges).
pub fn hypothesis_samples(field: &VectorField, mesh: &Mesh) -> Result<Vec<HypothesisSample>> {
    if mesh.triangle_count() == 0 {
        return Err(Error::invalid("mesh has no triangles"));
    }
    let mut rows = Vec::with_capacity(mesh.triangle_count() + mesh.boundary_edges.len());
    for t in 0..mesh.triangle_count() {
        let p = mesh.barycenter(t);
        let j = field.eval_jacobian(p)?;
        rows.push(HypothesisSample {
            kind: SampleKind::Bulk,
            point: p,
            h: field.eval(p)?,
            lambda_min: Some(min_symmetric_eigenvalue(&j)),
            h_dot_nu: None,
            parallel_defect: None,
        });
    }
    for edge in &mesh.boundary_edges {
        let p = mesh.edge_midpoint(edge);
        let h = field.eval(p)?;
        let nu = mesh.outward_normal(edge.nodes[0], edge.nodes[1])?;
        let hn = h[0] * nu[0] + h[1] * nu[1];
        let (kind, defect) = match edge.tag {
            BoundaryTag::GammaZero => {
                // Hypothesis (b) wants h = (h.nu) nu, so the defect is
                // the tangential component left after projecting out nu.
                let tang = [h[0] - hn * nu[0], h[1] - hn * nu[1]];
                let leak = (tang[0] * tang[0] + tang[1] * tang[1]).sqrt();
                (SampleKind::InnerBoundary, Some(leak))
            }
            BoundaryTag::GammaOne => (SampleKind::OuterBoundary, None),
        };
        rows.push(HypothesisSample {
            kind,
            point: p,
            h,
            lambda_min: None,
            h_dot_nu: Some(hn),
            parallel_defect: defect,
        });
    }
    Ok(rows)
}

/// Runs the checks with the polygonal-geometry tangency tolerance.
pub fn check_hypotheses(field: &VectorField, mesh: &Mesh) -> Result<MultiplierReport> {
    check_hypotheses_with_tol(field, mesh, POLYGONAL_PARALLEL_TOL)
}

/// Runs the checks with an explicit relative tangency tolerance
/// (relative to the largest sampled |h|).
pub fn check_hypotheses_with_tol(
    field: &VectorField,
    mesh: &Mesh,
    rel_parallel_tol: f64,
) -> Result<MultiplierReport> {
    if !(rel_parallel_tol >= 0.0) {
        return Err(Error::invalid(format!("bad tangency tolerance {rel_parallel_tol}")));
    }
    let samples = hypothesis_samples(field, mesh)?;
    summarize(&samples, rel_parallel_tol, field.jacobian.is_none())
}

fn summarize(
    samples: &[HypothesisSample],
    rel_parallel_tol: f64,
    jacobian_from_fd: bool,
) -> Result<MultiplierReport> {
    let mut rho = f64::INFINITY;
    let mut rho_argmin = [f64::NAN; 2];
    let mut field_scale = 0.0f64;
    let mut parallel_residual = 0.0f64;
    let mut inner_max_normal = f64::NEG_INFINITY;
    let mut outer_min_normal = f64::INFINITY;
    let mut seen_inner = false;
    let mut seen_outer = false;
    for s in samples {
        field_scale = field_scale.max(s.h_norm());
        match s.kind {
            SampleKind::Bulk => {
                let lam = s.lambda_min.unwrap();
                if lam < rho {
                    rho = lam;
                    rho_argmin = s.point;
                }
            }
            SampleKind::InnerBoundary => {
                seen_inner = true;
                parallel_residual = parallel_residual.max(s.parallel_defect.unwrap());
                inner_max_normal = inner_max_normal.max(s.h_dot_nu.unwrap());
            }
            SampleKind::OuterBoundary => {
                seen_outer = true;
                outer_min_normal = outer_min_normal.min(s.h_dot_nu.unwrap());
            }
        }
    }
    if !seen_inner || !seen_outer {
        return Err(Error::invalid("mesh is missing a tagged boundary loop"));
    }
    let parallel_tol = rel_parallel_tol * field_scale.max(f64::MIN_POSITIVE);
    Ok(MultiplierReport {
        rho,
        rho_argmin,
        parallel_residual,
        inner_max_normal,
        outer_min_normal,
        field_scale,
        parallel_tol,
        jacobian_from_fd,
        bulk_ok: rho > 0.0,
        inner_ok: parallel_residual <= parallel_tol && inner_max_normal <= parallel_tol,
        outer_ok: outer_min_normal > 0.0,
    })
}

/// Gradient field of the domain's level-set function, the natural
/// multiplier candidate for star-shaped level-set domains. The Jacobian
/// (the Hessian of f) comes from central differences of grad f.
pub fn levelset_field(domain: &LevelSetDomain) -> VectorField {
    let grad = domain.grad_f.clone();
    let grad_j = domain.grad_f.clone();
    let mut vf = VectorField::new(move |p| grad(p));
    let step = vf.fd_step;
    vf.jacobian = Some(Arc::new(move |p: [f64; 2]| {
        let d = step * (1.0 + (p[0] * p[0] + p[1] * p[1]).sqrt());
        let mut j = [[0.0; 2]; 2];
        for col in 0..2 {
            let mut hi = p;
            let mut lo = p;
            hi[col] += d;
            lo[col] -= d;
            let ghi = grad_j(hi);
            let glo = grad_j(lo);
            j[0][col] = (ghi[0] - glo[0]) / (2.0 * d);
            j[1][col] = (ghi[1] - glo[1]) / (2.0 * d);
        }
        j
    }));
    vf
}

/// Smallest eigenvalue of the symmetric part of a 2x2 matrix.
fn min_symmetric_eigenvalue(j: &[[f64; 2]; 2]) -> f64 {
    let a = j[0][0];
    let d = j[1][1];
    let b = 0.5 * (j[0][1] + j[1][0]);
    let mean = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    mean - disc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{annulus_levelset, build_annulus_mesh, build_levelset_mesh};

    #[test]
    fn radial_field_satisfies_everything() {
        let n_theta = 24;
        let mesh = build_annulus_mesh(1.0, 2.0, 3, n_theta).unwrap();
        let rep = check_hypotheses(&VectorField::radial(), &mesh).unwrap();
        assert!((rep.rho - 1.0).abs() <= 1e-12, "rho = {}", rep.rho);
        assert!(rep.all_ok());
        // At an edge midpoint the position vector and the polygonal edge
        // normal are exactly collinear, so the tangential defect is zero
        // and h.nu is minus the midpoint radius on the inner loop.
        assert!(rep.parallel_residual <= 1e-13);
        assert!(rep.inner_max_normal < 0.0);
        let expected_inner = -(std::f64::consts::PI / n_theta as f64).cos();
        assert!(
            (rep.inner_max_normal - expected_inner).abs() <= 1e-12,
            "inner normal {}",
            rep.inner_max_normal
        );
        // h at an outer edge midpoint is radial with length r1 cos(pi/n)
        // and the polygonal edge normal points the same way.
        let c = (std::f64::consts::PI / n_theta as f64).cos();
        assert!(
            (rep.outer_min_normal - 2.0 * c).abs() <= 1e-12,
            "outer normal {}",
            rep.outer_min_normal
        );
    }

    #[test]
    fn tilted_field_separates_the_two_tolerance_readings() {
        // h = identity rotated by 1e-5 rad leaves an O(1e-5) tangential
        // part on the inner loop: too big for the exact-geometry reading,
        // well inside the polygonal one.
        let mesh = build_annulus_mesh(1.0, 2.0, 2, 16).unwrap();
        let d = 1e-5f64;
        let (cd, sd) = (d.cos(), d.sin());
        let tilted = VectorField::new(move |p| {
            [cd * p[0] - sd * p[1], sd * p[0] + cd * p[1]]
        })
        .with_jacobian(move |_| [[cd, -sd], [sd, cd]]);
        let coarse = check_hypotheses(&tilted, &mesh).unwrap();
        let strict = check_hypotheses_with_tol(&tilted, &mesh, EXACT_PARALLEL_TOL).unwrap();
        assert!(coarse.inner_ok);
        assert!(!strict.inner_ok);
        assert_eq!(strict.parallel_tol, EXACT_PARALLEL_TOL * strict.field_scale);
        assert!(strict.parallel_residual > 1e-6 && strict.parallel_residual < 1e-4);
        assert!(coarse.bulk_ok, "rho = {} should be cos(d)", coarse.rho);
    }

    #[test]
    fn rotation_field_is_tangent_and_fails_everywhere_it_should() {
        let mesh = build_annulus_mesh(1.0, 2.0, 3, 20).unwrap();
        let rep = check_hypotheses(&VectorField::rotation(), &mesh).unwrap();
        assert!(rep.rho.abs() <= 1e-12);
        assert!(!rep.bulk_ok);
        // Rigid rotation is tangent to every circle: the whole field is
        // tangential defect on the inner loop, so (b) fails loudly even
        // though h.nu itself vanishes.
        assert!(rep.inner_max_normal.abs() <= 1e-12);
        assert!(rep.parallel_residual >= 0.9);
        assert!(!rep.inner_ok);
        assert!(!rep.outer_ok);
        assert!(rep.outer_min_normal.abs() <= 1e-12);
        assert!(!rep.all_ok());
    }

    #[test]
    fn zero_field_fails_bulk_and_outer_only() {
        let mesh = build_annulus_mesh(1.0, 2.0, 2, 12).unwrap();
        let rep = check_hypotheses(&VectorField::new(|_| [0.0, 0.0]), &mesh).unwrap();
        assert_eq!(rep.rho, 0.0);
        assert_eq!(rep.parallel_residual, 0.0);
        assert_eq!(rep.outer_min_normal, 0.0);
        assert!(!rep.bulk_ok && rep.inner_ok && !rep.outer_ok);
    }

    #[test]
    fn fd_jacobian_matches_analytic_for_anisotropic_field() {
        let mesh = build_annulus_mesh(1.0, 2.0, 3, 16).unwrap();
        let analytic = VectorField::new(|p| [p[0], 2.0 * p[1]])
            .with_jacobian(|_| [[1.0, 0.0], [0.0, 2.0]]);
        let fd = VectorField::new(|p| [p[0], 2.0 * p[1]]);
        let ra = check_hypotheses(&analytic, &mesh).unwrap();
        let rf = check_hypotheses(&fd, &mesh).unwrap();
        assert!(!ra.jacobian_from_fd && rf.jacobian_from_fd);
        assert!((ra.rho - 1.0).abs() <= 1e-12);
        assert!((rf.rho - 1.0).abs() <= 1e-8, "fd rho = {}", rf.rho);
    }

    #[test]
    fn fd_step_halving_converges_at_second_order() {
        // Nonlinear field h = |x|^2 x has Jacobian |x|^2 I + 2 x x^T;
        // central differences err at O(step^2), so halving the step
        // shrinks the rho error by about 4.
        let mesh = build_annulus_mesh(1.0, 2.0, 3, 16).unwrap();
        let exact = {
            let f = VectorField::new(|p: [f64; 2]| {
                let r2 = p[0] * p[0] + p[1] * p[1];
                [r2 * p[0], r2 * p[1]]
            })
            .with_jacobian(|p: [f64; 2]| {
                let r2 = p[0] * p[0] + p[1] * p[1];
                [
                    [r2 + 2.0 * p[0] * p[0], 2.0 * p[0] * p[1]],
                    [2.0 * p[0] * p[1], r2 + 2.0 * p[1] * p[1]],
                ]
            });
            check_hypotheses(&f, &mesh).unwrap().rho
        };
        let rho_at = |step: f64| {
            let f = VectorField::new(|p: [f64; 2]| {
                let r2 = p[0] * p[0] + p[1] * p[1];
                [r2 * p[0], r2 * p[1]]
            })
            .with_fd_step(step);
            check_hypotheses(&f, &mesh).unwrap().rho
        };
        let e1 = (rho_at(1e-2) - exact).abs();
        let e2 = (rho_at(5e-3) - exact).abs();
        assert!(e2 > 0.0, "halved-step error vanished; widen steps");
        let ratio = e1 / e2;
        assert!(
            (2.5..8.0).contains(&ratio),
            "expected ~4x error reduction, got {ratio} ({e1:e} -> {e2:e})"
        );
    }

    #[test]
    fn levelset_gradient_field_on_circular_levelset_matches_radial() {
        let domain = annulus_levelset(1.0, 2.0);
        let mesh = build_levelset_mesh(&domain, 3, 20).unwrap();
        let field = levelset_field(&domain);
        let rep = check_hypotheses(&field, &mesh).unwrap();
        // grad(|x|^2/2) = x, so this reduces to the radial field.
        assert!((rep.rho - 1.0).abs() <= 1e-7, "rho = {}", rep.rho);
        assert!(rep.bulk_ok && rep.outer_ok);
        assert!(rep.inner_max_normal < 0.0);
    }

    #[test]
    fn report_is_rotation_equivariant() {
        // Anisotropic level-set domain (ellipse) and its rotation by
        // beta: rho, the normal extrema, and the residual are invariant.
        // beta sits on the azimuthal sampling grid so the rotated mesh
        // is a rigid rotation of the original; off-grid angles change
        // the polygon itself by O(h^2).
        let beta = 3.0 * std::f64::consts::TAU / 24.0;
        let (cb, sb) = (beta.cos(), beta.sin());
        let base = LevelSetDomain {
            f: std::sync::Arc::new(|p: [f64; 2]| 0.5 * (p[0] * p[0] + 2.0 * p[1] * p[1])),
            grad_f: std::sync::Arc::new(|p: [f64; 2]| [p[0], 2.0 * p[1]]),
            k0: 0.5,
            k1: 2.0,
        };
        let rot = LevelSetDomain {
            f: std::sync::Arc::new(move |p: [f64; 2]| {
                let q = [cb * p[0] + sb * p[1], -sb * p[0] + cb * p[1]];
                0.5 * (q[0] * q[0] + 2.0 * q[1] * q[1])
            }),
            grad_f: std::sync::Arc::new(move |p: [f64; 2]| {
                let q = [cb * p[0] + sb * p[1], -sb * p[0] + cb * p[1]];
                let g = [q[0], 2.0 * q[1]];
                [cb * g[0] - sb * g[1], sb * g[0] + cb * g[1]]
            }),
            k0: 0.5,
            k1: 2.0,
        };
        let mesh_a = build_levelset_mesh(&base, 3, 24).unwrap();
        let mesh_b = build_levelset_mesh(&rot, 3, 24).unwrap();
        let ra = check_hypotheses(&levelset_field(&base), &mesh_a).unwrap();
        let rb = check_hypotheses(&levelset_field(&rot), &mesh_b).unwrap();
        assert!((ra.rho - rb.rho).abs() <= 1e-6, "{} vs {}", ra.rho, rb.rho);
        assert!(
            (ra.outer_min_normal - rb.outer_min_normal).abs() <= 1e-6,
            "{} vs {}",
            ra.outer_min_normal,
            rb.outer_min_normal
        );
        assert!((ra.parallel_residual - rb.parallel_residual).abs() <= 1e-6);
    }

    #[test]
    fn pointwise_quadratic_form_certificate() {
        // For weights w_i > 0 and arbitrary complex vectors f_i sampled
        // at barycenters, Re sum w <J f, f> >= rho sum w |f|^2.
        use num_complex::Complex64;
        use rand::Rng;
        use rand::SeedableRng;
        let mesh = build_annulus_mesh(1.0, 2.0, 3, 14).unwrap();
        let field = VectorField::new(|p| [p[0] + 0.1 * p[1], 2.0 * p[1]])
            .with_jacobian(|_| [[1.0, 0.1], [0.0, 2.0]]);
        let rep = check_hypotheses(&field, &mesh).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for t in 0..mesh.triangle_count() {
            let p = mesh.barycenter(t);
            let j = field.eval_jacobian(p).unwrap();
            let w: f64 = rng.gen_range(0.1..1.0);
            let f = [
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            ];
            let jf = [
                j[0][0] * f[0] + j[0][1] * f[1],
                j[1][0] * f[0] + j[1][1] * f[1],
            ];
            lhs += w * (jf[0] * f[0].conj() + jf[1] * f[1].conj()).re;
            rhs += w * (f[0].norm_sqr() + f[1].norm_sqr());
        }
        assert!(lhs >= rep.rho * rhs - 1e-12 * rhs, "{lhs} < rho * {rhs}");
    }

    #[test]
    fn non_finite_field_is_an_evaluation_error() {
        let mesh = build_annulus_mesh(1.0, 2.0, 2, 8).unwrap();
        let bad = VectorField::new(|p| [p[0] / 0.0, p[1]]);
        assert!(matches!(
            check_hypotheses(&bad, &mesh),
            Err(Error::Evaluation(_))
        ));
    }
}
