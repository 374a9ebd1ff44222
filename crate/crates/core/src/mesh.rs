//! Polar triangulations of annulus-like domains with two tagged boundary
//! families: the inner loop carries the dynamic boundary condition, the
//! outer loop the dissipative feedback. Nodes are numbered ring-major
//! (node = ring * n_theta + sector) so the assembled matrices stay inside
//! a band of width n_theta + 1.

use std::io::Write;
use std::sync::Arc;

use crate::error::Error;
use crate::Result;

/// Boundary family. `GammaZero` is the inner loop (tag 0 in exports),
/// `GammaOne` the outer loop (tag 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    GammaZero,
    GammaOne,
}

impl BoundaryTag {
    pub fn as_int(self) -> u8 {
        match self {
            BoundaryTag::GammaZero => 0,
            BoundaryTag::GammaOne => 1,
        }
    }
}

/// Oriented boundary edge. `owner` is the index of the unique triangle
/// containing it; the outward normal is defined relative to that triangle.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
    pub owner: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
}

/// Domain between two level sets {f = k0} and {f = k1} of a scalar
/// function, star-shaped about the origin. `grad_f` drives the multiplier
/// construction; meshing only uses `f`.
#[derive(Clone)]
pub struct LevelSetDomain {
    pub f: Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>,
    pub grad_f: Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>,
    pub k0: f64,
    pub k1: f64,
}

fn check_polar_params(n_r: usize, n_theta: usize) -> Result<()> {
    if n_r < 2 {
        return Err(Error::invalid(format!("need at least 2 rings, got {n_r}")));
    }
    if n_theta < 3 {
        return Err(Error::invalid(format!("need at least 3 sectors, got {n_theta}")));
    }
    Ok(())
}

/// Structured annulus triangulation: `n_r` rings of `n_theta` nodes
/// between radii `r0 < r1`, each quad cell split along the outward
/// diagonal. Inner edges are tagged `GammaZero`, outer edges `GammaOne`.
pub fn build_annulus_mesh(r0: f64, r1: f64, n_r: usize, n_theta: usize) -> Result<Mesh> {
    if !(r0.is_finite() && r1.is_finite()) || r0 <= 0.0 || r1 <= r0 {
        return Err(Error::invalid(format!("need 0 < r0 < r1, got r0 = {r0}, r1 = {r1}")));
    }
    check_polar_params(n_r, n_theta)?;
    let radii: Vec<Vec<f64>> = (0..n_theta)
        .map(|_| {
            (0..n_r)
                .map(|i| r0 + (r1 - r0) * i as f64 / (n_r - 1) as f64)
                .collect()
        })
        .collect();
    build_polar(&radii, n_r, n_theta)
}

/// Radial-graph triangulation of a star-shaped level-set domain: on each
/// ray theta_j the radii of {f = k0} and {f = k1} are found by bisection
/// and the rings interpolate linearly between them.
pub fn build_levelset_mesh(domain: &LevelSetDomain, n_r: usize, n_theta: usize) -> Result<Mesh> {
    check_polar_params(n_r, n_theta)?;
    if !(domain.k0 < domain.k1) {
        return Err(Error::invalid(format!(
            "need k0 < k1, got k0 = {}, k1 = {}",
            domain.k0, domain.k1
        )));
    }
    let mut radii = Vec::with_capacity(n_theta);
    for j in 0..n_theta {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / n_theta as f64;
        let dir = [theta.cos(), theta.sin()];
        let r_in = ray_crossing(domain, dir, domain.k0)?;
        let r_out = ray_crossing(domain, dir, domain.k1)?;
        if r_out <= r_in {
            return Err(Error::invalid(format!(
                "level sets cross on ray theta = {theta}: r(k0) = {r_in}, r(k1) = {r_out}"
            )));
        }
        radii.push(
            (0..n_r)
                .map(|i| r_in + (r_out - r_in) * i as f64 / (n_r - 1) as f64)
                .collect(),
        );
    }
    build_polar(&radii, n_r, n_theta)
}

/// First radius r > 0 with f(r * dir) = k, by doubling bracket search and
/// bisection. Fails if f never reaches k along the ray, which is the
/// reject path for non-star-shaped inputs.
fn ray_crossing(domain: &LevelSetDomain, dir: [f64; 2], k: f64) -> Result<f64> {
    let g = |r: f64| (domain.f)([r * dir[0], r * dir[1]]) - k;
    let mut lo = 1e-9;
    if g(lo) >= 0.0 {
        return Err(Error::invalid(format!(
            "level-set bracket failed on ray ({}, {}): f >= k = {k} already at the origin",
            dir[0], dir[1]
        )));
    }
    let mut hi = 1.0;
    let mut tries = 0;
    while g(hi) < 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 200 || !hi.is_finite() {
            return Err(Error::invalid(format!(
                "level-set bracket failed on ray ({}, {}): f < k = {k} out to r = {hi:e}",
                dir[0], dir[1]
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn build_polar(radii: &[Vec<f64>], n_r: usize, n_theta: usize) -> Result<Mesh> {
    let mut nodes = Vec::with_capacity(n_r * n_theta);
    for i in 0..n_r {
        for j in 0..n_theta {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / n_theta as f64;
            let r = radii[j][i];
            nodes.push([r * theta.cos(), r * theta.sin()]);
        }
    }
    let node = |i: usize, j: usize| i * n_theta + (j % n_theta);
    let mut triangles = Vec::with_capacity(2 * (n_r - 1) * n_theta);
    let mut boundary_edges = Vec::with_capacity(2 * n_theta);
    for i in 0..n_r - 1 {
        for j in 0..n_theta {
            let a = node(i, j);
            let b = node(i, j + 1);
            let c = node(i + 1, j + 1);
            let d = node(i + 1, j);
            // Both triangles counterclockwise, shared diagonal a-c.
            let t_inner = triangles.len();
            triangles.push([a, c, b]);
            let t_outer = triangles.len();
            triangles.push([a, d, c]);
            if i == 0 {
                boundary_edges.push(BoundaryEdge {
                    nodes: [a, b],
                    tag: BoundaryTag::GammaZero,
                    owner: t_inner,
                });
            }
            if i + 2 == n_r {
                boundary_edges.push(BoundaryEdge {
                    nodes: [d, c],
                    tag: BoundaryTag::GammaOne,
                    owner: t_outer,
                });
            }
        }
    }
    let mesh = Mesh { nodes, triangles, boundary_edges };
    mesh.validate()?;
    Ok(mesh)
}

pub fn triangle_area(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> f64 {
    0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]))
}

impl Mesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn barycenter(&self, t: usize) -> [f64; 2] {
        let [p0, p1, p2] = self.triangle_points(t);
        [(p0[0] + p1[0] + p2[0]) / 3.0, (p0[1] + p1[1] + p2[1]) / 3.0]
    }

    pub fn edge_midpoint(&self, e: &BoundaryEdge) -> [f64; 2] {
        let [a, b] = e.nodes;
        [
            0.5 * (self.nodes[a][0] + self.nodes[b][0]),
            0.5 * (self.nodes[a][1] + self.nodes[b][1]),
        ]
    }

    pub fn edge_length(&self, e: &BoundaryEdge) -> f64 {
        let [a, b] = e.nodes;
        let (pa, pb) = (self.nodes[a], self.nodes[b]);
        ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt()
    }

    /// Unit normal of the boundary edge {a, b}, pointing out of the
    /// owning triangle (out of the domain). The pair may be given in
    /// either order; a non-boundary pair is an invalid argument.
    pub fn outward_normal(&self, a: usize, b: usize) -> Result<[f64; 2]> {
        let edge = self
            .boundary_edges
            .iter()
            .find(|e| (e.nodes == [a, b]) || (e.nodes == [b, a]))
            .ok_or_else(|| Error::invalid(format!("({a}, {b}) is not a boundary edge")))?;
        Ok(self.edge_normal(edge))
    }

    pub fn edge_normal(&self, edge: &BoundaryEdge) -> [f64; 2] {
        let [a, b] = edge.nodes;
        let (pa, pb) = (self.nodes[a], self.nodes[b]);
        let t = [pb[0] - pa[0], pb[1] - pa[1]];
        let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
        let mut n = [t[1] / len, -t[0] / len];
        let opp = self.triangles[edge.owner]
            .into_iter()
            .find(|&v| v != a && v != b)
            .expect("owner triangle contains the edge");
        let mid = self.edge_midpoint(edge);
        let away = [self.nodes[opp][0] - mid[0], self.nodes[opp][1] - mid[1]];
        if n[0] * away[0] + n[1] * away[1] > 0.0 {
            n = [-n[0], -n[1]];
        }
        n
    }

    /// Total length of the tagged polygonal boundary family.
    pub fn boundary_length(&self, tag: BoundaryTag) -> f64 {
        self.boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .map(|e| self.edge_length(e))
            .sum()
    }

    pub fn tagged_edges(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryEdge> {
        self.boundary_edges.iter().filter(move |e| e.tag == tag)
    }

    /// Shortest edge over all triangles; sets the stable time step.
    pub fn h_min(&self) -> f64 {
        self.min_max_edge().0
    }

    /// Longest edge over all triangles; sets the resolved frequency range.
    pub fn h_max(&self) -> f64 {
        self.min_max_edge().1
    }

    fn min_max_edge(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for t in &self.triangles {
            for k in 0..3 {
                let (pa, pb) = (self.nodes[t[k]], self.nodes[t[(k + 1) % 3]]);
                let l = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
                lo = lo.min(l);
                hi = hi.max(l);
            }
        }
        (lo, hi)
    }

    /// Structural soundness: finite nodes, positive triangle areas,
    /// boundary edges owned by exactly one triangle and matching the set
    /// of single-owner edges, and each tagged family forming disjoint
    /// closed loops.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for (i, p) in self.nodes.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::Assembly(format!("node {i} is not finite")));
            }
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::Assembly(format!("triangle {t} references a missing node")));
            }
            let [p0, p1, p2] = self.triangle_points(t);
            if !(triangle_area(p0, p1, p2) > 0.0) {
                return Err(Error::Assembly(format!(
                    "triangle {t} is degenerate or clockwise (area {})",
                    triangle_area(p0, p1, p2)
                )));
            }
        }
        // Edge incidence: key (min, max) -> owning triangles.
        let mut incidence: std::collections::HashMap<(usize, usize), Vec<usize>> =
            std::collections::HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                incidence.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        if let Some((e, ts)) = incidence.iter().find(|(_, ts)| ts.len() > 2) {
            return Err(Error::Assembly(format!(
                "edge {e:?} belongs to {} triangles",
                ts.len()
            )));
        }
        let single: std::collections::HashSet<(usize, usize)> = incidence
            .iter()
            .filter(|(_, ts)| ts.len() == 1)
            .map(|(&e, _)| e)
            .collect();
        let tagged: std::collections::HashSet<(usize, usize)> = self
            .boundary_edges
            .iter()
            .map(|e| (e.nodes[0].min(e.nodes[1]), e.nodes[0].max(e.nodes[1])))
            .collect();
        if single != tagged {
            return Err(Error::Assembly(
                "tagged boundary edges do not match the mesh boundary".into(),
            ));
        }
        if tagged.len() != self.boundary_edges.len() {
            return Err(Error::Assembly("duplicate boundary edge tags".into()));
        }
        for e in &self.boundary_edges {
            let ts = &incidence[&(e.nodes[0].min(e.nodes[1]), e.nodes[0].max(e.nodes[1]))];
            if ts != &vec![e.owner] {
                return Err(Error::Assembly(format!(
                    "boundary edge {:?} owner mismatch",
                    e.nodes
                )));
            }
        }
        for tag in [BoundaryTag::GammaZero, BoundaryTag::GammaOne] {
            self.check_loops(tag)?;
        }
        Ok(())
    }

    /// Walks each tagged family along its stored orientation and checks it
    /// decomposes into simple closed loops covering every tagged edge.
    fn check_loops(&self, tag: BoundaryTag) -> Result<()> {
        let edges: Vec<&BoundaryEdge> = self.tagged_edges(tag).collect();
        let mut next: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
        for e in &edges {
            if next.insert(e.nodes[0], e.nodes[1]).is_some() {
                return Err(Error::Assembly(format!(
                    "boundary family {tag:?} branches at node {}",
                    e.nodes[0]
                )));
            }
        }
        let mut seen: std::collections::HashSet<usize> = std::collections::HashSet::new();
        for e in &edges {
            let start = e.nodes[0];
            if seen.contains(&start) {
                continue;
            }
            let mut cur = start;
            for _ in 0..=edges.len() {
                seen.insert(cur);
                match next.get(&cur) {
                    Some(&nxt) => cur = nxt,
                    None => {
                        return Err(Error::Assembly(format!(
                            "boundary family {tag:?} is not closed at node {cur}"
                        )))
                    }
                }
                if cur == start {
                    break;
                }
            }
            if cur != start {
                return Err(Error::Assembly(format!(
                    "boundary family {tag:?} walk from node {start} does not close"
                )));
            }
        }
        if seen.len() != edges.len() {
            return Err(Error::Assembly(format!(
                "boundary family {tag:?} has unreachable edges"
            )));
        }
        Ok(())
    }

    /// Plain-text export: header `nodes N triangles T`, N coordinate
    /// lines `x y`, T index lines `i j k`, then one line `i j tag` per
    /// boundary edge with tag 0 for the inner family and 1 for the outer.
    pub fn write_text(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "nodes {} triangles {}", self.node_count(), self.triangle_count())?;
        for p in &self.nodes {
            writeln!(w, "{} {}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        for e in &self.boundary_edges {
            writeln!(w, "{} {} {}", e.nodes[0], e.nodes[1], e.tag.as_int())?;
        }
        Ok(())
    }
}

/// The level-set description of the reference annulus: f(x) = |x|^2 / 2
/// between k0 = r0^2/2 and k1 = r1^2/2, gradient h(x) = x.
pub fn annulus_levelset(r0: f64, r1: f64) -> LevelSetDomain {
    LevelSetDomain {
        f: Arc::new(|p| 0.5 * (p[0] * p[0] + p[1] * p[1])),
        grad_f: Arc::new(|p| p),
        k0: 0.5 * r0 * r0,
        k1: 0.5 * r1 * r1,
    }
}
