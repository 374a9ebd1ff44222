//! P1 finite element assembly. Bulk mass and stiffness come from the
//! triangles; the inner boundary family additionally carries 1D
//! arc-length mass and stiffness (the surface Laplacian of the dynamic
//! condition), the outer family a 1D mass (the feedback term).
//!
//! The two Gram matrices of the energy setting are
//!   K_tot = K_bulk + K_g0 + M_g1   (position space, positive definite)
//!   M_H   = M_bulk + M_g0          (velocity space)
//! and the feedback strength alpha is stored alongside.

use std::io::Write;
use std::path::Path;

use crate::error::Error;
use crate::mesh::{BoundaryTag, Mesh};
use crate::sparse::{CsrMatrix, TripletList};
use crate::Result;

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub n: usize,
    pub alpha: f64,
    pub m_bulk: CsrMatrix,
    pub k_bulk: CsrMatrix,
    pub m_g0: CsrMatrix,
    pub k_g0: CsrMatrix,
    pub m_g1: CsrMatrix,
    pub k_tot: CsrMatrix,
    pub m_h: CsrMatrix,
    /// Nodes on the inner and outer boundary loops, ascending.
    pub gamma0_nodes: Vec<usize>,
    pub gamma1_nodes: Vec<usize>,
}

/// Exact P1 mass matrix of a triangle of given area.
pub fn tri_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// P1 stiffness from the constant shape-function gradients.
pub fn tri_stiffness(p: [[f64; 2]; 3]) -> Result<[[f64; 3]; 3]> {
    let area = crate::mesh::triangle_area(p[0], p[1], p[2]);
    if !(area > 0.0) {
        return Err(Error::Assembly(format!("degenerate triangle, area {area}")));
    }
    // grad phi_i = (b_i, c_i) / (2 area)
    let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
    let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
        }
    }
    Ok(k)
}

/// 1D P1 mass on an edge of length `l`.
pub fn edge_mass(l: f64) -> Result<[[f64; 2]; 2]> {
    if !(l > 0.0) {
        return Err(Error::Assembly(format!("zero-length edge (l = {l})")));
    }
    Ok([[l / 3.0, l / 6.0], [l / 6.0, l / 3.0]])
}

/// 1D P1 stiffness on an edge of length `l`; assembled over a closed
/// loop this is the arc-length-weighted periodic second difference.
pub fn edge_stiffness(l: f64) -> Result<[[f64; 2]; 2]> {
    if !(l > 0.0) {
        return Err(Error::Assembly(format!("zero-length edge (l = {l})")));
    }
    Ok([[1.0 / l, -1.0 / l], [-1.0 / l, 1.0 / l]])
}

/// Assembles every matrix of the coupled system. `alpha` is the feedback
/// gain; zero gives the conservative closed loop, negative values are
/// rejected.
pub fn build_system(mesh: &Mesh, alpha: f64) -> Result<AssembledSystem> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::invalid(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let n = mesh.node_count();
    let mut m_bulk = TripletList::new(n);
    let mut k_bulk = TripletList::new(n);
    for t in 0..mesh.triangle_count() {
        let p = mesh.triangle_points(t);
        let area = crate::mesh::triangle_area(p[0], p[1], p[2]);
        let me = tri_mass(area);
        let ke = tri_stiffness(p)?;
        m_bulk.push_block(mesh.triangles[t], me);
        k_bulk.push_block(mesh.triangles[t], ke);
    }
    let mut m_g0 = TripletList::new(n);
    let mut k_g0 = TripletList::new(n);
    let mut m_g1 = TripletList::new(n);
    for e in &mesh.boundary_edges {
        let l = mesh.edge_length(e);
        let me = edge_mass(l)?;
        match e.tag {
            BoundaryTag::GammaZero => {
                m_g0.push_block(e.nodes, me);
                k_g0.push_block(e.nodes, edge_stiffness(l)?);
            }
            BoundaryTag::GammaOne => {
                m_g1.push_block(e.nodes, me);
            }
        }
    }
    let m_bulk = m_bulk.to_csr();
    let k_bulk = k_bulk.to_csr();
    let m_g0 = m_g0.to_csr();
    let k_g0 = k_g0.to_csr();
    let m_g1 = m_g1.to_csr();
    let k_tot = k_bulk.add(&k_g0).add(&m_g1);
    let m_h = m_bulk.add(&m_g0);
    let tagged_nodes = |tag: BoundaryTag| {
        let mut v: Vec<usize> = mesh
            .tagged_edges(tag)
            .flat_map(|e| e.nodes.into_iter())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    Ok(AssembledSystem {
        n,
        alpha,
        gamma0_nodes: tagged_nodes(BoundaryTag::GammaZero),
        gamma1_nodes: tagged_nodes(BoundaryTag::GammaOne),
        m_bulk,
        k_bulk,
        m_g0,
        k_g0,
        m_g1,
        k_tot,
        m_h,
    })
}

impl AssembledSystem {
    /// Writes each matrix as `row col re im` lines (one file per matrix)
    /// into `dir`, creating it if needed. Entries are real; im is 0.
    pub fn dump_matrices(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let pairs: [(&str, &CsrMatrix); 7] = [
            ("m_bulk", &self.m_bulk),
            ("k_bulk", &self.k_bulk),
            ("m_g0", &self.m_g0),
            ("k_g0", &self.k_g0),
            ("m_g1", &self.m_g1),
            ("k_tot", &self.k_tot),
            ("m_h", &self.m_h),
        ];
        for (name, m) in pairs {
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{name}.txt")))?);
            for (i, j, v) in m.iter_entries() {
                writeln!(f, "{i} {j} {v} 0")?;
            }
        }
        Ok(())
    }
}
