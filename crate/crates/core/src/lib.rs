//! Finite element laboratory for the wave equation with a dynamic
//! (Laplace-Beltrami) boundary condition on an inner boundary and
//! dissipative Robin velocity feedback on an outer boundary.
//!
//! The crate builds polar meshes of annulus-like domains, assembles the
//! coupled bulk/boundary mass and stiffness matrices, and exposes the
//! first-order evolution operator of the closed-loop system together
//! with its resolvent. On top of that sit a contractive time stepper,
//! a quadratic eigensolver, a resolvent-norm sweep, and pointwise
//! checks of the multiplier hypotheses that certify stability.

pub mod assembly;
pub mod banded;
pub mod error;
pub mod evolve;
pub mod mesh;
pub mod multiplier;
pub mod operator;
pub mod sparse;
pub mod spectral;

pub use assembly::{build_system, AssembledSystem};
pub use error::Error;
pub use evolve::{fit_decay, simulate, smooth_data, step_midpoint, DecayFit, EnergyTrace};
pub use mesh::{
    annulus_levelset, build_annulus_mesh, build_levelset_mesh, BoundaryEdge, BoundaryTag,
    LevelSetDomain, Mesh,
};
pub use multiplier::{
    check_hypotheses, check_hypotheses_with_tol, hypothesis_samples, levelset_field,
    HypothesisSample, MultiplierReport, SampleKind, VectorField,
};
pub use operator::{Generator, ResolventSolve, State};
pub use spectral::{
    arnoldi_spectrum, dense_spectrum, quadratic_eigs, resolvent_norm, resolvent_sweep,
    ResolventSample, SpectrumResult, SweepResult,
};

pub type Result<T> = std::result::Result<T, Error>;
