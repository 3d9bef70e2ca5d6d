//! Manifold neural networks discretized through data-driven graph Laplacians.
//!
//! The crate pairs two worlds:
//!
//! * a **discrete** network that only sees sampled points, builds a kernel
//!   graph Laplacian over them ([`graph`]), takes its smallest eigenpairs
//!   ([`spectral`]) and runs spectral filters plus pointwise nonlinearities
//!   ([`network`]);
//! * an exact **continuum** network on analytically known manifolds (unit
//!   circle, unit sphere) whose Laplace–Beltrami eigenpairs are closed form
//!   ([`manifolds`]).
//!
//! [`harness`] drives seeded Monte Carlo experiments comparing the two and
//! fits log-log convergence rates; [`bounds`] evaluates the matching
//! theoretical rate expressions so measured curves can be set against them.

pub mod bounds;
pub mod error;
pub mod filters;
pub mod graph;
pub mod harness;
pub mod manifolds;
pub mod network;
pub mod seed;
pub mod spectral;

pub use error::{Error, Result};
