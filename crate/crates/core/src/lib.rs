//! Simulation toolkit for critical long-range percolation on finite boxes of `Z^d`.
//!
//! Edges `{x, y}` with `‖x − y‖_∞ = 1` are always open; longer edges are open
//! independently with probability `1 − exp(−β J(x − y))`, where `J` is the
//! self-similar kernel (the integral of `‖s − t‖^{−2d}` over the unit cells of
//! `x` and `y`). The crate is organised bottom-up:
//!
//! * [`kernel`]: exact kernel values, edge probabilities and expected degree.
//! * [`sampler`]: environments on boxes, grouped by displacement class, and
//!   monotone (Harris) couplings between two kernels.
//! * [`graphdist`]: BFS chemical distances, balls, diameters, indirect
//!   distances, degree statistics and an exhaustive small-box oracle.
//! * [`renorm`]: block tessellations, the renormalized graph, good-block
//!   classification and the k-box-count.
//! * [`experiments`]: scaling-law estimators built on the above.

pub mod error;
pub mod experiments;
pub mod graphdist;
pub mod kernel;
pub mod renorm;
pub mod sampler;
pub mod stats;
pub mod streams;

pub use error::{Error, Result};
pub use kernel::{ExtReal, KernelSpec, KernelTable, KernelVariant};
pub use sampler::{BoxShape, CouplingPair, Environment};
