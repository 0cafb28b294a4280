//! Mirror descent solvers for variational inequality problems with
//! functional (inequality-type) constraints.
//!
//! The crate is organized around four pieces:
//!
//! * [`geometry`] — normed-space setup: prox functions, Bregman divergence,
//!   and closed-form proximal (mirror) steps on the Euclidean ball and the
//!   probability simplex.
//! * [`problems`] — the problem abstraction (bounded operator + Lipschitz
//!   constraint family over a feasible set) together with seeded generators
//!   for the Harker-Pang test operator, random affine constraints, and the
//!   forsaken min-max game.
//! * [`solvers`] — seven mirror-descent variants with productive /
//!   non-productive step switching, two stopping criteria per variant, and a
//!   per-constraint modification for problems with many constraints.
//! * [`certify`] — a-priori accuracy bounds for every (variant, criterion)
//!   pair and brute-force verification oracles for low-dimensional instances.
//!
//! All solver runs are deterministic: identical inputs produce bit-identical
//! iterates and traces.

pub mod certify;
pub mod geometry;
pub mod problems;
pub mod sampling;
pub mod solvers;

pub use geometry::{EntropySimplex, EuclideanBall, Geometry, GeometryError};
pub use problems::{ConstraintFamily, OperatorSpec, VIProblem};
pub use solvers::{solve, Algorithm, Criterion, RunResult, SolverConfig, Termination};
