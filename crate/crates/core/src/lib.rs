//! Dyadic machinery on finite discretized measure spaces: quasi-metric grid
//! spaces, dyadic systems (Euclidean shifted lattices and greedy-net systems
//! on spaces of homogeneous type), Muckenhoupt/reverse-Hölder weight
//! constants, Young functions with Luxemburg norms, exponential-oscillation
//! symbols, discrete kernel operators with commutators, sparse families with
//! a constructive pointwise sparse-domination algorithm, and numerical
//! verification of the mixed weak-type inequalities assembled from all of it.
//!
//! Everything is finite: integrals are mass-weighted sums, balls and level
//! sets are point subsets, and every supremum runs over an explicit cube
//! family that is part of the result. All operations are pure; with the
//! `parallel` feature (default) the inner scans run on rayon with
//! deterministic, order-fixed reductions, and without it the same code runs
//! sequentially.

pub mod error;
pub mod grid;
pub mod operators;
pub mod orlicz;
pub(crate) mod par;
pub mod rng;
pub mod sparse;
pub mod symbols;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
pub use grid::{Cube, CubeId, DyadicSystem, GridSpace, PointId};
pub use operators::KernelOp;
pub use orlicz::YoungFn;
pub use sparse::{DominationCertificate, SparseFamily};
pub use symbols::SymbolSet;
pub use verify::{ConstantsConfig, MixedWeakReport};
pub use weights::Weight;

/// Library version embedded in every emitted artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Mode string for bench/report labels: which execution path is compiled in.
#[cfg(feature = "parallel")]
pub const EXEC_MODE: &str = "parallel";
#[cfg(not(feature = "parallel"))]
pub const EXEC_MODE: &str = "sequential";
