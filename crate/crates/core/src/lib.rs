//! Simulation, exact laws and scaling limits for multitype branching
//! populations with mother-dependent neutral mutations.
//!
//! Types are zero-based throughout the API. Exported text files render types
//! one-based.

pub mod allele_tree;
pub mod clone_mutant;
pub mod coding_walks;
pub mod counts;
pub mod error;
pub mod exact_dist;
pub mod genealogy;
pub mod offspring_laws;
pub mod quadrature;
pub mod replicas;
pub mod scaling_limits;
pub mod stats_verify;

pub use counts::Counts;
pub use error::{CapKind, Error, Result};
pub use offspring_laws::{LawSpec, MotherDependentLaw, OffspringLaw};
