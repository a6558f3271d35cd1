//! Spectral bundle methods for semidefinite programs.
//!
//! The solver works on the penalized dual
//!
//! ```text
//! minimize F(y) = ⟨−b, y⟩ + α·max(λ_max(𝒜*y − C), 0)
//! ```
//!
//! of the primal `maximize ⟨−C, X⟩ s.t. 𝒜X = b, X ⪰ 0`. Each iteration
//! minimizes a low-rank spectral model of `F` plus a proximal term, tests the
//! candidate for sufficient decrease, and refreshes the model from the top
//! eigenvectors at the candidate. Three model-update rules are provided: the
//! block rule, the rank-splitting rule and their hybrid.

pub mod bench;
pub mod bundle;
pub mod error;
pub mod linops;
pub mod model;
pub mod rng;
pub mod sketch;
pub mod subproblem;

pub use bundle::{run, run_with_start, RunOutput, SolverConfig, Variant};
pub use error::{Error, Result};
pub use linops::{ConstraintMap, OrthonormalBasis, SparseSym, SymMatrix};
pub use model::{eval_f, SdpProblem, StorageMode};
