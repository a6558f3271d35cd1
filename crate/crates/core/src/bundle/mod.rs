//! The outer bundle iterations.
//!
//! Every variant solves the same regularized model problem and applies the
//! same descent test; they differ only in how the aggregate `X̄` and the
//! basis `V` are refreshed afterwards:
//!
//! * block: `X̄ ← X_t` and `V ←` the top `r̄` eigenvectors at the candidate;
//! * hr: the top `hr_keep` eigen-directions of `S*` stay in `V` together with
//!   one new eigenvector, the rest of `X_t` is folded into `X̄`;
//! * hybrid: as hr but with all `r̄` new eigenvectors appended.

mod invariants;
mod run;
mod step;

pub use invariants::{InvariantChecker, InvariantReport};
pub use run::{run, run_with_start, stopping_measure, PrimalOutput, RunOutput, StopReason};
pub use step::{step, step_block, step_hr, step_hybrid};

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{OrthonormalBasis, SymMatrix};
use crate::model::{Aggregate, StorageMode};
use crate::sketch::SketchState;
use crate::subproblem::InnerOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Block,
    Hr,
    Hybrid,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Block => "block",
            Variant::Hr => "hr",
            Variant::Hybrid => "hybrid",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "block" | "b" => Ok(Variant::Block),
            "hr" => Ok(Variant::Hr),
            "hybrid" => Ok(Variant::Hybrid),
            other => Err(Error::InvalidConfig(format!("unknown variant '{other}'"))),
        }
    }
}

/// Solver parameters. The penalty `α` belongs to the problem, not here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub variant: Variant,
    pub beta: f64,
    pub rho: f64,
    pub rbar: usize,
    /// Eigen-directions of `S*` kept in the basis by hr/hybrid; `None` means `r̄ − 1`.
    pub hr_keep: Option<usize>,
    pub max_iters: usize,
    /// Inner gradient-mapping tolerance; `None` means `1e-9·(1 + ‖b‖)`.
    pub inner_tol: Option<f64>,
    pub max_inner: usize,
    pub storage: StorageMode,
    /// Rank of the primal sketch; `None` disables sketching.
    pub sketch_rank: Option<usize>,
    /// Stop once the combined infeasibility/gap measure falls to this level;
    /// zero disables the rule.
    pub target_gap: f64,
    pub seed: u64,
    /// Run the per-iteration invariant checks (explicit storage only).
    pub check_invariants: bool,
    /// Random probe points per iteration for the model checks.
    pub probes: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            variant: Variant::Block,
            beta: 0.25,
            rho: 1.0,
            rbar: 3,
            hr_keep: None,
            max_iters: 200,
            inner_tol: None,
            max_inner: InnerOptions::default().max_inner,
            storage: StorageMode::Explicit,
            sketch_rank: None,
            target_gap: 1e-8,
            seed: 0,
            check_invariants: false,
            probes: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if self.rbar == 0 || self.rbar > n {
            return bad(format!("rbar must satisfy 1 <= rbar <= n = {n}, got {}", self.rbar));
        }
        let keep = self.hr_keep();
        let keep_max = match self.variant {
            Variant::Hybrid => self.rbar,
            _ => self.rbar - 1,
        };
        if keep > keep_max {
            return bad(format!("hr_keep = {keep} exceeds {keep_max} for the {} variant", self.variant));
        }
        if let Some(r) = self.sketch_rank {
            if r == 0 || r > n {
                return bad(format!("sketch rank must satisfy 1 <= r <= n, got {r}"));
            }
        }
        if self.check_invariants && self.storage != StorageMode::Explicit {
            return bad("invariant checks need explicit storage".into());
        }
        if !(self.target_gap >= 0.0) {
            return bad(format!("target gap must be nonnegative, got {}", self.target_gap));
        }
        Ok(())
    }

    pub fn hr_keep(&self) -> usize {
        self.hr_keep.unwrap_or(self.rbar.saturating_sub(1))
    }

    pub fn inner_options(&self) -> InnerOptions {
        InnerOptions {
            tol: self.inner_tol,
            max_inner: self.max_inner,
        }
    }
}

/// `F(z) ≤ F(y) − β(F(y) − F̄(z))`.
pub fn descent_test(f_y: f64, f_z: f64, fbar_z: f64, beta: f64) -> bool {
    f_z <= f_y - beta * (f_y - fbar_z)
}

/// One row of the convergence trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// `F(y_t)` before the step.
    pub f_y: f64,
    pub f_z: f64,
    pub fbar_z: f64,
    pub descent: bool,
    /// `‖b − 𝒜X_t‖` for this step's candidate primal.
    pub feas: f64,
    /// `λ_min(C − 𝒜*y_{t+1})`.
    pub lammin: f64,
    /// `⟨C, X_t⟩`.
    pub pval: f64,
    /// `⟨b, y_{t+1}⟩`.
    pub dval: f64,
    /// `‖z_{t+1} − y_t‖`.
    pub step: f64,
    /// `λ_k − λ_{k+1}` of `𝒜*y_{t+1} − C` for `k = 1..=r̄`.
    pub gaps: Vec<f64>,
    pub inner_res: f64,
}

/// The primal matrix paired with the current reference point.
#[derive(Debug, Clone)]
pub struct PrimalCandidate {
    pub ax: DVector<f64>,
    pub cx: f64,
    pub trx: f64,
    pub x: Option<SymMatrix>,
    pub sketch: Option<SketchState>,
}

#[derive(Debug, Clone)]
pub struct BundleState {
    pub t: usize,
    pub y: DVector<f64>,
    pub f_y: f64,
    /// `λ_max(𝒜*y − C)`.
    pub lam_y: f64,
    pub gaps_y: Vec<f64>,
    pub z: DVector<f64>,
    pub v: OrthonormalBasis,
    pub agg: Aggregate,
    pub descents: Vec<bool>,
    /// `X_t` from the latest descent step.
    pub primal: Option<PrimalCandidate>,
    /// Previous inner solution, reused as a warm start.
    pub warm: Option<(f64, DMatrix<f64>)>,
    /// Inner solves that stopped before reaching their tolerance.
    pub inner_warnings: usize,
}

/// Slack on the descent test so that a candidate equal to the reference
/// point up to rounding counts as a descent step.
pub(crate) fn descent_slack(f_y: f64) -> f64 {
    1e-12 * (1.0 + f_y.abs())
}
