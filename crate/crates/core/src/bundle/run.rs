use nalgebra::DVector;

use super::invariants::{InvariantChecker, InvariantReport};
use super::step::step_checked;
use super::{BundleState, IterationRecord, SolverConfig};
use crate::error::{check_dim, Result};
use crate::linops::SymMatrix;
use crate::model::{Aggregate, SdpProblem};
use crate::sketch::{SketchFactors, SketchState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetGap,
    MaxIters,
}

/// The primal matrix reported at the end of a run.
#[derive(Debug, Clone)]
pub struct PrimalOutput {
    pub ax: DVector<f64>,
    pub cx: f64,
    pub trx: f64,
    /// Dense `X_t` in explicit storage mode.
    pub x: Option<SymMatrix>,
    /// Rank-`r` reconstruction of the sketched `X_t`.
    pub factors: Option<SketchFactors>,
    /// `‖Y^C − X̂Ψ‖_F / ‖Y^C‖_F` for the reconstruction.
    pub sketch_residual: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<IterationRecord>,
    pub state: BundleState,
    /// `None` when no descent step was taken.
    pub primal: Option<PrimalOutput>,
    pub stop: StopReason,
    /// Inner solves that hit `max_inner` before reaching their tolerance.
    pub inner_warnings: usize,
    /// `max_t ‖y_t‖` over the realized trajectory.
    pub max_y_norm: f64,
    pub invariants: Option<InvariantReport>,
}

/// Runs from `y₀ = 0`.
pub fn run(prob: &SdpProblem, cfg: &SolverConfig) -> Result<RunOutput> {
    run_with_start(prob, cfg, &DVector::zeros(prob.m()))
}

/// Combined stopping measure: relative infeasibility, relative duality gap
/// and dual slack negativity for the pair `(X_t, y)`.
pub fn stopping_measure(prob: &SdpProblem, state: &BundleState) -> Option<f64> {
    let primal = state.primal.as_ref()?;
    let feas = (prob.b() - &primal.ax).norm() / (1.0 + prob.b().norm());
    let dval = prob.b().dot(&state.y);
    let gap = (dval - primal.cx).abs() / (1.0 + dval.abs());
    let slack = state.lam_y.max(0.0);
    Some(feas.max(gap).max(slack))
}

pub fn run_with_start(prob: &SdpProblem, cfg: &SolverConfig, y0: &DVector<f64>) -> Result<RunOutput> {
    cfg.validate(prob.n())?;
    check_dim("run_with_start (y0)", prob.m(), y0.len())?;
    let spec = prob.penalty_matrix(y0)?.spectrum();
    let lam_y = spec.lambda_max();
    let sketch = match cfg.sketch_rank {
        Some(r) => Some(SketchState::new(prob.n(), r, cfg.seed)?),
        None => None,
    };
    let mut state = BundleState {
        t: 0,
        y: y0.clone(),
        f_y: prob.objective_from_lambda(y0, lam_y),
        lam_y,
        gaps_y: spec.gaps(cfg.rbar),
        z: y0.clone(),
        v: spec.top_basis(cfg.rbar),
        agg: Aggregate::zero(prob, cfg.storage, sketch),
        descents: Vec::new(),
        primal: None,
        warm: None,
        inner_warnings: 0,
    };
    let mut checker = cfg.check_invariants.then(InvariantChecker::new);
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let mut max_y_norm = y0.norm();
    let mut stop = StopReason::MaxIters;

    for _ in 0..cfg.max_iters {
        let record = step_checked(prob, cfg, &mut state, checker.as_mut())?;
        log::debug!(
            "t={} F(y)={:.10e} F(z)={:.10e} descent={} feas={:.3e}",
            record.t,
            record.f_y,
            record.f_z,
            record.descent,
            record.feas
        );
        trace.push(record);
        max_y_norm = max_y_norm.max(state.y.norm());
        if cfg.target_gap > 0.0 {
            if let Some(measure) = stopping_measure(prob, &state) {
                if measure <= cfg.target_gap {
                    stop = StopReason::TargetGap;
                    break;
                }
            }
        }
    }
    if state.inner_warnings > 0 {
        log::warn!("{} inner solves stopped before reaching tolerance", state.inner_warnings);
    }

    let primal = state.primal.as_ref().map(|p| {
        let (factors, sketch_residual) = match &p.sketch {
            Some(sk) => {
                let f = sk.reconstruct();
                let res = sk.reconstruction_residual(&f);
                (Some(f), Some(res))
            }
            None => (None, None),
        };
        PrimalOutput {
            ax: p.ax.clone(),
            cx: p.cx,
            trx: p.trx,
            x: p.x.clone(),
            factors,
            sketch_residual,
        }
    });
    Ok(RunOutput {
        trace,
        primal,
        stop,
        inner_warnings: state.inner_warnings,
        max_y_norm,
        invariants: checker.map(InvariantChecker::into_report),
        state,
    })
}
