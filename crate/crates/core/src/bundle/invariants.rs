//! Runtime checks of the structural properties every iteration must satisfy.
//!
//! The checks need the explicit aggregate, so they only run in explicit
//! storage mode. Each check records its worst normalized violation; a check
//! fails when that exceeds its tolerance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{descent_slack, BundleState, SolverConfig};
use crate::error::Result;
use crate::linops::{orthonormality_defect, OrthonormalBasis, SymMatrix};
use crate::model::{eval_f, eval_model, eval_simple_model, Aggregate, SdpProblem};
use crate::rng::GaussianStream;
use crate::subproblem::SubproblemSolution;

const SANDWICH_TOL: f64 = 1e-7;
const MEMBERSHIP_TOL: f64 = 1e-8;
const SADDLE_TOL: f64 = 1e-7;
const STATIONARITY_TOL: f64 = 1e-9;
const STRUCTURE_TOL: f64 = 1e-9;

/// Everything the checker needs from one step.
pub(crate) struct StepContext<'a> {
    pub t: usize,
    pub y_old: &'a DVector<f64>,
    pub f_y_old: f64,
    pub old_basis: &'a OrthonormalBasis,
    pub old_agg: &'a Aggregate,
    pub sol: &'a SubproblemSolution,
    pub f_z: f64,
    /// Top eigenvector at the candidate, `None` when `λ_max ≤ 0`.
    pub v_plus: Option<&'a DVector<f64>>,
    pub x_t: Option<&'a SymMatrix>,
    pub cert_eta: f64,
    pub cert_s: &'a DMatrix<f64>,
    pub state: &'a BundleState,
}

/// Worst normalized violations seen so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub iterations: usize,
    /// `max (simple model − new model) / (1 + |F|)` over probes.
    pub sandwich_lower: f64,
    /// `max (new model − F) / (1 + |F|)` over probes.
    pub sandwich_upper: f64,
    /// Relative reconstruction error of the membership certificates.
    pub membership_error: f64,
    /// Constraint violation of the membership certificates.
    pub membership_infeasibility: f64,
    /// `max (F(y_{t+1}) − F(y_t))` beyond rounding slack, and the shortfall
    /// of the required decrease at descent steps.
    pub monotonicity: f64,
    /// `max (tr X̄ − α)/α` and `max −λ_min(X̄)/α`.
    pub aggregate: f64,
    /// `|F̄(z) − saddle value| / (1 + |F̄(z)|)`.
    pub saddle: f64,
    /// `‖𝒜X_t − b − ρ(y_t − z)‖ / (1 + ‖b‖)`.
    pub stationarity: f64,
    /// Orthonormality defect of the basis and cache mismatch of the aggregate.
    pub structure: f64,
    /// Smallest `ρ̂` with `F(y) − F̄_{t+1}(y) ≤ (ρ̂/2)‖y − y_{t+1}‖²` at the
    /// probes, for the latest and the worst iteration. Diagnostic only.
    pub rho_hat_last: f64,
    pub rho_hat_max: f64,
    pub failures: Vec<String>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct InvariantChecker {
    report: InvariantReport,
}

impl InvariantChecker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn report(&self) -> &InvariantReport {
        &self.report
    }

    pub fn into_report(self) -> InvariantReport {
        self.report
    }

    fn note(&mut self, t: usize, what: &str, value: f64, tol: f64) {
        if !(value <= tol) && self.report.failures.len() < 20 {
            self.report
                .failures
                .push(format!("iteration {t}: {what} violation {value:.3e} exceeds {tol:.1e}"));
        }
    }

    pub(crate) fn check(&mut self, prob: &SdpProblem, cfg: &SolverConfig, ctx: &StepContext<'_>) -> Result<()> {
        let r = &mut self.report;
        r.iterations += 1;
        let t = ctx.t;
        let state = ctx.state;
        let alpha = prob.alpha();
        let sol = ctx.sol;

        // Stationarity of the recovered candidate.
        let stat = (&sol.ax - prob.b() - (ctx.y_old - &sol.z) * cfg.rho).norm() / (1.0 + prob.b().norm());
        r.stationarity = r.stationarity.max(stat);

        // Saddle value against the closed-form model at z.
        let fbar_closed = eval_model(prob, ctx.old_agg, ctx.old_basis, &sol.z)?.value;
        let saddle = (fbar_closed - sol.fbar_z).abs() / (1.0 + fbar_closed.abs());
        r.saddle = r.saddle.max(saddle);

        // Monotone reference values.
        let slack = descent_slack(ctx.f_y_old);
        let mut mono = (state.f_y - ctx.f_y_old - slack).max(0.0);
        if *state.descents.last().expect("step pushed a flag") {
            let need = cfg.beta * (ctx.f_y_old - sol.fbar_z);
            mono = mono.max(need - (ctx.f_y_old - state.f_y) - slack);
        }
        let mono = mono / (1.0 + ctx.f_y_old.abs());
        r.monotonicity = r.monotonicity.max(mono);

        // Aggregate and basis structure.
        let xbar = state.agg.xbar().expect("explicit storage");
        let trace_excess = (state.agg.trxbar() - alpha) / alpha;
        let psd = -xbar.lambda_min() / alpha;
        let agg_viol = trace_excess.max(psd).max(0.0);
        r.aggregate = r.aggregate.max(agg_viol);
        let structure = orthonormality_defect(state.v.cols()).max(state.agg.cache_defect(prob).unwrap_or(0.0));
        r.structure = r.structure.max(structure);

        // Membership certificates for X_t and α v₊ v₊ᵀ.
        let v_new = state.v.cols();
        let mut mem_err: f64 = 0.0;
        let mut mem_infeas: f64 = 0.0;
        if let Some(x_t) = ctx.x_t {
            let mut recon = xbar.clone();
            recon.scale(ctx.cert_eta);
            recon.axpy(1.0, &SymMatrix::low_rank(v_new, ctx.cert_s));
            mem_err = mem_err.max(recon.sub(x_t).norm_fro() / (1.0 + x_t.norm_fro()));
            mem_infeas = mem_infeas.max(certificate_infeasibility(ctx.cert_eta, ctx.cert_s, alpha));
        }
        if let Some(vp) = ctx.v_plus {
            let w = v_new.transpose() * vp;
            let s = &w * w.transpose() * alpha;
            let recon = SymMatrix::low_rank(v_new, &s);
            let mut target = SymMatrix::outer(vp);
            target.scale(alpha);
            mem_err = mem_err.max(recon.sub(&target).norm_fro() / (1.0 + alpha));
            mem_infeas = mem_infeas.max(certificate_infeasibility(0.0, &s, alpha));
        }
        r.membership_error = r.membership_error.max(mem_err);
        r.membership_infeasibility = r.membership_infeasibility.max(mem_infeas);

        // Sandwich and quadratic accuracy at random probes.
        let mut g = -prob.b().clone();
        if let Some(vp) = ctx.v_plus {
            g += prob.map().apply_outer(vp, vp) * alpha;
        }
        let s_vec = (ctx.y_old - &sol.z) * cfg.rho;
        let mut rng = GaussianStream::new(cfg.seed ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let base = (&sol.z - ctx.y_old).norm() + 1e-3 * (1.0 + sol.z.norm());
        let mut lower: f64 = 0.0;
        let mut upper: f64 = 0.0;
        let mut rho_hat: f64 = 0.0;
        for k in 0..cfg.probes {
            let center = if k % 2 == 0 { &sol.z } else { &state.y };
            let radius = base * [0.1, 1.0, 10.0][k % 3];
            let dir = DVector::from_fn(prob.m(), |_, _| rng.sample());
            let y = center + dir * (radius / (prob.m() as f64).sqrt());
            let f = eval_f(prob, &y)?;
            let model = eval_model(prob, &state.agg, &state.v, &y)?.value;
            let simple = eval_simple_model(ctx.f_z, &g, &s_vec, sol.fbar_z, &sol.z, &y);
            let scale = 1.0 + f.abs();
            lower = lower.max((simple - model) / scale);
            upper = upper.max((model - f) / scale);
            let d2 = (&y - &state.y).norm_squared();
            if d2 > 0.0 {
                rho_hat = rho_hat.max(2.0 * (f - model) / d2);
            }
        }
        r.sandwich_lower = r.sandwich_lower.max(lower);
        r.sandwich_upper = r.sandwich_upper.max(upper);
        r.rho_hat_last = rho_hat;
        r.rho_hat_max = r.rho_hat_max.max(rho_hat);

        self.note(t, "stationarity", stat, STATIONARITY_TOL);
        self.note(t, "saddle value", saddle, SADDLE_TOL);
        self.note(t, "monotonicity", mono, STRUCTURE_TOL);
        self.note(t, "aggregate trace/PSD", agg_viol, STRUCTURE_TOL);
        self.note(t, "basis/cache structure", structure, STRUCTURE_TOL);
        self.note(t, "membership reconstruction", mem_err, MEMBERSHIP_TOL);
        self.note(t, "membership feasibility", mem_infeas, MEMBERSHIP_TOL);
        self.note(t, "simple model dominance", lower, SANDWICH_TOL);
        self.note(t, "model upper bound", upper, SANDWICH_TOL);
        Ok(())
    }
}

/// Largest violation of `η ≥ 0`, `S ⪰ 0`, `ηα + tr S ≤ α`, relative to `α`.
fn certificate_infeasibility(eta: f64, s: &DMatrix<f64>, alpha: f64) -> f64 {
    let lmin = if s.nrows() > 0 {
        s.clone().symmetric_eigenvalues().min()
    } else {
        0.0
    };
    let budget = (eta * alpha + s.trace() - alpha) / alpha;
    (-eta).max(-lmin / alpha).max(budget).max(0.0)
}
