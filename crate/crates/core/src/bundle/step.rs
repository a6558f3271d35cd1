use nalgebra::{DMatrix, DVector};

use super::invariants::{InvariantChecker, StepContext};
use super::{descent_slack, descent_test, BundleState, IterationRecord, PrimalCandidate, SolverConfig, Variant};
use crate::error::Result;
use crate::linops::{orthonormalize, Spectrum, SymMatrix};
use crate::model::SdpProblem;
use crate::subproblem::{solve_minimax, InnerProblem};

/// One iteration of the configured variant.
pub fn step(prob: &SdpProblem, cfg: &SolverConfig, state: &mut BundleState) -> Result<IterationRecord> {
    step_checked(prob, cfg, state, None)
}

pub fn step_block(prob: &SdpProblem, cfg: &SolverConfig, state: &mut BundleState) -> Result<IterationRecord> {
    let cfg = SolverConfig { variant: Variant::Block, ..cfg.clone() };
    step_checked(prob, &cfg, state, None)
}

pub fn step_hr(prob: &SdpProblem, cfg: &SolverConfig, state: &mut BundleState) -> Result<IterationRecord> {
    let cfg = SolverConfig { variant: Variant::Hr, ..cfg.clone() };
    step_checked(prob, &cfg, state, None)
}

pub fn step_hybrid(prob: &SdpProblem, cfg: &SolverConfig, state: &mut BundleState) -> Result<IterationRecord> {
    let cfg = SolverConfig { variant: Variant::Hybrid, ..cfg.clone() };
    step_checked(prob, &cfg, state, None)
}

pub(crate) fn step_checked(
    prob: &SdpProblem,
    cfg: &SolverConfig,
    state: &mut BundleState,
    checker: Option<&mut InvariantChecker>,
) -> Result<IterationRecord> {
    let width = state.v.width();
    let ip = InnerProblem::new(prob, &state.agg, &state.v, &state.y, cfg.rho)?;
    let warm = state
        .warm
        .as_ref()
        .filter(|(_, s)| s.nrows() == width)
        .map(|(e, s)| (*e, s));
    let sol = solve_minimax(&ip, &cfg.inner_options(), warm);

    let penalty_z = prob.penalty_matrix(&sol.z)?;
    let spec_z = penalty_z.spectrum();
    let lam_z = spec_z.lambda_max();
    let f_z = prob.objective_from_lambda(&sol.z, lam_z);
    let f_y_old = state.f_y;
    let descent = descent_test(f_y_old, f_z - descent_slack(f_y_old), sol.fbar_z, cfg.beta);

    let v_old = state.v.cols().clone();
    let x_t = state.agg.xbar().map(|xb| {
        let mut x = xb.clone();
        x.scale(sol.eta);
        x.axpy(1.0, &SymMatrix::low_rank(&v_old, &sol.s));
        x
    });
    let x_t_sketch = match state.agg.sketch() {
        Some(sk) => {
            let (yc, yr) = sk.updated_sketches(sol.eta, &v_old, &sol.s)?;
            Some(sk.with_sketches(yc, yr))
        }
        None => None,
    };
    let old_agg = checker.as_ref().map(|_| state.agg.clone());
    let old_basis = state.v.clone();

    // Certificate (η, S) with X_t = η X̄_{t+1} + V_{t+1} S V_{t+1}ᵀ.
    let (cert_eta, cert_s) = match cfg.variant {
        Variant::Block => {
            state.agg.update(prob, sol.eta, &v_old, &sol.s)?;
            state.v = spec_z.top_basis(cfg.rbar);
            (1.0, DMatrix::zeros(cfg.rbar, cfg.rbar))
        }
        Variant::Hr | Variant::Hybrid => {
            let eig = Spectrum::of(&sol.s);
            let keep = cfg.hr_keep().min(width);
            let q1 = eig.vectors.columns(0, keep).into_owned();
            let q2 = eig.vectors.columns(keep, width - keep).into_owned();
            let lam1 = eig.values.rows(0, keep).map(|l| l.max(0.0));
            let lam2 = eig.values.rows(keep, width - keep).map(|l| l.max(0.0));
            state.agg.update(prob, sol.eta, &(&v_old * &q2), &DMatrix::from_diagonal(&lam2))?;
            // Rescale X̄ to trace α so that X_t stays representable under the
            // ηα + tr S ≤ α budget of the model.
            let tau = state.agg.trxbar();
            let cert_eta = if tau > 0.0 {
                state.agg.scale(prob.alpha() / tau);
                tau / prob.alpha()
            } else {
                0.0
            };
            let fresh = match cfg.variant {
                Variant::Hr => 1,
                _ => cfg.rbar,
            };
            let kept = &v_old * &q1;
            let mut cols: Vec<DVector<f64>> = kept.column_iter().map(|c| c.into_owned()).collect();
            cols.extend(spec_z.vectors.columns(0, fresh).column_iter().map(|c| c.into_owned()));
            state.v = orthonormalize(&DMatrix::from_columns(&cols))?;
            let r = state.v.cols().transpose() * &kept;
            let cert_s = &r * DMatrix::from_diagonal(&lam1) * r.transpose();
            (cert_eta, cert_s)
        }
    };

    let y_old = state.y.clone();
    if descent {
        state.y = sol.z.clone();
        state.f_y = f_z;
        state.lam_y = lam_z;
        state.gaps_y = spec_z.gaps(cfg.rbar);
        state.primal = Some(PrimalCandidate {
            ax: sol.ax.clone(),
            cx: sol.cx,
            trx: sol.trx,
            x: x_t.clone(),
            sketch: x_t_sketch,
        });
    }
    state.z = sol.z.clone();
    state.descents.push(descent);
    state.warm = Some((sol.eta, sol.s.clone()));
    if !sol.converged {
        state.inner_warnings += 1;
    }

    let record = IterationRecord {
        t: state.t,
        f_y: f_y_old,
        f_z,
        fbar_z: sol.fbar_z,
        descent,
        feas: (prob.b() - &sol.ax).norm(),
        lammin: -state.lam_y,
        pval: sol.cx,
        dval: prob.b().dot(&state.y),
        step: (&sol.z - &y_old).norm(),
        gaps: state.gaps_y.clone(),
        inner_res: sol.residual,
    };
    state.t += 1;

    if let Some(checker) = checker {
        let v_plus = (lam_z > 0.0).then(|| spec_z.vectors.column(0).into_owned());
        checker.check(
            prob,
            cfg,
            &StepContext {
                t: record.t,
                y_old: &y_old,
                f_y_old,
                old_basis: &old_basis,
                old_agg: old_agg.as_ref().expect("cloned when checking"),
                sol: &sol,
                f_z,
                v_plus: v_plus.as_ref(),
                x_t: x_t.as_ref(),
                cert_eta,
                cert_s: &cert_s,
                state,
            },
        )?;
    }
    Ok(record)
}
