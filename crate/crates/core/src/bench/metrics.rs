//! Accuracy measures against a reference solution.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::reference::Reference;
use crate::model::SdpProblem;

/// Denominators at or below this are replaced by 1 and flagged.
const TINY: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `(F(y) − F*)/|F*|`.
    pub dual_opt: f64,
    /// `|(⟨−C, X⟩ − F*)/F*|`.
    pub primal_opt: f64,
    /// `‖𝒜X − b‖/‖b‖`.
    pub primal_feas: f64,
    /// Set when `F* = 0` and the optimality measures are absolute.
    pub absolute_opt: bool,
    /// Set when `b = 0` and the feasibility measure is absolute.
    pub absolute_feas: bool,
    pub f_y: f64,
    pub primal_value: Option<f64>,
    pub reference: Reference,
}

/// `ax` and `cx` are `𝒜X` and `⟨C, X⟩` of the reported primal; `None` when
/// no primal is available, in which case the primal measures are infinite.
pub fn metrics(prob: &SdpProblem, f_y: f64, primal: Option<(&DVector<f64>, f64)>, refs: &Reference) -> MetricsReport {
    let fs = refs.f_star;
    let (opt_den, absolute_opt) = guard(fs.abs());
    let bn = prob.b().norm();
    let (feas_den, absolute_feas) = guard(bn);
    let (primal_opt, primal_feas, primal_value) = match primal {
        Some((ax, cx)) => {
            let pv = -cx;
            (((pv - fs) / opt_den).abs(), (ax - prob.b()).norm() / feas_den, Some(pv))
        }
        None => (f64::INFINITY, f64::INFINITY, None),
    };
    MetricsReport {
        dual_opt: (f_y - fs) / opt_den,
        primal_opt,
        primal_feas,
        absolute_opt,
        absolute_feas,
        f_y,
        primal_value,
        reference: refs.clone(),
    }
}

/// Relative gap `(F − F*)/|F*|` with the same zero guard as [`metrics`].
pub fn relative_gap(f: f64, f_star: f64) -> f64 {
    (f - f_star) / guard(f_star.abs()).0
}

fn guard(den: f64) -> (f64, bool) {
    if den > TINY {
        (den, false)
    } else {
        (1.0, true)
    }
}
