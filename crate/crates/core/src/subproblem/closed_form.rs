use nalgebra::DVector;

use super::{InnerProblem, InnerSolve, ReducedQp};

/// Exact minimizer for a one-column basis.
///
/// In scaled coordinates the feasible set is the triangle
/// `{η ≥ 0, s̃ ≥ 0, η + s̃ ≤ 1}`. The minimum of a convex quadratic over it is
/// either the interior stationary point or the minimum over one of the three
/// edges, and each edge is a clamped one-dimensional quadratic.
pub fn solve_inner_2d(ip: &InnerProblem) -> InnerSolve {
    assert_eq!(ip.width(), 1, "closed form needs a one-column basis");
    let qp = ip.reduced();
    let x = minimize_on_triangle(&qp);
    let (eta, s) = ip.from_reduced(&x);
    InnerSolve {
        value: ip.eval_ft(eta, &s),
        residual: super::apg::gradient_mapping(&qp, &x, lipschitz(&qp)),
        eta,
        s,
        iters: 0,
        converged: true,
    }
}

fn lipschitz(qp: &ReducedQp) -> f64 {
    qp.h.clone().symmetric_eigenvalues().max().max(1e-300)
}

pub(crate) fn minimize_on_triangle(qp: &ReducedQp) -> DVector<f64> {
    let (h, g) = (&qp.h, &qp.g);
    let mut candidates: Vec<DVector<f64>> = vec![
        DVector::from_vec(vec![0.0, 0.0]),
        DVector::from_vec(vec![1.0, 0.0]),
        DVector::from_vec(vec![0.0, 1.0]),
    ];

    let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
    if det > 1e-14 * (h[(0, 0)] * h[(1, 1)]).abs().max(f64::MIN_POSITIVE) {
        let e = (-g[0] * h[(1, 1)] + g[1] * h[(0, 1)]) / det;
        let s = (-g[1] * h[(0, 0)] + g[0] * h[(1, 0)]) / det;
        if e >= 0.0 && s >= 0.0 && e + s <= 1.0 {
            candidates.push(DVector::from_vec(vec![e, s]));
        }
    }

    // Edges as x(τ) = p + τ d for τ ∈ [0, 1].
    let edges = [
        ([0.0, 0.0], [1.0, 0.0]),
        ([0.0, 0.0], [0.0, 1.0]),
        ([1.0, 0.0], [-1.0, 1.0]),
    ];
    for (p, d) in edges {
        let p = DVector::from_vec(p.to_vec());
        let d = DVector::from_vec(d.to_vec());
        let curv = d.dot(&(h * &d));
        let slope = d.dot(&qp.grad(&p));
        if curv > 0.0 {
            let tau = (-slope / curv).clamp(0.0, 1.0);
            candidates.push(&p + &d * tau);
        }
    }

    candidates
        .into_iter()
        .map(|x| (qp.value(&x), x))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, x)| x)
        .expect("nonempty candidate list")
}
