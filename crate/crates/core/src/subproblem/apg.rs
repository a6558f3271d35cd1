use nalgebra::{DMatrix, DVector};

use super::{InnerOptions, InnerProblem, InnerSolve, ReducedQp, SQRT2};
use crate::linops::Spectrum;

/// Eigenvalues and `η` at or below this level count as active bounds when
/// guessing the optimal face.
const ACTIVE_TOL: f64 = 1e-12;

/// How often (in iterations) the residual is checked and a face solve tried.
const CHECK_EVERY: usize = 10;

/// `L·‖x − P(x − ∇f(x)/L)‖`, zero exactly at minimizers.
pub(crate) fn gradient_mapping(qp: &ReducedQp, x: &DVector<f64>, lip: f64) -> f64 {
    let step = qp.project(&(x - qp.grad(x) / lip));
    lip * (x - step).norm()
}

/// FISTA with function-value restart on the scaled problem, interleaved with
/// exact solves on the face identified by the current iterate.
///
/// The step uses `1/L` with `L = λ_max(H)` computed exactly, which is cheap
/// because `H` is `(1 + r̄(r̄+1)/2)`-dimensional.
pub fn solve_inner_apg(
    ip: &InnerProblem,
    opts: &InnerOptions,
    warm: Option<(f64, &DMatrix<f64>)>,
) -> InnerSolve {
    let qp = ip.reduced();
    let tol = opts.tolerance(ip.b());
    let lmax = qp.h.clone().symmetric_eigenvalues().max();
    let lip = lmax.max(1e-12 * (1.0 + qp.g.norm()));

    let start = match warm {
        Some((eta, s)) if s.nrows() == ip.width() => ip.to_reduced(eta, s),
        _ => {
            let mut x = DVector::zeros(qp.dim());
            x[0] = 1.0;
            x
        }
    };
    let mut x = qp.project(&start);
    let mut mom = x.clone();
    let mut t: f64 = 1.0;
    let mut residual = gradient_mapping(&qp, &x, lip);
    let mut iters = 0;

    while residual > tol && iters < opts.max_inner {
        iters += 1;
        let next = qp.project(&(&mom - qp.grad(&mom) / lip));
        if qp.change(&x, &next) > 0.0 {
            if t == 1.0 {
                // A plain projected step no longer decreases f: rounding floor.
                break;
            }
            // Restart: drop momentum and take a plain projected step from x.
            t = 1.0;
            mom = x.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        mom = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        t = t_next;

        if iters % CHECK_EVERY == 0 || iters == 1 {
            if let Some(xf) = face_solve(&qp, &x) {
                if qp.change(&x, &xf) < 0.0 {
                    x = xf;
                    mom = x.clone();
                    t = 1.0;
                }
            }
            residual = gradient_mapping(&qp, &x, lip);
        }
    }
    residual = gradient_mapping(&qp, &x, lip);
    let floor = rounding_floor(&qp, &x, lip);

    let (eta, s) = ip.from_reduced(&x);
    InnerSolve {
        value: ip.eval_ft(eta, &s),
        eta,
        s,
        residual,
        iters,
        converged: residual <= tol.max(floor),
    }
}

/// Size of the gradient mapping attributable to rounding in `x − ∇f(x)/L`.
fn rounding_floor(qp: &ReducedQp, x: &DVector<f64>, lip: f64) -> f64 {
    1e3 * f64::EPSILON * (lip * x.norm() + qp.grad(x).norm())
}

/// Minimizes the quadratic over the affine hull of the face containing `x`
/// and projects the result back. `None` when the face is a single point.
fn face_solve(qp: &ReducedQp, x: &DVector<f64>) -> Option<DVector<f64>> {
    let (eta, st) = qp.unpack(x);
    let spec = Spectrum::of(&st);
    let free: Vec<usize> = (0..spec.len()).filter(|&i| spec.values[i] > ACTIVE_TOL).collect();
    let eta_free = eta > ACTIVE_TOL;
    let trace_active = eta + spec.values.iter().map(|l| l.max(0.0)).sum::<f64>() >= 1.0 - 1e-12;

    let mut cols: Vec<DVector<f64>> = Vec::new();
    if eta_free {
        let mut e = DVector::zeros(qp.dim());
        e[0] = 1.0;
        cols.push(e);
    }
    for (jb, &b) in free.iter().enumerate() {
        for &a in &free[..=jb] {
            let ua = spec.vectors.column(a);
            let ub = spec.vectors.column(b);
            let e = if a == b {
                &ua * ua.transpose()
            } else {
                (&ua * ub.transpose() + &ub * ua.transpose()) / SQRT2
            };
            cols.push(qp.pack(0.0, &e));
        }
    }
    if cols.is_empty() {
        return None;
    }
    let basis = DMatrix::from_columns(&cols);
    let hq = basis.transpose() * &qp.h * &basis;
    let gq = basis.transpose() * &qp.g;
    let q = cols.len();

    let u = if trace_active {
        let mut trace_vec = DVector::zeros(qp.dim());
        trace_vec[0] = 1.0;
        for (col, &(a, b)) in qp.pairs.iter().enumerate() {
            if a == b {
                trace_vec[col + 1] = 1.0;
            }
        }
        let a = basis.transpose() * trace_vec;
        let mut kkt = DMatrix::zeros(q + 1, q + 1);
        kkt.view_mut((0, 0), (q, q)).copy_from(&hq);
        kkt.view_mut((0, q), (q, 1)).copy_from(&a);
        kkt.view_mut((q, 0), (1, q)).copy_from(&a.transpose());
        let mut rhs = DVector::zeros(q + 1);
        rhs.rows_mut(0, q).copy_from(&(-&gq));
        rhs[q] = 1.0;
        let sol = pinv_solve(&kkt, &rhs)?;
        sol.rows(0, q).into_owned()
    } else {
        pinv_solve(&hq, &(-gq))?
    };
    let candidate = &basis * u;
    if candidate.iter().all(|v| v.is_finite()) {
        Some(qp.project(&candidate))
    } else {
        None
    }
}

fn pinv_solve(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= 0.0 {
        return None;
    }
    svd.solve(rhs, 1e-13 * smax).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subproblem::closed_form::minimize_on_triangle;
    use crate::subproblem::test_support::random_inner;
    use crate::subproblem::InnerOptions;

    #[test]
    fn agrees_with_closed_form_on_one_column() {
        for seed in 0..30 {
            let (_, ip) = random_inner(6, 5, 1, 400 + seed);
            let apg = solve_inner_apg(&ip, &InnerOptions::default(), None);
            let qp = ip.reduced();
            let x = minimize_on_triangle(&qp);
            let (eta, s) = ip.from_reduced(&x);
            let exact = ip.eval_ft(eta, &s);
            assert!(apg.converged, "seed {seed}: res {} iters {} tol {}", apg.residual, apg.iters, InnerOptions::default().tolerance(ip.b()));
            assert!((apg.value - exact).abs() <= 1e-8 * (1.0 + exact.abs()), "{} vs {exact}", apg.value);
        }
    }

    #[test]
    fn interior_minimizer_matches_normal_equations() {
        // Build an instance whose unconstrained minimizer is strictly feasible
        // by choosing the linear term from a target point.
        let (_, ip) = random_inner(7, 12, 2, 500);
        let mut qp = ip.reduced();
        let target = DVector::from_vec(vec![0.2, 0.3, 0.05, 0.25]);
        qp.g = -(&qp.h * &target);
        let hinv_g = qp.h.clone().lu().solve(&(-&qp.g)).unwrap();
        assert!((&hinv_g - &target).norm() < 1e-8);
        let fx = face_solve(&qp, &target).unwrap();
        assert!((fx - target).norm() < 1e-8);
    }

    #[test]
    fn never_worse_than_its_start() {
        let mut g = crate::rng::GaussianStream::new(601);
        for seed in 0..10 {
            let (_, ip) = random_inner(6, 5, 3, 600 + seed);
            let eta = 0.3 * g.uniform();
            let s = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.2, 0.05])) * ip.alpha();
            let start = ip.eval_ft(eta, &s);
            for max_inner in [1, 5, 50] {
                let opts = InnerOptions { tol: None, max_inner };
                let sol = solve_inner_apg(&ip, &opts, Some((eta, &s)));
                assert!(sol.value <= start + 1e-12 * (1.0 + start.abs()));
            }
        }
    }
}
