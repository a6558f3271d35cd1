//! The regularized model subproblem
//!
//! ```text
//! min_y  F̄(y) + (ρ/2)‖y − y_t‖²
//! ```
//!
//! Swapping min and max and completing the square in `y` turns it into the
//! convex quadratic program
//!
//! ```text
//! min f_t(η, S) = ⟨b, y_t⟩ + ⟨ηX̄ + VSVᵀ, C − 𝒜*y_t⟩ + (1/2ρ)‖b − 𝒜(ηX̄ + VSVᵀ)‖²
//!     over η ≥ 0, S ⪰ 0, ηα + tr S ≤ α,
//! ```
//!
//! after which `z = y_t + (1/ρ)(b − 𝒜X_t)` with `X_t = η*X̄ + VS*Vᵀ`.
//!
//! Internally the QP is solved in the coordinates `x = (η, svec(S/α))`, where
//! `svec` stacks the upper triangle column by column with off-diagonals
//! scaled by `√2`. In those coordinates the feasible set is
//! `{η ≥ 0, S̃ ⪰ 0, η + tr S̃ ≤ 1}` and the Euclidean norm is the Frobenius
//! norm, so the spectral projection applies directly.

mod apg;
mod closed_form;
mod projection;

pub use apg::solve_inner_apg;
pub use closed_form::solve_inner_2d;
pub use projection::{project_scaled_set, project_simplex_hull};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linops::OrthonormalBasis;
use crate::model::{Aggregate, SdpProblem};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Everything `f_t` depends on, reduced to `m`- and `r̄`-sized quantities.
#[derive(Debug, Clone)]
pub struct InnerProblem {
    y: DVector<f64>,
    b: DVector<f64>,
    rho: f64,
    alpha: f64,
    axbar: DVector<f64>,
    cxbar: f64,
    trxbar: f64,
    width: usize,
    pairs: Vec<(usize, usize)>,
    /// Column `k` is `𝒜(v_a v_bᵀ)` for `pairs[k] = (a, b)`.
    k: DMatrix<f64>,
    /// `VᵀCV`.
    cv: DMatrix<f64>,
    /// `Vᵀ(C − 𝒜*y)V`.
    w: DMatrix<f64>,
}

impl InnerProblem {
    pub fn new(
        prob: &SdpProblem,
        agg: &Aggregate,
        v: &OrthonormalBasis,
        y: &DVector<f64>,
        rho: f64,
    ) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
        }
        check_dim("InnerProblem (basis rows)", prob.n(), v.n())?;
        check_dim("InnerProblem (y)", prob.m(), y.len())?;
        let width = v.width();
        let pairs: Vec<(usize, usize)> =
            (0..width).flat_map(|b| (0..=b).map(move |a| (a, b))).collect();
        let vc = v.cols();
        let mut k = DMatrix::zeros(prob.m(), pairs.len());
        for (col, &(a, b)) in pairs.iter().enumerate() {
            let ka = prob.map().apply_outer(&vc.column(a).into_owned(), &vc.column(b).into_owned());
            k.set_column(col, &ka);
        }
        let cv = prob.c().compress(vc);
        let mut w = cv.clone();
        for (col, &(a, b)) in pairs.iter().enumerate() {
            let ay = k.column(col).dot(y);
            w[(a, b)] -= ay;
            if a != b {
                w[(b, a)] -= ay;
            }
        }
        Ok(InnerProblem {
            y: y.clone(),
            b: prob.b().clone(),
            rho,
            alpha: prob.alpha(),
            axbar: agg.axbar().clone(),
            cxbar: agg.cxbar(),
            trxbar: agg.trxbar(),
            width,
            pairs,
            k,
            cv,
            w,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// `Vᵀ(C − 𝒜*y_t)V`.
    pub fn compressed_slack(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// `𝒜(VSVᵀ)` from the precomputed pair images.
    pub fn apply_core(&self, s: &DMatrix<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.b.len());
        for (col, &(a, b)) in self.pairs.iter().enumerate() {
            let coef = if a == b { s[(a, a)] } else { s[(a, b)] + s[(b, a)] };
            if coef != 0.0 {
                out.axpy(coef, &self.k.column(col), 1.0);
            }
        }
        out
    }

    /// `Vᵀ(𝒜*r)V`.
    fn compress_adjoint(&self, r: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.width, self.width);
        for (col, &(a, b)) in self.pairs.iter().enumerate() {
            let x = self.k.column(col).dot(r);
            out[(a, b)] = x;
            out[(b, a)] = x;
        }
        out
    }

    /// `𝒜(ηX̄ + VSVᵀ)`.
    pub fn apply_x(&self, eta: f64, s: &DMatrix<f64>) -> DVector<f64> {
        &self.axbar * eta + self.apply_core(s)
    }

    /// `⟨C, ηX̄ + VSVᵀ⟩`.
    pub fn c_inner_x(&self, eta: f64, s: &DMatrix<f64>) -> f64 {
        eta * self.cxbar + self.cv.dot(s)
    }

    /// `tr(ηX̄ + VSVᵀ)`.
    pub fn trace_x(&self, eta: f64, s: &DMatrix<f64>) -> f64 {
        eta * self.trxbar + s.trace()
    }

    /// `f_t(η, S)` evaluated directly.
    pub fn eval_ft(&self, eta: f64, s: &DMatrix<f64>) -> f64 {
        let r = &self.b - self.apply_x(eta, s);
        self.b.dot(&self.y)
            + eta * (self.cxbar - self.axbar.dot(&self.y))
            + self.w.dot(s)
            + r.norm_squared() / (2.0 * self.rho)
    }

    /// `(∂f_t/∂η, ∇_S f_t)`, the latter symmetric.
    pub fn grad_ft(&self, eta: f64, s: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let r = &self.b - self.apply_x(eta, s);
        let d_eta = self.cxbar - self.axbar.dot(&self.y) - self.axbar.dot(&r) / self.rho;
        let d_s = &self.w - self.compress_adjoint(&r) / self.rho;
        (d_eta, d_s)
    }

    /// `f_t` as `c0 + gᵀx + ½xᵀHx` in scaled coordinates.
    pub(crate) fn reduced(&self) -> ReducedQp {
        let p = 1 + self.pairs.len();
        let m = self.b.len();
        let mut l = DMatrix::zeros(m, p);
        let mut lin = DVector::zeros(p);
        l.set_column(0, &self.axbar);
        lin[0] = self.cxbar - self.axbar.dot(&self.y);
        for (col, &(a, b)) in self.pairs.iter().enumerate() {
            let scale = if a == b { self.alpha } else { self.alpha * SQRT2 };
            l.set_column(col + 1, &(self.k.column(col) * scale));
            lin[col + 1] = scale * self.w[(a, b)];
        }
        let h = (l.transpose() * &l) / self.rho;
        let h = (&h + h.transpose()) * 0.5;
        let g = lin - l.transpose() * &self.b / self.rho;
        let c0 = self.b.dot(&self.y) + self.b.norm_squared() / (2.0 * self.rho);
        ReducedQp {
            h,
            g,
            c0,
            width: self.width,
            pairs: self.pairs.clone(),
        }
    }

    /// Scaled coordinates of `(η, S)`.
    pub(crate) fn to_reduced(&self, eta: f64, s: &DMatrix<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(1 + self.pairs.len());
        x[0] = eta;
        for (col, &(a, b)) in self.pairs.iter().enumerate() {
            let scale = if a == b { 1.0 } else { SQRT2 };
            x[col + 1] = scale * s[(a, b)] / self.alpha;
        }
        x
    }

    /// Inverse of [`Self::to_reduced`].
    pub(crate) fn from_reduced(&self, x: &DVector<f64>) -> (f64, DMatrix<f64>) {
        let (eta, st) = unpack(x, self.width, &self.pairs);
        (eta, st * self.alpha)
    }
}

/// `(η, S̃)` from scaled coordinates.
fn unpack(x: &DVector<f64>, width: usize, pairs: &[(usize, usize)]) -> (f64, DMatrix<f64>) {
    let mut s = DMatrix::zeros(width, width);
    for (col, &(a, b)) in pairs.iter().enumerate() {
        if a == b {
            s[(a, a)] = x[col + 1];
        } else {
            s[(a, b)] = x[col + 1] / SQRT2;
            s[(b, a)] = x[col + 1] / SQRT2;
        }
    }
    (x[0], s)
}

fn pack(eta: f64, s: &DMatrix<f64>, pairs: &[(usize, usize)]) -> DVector<f64> {
    let mut x = DVector::zeros(1 + pairs.len());
    x[0] = eta;
    for (col, &(a, b)) in pairs.iter().enumerate() {
        x[col + 1] = if a == b { s[(a, a)] } else { SQRT2 * s[(a, b)] };
    }
    x
}

/// The subproblem in scaled coordinates.
#[derive(Debug, Clone)]
pub(crate) struct ReducedQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c0: f64,
    pub width: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl ReducedQp {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.c0 + self.g.dot(x) + 0.5 * x.dot(&(&self.h * x))
    }

    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x + &self.g
    }

    /// `value(to) − value(from)` without cancelling the constant terms.
    pub fn change(&self, from: &DVector<f64>, to: &DVector<f64>) -> f64 {
        let d = to - from;
        self.grad(from).dot(&d) + 0.5 * d.dot(&(&self.h * &d))
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let (eta, s) = unpack(x, self.width, &self.pairs);
        let (eta, s) = project_scaled_set(eta, &s);
        pack(eta, &s, &self.pairs)
    }

    /// `(η, S̃)` view of scaled coordinates.
    pub fn unpack(&self, x: &DVector<f64>) -> (f64, DMatrix<f64>) {
        unpack(x, self.width, &self.pairs)
    }

    pub fn pack(&self, eta: f64, s: &DMatrix<f64>) -> DVector<f64> {
        pack(eta, s, &self.pairs)
    }
}

/// Inner-solver controls.
#[derive(Debug, Clone)]
pub struct InnerOptions {
    /// Gradient-mapping tolerance; `None` means `1e-9·(1 + ‖b‖)`.
    pub tol: Option<f64>,
    pub max_inner: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions {
            tol: None,
            max_inner: 20_000,
        }
    }
}

impl InnerOptions {
    pub fn tolerance(&self, b: &DVector<f64>) -> f64 {
        self.tol.unwrap_or(1e-9 * (1.0 + b.norm()))
    }
}

/// Outcome of an inner QP solve.
#[derive(Debug, Clone)]
pub struct InnerSolve {
    pub eta: f64,
    /// Unscaled `S` (so `ηα + tr S ≤ α`).
    pub s: DMatrix<f64>,
    pub value: f64,
    /// Gradient-mapping norm at the returned point.
    pub residual: f64,
    pub iters: usize,
    /// `false` when `max_inner` ran out before reaching the tolerance.
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub eta: f64,
    pub s: DMatrix<f64>,
    pub z: DVector<f64>,
    /// `𝒜X_t`.
    pub ax: DVector<f64>,
    /// `⟨C, X_t⟩`.
    pub cx: f64,
    /// `tr X_t`.
    pub trx: f64,
    /// `F̄(z)`, from the saddle value.
    pub fbar_z: f64,
    /// `min f_t`.
    pub ft_value: f64,
    pub residual: f64,
    pub iters: usize,
    pub converged: bool,
}

/// Solves the regularized model problem and recovers the candidate `z`.
///
/// One-column bases use the exact triangle solver; wider ones use APG.
pub fn solve_minimax(
    ip: &InnerProblem,
    opts: &InnerOptions,
    warm: Option<(f64, &DMatrix<f64>)>,
) -> SubproblemSolution {
    let inner = if ip.width() == 1 {
        solve_inner_2d(ip)
    } else {
        solve_inner_apg(ip, opts, warm)
    };
    if !inner.converged {
        log::warn!(
            "inner solver stopped after {} iterations with residual {:.3e}",
            inner.iters,
            inner.residual
        );
    }
    let ax = ip.apply_x(inner.eta, &inner.s);
    let z = ip.y() + (ip.b() - &ax) / ip.rho();
    let ft_value = ip.eval_ft(inner.eta, &inner.s);
    let step2 = (&z - ip.y()).norm_squared();
    SubproblemSolution {
        cx: ip.c_inner_x(inner.eta, &inner.s),
        trx: ip.trace_x(inner.eta, &inner.s),
        fbar_z: -ft_value - 0.5 * ip.rho() * step2,
        ft_value,
        eta: inner.eta,
        s: inner.s,
        z,
        ax,
        residual: inner.residual,
        iters: inner.iters,
        converged: inner.converged,
    }
}

/// Random instances for testing the inner solvers.
pub mod test_support {
    use super::*;
    use crate::linops::{orthonormalize, ConstraintMap, SparseSym, SymMatrix};
    use crate::model::StorageMode;
    use crate::rng::GaussianStream;

    /// Random instance with about half the constraint entries nonzero, a
    /// nonzero rank-2 aggregate and a random basis of the given width.
    pub fn random_inner(n: usize, m: usize, width: usize, seed: u64) -> (SdpProblem, InnerProblem) {
        let mut g = GaussianStream::new(seed);
        let mats = (0..m)
            .map(|_| {
                let t: Vec<_> = (0..n)
                    .flat_map(|j| (0..=j).map(move |i| (i, j)))
                    .filter_map(|(i, j)| (g.uniform() < 0.5).then(|| (i, j, g.sample())))
                    .collect();
                SparseSym::new(n, t).unwrap()
            })
            .collect();
        let map = ConstraintMap::new(n, mats).unwrap();
        let c = SymMatrix::from_fn(n, |_, _| g.sample());
        let b = DVector::from_fn(m, |_, _| g.sample());
        let alpha = 0.5 + 3.0 * g.uniform();
        let prob = SdpProblem::new(c, map, b, alpha).unwrap();
        let mut agg = Aggregate::zero(&prob, StorageMode::Explicit, None);
        let u = orthonormalize(&DMatrix::from_fn(n, 2, |_, _| g.sample())).unwrap().into_cols();
        let d = DVector::from_vec(vec![g.uniform(), g.uniform()]);
        let d = &d * (alpha / (d.sum() + 1e-3));
        agg.update(&prob, 0.0, &u, &DMatrix::from_diagonal(&d)).unwrap();
        let v = orthonormalize(&DMatrix::from_fn(n, width, |_, _| g.sample())).unwrap();
        let y = DVector::from_fn(m, |_, _| g.sample());
        let rho = 0.2 + 2.0 * g.uniform();
        let ip = InnerProblem::new(&prob, &agg, &v, &y, rho).unwrap();
        (prob, ip)
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::random_inner;
    use super::*;
    use crate::rng::GaussianStream;
    use approx::assert_abs_diff_eq;

    fn random_sym(p: usize, g: &mut GaussianStream) -> DMatrix<f64> {
        let a = DMatrix::from_fn(p, p, |_, _| g.sample());
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn ft_at_origin() {
        let (_, ip) = random_inner(5, 4, 2, 1);
        let f = ip.eval_ft(0.0, &DMatrix::zeros(2, 2));
        let expect = ip.b().dot(ip.y()) + ip.b().norm_squared() / (2.0 * ip.rho());
        assert_abs_diff_eq!(f, expect, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut g = GaussianStream::new(2);
        for seed in 0..10 {
            let (_, ip) = random_inner(6, 5, 3, 100 + seed);
            let eta = g.uniform();
            let s = random_sym(3, &mut g);
            let (d_eta, d_s) = ip.grad_ft(eta, &s);
            let h = 1e-5;
            let fd = (ip.eval_ft(eta + h, &s) - ip.eval_ft(eta - h, &s)) / (2.0 * h);
            assert!((fd - d_eta).abs() <= 1e-5 * (1.0 + d_eta.abs()));
            for a in 0..3 {
                for b in 0..3 {
                    let mut e = DMatrix::zeros(3, 3);
                    e[(a, b)] = h;
                    e[(b, a)] = h;
                    let fd = (ip.eval_ft(eta, &(&s + &e)) - ip.eval_ft(eta, &(&s - &e))) / (2.0 * h);
                    let analytic = if a == b { d_s[(a, a)] } else { 2.0 * d_s[(a, b)] };
                    assert!((fd - analytic).abs() <= 1e-5 * (1.0 + analytic.abs()), "{fd} {analytic}");
                }
            }
        }
    }

    #[test]
    fn quadratic_identity() {
        let mut g = GaussianStream::new(3);
        let (_, ip) = random_inner(5, 6, 2, 4);
        let eta = g.uniform();
        let s = random_sym(2, &mut g);
        let lhs = ip.eval_ft(2.0 * eta, &(&s * 2.0)) - 2.0 * ip.eval_ft(eta, &s)
            + ip.eval_ft(0.0, &DMatrix::zeros(2, 2));
        let direct = ip.apply_x(eta, &s).norm_squared() / ip.rho();
        assert_abs_diff_eq!(lhs, direct, epsilon = 1e-9 * (1.0 + direct));
    }

    #[test]
    fn reduced_form_matches_direct() {
        let mut g = GaussianStream::new(5);
        let (_, ip) = random_inner(6, 4, 3, 6);
        let qp = ip.reduced();
        for _ in 0..10 {
            let eta = g.uniform();
            let s = random_sym(3, &mut g);
            let x = ip.to_reduced(eta, &s);
            let (eta2, s2) = ip.from_reduced(&x);
            assert_abs_diff_eq!(eta, eta2, epsilon = 1e-14);
            assert!((&s - s2).norm() < 1e-13);
            let direct = ip.eval_ft(eta, &s);
            assert_abs_diff_eq!(qp.value(&x), direct, epsilon = 1e-9 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn stationarity_identity_and_feasibility() {
        for seed in 0..20 {
            let (_, ip) = random_inner(6, 5, 1 + (seed as usize % 3), 200 + seed);
            let sol = solve_minimax(&ip, &InnerOptions::default(), None);
            let lhs = -ip.b() + &sol.ax;
            let rhs = (ip.y() - &sol.z) * ip.rho();
            assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + ip.b().norm()));
            assert!(sol.eta >= -1e-10);
            let lmin = sol.s.clone().symmetric_eigenvalues().min();
            assert!(lmin >= -1e-8 * sol.s.trace().abs().max(1.0));
            assert!(sol.eta * ip.alpha() + sol.s.trace() <= ip.alpha() + 1e-8);
        }
    }

    #[test]
    fn huge_rho_keeps_z_at_y() {
        let (prob, _) = random_inner(5, 4, 2, 7);
        let mut g = GaussianStream::new(8);
        let agg = Aggregate::zero(&prob, crate::model::StorageMode::Explicit, None);
        let v = crate::linops::orthonormalize(&DMatrix::from_fn(5, 2, |_, _| g.sample())).unwrap();
        let y = DVector::from_fn(4, |_, _| g.sample());
        let ip = InnerProblem::new(&prob, &agg, &v, &y, 1e12).unwrap();
        let sol = solve_minimax(&ip, &InnerOptions::default(), None);
        assert!((&sol.z - &y).norm() <= 1e-6);
    }

    #[test]
    fn rejects_bad_rho() {
        let (prob, _) = random_inner(4, 3, 1, 9);
        let agg = Aggregate::zero(&prob, crate::model::StorageMode::Explicit, None);
        let v = OrthonormalBasis::new(DMatrix::identity(4, 1)).unwrap();
        assert!(InnerProblem::new(&prob, &agg, &v, &DVector::zeros(3), 0.0).is_err());
    }
}
