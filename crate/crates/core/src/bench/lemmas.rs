//! Trajectory checks of the primal-dual guarantees at descent steps, and a
//! sampler for the eigengap perturbation bound behind the quadratic accuracy
//! of the spectral model.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bundle::IterationRecord;
use crate::linops::Spectrum;
use crate::rng::GaussianStream;

/// Relative slack allowed on every trajectory bound.
pub const LEMMA_TOL: f64 = 1e-6;

/// Absolute slack allowed on the sampled perturbation bound.
pub const PERTURBATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaParams {
    pub rho: f64,
    pub beta: f64,
    pub alpha: f64,
    pub f_star: f64,
    /// Upper bound on the trace of primal solutions.
    pub trace_bound: f64,
    /// Upper bound on `‖y‖` over the iterates.
    pub y_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub name: String,
    pub checked: usize,
    pub violations: usize,
    /// Largest `lhs − rhs` seen; negative means every bound held strictly.
    pub worst_excess: f64,
    pub first_violation: Option<usize>,
}

impl LemmaCheck {
    fn new(name: &str) -> Self {
        LemmaCheck {
            name: name.into(),
            checked: 0,
            violations: 0,
            worst_excess: f64::NEG_INFINITY,
            first_violation: None,
        }
    }

    fn record(&mut self, t: usize, excess: f64, tol: f64) {
        self.checked += 1;
        if !(excess <= self.worst_excess) {
            self.worst_excess = excess;
        }
        if !(excess <= tol) {
            self.violations += 1;
            self.first_violation.get_or_insert(t);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub descent_steps: usize,
    pub tolerance: f64,
    pub checks: Vec<LemmaCheck>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(LemmaCheck::passed)
    }
}

/// Checks, at every descent row with `gap = F(y_t) − F*`:
///
/// * primal feasibility `‖b − 𝒜X_t‖² ≤ (2ρ/β)·gap`;
/// * dual feasibility `λ_min(C − 𝒜*y_{t+1}) ≥ −gap/D` (needs `α ≥ 2D`);
/// * the gap `⟨b, y_{t+1}⟩ − ⟨C, X_t⟩` lies in
///   `[−((1−β)/β)·gap − s, (α/D)·gap + s]` with `s = √((2ρ/β)·gap)·D_y`.
///
/// Each bound is allowed a slack of [`LEMMA_TOL`]`·max(1, |F*|)`.
pub fn check_lemmas(trace: &[IterationRecord], p: &LemmaParams) -> LemmaReport {
    let tol = LEMMA_TOL * p.f_star.abs().max(1.0);
    let mut feas = LemmaCheck::new("primal feasibility");
    let mut dual = LemmaCheck::new("dual feasibility");
    let mut upper = LemmaCheck::new("primal-dual gap upper");
    let mut lower = LemmaCheck::new("primal-dual gap lower");
    let mut descents = 0;
    for rec in trace.iter().filter(|r| r.descent) {
        descents += 1;
        let gap = (rec.f_y - p.f_star).max(0.0);
        let move_bound = 2.0 * p.rho / p.beta * gap;
        let s = move_bound.sqrt() * p.y_bound;
        let pd = rec.dval - rec.pval;
        feas.record(rec.t, rec.feas * rec.feas - move_bound, tol);
        dual.record(rec.t, -gap / p.trace_bound - rec.lammin, tol);
        upper.record(rec.t, pd - (p.alpha / p.trace_bound * gap + s), tol);
        lower.record(rec.t, -(1.0 - p.beta) / p.beta * gap - s - pd, tol);
    }
    LemmaReport {
        descent_steps: descents,
        tolerance: tol,
        checks: vec![feas, dual, upper, lower],
    }
}

/// `max(λ₁(Y), 0) − max(λ₁(VᵀYV), 0)` with `V` the top-`r` eigenvectors of
/// `X`: the loss from restricting the maximum eigenvalue to the top-`r`
/// eigenspace of a nearby matrix.
pub fn restricted_eig_loss(x: &DMatrix<f64>, y: &DMatrix<f64>, r: usize) -> f64 {
    let v = Spectrum::of(x).top_basis(r).into_cols();
    let full = Spectrum::of(y).lambda_max().max(0.0);
    let comp = v.transpose() * y * &v;
    let comp = (&comp + comp.transpose()) * 0.5;
    full - Spectrum::of(&comp).lambda_max().max(0.0)
}

/// `8‖Y−X‖²_F·Λ/δ² + (8√2 + 16)‖Y−X‖²_F/δ`.
pub fn perturbation_bound(dist_fro: f64, tail: f64, delta: f64) -> f64 {
    let d2 = dist_fro * dist_fro;
    8.0 * d2 * tail / (delta * delta) + (8.0 * std::f64::consts::SQRT_2 + 16.0) * d2 / delta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSample {
    pub n: usize,
    pub r: usize,
    /// `λ_r(X) − λ_{r+1}(X)`.
    pub delta: f64,
    /// `max(|λ_{r+1}(X)|, |λ_n(X)|)`.
    pub tail: f64,
    pub dist_fro: f64,
    pub dist_op: f64,
    pub loss: f64,
    pub bound: f64,
}

/// Random `X = Q diag(λ) Qᵀ` with gap `δ` forced at index `r`, and
/// `Y = X + E` with `‖E‖_F = s·δ`. When `within_gap` the scale is
/// `s ∈ (0, 1]`, otherwise `s ∈ (0, 10]`.
pub fn sample_perturbation(rng: &mut GaussianStream, max_n: usize, within_gap: bool) -> PerturbationSample {
    let n = 2 + rng.below(max_n.max(2) - 1);
    let r = 1 + rng.below(n - 1);
    let delta = 10f64.powf(-2.0 + 3.0 * rng.uniform());
    let spread = 10f64.powf(-1.0 + 2.0 * rng.uniform());
    let shift = spread * (2.0 * rng.uniform() - 1.0);
    let mut low: Vec<f64> = (0..n - r).map(|_| shift + spread * (2.0 * rng.uniform() - 1.0)).collect();
    low.sort_by(|a, b| b.total_cmp(a));
    let top = low[0] + delta;
    let mut high: Vec<f64> = (0..r).map(|k| if k == 0 { top } else { top + spread * rng.uniform() }).collect();
    high.sort_by(|a, b| b.total_cmp(a));
    let eigs: Vec<f64> = high.into_iter().chain(low.iter().copied()).collect();

    let g = DMatrix::from_fn(n, n, |_, _| rng.sample());
    let q = g.qr().q();
    let x = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eigs.clone())) * q.transpose();
    let x = (&x + x.transpose()) * 0.5;

    let e = DMatrix::from_fn(n, n, |_, _| rng.sample());
    let e = (&e + e.transpose()) * 0.5;
    let scale = match rng.below(4) {
        0 => 1.0,
        1 => 1e-4 * rng.uniform().max(1e-3),
        _ => rng.uniform().max(1e-6),
    } * if within_gap { 1.0 } else { 10.0 };
    let e = &e * (scale * delta / e.norm());
    let y = &x + &e;

    // Measure the realized gap and tail so the bound uses exact inputs.
    let spec = Spectrum::of(&x);
    let delta_real = spec.values[r - 1] - spec.values[r];
    let tail = spec.values[r].abs().max(spec.values[n - 1].abs());
    let dist_fro = e.norm();
    let dist_op = Spectrum::of(&e).values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    PerturbationSample {
        n,
        r,
        delta: delta_real,
        tail,
        dist_fro,
        dist_op,
        loss: restricted_eig_loss(&x, &y, r),
        bound: perturbation_bound(dist_fro, tail, delta_real),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub samples: usize,
    /// Samples with `loss < −tol`.
    pub negative: usize,
    /// Samples within the gap whose loss exceeds the bound by more than `tol`.
    pub above_bound: usize,
    /// Samples whose loss exceeds `2‖Y − X‖_op` by more than `tol`.
    pub above_opnorm: usize,
    /// Largest `loss / bound` among samples within the gap.
    pub worst_ratio: f64,
}

impl PerturbationReport {
    pub fn passed(&self) -> bool {
        self.negative == 0 && self.above_bound == 0 && self.above_opnorm == 0
    }
}

/// Draws `count` samples within the gap (bound and op-norm checks) and as
/// many unrestricted ones (op-norm check only).
pub fn check_perturbation_bound(count: usize, max_n: usize, seed: u64) -> PerturbationReport {
    let mut rng = GaussianStream::new(seed);
    let mut rep = PerturbationReport {
        samples: 0,
        negative: 0,
        above_bound: 0,
        above_opnorm: 0,
        worst_ratio: 0.0,
    };
    for k in 0..2 * count {
        let within = k < count;
        let s = sample_perturbation(&mut rng, max_n, within);
        rep.samples += 1;
        if s.loss < -PERTURBATION_TOL {
            rep.negative += 1;
        }
        if s.loss.abs() > 2.0 * s.dist_op + PERTURBATION_TOL {
            rep.above_opnorm += 1;
        }
        if within && s.dist_fro <= s.delta {
            if s.loss > s.bound + PERTURBATION_TOL {
                rep.above_bound += 1;
            }
            if s.bound > 0.0 {
                rep.worst_ratio = rep.worst_ratio.max(s.loss / s.bound);
            }
        }
    }
    rep
}
