//! The penalized dual objective and its spectral bundle models.
//!
//! For `F(y) = ⟨−b, y⟩ + α·max(λ_max(𝒜*y − C), 0)` the aggregated model over a
//! basis `V` and aggregate `X̄` is
//!
//! ```text
//! F̄(y) = max { ⟨−b, y⟩ + ⟨ηX̄ + VSVᵀ, 𝒜*y − C⟩ : η ≥ 0, S ⪰ 0, ηα + tr S ≤ α }.
//! ```
//!
//! The inner maximum is a linear function over a compact convex set, so it is
//! attained at an extreme point. The extreme points are the origin, `η = 1`
//! with `S = 0`, and `S = α·uuᵀ` for unit `u`. Maximizing over them gives the
//! closed form `⟨−b, y⟩ + max(0, c̄, α·λ₁(Vᵀ(𝒜*y − C)V))` with
//! `c̄ = ⟨X̄, 𝒜*y − C⟩ = ⟨𝒜X̄, y⟩ − ⟨C, X̄⟩`. Only the cached `𝒜X̄` and `⟨C, X̄⟩`
//! enter, so explicit and compressed aggregates behave identically.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linops::{ConstraintMap, OrthonormalBasis, SymMatrix};
use crate::sketch::SketchState;

/// `maximize ⟨−C, X⟩ s.t. 𝒜X = b, X ⪰ 0` together with the trace penalty `α`
/// of the penalized dual.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    c: SymMatrix,
    map: ConstraintMap,
    b: DVector<f64>,
    alpha: f64,
}

impl SdpProblem {
    pub fn new(c: SymMatrix, map: ConstraintMap, b: DVector<f64>, alpha: f64) -> Result<Self> {
        check_dim("SdpProblem (C vs map)", map.n(), c.n())?;
        check_dim("SdpProblem (b vs map)", map.m(), b.len())?;
        if c.n() == 0 {
            return Err(Error::InvalidArgument("empty problem".into()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        Ok(SdpProblem { c, map, b, alpha })
    }

    pub fn c(&self) -> &SymMatrix {
        &self.c
    }

    pub fn map(&self) -> &ConstraintMap {
        &self.map
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.c.n()
    }

    pub fn m(&self) -> usize {
        self.map.m()
    }

    /// `𝒜*y − C = −Z(y)`.
    pub fn penalty_matrix(&self, y: &DVector<f64>) -> Result<SymMatrix> {
        let mut m = self.map.adjoint(y)?;
        m.axpy(-1.0, &self.c);
        Ok(m)
    }

    /// `F` given the precomputed `λ_max(𝒜*y − C)`.
    pub fn objective_from_lambda(&self, y: &DVector<f64>, lambda_max: f64) -> f64 {
        -self.b.dot(y) + self.alpha * lambda_max.max(0.0)
    }
}

/// Penalized dual objective `F(y)`.
pub fn eval_f(prob: &SdpProblem, y: &DVector<f64>) -> Result<f64> {
    let lmax = prob.penalty_matrix(y)?.lambda_max();
    Ok(prob.objective_from_lambda(y, lmax))
}

/// How the aggregate matrix is held.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageMode {
    /// `X̄` is kept as a dense matrix alongside its caches.
    Explicit,
    /// Only `𝒜X̄`, `⟨C, X̄⟩` and `tr X̄` are kept (plus an optional sketch).
    Compressed,
}

/// The aggregate `X̄ ⪰ 0`, `tr X̄ ≤ α`, with the linear functionals the
/// subproblem needs.
#[derive(Debug, Clone)]
pub struct Aggregate {
    mode: StorageMode,
    xbar: Option<SymMatrix>,
    axbar: DVector<f64>,
    cxbar: f64,
    trxbar: f64,
    sketch: Option<SketchState>,
}

impl Aggregate {
    /// `X̄ = 0`.
    pub fn zero(prob: &SdpProblem, mode: StorageMode, sketch: Option<SketchState>) -> Self {
        Aggregate {
            mode,
            xbar: match mode {
                StorageMode::Explicit => Some(SymMatrix::zeros(prob.n())),
                StorageMode::Compressed => None,
            },
            axbar: DVector::zeros(prob.m()),
            cxbar: 0.0,
            trxbar: 0.0,
            sketch,
        }
    }

    pub fn mode(&self) -> StorageMode {
        self.mode
    }

    pub fn xbar(&self) -> Option<&SymMatrix> {
        self.xbar.as_ref()
    }

    pub fn axbar(&self) -> &DVector<f64> {
        &self.axbar
    }

    pub fn cxbar(&self) -> f64 {
        self.cxbar
    }

    pub fn trxbar(&self) -> f64 {
        self.trxbar
    }

    pub fn sketch(&self) -> Option<&SketchState> {
        self.sketch.as_ref()
    }

    /// `X̄ ← η X̄ + V M Vᵀ` for orthonormal `V` and symmetric `M`, updating
    /// the caches by linearity and the sketch when present.
    pub fn update(
        &mut self,
        prob: &SdpProblem,
        eta: f64,
        v: &DMatrix<f64>,
        core: &DMatrix<f64>,
    ) -> Result<()> {
        check_dim("Aggregate::update (V rows)", prob.n(), v.nrows())?;
        check_dim("Aggregate::update (core)", v.ncols(), core.nrows())?;
        let a_core = prob.map().apply_low_rank(v, core);
        let c_core = prob.c().compress(v).dot(core);
        self.axbar = &self.axbar * eta + a_core;
        self.cxbar = eta * self.cxbar + c_core;
        self.trxbar = eta * self.trxbar + core.trace();
        if let Some(x) = self.xbar.as_mut() {
            x.scale(eta);
            x.axpy(1.0, &SymMatrix::low_rank(v, core));
        }
        if let Some(sk) = self.sketch.as_mut() {
            sk.update(eta, v, core)?;
        }
        Ok(())
    }

    /// `X̄ ← cX̄`.
    pub fn scale(&mut self, c: f64) {
        self.axbar *= c;
        self.cxbar *= c;
        self.trxbar *= c;
        if let Some(x) = self.xbar.as_mut() {
            x.scale(c);
        }
        if let Some(sk) = self.sketch.as_mut() {
            sk.scale(c);
        }
    }

    /// `c̄ = ⟨X̄, 𝒜*y − C⟩` from the caches.
    pub fn penalty_inner(&self, y: &DVector<f64>) -> f64 {
        self.axbar.dot(y) - self.cxbar
    }

    /// Largest relative mismatch between the caches and a recomputation from
    /// the explicit matrix. `None` in compressed mode.
    pub fn cache_defect(&self, prob: &SdpProblem) -> Option<f64> {
        let x = self.xbar.as_ref()?;
        let ax = prob.map().apply(x).ok()?;
        let scale = 1.0 + x.norm_fro();
        let d_a = (&ax - &self.axbar).norm() / (1.0 + ax.norm());
        let d_c = (prob.c().inner(x) - self.cxbar).abs() / (scale * (1.0 + prob.c().norm_fro()));
        let d_t = (x.trace() - self.trxbar).abs() / scale;
        Some(d_a.max(d_c).max(d_t))
    }
}

/// Which extreme point attains the model maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelBranch {
    /// The zero matrix: penalty inactive.
    Zero,
    /// `η = 1, S = 0`.
    Aggregate,
    /// `S = α uuᵀ` with `u` the top eigenvector of `Vᵀ(𝒜*y − C)V`.
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelValue {
    pub value: f64,
    pub branch: ModelBranch,
}

/// The aggregated spectral model `F̄_(V, X̄)(y)` in closed form.
///
/// Ties between the aggregate and spectral extreme points resolve to the
/// spectral one.
pub fn eval_model(
    prob: &SdpProblem,
    agg: &Aggregate,
    v: &OrthonormalBasis,
    y: &DVector<f64>,
) -> Result<ModelValue> {
    let penalty = prob.penalty_matrix(y)?;
    Ok(model_from_penalty(prob, agg, v, y, &penalty))
}

/// Same as [`eval_model`] with `𝒜*y − C` already formed.
pub fn model_from_penalty(
    prob: &SdpProblem,
    agg: &Aggregate,
    v: &OrthonormalBasis,
    y: &DVector<f64>,
    penalty: &SymMatrix,
) -> ModelValue {
    let compressed = penalty.compress(v.cols());
    let spectral = prob.alpha() * compressed.symmetric_eigenvalues().max();
    let aggregate = agg.penalty_inner(y);
    let (best, branch) = if spectral >= aggregate {
        (spectral, ModelBranch::Spectral)
    } else {
        (aggregate, ModelBranch::Aggregate)
    };
    let (best, branch) = if best > 0.0 {
        (best, branch)
    } else {
        (0.0, ModelBranch::Zero)
    };
    ModelValue {
        value: -prob.b().dot(y) + best,
        branch,
    }
}

/// The two-cut aggregated model used by classical proximal bundle methods:
/// `max(F_z + ⟨g, y − z⟩, F̄_z + ⟨s, y − z⟩)`.
pub fn eval_simple_model(
    f_z: f64,
    g: &DVector<f64>,
    s: &DVector<f64>,
    fbar_z: f64,
    z: &DVector<f64>,
    y: &DVector<f64>,
) -> f64 {
    let d = y - z;
    (f_z + g.dot(&d)).max(fbar_z + s.dot(&d))
}
