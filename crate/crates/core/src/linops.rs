//! Dense symmetric matrices, sparse constraint maps and the small set of
//! eigen/orthogonalization routines the bundle methods are built on.
//!
//! Everything here is a pure function of its inputs. Dense eigensolves use
//! nalgebra's symmetric QR iteration; at the problem sizes this crate targets
//! (n up to a couple of thousand) that is faster and more predictable than a
//! Krylov method and returns every eigenpair at once.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::rng::GaussianStream;

/// Max-abs deviation of `VᵀV` from the identity accepted for an orthonormal basis.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Columns whose residual after projection falls below this fraction of their
/// original norm are treated as linearly dependent and dropped.
pub const RANK_DROP_TOL: f64 = 1e-10;

/// Dense real symmetric matrix.
///
/// Every constructor and arithmetic operation mirrors its result so that
/// `get(i, j) == get(j, i)` holds bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Builds a matrix from `f(i, j)` evaluated on the upper triangle only.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    /// Symmetrizes a square dense matrix as `(M + Mᵀ)/2`.
    pub fn from_dense(m: DMatrix<f64>) -> Result<Self> {
        check_dim("SymMatrix::from_dense (square)", m.nrows(), m.ncols())?;
        let n = m.nrows();
        Ok(Self::from_fn(n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)])))
    }

    /// `V S Vᵀ` for an `n×p` factor and a symmetric `p×p` core.
    pub fn low_rank(v: &DMatrix<f64>, s: &DMatrix<f64>) -> Self {
        let vs = v * s;
        let n = v.nrows();
        Self::from_fn(n, |i, j| vs.row(i).dot(&v.row(j)))
    }

    /// `u uᵀ`.
    pub fn outer(u: &DVector<f64>) -> Self {
        Self::from_fn(u.len(), |i, j| u[i] * u[j])
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Trace inner product `⟨A, B⟩ = tr(AB)`.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn norm_fro(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scale(&mut self, a: f64) {
        self.0 *= a;
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &SymMatrix) {
        self.0 += &other.0 * a;
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    /// Compression `Vᵀ M V`, symmetrized.
    pub fn compress(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let mv = &self.0 * v;
        let p = v.ncols();
        let mut out = DMatrix::zeros(p, p);
        for b in 0..p {
            for a in 0..=b {
                let x = v.column(a).dot(&mv.column(b));
                out[(a, b)] = x;
                out[(b, a)] = x;
            }
        }
        out
    }

    /// Full eigendecomposition, eigenvalues in descending order.
    pub fn spectrum(&self) -> Spectrum {
        Spectrum::of(&self.0)
    }

    pub fn lambda_max(&self) -> f64 {
        self.0.clone().symmetric_eigenvalues().max()
    }

    pub fn lambda_min(&self) -> f64 {
        self.0.clone().symmetric_eigenvalues().min()
    }
}

/// Eigenvalues sorted in descending order with matching unit eigenvectors.
///
/// Each eigenvector is oriented so that its first coordinate of magnitude
/// above `1e-12` is positive. Inside a repeated eigenvalue the basis is
/// whatever the dense solver produced; only the spanned subspace is meaningful.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn of(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let eig = SymmetricEigen::new(m.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
        let mut vectors = eig.eigenvectors.select_columns(&order);
        orient_columns(&mut vectors);
        Spectrum { values, vectors }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn lambda_max(&self) -> f64 {
        self.values[0]
    }

    pub fn lambda_min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// The leading `r` eigenvectors as an orthonormal basis.
    pub fn top_basis(&self, r: usize) -> OrthonormalBasis {
        OrthonormalBasis {
            cols: self.vectors.columns(0, r).into_owned(),
        }
    }

    /// Gaps `λ_k − λ_{k+1}` for `k = 1..=count`; zero where `k + 1 > n`.
    pub fn gaps(&self, count: usize) -> Vec<f64> {
        (0..count)
            .map(|k| {
                if k + 1 < self.values.len() {
                    self.values[k] - self.values[k + 1]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

fn orient_columns(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-12).copied() {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// `r` largest eigenvalues (descending) and a matching orthonormal eigenbasis.
pub fn top_eigs(m: &SymMatrix, r: usize) -> Result<(DVector<f64>, OrthonormalBasis)> {
    if r == 0 || r > m.n() {
        return Err(Error::InvalidArgument(format!(
            "top_eigs needs 1 <= r <= n, got r = {r}, n = {}",
            m.n()
        )));
    }
    let spec = m.spectrum();
    let values = spec.values.rows(0, r).into_owned();
    Ok((values, spec.top_basis(r)))
}

/// Matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    cols: DMatrix<f64>,
}

impl OrthonormalBasis {
    /// Wraps `cols` after checking `‖ColsᵀCols − I‖_max <= 1e-10`.
    pub fn new(cols: DMatrix<f64>) -> Result<Self> {
        if cols.ncols() == 0 || cols.ncols() > cols.nrows() {
            return Err(Error::InvalidArgument(format!(
                "basis must have 1..=n columns, got {} for n = {}",
                cols.ncols(),
                cols.nrows()
            )));
        }
        let dev = orthonormality_defect(&cols);
        if dev > ORTHONORMAL_TOL {
            return Err(Error::InvalidArgument(format!(
                "columns are not orthonormal (defect {dev:.3e})"
            )));
        }
        Ok(OrthonormalBasis { cols })
    }

    pub fn n(&self) -> usize {
        self.cols.nrows()
    }

    pub fn width(&self) -> usize {
        self.cols.ncols()
    }

    pub fn cols(&self) -> &DMatrix<f64> {
        &self.cols
    }

    pub fn into_cols(self) -> DMatrix<f64> {
        self.cols
    }
}

/// `‖VᵀV − I‖_max`.
pub fn orthonormality_defect(v: &DMatrix<f64>) -> f64 {
    let g = v.transpose() * v;
    let p = g.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..p {
        for i in 0..p {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Orthonormal basis for the column space of `cols`.
///
/// Classical Gram–Schmidt with one full reorthogonalization pass, processing
/// columns left to right so the leading columns of the result span the
/// leading columns of the input. Dependent columns are dropped.
pub fn orthonormalize(cols: &DMatrix<f64>) -> Result<OrthonormalBasis> {
    let n = cols.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(cols.ncols().min(n));
    for col in cols.column_iter() {
        if basis.len() == n {
            break;
        }
        let norm0 = col.norm();
        if norm0 == 0.0 || !norm0.is_finite() {
            continue;
        }
        let mut w = col.into_owned();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&w);
                w.axpy(-c, q, 1.0);
            }
        }
        let norm = w.norm();
        if norm > RANK_DROP_TOL * norm0 {
            basis.push(w / norm);
        }
    }
    if basis.is_empty() {
        return Err(Error::ZeroInput);
    }
    Ok(OrthonormalBasis {
        cols: DMatrix::from_columns(&basis),
    })
}

/// Sparse symmetric matrix stored as upper-triangle coordinate triples.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    /// Triples may be given in either triangle; `(i, j)` and `(j, i)` are the
    /// same coordinate and may only appear once.
    pub fn new(n: usize, triples: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triples
            .into_iter()
            .map(|(i, j, v)| if i <= j { (i, j, v) } else { (j, i, v) })
            .collect();
        for &(i, j, _) in &entries {
            if j >= n {
                return Err(Error::IndexOutOfBounds { row: i, col: j, n });
            }
        }
        entries.sort_by_key(|e| (e.0, e.1));
        for w in entries.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(Error::DuplicateEntry {
                    row: w[0].0,
                    col: w[0].1,
                });
            }
        }
        Ok(SparseSym { n, entries })
    }

    /// `e_i e_iᵀ`.
    pub fn unit_diagonal(n: usize, i: usize) -> Result<Self> {
        Self::new(n, [(i, i, 1.0)])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// `⟨A, X⟩`.
    pub fn inner_dense(&self, x: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * x[(i, j)] } else { 2.0 * v * x[(i, j)] })
            .sum()
    }

    /// `uᵀ A w`.
    pub fn bilinear<'a>(
        &self,
        u: impl Fn(usize) -> f64 + 'a,
        w: impl Fn(usize) -> f64 + 'a,
    ) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| {
                if i == j {
                    v * u(i) * w(i)
                } else {
                    v * (u(i) * w(j) + u(j) * w(i))
                }
            })
            .sum()
    }

    /// `dense += scale * A` on both triangles.
    pub fn add_to(&self, scale: f64, dense: &mut DMatrix<f64>) {
        for &(i, j, v) in &self.entries {
            dense[(i, j)] += scale * v;
            if i != j {
                dense[(j, i)] += scale * v;
            }
        }
    }

    pub fn to_dense(&self) -> SymMatrix {
        let mut m = DMatrix::zeros(self.n, self.n);
        self.add_to(1.0, &mut m);
        SymMatrix(m)
    }
}

/// The linear map `𝒜 : 𝕊ⁿ → ℝᵐ`, `(𝒜X)_i = ⟨A_i, X⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMap {
    n: usize,
    mats: Vec<SparseSym>,
}

impl ConstraintMap {
    pub fn new(n: usize, mats: Vec<SparseSym>) -> Result<Self> {
        for a in &mats {
            check_dim("ConstraintMap::new", n, a.n())?;
        }
        Ok(ConstraintMap { n, mats })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.mats.len()
    }

    pub fn mats(&self) -> &[SparseSym] {
        &self.mats
    }

    pub fn apply(&self, x: &SymMatrix) -> Result<DVector<f64>> {
        check_dim("apply_A", self.n, x.n())?;
        Ok(DVector::from_iterator(
            self.m(),
            self.mats.iter().map(|a| a.inner_dense(x.matrix())),
        ))
    }

    /// `𝒜*y = Σ y_i A_i`.
    pub fn adjoint(&self, y: &DVector<f64>) -> Result<SymMatrix> {
        check_dim("adjoint", self.m(), y.len())?;
        let mut m = DMatrix::zeros(self.n, self.n);
        for (a, &yi) in self.mats.iter().zip(y.iter()) {
            if yi != 0.0 {
                a.add_to(yi, &mut m);
            }
        }
        Ok(SymMatrix(m))
    }

    /// `𝒜(u wᵀ)`, i.e. `uᵀ A_i w` for each constraint.
    pub fn apply_outer(&self, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.mats.iter().map(|a| a.bilinear(|k| u[k], |k| w[k])),
        )
    }

    /// `𝒜(V S Vᵀ)` without forming the `n×n` product.
    pub fn apply_low_rank(&self, v: &DMatrix<f64>, s: &DMatrix<f64>) -> DVector<f64> {
        let vs = v * s;
        DVector::from_iterator(
            self.m(),
            self.mats.iter().map(|a| {
                a.entries()
                    .iter()
                    .map(|&(i, j, val)| {
                        let x = vs.row(i).dot(&v.row(j));
                        if i == j {
                            val * x
                        } else {
                            2.0 * val * x
                        }
                    })
                    .sum::<f64>()
            }),
        )
    }

    /// Largest singular value of `y ↦ 𝒜*y`, by power iteration on the Gram
    /// operator `y ↦ 𝒜(𝒜*y)` to relative tolerance `1e-8`.
    pub fn opnorm_adjoint(&self) -> f64 {
        let m = self.m();
        if m == 0 {
            return 0.0;
        }
        let mut g = GaussianStream::new(0x005e_ed0f_0b0e);
        let mut x = DVector::from_fn(m, |_, _| g.sample());
        x /= x.norm();
        let mut lambda = 0.0;
        for _ in 0..100_000 {
            let gx = self
                .apply(&self.adjoint(&x).expect("length matches m"))
                .expect("dimension matches n");
            let next = x.dot(&gx);
            let norm = gx.norm();
            if norm == 0.0 {
                return 0.0;
            }
            x = gx / norm;
            if (next - lambda).abs() <= 1e-8 * next.abs() {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda.max(0.0).sqrt()
    }
}

/// Dual slack `Z(y) = C − 𝒜*y`.
pub fn slack(map: &ConstraintMap, c: &SymMatrix, y: &DVector<f64>) -> Result<SymMatrix> {
    check_dim("slack", map.n(), c.n())?;
    let mut z = map.adjoint(y)?;
    z.scale(-1.0);
    z.axpy(1.0, c);
    Ok(z)
}
