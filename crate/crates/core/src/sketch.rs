//! Two-sided randomized sketch of a streamed symmetric matrix.
//!
//! The aggregate evolves by updates `X ← ηX + V S Vᵀ`. Instead of storing
//! `X`, we keep `Y^C = XΨ` (`n×k`, `k = 2r+1`) and `Y^R = ΦX` (`l×n`,
//! `l = 4r+3`) for fixed Gaussian test matrices, which follow the same linear
//! recurrence. A rank-`r` approximation is recovered as
//! `Q·[(ΦQ)† Y^R]_r` with `Q` an orthonormal basis of `range(Y^C)`.
//! The reconstruction is exact when `rank(X) ≤ r`, and is not PSD in general.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linops::{orthonormalize, SymMatrix};
use crate::rng::GaussianStream;

/// Relative singular-value cutoff for the pseudoinverse of `ΦQ`.
pub const PINV_RTOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SketchState {
    n: usize,
    r: usize,
    seed: u64,
    psi: DMatrix<f64>,
    phi: DMatrix<f64>,
    yc: DMatrix<f64>,
    yr: DMatrix<f64>,
}

/// Factors `(QU, Σ, V)` of the rank-`r` reconstruction `X̂ = QU·diag(Σ)·Vᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchFactors {
    pub n: usize,
    pub rank: usize,
    /// `n×rank`, column-major.
    pub qu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `n×rank`, column-major.
    pub v: Vec<f64>,
}

impl SketchFactors {
    pub fn qu(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.rank, &self.qu)
    }

    pub fn v(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.rank, &self.v)
    }

    /// Dense `X̂`; not symmetrized since the reconstruction need not be.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let scaled = self.qu() * DMatrix::from_diagonal(&DVector::from_column_slice(&self.sigma));
        scaled * self.v().transpose()
    }

    /// `(X̂ + X̂ᵀ)/2`.
    pub fn to_sym(&self) -> SymMatrix {
        SymMatrix::from_dense(self.to_dense()).expect("square")
    }
}

impl SketchState {
    /// Draws `Ψ` then `Φ` from one seeded Gaussian stream; both sketches start at zero.
    pub fn new(n: usize, r: usize, seed: u64) -> Result<Self> {
        if r == 0 || r > n {
            return Err(Error::InvalidArgument(format!(
                "sketch rank must satisfy 1 <= r <= n, got r = {r}, n = {n}"
            )));
        }
        let k = 2 * r + 1;
        let l = 4 * r + 3;
        let mut g = GaussianStream::new(seed);
        let psi = DMatrix::from_fn(n, k, |_, _| g.sample());
        let phi = DMatrix::from_fn(l, n, |_, _| g.sample());
        Ok(SketchState {
            n,
            r,
            seed,
            psi,
            phi,
            yc: DMatrix::zeros(n, k),
            yr: DMatrix::zeros(l, n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.r
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn k(&self) -> usize {
        self.psi.ncols()
    }

    pub fn l(&self) -> usize {
        self.phi.nrows()
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn yc(&self) -> &DMatrix<f64> {
        &self.yc
    }

    pub fn yr(&self) -> &DMatrix<f64> {
        &self.yr
    }

    /// Sketches after the update `X ← ηX + V S Vᵀ`, leaving `self` untouched.
    pub fn updated_sketches(
        &self,
        eta: f64,
        v: &DMatrix<f64>,
        s: &DMatrix<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        check_dim("sketch update (V rows)", self.n, v.nrows())?;
        check_dim("sketch update (S rows)", v.ncols(), s.nrows())?;
        check_dim("sketch update (S cols)", v.ncols(), s.ncols())?;
        let yc = v * (s * (v.transpose() * &self.psi)) + &self.yc * eta;
        let yr = (&self.phi * v) * s * v.transpose() + &self.yr * eta;
        Ok((yc, yr))
    }

    /// `Y^C ← V S (VᵀΨ) + η Y^C` and `Y^R ← (ΦV) S Vᵀ + η Y^R`.
    pub fn update(&mut self, eta: f64, v: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<()> {
        let (yc, yr) = self.updated_sketches(eta, v, s)?;
        self.yc = yc;
        self.yr = yr;
        Ok(())
    }

    /// Sketches of `cX` for the current `X`.
    pub fn scale(&mut self, c: f64) {
        self.yc *= c;
        self.yr *= c;
    }

    /// Copy of this state with the given sketches (same test matrices).
    pub fn with_sketches(&self, yc: DMatrix<f64>, yr: DMatrix<f64>) -> Self {
        SketchState {
            yc,
            yr,
            ..self.clone()
        }
    }

    /// Rank-`r` reconstruction factors.
    pub fn reconstruct(&self) -> SketchFactors {
        let zero = SketchFactors {
            n: self.n,
            rank: 0,
            qu: Vec::new(),
            sigma: Vec::new(),
            v: Vec::new(),
        };
        let q = match orthonormalize(&self.yc) {
            Ok(q) => q.into_cols(),
            Err(_) => return zero,
        };
        let pq = &self.phi * &q;
        let b = pinv(&pq) * &self.yr;
        let svd = b.svd(true, true);
        let u = svd.u.expect("requested U");
        let vt = svd.v_t.expect("requested Vᵀ");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &c| svd.singular_values[c].total_cmp(&svd.singular_values[a]));
        let keep: Vec<usize> = order
            .into_iter()
            .take(self.r)
            .filter(|&i| svd.singular_values[i] > 0.0)
            .collect();
        if keep.is_empty() {
            return zero;
        }
        let qu = &q * u.select_columns(&keep);
        let v = vt.select_rows(&keep).transpose();
        SketchFactors {
            n: self.n,
            rank: keep.len(),
            qu: qu.as_slice().to_vec(),
            sigma: keep.iter().map(|&i| svd.singular_values[i]).collect(),
            v: v.as_slice().to_vec(),
        }
    }

    /// `‖Y^C − X̂Ψ‖_F / ‖Y^C‖_F`; zero for an empty sketch.
    pub fn reconstruction_residual(&self, factors: &SketchFactors) -> f64 {
        let norm = self.yc.norm();
        if norm == 0.0 {
            return 0.0;
        }
        if factors.rank == 0 {
            return 1.0;
        }
        (&self.yc - factors.to_dense() * &self.psi).norm() / norm
    }
}

/// Moore–Penrose pseudoinverse by SVD, truncating singular values below
/// `PINV_RTOL · σ_max`.
fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > PINV_RTOL * smax && s > 0.0 {
            out += vt.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_orthonormal(n: usize, p: usize, g: &mut GaussianStream) -> DMatrix<f64> {
        orthonormalize(&DMatrix::from_fn(n, p, |_, _| g.sample()))
            .unwrap()
            .into_cols()
    }

    #[test]
    fn init_dimensions_and_zero_sketch() {
        let st = SketchState::new(20, 3, 1).unwrap();
        assert_eq!((st.k(), st.l()), (7, 15));
        assert!(st.yc().iter().all(|&x| x == 0.0));
        assert!(st.yr().iter().all(|&x| x == 0.0));
        assert_eq!(st.reconstruct().rank, 0);
        assert!(SketchState::new(3, 4, 0).is_err());
    }

    #[test]
    fn same_seed_same_test_matrices() {
        let a = SketchState::new(15, 2, 99).unwrap();
        let b = SketchState::new(15, 2, 99).unwrap();
        assert!(a.psi().iter().zip(b.psi().iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.phi().iter().zip(b.phi().iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn update_examples() {
        let mut g = GaussianStream::new(3);
        let mut st = SketchState::new(10, 2, 4).unwrap();
        let v = random_orthonormal(10, 2, &mut g);
        st.update(0.3, &v, &DMatrix::identity(2, 2)).unwrap();
        let before = st.clone();
        st.update(1.0, &v, &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(st.yc(), before.yc());
        assert_eq!(st.yr(), before.yr());

        let u = random_orthonormal(10, 1, &mut g);
        st.update(0.0, &u, &DMatrix::from_element(1, 1, 1.0)).unwrap();
        let expect = &u * (u.transpose() * st.psi());
        assert!((st.yc() - expect).norm() < 1e-14);
    }

    #[test]
    fn rank_one_reconstruction() {
        let mut g = GaussianStream::new(5);
        let mut st = SketchState::new(30, 1, 6).unwrap();
        let u = random_orthonormal(30, 1, &mut g);
        st.update(0.0, &u, &DMatrix::from_element(1, 1, 2.0)).unwrap();
        let x = SymMatrix::low_rank(&u, &DMatrix::from_element(1, 1, 2.0));
        let f = st.reconstruct();
        let err = (f.to_dense() - x.matrix()).norm() / x.norm_fro();
        assert!(err <= 1e-8, "{err}");
        assert!(st.reconstruction_residual(&f) < 1e-10);
    }

    #[test]
    fn dimension_mismatch() {
        let mut st = SketchState::new(5, 1, 0).unwrap();
        assert!(st.update(1.0, &DMatrix::zeros(4, 1), &DMatrix::zeros(1, 1)).is_err());
    }
}
