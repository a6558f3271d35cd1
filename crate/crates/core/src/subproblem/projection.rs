use nalgebra::{DMatrix, DVector};

use crate::linops::Spectrum;

/// Euclidean projection onto `{x ≥ 0, Σx ≤ 1}`.
pub fn project_simplex_hull(v: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
    if clamped.iter().sum::<f64>() <= 1.0 {
        return clamped;
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Projection of `(η0, S0)` onto `{η ≥ 0, S ⪰ 0, η + tr S ≤ 1}` in the norm
/// `(η² + ‖S‖_F²)^{1/2}`.
///
/// The set is spectral in `S`, so the projection keeps the eigenvectors of
/// `S0` and projects `(η0, λ(S0))` onto the simplex hull.
pub fn project_scaled_set(eta0: f64, s0: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let spec = Spectrum::of(s0);
    let mut v = Vec::with_capacity(spec.len() + 1);
    v.push(eta0);
    v.extend(spec.values.iter().copied());
    let p = project_simplex_hull(&v);
    let lam = DVector::from_column_slice(&p[1..]);
    let q = &spec.vectors;
    let s = q * DMatrix::from_diagonal(&lam) * q.transpose();
    (p[0], (&s + s.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GaussianStream;

    #[test]
    fn simplex_hull_examples() {
        assert_eq!(project_simplex_hull(&[0.2, 0.3]), vec![0.2, 0.3]);
        assert_eq!(project_simplex_hull(&[-1.0, -2.0]), vec![0.0, 0.0]);
        let p = project_simplex_hull(&[0.9, 0.8]);
        assert!((p[0] - 0.55).abs() < 1e-15 && (p[1] - 0.45).abs() < 1e-15);
        let p = project_simplex_hull(&[3.0, -1.0, 0.5]);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn scaled_set_examples() {
        let s0 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.4, 0.3]));
        let (eta, s) = project_scaled_set(0.1, &s0);
        assert!((eta - 0.1).abs() < 1e-15);
        assert!((&s - &s0).norm() < 1e-15);

        let s0 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, -2.0]));
        let (eta, s) = project_scaled_set(0.0, &s0);
        assert_eq!(eta, 0.0);
        assert!((s[(0, 0)] - 0.25).abs() < 1e-15);
        assert!(s[(1, 1)].abs() < 1e-15);
    }

    #[test]
    fn scaled_set_is_idempotent() {
        let mut g = GaussianStream::new(31);
        for _ in 0..50 {
            let a = DMatrix::from_fn(3, 3, |_, _| g.sample());
            let s0 = (&a + a.transpose()) * 0.5;
            let (eta, s) = project_scaled_set(g.sample(), &s0);
            let (eta2, s2) = project_scaled_set(eta, &s);
            assert!((eta - eta2).abs() < 1e-10);
            assert!((&s - &s2).norm() < 1e-10);
        }
    }
}
