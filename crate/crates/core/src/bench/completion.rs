//! Low-rank matrix completion as a trace-minimization SDP.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linops::{ConstraintMap, SparseSym, SymMatrix};
use crate::model::SdpProblem;
use crate::rng::GaussianStream;

/// Observed entries of a `d × d` matrix, 0-indexed, sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionInstance {
    d: usize,
    entries: Vec<(usize, usize, f64)>,
    truth: Option<DMatrix<f64>>,
}

impl CompletionInstance {
    /// Repeated coordinates collapse to one entry if their values agree and
    /// are an error otherwise.
    pub fn new(
        d: usize,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
        truth: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, j, v) in entries {
            if i >= d || j >= d {
                return Err(Error::IndexOutOfBounds { row: i, col: j, n: d });
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite value at ({i}, {j})")));
            }
            if let Some(old) = map.insert((i, j), v) {
                if old != v {
                    return Err(Error::InvalidArgument(format!(
                        "conflicting observations at ({i}, {j}): {old} and {v}"
                    )));
                }
            }
        }
        if let Some(m) = &truth {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch {
                    context: "CompletionInstance (truth)",
                    expected: d,
                    found: m.nrows().max(m.ncols()),
                });
            }
        }
        let entries = map.into_iter().map(|((i, j), v)| (i, j, v)).collect();
        Ok(CompletionInstance { d, entries, truth })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn truth(&self) -> Option<&DMatrix<f64>> {
        self.truth.as_ref()
    }

    /// Observed entries with zeros elsewhere.
    pub fn zero_filled(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.d, self.d);
        for &(i, j, v) in &self.entries {
            m[(i, j)] = v;
        }
        m
    }

    /// Nuclear-norm scale used for `α`: `‖M‖_*` when the truth is known,
    /// otherwise the nuclear norm of the inverse-probability-weighted
    /// zero-filled observations.
    pub fn nuclear_scale(&self) -> f64 {
        match &self.truth {
            Some(m) => nuclear_norm(m),
            None => {
                let frac = self.entries.len() as f64 / (self.d * self.d) as f64;
                nuclear_norm(&self.zero_filled()) / frac
            }
        }
    }
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.sum()
}

/// `M = W Wᵀ` with Rademacher `W ∈ ℝ^{d×rank}`; each entry is observed
/// independently with probability `p_obs`.
pub fn gen_completion(d: usize, rank: usize, p_obs: f64, seed: u64) -> Result<CompletionInstance> {
    if rank == 0 || rank > d {
        return Err(Error::InvalidArgument(format!("rank must satisfy 1 <= rank <= d = {d}, got {rank}")));
    }
    if !(p_obs > 0.0 && p_obs <= 1.0) {
        return Err(Error::InvalidArgument(format!("observation probability must lie in (0, 1], got {p_obs}")));
    }
    let mut rng = GaussianStream::new(seed);
    let w = DMatrix::from_fn(d, rank, |_, _| rng.rademacher());
    let m = &w * w.transpose();
    let mut entries = Vec::new();
    for j in 0..d {
        for i in 0..d {
            if rng.uniform() < p_obs {
                entries.push((i, j, m[(i, j)]));
            }
        }
    }
    if entries.is_empty() {
        entries.push((0, 0, m[(0, 0)]));
    }
    CompletionInstance::new(d, entries, Some(m))
}

/// Reads `i,j,value` lines (1-indexed, optional header). `d` is the largest
/// index seen.
pub fn parse_observations(text: &str) -> Result<CompletionInstance> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut entries = Vec::new();
    let mut d = 0;
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(k + 1);
        if rec.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 'i,j,value', found {} fields", rec.len()),
            });
        }
        let parsed = (rec[0].parse::<usize>(), rec[1].parse::<usize>(), rec[2].parse::<f64>());
        let (i, j, v) = match parsed {
            (Ok(i), Ok(j), Ok(v)) => (i, j, v),
            _ if k == 0 => continue,
            _ => {
                return Err(Error::Parse {
                    line,
                    message: format!("invalid observation '{}'", rec.iter().collect::<Vec<_>>().join(",")),
                })
            }
        };
        if i == 0 || j == 0 {
            return Err(Error::Parse {
                line,
                message: "indices are 1-based".into(),
            });
        }
        d = d.max(i).max(j);
        entries.push((i - 1, j - 1, v));
    }
    if entries.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no observations".into(),
        });
    }
    CompletionInstance::new(d, entries, None)
}

pub fn read_observations(path: impl AsRef<Path>) -> Result<CompletionInstance> {
    parse_observations(&std::fs::read_to_string(path)?)
}

/// `maximize −tr(X) s.t. X_{i,d+j} = M_ij for (i, j) ∈ Ω, X ⪰ 0` on `n = 2d`,
/// i.e. `C = I` and `A = (e_i e_{d+j}ᵀ + e_{d+j} e_iᵀ)/2`. `alpha` defaults
/// to four times [`CompletionInstance::nuclear_scale`].
pub fn build_completion(c: &CompletionInstance, alpha: Option<f64>) -> Result<SdpProblem> {
    let d = c.d();
    if c.entries().is_empty() {
        return Err(Error::InvalidArgument("no observed entries".into()));
    }
    let n = 2 * d;
    let mats = c
        .entries()
        .iter()
        .map(|&(i, j, _)| SparseSym::new(n, [(i, d + j, 0.5)]))
        .collect::<Result<Vec<_>>>()?;
    let b = DVector::from_iterator(c.entries().len(), c.entries().iter().map(|e| e.2));
    let map = ConstraintMap::new(n, mats)?;
    let alpha = match alpha {
        Some(a) => a,
        None => 4.0 * c.nuclear_scale(),
    };
    SdpProblem::new(SymMatrix::identity(n), map, b, alpha)
}

/// The minimum-trace PSD completion `[[U Σ Uᵀ, M], [Mᵀ, V Σ Vᵀ]]` of a
/// `d × d` matrix `M = U Σ Vᵀ`; its trace is `2‖M‖_*`.
pub fn embed(m: &DMatrix<f64>) -> SymMatrix {
    let d = m.nrows();
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let s = DMatrix::from_diagonal(&svd.singular_values);
    let w1 = &u * &s * u.transpose();
    let w2 = vt.transpose() * &s * &vt;
    let mut x = DMatrix::zeros(2 * d, 2 * d);
    x.view_mut((0, 0), (d, d)).copy_from(&w1);
    x.view_mut((d, d), (d, d)).copy_from(&w2);
    x.view_mut((0, d), (d, d)).copy_from(m);
    x.view_mut((d, 0), (d, d)).copy_from(&m.transpose());
    SymMatrix::from_fn(2 * d, |i, j| 0.5 * (x[(i, j)] + x[(j, i)]))
}
