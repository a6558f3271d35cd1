//! Weighted undirected graphs and the max-cut relaxation.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linops::{ConstraintMap, SparseSym, SymMatrix};
use crate::model::SdpProblem;
use crate::rng::GaussianStream;

/// Vertices are `0..n`; every edge is stored with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInstance {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl GraphInstance {
    /// Edges may be given in either orientation. Self-loops, out-of-range
    /// vertices and repeated vertex pairs are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::IndexOutOfBounds { row: i, col: j, n });
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self-loop at vertex {i}")));
            }
            if !w.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite weight on edge ({i}, {j})")));
            }
            let e = (i.min(j), i.max(j));
            if !seen.insert(e) {
                return Err(Error::DuplicateEntry { row: e.0, col: e.1 });
            }
            out.push((e.0, e.1, w));
        }
        Ok(GraphInstance { n, edges: out })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// The unit-weight triangle.
    pub fn triangle() -> Self {
        Self::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).expect("valid triangle")
    }

    /// `G(n, p)` with unit weights.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("edge probability must lie in [0, 1], got {p}")));
        }
        let mut rng = GaussianStream::new(seed);
        let mut edges = Vec::new();
        for j in 0..n {
            for i in 0..j {
                if rng.uniform() < p {
                    edges.push((i, j, 1.0));
                }
            }
        }
        Self::new(n, edges)
    }

    /// `L = D − W`.
    pub fn laplacian(&self) -> SymMatrix {
        let mut l = nalgebra::DMatrix::zeros(self.n, self.n);
        for &(i, j, w) in &self.edges {
            l[(i, i)] += w;
            l[(j, j)] += w;
            l[(i, j)] -= w;
            l[(j, i)] -= w;
        }
        SymMatrix::from_dense(l).expect("Laplacian is symmetric")
    }
}

/// Parses the Gset edge-list format: a header `n m`, then `m` lines
/// `i j [w]` with 1-indexed vertices. Blank lines are skipped.
pub fn parse_gset(text: &str) -> Result<GraphInstance> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 2 {
        return Err(Error::Parse {
            line: hline,
            message: format!("expected header 'n m', found '{header}'"),
        });
    }
    let n: usize = parse_field(head[0], hline, "vertex count")?;
    let m: usize = parse_field(head[1], hline, "edge count")?;

    let mut edges = Vec::with_capacity(m);
    let mut last_line = hline;
    for (line, content) in lines {
        last_line = line;
        let f: Vec<&str> = content.split_whitespace().collect();
        if f.len() < 2 || f.len() > 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 'i j [w]', found '{content}'"),
            });
        }
        let i: usize = parse_field(f[0], line, "vertex")?;
        let j: usize = parse_field(f[1], line, "vertex")?;
        let w: f64 = match f.get(2) {
            Some(s) => parse_field(s, line, "weight")?,
            None => 1.0,
        };
        if i == 0 || j == 0 || i > n || j > n {
            return Err(Error::Parse {
                line,
                message: format!("vertex out of range 1..={n} in '{content}'"),
            });
        }
        if edges.len() == m {
            return Err(Error::Parse {
                line,
                message: format!("more edge lines than the {m} declared in the header"),
            });
        }
        edges.push((line, i - 1, j - 1, w));
    }
    if edges.len() != m {
        return Err(Error::Parse {
            line: last_line,
            message: format!("header declares {m} edges, found {}", edges.len()),
        });
    }
    let mut seen = HashSet::new();
    for &(line, i, j, _) in &edges {
        if i == j {
            return Err(Error::Parse {
                line,
                message: format!("self-loop at vertex {}", i + 1),
            });
        }
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(Error::Parse {
                line,
                message: format!("repeated edge ({}, {})", i + 1, j + 1),
            });
        }
    }
    GraphInstance::new(n, edges.into_iter().map(|(_, i, j, w)| (i, j, w)))
}

pub fn read_gset(path: impl AsRef<Path>) -> Result<GraphInstance> {
    parse_gset(&std::fs::read_to_string(path)?)
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what} '{s}'"),
    })
}

/// `maximize ⟨L, X⟩ s.t. diag(X) = 1, X ⪰ 0`, written with `C = −L`,
/// `A_i = e_i e_iᵀ` and `b = 1`. `alpha` defaults to `2n`.
pub fn build_maxcut(g: &GraphInstance, alpha: Option<f64>) -> Result<SdpProblem> {
    let n = g.n();
    if n == 0 {
        return Err(Error::InvalidArgument("graph has no vertices".into()));
    }
    let mut c = g.laplacian();
    c.scale(-1.0);
    let mats = (0..n).map(|i| SparseSym::unit_diagonal(n, i)).collect::<Result<Vec<_>>>()?;
    let map = ConstraintMap::new(n, mats)?;
    SdpProblem::new(c, map, DVector::from_element(n, 1.0), alpha.unwrap_or(2.0 * n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_laplacian() {
        let l = GraphInstance::triangle().laplacian();
        let want = [[2.0, -1.0, -1.0], [-1.0, 2.0, -1.0], [-1.0, -1.0, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l.get(i, j), want[i][j]);
            }
        }
        let p = build_maxcut(&GraphInstance::triangle(), None).unwrap();
        assert_eq!(p.b().as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(p.alpha(), 6.0);
    }

    #[test]
    fn single_edge() {
        let g = GraphInstance::new(2, [(1, 0, 2.5)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1, 2.5)]);
        let l = g.laplacian();
        assert_eq!(l.matrix().as_slice(), &[2.5, -2.5, -2.5, 2.5]);
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let g = GraphInstance::erdos_renyi(30, 0.3, 4).unwrap();
        let l = g.laplacian();
        for i in 0..30 {
            let s: f64 = (0..30).map(|j| l.get(i, j)).sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(GraphInstance::new(3, [(1, 1, 1.0)]).is_err());
        assert!(GraphInstance::new(3, [(0, 3, 1.0)]).is_err());
        assert!(GraphInstance::new(3, [(0, 1, 1.0), (1, 0, 2.0)]).is_err());
    }

    #[test]
    fn parses_triangle() {
        let g = parse_gset("3 3\n1 2 1\n2 3 1\n1 3 1").unwrap();
        assert_eq!(g, GraphInstance::triangle());
        let g = parse_gset("3 2\n1 2\n3 2\n").unwrap();
        assert_eq!(g.edges(), &[(0, 1, 1.0), (1, 2, 1.0)]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match parse_gset("3 3\n1 2 1\n2 3 1") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse_gset("3 2\n1 2 1\n2 x 1") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse_gset("3 1\n1 2 1\n2 3 1") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_gset("3 1\n1 4 1").is_err());
        assert!(parse_gset("").is_err());
    }

    #[test]
    fn erdos_renyi_is_deterministic() {
        let a = GraphInstance::erdos_renyi(40, 0.1, 9).unwrap();
        let b = GraphInstance::erdos_renyi(40, 0.1, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(GraphInstance::erdos_renyi(10, 1.0, 0).unwrap().edges().len(), 45);
    }
}
