//! Random regular network topologies.

use std::collections::HashSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

pub const MAX_PAIRING_RESTARTS: usize = 10_000;

/// Directed wiring of an `n_nodes`-node network.
///
/// `pred[n]` lists the nodes feeding node `n`, sorted ascending. Generated
/// topologies are the directed form of a simple undirected `degree`-regular
/// graph, so `m ∈ pred[n]` iff `n ∈ pred[m]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    n_nodes: usize,
    degree: usize,
    pred: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DegreeMismatch { node: usize, found: usize },
    SelfLoop { node: usize },
    DuplicatePredecessor { node: usize, pred: usize },
    OutOfRange { node: usize, pred: usize },
    Asymmetric { node: usize, pred: usize },
    NodeCount { found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DegreeMismatch { node, found } => {
                write!(f, "degree mismatch at {node} ({found} predecessors)")
            }
            Violation::SelfLoop { node } => write!(f, "self-loop at {node}"),
            Violation::DuplicatePredecessor { node, pred } => {
                write!(f, "duplicate predecessor {pred} at {node}")
            }
            Violation::OutOfRange { node, pred } => {
                write!(f, "predecessor {pred} of {node} out of range")
            }
            Violation::Asymmetric { node, pred } => {
                write!(f, "asymmetric edge: {pred} feeds {node} but not the reverse")
            }
            Violation::NodeCount { found } => {
                write!(f, "predecessor table has {found} rows")
            }
        }
    }
}

impl Topology {
    /// Builds a topology from raw predecessor lists without validating them.
    /// Lists are sorted into canonical order.
    pub fn from_pred_lists(degree: usize, mut pred: Vec<Vec<usize>>) -> Self {
        for p in &mut pred {
            p.sort_unstable();
        }
        Topology {
            n_nodes: pred.len(),
            degree,
            pred,
        }
    }

    /// Builds a topology from undirected edges, each expanded to both directions.
    pub fn from_undirected_edges(n_nodes: usize, degree: usize, edges: &[(usize, usize)]) -> Self {
        let mut pred = vec![Vec::with_capacity(degree); n_nodes];
        for &(a, b) in edges {
            pred[a].push(b);
            pred[b].push(a);
        }
        Self::from_pred_lists(degree, pred)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn pred(&self, node: usize) -> &[usize] {
        &self.pred[node]
    }

    pub fn pred_lists(&self) -> &[Vec<usize>] {
        &self.pred
    }

    pub fn n_edges(&self) -> usize {
        self.pred.iter().map(Vec::len).sum()
    }

    /// Directed edges `(n, m)`, meaning "m feeds n", in canonical order
    /// (by `n`, then by `m`). Per-edge arrays elsewhere use this order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.pred
            .iter()
            .enumerate()
            .flat_map(|(n, ps)| ps.iter().map(move |&m| (n, m)))
            .collect()
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        if self.pred.len() != self.n_nodes {
            out.push(Violation::NodeCount {
                found: self.pred.len(),
            });
        }
        let n_nodes = self.pred.len();
        let mut edge_set = HashSet::new();
        for (n, ps) in self.pred.iter().enumerate() {
            if ps.len() != self.degree {
                out.push(Violation::DegreeMismatch {
                    node: n,
                    found: ps.len(),
                });
            }
            let mut seen = HashSet::new();
            for &m in ps {
                if m >= n_nodes {
                    out.push(Violation::OutOfRange { node: n, pred: m });
                    continue;
                }
                if m == n {
                    out.push(Violation::SelfLoop { node: n });
                }
                if !seen.insert(m) {
                    out.push(Violation::DuplicatePredecessor { node: n, pred: m });
                }
                edge_set.insert((n, m));
            }
        }
        for &(n, m) in &edge_set {
            if n != m && !edge_set.contains(&(m, n)) {
                out.push(Violation::Asymmetric { node: n, pred: m });
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            out.sort_by_key(|v| format!("{v}"));
            Err(out)
        }
    }
}

fn random_index(stream: &mut Stream, upper_inclusive: usize) -> usize {
    stream.random_range(0..=upper_inclusive as u64) as usize
}

/// Draws a simple undirected `degree`-regular graph on `n_nodes` nodes with the
/// pairing (configuration) model, restarting from scratch whenever a pairing
/// produces a self-loop or a multi-edge.
pub fn generate_random_regular(
    n_nodes: usize,
    degree: usize,
    stream: &mut Stream,
) -> Result<Topology> {
    if n_nodes == 0 || degree == 0 {
        return Err(Error::param("n_nodes and degree must be positive"));
    }
    if degree >= n_nodes {
        return Err(Error::param(format!(
            "degree {degree} must be less than n_nodes {n_nodes}"
        )));
    }
    if (n_nodes * degree) % 2 != 0 {
        return Err(Error::param(format!(
            "n_nodes * degree = {} is odd; no regular graph exists",
            n_nodes * degree
        )));
    }

    let mut points: Vec<usize> = Vec::with_capacity(n_nodes * degree);
    let mut edges = Vec::with_capacity(n_nodes * degree / 2);
    let mut seen = HashSet::with_capacity(n_nodes * degree / 2);
    'restart: for _ in 0..MAX_PAIRING_RESTARTS {
        points.clear();
        points.extend((0..n_nodes).flat_map(|n| std::iter::repeat_n(n, degree)));
        // Fisher-Yates over u64 draws keeps the sequence platform-independent.
        for k in (1..points.len()).rev() {
            let j = random_index(stream, k);
            points.swap(k, j);
        }
        edges.clear();
        seen.clear();
        for pair in points.chunks_exact(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a == b || !seen.insert((a, b)) {
                continue 'restart;
            }
            edges.push((a, b));
        }
        return Ok(Topology::from_undirected_edges(n_nodes, degree, &edges));
    }
    Err(Error::Numerical(format!(
        "pairing model failed {MAX_PAIRING_RESTARTS} times for n_nodes={n_nodes}, degree={degree}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose, StreamIndex};

    fn rng(seed: u64) -> Stream {
        stream(seed, Purpose::Topology, StreamIndex::default())
    }

    #[test]
    fn four_node_cubic_graph_is_k4() {
        for seed in 0..20 {
            let t = generate_random_regular(4, 3, &mut rng(seed)).unwrap();
            for n in 0..4 {
                let expected: Vec<usize> = (0..4).filter(|&m| m != n).collect();
                assert_eq!(t.pred(n), expected.as_slice());
            }
            assert!(t.validate().is_ok());
        }
    }

    #[test]
    fn deterministic_given_stream() {
        let a = generate_random_regular(256, 3, &mut rng(11)).unwrap();
        let b = generate_random_regular(256, 3, &mut rng(11)).unwrap();
        assert_eq!(a, b);
        let c = generate_random_regular(256, 3, &mut rng(12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn infeasible_parameters_rejected() {
        assert!(matches!(
            generate_random_regular(5, 3, &mut rng(0)),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            generate_random_regular(3, 3, &mut rng(0)),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            generate_random_regular(0, 3, &mut rng(0)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn validate_reports_self_loop() {
        let t = Topology::from_pred_lists(3, vec![vec![0, 1, 2], vec![0, 2, 3], vec![0, 1, 3], vec![0, 1, 2]]);
        let v = t.validate().unwrap_err();
        assert!(v.iter().any(|v| v.to_string() == "self-loop at 0"));
    }

    #[test]
    fn validate_reports_degree_mismatch() {
        let t = Topology::from_pred_lists(3, vec![vec![1, 2, 3], vec![0, 2], vec![0, 1, 3], vec![0, 1, 2]]);
        let v = t.validate().unwrap_err();
        assert!(v.iter().any(|v| v.to_string() == "degree mismatch at 1 (2 predecessors)"));
        assert!(v.iter().any(|v| matches!(v, Violation::DegreeMismatch { node: 1, found: 2 })));
    }

    #[test]
    fn validate_reports_duplicate_and_asymmetry() {
        let t = Topology::from_pred_lists(2, vec![vec![1, 1], vec![2, 2], vec![0, 0]]);
        let v = t.validate().unwrap_err();
        assert!(v.iter().any(|v| matches!(v, Violation::DuplicatePredecessor { node: 0, pred: 1 })));
        assert!(v.iter().any(|v| matches!(v, Violation::Asymmetric { .. })));
    }

    #[test]
    fn edges_follow_pred_order() {
        let t = generate_random_regular(4, 3, &mut rng(3)).unwrap();
        let e = t.edges();
        assert_eq!(e.len(), 12);
        assert_eq!(e[0], (0, 1));
        assert_eq!(e[11], (3, 2));
    }
}
