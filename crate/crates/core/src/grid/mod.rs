//! Electrical network topology, bus-admittance matrix and nodal power injections.

mod matpower;

pub use matpower::{parse_matpower_case, MatpowerCase};

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One admittance entry of a graph document. `from == to` denotes a shunt to ground.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: u32,
    pub to: u32,
    /// Conductance in per-unit siemens.
    pub g: f64,
    /// Susceptance in per-unit siemens.
    pub b: f64,
}

impl Edge {
    pub fn series(from: u32, to: u32, y: Complex64) -> Self {
        Self { from, to, g: y.re, b: y.im }
    }

    pub fn shunt(node: u32, y: Complex64) -> Self {
        Self { from: node, to: node, g: y.re, b: y.im }
    }

    pub fn admittance(&self) -> Complex64 {
        Complex64::new(self.g, self.b)
    }
}

/// JSON exchange form of a [`NetworkGraph`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphDocument {
    pub nodes: Vec<u32>,
    pub edges: Vec<Edge>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Neighbor {
    index: usize,
    y: Complex64,
}

/// Network graph with complex edge admittances.
///
/// Nodes are kept in ascending identifier order; that order fixes the layout of
/// every vector and matrix derived from the graph. Series edges are undirected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphDocument", into = "GraphDocument")]
pub struct NetworkGraph {
    nodes: Vec<u32>,
    shunts: Vec<Complex64>,
    neighbors: Vec<Vec<Neighbor>>,
}

impl NetworkGraph {
    pub fn new(nodes: impl IntoIterator<Item = u32>, edges: &[Edge]) -> Result<Self> {
        let set: BTreeSet<u32> = nodes.into_iter().collect();
        if set.is_empty() {
            return Err(Error::InvalidInput("network has no nodes".into()));
        }
        let nodes: Vec<u32> = set.into_iter().collect();
        let index: BTreeMap<u32, usize> = nodes.iter().enumerate().map(|(k, &id)| (id, k)).collect();

        let mut shunts = vec![Complex64::new(0.0, 0.0); nodes.len()];
        let mut neighbors = vec![Vec::new(); nodes.len()];
        let mut seen = BTreeSet::new();
        for edge in edges {
            let (Some(&i), Some(&j)) = (index.get(&edge.from), index.get(&edge.to)) else {
                return Err(Error::InvalidInput(format!(
                    "edge ({}, {}) references an unknown node",
                    edge.from, edge.to
                )));
            };
            if !edge.g.is_finite() || !edge.b.is_finite() {
                return Err(Error::NonFinite("edge admittance"));
            }
            if edge.g < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "edge ({}, {}) has negative conductance {}",
                    edge.from, edge.to, edge.g
                )));
            }
            let key = (edge.from.min(edge.to), edge.from.max(edge.to));
            if !seen.insert(key) {
                return Err(Error::DuplicateEdge(key.0, key.1));
            }
            let y = edge.admittance();
            if i == j {
                shunts[i] = y;
            } else {
                neighbors[i].push(Neighbor { index: j, y });
                neighbors[j].push(Neighbor { index: i, y });
            }
        }
        for list in &mut neighbors {
            list.sort_by_key(|n| n.index);
        }
        Ok(Self { nodes, shunts, neighbors })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node identifiers in layout order.
    pub fn nodes(&self) -> &[u32] {
        &self.nodes
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.nodes.binary_search(&id).ok()
    }

    pub fn shunt(&self, index: usize) -> Complex64 {
        self.shunts[index]
    }

    /// Series neighbors of the node at `index` with the connecting admittance.
    pub fn neighbors(&self, index: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.neighbors[index].iter().map(|n| (n.index, n.y))
    }

    /// Edge list with each series edge reported once (`from < to`) and shunts as self-edges.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            if self.shunts[i] != Complex64::new(0.0, 0.0) {
                out.push(Edge::shunt(self.nodes[i], self.shunts[i]));
            }
            for n in &self.neighbors[i] {
                if n.index > i {
                    out.push(Edge::series(self.nodes[i], self.nodes[n.index], n.y));
                }
            }
        }
        out
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument { nodes: self.nodes.clone(), edges: self.edges() }
    }
}

impl TryFrom<GraphDocument> for NetworkGraph {
    type Error = Error;

    fn try_from(doc: GraphDocument) -> Result<Self> {
        NetworkGraph::new(doc.nodes, &doc.edges)
    }
}

impl From<NetworkGraph> for GraphDocument {
    fn from(graph: NetworkGraph) -> Self {
        graph.to_document()
    }
}

/// Dense complex bus-admittance matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmittanceMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl AdmittanceMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// `Y_ii` is the shunt plus all incident series admittances, `Y_ij = -y_ij`.
pub fn build_admittance(graph: &NetworkGraph) -> AdmittanceMatrix {
    let n = graph.len();
    let mut data = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        let mut diag = graph.shunt(i);
        for (j, y) in graph.neighbors(i) {
            diag += y;
            data[i * n + j] = -y;
        }
        data[i * n + i] = diag;
    }
    AdmittanceMatrix { n, data }
}

/// Voltage magnitudes and angles relative to the global reference frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusElectricalState {
    pub v: Vec<f64>,
    pub delta: Vec<f64>,
}

/// Active and reactive power injected at every node, in trigonometric form.
pub fn power_injections(state: &BusElectricalState, graph: &NetworkGraph) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = graph.len();
    for (len, what) in [(state.v.len(), "voltage magnitudes"), (state.delta.len(), "voltage angles")] {
        if len != n {
            return Err(Error::InvalidInput(format!("{what}: expected {n} entries, got {len}")));
        }
    }
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    injections_into(graph, &state.v, &state.delta, &mut p, &mut q);
    Ok((p, q))
}

/// Allocation-free kernel used by the dynamics right-hand side.
pub(crate) fn injections_into(graph: &NetworkGraph, v: &[f64], delta: &[f64], p: &mut [f64], q: &mut [f64]) {
    for i in 0..graph.len() {
        let vi = v[i];
        let shunt = graph.shunts[i];
        let mut pi = vi * vi * shunt.re;
        let mut qi = -vi * vi * shunt.im;
        for nb in &graph.neighbors[i] {
            let (g, b) = (nb.y.re, nb.y.im);
            let vj = v[nb.index];
            let (s, c) = (delta[i] - delta[nb.index]).sin_cos();
            pi += vi * (vi * g - vj * (g * c + b * s));
            qi -= vi * (vi * b + vj * (g * s - b * c));
        }
        p[i] = pi;
        q[i] = qi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn two_node_admittance() {
        let g = NetworkGraph::new([1, 2], &[Edge::series(1, 2, c(0.5, -2.0))]).unwrap();
        let y = build_admittance(&g);
        assert_eq!(y.get(0, 0), c(0.5, -2.0));
        assert_eq!(y.get(0, 1), c(-0.5, 2.0));
        assert_eq!(y.get(1, 0), c(-0.5, 2.0));
        assert_eq!(y.get(1, 1), c(0.5, -2.0));
    }

    #[test]
    fn shunt_only() {
        let g = NetworkGraph::new([7], &[Edge::shunt(7, c(0.0, 0.1))]).unwrap();
        let y = build_admittance(&g);
        assert_eq!(y.dim(), 1);
        assert_eq!(y.get(0, 0), c(0.0, 0.1));
    }

    #[test]
    fn chain_matches_per_element_sum() {
        let edges = [
            Edge::series(1, 2, c(0.3, -4.0)),
            Edge::series(2, 3, c(0.1, -7.5)),
            Edge::shunt(2, c(0.05, 0.2)),
            Edge::shunt(3, c(0.0, -0.1)),
        ];
        let g = NetworkGraph::new([3, 1, 2], &edges).unwrap();
        let y = build_admittance(&g);
        let ids = [1u32, 2, 3];
        for (a, &ia) in ids.iter().enumerate() {
            for (b, &ib) in ids.iter().enumerate() {
                let mut expected = c(0.0, 0.0);
                for e in &edges {
                    let touches = e.from == ia || e.to == ia;
                    if a == b && touches {
                        expected += e.admittance();
                    } else if a != b && ((e.from == ia && e.to == ib) || (e.from == ib && e.to == ia)) {
                        expected -= e.admittance();
                    }
                }
                assert!((y.get(a, b) - expected).norm() < 1e-14, "entry ({a},{b})");
            }
        }
    }

    #[test]
    fn duplicate_edges_rejected() {
        let err = NetworkGraph::new([1, 2], &[Edge::series(1, 2, c(0.0, -1.0)), Edge::series(2, 1, c(0.0, -2.0))]);
        assert!(matches!(err, Err(Error::DuplicateEdge(1, 2))));
        let err = NetworkGraph::new([1], &[Edge::shunt(1, c(0.0, 1.0)), Edge::shunt(1, c(0.0, 1.0))]);
        assert!(matches!(err, Err(Error::DuplicateEdge(1, 1))));
    }

    #[test]
    fn invalid_edges_rejected() {
        assert!(NetworkGraph::new([1, 2], &[Edge::series(1, 3, c(0.0, -1.0))]).is_err());
        assert!(NetworkGraph::new([1, 2], &[Edge::series(1, 2, c(-0.1, -1.0))]).is_err());
        assert!(NetworkGraph::new(Vec::<u32>::new(), &[]).is_err());
    }

    #[test]
    fn hand_evaluated_two_node_injection() {
        let g = NetworkGraph::new([1, 2], &[Edge::series(1, 2, c(0.0, -1.0))]).unwrap();
        let state = BusElectricalState { v: vec![1.0, 1.0], delta: vec![FRAC_PI_2, 0.0] };
        let (p, q) = power_injections(&state, &g).unwrap();
        let tol = 1e-14;
        assert!((p[0] - 1.0).abs() < tol && (p[1] + 1.0).abs() < tol, "{p:?}");
        assert!((q[0] - 1.0).abs() < tol && (q[1] - 1.0).abs() < tol, "{q:?}");
    }

    #[test]
    fn flat_lossless_network_injects_nothing() {
        let g = NetworkGraph::new(
            [1, 2, 3],
            &[Edge::series(1, 2, c(0.0, -3.0)), Edge::series(2, 3, c(0.0, -5.0)), Edge::series(1, 3, c(0.0, -1.0))],
        )
        .unwrap();
        let state = BusElectricalState { v: vec![1.02; 3], delta: vec![0.4; 3] };
        let (p, _) = power_injections(&state, &g).unwrap();
        assert!(p.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn length_mismatch_rejected() {
        let g = NetworkGraph::new([1, 2], &[]).unwrap();
        let state = BusElectricalState { v: vec![1.0], delta: vec![0.0, 0.0] };
        assert!(power_injections(&state, &g).is_err());
    }

    #[test]
    fn graph_json_roundtrip() {
        let g = NetworkGraph::new([2, 1], &[Edge::series(2, 1, c(0.2, -4.0)), Edge::shunt(1, c(0.0, 0.3))]).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        let back: NetworkGraph = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
    }
}
