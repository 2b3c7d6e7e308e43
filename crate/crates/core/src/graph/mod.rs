//! Graph data model.
//!
//! A [`Graph`] is immutable after construction: dense node features, a
//! symmetric CSR adjacency over undirected edges, per-node labels and the
//! train/val/test split. Every constructor path validates the invariants
//! (no self-loops, no duplicate edges, labels in range, disjoint splits).

mod io;
mod noise;
mod sbm;

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{load_graph, save_graph, EDGES_FILE, NODES_FILE, SPLITS_FILE};
pub use noise::{inject_label_noise, perturb_edges, EdgeNoiseSplit, NoiseKind, NoiseSpec};
pub use sbm::{expected_sbm_homophily, generate_sbm, SbmParams};

/// Node-id sets for training (labeled), validation and test.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    fn validate(&self, n_nodes: usize) -> Result<()> {
        let mut seen = HashSet::new();
        for (name, ids) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &id in ids {
                if id >= n_nodes {
                    return Err(Error::InvalidGraph(format!(
                        "{name} split references node {id} but graph has {n_nodes} nodes"
                    )));
                }
                if !seen.insert(id) {
                    return Err(Error::InvalidGraph(format!(
                        "node {id} appears more than once across splits"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Compressed sparse row adjacency. Stores both directions of every edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Csr {
    fn from_undirected(n_nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut degree = vec![0usize; n_nodes];
        for &(u, v) in edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(n_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut cursor = offsets[..n_nodes].to_vec();
        let mut targets = vec![0usize; offsets[n_nodes]];
        for &(u, v) in edges {
            targets[cursor[u]] = v;
            cursor[u] += 1;
            targets[cursor[v]] = u;
            cursor[v] += 1;
        }
        for i in 0..n_nodes {
            targets[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Csr { offsets, targets }
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.targets[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    /// Number of stored directed entries (twice the undirected edge count).
    pub fn nnz(&self) -> usize {
        self.targets.len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }
}

/// Orders an undirected pair as `(min, max)`.
pub fn canonical(u: usize, v: usize) -> (usize, usize) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    features: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
    /// Canonical undirected edges, `src < dst`, sorted.
    edges: Vec<(usize, usize)>,
    adjacency: Csr,
    splits: Splits,
}

impl Graph {
    /// Builds a graph from undirected edges given in either orientation.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        n_classes: usize,
        edges: Vec<(usize, usize)>,
        splits: Splits,
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n {
            return Err(Error::InvalidGraph(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if n_classes == 0 {
            return Err(Error::InvalidGraph("n_classes must be positive".into()));
        }
        if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(Error::InvalidGraph(format!(
                "node {node} has label {label} >= n_classes {n_classes}"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGraph("features contain non-finite values".into()));
        }
        let mut canon = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) has an endpoint out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
            }
            canon.push(canonical(u, v));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        splits.validate(n)?;
        let adjacency = Csr::from_undirected(n, &canon);
        Ok(Graph {
            features,
            labels,
            n_classes,
            edges: canon,
            adjacency,
            splits,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Canonical undirected edges, `src < dst`, sorted ascending.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacency(&self) -> &Csr {
        &self.adjacency
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency.degree(node)
    }

    /// Boolean mask over nodes marking the training (labeled) split.
    pub fn train_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_nodes()];
        for &i in &self.splits.train {
            mask[i] = true;
        }
        mask
    }

    /// Same nodes, features and split with a different edge set.
    pub fn with_edges(&self, edges: Vec<(usize, usize)>) -> Result<Graph> {
        Graph::new(
            self.features.clone(),
            self.labels.clone(),
            self.n_classes,
            edges,
            self.splits.clone(),
        )
    }

    /// Same structure with a different label vector.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Graph> {
        Graph::new(
            self.features.clone(),
            labels,
            self.n_classes,
            self.edges.clone(),
            self.splits.clone(),
        )
    }

    /// Same graph with a different split.
    pub fn with_splits(&self, splits: Splits) -> Result<Graph> {
        Graph::new(
            self.features.clone(),
            self.labels.clone(),
            self.n_classes,
            self.edges.clone(),
            splits,
        )
    }

    /// Edge homophily of this graph under `labels` (one entry per node).
    pub fn homophily_ratio(&self, labels: &[usize]) -> Homophily {
        edge_homophily(&self.edges, labels)
    }
}

/// Fraction of undirected edges whose endpoints share a label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homophily {
    pub ratio: f64,
    /// Set when the edge set was empty; `ratio` is then 0.
    pub empty: bool,
}

/// Homophily over an explicit undirected edge list (each edge listed once).
pub fn edge_homophily(edges: &[(usize, usize)], labels: &[usize]) -> Homophily {
    if edges.is_empty() {
        log::warn!("homophily of an empty edge set is reported as 0");
        return Homophily {
            ratio: 0.0,
            empty: true,
        };
    }
    let intra = edges
        .iter()
        .filter(|&&(u, v)| labels[u] == labels[v])
        .count();
    Homophily {
        ratio: intra as f64 / edges.len() as f64,
        empty: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize) -> Vec<(usize, usize)> {
        (0..n).map(|i| (i, (i + 1) % n)).collect()
    }

    fn graph(n: usize, edges: Vec<(usize, usize)>, labels: Vec<usize>, c: usize) -> Graph {
        Graph::new(Array2::zeros((n, 2)), labels, c, edges, Splits::default()).unwrap()
    }

    #[test]
    fn csr_stores_both_directions() {
        let g = graph(3, vec![(1, 0)], vec![0, 0, 0], 1);
        assert_eq!(g.n_edges(), 1);
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(g.adjacency().neighbors(0), &[1]);
        assert_eq!(g.adjacency().neighbors(1), &[0]);
        assert_eq!(g.adjacency().nnz(), 2);
        assert!(g.adjacency().neighbors(2).is_empty());
    }

    #[test]
    fn rejects_invariant_violations() {
        let feats = || Array2::zeros((3, 1));
        let none = Splits::default;
        assert!(Graph::new(feats(), vec![0; 3], 1, vec![(0, 0)], none()).is_err());
        assert!(Graph::new(feats(), vec![0; 3], 1, vec![(0, 1), (1, 0)], none()).is_err());
        assert!(Graph::new(feats(), vec![0; 3], 1, vec![(0, 3)], none()).is_err());
        assert!(Graph::new(feats(), vec![0, 0, 2], 2, vec![], none()).is_err());
        let overlapping = Splits {
            train: vec![0],
            val: vec![0],
            test: vec![],
        };
        assert!(Graph::new(feats(), vec![0; 3], 1, vec![], overlapping).is_err());
    }

    #[test]
    fn homophily_all_same_class() {
        let g = graph(5, cycle(5), vec![2; 5], 3);
        assert_eq!(g.homophily_ratio(g.labels()).ratio, 1.0);
    }

    #[test]
    fn homophily_five_cycle() {
        let labels = vec![0, 0, 1, 1, 0];
        let g = graph(5, cycle(5), labels.clone(), 2);
        // intra edges: (0,1), (2,3), (4,0)
        assert!((g.homophily_ratio(&labels).ratio - 0.6).abs() < 1e-15);
    }

    #[test]
    fn homophily_bipartite_is_zero() {
        let edges = vec![(0, 2), (0, 3), (1, 2), (1, 3)];
        let labels = vec![0, 0, 1, 1];
        let g = graph(4, edges, labels.clone(), 2);
        assert_eq!(g.homophily_ratio(&labels).ratio, 0.0);
    }

    #[test]
    fn homophily_empty_edges_flagged() {
        let g = graph(3, vec![], vec![0, 1, 0], 2);
        let h = g.homophily_ratio(g.labels());
        assert!(h.empty);
        assert_eq!(h.ratio, 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_labeled_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<usize>)> {
            (2usize..12).prop_flat_map(|n| {
                let pairs: Vec<(usize, usize)> = (0..n)
                    .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
                    .collect();
                let m = pairs.len();
                (
                    Just(n),
                    proptest::sample::subsequence(pairs, 1..=m),
                    proptest::collection::vec(0usize..4, n),
                )
            })
        }

        proptest! {
            #[test]
            fn homophily_bounded_and_permutation_invariant(
                (n, edges, labels) in arb_labeled_graph(),
                shift in 1usize..4,
            ) {
                let g = graph(n, edges, labels.clone(), 4);
                let h = g.homophily_ratio(&labels).ratio;
                prop_assert!((0.0..=1.0).contains(&h));
                let relabeled: Vec<usize> = labels.iter().map(|l| (l + shift) % 4).collect();
                prop_assert_eq!(h, g.homophily_ratio(&relabeled).ratio);
                let all_intra = g.edges().iter().all(|&(u, v)| labels[u] == labels[v]);
                prop_assert_eq!(h == 1.0, all_intra);
            }
        }
    }
}
