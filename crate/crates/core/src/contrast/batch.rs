use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// A mini-batch of sampled-subgraph edges with per-edge negative nodes.
///
/// `negatives[b]` lists the negatives of `edges[b]`. In sampled mode every
/// entry has exactly `K` nodes; in enumerate mode the lists vary in length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeBatch {
    pub edges: Vec<(usize, usize)>,
    pub negatives: Vec<Vec<usize>>,
}

impl EdgeBatch {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Sorted, deduplicated endpoint nodes `V_b`.
    pub fn endpoints(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> = self.edges.iter().flat_map(|&(i, j)| [i, j]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }
}

/// Draws nodes with probability proportional to their degree in `E'_g`.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    dist: WeightedIndex<usize>,
    /// Sorted neighbor lists in `E'_g`, kept only when exclusion is on.
    neighbors: Option<Vec<Vec<usize>>>,
}

const EXCLUSION_TRIES: usize = 32;

impl NegativeSampler {
    pub fn new(kept_edges: &[(usize, usize)], n_nodes: usize, exclude_neighbors: bool) -> Result<Self> {
        if kept_edges.is_empty() {
            return Err(Error::DegenerateSubgraph("sparsified edge set is empty".into()));
        }
        let mut degree = vec![0usize; n_nodes];
        for &(i, j) in kept_edges {
            degree[i] += 1;
            degree[j] += 1;
        }
        let neighbors = exclude_neighbors.then(|| {
            let mut adj = vec![Vec::new(); n_nodes];
            for &(i, j) in kept_edges {
                adj[i].push(j);
                adj[j].push(i);
            }
            for list in &mut adj {
                list.sort_unstable();
            }
            adj
        });
        let dist = WeightedIndex::new(&degree).map_err(|e| Error::DegenerateSubgraph(e.to_string()))?;
        Ok(NegativeSampler { dist, neighbors })
    }

    pub fn draw(&self, rng: &mut impl Rng) -> usize {
        self.dist.sample(rng)
    }

    /// `k` negatives for edge `(i, j)`. With exclusion enabled, endpoints and
    /// neighbors of `i` are rejected for a bounded number of retries, after
    /// which the unrestricted draw is accepted.
    pub fn draw_for(&self, i: usize, j: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
        (0..k)
            .map(|_| match &self.neighbors {
                None => self.draw(rng),
                Some(adj) => {
                    let mut candidate = self.draw(rng);
                    for _ in 0..EXCLUSION_TRIES {
                        if candidate != i && candidate != j && adj[i].binary_search(&candidate).is_err() {
                            break;
                        }
                        candidate = self.draw(rng);
                    }
                    candidate
                }
            })
            .collect()
    }
}

/// Samples one batch: `batch_size` edges uniformly without replacement (all
/// edges when fewer exist) and `k` degree-proportional negatives per edge.
pub fn sample_edge_batch(
    kept_edges: &[(usize, usize)],
    n_nodes: usize,
    batch_size: usize,
    k: usize,
    seed: u64,
) -> Result<EdgeBatch> {
    if batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    let sampler = NegativeSampler::new(kept_edges, n_nodes, false)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<(usize, usize)> = if kept_edges.len() <= batch_size {
        kept_edges.to_vec()
    } else {
        rand::seq::index::sample(&mut rng, kept_edges.len(), batch_size)
            .into_iter()
            .map(|e| kept_edges[e])
            .collect()
    };
    let negatives = edges.iter().map(|&(i, j)| sampler.draw_for(i, j, k, &mut rng)).collect();
    Ok(EdgeBatch { edges, negatives })
}

/// Shuffles `E'_g` and partitions it into consecutive batches of at most
/// `batch_size` edges: one epoch's worth of batches.
pub fn epoch_batches(
    kept_edges: &[(usize, usize)],
    sampler: &NegativeSampler,
    batch_size: usize,
    k: usize,
    rng: &mut impl Rng,
) -> Vec<EdgeBatch> {
    let mut order = kept_edges.to_vec();
    order.shuffle(rng);
    order
        .chunks(batch_size.max(1))
        .map(|chunk| {
            let negatives = chunk.iter().map(|&(i, j)| sampler.draw_for(i, j, k, rng)).collect();
            EdgeBatch {
                edges: chunk.to_vec(),
                negatives,
            }
        })
        .collect()
}

/// Diagnostic batch: every kept edge, negatives = every node adjacent (in
/// `E'_g`) to neither endpoint, excluding the endpoints themselves.
pub fn enumerate_batch(kept_edges: &[(usize, usize)], n_nodes: usize) -> EdgeBatch {
    let mut adj = vec![vec![false; n_nodes]; n_nodes];
    for &(i, j) in kept_edges {
        adj[i][j] = true;
        adj[j][i] = true;
    }
    let negatives = kept_edges
        .iter()
        .map(|&(i, j)| {
            (0..n_nodes)
                .filter(|&k| k != i && k != j && !adj[i][k] && !adj[j][k])
                .collect()
        })
        .collect();
    EdgeBatch {
        edges: kept_edges.to_vec(),
        negatives,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(n: usize) -> Vec<(usize, usize)> {
        (1..n).map(|leaf| (0, leaf)).collect()
    }

    #[test]
    fn star_center_drawn_half_the_time() {
        let n = 11;
        let sampler = NegativeSampler::new(&star(n), n, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 100_000;
        let center = (0..draws).filter(|_| sampler.draw(&mut rng) == 0).count();
        // (n - 1) / (2 (n - 1)) = 0.5
        assert!((center as f64 / draws as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn small_edge_set_is_exhausted_exactly_once() {
        let edges = star(6);
        let batch = sample_edge_batch(&edges, 6, 100, 3, 0).unwrap();
        assert_eq!(batch.edges, edges);
        assert!(batch.negatives.iter().all(|n| n.len() == 3));
    }

    #[test]
    fn batch_is_without_replacement() {
        let edges: Vec<_> = (0..50).map(|i| (i, i + 1)).collect();
        let batch = sample_edge_batch(&edges, 51, 20, 1, 4).unwrap();
        let mut seen = batch.edges.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 20);
        assert_eq!(batch.endpoints().len() >= 20, true);
    }

    #[test]
    fn empty_subgraph_is_degenerate() {
        assert!(matches!(
            sample_edge_batch(&[], 3, 4, 1, 0),
            Err(Error::DegenerateSubgraph(_))
        ));
    }

    #[test]
    fn epoch_covers_every_edge_once() {
        let edges: Vec<_> = (0..23).map(|i| (i, i + 1)).collect();
        let sampler = NegativeSampler::new(&edges, 24, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batches = epoch_batches(&edges, &sampler, 5, 2, &mut rng);
        assert_eq!(batches.len(), 5);
        let mut all: Vec<_> = batches.iter().flat_map(|b| b.edges.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, edges);
    }

    #[test]
    fn exclusion_avoids_endpoints_when_feasible() {
        let edges = vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)];
        let sampler = NegativeSampler::new(&edges, 6, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            for k in sampler.draw_for(0, 1, 4, &mut rng) {
                assert!(![0, 1, 5].contains(&k));
            }
        }
    }

    #[test]
    fn enumerate_mode_negatives() {
        // path 0-1-2-3: for edge (0,1) nodes adjacent to neither are {3}
        let edges = vec![(0, 1), (1, 2), (2, 3)];
        let batch = enumerate_batch(&edges, 5);
        assert_eq!(batch.negatives[0], vec![3, 4]);
        assert_eq!(batch.negatives[1], vec![4]);
        assert_eq!(batch.negatives[2], vec![0, 4]);
    }
}
