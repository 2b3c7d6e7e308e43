//! Structural sparsification network.
//!
//! Edge keep-probabilities are amortized through a shared embedding
//! `z_i = W x_i`: `lambda_ij = sigmoid(<z_i, z_j>)`. They are fused with the
//! original adjacency, `M = (1 - alpha) * lambda + alpha`, and a discrete
//! subgraph is drawn per undirected edge with a single Gumbel variate:
//!
//! ```text
//! soft = sigmoid((ln M + G) / tau),   hard = floor(soft + 1/2),   G ~ Gumbel(0, 1)
//! ```
//!
//! `P(hard = 1) = P(ln M + G >= 0) = 1 - exp(-M)`, independent of `tau`.
//! Gradients pass the hard sample straight through: forward value `hard`,
//! derivative that of `soft`.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::{glorot, ops::sigmoid};
use crate::{Error, Result};

/// Lower clamp on the fused strategy before taking its logarithm.
pub const MIN_STRATEGY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Sparsifier {
    /// `W` in `R^{F x d}`.
    pub embed: Array2<f64>,
    /// Fusion factor `alpha` in `[0, 1]`.
    pub fusion: f64,
    /// Gumbel temperature `tau > 0`.
    pub temperature: f64,
}

/// One discrete sample over the original undirected edge set.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsifiedSubgraph {
    pub edges: Vec<(usize, usize)>,
    pub lambda: Vec<f64>,
    /// Fused strategy after clamping to `[MIN_STRATEGY, 1]`.
    pub strategy: Vec<f64>,
    pub noise: Vec<f64>,
    pub soft: Vec<f64>,
    pub hard: Vec<bool>,
    /// Number of edges whose strategy hit the lower clamp.
    pub clamped: usize,
    temperature: f64,
    fusion: f64,
}

impl SparsifiedSubgraph {
    /// Every edge kept, soft values 1. Used for warm-up on the original graph.
    pub fn full(edges: &[(usize, usize)]) -> Self {
        let m = edges.len();
        SparsifiedSubgraph {
            edges: edges.to_vec(),
            lambda: vec![1.0; m],
            strategy: vec![1.0; m],
            noise: vec![0.0; m],
            soft: vec![1.0; m],
            hard: vec![true; m],
            clamped: 0,
            temperature: 1.0,
            fusion: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn hard_count(&self) -> usize {
        self.hard.iter().filter(|&&h| h).count()
    }

    /// The sampled edge set `E'_g`.
    pub fn kept_edges(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .zip(&self.hard)
            .filter_map(|(&e, &h)| h.then_some(e))
            .collect()
    }

    /// Forward values of the straight-through estimator (the hard sample).
    pub fn straight_through(&self) -> Vec<f64> {
        self.hard.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect()
    }

    /// Writes `src dst soft hard` rows with a header line.
    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("src\tdst\tsoft\thard\n");
        for ((&(u, v), s), &h) in self.edges.iter().zip(&self.soft).zip(&self.hard) {
            writeln!(out, "{u}\t{v}\t{s}\t{}", u8::from(h)).unwrap();
        }
        let path = path.as_ref();
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// `M = (1 - alpha) * lambda + alpha` on existing edges.
pub fn fuse(lambda: &[f64], alpha: f64) -> Vec<f64> {
    lambda.iter().map(|&l| (1.0 - alpha) * l + alpha).collect()
}

/// Standard Gumbel draws, one per edge, in edge order.
pub fn gumbel_noise(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break -(-u.ln()).ln();
            }
        })
        .collect()
}

/// Draws the discrete subgraph from a strategy with explicit Gumbel noise.
pub fn sample_with_noise(
    edges: &[(usize, usize)],
    lambda: Vec<f64>,
    strategy: &[f64],
    noise: Vec<f64>,
    temperature: f64,
    fusion: f64,
) -> SparsifiedSubgraph {
    let mut clamped = 0;
    let strategy: Vec<f64> = strategy
        .iter()
        .map(|&m| {
            if m < MIN_STRATEGY {
                clamped += 1;
                MIN_STRATEGY
            } else {
                m.min(1.0)
            }
        })
        .collect();
    if clamped > 0 {
        log::debug!("{clamped} edge strategies clamped to {MIN_STRATEGY}");
    }
    let soft: Vec<f64> = strategy
        .iter()
        .zip(&noise)
        .map(|(&m, &g)| sigmoid((m.ln() + g) / temperature))
        .collect();
    let hard = soft.iter().map(|&s| (s + 0.5).floor() >= 1.0).collect();
    SparsifiedSubgraph {
        edges: edges.to_vec(),
        lambda,
        strategy,
        noise,
        soft,
        hard,
        clamped,
        temperature,
        fusion,
    }
}

/// Samples from a fused strategy `M` with fresh noise derived from `seed`.
pub fn gumbel_sample(edges: &[(usize, usize)], strategy: &[f64], temperature: f64, seed: u64) -> SparsifiedSubgraph {
    let noise = gumbel_noise(edges.len(), seed);
    sample_with_noise(edges, strategy.to_vec(), strategy, noise, temperature, 0.0)
}

impl Sparsifier {
    pub fn new(in_dim: usize, hidden: usize, fusion: f64, temperature: f64, rng: &mut impl Rng) -> Result<Self> {
        let s = Sparsifier {
            embed: glorot(hidden, in_dim, in_dim, hidden, rng),
            fusion,
            temperature,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fusion) {
            return Err(Error::InvalidParameter(format!("fusion {} outside [0, 1]", self.fusion)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if self.embed.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sparsifier embedding".into()));
        }
        Ok(())
    }

    /// Node embeddings `Z = X W^T`, one row per node.
    pub fn embeddings(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.embed.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "features have {} columns, sparsifier expects {}",
                x.ncols(),
                self.embed.ncols()
            )));
        }
        Ok(x.dot(&self.embed.t()))
    }

    /// `lambda_ij = sigmoid(<W x_i, W x_j>)` for each listed edge.
    pub fn edge_probs(&self, x: &Array2<f64>, edges: &[(usize, usize)]) -> Result<Vec<f64>> {
        let z = self.embeddings(x)?;
        Ok(edges
            .iter()
            .map(|&(i, j)| sigmoid(z.row(i).dot(&z.row(j))))
            .collect())
    }

    /// Fused strategy `M` over `edges`.
    pub fn strategy(&self, x: &Array2<f64>, edges: &[(usize, usize)]) -> Result<Vec<f64>> {
        Ok(fuse(&self.edge_probs(x, edges)?, self.fusion))
    }

    pub fn sample(&self, x: &Array2<f64>, edges: &[(usize, usize)], seed: u64) -> Result<SparsifiedSubgraph> {
        self.sample_frozen(x, edges, gumbel_noise(edges.len(), seed))
    }

    /// Samples with caller-supplied Gumbel noise (one value per edge).
    pub fn sample_frozen(&self, x: &Array2<f64>, edges: &[(usize, usize)], noise: Vec<f64>) -> Result<SparsifiedSubgraph> {
        if noise.len() != edges.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} noise values for {} edges",
                noise.len(),
                edges.len()
            )));
        }
        let lambda = self.edge_probs(x, edges)?;
        let m = fuse(&lambda, self.fusion);
        Ok(sample_with_noise(edges, lambda, &m, noise, self.temperature, self.fusion))
    }

    /// Gradient with respect to `W` given `d objective / d edge value`.
    ///
    /// Edge values are straight-through (or soft) samples; either way the
    /// derivative used is that of `soft`. Clamped strategies pass no gradient.
    pub fn backward(&self, x: &Array2<f64>, sub: &SparsifiedSubgraph, d_values: &[f64]) -> Result<Array2<f64>> {
        if d_values.len() != sub.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} edge gradients for {} edges",
                d_values.len(),
                sub.len()
            )));
        }
        let z = self.embeddings(x)?;
        let mut dz = Array2::<f64>::zeros(z.raw_dim());
        for (e, &(i, j)) in sub.edges.iter().enumerate() {
            let m = sub.strategy[e];
            if m <= MIN_STRATEGY || d_values[e] == 0.0 {
                continue;
            }
            let s = sub.soft[e];
            let d_strategy = d_values[e] * s * (1.0 - s) / (sub.temperature * m);
            let lam = sub.lambda[e];
            let d_logit = d_strategy * (1.0 - sub.fusion) * lam * (1.0 - lam);
            if d_logit == 0.0 {
                continue;
            }
            let zi = z.row(i).to_owned();
            let zj = z.row(j).to_owned();
            dz.row_mut(i).scaled_add(d_logit, &zj);
            dz.row_mut(j).scaled_add(d_logit, &zi);
        }
        Ok(dz.t().dot(x))
    }
}
