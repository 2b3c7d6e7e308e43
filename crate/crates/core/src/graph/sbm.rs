use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Graph, Splits};
use crate::{Error, Result};

/// Planted-partition stochastic block model with Gaussian class clusters.
///
/// Node `i` belongs to class `i / (nodes / classes)`. Class `c` has the unit
/// mean vector `e_c` in `R^dim`, and every node adds isotropic Gaussian noise
/// with standard deviation `feature_noise` per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmParams {
    pub nodes: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub dim: usize,
    pub feature_noise: f64,
    pub seed: u64,
    #[serde(default = "default_train_per_class")]
    pub train_per_class: usize,
    #[serde(default = "default_val_per_class")]
    pub val_per_class: usize,
}

fn default_train_per_class() -> usize {
    20
}

fn default_val_per_class() -> usize {
    60
}

impl SbmParams {
    pub fn new(nodes: usize, classes: usize, p_in: f64, p_out: f64, dim: usize, feature_noise: f64, seed: u64) -> Self {
        SbmParams {
            nodes,
            classes,
            p_in,
            p_out,
            dim,
            feature_noise,
            seed,
            train_per_class: default_train_per_class(),
            val_per_class: default_val_per_class(),
        }
    }

    /// Overrides the per-class train and validation counts.
    pub fn with_split_sizes(mut self, train_per_class: usize, val_per_class: usize) -> Self {
        self.train_per_class = train_per_class;
        self.val_per_class = val_per_class;
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.classes == 0 || self.nodes == 0 {
            return bad("nodes and classes must be positive".into());
        }
        if self.nodes % self.classes != 0 {
            return bad(format!(
                "nodes ({}) must be divisible by classes ({})",
                self.nodes, self.classes
            ));
        }
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) {
            return bad("p_in and p_out must lie in [0, 1]".into());
        }
        if self.p_out > self.p_in {
            return bad(format!("p_out ({}) must not exceed p_in ({})", self.p_out, self.p_in));
        }
        if self.dim < self.classes {
            return bad(format!(
                "dim ({}) must be at least classes ({}) for orthogonal class means",
                self.dim, self.classes
            ));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return bad("feature_noise must be a finite non-negative number".into());
        }
        let per_class = self.nodes / self.classes;
        if self.train_per_class + self.val_per_class > per_class {
            return bad(format!(
                "train_per_class + val_per_class exceeds class size {per_class}"
            ));
        }
        Ok(())
    }
}

/// Expected edge homophily of an SBM from pair counts.
pub fn expected_sbm_homophily(nodes: usize, classes: usize, p_in: f64, p_out: f64) -> f64 {
    let n = nodes as f64;
    let c = classes as f64;
    let intra = p_in * (n / c - 1.0);
    let inter = p_out * n * (c - 1.0) / c;
    if intra + inter == 0.0 {
        0.0
    } else {
        intra / (intra + inter)
    }
}

pub fn generate_sbm(params: &SbmParams) -> Result<Graph> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.nodes;
    let per_class = n / params.classes;
    let labels: Vec<usize> = (0..n).map(|i| i / per_class).collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] {
                params.p_in
            } else {
                params.p_out
            };
            if p > 0.0 && rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }

    let mut features = Array2::<f64>::zeros((n, params.dim));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        for v in row.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = params.feature_noise * z;
        }
        row[labels[i]] += 1.0;
    }

    let mut splits = Splits::default();
    for c in 0..params.classes {
        let mut members: Vec<usize> = (c * per_class..(c + 1) * per_class).collect();
        members.shuffle(&mut rng);
        let (train, rest) = members.split_at(params.train_per_class);
        let (val, test) = rest.split_at(params.val_per_class);
        splits.train.extend_from_slice(train);
        splits.val.extend_from_slice(val);
        splits.test.extend_from_slice(test);
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();

    Graph::new(features, labels, params.classes, edges, splits)
}
