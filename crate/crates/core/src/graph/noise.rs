//! Label and structure corruption protocols used in the robustness studies.

use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{canonical, Graph};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// Each training label moves to a uniformly chosen other class with total probability `r`.
    LabelSymmetric,
    /// Each training label `i` moves to `(i + 1) mod C` with probability `r`.
    LabelAsymmetric,
    /// Remove and add random edges, budget `r * |E|`.
    EdgePerturb,
}

/// How the `r * |E|` edge budget is divided between removals and additions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeNoiseSplit {
    /// `floor(r|E|/2)` removals and the same number of additions.
    #[default]
    Half,
    /// `floor(r|E|)` removals and the same number of additions.
    Each,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub ratio: f64,
    pub seed: u64,
    #[serde(default)]
    pub split: EdgeNoiseSplit,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, ratio: f64, seed: u64) -> Result<Self> {
        let spec = NoiseSpec {
            kind,
            ratio,
            seed,
            split: EdgeNoiseSplit::Half,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_split(mut self, split: EdgeNoiseSplit) -> Self {
        self.split = split;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(Error::InvalidParameter(format!(
                "noise ratio {} outside [0, 1]",
                self.ratio
            )));
        }
        Ok(())
    }
}

/// Corrupts training labels; validation and test labels are never touched.
pub fn inject_label_noise(g: &Graph, spec: &NoiseSpec) -> Result<Graph> {
    spec.validate()?;
    let c = g.n_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels = g.labels().to_vec();
    match spec.kind {
        NoiseKind::LabelSymmetric => {
            if c < 2 && spec.ratio > 0.0 {
                return Err(Error::InvalidParameter(
                    "symmetric label noise needs at least two classes".into(),
                ));
            }
            for &i in &g.splits().train {
                if rng.random::<f64>() < spec.ratio {
                    let offset = rng.random_range(1..c);
                    labels[i] = (labels[i] + offset) % c;
                }
            }
        }
        NoiseKind::LabelAsymmetric => {
            for &i in &g.splits().train {
                if rng.random::<f64>() < spec.ratio {
                    labels[i] = (labels[i] + 1) % c;
                }
            }
        }
        NoiseKind::EdgePerturb => {
            return Err(Error::InvalidParameter(
                "edge-perturb is not a label-noise kind".into(),
            ))
        }
    }
    g.with_labels(labels)
}

/// Removes uniformly chosen edges and adds the same number of uniformly chosen
/// non-edges, so `|E|` is preserved.
pub fn perturb_edges(g: &Graph, spec: &NoiseSpec) -> Result<Graph> {
    spec.validate()?;
    if spec.kind != NoiseKind::EdgePerturb {
        return Err(Error::InvalidParameter(format!(
            "{:?} is not the edge-perturb kind",
            spec.kind
        )));
    }
    let m = g.n_edges();
    let budget = spec.ratio * m as f64;
    let count = match spec.split {
        EdgeNoiseSplit::Half => (budget / 2.0).floor() as usize,
        EdgeNoiseSplit::Each => budget.floor() as usize,
    };
    if count == 0 {
        return Ok(g.clone());
    }
    let n = g.n_nodes();
    let total_pairs = n * n.saturating_sub(1) / 2;
    if total_pairs - m < count {
        return Err(Error::InvalidParameter(format!(
            "graph too dense: {count} additions requested but only {} non-edges exist",
            total_pairs - m
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut removed = index::sample(&mut rng, m, count).into_vec();
    removed.sort_unstable();
    let mut keep = vec![true; m];
    for r in removed {
        keep[r] = false;
    }
    let original: HashSet<(usize, usize)> = g.edges().iter().copied().collect();
    let mut edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .zip(&keep)
        .filter_map(|(&e, &k)| k.then_some(e))
        .collect();

    let mut added = HashSet::with_capacity(count);
    if count * 4 < total_pairs - m {
        while added.len() < count {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u == v {
                continue;
            }
            let e = canonical(u, v);
            if !original.contains(&e) {
                added.insert(e);
            }
        }
    } else {
        // Dense regime: enumerate candidates instead of rejection sampling.
        let mut candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|e| !original.contains(e))
            .collect();
        candidates.shuffle(&mut rng);
        added.extend(candidates.into_iter().take(count));
    }
    let mut added: Vec<_> = added.into_iter().collect();
    added.sort_unstable();
    edges.extend(added);
    g.with_edges(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmParams};

    fn sbm(seed: u64) -> Graph {
        generate_sbm(&SbmParams::new(500, 5, 0.04, 0.002, 8, 0.5, seed)).unwrap()
    }

    #[test]
    fn zero_ratio_is_identity() {
        let g = sbm(1);
        for kind in [NoiseKind::LabelSymmetric, NoiseKind::LabelAsymmetric] {
            assert_eq!(inject_label_noise(&g, &NoiseSpec::new(kind, 0.0, 4).unwrap()).unwrap(), g);
        }
        let spec = NoiseSpec::new(NoiseKind::EdgePerturb, 0.0, 4).unwrap();
        assert_eq!(perturb_edges(&g, &spec).unwrap(), g);
    }

    #[test]
    fn asymmetric_full_flip_shifts_every_train_label() {
        let g = sbm(2);
        let spec = NoiseSpec::new(NoiseKind::LabelAsymmetric, 1.0, 5).unwrap();
        let noisy = inject_label_noise(&g, &spec).unwrap();
        for &i in &g.splits().train {
            assert_eq!(noisy.labels()[i], (g.labels()[i] + 1) % 5);
        }
        for &i in g.splits().val.iter().chain(&g.splits().test) {
            assert_eq!(noisy.labels()[i], g.labels()[i]);
        }
    }

    #[test]
    fn symmetric_flip_rate_and_targets() {
        // 10^4 training nodes, 4 classes.
        let n = 12_000;
        let params = SbmParams {
            train_per_class: 2500,
            val_per_class: 250,
            ..SbmParams::new(n, 4, 0.0, 0.0, 4, 0.1, 0)
        };
        let g = generate_sbm(&params).unwrap();
        let spec = NoiseSpec::new(NoiseKind::LabelSymmetric, 0.4, 17).unwrap();
        let noisy = inject_label_noise(&g, &spec).unwrap();
        let train = &g.splits().train;
        let mut per_target = [0usize; 4];
        let mut flips = 0usize;
        for &i in train {
            if noisy.labels()[i] != g.labels()[i] {
                flips += 1;
                per_target[(noisy.labels()[i] + 4 - g.labels()[i]) % 4] += 1;
            }
        }
        let rate = flips as f64 / train.len() as f64;
        let se = (0.4f64 * 0.6 / train.len() as f64).sqrt();
        assert!((rate - 0.4).abs() <= 0.02, "rate {rate}");
        assert!((rate - 0.4).abs() <= 3.0 * se, "rate {rate} outside 3 sigma");
        // each of the C-1 other classes gets about a third of the flips
        for offset in 1..4 {
            let share = per_target[offset] as f64 / flips as f64;
            assert!((share - 1.0 / 3.0).abs() < 0.03, "offset {offset}: {share}");
        }
        assert_eq!(per_target[0], 0);
    }

    #[test]
    fn label_noise_rejects_edge_kind() {
        let g = sbm(3);
        let spec = NoiseSpec::new(NoiseKind::EdgePerturb, 0.1, 0).unwrap();
        assert!(inject_label_noise(&g, &spec).is_err());
        let spec = NoiseSpec::new(NoiseKind::LabelSymmetric, 0.1, 0).unwrap();
        assert!(perturb_edges(&g, &spec).is_err());
        assert!(NoiseSpec::new(NoiseKind::EdgePerturb, 1.5, 0).is_err());
    }

    #[test]
    fn perturb_bookkeeping_half_split() {
        // Exactly 1000 edges: a 1000-node ring.
        let ring: Vec<(usize, usize)> = (0..1000).map(|i| (i, (i + 1) % 1000)).collect();
        let g = Graph::new(
            ndarray::Array2::zeros((1000, 1)),
            vec![0; 1000],
            1,
            ring,
            Default::default(),
        )
        .unwrap();
        let spec = NoiseSpec::new(NoiseKind::EdgePerturb, 0.2, 8).unwrap();
        let p = perturb_edges(&g, &spec).unwrap();
        assert_eq!(p.n_edges(), 1000);
        let before: HashSet<_> = g.edges().iter().copied().collect();
        let after: HashSet<_> = p.edges().iter().copied().collect();
        assert_eq!(before.difference(&after).count(), 100);
        assert_eq!(after.difference(&before).count(), 100);

        let each = perturb_edges(&g, &spec.with_split(EdgeNoiseSplit::Each)).unwrap();
        let after: HashSet<_> = each.edges().iter().copied().collect();
        assert_eq!(before.difference(&after).count(), 200);
        assert_eq!(each.n_edges(), 1000);
    }

    #[test]
    fn too_dense_to_add_is_an_error() {
        let k4: Vec<(usize, usize)> = (0..4).flat_map(|u| (u + 1..4).map(move |v| (u, v))).collect();
        let g = Graph::new(ndarray::Array2::zeros((4, 1)), vec![0; 4], 1, k4, Default::default())
            .unwrap();
        let spec = NoiseSpec::new(NoiseKind::EdgePerturb, 1.0, 0).unwrap();
        assert!(perturb_edges(&g, &spec).is_err());
    }

    #[test]
    fn random_additions_lower_homophily_on_average() {
        let mut drop = 0.0;
        for seed in 0..5 {
            let g = sbm(seed);
            let h0 = g.homophily_ratio(g.labels()).ratio;
            let spec = NoiseSpec::new(NoiseKind::EdgePerturb, 0.5, 100 + seed).unwrap();
            let p = perturb_edges(&g, &spec).unwrap();
            drop += h0 - p.homophily_ratio(p.labels()).ratio;
        }
        assert!(drop / 5.0 > 0.1, "mean homophily drop {}", drop / 5.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn perturb_preserves_edge_count_and_invariants(seed in 0u64..1000, ratio in 0.0f64..1.0) {
                let g = generate_sbm(&SbmParams::new(100, 2, 0.1, 0.02, 4, 0.5, seed).with_split_sizes(10, 10)).unwrap();
                let spec = NoiseSpec::new(NoiseKind::EdgePerturb, ratio, seed).unwrap();
                let p = perturb_edges(&g, &spec).unwrap();
                prop_assert_eq!(p.n_edges(), g.n_edges());
                for &(u, v) in p.edges() {
                    prop_assert!(u < v);
                    prop_assert!(p.adjacency().has_edge(v, u));
                }
            }

            #[test]
            fn label_noise_leaves_eval_splits(seed in 0u64..1000, ratio in 0.0f64..=1.0) {
                let g = generate_sbm(&SbmParams::new(100, 2, 0.1, 0.02, 4, 0.5, 1).with_split_sizes(10, 10)).unwrap();
                for kind in [NoiseKind::LabelSymmetric, NoiseKind::LabelAsymmetric] {
                    let noisy = inject_label_noise(&g, &NoiseSpec::new(kind, ratio, seed).unwrap()).unwrap();
                    for &i in g.splits().val.iter().chain(&g.splits().test) {
                        prop_assert_eq!(noisy.labels()[i], g.labels()[i]);
                    }
                }
            }
        }
    }
}
