//! Independent reference implementations shared by the integration tests
//! and the acceptance suite. Everything here is written with plain loops
//! over `Vec`s so that it shares no arithmetic with the library kernels.
#![allow(dead_code)]

use gssc_core::contrast::{evaluate_batch, sample_edge_batch, LossConfig};
use gssc_core::nn::{grad_check, GradCheckOptions, BN_EPS};
use gssc_core::trainer::{homophily_objective, Relaxation};
use gssc_core::{Backbone, ForwardMode, Graph, Sparsifier, Splits};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rows = Vec<Vec<f64>>;

/// Ring plus a few chords, labels `i % classes`, every other node labeled.
pub fn toy_graph(n: usize, dim: usize, classes: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, dim), |_| rng.random_range(-1.0..1.0));
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for i in (0..n).step_by(3) {
        let j = (i + n / 2) % n;
        if i != j && !edges.contains(&(i, j)) && !edges.contains(&(j, i)) {
            edges.push((i, j));
        }
    }
    let splits = Splits {
        train: (0..n).step_by(2).collect(),
        val: (1..n).step_by(4).collect(),
        test: (3..n).step_by(4).collect(),
    };
    Graph::new(x, labels, classes, edges, splits).unwrap()
}

/// A backbone with non-trivial BN statistics so eval mode is not an identity.
pub fn toy_backbone(in_dim: usize, hidden: usize, classes: usize, dropout: f64, seed: u64) -> Backbone {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Backbone::new(in_dim, hidden, 2, classes, dropout, &mut rng).unwrap();
    for bn in &mut b.norms {
        bn.running_mean.mapv_inplace(|_| rng.random_range(0.0..0.5));
        bn.running_var.mapv_inplace(|_| rng.random_range(0.5..2.0));
        bn.scale.mapv_inplace(|_| rng.random_range(0.5..1.5));
        bn.shift.mapv_inplace(|_| rng.random_range(-0.3..0.3));
    }
    b
}

pub fn rows(a: &Array2<f64>) -> Rows {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += (a[k] - b[k]) * (a[k] - b[k]);
    }
    s / a.len() as f64
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn vec_mat(v: &[f64], m: &Array2<f64>) -> Vec<f64> {
    let mut out = vec![0.0; m.ncols()];
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            out[c] += v[r] * m[[r, c]];
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Eval-mode representation of one feature row: linear, ReLU, BN with
/// running statistics, per layer.
pub fn embed_row(b: &Backbone, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (w, bn) in b.weights.iter().zip(&b.norms) {
        let pre = vec_mat(&h, w);
        h = (0..pre.len())
            .map(|c| {
                let a = pre[c].max(0.0);
                (a - bn.running_mean[c]) / (bn.running_var[c] + BN_EPS).sqrt() * bn.scale[c] + bn.shift[c]
            })
            .collect();
    }
    h
}

/// Nodes adjacent to neither endpoint of each edge, endpoints excluded.
pub fn non_neighbors(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let adjacent = |a: usize, b: usize| edges.iter().any(|&(u, v)| (u == a && v == b) || (u == b && v == a));
    edges
        .iter()
        .map(|&(i, j)| {
            (0..n)
                .filter(|&k| k != i && k != j && !adjacent(i, k) && !adjacent(j, k))
                .collect()
        })
        .collect()
}

/// Mean over edges of `w_e * term_e` with
/// `term_e = D(y_i, g_ij) + D(y_j, g_ji) - mean_k [min(D(y_i, z_k), m) + min(D(y_j, z_k), m)]`.
#[allow(clippy::too_many_arguments)]
pub fn smooth_oracle(
    edges: &[(usize, usize)],
    negatives: &[Vec<usize>],
    y: &Rows,
    z: &Rows,
    g_fwd: &Rows,
    g_bwd: &Rows,
    margin: f64,
    weights: Option<&[f64]>,
) -> f64 {
    let mut total = 0.0;
    for e in 0..edges.len() {
        let (i, j) = edges[e];
        let mut term = mse(&y[i], &g_fwd[e]) + mse(&y[j], &g_bwd[e]);
        let k = negatives[e].len();
        if k > 0 {
            let mut rep = 0.0;
            for &n in &negatives[e] {
                rep += mse(&y[i], &z[n]).min(margin) + mse(&y[j], &z[n]).min(margin);
            }
            term -= rep / k as f64;
        }
        total += weights.map_or(1.0, |w| w[e]) * term;
    }
    total / edges.len() as f64
}

/// Log-sum-exp variant of the smoothness term, no margin.
pub fn lse_oracle(edges: &[(usize, usize)], negatives: &[Vec<usize>], y: &Rows, z: &Rows, g_fwd: &Rows, g_bwd: &Rows) -> f64 {
    let mut total = 0.0;
    for e in 0..edges.len() {
        let (i, j) = edges[e];
        for (a, g) in [(i, &g_fwd[e]), (j, &g_bwd[e])] {
            total += mse(&y[a], g);
            if !negatives[e].is_empty() {
                let s: f64 = negatives[e].iter().map(|&k| mse(&y[a], &z[k]).exp()).sum();
                total -= s.ln();
            }
        }
    }
    total / edges.len() as f64
}

pub fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let s: f64 = logits.iter().map(|v| v.exp()).sum();
    s.ln() - logits[target]
}

/// Self terms for labeled batch endpoints plus neighbor terms in both edge
/// directions, summed and divided by the number of edges.
pub fn cla_oracle(edges: &[(usize, usize)], y: &Rows, z: &Rows, labels: &[usize], labeled: &[bool]) -> f64 {
    let mut seen = vec![false; y.len()];
    let mut total = 0.0;
    for &(i, j) in edges {
        for v in [i, j] {
            if labeled[v] && !seen[v] {
                seen[v] = true;
                total += cross_entropy(&y[v], labels[v]);
            }
        }
        if labeled[i] {
            total += cross_entropy(&z[j], labels[i]);
        }
        if labeled[j] {
            total += cross_entropy(&z[i], labels[j]);
        }
    }
    total / edges.len() as f64
}

pub fn homophily_oracle(edges: &[(usize, usize)], values: &[f64], labels: &[usize]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (e, &(i, j)) in edges.iter().enumerate() {
        den += values[e];
        if labels[i] == labels[j] {
            num += values[e];
        }
    }
    num / den
}

/// Everything the smoothness and classification oracles need, computed
/// from scratch for a backbone in eval mode. Augmentations are indexed
/// by edge.
pub struct Reps {
    pub y: Rows,
    pub z: Rows,
    pub g_fwd: Rows,
    pub g_bwd: Rows,
}

pub fn reps(b: &Backbone, x: &Array2<f64>, edges: &[(usize, usize)], fixed_beta: Option<f64>) -> Reps {
    let f = b.hidden();
    let h: Rows = x.rows().into_iter().map(|r| embed_row(b, &r.to_vec())).collect();
    let y = h.iter().map(|r| vec_mat(r, &b.head_f)).collect();
    let z = h.iter().map(|r| vec_mat(r, &b.head_g)).collect();
    let a = b.interp.to_vec();
    let aug = |s: usize, d: usize| {
        let beta = fixed_beta.unwrap_or_else(|| sigmoid(dot(&a[..f], &h[s]) + dot(&a[f..], &h[d])));
        let mixed: Vec<f64> = (0..f).map(|c| beta * h[d][c] + (1.0 - beta) * h[s][c]).collect();
        vec_mat(&mixed, &b.head_g)
    };
    Reps {
        y,
        z,
        g_fwd: edges.iter().map(|&(i, j)| aug(i, j)).collect(),
        g_bwd: edges.iter().map(|&(i, j)| aug(j, i)).collect(),
    }
}

/// Worst relative error of the analytic `d L_total / d theta` on a graph
/// with `n` nodes, against central differences over every coordinate.
pub fn theta_grad_error(n: usize, seed: u64) -> f64 {
    let g = toy_graph(n, 5, 3, seed);
    let b = toy_backbone(5, 6, 3, 0.3, seed + 1);
    let batch = sample_edge_batch(g.edges(), n, 16, 3, seed + 2).unwrap();
    let cfg = LossConfig::default();
    let mask = g.train_mask();
    let mode = ForwardMode::Train { seed: seed + 3 };
    let eval = evaluate_batch(&b, g.features(), g.labels(), &mask, &batch, &cfg, mode, None).unwrap();
    let f = |p: &[f64]| {
        let mut bb = b.clone();
        bb.set_flat_params(p);
        evaluate_batch(&bb, g.features(), g.labels(), &mask, &batch, &cfg, mode, None)
            .unwrap()
            .report
            .total
    };
    grad_check(f, &b.flat_params(), &eval.grad.flat(), &GradCheckOptions::default()).unwrap()
}

/// Worst relative error of `d H_soft / d W` with the Gumbel noise frozen.
pub fn psi_grad_error(n: usize, seed: u64) -> f64 {
    let g = toy_graph(n, 5, 3, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let s = Sparsifier::new(5, 4, 0.2, 0.7, &mut rng).unwrap();
    let pseudo: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
    let sub = s.sample(g.features(), g.edges(), seed + 2).unwrap();
    let noise = sub.noise.clone();
    let (_, d_values) = homophily_objective(&sub, &pseudo, Relaxation::Soft).unwrap();
    let grad = s.backward(g.features(), &sub, &d_values).unwrap();
    let f = |p: &[f64]| {
        let mut t = s.clone();
        t.embed.as_slice_mut().unwrap().copy_from_slice(p);
        let sub = t.sample_frozen(g.features(), g.edges(), noise.clone()).unwrap();
        homophily_objective(&sub, &pseudo, Relaxation::Soft).unwrap().0
    };
    grad_check(f, s.embed.as_slice().unwrap(), grad.as_slice().unwrap(), &GradCheckOptions::default()).unwrap()
}

/// Largest central difference of `L_total` with respect to any sparsifier
/// weight, sampling frozen. The loss sees the sparsifier only through the
/// discrete edge set, so every difference should be exactly zero.
pub fn psi_total_loss_max_difference(n: usize, seed: u64) -> f64 {
    let g = toy_graph(n, 5, 3, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let s = Sparsifier::new(5, 4, 0.2, 1.0, &mut rng).unwrap();
    let b = toy_backbone(5, 6, 3, 0.3, seed + 2);
    let noise = s.sample(g.features(), g.edges(), seed + 3).unwrap().noise;
    let mask = g.train_mask();
    let loss = |w: &[f64]| {
        let mut t = s.clone();
        t.embed.as_slice_mut().unwrap().copy_from_slice(w);
        let sub = t.sample_frozen(g.features(), g.edges(), noise.clone()).unwrap();
        let mut kept = sub.kept_edges();
        if kept.is_empty() {
            kept = g.edges().to_vec();
        }
        let batch = sample_edge_batch(&kept, n, 64, 3, seed + 4).unwrap();
        let mode = ForwardMode::Train { seed: seed + 5 };
        evaluate_batch(&b, g.features(), g.labels(), &mask, &batch, &LossConfig::default(), mode, None)
            .unwrap()
            .report
            .total
    };
    let w0 = s.embed.as_slice().unwrap().to_vec();
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for k in 0..w0.len() {
        let mut p = w0.clone();
        p[k] += eps;
        let plus = loss(&p);
        p[k] -= 2.0 * eps;
        let minus = loss(&p);
        worst = worst.max(((plus - minus) / (2.0 * eps)).abs());
    }
    worst
}

/// Empirical hard-keep rate over `draws` independent edges.
pub fn keep_rate(m: f64, tau: f64, draws: usize, seed: u64) -> f64 {
    let edges: Vec<(usize, usize)> = (0..draws).map(|e| (e, e + 1)).collect();
    let sub = gssc_core::sparsifier::gumbel_sample(&edges, &vec![m; draws], tau, seed);
    sub.hard_count() as f64 / draws as f64
}

/// Pearson chi-square p-value of `draws` negative samples against the
/// degree-proportional law on an irregular graph.
pub fn negative_sampling_p_value(draws: usize, seed: u64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let n = 12;
    let mut edges = vec![];
    for i in 1..n {
        edges.push((0, i));
    }
    for i in 1..n - 1 {
        if i % 2 == 1 {
            edges.push((i, i + 1));
        }
    }
    edges.extend([(1, 5), (2, 9), (3, 7)]);
    let mut degree = vec![0usize; n];
    for &(u, v) in &edges {
        degree[u] += 1;
        degree[v] += 1;
    }
    let total: usize = degree.iter().sum();
    let sampler = gssc_core::contrast::NegativeSampler::new(&edges, n, false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; n];
    for _ in 0..draws {
        counts[sampler.draw(&mut rng)] += 1;
    }
    let mut stat = 0.0;
    let mut cells = 0;
    for v in 0..n {
        let expected = draws as f64 * degree[v] as f64 / total as f64;
        if expected > 0.0 {
            stat += (counts[v] as f64 - expected).powi(2) / expected;
            cells += 1;
        }
    }
    let chi = ChiSquared::new((cells - 1) as f64).unwrap();
    1.0 - chi.cdf(stat)
}
