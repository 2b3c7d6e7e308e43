//! Experiments that emit plot data: accuracy against subgraph homophily,
//! and the evolution of edge count, homophily and accuracy during training.

use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::edge_homophily;
use crate::trainer::{train, train_with, MetricsRecord, Phase, TrainConfig};
use crate::{Error, Graph, Result};

/// Which edges a ladder rung removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stratum {
    /// Edges joining different classes; removing them raises homophily.
    Inter,
    /// Edges within a class; removing them lowers homophily.
    Intra,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub stratum: Stratum,
    /// Fraction of the stratum removed, in `[0, 1]`.
    pub fraction: f64,
}

/// Nine rungs from fully homophilous to strongly heterophilous, the
/// original graph in the middle.
pub fn default_ladder() -> Vec<Rung> {
    let inter = [1.0, 0.75, 0.5, 0.25, 0.0].map(|fraction| Rung {
        stratum: Stratum::Inter,
        fraction,
    });
    let intra = [0.25, 0.5, 0.75, 0.9].map(|fraction| Rung {
        stratum: Stratum::Intra,
        fraction,
    });
    inter.into_iter().chain(intra).collect()
}

/// Removes a uniformly random `fraction` of the rung's stratum.
pub fn remove_edges(graph: &Graph, rung: Rung, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&rung.fraction) {
        return Err(Error::InvalidParameter(format!("removal fraction {} outside [0, 1]", rung.fraction)));
    }
    let labels = graph.labels();
    let in_stratum = |&(u, v): &(usize, usize)| (labels[u] == labels[v]) == (rung.stratum == Stratum::Intra);
    let stratum: Vec<usize> = (0..graph.n_edges()).filter(|&e| in_stratum(&graph.edges()[e])).collect();
    let count = (rung.fraction * stratum.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drop = vec![false; graph.n_edges()];
    for k in index::sample(&mut rng, stratum.len(), count) {
        drop[stratum[k]] = true;
    }
    let kept = graph
        .edges()
        .iter()
        .zip(&drop)
        .filter_map(|(&e, &d)| (!d).then_some(e))
        .collect();
    graph.with_edges(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub stratum: Stratum,
    pub fraction: f64,
    pub edges: usize,
    pub homophily: f64,
    /// Test accuracy at the best validation epoch.
    pub test_acc: f64,
}

/// Trains from scratch on each rung's subgraph (original-graph training
/// only, no sparsifier) and records its homophily and test accuracy.
///
/// With `threads > 1` rungs run concurrently; every rung is seeded
/// independently, so the rows are identical either way.
pub fn correlation_study(
    graph: &Graph,
    cfg: &TrainConfig,
    ladder: &[Rung],
    seed: u64,
    threads: usize,
) -> Result<Vec<CorrelationRow>> {
    let cfg = TrainConfig {
        warmup_epochs: cfg.epochs,
        ..cfg.clone()
    };
    let run = |k: usize| -> Result<CorrelationRow> {
        let rung = ladder[k];
        let sub = remove_edges(graph, rung, seed.wrapping_add(k as u64))?;
        let homophily = edge_homophily(sub.edges(), sub.labels()).ratio;
        let out = train(&sub, &cfg)?;
        Ok(CorrelationRow {
            stratum: rung.stratum,
            fraction: rung.fraction,
            edges: sub.n_edges(),
            homophily,
            test_acc: out.best.test_acc,
        })
    };
    let threads = threads.clamp(1, ladder.len().max(1));
    if threads == 1 {
        return (0..ladder.len()).map(run).collect();
    }
    let mut slots: Vec<Option<Result<CorrelationRow>>> = (0..ladder.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (worker, chunk) in slots.chunks_mut(ladder.len().div_ceil(threads)).enumerate() {
            let run = &run;
            let base = worker * ladder.len().div_ceil(threads);
            scope.spawn(move || {
                for (offset, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(run(base + offset));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every rung ran")).collect()
}

/// Average ranks, ties sharing the mean of their positions (1-based).
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = rank;
        }
        start = end;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of tie-averaged ranks.
/// `None` when either side is constant or fewer than two points exist.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let (mut vx, mut vy) = (0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

pub fn correlation_csv(rows: &[CorrelationRow]) -> String {
    let mut out = String::from("stratum,fraction,edges,homophily,test_acc\n");
    for r in rows {
        let stratum = match r.stratum {
            Stratum::Inter => "inter",
            Stratum::Intra => "intra",
        };
        writeln!(out, "{stratum},{},{},{},{}", r.fraction, r.edges, r.homophily, r.test_acc).unwrap();
    }
    out
}

/// Full bi-level run; the history holds every curve.
pub fn evolution_study(graph: &Graph, cfg: &TrainConfig) -> Result<Vec<MetricsRecord>> {
    Ok(train_with(graph, cfg, |_| Ok(()))?.history)
}

pub fn evolution_csv(history: &[MetricsRecord]) -> String {
    let mut out = String::from(
        "epoch,phase,hard_edge_count,expected_edge_count,hard_homophily_true,hard_homophily_pseudo,test_acc\n",
    );
    for r in history {
        let phase = match r.phase {
            Phase::Warmup => "warmup",
            Phase::Bilevel => "bilevel",
        };
        writeln!(
            out,
            "{},{phase},{},{},{},{},{}",
            r.epoch,
            r.hard_edge_count,
            r.expected_edge_count,
            r.hard_homophily_true,
            r.hard_homophily_pseudo,
            r.test_acc
        )
        .unwrap();
    }
    out
}
