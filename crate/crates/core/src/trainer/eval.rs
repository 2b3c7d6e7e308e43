use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::contrast::accuracy_of;
use crate::nn::Backbone;
use crate::{Error, Graph, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn nodes(self, graph: &Graph) -> &[usize] {
        let s = graph.splits();
        match self {
            Split::Train => &s.train,
            Split::Val => &s.val,
            Split::Test => &s.test,
        }
    }
}

/// Accuracy of eval-mode predictions on one split.
pub fn evaluate(backbone: &Backbone, graph: &Graph, split: Split) -> Result<f64> {
    let nodes = split.nodes(graph);
    if nodes.is_empty() {
        return Err(Error::InvalidParameter(format!("{split:?} split is empty")));
    }
    let logits = backbone.predict_logits(graph.features())?;
    Ok(accuracy_of(&logits, graph.labels(), nodes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub repeats: usize,
    pub nodes: usize,
}

/// Wall-clock time of a full-graph eval forward pass. Uses only the
/// feature matrix: the graph structure is never touched at inference.
pub fn bench_latency(backbone: &Backbone, graph: &Graph, repeats: usize) -> Result<LatencyStats> {
    if repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be at least 1".into()));
    }
    let x = graph.features();
    // one untimed pass to fault in buffers
    std::hint::black_box(backbone.predict_logits(x)?);
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        std::hint::black_box(backbone.predict_logits(x)?);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mean = times.iter().sum::<f64>() / repeats as f64;
    let std_ms = if repeats > 1 {
        (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(LatencyStats {
        mean_ms: mean,
        std_ms,
        repeats,
        nodes: graph.n_nodes(),
    })
}
