use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Warmup,
    Bilevel,
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub loss_smooth: f64,
    pub loss_cla: f64,
    pub loss_total: f64,
    /// `|E'_g|` of the subgraph trained on this epoch.
    pub hard_edge_count: usize,
    /// `sum_e (1 - exp(-M_e))`, the expected `|E'_g|` under the current strategy.
    pub expected_edge_count: f64,
    pub hard_homophily_pseudo: f64,
    pub hard_homophily_true: f64,
    /// Upper-level objective value; absent during warm-up.
    pub soft_homophily_objective: Option<f64>,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    /// The upper step fell back to a reduced step size.
    pub upper_backtracked: bool,
    /// The sampled subgraph was empty and the original edges were used.
    pub subgraph_fallback: bool,
    /// Batches that contained no labeled endpoint.
    pub unlabeled_batches: usize,
    /// Batch-weighted mean interpolation coefficient of the epoch.
    pub mean_beta: f64,
    /// Edges whose fused strategy hit the lower clamp in this epoch's sample.
    pub clamped_strategies: usize,
}

/// Writes records as JSON lines.
pub fn write_jsonl(records: &[MetricsRecord], mut out: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| crate::Error::io("metrics", e))?;
    }
    Ok(())
}

pub fn read_jsonl(text: &str) -> Result<Vec<MetricsRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Into::into))
        .collect()
}
