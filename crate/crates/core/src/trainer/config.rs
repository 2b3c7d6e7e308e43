use serde::{Deserialize, Serialize};

use crate::contrast::LossConfig;
use crate::nn::OptimizerKind;
use crate::{Error, Result};

/// Upper-level objective used to train the sparsifier.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveMode {
    /// Maximize pseudo-label homophily of the sampled subgraph.
    #[default]
    Homophily,
    /// Minimize the smoothness loss with each edge term scaled by its
    /// straight-through value (prone to emptying the graph).
    ExplicitWeight,
}

/// Every training hyperparameter. Unknown keys are rejected when parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr_theta: f64,
    pub lr_psi: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub layers: usize,
    pub hidden: usize,
    pub batch_size: usize,
    pub fusion: f64,
    pub temperature: f64,
    pub negatives: usize,
    pub margin: f64,
    pub dropout: f64,
    pub seed: u64,
    pub objective: ObjectiveMode,
    pub optimizer: OptimizerKind,
    /// Lower-level epochs per upper-level step.
    pub inner_steps: usize,
    /// Use ground-truth labels on training nodes as pseudo-labels.
    pub truth_pseudo_labels: bool,
    /// Drop the negative term of the smoothness loss (ablation).
    pub use_negatives: bool,
    /// Fix the interpolation coefficient instead of learning it (ablation).
    pub fixed_beta: Option<f64>,
    /// Never update the sparsifier (ablation).
    pub freeze_sparsifier: bool,
    /// Reject negatives that are endpoints or neighbors of the anchor.
    pub exclude_neighbor_negatives: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_theta: 0.01,
            lr_psi: 0.01,
            weight_decay: 5e-4,
            epochs: 200,
            warmup_epochs: 100,
            layers: 2,
            hidden: 256,
            batch_size: 512,
            fusion: 0.3,
            temperature: 1.0,
            negatives: 5,
            margin: 10.0,
            dropout: 0.5,
            seed: 0,
            objective: ObjectiveMode::Homophily,
            optimizer: OptimizerKind::Adam,
            inner_steps: 1,
            truth_pseudo_labels: false,
            use_negatives: true,
            fixed_beta: None,
            freeze_sparsifier: false,
            exclude_neighbor_negatives: false,
        }
    }
}

impl TrainConfig {
    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be positive and finite (got {v})"));
            }
        };
        positive("lr_theta", self.lr_theta);
        positive("lr_psi", self.lr_psi);
        positive("temperature", self.temperature);
        positive("margin", self.margin);
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            bad.push(format!("weight_decay must be non-negative (got {})", self.weight_decay));
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
            ("negatives", self.negatives),
            ("inner_steps", self.inner_steps),
        ] {
            if v == 0 {
                bad.push(format!("{name} must be at least 1"));
            }
        }
        if self.warmup_epochs > self.epochs {
            bad.push(format!(
                "warmup_epochs ({}) must not exceed epochs ({})",
                self.warmup_epochs, self.epochs
            ));
        }
        if !(0.0..=1.0).contains(&self.fusion) {
            bad.push(format!("fusion must lie in [0, 1] (got {})", self.fusion));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bad.push(format!("dropout must lie in [0, 1) (got {})", self.dropout));
        }
        if let Some(b) = self.fixed_beta {
            if !(0.0..=1.0).contains(&b) {
                bad.push(format!("fixed_beta must lie in [0, 1] (got {b})"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad))
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            margin: self.margin,
            use_negatives: self.use_negatives,
            fixed_beta: self.fixed_beta,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
