use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// Adam with L2 weight decay folded into the gradient.
    #[default]
    Adam,
    /// Plain gradient step.
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Descend,
    Ascend,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First-order optimizer over a fixed list of parameter tensors.
///
/// Moment buffers are allocated on the first step and keyed by position,
/// so callers must pass tensors in the same order every step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Self {
        Optimizer {
            kind,
            lr,
            weight_decay,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, direction: Direction) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient tensor count");
        let sign = match direction {
            Direction::Descend => 1.0,
            Direction::Ascend => -1.0,
        };
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = self.first.clone();
        }
        self.steps += 1;
        let t = self.steps as i32;
        let bias1 = 1.0 - BETA1.powi(t);
        let bias2 = 1.0 - BETA2.powi(t);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len(), "tensor {k} shape");
            for i in 0..p.len() {
                let grad = sign * g[i] + self.weight_decay * p[i];
                match self.kind {
                    OptimizerKind::Sgd => p[i] -= self.lr * grad,
                    OptimizerKind::Adam => {
                        let m = &mut self.first[k][i];
                        let v = &mut self.second[k][i];
                        *m = BETA1 * *m + (1.0 - BETA1) * grad;
                        *v = BETA2 * *v + (1.0 - BETA2) * grad * grad;
                        let m_hat = *m / bias1;
                        let v_hat = *v / bias2;
                        p[i] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}
