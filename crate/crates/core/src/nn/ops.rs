//! Scalar and row-wise helpers shared by the losses and the sparsifier.

use ndarray::{Array1, ArrayView1};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// `-log softmax(logits)[target]`.
pub fn cross_entropy(logits: ArrayView1<f64>, target: usize) -> f64 {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = logits.mapv(|v| (v - max).exp()).sum().ln() + max;
    lse - logits[target]
}

/// Index of the first maximal entry.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean squared error `(1/C) * sum (a - b)^2`.
pub fn mse(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let c = a.len() as f64;
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / c
}
