//! Dense kernels and the MLP backbone.
//!
//! Each backbone layer computes `Dropout(BN(ReLU(H W)))`, in that order.
//! Gradients are derived by hand; every backward routine here is exercised
//! against central finite differences in the tests.

mod checkpoint;
mod gradcheck;
pub mod ops;
mod optim;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Uniform;

use crate::{Error, Result};

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use gradcheck::{grad_check, GradCheckOptions};
pub use optim::{Direction, Optimizer, OptimizerKind};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Batch statistics for BN, inverted dropout with a mask fixed by `seed`.
    Train { seed: u64 },
    /// Running statistics for BN, dropout disabled.
    Eval,
}

/// Symmetric uniform initialization with limit `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    Array2::from_shape_fn((rows, cols), |_| rng.sample(dist))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        BatchNorm {
            scale: Array1::ones(width),
            shift: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

/// Backbone parameters: MLP layers with batch norm, the two prediction
/// heads (`head_f` for class logits, `head_g` for contrast targets) and the
/// interpolation weight vector of length `2F`.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub weights: Vec<Array2<f64>>,
    pub norms: Vec<BatchNorm>,
    pub head_f: Array2<f64>,
    pub head_g: Array2<f64>,
    pub interp: Array1<f64>,
    pub dropout: f64,
}

/// Gradient with the same shapes as the learnable parts of [`Backbone`].
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneGrad {
    pub weights: Vec<Array2<f64>>,
    pub scale: Vec<Array1<f64>>,
    pub shift: Vec<Array1<f64>>,
    pub head_f: Array2<f64>,
    pub head_g: Array2<f64>,
    pub interp: Array1<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
    mask: Option<Array2<f64>>,
}

/// Activations retained by [`Backbone::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    mode: ForwardMode,
}

impl Backbone {
    pub fn new(
        in_dim: usize,
        hidden: usize,
        layers: usize,
        classes: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if layers == 0 || hidden == 0 || in_dim == 0 || classes == 0 {
            return Err(Error::InvalidParameter(
                "backbone dimensions must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidParameter(format!("dropout {dropout} outside [0, 1)")));
        }
        let mut weights = Vec::with_capacity(layers);
        for l in 0..layers {
            let fan_in = if l == 0 { in_dim } else { hidden };
            weights.push(glorot(fan_in, hidden, fan_in, hidden, rng));
        }
        let norms = (0..layers).map(|_| BatchNorm::new(hidden)).collect();
        let head_f = glorot(hidden, classes, hidden, classes, rng);
        let head_g = glorot(hidden, classes, hidden, classes, rng);
        let interp = glorot(1, 2 * hidden, 2 * hidden, 1, rng).into_shape_with_order(2 * hidden).unwrap();
        Ok(Backbone {
            weights,
            norms,
            head_f,
            head_g,
            interp,
            dropout,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn hidden(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn classes(&self) -> usize {
        self.head_f.ncols()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    /// Runs the MLP on the rows of `x`, returning `H^(L)` and the cache.
    ///
    /// The forward pass never mutates `self`; in train mode the batch
    /// statistics are returned in the cache and folded into the running
    /// estimates by [`Backbone::update_running_stats`].
    pub fn forward(&self, x: &Array2<f64>, mode: ForwardMode) -> Result<(Array2<f64>, ForwardCache)> {
        if x.ncols() != self.in_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} columns, backbone expects {}",
                x.ncols(),
                self.in_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("backbone input".into()));
        }
        let mut rng = match mode {
            ForwardMode::Train { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            ForwardMode::Eval => None,
        };
        let rows = x.nrows() as f64;
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.n_layers());
        for (w, bn) in self.weights.iter().zip(&self.norms) {
            let pre = h.dot(w);
            let act = pre.mapv(|v| v.max(0.0));
            let (mean, var) = match mode {
                ForwardMode::Train { .. } => {
                    let mean = act.mean_axis(Axis(0)).unwrap();
                    let centered = &act - &mean;
                    let var = (&centered * &centered).sum_axis(Axis(0)) / rows;
                    (mean, var)
                }
                ForwardMode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
            };
            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let normalized = (&act - &mean) * &inv_std;
            let mut out = &normalized * &bn.scale + &bn.shift;
            let mask = match (&mut rng, self.dropout > 0.0) {
                (Some(rng), true) => {
                    let keep = 1.0 - self.dropout;
                    let mask = Array2::from_shape_fn(out.raw_dim(), |_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    out *= &mask;
                    Some(mask)
                }
                _ => None,
            };
            caches.push(LayerCache {
                input: std::mem::replace(&mut h, out),
                pre,
                normalized,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                mask,
            });
        }
        Ok((h, ForwardCache { layers: caches, mode }))
    }

    /// Convenience eval-mode forward returning only `H^(L)`.
    pub fn embed(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x, ForwardMode::Eval)?.0)
    }

    /// Applies both prediction heads: `(Y, Z) = (H head_f, H head_g)`.
    pub fn heads(&self, h: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        if h.ncols() != self.hidden() {
            return Err(Error::ShapeMismatch(format!(
                "representation has {} columns, heads expect {}",
                h.ncols(),
                self.hidden()
            )));
        }
        Ok((h.dot(&self.head_f), h.dot(&self.head_g)))
    }

    /// Class logits `f(h)` for every row of `x` in eval mode.
    pub fn predict_logits(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let h = self.embed(x)?;
        Ok(h.dot(&self.head_f))
    }

    /// Folds train-mode batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        if cache.mode == ForwardMode::Eval {
            return;
        }
        for (bn, layer) in self.norms.iter_mut().zip(&cache.layers) {
            let n = layer.input.nrows() as f64;
            let unbiased = if n > 1.0 {
                &layer.batch_var * (n / (n - 1.0))
            } else {
                layer.batch_var.clone()
            };
            bn.running_mean = &bn.running_mean * (1.0 - BN_MOMENTUM) + &layer.batch_mean * BN_MOMENTUM;
            bn.running_var = &bn.running_var * (1.0 - BN_MOMENTUM) + unbiased * BN_MOMENTUM;
        }
    }

    /// Backpropagates `d_out = dLoss/dH^(L)` through the MLP layers.
    ///
    /// Returns layer and BN gradients (head and interpolation entries are
    /// zero) and the gradient with respect to the input rows.
    pub fn backward(&self, cache: &ForwardCache, d_out: Array2<f64>) -> (BackboneGrad, Array2<f64>) {
        let mut grad = self.zero_grad();
        let batch_stats = matches!(cache.mode, ForwardMode::Train { .. });
        let mut d = d_out;
        for (l, layer) in cache.layers.iter().enumerate().rev() {
            if let Some(mask) = &layer.mask {
                d *= mask;
            }
            grad.scale[l] = (&d * &layer.normalized).sum_axis(Axis(0));
            grad.shift[l] = d.sum_axis(Axis(0));
            let d_norm = &d * &self.norms[l].scale;
            let d_act = if batch_stats {
                let n = d_norm.nrows() as f64;
                let sum_d = d_norm.sum_axis(Axis(0));
                let sum_dx = (&d_norm * &layer.normalized).sum_axis(Axis(0));
                let mut d_act = &d_norm * n - &sum_d - &layer.normalized * &sum_dx;
                d_act *= &(&layer.inv_std / n);
                d_act
            } else {
                &d_norm * &layer.inv_std
            };
            let mut d_pre = d_act;
            Zip::from(&mut d_pre).and(&layer.pre).for_each(|g, &p| {
                if p <= 0.0 {
                    *g = 0.0;
                }
            });
            grad.weights[l] = layer.input.t().dot(&d_pre);
            d = d_pre.dot(&self.weights[l].t());
        }
        (grad, d)
    }

    pub fn zero_grad(&self) -> BackboneGrad {
        BackboneGrad {
            weights: self.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            scale: self.norms.iter().map(|b| Array1::zeros(b.scale.len())).collect(),
            shift: self.norms.iter().map(|b| Array1::zeros(b.shift.len())).collect(),
            head_f: Array2::zeros(self.head_f.raw_dim()),
            head_g: Array2::zeros(self.head_g.raw_dim()),
            interp: Array1::zeros(self.interp.len()),
        }
    }

    /// Learnable tensors in a fixed order matching [`BackboneGrad::slices`].
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for w in &self.weights {
            out.push(w.as_slice().expect("standard layout"));
        }
        for bn in &self.norms {
            out.push(bn.scale.as_slice().unwrap());
            out.push(bn.shift.as_slice().unwrap());
        }
        out.push(self.head_f.as_slice().unwrap());
        out.push(self.head_g.as_slice().unwrap());
        out.push(self.interp.as_slice().unwrap());
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for w in &mut self.weights {
            out.push(w.as_slice_mut().expect("standard layout"));
        }
        for bn in &mut self.norms {
            out.push(bn.scale.as_slice_mut().unwrap());
            out.push(bn.shift.as_slice_mut().unwrap());
        }
        out.push(self.head_f.as_slice_mut().unwrap());
        out.push(self.head_g.as_slice_mut().unwrap());
        out.push(self.interp.as_slice_mut().unwrap());
        out
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
            && self
                .norms
                .iter()
                .all(|b| b.running_var.iter().all(|v| v.is_finite() && *v > 0.0))
    }
}

impl BackboneGrad {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for w in &self.weights {
            out.push(w.as_slice().expect("standard layout"));
        }
        for (s, b) in self.scale.iter().zip(&self.shift) {
            out.push(s.as_slice().unwrap());
            out.push(b.as_slice().unwrap());
        }
        out.push(self.head_f.as_slice().unwrap());
        out.push(self.head_g.as_slice().unwrap());
        out.push(self.interp.as_slice().unwrap());
        out
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn add_assign(&mut self, other: &BackboneGrad) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.scale.iter_mut().zip(&other.scale) {
            *a += b;
        }
        for (a, b) in self.shift.iter_mut().zip(&other.shift) {
            *a += b;
        }
        self.head_f += &other.head_f;
        self.head_g += &other.head_g;
        self.interp += &other.interp;
    }
}
