//! Self-contrasting losses and their gradients.
//!
//! For a batch edge `(i, j)` with negatives `k_1..k_K`:
//!
//! ```text
//! term_ij = D(y_i, g_{i->j}) + D(y_j, g_{j->i})
//!           - (1/K) sum_k [ min(D(y_i, z_k), m) + min(D(y_j, z_k), m) ]
//! ```
//!
//! with `D` the mean squared error, `y = f(h)`, `z = g(h)` and the augmented
//! target `g_{i->j} = g(beta h_j + (1 - beta) h_i)`,
//! `beta = sigmoid(a . [h_i || h_j])`. The smoothness loss is the batch mean
//! of `term_ij`; the explicit-weight variant multiplies each term by an edge
//! value before averaging.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use super::EdgeBatch;
use crate::nn::ops::{argmax, cross_entropy, mse, sigmoid, softmax};
use crate::nn::{Backbone, BackboneGrad, ForwardCache, ForwardMode};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Upper clamp applied to each negative distance.
    pub margin: f64,
    /// When false the negative term is dropped (no-negatives ablation).
    pub use_negatives: bool,
    /// Replaces the learned interpolation coefficient when set.
    pub fixed_beta: Option<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            margin: 10.0,
            use_negatives: true,
            fixed_beta: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossReport {
    pub smooth: f64,
    pub cla: f64,
    pub total: f64,
    /// Number of cross-entropy terms that entered `cla`.
    pub cla_terms: usize,
    /// Set when no batch endpoint was labeled, so `cla` is 0.
    pub unlabeled_batch: bool,
    /// Mean interpolation coefficient over both edge directions.
    pub mean_beta: f64,
}

impl LossReport {
    pub fn new(smooth: f64, cla: f64, cla_terms: usize) -> Self {
        LossReport {
            smooth,
            cla,
            total: smooth + cla,
            cla_terms,
            unlabeled_batch: cla_terms == 0,
            mean_beta: f64::NAN,
        }
    }
}

/// Augmented target for the directed pair `i -> j` and its coefficient.
pub fn interpolate_augment(h_i: ArrayView1<f64>, h_j: ArrayView1<f64>, backbone: &Backbone) -> Result<(Array1<f64>, f64)> {
    let f = backbone.hidden();
    if h_i.len() != f || h_j.len() != f {
        return Err(Error::ShapeMismatch(format!(
            "representations of length {} and {} for hidden size {f}",
            h_i.len(),
            h_j.len()
        )));
    }
    let a = &backbone.interp;
    let beta = sigmoid(a.slice(s![..f]).dot(&h_i) + a.slice(s![f..]).dot(&h_j));
    let mixed = &h_j * beta + &h_i * (1.0 - beta);
    Ok((mixed.dot(&backbone.head_g), beta))
}

/// Gradient accumulators for the representation-level loss kernels.
struct RepGrads<'a> {
    dy: &'a mut Array2<f64>,
    dz: &'a mut Array2<f64>,
    dg_fwd: &'a mut Array2<f64>,
    dg_bwd: &'a mut Array2<f64>,
}

/// Adds `scale * dD(a, b)/da` to `out` where `D` is the mean squared error.
fn add_mse_grad(mut out: ndarray::ArrayViewMut1<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>, scale: f64) {
    let c = a.len() as f64;
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o += scale * 2.0 * (x - y) / c;
    }
}

/// Per-edge smoothness terms. Rows of `y`/`z` are indexed by the node ids
/// in `edges`/`negatives`; row `b` of `g_fwd`/`g_bwd` holds `g_{i->j}` /
/// `g_{j->i}` for edge `b`.
#[allow(clippy::too_many_arguments)]
fn smooth_kernel(
    edges: &[(usize, usize)],
    negatives: &[Vec<usize>],
    y: &Array2<f64>,
    z: &Array2<f64>,
    g_fwd: &Array2<f64>,
    g_bwd: &Array2<f64>,
    cfg: &LossConfig,
    weights: Option<&[f64]>,
    mut grads: Option<RepGrads<'_>>,
) -> (f64, Vec<f64>) {
    let b = edges.len() as f64;
    let mut terms = Vec::with_capacity(edges.len());
    let mut loss = 0.0;
    for (e, &(i, j)) in edges.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[e]);
        let (yi, yj) = (y.row(i), y.row(j));
        let mut term = mse(yi, g_fwd.row(e)) + mse(yj, g_bwd.row(e));
        let negs: &[usize] = if cfg.use_negatives { &negatives[e] } else { &[] };
        let inv_k = if negs.is_empty() { 0.0 } else { 1.0 / negs.len() as f64 };
        let scale = w / b;
        for &k in negs {
            let zk = z.row(k);
            for (anchor, yv) in [(i, yi), (j, yj)] {
                let d = mse(yv, zk);
                if d < cfg.margin {
                    term -= inv_k * d;
                    if let Some(g) = grads.as_mut() {
                        add_mse_grad(g.dy.row_mut(anchor), yv, zk, -inv_k * scale);
                        add_mse_grad(g.dz.row_mut(k), zk, yv, -inv_k * scale);
                    }
                } else {
                    term -= inv_k * cfg.margin;
                }
            }
        }
        if let Some(g) = grads.as_mut() {
            add_mse_grad(g.dy.row_mut(i), yi, g_fwd.row(e), scale);
            add_mse_grad(g.dg_fwd.row_mut(e), g_fwd.row(e), yi, scale);
            add_mse_grad(g.dy.row_mut(j), yj, g_bwd.row(e), scale);
            add_mse_grad(g.dg_bwd.row_mut(e), g_bwd.row(e), yj, scale);
        }
        loss += w * term;
        terms.push(term);
    }
    (loss / b, terms)
}

/// Classification kernel. `labels[v]` is `Some(class)` for labeled rows.
fn cla_kernel(
    edges: &[(usize, usize)],
    labels: &[Option<usize>],
    y: &Array2<f64>,
    z: &Array2<f64>,
    mut grads: Option<(&mut Array2<f64>, &mut Array2<f64>)>,
) -> (f64, usize) {
    let b = edges.len() as f64;
    let mut loss = 0.0;
    let mut count = 0;
    let mut add = |logits: ArrayView1<f64>, target: usize, out: Option<ndarray::ArrayViewMut1<f64>>| {
        loss += cross_entropy(logits, target);
        count += 1;
        if let Some(mut out) = out {
            let p = softmax(logits);
            for (c, (o, pc)) in out.iter_mut().zip(p.iter()).enumerate() {
                *o += (pc - if c == target { 1.0 } else { 0.0 }) / b;
            }
        }
    };
    let mut endpoints: Vec<usize> = edges.iter().flat_map(|&(i, j)| [i, j]).collect();
    endpoints.sort_unstable();
    endpoints.dedup();
    for &v in &endpoints {
        if let Some(t) = labels[v] {
            add(y.row(v), t, grads.as_mut().map(|(dy, _)| dy.row_mut(v)));
        }
    }
    for &(i, j) in edges {
        for (anchor, other) in [(i, j), (j, i)] {
            if let Some(t) = labels[anchor] {
                add(z.row(other), t, grads.as_mut().map(|(_, dz)| dz.row_mut(other)));
            }
        }
    }
    (loss / b, count)
}

fn check_batch(batch: &EdgeBatch, g_fwd: &Array2<f64>, g_bwd: &Array2<f64>) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter("empty edge batch".into()));
    }
    if batch.negatives.len() != batch.len() || g_fwd.nrows() != batch.len() || g_bwd.nrows() != batch.len() {
        return Err(Error::ShapeMismatch("batch, negatives and augmentations disagree in length".into()));
    }
    Ok(())
}

/// Batch smoothness loss from precomputed representations (node-indexed
/// `y`, `z`; edge-indexed augmentations).
pub fn smoothness_loss(
    batch: &EdgeBatch,
    y: &Array2<f64>,
    z: &Array2<f64>,
    g_fwd: &Array2<f64>,
    g_bwd: &Array2<f64>,
    cfg: &LossConfig,
) -> Result<f64> {
    check_batch(batch, g_fwd, g_bwd)?;
    Ok(smooth_kernel(&batch.edges, &batch.negatives, y, z, g_fwd, g_bwd, cfg, None, None).0)
}

/// Smoothness terms scaled by per-edge values (the explicit-weight objective).
pub fn explicit_weight_loss(
    batch: &EdgeBatch,
    y: &Array2<f64>,
    z: &Array2<f64>,
    g_fwd: &Array2<f64>,
    g_bwd: &Array2<f64>,
    weights: &[f64],
    cfg: &LossConfig,
) -> Result<f64> {
    check_batch(batch, g_fwd, g_bwd)?;
    if weights.len() != batch.len() {
        return Err(Error::ShapeMismatch(format!("{} weights for {} edges", weights.len(), batch.len())));
    }
    Ok(smooth_kernel(&batch.edges, &batch.negatives, y, z, g_fwd, g_bwd, cfg, Some(weights), None).0)
}

/// Diagnostic only, never trained: the log-sum-exp form of the smoothness
/// term, `D(y_i, g_{i->j}) - log sum_k exp D(y_i, z_k)` plus the mirrored
/// direction, averaged over edges. The trained loss replaces the log-sum-exp
/// with the mean distance, which is not an estimator of this quantity; the
/// gap between the two is what this function exposes. Edges without
/// negatives contribute only their positive part. No margin is applied.
pub fn log_sum_exp_smoothness(
    batch: &EdgeBatch,
    y: &Array2<f64>,
    z: &Array2<f64>,
    g_fwd: &Array2<f64>,
    g_bwd: &Array2<f64>,
) -> Result<f64> {
    check_batch(batch, g_fwd, g_bwd)?;
    let lse = |anchor: ArrayView1<f64>, negs: &[usize]| -> f64 {
        if negs.is_empty() {
            return 0.0;
        }
        let d: Vec<f64> = negs.iter().map(|&k| mse(anchor, z.row(k))).collect();
        let top = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        top + d.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
    };
    let mut total = 0.0;
    for (e, &(i, j)) in batch.edges.iter().enumerate() {
        let negs = &batch.negatives[e];
        total += mse(y.row(i), g_fwd.row(e)) - lse(y.row(i), negs);
        total += mse(y.row(j), g_bwd.row(e)) - lse(y.row(j), negs);
    }
    Ok(total / batch.len() as f64)
}

/// Cross-entropy over labeled batch endpoints and their edge partners.
/// Returns the loss and the number of terms.
pub fn classification_loss(
    batch: &EdgeBatch,
    y: &Array2<f64>,
    z: &Array2<f64>,
    labels: &[usize],
    train_mask: &[bool],
) -> Result<(f64, usize)> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter("empty edge batch".into()));
    }
    let lab: Vec<Option<usize>> = labels
        .iter()
        .zip(train_mask)
        .map(|(&l, &m)| m.then_some(l))
        .collect();
    Ok(cla_kernel(&batch.edges, &lab, y, z, None))
}

/// Everything the lower-level step needs from one batch evaluation.
#[derive(Debug, Clone)]
pub struct BatchEvaluation {
    pub report: LossReport,
    pub grad: BackboneGrad,
    /// `d L_smooth / d edge value` when edge weights were supplied.
    pub weight_grad: Option<Vec<f64>>,
    /// Unweighted per-edge smoothness terms.
    pub edge_terms: Vec<f64>,
    pub cache: ForwardCache,
}

/// Runs the backbone on the batch's nodes and evaluates
/// `L_total = L_smooth + L_cla` with its gradient with respect to every
/// backbone parameter.
///
/// `edge_weights`, when given, turns the smoothness part into the
/// explicit-weight objective and also returns its edge-value gradient.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_batch(
    backbone: &Backbone,
    features: &Array2<f64>,
    labels: &[usize],
    train_mask: &[bool],
    batch: &EdgeBatch,
    cfg: &LossConfig,
    mode: ForwardMode,
    edge_weights: Option<&[f64]>,
) -> Result<BatchEvaluation> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter("empty edge batch".into()));
    }
    if let Some(w) = edge_weights {
        if w.len() != batch.len() {
            return Err(Error::ShapeMismatch(format!("{} weights for {} edges", w.len(), batch.len())));
        }
    }
    // Local node set: endpoints and negatives, sorted for determinism.
    let mut nodes: Vec<usize> = batch.edges.iter().flat_map(|&(i, j)| [i, j]).collect();
    if cfg.use_negatives {
        nodes.extend(batch.negatives.iter().flatten().copied());
    }
    nodes.sort_unstable();
    nodes.dedup();
    let mut local = vec![usize::MAX; features.nrows()];
    for (l, &v) in nodes.iter().enumerate() {
        local[v] = l;
    }
    let edges: Vec<(usize, usize)> = batch.edges.iter().map(|&(i, j)| (local[i], local[j])).collect();
    let negatives: Vec<Vec<usize>> = if cfg.use_negatives {
        batch.negatives.iter().map(|ks| ks.iter().map(|&k| local[k]).collect()).collect()
    } else {
        vec![Vec::new(); batch.len()]
    };
    let local_labels: Vec<Option<usize>> = nodes
        .iter()
        .map(|&v| train_mask[v].then_some(labels[v]))
        .collect();

    let x = features.select(Axis(0), &nodes);
    let (h, cache) = backbone.forward(&x, mode)?;
    let (y, z) = backbone.heads(&h)?;

    // Directed pairs: rows 0..B are i -> j, rows B..2B are j -> i.
    let nb = edges.len();
    let f = backbone.hidden();
    let src: Vec<usize> = edges.iter().map(|e| e.0).chain(edges.iter().map(|e| e.1)).collect();
    let dst: Vec<usize> = edges.iter().map(|e| e.1).chain(edges.iter().map(|e| e.0)).collect();
    let hs = h.select(Axis(0), &src);
    let hd = h.select(Axis(0), &dst);
    let a_src = backbone.interp.slice(s![..f]);
    let a_dst = backbone.interp.slice(s![f..]);
    let beta: Array1<f64> = match cfg.fixed_beta {
        Some(b) => Array1::from_elem(2 * nb, b),
        None => (hs.dot(&a_src) + hd.dot(&a_dst)).mapv(sigmoid),
    };
    let beta_col = beta.view().insert_axis(Axis(1));
    let mixed = &hd * &beta_col + &hs * &beta_col.mapv(|b| 1.0 - b);
    let g_all = mixed.dot(&backbone.head_g);
    let g_fwd = g_all.slice(s![..nb, ..]).to_owned();
    let g_bwd = g_all.slice(s![nb.., ..]).to_owned();

    let mut dy = Array2::<f64>::zeros(y.raw_dim());
    let mut dz = Array2::<f64>::zeros(z.raw_dim());
    let mut dg_fwd = Array2::<f64>::zeros(g_fwd.raw_dim());
    let mut dg_bwd = Array2::<f64>::zeros(g_bwd.raw_dim());
    let (smooth, edge_terms) = smooth_kernel(
        &edges,
        &negatives,
        &y,
        &z,
        &g_fwd,
        &g_bwd,
        cfg,
        edge_weights,
        Some(RepGrads {
            dy: &mut dy,
            dz: &mut dz,
            dg_fwd: &mut dg_fwd,
            dg_bwd: &mut dg_bwd,
        }),
    );
    let (cla, cla_terms) = cla_kernel(&edges, &local_labels, &y, &z, Some((&mut dy, &mut dz)));
    let report = LossReport {
        mean_beta: beta.mean().unwrap_or(f64::NAN),
        ..LossReport::new(smooth, cla, cla_terms)
    };
    if !report.total.is_finite() {
        return Err(Error::NonFinite(format!(
            "batch loss (smooth={smooth}, cla={cla}) on edges {:?}",
            &batch.edges[..batch.len().min(8)]
        )));
    }

    let mut dg = Array2::<f64>::zeros(g_all.raw_dim());
    dg.slice_mut(s![..nb, ..]).assign(&dg_fwd);
    dg.slice_mut(s![nb.., ..]).assign(&dg_bwd);

    let head_f_grad = h.t().dot(&dy);
    let head_g_grad = h.t().dot(&dz) + mixed.t().dot(&dg);
    let mut dh = dy.dot(&backbone.head_f.t()) + dz.dot(&backbone.head_g.t());
    let d_mixed = dg.dot(&backbone.head_g.t());
    let mut interp_grad = Array1::<f64>::zeros(2 * f);
    for r in 0..2 * nb {
        let b = beta[r];
        let dm = d_mixed.row(r);
        {
            let mut row = dh.row_mut(src[r]);
            row.scaled_add(1.0 - b, &dm);
        }
        {
            let mut row = dh.row_mut(dst[r]);
            row.scaled_add(b, &dm);
        }
        if cfg.fixed_beta.is_none() {
            let d_beta = dm.dot(&(&hd.row(r) - &hs.row(r)));
            let d_logit = d_beta * b * (1.0 - b);
            interp_grad.slice_mut(s![..f]).scaled_add(d_logit, &hs.row(r));
            interp_grad.slice_mut(s![f..]).scaled_add(d_logit, &hd.row(r));
            dh.row_mut(src[r]).scaled_add(d_logit, &a_src);
            dh.row_mut(dst[r]).scaled_add(d_logit, &a_dst);
        }
    }

    let (mut grad, _) = backbone.backward(&cache, dh);
    grad.head_f = head_f_grad;
    grad.head_g = head_g_grad;
    grad.interp = interp_grad;

    let weight_grad = edge_weights.map(|_| edge_terms.iter().map(|t| t / nb as f64).collect());
    Ok(BatchEvaluation {
        report,
        grad,
        weight_grad,
        edge_terms,
        cache,
    })
}

/// Fraction of rows of `logits` whose argmax equals the label, over `nodes`.
pub(crate) fn accuracy_of(logits: &Array2<f64>, labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let hits = nodes.iter().filter(|&&v| argmax(logits.row(v)) == labels[v]).count();
    hits as f64 / nodes.len() as f64
}
