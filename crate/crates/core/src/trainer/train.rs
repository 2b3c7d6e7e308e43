use std::collections::HashMap;

use log::{debug, info, warn};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::{MetricsRecord, Phase};
use super::objective::{homophily_objective, Relaxation};
use super::{ObjectiveMode, TrainConfig};
use crate::contrast::{accuracy_of, epoch_batches, evaluate_batch, NegativeSampler};
use crate::graph::edge_homophily;
use crate::nn::ops::argmax;
use crate::nn::{Backbone, Direction, ForwardMode, Optimizer};
use crate::sparsifier::{SparsifiedSubgraph, Sparsifier};
use crate::{Error, Graph, Result};

/// Aggregate of one lower-level epoch.
#[derive(Debug, Clone, Default)]
pub struct LowerOutcome {
    pub smooth: f64,
    pub cla: f64,
    pub total: f64,
    pub batches: usize,
    pub unlabeled_batches: usize,
    pub mean_beta: f64,
    /// `d L' / d v_e` summed over the epoch, keyed by edge. Filled only when
    /// edge-value gradients were requested.
    pub edge_grad: HashMap<(usize, usize), f64>,
}

/// One pass over the sampled edge set, one optimizer step per batch.
///
/// Batches are drawn in shuffled order with degree-proportional negatives.
/// Running BN statistics are refreshed after every step.
#[allow(clippy::too_many_arguments)]
pub fn lower_step(
    backbone: &mut Backbone,
    opt: &mut Optimizer,
    graph: &Graph,
    train_mask: &[bool],
    kept_edges: &[(usize, usize)],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    want_edge_grad: bool,
) -> Result<LowerOutcome> {
    let sampler = NegativeSampler::new(kept_edges, graph.n_nodes(), cfg.exclude_neighbor_negatives)?;
    let batches = epoch_batches(kept_edges, &sampler, cfg.batch_size, cfg.negatives, rng);
    let loss_cfg = cfg.loss_config();
    let mut out = LowerOutcome::default();
    let mut weight = 0.0;
    for batch in &batches {
        let ones = vec![1.0; batch.len()];
        let mode = ForwardMode::Train { seed: rng.random() };
        let eval = evaluate_batch(
            backbone,
            graph.features(),
            graph.labels(),
            train_mask,
            batch,
            &loss_cfg,
            mode,
            want_edge_grad.then_some(ones.as_slice()),
        )?;
        if !eval.grad.is_finite() {
            return Err(Error::NonFinite(format!("backbone gradient on batch {:?}", batch.edges)));
        }
        opt.step(backbone.param_slices_mut(), eval.grad.slices(), Direction::Descend);
        backbone.update_running_stats(&eval.cache);
        if !backbone.is_finite() {
            return Err(Error::NonFinite(format!("backbone parameters after batch {:?}", batch.edges)));
        }
        let b = batch.len() as f64;
        out.smooth += eval.report.smooth * b;
        out.cla += eval.report.cla * b;
        out.mean_beta += eval.report.mean_beta * b;
        weight += b;
        out.batches += 1;
        out.unlabeled_batches += usize::from(eval.report.unlabeled_batch);
        if let Some(wg) = eval.weight_grad {
            for (&e, g) in batch.edges.iter().zip(wg) {
                *out.edge_grad.entry(e).or_default() += g;
            }
        }
    }
    if weight > 0.0 {
        out.smooth /= weight;
        out.cla /= weight;
        out.mean_beta /= weight;
    }
    out.total = out.smooth + out.cla;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperOutcome {
    /// Relaxed homophily under the pseudo-labels before the step.
    pub relaxed_before: f64,
    pub relaxed_after: f64,
    pub backtracked: bool,
}

/// Soft-relaxed homophily of the sparsifier's sample, reusing `sub`'s noise.
fn relaxed_homophily(
    sparsifier: &Sparsifier,
    x: &Array2<f64>,
    sub: &SparsifiedSubgraph,
    labels: &[usize],
) -> Result<f64> {
    let frozen = sparsifier.sample_frozen(x, &sub.edges, sub.noise.clone())?;
    Ok(homophily_objective(&frozen, labels, Relaxation::Soft)?.0)
}

/// One sparsifier update.
///
/// In homophily mode this ascends the straight-through objective. If the
/// relaxed objective (same noise) drops after the optimizer step, the step
/// is replaced by a plain gradient step at a tenth of the learning rate and
/// the optimizer state is left untouched.
///
/// In explicit-weight mode it descends `edge_grad`, the accumulated
/// derivative of the weighted smoothness loss with respect to edge values.
pub fn upper_step(
    sparsifier: &mut Sparsifier,
    opt: &mut Optimizer,
    x: &Array2<f64>,
    sub: &SparsifiedSubgraph,
    pseudo_labels: &[usize],
    objective: ObjectiveMode,
    edge_grad: &HashMap<(usize, usize), f64>,
) -> Result<UpperOutcome> {
    let before = relaxed_homophily(sparsifier, x, sub, pseudo_labels)?;
    let (d_values, direction) = match objective {
        ObjectiveMode::Homophily => (
            homophily_objective(sub, pseudo_labels, Relaxation::StraightThrough)?.1,
            Direction::Ascend,
        ),
        ObjectiveMode::ExplicitWeight => (
            sub.edges
                .iter()
                .map(|e| edge_grad.get(e).copied().unwrap_or(0.0))
                .collect(),
            Direction::Descend,
        ),
    };
    let grad = sparsifier.backward(x, sub, &d_values)?;
    let mut trial = sparsifier.clone();
    let mut trial_opt = opt.clone();
    trial_opt.step(
        vec![trial.embed.as_slice_mut().expect("contiguous")],
        vec![grad.as_slice().expect("contiguous")],
        direction,
    );
    let mut after = relaxed_homophily(&trial, x, sub, pseudo_labels)?;
    let mut backtracked = false;
    if objective == ObjectiveMode::Homophily && after < before {
        trial = sparsifier.clone();
        trial.embed.scaled_add(opt.lr / 10.0, &grad);
        after = relaxed_homophily(&trial, x, sub, pseudo_labels)?;
        backtracked = true;
        debug!("upper step backtracked: relaxed H {before:.6} -> {after:.6}");
    } else {
        *opt = trial_opt;
    }
    trial.validate()?;
    *sparsifier = trial;
    Ok(UpperOutcome {
        relaxed_before: before,
        relaxed_after: after,
        backtracked,
    })
}

/// Model state at the epoch with the best validation accuracy.
#[derive(Debug, Clone)]
pub struct BestModel {
    pub epoch: usize,
    pub val_acc: f64,
    pub test_acc: f64,
    pub backbone: Backbone,
    pub sparsifier: Sparsifier,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub backbone: Backbone,
    pub sparsifier: Sparsifier,
    pub best: BestModel,
    pub history: Vec<MetricsRecord>,
}

/// Pseudo-labels: predicted classes, optionally overridden by the known
/// labels of training nodes.
pub fn pseudo_labels(logits: &Array2<f64>, graph: &Graph, truth_on_train: bool) -> Vec<usize> {
    let mut labels: Vec<usize> = logits.rows().into_iter().map(argmax).collect();
    if truth_on_train {
        for &v in &graph.splits().train {
            labels[v] = graph.labels()[v];
        }
    }
    labels
}

pub fn train(graph: &Graph, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(graph, cfg, |_| Ok(()))
}

/// Warm-up on the original graph with the sparsifier frozen, then
/// alternate one lower epoch on a fresh subgraph with one sparsifier step.
///
/// `on_epoch` sees every metrics record as soon as it is produced.
pub fn train_with(
    graph: &Graph,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&MetricsRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if graph.n_edges() == 0 {
        return Err(Error::DegenerateSubgraph("graph has no edges to contrast over".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x = graph.features();
    let mut backbone = Backbone::new(
        graph.n_features(),
        cfg.hidden,
        cfg.layers,
        graph.n_classes(),
        cfg.dropout,
        &mut rng,
    )?;
    let mut sparsifier = Sparsifier::new(graph.n_features(), cfg.hidden, cfg.fusion, cfg.temperature, &mut rng)?;
    let mut opt_theta = Optimizer::new(cfg.optimizer, cfg.lr_theta, cfg.weight_decay);
    let mut opt_psi = Optimizer::new(cfg.optimizer, cfg.lr_psi, 0.0);
    let train_mask = graph.train_mask();
    let splits = graph.splits().clone();
    let want_edge_grad = cfg.objective == ObjectiveMode::ExplicitWeight;

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<BestModel> = None;

    for epoch in 0..cfg.epochs {
        let phase = if epoch < cfg.warmup_epochs {
            Phase::Warmup
        } else {
            Phase::Bilevel
        };
        let mut fallback = false;
        let sub = match phase {
            Phase::Warmup => SparsifiedSubgraph::full(graph.edges()),
            Phase::Bilevel => {
                let mut sub = sparsifier.sample(x, graph.edges(), rng.random())?;
                if sub.hard_count() == 0 {
                    warn!("epoch {epoch}: empty subgraph sampled, resampling once");
                    sub = sparsifier.sample(x, graph.edges(), rng.random())?;
                }
                if sub.hard_count() == 0 {
                    warn!("epoch {epoch}: subgraph empty again, training on the original edges");
                    fallback = true;
                }
                sub
            }
        };
        let kept = if fallback {
            graph.edges().to_vec()
        } else {
            sub.kept_edges()
        };

        let mut lower = LowerOutcome::default();
        for _ in 0..cfg.inner_steps {
            lower = lower_step(
                &mut backbone,
                &mut opt_theta,
                graph,
                &train_mask,
                &kept,
                cfg,
                &mut rng,
                want_edge_grad && phase == Phase::Bilevel,
            )?;
        }

        let logits = backbone.predict_logits(x)?;
        let pseudo = pseudo_labels(&logits, graph, cfg.truth_pseudo_labels);

        let mut backtracked = false;
        let mut soft_objective = None;
        if phase == Phase::Bilevel && !fallback {
            if cfg.freeze_sparsifier {
                soft_objective = relaxed_homophily(&sparsifier, x, &sub, &pseudo).ok();
            } else {
                match upper_step(
                    &mut sparsifier,
                    &mut opt_psi,
                    x,
                    &sub,
                    &pseudo,
                    cfg.objective,
                    &lower.edge_grad,
                ) {
                    Ok(up) => {
                        backtracked = up.backtracked;
                        soft_objective = Some(up.relaxed_before);
                    }
                    Err(Error::DegenerateSubgraph(msg)) => {
                        warn!("epoch {epoch}: upper step skipped: {msg}");
                    }
                    Err(e) => return Err(e),
                }
            }
        }

        let expected_edge_count = match phase {
            Phase::Warmup => graph.n_edges() as f64,
            Phase::Bilevel => sub.strategy.iter().map(|m| 1.0 - (-m).exp()).sum(),
        };
        let record = MetricsRecord {
            epoch,
            phase,
            loss_smooth: lower.smooth,
            loss_cla: lower.cla,
            loss_total: lower.total,
            hard_edge_count: kept.len(),
            expected_edge_count,
            hard_homophily_pseudo: edge_homophily(&kept, &pseudo).ratio,
            hard_homophily_true: edge_homophily(&kept, graph.labels()).ratio,
            soft_homophily_objective: soft_objective,
            train_acc: accuracy_of(&logits, graph.labels(), &splits.train),
            val_acc: accuracy_of(&logits, graph.labels(), &splits.val),
            test_acc: accuracy_of(&logits, graph.labels(), &splits.test),
            upper_backtracked: backtracked,
            subgraph_fallback: fallback,
            unlabeled_batches: lower.unlabeled_batches,
            mean_beta: lower.mean_beta,
            clamped_strategies: sub.clamped,
        };
        info!(
            "epoch {epoch:>4} {:?} loss {:.4} edges {} H {:.3} val {:.3} test {:.3}",
            phase,
            record.loss_total,
            record.hard_edge_count,
            record.hard_homophily_true,
            record.val_acc,
            record.test_acc
        );
        let improved = best.as_ref().is_none_or(|b| record.val_acc > b.val_acc);
        if improved {
            best = Some(BestModel {
                epoch,
                val_acc: record.val_acc,
                test_acc: record.test_acc,
                backbone: backbone.clone(),
                sparsifier: sparsifier.clone(),
            });
        }
        on_epoch(&record)?;
        history.push(record);
    }

    Ok(TrainOutcome {
        backbone,
        sparsifier,
        best: best.expect("at least one epoch"),
        history,
    })
}
