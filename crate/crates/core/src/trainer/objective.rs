//! Homophily-oriented upper-level objective.
//!
//! `H = sum_e v_e * [s_i == s_j] / sum_e v_e` over the original edges, where
//! `v_e` is the edge's sample value and `s` are pseudo-labels. The
//! denominator is the differentiable size of `E'_g`; the indicator is
//! constant with respect to the sparsifier.

use crate::sparsifier::SparsifiedSubgraph;
use crate::{Error, Result};

/// Which per-edge value enters the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relaxation {
    /// Hard samples forward, soft derivative backward (used for training).
    StraightThrough,
    /// Soft values both ways (a smooth surrogate for checking and line search).
    Soft,
}

const MIN_DENOMINATOR: f64 = 1e-8;

/// Objective value and its derivative with respect to each edge value.
pub fn homophily_objective(
    sub: &SparsifiedSubgraph,
    pseudo_labels: &[usize],
    relaxation: Relaxation,
) -> Result<(f64, Vec<f64>)> {
    let values: Vec<f64> = match relaxation {
        Relaxation::StraightThrough => sub.straight_through(),
        Relaxation::Soft => sub.soft.clone(),
    };
    homophily_from_values(&sub.edges, &values, pseudo_labels)
}

pub(crate) fn homophily_from_values(
    edges: &[(usize, usize)],
    values: &[f64],
    labels: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let same: Vec<f64> = edges
        .iter()
        .map(|&(i, j)| if labels[i] == labels[j] { 1.0 } else { 0.0 })
        .collect();
    let den: f64 = values.iter().sum();
    if den < MIN_DENOMINATOR {
        return Err(Error::DegenerateSubgraph(format!(
            "homophily denominator {den} below {MIN_DENOMINATOR}"
        )));
    }
    let num: f64 = values.iter().zip(&same).map(|(v, s)| v * s).sum();
    let h = num / den;
    let grad = same.iter().map(|s| (s - h) / den).collect();
    Ok((h, grad))
}
