//! Brute-force reference implementations.
//!
//! Everything here is written for obviousness, not speed, and is guarded to
//! stay at toy sizes. The optimized kernel, gradient, and evaluation paths
//! are tested against these oracles:
//!
//! * [`enumerate_common_walks`] literally enumerates walks in both graphs and
//!   counts pairs whose label sequences agree at **every** position.
//! * [`finite_difference_gradient`] differentiates any scalar function by
//!   central differences.
//! * [`brute_force_ged`] minimizes the weighted edit cost over all node
//!   bijections by exhaustive (pruned) permutation search.

use std::collections::HashMap;

use crate::graph::AttributedGraph;
use crate::{Error, Result};

/// Node-count guard for the exponential searches in this module.
pub const MAX_ORACLE_NODES: usize = 8;
/// Walk-length guard for [`enumerate_common_walks`].
pub const MAX_ORACLE_STEPS: usize = 5;

// ===== walk enumeration =====

fn require_binary(g: &AttributedGraph, side: &str) -> Result<()> {
    if g.adjacency().iter().any(|&w| w != 0.0 && w != 1.0) {
        return Err(Error::validation(format!(
            "walk enumeration needs a binary adjacency on the {side} side"
        )));
    }
    Ok(())
}

/// Counts, for each step `i = 1..=t`, the pairs of `i`-edge walks (one per
/// graph) whose node-label sequences match position by position.
///
/// This is the definitional form of the labeled walk kernel: a walk on the
/// direct product graph is exactly such a pair. Guarded to
/// `n, m ≤ `[`MAX_ORACLE_NODES`] and `t ≤ `[`MAX_ORACLE_STEPS`].
pub fn enumerate_common_walks(
    g: &AttributedGraph,
    h: &AttributedGraph,
    t: usize,
) -> Result<Vec<u64>> {
    if g.n() > MAX_ORACLE_NODES || h.n() > MAX_ORACLE_NODES {
        return Err(Error::resource(format!(
            "walk enumeration is limited to {MAX_ORACLE_NODES} nodes per graph"
        )));
    }
    if t == 0 || t > MAX_ORACLE_STEPS {
        return Err(Error::resource(format!(
            "walk enumeration is limited to 1..={MAX_ORACLE_STEPS} steps, got {t}"
        )));
    }
    if !g.is_labeled() || !h.is_labeled() {
        return Err(Error::validation(
            "walk enumeration requires labeled graphs",
        ));
    }
    require_binary(g, "first")?;
    require_binary(h, "second")?;

    // Shared palette across both graphs, keyed by label string.
    let mut palette: HashMap<String, usize> = HashMap::new();
    fn intern(palette: &mut HashMap<String, usize>, labels: &[String]) -> Vec<usize> {
        labels
            .iter()
            .map(|l| {
                let next = palette.len();
                *palette.entry(l.clone()).or_insert(next)
            })
            .collect()
    }
    let gl = intern(&mut palette, g.labels().unwrap());
    let hl = intern(&mut palette, h.labels().unwrap());

    let counts_g = walk_sequence_counts(g, &gl, t);
    let counts_h = walk_sequence_counts(h, &hl, t);

    Ok((1..=t)
        .map(|i| {
            counts_g[i]
                .iter()
                .map(|(seq, &cg)| cg * counts_h[i].get(seq).copied().unwrap_or(0))
                .sum()
        })
        .collect())
}

/// For each walk length `0..=t`, a map from label sequence to the number of
/// walks realizing it.
fn walk_sequence_counts(
    g: &AttributedGraph,
    labels: &[usize],
    t: usize,
) -> Vec<HashMap<Vec<usize>, u64>> {
    let n = g.n();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|u| {
            (0..n)
                .filter(|&v| g.adjacency()[[u, v]] != 0.0)
                .collect()
        })
        .collect();
    let mut counts: Vec<HashMap<Vec<usize>, u64>> = vec![HashMap::new(); t + 1];
    // Walks are expanded breadth-first by length: a walk of length i is a
    // walk of length i-1 plus one more edge.
    let mut frontier: Vec<(usize, Vec<usize>)> =
        (0..n).map(|u| (u, vec![labels[u]])).collect();
    for (_, seq) in &frontier {
        *counts[0].entry(seq.clone()).or_insert(0) += 1;
    }
    for i in 1..=t {
        let mut next = Vec::new();
        for (end, seq) in &frontier {
            for &v in &neighbors[*end] {
                let mut s = seq.clone();
                s.push(labels[v]);
                *counts[i].entry(s.clone()).or_insert(0) += 1;
                next.push((v, s));
            }
        }
        frontier = next;
    }
    counts
}

// ===== finite differences =====

/// Central-difference gradient of `loss` at `x` with step `h`:
/// `g_i = (loss(x + h·e_i) − loss(x − h·e_i)) / 2h`.
pub fn finite_difference_gradient<F>(x: &[f64], mut loss: F, h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = loss(&probe);
            probe[i] = x[i] - h;
            let down = loss(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest relative deviation between an analytic gradient and its
/// finite-difference estimate; entries tiny on both sides are skipped.
pub fn max_relative_gradient_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| {
            let scale = a.abs().max(n.abs());
            if scale < 1e-6 {
                0.0
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

// ===== brute-force graph edit distance =====

/// Exact minimum edit cost between a (possibly weighted) learned graph and a
/// binary ground-truth graph of the same size, over all node bijections.
///
/// Learned edge weights are min–max normalized into `[0, 1]` across the
/// off-diagonal entries first (left untouched when they are all equal, so a
/// uniform 0.5 stays 0.5 and binary weights stay binary). Under a bijection
/// π, a ground-truth edge `(i, j)` costs `1 − w[π(i), π(j)]` (the weight
/// missing toward a full edge) and a ground-truth non-edge costs
/// `w[π(i), π(j)]` (the weight that must be removed). With `with_labels`,
/// every node whose arg-max feature color differs from the ground truth adds
/// a cost of 1.
pub fn brute_force_ged(
    learned: &AttributedGraph,
    truth: &AttributedGraph,
    with_labels: bool,
) -> Result<f64> {
    let m = truth.n();
    if learned.n() != m {
        return Err(Error::validation(format!(
            "edit distance compares equal-sized graphs, got {} vs {m}",
            learned.n()
        )));
    }
    if m > MAX_ORACLE_NODES {
        return Err(Error::resource(format!(
            "edit distance search is limited to {MAX_ORACLE_NODES} nodes"
        )));
    }
    if with_labels && learned.feature_dim() != truth.feature_dim() {
        return Err(Error::validation(format!(
            "label comparison needs matching feature dimensions, got {} vs {}",
            learned.feature_dim(),
            truth.feature_dim()
        )));
    }

    // Min–max normalize learned weights over off-diagonal entries.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                lo = lo.min(learned.adjacency()[[i, j]]);
                hi = hi.max(learned.adjacency()[[i, j]]);
            }
        }
    }
    let span = hi - lo;
    let weight = |i: usize, j: usize| -> f64 {
        let w = learned.adjacency()[[i, j]];
        if span > 1e-12 {
            (w - lo) / span
        } else {
            w.clamp(0.0, 1.0)
        }
    };

    let truth_colors = argmax_colors(truth);
    let learned_colors = argmax_colors(learned);

    // Exhaustive permutation search with partial-cost pruning: nodes of the
    // ground truth are assigned in order, and a branch is cut as soon as the
    // cost of the assigned prefix reaches the best complete assignment.
    let mut assignment = vec![usize::MAX; m];
    let mut used = vec![false; m];
    let mut best = f64::INFINITY;
    fn search(
        i: usize,
        m: usize,
        cost: f64,
        assignment: &mut [usize],
        used: &mut [bool],
        best: &mut f64,
        truth: &AttributedGraph,
        weight: &dyn Fn(usize, usize) -> f64,
        with_labels: bool,
        truth_colors: &[usize],
        learned_colors: &[usize],
    ) {
        if cost >= *best {
            return;
        }
        if i == m {
            *best = cost;
            return;
        }
        for cand in 0..m {
            if used[cand] {
                continue;
            }
            let mut step = 0.0;
            if with_labels && truth_colors[i] != learned_colors[cand] {
                step += 1.0;
            }
            for j in 0..i {
                let w = weight(assignment[j], cand);
                if truth.adjacency()[[j, i]] != 0.0 {
                    step += 1.0 - w;
                } else {
                    step += w;
                }
            }
            assignment[i] = cand;
            used[cand] = true;
            search(
                i + 1,
                m,
                cost + step,
                assignment,
                used,
                best,
                truth,
                weight,
                with_labels,
                truth_colors,
                learned_colors,
            );
            used[cand] = false;
            assignment[i] = usize::MAX;
        }
    }
    search(
        0,
        m,
        0.0,
        &mut assignment,
        &mut used,
        &mut best,
        truth,
        &weight,
        with_labels,
        &truth_colors,
        &learned_colors,
    );
    Ok(best)
}

/// Arg-max color index per node (lowest index wins ties).
pub fn argmax_colors(g: &AttributedGraph) -> Vec<usize> {
    (0..g.n())
        .map(|i| {
            let row = g.features().row(i);
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}
