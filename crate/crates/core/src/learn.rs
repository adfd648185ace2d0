//! Learnable hidden graphs and the unsupervised pattern-mining objective.
//!
//! A [`HiddenGraph`] stores free parameters: a raw adjacency matrix realized
//! as `sigmoid((R + Rᵀ)/2)` with a zero diagonal, and raw node features
//! realized as `sigmoid(F)` (or taken as-is when frozen). Training maximizes
//! total walk-kernel similarity between the hidden graphs and every database
//! graph, minus a diversity penalty that pushes hidden graphs apart and an
//! L1 sparsity penalty on the realized parameters:
//!
//! ```text
//! loss = − Σ_{G ∈ db} Σ_k K(G, W_k)
//!        + diversity_weight · 2/(k(k−1)) · Σ_{a<b} K(W_a, W_b)
//!        + sparsity_weight · ‖realized‖₁
//! ```
//!
//! All gradients are derived by hand (reverse mode through the fast kernel
//! loop, the `d×d` endpoint-kernel rewrite, the sigmoid realizations, degree
//! normalization, and batch step-normalization) and validated against
//! central finite differences. Optimization is full-batch SGD with momentum;
//! per-graph work is data-parallel with a fixed-order reduction, so training
//! is bit-reproducible for a given seed.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::graph::{degree_normalize, AttributedGraph, GraphDatabase};
use crate::kernels::{
    combine_scores, fast_backward, fast_forward, sigmoid, KernelConfig, Normalization,
    StepNormState,
};
use crate::par;
use crate::{Error, Result};

// ===== hidden graphs =====

/// A hidden graph: free parameters realized into a weighted attributed graph.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenGraph {
    /// `m×m` raw adjacency parameters; walked as `sigmoid((R+Rᵀ)/2)`, zero
    /// diagonal.
    pub raw_adjacency: Array2<f64>,
    /// `m×d` raw feature parameters; realized through a sigmoid unless
    /// frozen.
    pub raw_features: Array2<f64>,
    /// When set, realized features are the raw values and receive no
    /// gradient (used for constant-feature baselines).
    pub freeze_features: bool,
}

impl HiddenGraph {
    /// Random initialization: adjacency parameters uniform in `[−1, 1]`,
    /// feature parameters uniform in `[0, 1]`.
    pub fn init(m: usize, d: usize, rng: &mut ChaCha12Rng) -> Self {
        let mut raw_adjacency = Array2::zeros((m, m));
        for x in raw_adjacency.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
        let mut raw_features = Array2::zeros((m, d));
        for x in raw_features.iter_mut() {
            *x = rng.random_range(0.0..1.0);
        }
        HiddenGraph {
            raw_adjacency,
            raw_features,
            freeze_features: false,
        }
    }

    pub fn nodes(&self) -> usize {
        self.raw_adjacency.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.raw_features.ncols()
    }

    /// Realizes the parameters into a weighted attributed graph with
    /// adjacency entries in `(0, 1)`, a zero diagonal, and (unless frozen)
    /// feature entries in `(0, 1)`.
    pub fn realize(&self) -> AttributedGraph {
        let m = self.nodes();
        let mut adj = Array2::zeros((m, m));
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    adj[[i, j]] =
                        sigmoid(0.5 * (self.raw_adjacency[[i, j]] + self.raw_adjacency[[j, i]]));
                }
            }
        }
        let feats = if self.freeze_features {
            self.raw_features.clone()
        } else {
            self.raw_features.mapv(sigmoid)
        };
        AttributedGraph::new(adj, feats, None).expect("realization keeps all graph invariants")
    }
}

/// Chains gradients on a realized graph back to the raw parameters.
///
/// `d_adj`/`d_feat` are `∂L/∂(realized adjacency)` and `∂L/∂(realized
/// features)`. The returned raw-adjacency gradient is symmetric by
/// construction (it is `(M + Mᵀ)/2` for the post-sigmoid gradient `M`).
pub fn realization_backward(
    hidden: &HiddenGraph,
    realized: &AttributedGraph,
    d_adj: &Array2<f64>,
    d_feat: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let m = hidden.nodes();
    let mut d_pre = Array2::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let a = realized.adjacency()[[i, j]];
                d_pre[[i, j]] = d_adj[[i, j]] * a * (1.0 - a);
            }
        }
    }
    let d_raw_adj = 0.5 * (&d_pre + &d_pre.t());
    let d_raw_feat = if hidden.freeze_features {
        Array2::zeros(hidden.raw_features.raw_dim())
    } else {
        let x = realized.features();
        let mut out = d_feat.clone();
        out.zip_mut_with(x, |g, &xi| *g *= xi * (1.0 - xi));
        out
    };
    (d_raw_adj, d_raw_feat)
}

/// Reverse-mode pass through `N = D^{-1/2}·A·D^{-1/2}` (degrees from row
/// sums). `d_n = ∂L/∂N`; returns `∂L/∂A` including the coupling through the
/// degrees. Zero-degree rows receive zero gradient, matching the forward
/// convention.
pub fn degree_normalize_backward(a: &Array2<f64>, d_n: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    // ∂L/∂d_p = −½·d_p^{-3/2}·[Σ_j U_pj·A_pj·d_j^{-1/2} + Σ_i U_ip·A_ip·d_i^{-1/2}]
    let mut d_deg = vec![0.0; n];
    for p in 0..n {
        if deg[p] <= 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for j in 0..n {
            acc += d_n[[p, j]] * a[[p, j]] * inv_sqrt[j];
            acc += d_n[[j, p]] * a[[j, p]] * inv_sqrt[j];
        }
        d_deg[p] = -0.5 * deg[p].powf(-1.5) * acc;
    }
    let mut out = Array2::zeros((n, n));
    for p in 0..n {
        for q in 0..n {
            out[[p, q]] = d_n[[p, q]] * inv_sqrt[p] * inv_sqrt[q] + d_deg[p];
        }
    }
    out
}

// ===== configuration =====

/// Which kernel the objective is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    /// Color-matching kernel (fast form); feature agreement at every step.
    ColorMatching,
    /// Endpoint-only kernel (`d×d` rewrite); the comparison baseline.
    EndpointOnly,
}

/// Full training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Number of hidden graphs `k`.
    pub hidden_graphs: usize,
    /// Nodes per hidden graph `m`.
    pub hidden_nodes: usize,
    pub kernel: KernelFamily,
    pub kernel_cfg: KernelConfig,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Weight of the pairwise hidden-similarity penalty (0 disables).
    pub diversity_weight: f64,
    /// Weight of the L1 penalty on realized hidden adjacencies.
    pub sparsity_weight: f64,
    /// Extend the L1 penalty to realized hidden features.
    pub sparsity_on_features: bool,
    /// Train adjacency only; features stay at their initial raw values.
    pub freeze_features: bool,
    pub seed: u64,
    pub restarts: usize,
}

impl TrainConfig {
    /// Sensible defaults: one 4-node hidden graph, color-matching kernel,
    /// SGD(lr 0.01, momentum 0.9), no regularization, 50 restarts.
    pub fn new(kernel_cfg: KernelConfig) -> Self {
        TrainConfig {
            hidden_graphs: 1,
            hidden_nodes: 4,
            kernel: KernelFamily::ColorMatching,
            kernel_cfg,
            lr: 0.01,
            momentum: 0.9,
            epochs: 300,
            diversity_weight: 0.0,
            sparsity_weight: 0.0,
            sparsity_on_features: false,
            freeze_features: false,
            seed: 0,
            restarts: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel_cfg.validate()?;
        if self.hidden_graphs == 0 {
            return Err(Error::validation("training needs at least one hidden graph"));
        }
        if self.hidden_nodes < 2 {
            return Err(Error::validation("hidden graphs need at least two nodes"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::validation("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::validation("momentum must lie in [0, 1)"));
        }
        if self.diversity_weight < 0.0 || self.sparsity_weight < 0.0 {
            return Err(Error::validation("regularizer weights must be nonnegative"));
        }
        if self.restarts == 0 {
            return Err(Error::validation("at least one restart is required"));
        }
        Ok(())
    }
}

/// Deterministic per-restart seed derivation.
pub fn derive_restart_seed(base: u64, restart: usize) -> u64 {
    base ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

// ===== objective =====

/// Decomposition of one objective evaluation.
#[derive(Debug, Clone)]
pub struct ObjectiveParts {
    pub loss: f64,
    /// Total (normalized) similarity between hidden graphs and the database.
    pub fit: f64,
    /// Mean pairwise hidden-graph similarity (0 when `k == 1`).
    pub diversity: f64,
    /// L1 mass of the realized parameters under the sparsity flags.
    pub sparsity: f64,
    /// `totals[k][i]`: combined per-pair score of hidden graph `k` on graph `i`.
    pub totals: Vec<Vec<f64>>,
    /// Raw (pre-normalization) per-step scores, `raw_scores[k][i][l]`.
    pub raw_scores: Vec<Vec<Vec<f64>>>,
}

/// Gradients of the loss w.r.t. every trainable parameter.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub d_raw_adjacency: Vec<Array2<f64>>,
    pub d_raw_features: Vec<Array2<f64>>,
    /// Step-norm parameter gradients (empty when StepNorm is off).
    pub d_gamma: Vec<f64>,
    pub d_beta: Vec<f64>,
}

impl GradientSet {
    fn zeros(hidden: &[HiddenGraph], t: usize, step_norm: bool) -> Self {
        GradientSet {
            d_raw_adjacency: hidden
                .iter()
                .map(|h| Array2::zeros(h.raw_adjacency.raw_dim()))
                .collect(),
            d_raw_features: hidden
                .iter()
                .map(|h| Array2::zeros(h.raw_features.raw_dim()))
                .collect(),
            d_gamma: if step_norm { vec![0.0; t] } else { Vec::new() },
            d_beta: if step_norm { vec![0.0; t] } else { Vec::new() },
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_raw_adjacency
            .iter()
            .chain(self.d_raw_features.iter())
            .all(|m| m.iter().all(|x| x.is_finite()))
            && self.d_gamma.iter().chain(self.d_beta.iter()).all(|x| x.is_finite())
    }
}

/// Pure objective evaluation (no state mutation): the loss, its parts, and
/// the per-pair combined scores. `step_norm` must be given exactly when the
/// kernel config selects StepNorm.
pub fn objective(
    db: &GraphDatabase,
    hidden: &[HiddenGraph],
    cfg: &TrainConfig,
    step_norm: Option<&StepNormState>,
) -> Result<ObjectiveParts> {
    let (parts, _) = epoch_core(db, hidden, cfg, step_norm, false)?;
    Ok(parts)
}

/// Mean pairwise similarity among the realized hidden graphs:
/// `2/(k(k−1)) · Σ_{a<b} K(W_a, W_b)`, zero for a single hidden graph.
/// Always evaluated on raw (un-step-normalized) scores, since batch
/// statistics are defined over input graphs only.
pub fn diversity_regularizer(hidden: &[HiddenGraph], cfg: &TrainConfig) -> Result<f64> {
    let realized: Vec<AttributedGraph> = hidden.iter().map(HiddenGraph::realize).collect();
    let walked: Vec<Array2<f64>> = realized
        .iter()
        .map(|r| walked_adjacency(r, &cfg.kernel_cfg))
        .collect();
    diversity_with_grads(&realized, &walked, cfg, None)
}

/// Per-hidden-graph L1 mass: upper-triangle realized adjacency, plus all
/// realized feature entries when the flag is on.
fn sparsity_mass(realized: &AttributedGraph, on_features: bool) -> f64 {
    let m = realized.n();
    let mut total = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            total += realized.adjacency()[[i, j]];
        }
    }
    if on_features {
        total += realized.features().iter().map(|x| x.abs()).sum::<f64>();
    }
    total
}

fn walked_adjacency(realized: &AttributedGraph, cfg: &KernelConfig) -> Array2<f64> {
    match cfg.normalization {
        Normalization::DegreeNormalizeHidden => degree_normalize(realized.adjacency().view()),
        _ => realized.adjacency().clone(),
    }
}

/// Endpoint-kernel quantities for one side of a pair: the adjacency powers
/// `A^0..A^t` and the compressed matrices `C^{(l)} = Xᵀ·A^l·X`.
struct EndpointSide {
    powers: Vec<Array2<f64>>,
    compressed: Vec<Array2<f64>>,
}

fn endpoint_side(adj: &Array2<f64>, feats: &Array2<f64>, t: usize) -> EndpointSide {
    let m = adj.nrows();
    let mut powers = Vec::with_capacity(t + 1);
    powers.push(Array2::eye(m));
    for l in 1..=t {
        let next = adj.dot(&powers[l - 1]);
        powers.push(next);
    }
    let compressed = (1..=t)
        .map(|l| feats.t().dot(&powers[l]).dot(feats))
        .collect();
    EndpointSide { powers, compressed }
}

/// Accumulates `d_X` and `d_A` for one endpoint-kernel side given the
/// upstream `Ū_l = ∂L/∂C^{(l)}`.
fn endpoint_backward(
    side: &EndpointSide,
    feats: &Array2<f64>,
    upstream: &[Array2<f64>],
    d_feats: &mut Array2<f64>,
    d_adj: &mut Array2<f64>,
) {
    let t = upstream.len();
    for l in 1..=t {
        let u = &upstream[l - 1];
        let u_sym = u + &u.t();
        *d_feats = &*d_feats + &side.powers[l].dot(feats).dot(&u_sym);
        let d_m = feats.dot(u).dot(&feats.t());
        for j in 0..l {
            *d_adj = &*d_adj + &side.powers[j].dot(&d_m).dot(&side.powers[l - 1 - j]);
        }
    }
}

/// Diversity term and (optionally) its gradient contributions.
///
/// Writes adjacency gradients for the *first* pair member into
/// `grads.0[a]` (raw realized side) and for the *second* into `grads.1[b]`
/// (walked side), plus feature gradients into `grads.2[·]`.
#[allow(clippy::type_complexity)]
fn diversity_with_grads(
    realized: &[AttributedGraph],
    walked: &[Array2<f64>],
    cfg: &TrainConfig,
    grads: Option<(&mut [Array2<f64>], &mut [Array2<f64>], &mut [Array2<f64>])>,
) -> Result<f64> {
    let k = realized.len();
    if k < 2 {
        return Ok(0.0);
    }
    let kcfg = &cfg.kernel_cfg;
    let weights = kcfg.step_weights();
    let pair_scale = 2.0 / (k as f64 * (k - 1) as f64);
    let mut total = 0.0;
    let mut grads = grads;
    for a in 0..k {
        for b in (a + 1)..k {
            match cfg.kernel {
                KernelFamily::ColorMatching => {
                    let y0 = realized[a].features().dot(&realized[b].features().t());
                    let cache = fast_forward(
                        realized[a].edges(),
                        realized[a].n(),
                        &walked[b],
                        y0,
                        kcfg.t,
                    );
                    total += combine_scores(cache.scores.clone(), kcfg).total;
                    if let Some((d_first, d_second, d_feats)) = grads.as_mut() {
                        // ∂loss/∂per_step through the diversity term.
                        let upstream: Vec<f64> = weights
                            .iter()
                            .map(|w| cfg.diversity_weight * pair_scale * w)
                            .collect();
                        let fg = fast_backward(
                            &cache,
                            realized[a].edges(),
                            realized[a].n(),
                            &walked[b],
                            &upstream,
                            true,
                        );
                        d_second[b] = &d_second[b] + &fg.d_h_adj;
                        d_first[a] = &d_first[a] + &fg.d_g_adj.expect("requested");
                        d_feats[a] = &d_feats[a] + &fg.d_y0.dot(realized[b].features());
                        d_feats[b] = &d_feats[b] + &fg.d_y0.t().dot(realized[a].features());
                    }
                }
                KernelFamily::EndpointOnly => {
                    let side_a =
                        endpoint_side(realized[a].adjacency(), realized[a].features(), kcfg.t);
                    let side_b = endpoint_side(&walked[b], realized[b].features(), kcfg.t);
                    let per_step: Vec<f64> = (0..kcfg.t)
                        .map(|l| (&side_a.compressed[l] * &side_b.compressed[l]).sum())
                        .collect();
                    total += combine_scores(per_step, kcfg).total;
                    if let Some((d_first, d_second, d_feats)) = grads.as_mut() {
                        let scale = cfg.diversity_weight * pair_scale;
                        let up_a: Vec<Array2<f64>> = (0..kcfg.t)
                            .map(|l| scale * weights[l] * &side_b.compressed[l])
                            .collect();
                        let up_b: Vec<Array2<f64>> = (0..kcfg.t)
                            .map(|l| scale * weights[l] * &side_a.compressed[l])
                            .collect();
                        endpoint_backward(
                            &side_a,
                            realized[a].features(),
                            &up_a,
                            &mut d_feats[a],
                            &mut d_first[a],
                        );
                        endpoint_backward(
                            &side_b,
                            realized[b].features(),
                            &up_b,
                            &mut d_feats[b],
                            &mut d_second[b],
                        );
                    }
                }
            }
        }
    }
    Ok(pair_scale * total)
}

/// One full objective evaluation, optionally with gradients.
///
/// Returns raw per-step scores folded through the configured normalization
/// and combination; gradients cover every trainable parameter. The heavy
/// per-graph work runs through [`par::map_slice`] and is reduced in graph
/// order, so results are identical in parallel and sequential builds.
fn epoch_core(
    db: &GraphDatabase,
    hidden: &[HiddenGraph],
    cfg: &TrainConfig,
    step_norm: Option<&StepNormState>,
    want_grads: bool,
) -> Result<(ObjectiveParts, Option<GradientSet>)> {
    cfg.validate()?;
    let kcfg = &cfg.kernel_cfg;
    let t = kcfg.t;
    let k = hidden.len();
    let use_step_norm = kcfg.normalization == Normalization::StepNorm;
    if use_step_norm != step_norm.is_some() {
        return Err(Error::validation(
            "step-norm state must be supplied exactly when the kernel config selects StepNorm",
        ));
    }
    for (idx, h) in hidden.iter().enumerate() {
        if h.feature_dim() != db.feature_dim() {
            return Err(Error::validation(format!(
                "hidden[{idx}] feature dimension {} does not match the database ({})",
                h.feature_dim(),
                db.feature_dim()
            )));
        }
    }

    let realized: Vec<AttributedGraph> = hidden.iter().map(HiddenGraph::realize).collect();
    let walked: Vec<Array2<f64>> = realized
        .iter()
        .map(|r| walked_adjacency(r, kcfg))
        .collect();

    // Phase A: per-graph forward passes (parallel, collected in order).
    enum Forward {
        Color(Vec<crate::kernels::FastForwardCache>),
        Endpoint {
            /// Input-side `C_G^{(l)} = X_Gᵀ·A_G^l·X_G`, one per step.
            compressed: Vec<Array2<f64>>,
            /// Per-hidden-graph raw per-step scores.
            scores: Vec<Vec<f64>>,
        },
    }
    // Hidden-side endpoint quantities are shared across all input graphs.
    let endpoint_hidden: Vec<EndpointSide> = match cfg.kernel {
        KernelFamily::EndpointOnly => realized
            .iter()
            .zip(walked.iter())
            .map(|(r, w)| endpoint_side(w, r.features(), t))
            .collect(),
        KernelFamily::ColorMatching => Vec::new(),
    };
    let forwards: Vec<Forward> = par::map_slice(&db.graphs, |_, g| match cfg.kernel {
        KernelFamily::ColorMatching => Forward::Color(
            realized
                .iter()
                .zip(walked.iter())
                .map(|(r, w)| {
                    let y0 = g.features().dot(&r.features().t());
                    fast_forward(g.edges(), g.n(), w, y0, t)
                })
                .collect(),
        ),
        KernelFamily::EndpointOnly => {
            let input = endpoint_side(g.adjacency(), g.features(), t);
            let scores = endpoint_hidden
                .iter()
                .map(|side_h| {
                    (0..t)
                        .map(|l| (&input.compressed[l] * &side_h.compressed[l]).sum())
                        .collect()
                })
                .collect();
            Forward::Endpoint {
                compressed: input.compressed,
                scores,
            }
        }
    });

    // Raw per-step scores, indexed [hidden][graph][step].
    let raw: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|ki| {
            forwards
                .iter()
                .map(|f| match f {
                    Forward::Color(caches) => caches[ki].scores.clone(),
                    Forward::Endpoint { scores, .. } => scores[ki].clone(),
                })
                .collect()
        })
        .collect();

    // Phase B: normalization, combination, and upstream gradients.
    let weights = kcfg.step_weights();
    let n_graphs = db.len();
    let mut totals = vec![vec![0.0; n_graphs]; k];
    // upstream[k][i][l] = ∂loss/∂raw_score.
    let mut upstream = vec![vec![vec![0.0; t]; n_graphs]; k];
    let mut d_gamma = vec![0.0; t];
    let mut d_beta = vec![0.0; t];
    for ki in 0..k {
        if let Some(sn) = step_norm {
            let mut normalized = vec![vec![0.0; t]; n_graphs];
            for l in 0..t {
                let batch: Vec<f64> = (0..n_graphs).map(|i| raw[ki][i][l]).collect();
                let out = sn.normalize_batch(l, &batch);
                for i in 0..n_graphs {
                    normalized[i][l] = out[i];
                }
                if want_grads {
                    let d_out = vec![-weights[l]; n_graphs];
                    let (d_scores, dg, dbeta) = crate::kernels::step_norm_backward(
                        &batch,
                        sn.gamma[l],
                        sn.beta[l],
                        sn.eps,
                        &d_out,
                    );
                    for i in 0..n_graphs {
                        upstream[ki][i][l] = d_scores[i];
                    }
                    d_gamma[l] += dg;
                    d_beta[l] += dbeta;
                }
            }
            for i in 0..n_graphs {
                totals[ki][i] = combine_scores(normalized[i].clone(), kcfg).total;
            }
        } else {
            for i in 0..n_graphs {
                totals[ki][i] = combine_scores(raw[ki][i].clone(), kcfg).total;
                if want_grads {
                    for l in 0..t {
                        upstream[ki][i][l] = -weights[l];
                    }
                }
            }
        }
    }
    let fit: f64 = totals.iter().flatten().sum();

    // Regularizers (and, while gradients are wanted, their contributions).
    let mut d_realized_adj: Vec<Array2<f64>> = realized
        .iter()
        .map(|r| Array2::zeros(r.adjacency().raw_dim()))
        .collect();
    let mut d_walked_adj: Vec<Array2<f64>> = d_realized_adj.clone();
    let mut d_feats: Vec<Array2<f64>> = realized
        .iter()
        .map(|r| Array2::zeros(r.features().raw_dim()))
        .collect();

    // Diversity gradients only matter when the term is weighted in.
    let diversity = diversity_with_grads(
        &realized,
        &walked,
        cfg,
        (want_grads && cfg.diversity_weight > 0.0).then(|| {
            (
                d_realized_adj.as_mut_slice(),
                d_walked_adj.as_mut_slice(),
                d_feats.as_mut_slice(),
            )
        }),
    )?;

    let sparsity: f64 = realized
        .iter()
        .map(|r| sparsity_mass(r, cfg.sparsity_on_features))
        .sum();

    let loss = -fit + cfg.diversity_weight * diversity + cfg.sparsity_weight * sparsity;
    let parts = ObjectiveParts {
        loss,
        fit,
        diversity,
        sparsity,
        totals,
        raw_scores: raw,
    };
    if !want_grads {
        return Ok((parts, None));
    }

    // Phase C: per-graph backward passes.
    match cfg.kernel {
        KernelFamily::ColorMatching => {
            // Parallel per-graph backward, then a fixed-order reduction.
            let contribs: Vec<Vec<(Array2<f64>, Array2<f64>)>> =
                par::map_slice(&db.graphs, |i, g| {
                    let Forward::Color(caches) = &forwards[i] else {
                        unreachable!()
                    };
                    (0..k)
                        .map(|ki| {
                            let fg = fast_backward(
                                &caches[ki],
                                g.edges(),
                                g.n(),
                                &walked[ki],
                                &upstream[ki][i],
                                false,
                            );
                            // Y₀ = X_G·X_Hᵀ ⇒ ∂X_H = (∂Y₀)ᵀ·X_G.
                            let dxh = fg.d_y0.t().dot(g.features());
                            (fg.d_h_adj, dxh)
                        })
                        .collect()
                });
            for per_graph in contribs {
                for (ki, (dh, dx)) in per_graph.into_iter().enumerate() {
                    d_walked_adj[ki] = &d_walked_adj[ki] + &dh;
                    d_feats[ki] = &d_feats[ki] + &dx;
                }
            }
        }
        KernelFamily::EndpointOnly => {
            // Gradients are linear in Ū_l = Σ_i u_{ikl}·C_G^{(i,l)}; fold the
            // per-graph contributions first, then run one backward per side.
            let d = db.feature_dim();
            let folded: Vec<Vec<Array2<f64>>> = {
                let per_graph: Vec<Vec<Vec<Array2<f64>>>> =
                    par::map_slice(&db.graphs, |i, _| {
                        let Forward::Endpoint { compressed, .. } = &forwards[i] else {
                            unreachable!()
                        };
                        (0..k)
                            .map(|ki| {
                                (0..t)
                                    .map(|l| upstream[ki][i][l] * &compressed[l])
                                    .collect()
                            })
                            .collect()
                    });
                let mut folded = vec![vec![Array2::<f64>::zeros((d, d)); t]; k];
                for contrib in per_graph {
                    for ki in 0..k {
                        for l in 0..t {
                            folded[ki][l] = &folded[ki][l] + &contrib[ki][l];
                        }
                    }
                }
                folded
            };
            for ki in 0..k {
                let side = endpoint_side(&walked[ki], realized[ki].features(), t);
                endpoint_backward(
                    &side,
                    realized[ki].features(),
                    &folded[ki],
                    &mut d_feats[ki],
                    &mut d_walked_adj[ki],
                );
            }
        }
    }

    // Sparsity gradients on the realized parameters.
    if cfg.sparsity_weight > 0.0 {
        for ki in 0..k {
            let m = realized[ki].n();
            for i in 0..m {
                for j in (i + 1)..m {
                    d_realized_adj[ki][[i, j]] += cfg.sparsity_weight;
                }
            }
            if cfg.sparsity_on_features {
                // Realized features are nonnegative (sigmoid or frozen data),
                // so ∂|x| = sign(x).
                let signs = realized[ki].features().mapv(|x| cfg.sparsity_weight * x.signum());
                d_feats[ki] = &d_feats[ki] + &signs;
            }
        }
    }

    // Phase D: chain walked-adjacency gradients through degree
    // normalization (when active) and the sigmoid realizations.
    let mut grads = GradientSet::zeros(hidden, t, use_step_norm);
    grads.d_gamma = if use_step_norm { d_gamma } else { Vec::new() };
    grads.d_beta = if use_step_norm { d_beta } else { Vec::new() };
    for ki in 0..k {
        let through_norm = match kcfg.normalization {
            Normalization::DegreeNormalizeHidden => {
                degree_normalize_backward(realized[ki].adjacency(), &d_walked_adj[ki])
            }
            _ => d_walked_adj[ki].clone(),
        };
        let d_adj_total = &d_realized_adj[ki] + &through_norm;
        let (d_raw_adj, d_raw_feat) =
            realization_backward(&hidden[ki], &realized[ki], &d_adj_total, &d_feats[ki]);
        grads.d_raw_adjacency[ki] = d_raw_adj;
        grads.d_raw_features[ki] = d_raw_feat;
    }
    Ok((parts, Some(grads)))
}

/// Objective value and gradients in one pass (shares all forward work).
pub fn objective_with_gradients(
    db: &GraphDatabase,
    hidden: &[HiddenGraph],
    cfg: &TrainConfig,
    step_norm: Option<&StepNormState>,
) -> Result<(ObjectiveParts, GradientSet)> {
    let (parts, grads) = epoch_core(db, hidden, cfg, step_norm, true)?;
    Ok((parts, grads.expect("gradients requested")))
}

// ===== optimizer =====

/// SGD-with-momentum velocities, mirroring the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub v_adjacency: Vec<Array2<f64>>,
    pub v_features: Vec<Array2<f64>>,
    pub v_gamma: Vec<f64>,
    pub v_beta: Vec<f64>,
}

impl OptimizerState {
    pub fn zeros(hidden: &[HiddenGraph], t: usize, step_norm: bool) -> Self {
        OptimizerState {
            v_adjacency: hidden
                .iter()
                .map(|h| Array2::zeros(h.raw_adjacency.raw_dim()))
                .collect(),
            v_features: hidden
                .iter()
                .map(|h| Array2::zeros(h.raw_features.raw_dim()))
                .collect(),
            v_gamma: if step_norm { vec![0.0; t] } else { Vec::new() },
            v_beta: if step_norm { vec![0.0; t] } else { Vec::new() },
        }
    }
}

/// One SGD-with-momentum update: `v ← μ·v − lr·g`, `p ← p + v`.
pub fn sgd_step(
    hidden: &mut [HiddenGraph],
    step_norm: Option<&mut StepNormState>,
    grads: &GradientSet,
    opt: &mut OptimizerState,
    lr: f64,
    momentum: f64,
) {
    for ki in 0..hidden.len() {
        opt.v_adjacency[ki] =
            momentum * &opt.v_adjacency[ki] - lr * &grads.d_raw_adjacency[ki];
        hidden[ki].raw_adjacency = &hidden[ki].raw_adjacency + &opt.v_adjacency[ki];
        opt.v_features[ki] = momentum * &opt.v_features[ki] - lr * &grads.d_raw_features[ki];
        hidden[ki].raw_features = &hidden[ki].raw_features + &opt.v_features[ki];
    }
    if let Some(sn) = step_norm {
        for l in 0..sn.gamma.len() {
            opt.v_gamma[l] = momentum * opt.v_gamma[l] - lr * grads.d_gamma[l];
            sn.gamma[l] += opt.v_gamma[l];
            opt.v_beta[l] = momentum * opt.v_beta[l] - lr * grads.d_beta[l];
            sn.beta[l] += opt.v_beta[l];
        }
    }
}

// ===== structural colors =====

/// Configuration of the fixed random attention network that produces
/// structural colors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralColorConfig {
    pub layers: usize,
    pub out_dim: usize,
    pub attention_heads: usize,
    pub seed: u64,
}

impl Default for StructuralColorConfig {
    fn default() -> Self {
        StructuralColorConfig {
            layers: 2,
            out_dim: 8,
            attention_heads: 1,
            seed: 0,
        }
    }
}

/// Appends structural-color columns to a graph's features.
///
/// The colors are produced by `layers` rounds of single-head (or averaged
/// multi-head) additive-attention neighborhood averaging with weights drawn
/// once from the seed — the network is never trained. Each round computes
/// `z = tanh(H·W)`, scores every neighbor (self included) with
/// `tanh(a_src·z_u + a_dst·z_v)`, softmax-normalizes over the neighborhood,
/// and averages. The output is deterministic in `(graph, config)` and
/// permutation-equivariant; the original feature columns are untouched.
pub fn structural_colors(
    g: &AttributedGraph,
    cfg: &StructuralColorConfig,
) -> Result<AttributedGraph> {
    if cfg.layers == 0 || cfg.out_dim == 0 || cfg.attention_heads == 0 {
        return Err(Error::validation(
            "structural colors need at least one layer, one output column, and one head",
        ));
    }
    let n = g.n();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut uniform_matrix = |rows: usize, cols: usize| -> Array2<f64> {
        let mut w = Array2::zeros((rows, cols));
        for x in w.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
        w
    };

    let neighborhoods: Vec<Vec<usize>> = (0..n)
        .map(|u| {
            let mut nb: Vec<usize> = (0..n).filter(|&v| g.adjacency()[[u, v]] != 0.0).collect();
            nb.push(u); // self-loop keeps isolated nodes well-defined
            nb
        })
        .collect();

    let mut h = g.features().clone();
    for layer in 0..cfg.layers {
        let d_in = if layer == 0 {
            g.feature_dim()
        } else {
            cfg.out_dim
        };
        let mut accum = Array2::<f64>::zeros((n, cfg.out_dim));
        for _head in 0..cfg.attention_heads {
            let w = uniform_matrix(d_in, cfg.out_dim);
            let a_src = uniform_matrix(1, cfg.out_dim);
            let a_dst = uniform_matrix(1, cfg.out_dim);
            let z = h.dot(&w).mapv(f64::tanh);
            for u in 0..n {
                let src_score: f64 = (0..cfg.out_dim).map(|c| a_src[[0, c]] * z[[u, c]]).sum();
                let scores: Vec<f64> = neighborhoods[u]
                    .iter()
                    .map(|&v| {
                        let dst: f64 =
                            (0..cfg.out_dim).map(|c| a_dst[[0, c]] * z[[v, c]]).sum();
                        (src_score + dst).tanh()
                    })
                    .collect();
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let norm: f64 = exps.iter().sum();
                for (idx, &v) in neighborhoods[u].iter().enumerate() {
                    let alpha = exps[idx] / norm;
                    for c in 0..cfg.out_dim {
                        accum[[u, c]] += alpha * z[[v, c]];
                    }
                }
            }
        }
        h = (accum / cfg.attention_heads as f64).mapv(f64::tanh);
    }

    let mut augmented = Array2::zeros((n, g.feature_dim() + cfg.out_dim));
    for u in 0..n {
        for c in 0..g.feature_dim() {
            augmented[[u, c]] = g.features()[[u, c]];
        }
        for c in 0..cfg.out_dim {
            augmented[[u, g.feature_dim() + c]] = h[[u, c]];
        }
    }
    g.with_features(augmented)
}

/// Feature-augmentation strategies for databases of unlabeled or
/// structurally ambiguous graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureAugmentation {
    /// Use the features as they are.
    None,
    /// Append an identity matrix (each node gets a unique indicator column);
    /// requires every graph in the database to have the same node count.
    Identity,
    /// Append structural colors from a fixed random attention network.
    StructuralColors,
}

/// Applies an augmentation to every graph of a database.
pub fn augment_database(
    db: &GraphDatabase,
    mode: FeatureAugmentation,
    scc: &StructuralColorConfig,
) -> Result<GraphDatabase> {
    match mode {
        FeatureAugmentation::None => Ok(db.clone()),
        FeatureAugmentation::Identity => {
            let n0 = db.graphs[0].n();
            if db.graphs.iter().any(|g| g.n() != n0) {
                return Err(Error::validation(
                    "identity augmentation requires equal-sized graphs",
                ));
            }
            let graphs = db
                .graphs
                .iter()
                .map(|g| {
                    let mut f = Array2::zeros((n0, g.feature_dim() + n0));
                    for u in 0..n0 {
                        for c in 0..g.feature_dim() {
                            f[[u, c]] = g.features()[[u, c]];
                        }
                        f[[u, g.feature_dim() + u]] = 1.0;
                    }
                    g.with_features(f)
                })
                .collect::<Result<Vec<_>>>()?;
            GraphDatabase::new(graphs)
        }
        FeatureAugmentation::StructuralColors => {
            let graphs = db
                .graphs
                .iter()
                .map(|g| structural_colors(g, scc))
                .collect::<Result<Vec<_>>>()?;
            GraphDatabase::new(graphs)
        }
    }
}

// ===== training =====

/// Result of one training restart.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub hidden: Vec<HiddenGraph>,
    pub step_norm: Option<StepNormState>,
    pub optimizer: OptimizerState,
    /// Loss after every epoch.
    pub trace: Vec<f64>,
    /// The seed this restart was initialized from.
    pub seed: u64,
}

/// Trains one restart from scratch.
pub fn train(db: &GraphDatabase, cfg: &TrainConfig) -> Result<TrainRun> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut hidden: Vec<HiddenGraph> = (0..cfg.hidden_graphs)
        .map(|_| {
            let mut h = HiddenGraph::init(cfg.hidden_nodes, db.feature_dim(), &mut rng);
            h.freeze_features = cfg.freeze_features;
            if cfg.freeze_features {
                // Frozen features are realized as-is; hold them at ones so a
                // featureless baseline means "every node matches equally".
                h.raw_features.fill(1.0);
            }
            h
        })
        .collect();
    let use_sn = cfg.kernel_cfg.normalization == Normalization::StepNorm;
    let mut step_norm = use_sn.then(|| StepNormState::new(cfg.hidden_graphs, cfg.kernel_cfg.t));
    let mut opt = OptimizerState::zeros(&hidden, cfg.kernel_cfg.t, use_sn);
    let mut trace = Vec::with_capacity(cfg.epochs);
    run_epochs(
        db,
        cfg,
        &mut hidden,
        &mut step_norm,
        &mut opt,
        &mut trace,
        0,
    )?;
    Ok(TrainRun {
        hidden,
        step_norm,
        optimizer: opt,
        trace,
        seed: cfg.seed,
    })
}

fn run_epochs(
    db: &GraphDatabase,
    cfg: &TrainConfig,
    hidden: &mut Vec<HiddenGraph>,
    step_norm: &mut Option<StepNormState>,
    opt: &mut OptimizerState,
    trace: &mut Vec<f64>,
    start_epoch: usize,
) -> Result<()> {
    for epoch in start_epoch..cfg.epochs {
        let (parts, grads) =
            objective_with_gradients(db, hidden, cfg, step_norm.as_ref())?;
        if !parts.loss.is_finite() {
            return Err(Error::numeric(format!(
                "loss became non-finite at epoch {epoch} (seed {})",
                cfg.seed
            )));
        }
        if !grads.is_finite() {
            return Err(Error::numeric(format!(
                "gradients became non-finite at epoch {epoch} (seed {})",
                cfg.seed
            )));
        }
        // Advance running statistics once per epoch from the same raw
        // batches the forward pass normalized.
        if let Some(sn) = step_norm.as_mut() {
            for (ki, per_hidden) in parts.raw_scores.iter().enumerate() {
                for l in 0..cfg.kernel_cfg.t {
                    let batch: Vec<f64> = per_hidden.iter().map(|g| g[l]).collect();
                    sn.update_running(ki, l, &batch)?;
                }
            }
        }
        sgd_step(hidden, step_norm.as_mut(), &grads, opt, cfg.lr, cfg.momentum);
        trace.push(parts.loss);
    }
    Ok(())
}

/// Raw (pre-normalization) per-step scores, indexed `[hidden][step][graph]`.
pub fn raw_score_batches(
    db: &GraphDatabase,
    hidden: &[HiddenGraph],
    cfg: &TrainConfig,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let realized: Vec<AttributedGraph> = hidden.iter().map(HiddenGraph::realize).collect();
    let walked: Vec<Array2<f64>> = realized
        .iter()
        .map(|r| walked_adjacency(r, &cfg.kernel_cfg))
        .collect();
    let t = cfg.kernel_cfg.t;
    let per_graph: Vec<Vec<Vec<f64>>> = par::map_slice(&db.graphs, |_, g| {
        realized
            .iter()
            .zip(walked.iter())
            .map(|(r, w)| match cfg.kernel {
                KernelFamily::ColorMatching => {
                    let y0 = g.features().dot(&r.features().t());
                    fast_forward(g.edges(), g.n(), w, y0, t).scores
                }
                KernelFamily::EndpointOnly => {
                    let input = endpoint_side(g.adjacency(), g.features(), t);
                    let side_h = endpoint_side(w, r.features(), t);
                    (0..t)
                        .map(|l| (&input.compressed[l] * &side_h.compressed[l]).sum())
                        .collect()
                }
            })
            .collect()
    });
    let k = hidden.len();
    Ok((0..k)
        .map(|ki| {
            (0..t)
                .map(|l| per_graph.iter().map(|pg| pg[ki][l]).collect())
                .collect()
        })
        .collect())
}

/// Trains all configured restarts (seeds derived from `cfg.seed`), in
/// parallel, returning them in restart order.
pub fn train_restarts(db: &GraphDatabase, cfg: &TrainConfig) -> Result<Vec<TrainRun>> {
    cfg.validate()?;
    let runs = par::map_range(cfg.restarts, |r| {
        let mut c = cfg.clone();
        c.seed = derive_restart_seed(cfg.seed, r);
        train(db, &c)
    });
    runs.into_iter().collect()
}

// ===== checkpoints =====

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MatrixJson(Vec<Vec<f64>>);

impl MatrixJson {
    fn from_array(a: &Array2<f64>) -> Self {
        MatrixJson(a.rows().into_iter().map(|r| r.to_vec()).collect())
    }

    fn to_array(&self, ctx: &str) -> Result<Array2<f64>> {
        let rows = self.0.len();
        let cols = self.0.first().map_or(0, |r| r.len());
        if rows == 0 || cols == 0 || self.0.iter().any(|r| r.len() != cols) {
            return Err(Error::validation(format!("{ctx}: ragged or empty matrix")));
        }
        Ok(
            Array2::from_shape_vec((rows, cols), self.0.iter().flatten().copied().collect())
                .expect("shape checked"),
        )
    }
}

/// A serialized training state: parameters, optimizer state, normalization
/// state, and the loss trace. Resuming from a checkpoint reproduces an
/// uninterrupted run bit-for-bit (training is deterministic and the RNG is
/// only consumed at initialization).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Epochs already completed.
    pub epoch: usize,
    hidden_adjacency: Vec<MatrixJson>,
    hidden_features: Vec<MatrixJson>,
    velocity_adjacency: Vec<MatrixJson>,
    velocity_features: Vec<MatrixJson>,
    pub step_norm: Option<StepNormState>,
    pub velocity_gamma: Vec<f64>,
    pub velocity_beta: Vec<f64>,
    pub trace: Vec<f64>,
    pub seed: u64,
}

impl Checkpoint {
    pub fn from_run(cfg: &TrainConfig, run: &TrainRun) -> Self {
        let mut cfg = cfg.clone();
        cfg.seed = run.seed;
        Checkpoint {
            config: cfg,
            epoch: run.trace.len(),
            hidden_adjacency: run
                .hidden
                .iter()
                .map(|h| MatrixJson::from_array(&h.raw_adjacency))
                .collect(),
            hidden_features: run
                .hidden
                .iter()
                .map(|h| MatrixJson::from_array(&h.raw_features))
                .collect(),
            velocity_adjacency: run
                .optimizer
                .v_adjacency
                .iter()
                .map(MatrixJson::from_array)
                .collect(),
            velocity_features: run
                .optimizer
                .v_features
                .iter()
                .map(MatrixJson::from_array)
                .collect(),
            step_norm: run.step_norm.clone(),
            velocity_gamma: run.optimizer.v_gamma.clone(),
            velocity_beta: run.optimizer.v_beta.clone(),
            trace: run.trace.clone(),
            seed: run.seed,
        }
    }

    pub fn to_run(&self) -> Result<TrainRun> {
        let freeze = self.config.freeze_features;
        let hidden = self
            .hidden_adjacency
            .iter()
            .zip(self.hidden_features.iter())
            .enumerate()
            .map(|(i, (a, f))| {
                Ok(HiddenGraph {
                    raw_adjacency: a.to_array(&format!("hidden[{i}].adjacency"))?,
                    raw_features: f.to_array(&format!("hidden[{i}].features"))?,
                    freeze_features: freeze,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let optimizer = OptimizerState {
            v_adjacency: self
                .velocity_adjacency
                .iter()
                .enumerate()
                .map(|(i, m)| m.to_array(&format!("velocity[{i}].adjacency")))
                .collect::<Result<Vec<_>>>()?,
            v_features: self
                .velocity_features
                .iter()
                .enumerate()
                .map(|(i, m)| m.to_array(&format!("velocity[{i}].features")))
                .collect::<Result<Vec<_>>>()?,
            v_gamma: self.velocity_gamma.clone(),
            v_beta: self.velocity_beta.clone(),
        };
        Ok(TrainRun {
            hidden,
            step_norm: self.step_norm.clone(),
            optimizer,
            trace: self.trace.clone(),
            seed: self.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::graph::write_canonical_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::graph::read_json(path)
    }
}

/// Continues a checkpointed run until `epochs` total epochs have elapsed.
/// The result is bit-identical to training straight through.
pub fn resume(db: &GraphDatabase, checkpoint: &Checkpoint, epochs: usize) -> Result<TrainRun> {
    if epochs < checkpoint.epoch {
        return Err(Error::validation(format!(
            "resume target ({epochs} epochs) is before the checkpoint ({} epochs)",
            checkpoint.epoch
        )));
    }
    let mut cfg = checkpoint.config.clone();
    cfg.epochs = epochs;
    let mut run = checkpoint.to_run()?;
    let mut hidden = std::mem::take(&mut run.hidden);
    let mut step_norm = run.step_norm.take();
    let mut opt = run.optimizer.clone();
    let mut trace = run.trace.clone();
    run_epochs(
        db,
        &cfg,
        &mut hidden,
        &mut step_norm,
        &mut opt,
        &mut trace,
        checkpoint.epoch,
    )?;
    Ok(TrainRun {
        hidden,
        step_norm,
        optimizer: opt,
        trace,
        seed: checkpoint.seed,
    })
}

// ===== tests =====
