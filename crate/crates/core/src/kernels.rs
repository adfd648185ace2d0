//! The random-walk kernel family.
//!
//! All kernels score pairs of node-featured graphs by comparing walks. They
//! differ in *where* features must agree along a walk pair:
//!
//! * [`rwk_labeled`] — the classical labeled walk kernel: counts walk pairs
//!   whose categorical labels match at every position, computed on the
//!   direct product graph.
//! * [`rwk_rwnn`] / [`rwk_rwnn_efficient`] — the endpoint-only kernel: soft
//!   feature agreement is enforced only at the two ends of each walk pair.
//!   The second form rewrites the computation into `d×d` feature space and
//!   must agree with the first to floating-point accuracy.
//! * [`rwk_plus_naive`] / [`rwk_plus_fast`] — the color-matching kernel:
//!   soft feature agreement at **every** step. The naive form walks the
//!   masked Kronecker product (quadratic in the product size and capped);
//!   the fast form runs in `O(e·m + n·m²)` per step and `O(nm + m² + e)`
//!   memory without materializing any product, and the two agree to 1e-8.
//!
//! For one-hot features the color-matching kernel coincides exactly with the
//! labeled kernel — that equivalence is the backbone of the test suite.
//!
//! Per-step scores can be combined by a weighted sum over all steps or by
//! taking the last step only ([`ObjectiveMode`]), optionally normalizing the
//! hidden-side adjacency or the per-step scores first ([`Normalization`],
//! [`StepNormState`]).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::graph::{
    degree_normalize, direct_product, kronecker_adjacency, AttributedGraph,
    DEFAULT_PRODUCT_ENTRY_CAP,
};
use crate::{Error, Result};

// ===== configuration =====

/// How per-step walk scores are combined into one kernel value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveMode {
    /// `total = Σ_l λ_l · per_step[l]`.
    SumAllSteps,
    /// `total = per_step[t]` (λ ignored).
    OnlyLastStep,
}

/// Score/adjacency normalization applied by the kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// Raw walk scores.
    None,
    /// Batch-standardize each step's score and squash through a sigmoid with
    /// learnable shift/scale; see [`StepNormState`]. Kernel functions still
    /// return raw per-step scores — normalization is a separate stage because
    /// it needs batch or running statistics.
    StepNorm,
    /// Degree-normalize the **second** (hidden) argument's adjacency with
    /// `D^{-1/2}·A·D^{-1/2}` before walking. Deliberately asymmetric in the
    /// two arguments: the data side stays raw, the learned side is kept from
    /// inflating its walk mass by growing dense.
    DegreeNormalizeHidden,
}

/// Shared configuration for every kernel in the family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Maximum walk length (number of steps), `t ≥ 1`.
    pub t: usize,
    /// Per-step combination weights, `lambdas.len() == t`, all `≥ 0`.
    pub lambdas: Vec<f64>,
    pub objective: ObjectiveMode,
    pub normalization: Normalization,
    /// Guard on `(n·m)²` for kernels that materialize a product adjacency.
    #[serde(default = "default_product_cap")]
    pub product_entry_cap: usize,
}

fn default_product_cap() -> usize {
    DEFAULT_PRODUCT_ENTRY_CAP
}

impl KernelConfig {
    /// Uniform weights `λ_l = 1`, summing over all steps, no normalization.
    pub fn uniform(t: usize) -> Self {
        KernelConfig {
            t,
            lambdas: vec![1.0; t],
            objective: ObjectiveMode::SumAllSteps,
            normalization: Normalization::None,
            product_entry_cap: DEFAULT_PRODUCT_ENTRY_CAP,
        }
    }

    /// Uniform weights, last-step-only combination.
    pub fn last_step(t: usize) -> Self {
        KernelConfig {
            objective: ObjectiveMode::OnlyLastStep,
            ..Self::uniform(t)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::validation("kernel config: t must be at least 1"));
        }
        if self.lambdas.len() != self.t {
            return Err(Error::validation(format!(
                "kernel config: expected {} lambdas, got {}",
                self.t,
                self.lambdas.len()
            )));
        }
        for (i, &l) in self.lambdas.iter().enumerate() {
            if !l.is_finite() || l < 0.0 {
                return Err(Error::validation(format!(
                    "kernel config: lambdas[{i}] must be finite and nonnegative, got {l}"
                )));
            }
        }
        if self.normalization == Normalization::StepNorm
            && self.lambdas.iter().any(|&l| l != 1.0)
        {
            return Err(Error::validation(
                "kernel config: StepNorm fixes all step weights to 1",
            ));
        }
        Ok(())
    }

    /// `∂total/∂per_step[l]` for the configured combination.
    pub fn step_weights(&self) -> Vec<f64> {
        match self.objective {
            ObjectiveMode::SumAllSteps => self.lambdas.clone(),
            ObjectiveMode::OnlyLastStep => {
                let mut w = vec![0.0; self.t];
                w[self.t - 1] = 1.0;
                w
            }
        }
    }
}

/// Kernel output: one raw walk score per step plus their combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepScores {
    /// `per_step[l]` is the raw score of walk pairs with `l+1` edges.
    pub per_step: Vec<f64>,
    pub total: f64,
}

/// Combines raw per-step scores according to the config.
pub fn combine_scores(per_step: Vec<f64>, cfg: &KernelConfig) -> StepScores {
    debug_assert_eq!(per_step.len(), cfg.t);
    let total = match cfg.objective {
        ObjectiveMode::SumAllSteps => per_step
            .iter()
            .zip(cfg.lambdas.iter())
            .map(|(s, l)| s * l)
            .sum(),
        ObjectiveMode::OnlyLastStep => *per_step.last().expect("t >= 1"),
    };
    StepScores { per_step, total }
}

// ===== shared plumbing =====

fn check_feature_dims(g: &AttributedGraph, h: &AttributedGraph) -> Result<()> {
    if g.feature_dim() != h.feature_dim() {
        return Err(Error::validation(format!(
            "kernel arguments need matching feature dimensions, got {} vs {}",
            g.feature_dim(),
            h.feature_dim()
        )));
    }
    Ok(())
}

/// The hidden-side adjacency after the configured normalization.
fn hidden_adjacency(h: &AttributedGraph, cfg: &KernelConfig) -> Array2<f64> {
    match cfg.normalization {
        Normalization::DegreeNormalizeHidden => degree_normalize(h.adjacency().view()),
        _ => h.adjacency().clone(),
    }
}

/// Sparse left-multiplication `A·Y` using an upper-triangle edge list.
fn adj_times(edges: &[(usize, usize, f64)], n: usize, y: &Array2<f64>) -> Array2<f64> {
    let m = y.ncols();
    let mut out = Array2::zeros((n, m));
    for &(u, v, w) in edges {
        for c in 0..m {
            out[[u, c]] += w * y[[v, c]];
            out[[v, c]] += w * y[[u, c]];
        }
    }
    out
}

/// The pairwise feature-similarity matrix `Y₀ = X_G · X_Hᵀ` (n×m).
fn similarity_matrix(g: &AttributedGraph, h: &AttributedGraph) -> Array2<f64> {
    g.features().dot(&h.features().t())
}

/// `s[u·m + v] = ⟨X_G[u], X_H[v]⟩`, the Kronecker-order flattening of `Y₀`.
fn similarity_vector(g: &AttributedGraph, h: &AttributedGraph) -> Vec<f64> {
    let y0 = similarity_matrix(g, h);
    let m = h.n();
    let mut s = vec![0.0; g.n() * m];
    for u in 0..g.n() {
        for v in 0..m {
            s[u * m + v] = y0[[u, v]];
        }
    }
    s
}

// ===== labeled walk kernel =====

/// Labeled random walk kernel on the direct product graph: `per_step[i] =
/// 1ᵀ·A_{G×H}^{i+1}·1`, the number of label-matching walk pairs of that
/// length (weighted, if the factors are weighted).
pub fn rwk_labeled(
    g: &AttributedGraph,
    h: &AttributedGraph,
    cfg: &KernelConfig,
) -> Result<StepScores> {
    cfg.validate()?;
    let product = direct_product(g, h, cfg.product_entry_cap)?;
    let size = product.adjacency.nrows();
    let mut w = vec![1.0; size];
    let mut per_step = Vec::with_capacity(cfg.t);
    for _ in 0..cfg.t {
        w = matvec(&product.adjacency, &w);
        per_step.push(w.iter().sum());
    }
    Ok(combine_scores(per_step, cfg))
}

fn matvec(a: &Array2<f64>, v: &[f64]) -> Vec<f64> {
    let n = a.nrows();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += a[[i, j]] * v[j];
        }
        out[i] = acc;
    }
    out
}

// ===== endpoint-only kernel =====

/// Endpoint-only walk kernel, product form: `per_step[i] =
/// 1ᵀ(s·sᵀ ⊙ A_{G⊗H}^{i+1})1 = sᵀ·A_{G⊗H}^{i+1}·s`. Feature agreement is
/// enforced at walk endpoints only; intermediate nodes are free.
pub fn rwk_rwnn(
    g: &AttributedGraph,
    h: &AttributedGraph,
    cfg: &KernelConfig,
) -> Result<StepScores> {
    cfg.validate()?;
    check_feature_dims(g, h)?;
    let h_adj = hidden_adjacency(h, cfg);
    let kron = kronecker_adjacency(
        g.adjacency().view(),
        h_adj.view(),
        cfg.product_entry_cap,
    )?;
    let s = similarity_vector(g, h);
    let mut v = s.clone();
    let mut per_step = Vec::with_capacity(cfg.t);
    for _ in 0..cfg.t {
        v = matvec(&kron, &v);
        per_step.push(s.iter().zip(v.iter()).map(|(a, b)| a * b).sum());
    }
    Ok(combine_scores(per_step, cfg))
}

/// Endpoint-only walk kernel rewritten in feature space: `per_step[i] =
/// 1ᵀ[(X_Gᵀ·A_G^{i+1}·X_G) ⊙ (X_Hᵀ·A_H^{i+1}·X_H)]1`, touching only `d×d`
/// matrices per graph. Agrees with [`rwk_rwnn`] to 1e-10.
pub fn rwk_rwnn_efficient(
    g: &AttributedGraph,
    h: &AttributedGraph,
    cfg: &KernelConfig,
) -> Result<StepScores> {
    cfg.validate()?;
    check_feature_dims(g, h)?;
    let h_adj = hidden_adjacency(h, cfg);
    // P_G = A_G^i · X_G and P_H = A_H^i · X_H, advanced one step at a time.
    let mut pg = g.features().clone();
    let mut ph = h.features().clone();
    let mut per_step = Vec::with_capacity(cfg.t);
    for _ in 0..cfg.t {
        pg = adj_times(g.edges(), g.n(), &pg);
        ph = h_adj.dot(&ph);
        let cg = g.features().t().dot(&pg);
        let ch = h.features().t().dot(&ph);
        per_step.push((&cg * &ch).sum());
    }
    Ok(combine_scores(per_step, cfg))
}

// ===== color-matching kernel =====

/// Color-matching walk kernel, product form: `per_step[i] =
/// 1ᵀ(s·sᵀ ⊙ A_{G⊗H})^{i+1}·1`. Feature agreement is enforced at **every**
/// walk position; for one-hot features this equals [`rwk_labeled`] exactly.
/// Materializes the masked product (capped) — see [`rwk_plus_fast`] for the
/// scalable path.
pub fn rwk_plus_naive(
    g: &AttributedGraph,
    h: &AttributedGraph,
    cfg: &KernelConfig,
) -> Result<StepScores> {
    cfg.validate()?;
    check_feature_dims(g, h)?;
    let h_adj = hidden_adjacency(h, cfg);
    let kron = kronecker_adjacency(
        g.adjacency().view(),
        h_adj.view(),
        cfg.product_entry_cap,
    )?;
    let s = similarity_vector(g, h);
    let size = kron.nrows();
    let mut masked = kron;
    for i in 0..size {
        for j in 0..size {
            masked[[i, j]] *= s[i] * s[j];
        }
    }
    let mut w = vec![1.0; size];
    let mut per_step = Vec::with_capacity(cfg.t);
    for _ in 0..cfg.t {
        w = matvec(&masked, &w);
        per_step.push(w.iter().sum());
    }
    Ok(combine_scores(per_step, cfg))
}

/// Forward cache of the fast color-matching loop, retained so the backward
/// pass can replay it without recomputation.
#[derive(Debug, Clone)]
pub struct FastForwardCache {
    /// `Y₀` — the n×m feature-similarity matrix (already squashed for the
    /// convolution layer, raw `X_G·X_Hᵀ` for the kernel).
    pub y0: Array2<f64>,
    /// `Z_i = A_G·Ŷ_{i−1}·A_Hᵀ` for `i = 1..=t` (propagated, pre-mask).
    pub prop: Vec<Array2<f64>>,
    /// `Y^{(i)} = Y₀ ⊙ Z_i` — the per-step walk-score matrices.
    pub masked: Vec<Array2<f64>>,
    /// `per_step[i] = Σ_{jk} Y^{(i)}_{jk}`.
    pub scores: Vec<f64>,
}

/// The fast color-matching loop:
///
/// ```text
/// Y ← Y₀
/// for i in 1..=t:
///     Y      ← A_G · Y · A_Hᵀ      (propagate one step)
///     Y⁽ⁱ⁾   ← Y₀ ⊙ Y              (mask: feature agreement at this step)
///     Y      ← Y₀ ⊙ Y⁽ⁱ⁾           (carry the mask into the next step)
/// per_step[i] = Σ Y⁽ⁱ⁾
/// ```
///
/// `O(e_G·m + n·m²)` time and `O(nm + m² + e_G)` working memory per step.
pub fn fast_forward(
    g_edges: &[(usize, usize, f64)],
    n: usize,
    h_adj: &Array2<f64>,
    y0: Array2<f64>,
    t: usize,
) -> FastForwardCache {
    let mut prop = Vec::with_capacity(t);
    let mut masked = Vec::with_capacity(t);
    let mut scores = Vec::with_capacity(t);
    let mut y = y0.clone();
    for _ in 0..t {
        let z = adj_times(g_edges, n, &y).dot(&h_adj.t());
        let yi = &y0 * &z;
        scores.push(yi.sum());
        y = &y0 * &yi;
        prop.push(z);
        masked.push(yi);
    }
    FastForwardCache {
        y0,
        prop,
        masked,
        scores,
    }
}

/// Gradients produced by [`fast_backward`].
#[derive(Debug, Clone)]
pub struct FastGradients {
    /// `∂L/∂Y₀` — chain into the feature matrices.
    pub d_y0: Array2<f64>,
    /// `∂L/∂A_H` (w.r.t. the adjacency actually walked, i.e. post
    /// degree-normalization if that mode is on).
    pub d_h_adj: Array2<f64>,
    /// `∂L/∂A_G`, computed only on request (needed when the first argument
    /// is itself learnable, as in the diversity regularizer).
    pub d_g_adj: Option<Array2<f64>>,
}

/// Reverse-mode pass through [`fast_forward`].
///
/// `upstream[i] = ∂L/∂per_step[i]`. Every step of the forward recursion is
/// unwound: with `D_i = ∂L/∂Y⁽ⁱ⁾` and `Ĥ_i = ∂L/∂Ŷ_i` (`Ŷ_i = Y₀ ⊙ Y⁽ⁱ⁾`
/// is the carried state, `Ŷ_0 = Y₀`),
///
/// ```text
/// D_i       = upstream[i]·1 + Y₀ ⊙ Ĥ_i
/// ∂L/∂Z_i   = Y₀ ⊙ D_i
/// Ĥ_{i−1}   = A_Gᵀ · (∂L/∂Z_i) · A_H
/// ∂L/∂A_H  += (∂L/∂Z_i)ᵀ · (A_G · Ŷ_{i−1})
/// ∂L/∂A_G  += (∂L/∂Z_i) · (Ŷ_{i−1} · A_Hᵀ)ᵀ
/// ∂L/∂Y₀   += D_i ⊙ Z_i + Ĥ_i ⊙ Y⁽ⁱ⁾   (+ Ĥ_0 at the end)
/// ```
pub fn fast_backward(
    cache: &FastForwardCache,
    g_edges: &[(usize, usize, f64)],
    n: usize,
    h_adj: &Array2<f64>,
    upstream: &[f64],
    want_g_adj: bool,
) -> FastGradients {
    let t = cache.prop.len();
    assert_eq!(upstream.len(), t);
    let m = h_adj.nrows();
    let y0 = &cache.y0;
    let mut d_y0 = Array2::zeros(y0.raw_dim());
    let mut d_h = Array2::zeros((m, m));
    let mut d_g = want_g_adj.then(|| Array2::zeros((n, n)));
    // Ĥ_i = ∂L/∂Ŷ_i; the final carried state is unused, so Ĥ_t = 0.
    let mut hhat: Array2<f64> = Array2::zeros(y0.raw_dim());
    for i in (0..t).rev() {
        let mut d_yi = y0 * &hhat;
        d_yi += upstream[i];
        d_y0 = d_y0 + &hhat * &cache.masked[i];
        let d_z = y0 * &d_yi;
        d_y0 = d_y0 + &d_yi * &cache.prop[i];
        let yhat_prev = if i == 0 {
            y0.clone()
        } else {
            y0 * &cache.masked[i - 1]
        };
        let a_yhat = adj_times(g_edges, n, &yhat_prev);
        d_h = d_h + d_z.t().dot(&a_yhat);
        if let Some(dg) = d_g.as_mut() {
            let yhat_ht = yhat_prev.dot(&h_adj.t());
            *dg = &*dg + &d_z.dot(&yhat_ht.t());
        }
        // A_G is symmetric, so A_Gᵀ·dZ = A_G·dZ.
        hhat = adj_times(g_edges, n, &d_z).dot(h_adj);
    }
    d_y0 += &hhat;
    FastGradients {
        d_y0,
        d_h_adj: d_h,
        d_g_adj: d_g,
    }
}

/// Reverse-mode pass through [`fast_forward`] with *matrix* upstreams:
/// `upstream[i] = ∂L/∂Y⁽ⁱ⁾` elementwise, for layers that consume the
/// per-step matrices themselves rather than their sums. The recursion is the
/// one documented on [`fast_backward`] with `upstream[i]·1` replaced by the
/// given matrix; a scalar upstream `u` is the special case of a constant
/// matrix `u·1`.
pub fn fast_backward_matrices(
    cache: &FastForwardCache,
    g_edges: &[(usize, usize, f64)],
    n: usize,
    h_adj: &Array2<f64>,
    upstream: &[Array2<f64>],
    want_g_adj: bool,
) -> FastGradients {
    let t = cache.prop.len();
    assert_eq!(upstream.len(), t);
    let m = h_adj.nrows();
    let y0 = &cache.y0;
    let mut d_y0 = Array2::zeros(y0.raw_dim());
    let mut d_h = Array2::zeros((m, m));
    let mut d_g = want_g_adj.then(|| Array2::zeros((n, n)));
    let mut hhat: Array2<f64> = Array2::zeros(y0.raw_dim());
    for i in (0..t).rev() {
        let d_yi = y0 * &hhat + &upstream[i];
        d_y0 = d_y0 + &hhat * &cache.masked[i];
        let d_z = y0 * &d_yi;
        d_y0 = d_y0 + &d_yi * &cache.prop[i];
        let yhat_prev = if i == 0 {
            y0.clone()
        } else {
            y0 * &cache.masked[i - 1]
        };
        let a_yhat = adj_times(g_edges, n, &yhat_prev);
        d_h = d_h + d_z.t().dot(&a_yhat);
        if let Some(dg) = d_g.as_mut() {
            let yhat_ht = yhat_prev.dot(&h_adj.t());
            *dg = &*dg + &d_z.dot(&yhat_ht.t());
        }
        hhat = adj_times(g_edges, n, &d_z).dot(h_adj);
    }
    d_y0 += &hhat;
    FastGradients {
        d_y0,
        d_h_adj: d_h,
        d_g_adj: d_g,
    }
}

/// Color-matching walk kernel, fast form. Identical to [`rwk_plus_naive`]
/// (to 1e-8 relative) without ever materializing a product graph.
pub fn rwk_plus_fast(
    g: &AttributedGraph,
    h: &AttributedGraph,
    cfg: &KernelConfig,
) -> Result<StepScores> {
    cfg.validate()?;
    check_feature_dims(g, h)?;
    let h_adj = hidden_adjacency(h, cfg);
    let y0 = similarity_matrix(g, h);
    let cache = fast_forward(g.edges(), g.n(), &h_adj, y0, cfg.t);
    Ok(combine_scores(cache.scores, cfg))
}

// ===== step normalization =====

/// Batch normalization of per-step walk scores followed by a sigmoid.
///
/// For a batch of raw scores `x_j` (one per input graph, for a fixed hidden
/// graph and step), training mode computes `z_j = (x_j − μ_B)/√(σ²_B + ε)`
/// with biased batch variance, outputs `sigmoid(γ_l·z_j + β_l)`, and blends
/// the batch statistics into per-(hidden, step) running estimates. Eval mode
/// standardizes single scores with the running statistics and errors if they
/// were never initialized. γ/β are learnable, one pair per step, shared
/// across hidden graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepNormState {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    pub training: bool,
    running_mean: Vec<Vec<f64>>,
    running_var: Vec<Vec<f64>>,
    initialized: Vec<Vec<bool>>,
}

impl StepNormState {
    /// Fresh state for `k` hidden graphs and `t` steps: `γ = 1`, `β = 0`,
    /// momentum 0.1, `ε = 1e-5`, running statistics at (0, 1), training mode.
    pub fn new(hidden_graphs: usize, t: usize) -> Self {
        StepNormState {
            gamma: vec![1.0; t],
            beta: vec![0.0; t],
            momentum: 0.1,
            eps: 1e-5,
            training: true,
            running_mean: vec![vec![0.0; t]; hidden_graphs],
            running_var: vec![vec![1.0; t]; hidden_graphs],
            initialized: vec![vec![false; t]; hidden_graphs],
        }
    }

    pub fn steps(&self) -> usize {
        self.gamma.len()
    }

    pub fn hidden_graphs(&self) -> usize {
        self.running_mean.len()
    }

    fn check_index(&self, hidden: usize, step: usize) -> Result<()> {
        if hidden >= self.hidden_graphs() || step >= self.steps() {
            return Err(Error::validation(format!(
                "step norm index ({hidden}, {step}) out of range ({}, {})",
                self.hidden_graphs(),
                self.steps()
            )));
        }
        Ok(())
    }

    /// Training-mode normalization of a batch of scores for one step,
    /// without touching the running statistics: standardize with the biased
    /// batch variance, scale/shift, squash.
    pub fn normalize_batch(&self, step: usize, scores: &[f64]) -> Vec<f64> {
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + self.eps).sqrt();
        scores
            .iter()
            .map(|x| sigmoid(self.gamma[step] * ((x - mean) * inv_std) + self.beta[step]))
            .collect()
    }

    /// Folds one training batch into the running statistics for
    /// `(hidden, step)`, in the BatchNorm convention: a `momentum`-weighted
    /// blend of the new batch statistics, with the unbiased variance when
    /// the batch has more than one element.
    pub fn update_running(&mut self, hidden: usize, step: usize, scores: &[f64]) -> Result<()> {
        self.check_index(hidden, step)?;
        if scores.is_empty() {
            return Err(Error::validation("step norm: empty batch"));
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let unbiased = if scores.len() > 1 {
            var * n / (n - 1.0)
        } else {
            var
        };
        let m = self.momentum;
        self.running_mean[hidden][step] = (1.0 - m) * self.running_mean[hidden][step] + m * mean;
        self.running_var[hidden][step] =
            (1.0 - m) * self.running_var[hidden][step] + m * unbiased;
        self.initialized[hidden][step] = true;
        Ok(())
    }

    /// Normalizes a training batch of scores for `(hidden, step)` and
    /// updates the running statistics.
    pub fn apply_train(
        &mut self,
        hidden: usize,
        step: usize,
        scores: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_index(hidden, step)?;
        if scores.is_empty() {
            return Err(Error::validation("step norm: empty batch"));
        }
        let out = self.normalize_batch(step, scores);
        self.update_running(hidden, step, scores)?;
        Ok(out)
    }

    /// Normalizes one score with the running statistics (eval mode).
    pub fn apply_eval(&self, hidden: usize, step: usize, score: f64) -> Result<f64> {
        self.check_index(hidden, step)?;
        if !self.initialized[hidden][step] {
            return Err(Error::validation(format!(
                "step norm: running statistics for hidden graph {hidden}, step {step} \
                 were never initialized by a training pass"
            )));
        }
        let z = (score - self.running_mean[hidden][step])
            / (self.running_var[hidden][step] + self.eps).sqrt();
        Ok(sigmoid(self.gamma[step] * z + self.beta[step]))
    }

    /// Applies the state to a full [`StepScores`] in eval mode, re-combining
    /// the normalized steps with all-ones weights.
    pub fn normalize_scores(
        &self,
        hidden: usize,
        scores: &StepScores,
        cfg: &KernelConfig,
    ) -> Result<StepScores> {
        let per_step = scores
            .per_step
            .iter()
            .enumerate()
            .map(|(l, &x)| self.apply_eval(hidden, l, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(combine_scores(per_step, cfg))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Reverse-mode pass through one training-mode batch normalization.
///
/// Arguments are the raw batch `scores`, the step's `gamma`, `eps`, and
/// `d_out[j] = ∂L/∂normalized_j`. Returns `(∂L/∂scores, ∂L/∂γ, ∂L/∂β)`,
/// including the coupling through the batch mean and variance.
pub fn step_norm_backward(
    scores: &[f64],
    gamma: f64,
    beta: f64,
    eps: f64,
    d_out: &[f64],
) -> (Vec<f64>, f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps).sqrt();
    let z: Vec<f64> = scores.iter().map(|x| (x - mean) * inv_std).collect();
    // Through the sigmoid: e_j = d_out_j · y_j(1−y_j).
    let e: Vec<f64> = z
        .iter()
        .zip(d_out.iter())
        .map(|(&zj, &dj)| {
            let y = sigmoid(gamma * zj + beta);
            dj * y * (1.0 - y)
        })
        .collect();
    let d_gamma = e.iter().zip(z.iter()).map(|(ej, zj)| ej * zj).sum();
    let d_beta = e.iter().sum();
    // Through the standardization (biased variance):
    // dx_j = inv_std·(dz_j − mean(dz) − z_j·mean(dz ⊙ z)).
    let dz: Vec<f64> = e.iter().map(|ej| ej * gamma).collect();
    let mean_dz = dz.iter().sum::<f64>() / n;
    let mean_dz_z = dz.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
    let d_scores = dz
        .iter()
        .zip(z.iter())
        .map(|(dzj, zj)| inv_std * (dzj - mean_dz - zj * mean_dz_z))
        .collect();
    (d_scores, d_gamma, d_beta)
}

// ===== tests =====
