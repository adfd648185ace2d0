//! A graph-convolution layer built on the color-matching walk recursion.
//!
//! The layer holds a small hidden graph as parameters: learnable node
//! features `X_H` (m×d) and a learnable vector `θ` (length m²) that is mapped
//! through a *fixed* seeded affine transform, reshaped to m×m, symmetrized,
//! squashed by a sigmoid, and zeroed on the diagonal to form the hidden
//! adjacency. A forward pass computes `Y₀ = σ(X·X_Hᵀ)` (the σ is optional),
//! runs the fast masked walk recursion `t` steps, and emits the final n×m
//! step matrix `Y⁽ᵗ⁾`: entry `(u, v)` scores color-matching walks of length
//! `t` that start at input node `u` and hidden node `v`. Summing the output
//! recovers the kernel's per-step score, so the layer is a drop-in feature
//! extractor whose receptive field is an explicit, inspectable graph.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::graph::AttributedGraph;
use crate::kernels::{fast_backward_matrices, fast_forward, sigmoid, FastForwardCache};
use crate::{Error, Result};

/// The convolution layer. `hidden_features` and `theta` are the trainable
/// parameters; the affine map is drawn once from the seed and never updated.
#[derive(Debug, Clone)]
pub struct RwkConvLayer {
    /// Learnable hidden node features, m×d.
    pub hidden_features: Array2<f64>,
    /// Learnable pre-adjacency parameters, length m².
    pub theta: Array1<f64>,
    /// Fixed affine map (m²×m²) applied to θ.
    affine_w: Array2<f64>,
    /// Fixed affine offset (length m²).
    affine_b: Array1<f64>,
    /// Walk length.
    pub t: usize,
    /// Squash the feature-similarity matrix with a sigmoid (the layer
    /// default). Disabled in the explicit-parts mode used to cross-check
    /// against the kernel.
    pub squash_similarity: bool,
    /// Explicit hidden adjacency (bypasses θ and the affine map).
    explicit_adjacency: Option<Array2<f64>>,
}

/// Everything a backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ConvForward {
    /// `Y⁽ᵗ⁾`, n×m.
    pub output: Array2<f64>,
    /// `Σ Y⁽ᵗ⁾` — equals the walk kernel's step-`t` score when the
    /// similarity squash is off.
    pub pooled: f64,
    /// The hidden adjacency that was walked.
    pub adjacency: Array2<f64>,
    cache: FastForwardCache,
    /// Pre-squash similarity (equal to `y0` when the squash is off).
    y0_pre: Array2<f64>,
}

/// Gradients of one backward pass.
#[derive(Debug, Clone)]
pub struct ConvGradients {
    /// ∂L/∂(input features), n×d.
    pub d_input_features: Array2<f64>,
    /// ∂L/∂`hidden_features`, m×d.
    pub d_hidden_features: Array2<f64>,
    /// ∂L/∂θ (absent in explicit-adjacency mode).
    pub d_theta: Option<Array1<f64>>,
}

impl RwkConvLayer {
    /// A fresh layer: θ and the affine map uniform in `[−1, 1]`, hidden
    /// features uniform in `[0, 1]`, all from one seeded generator.
    pub fn new(m: usize, d: usize, t: usize, seed: u64) -> Result<Self> {
        if m < 2 || d == 0 || t == 0 {
            return Err(Error::validation(
                "conv layer needs at least 2 hidden nodes, 1 feature column, and 1 step",
            ));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mm = m * m;
        let mut affine_w = Array2::zeros((mm, mm));
        for x in affine_w.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
        let mut affine_b = Array1::zeros(mm);
        for x in affine_b.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
        let mut theta = Array1::zeros(mm);
        for x in theta.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
        let mut hidden_features = Array2::zeros((m, d));
        for x in hidden_features.iter_mut() {
            *x = rng.random_range(0.0..1.0);
        }
        Ok(RwkConvLayer {
            hidden_features,
            theta,
            affine_w,
            affine_b,
            t,
            squash_similarity: true,
            explicit_adjacency: None,
        })
    }

    /// A layer with an explicit hidden adjacency and features, bypassing θ.
    /// Used to pin the layer to the walk kernel: with `squash` off and the
    /// parts of a realized hidden graph, `pooled` equals the kernel's
    /// step-`t` score exactly.
    pub fn from_parts(
        adjacency: Array2<f64>,
        features: Array2<f64>,
        t: usize,
        squash: bool,
    ) -> Result<Self> {
        let m = adjacency.nrows();
        if adjacency.ncols() != m || features.nrows() != m {
            return Err(Error::validation(
                "explicit conv parts need a square adjacency and matching feature rows",
            ));
        }
        if t == 0 {
            return Err(Error::validation("conv layer needs at least 1 step"));
        }
        let mm = m * m;
        Ok(RwkConvLayer {
            hidden_features: features,
            theta: Array1::zeros(mm),
            affine_w: Array2::zeros((mm, mm)),
            affine_b: Array1::zeros(mm),
            t,
            squash_similarity: squash,
            explicit_adjacency: Some(adjacency),
        })
    }

    pub fn hidden_nodes(&self) -> usize {
        self.hidden_features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.hidden_features.ncols()
    }

    /// Pre-sigmoid symmetric map `S = (M + Mᵀ)/2`, `M = reshape(Wθ + b)`.
    fn adjacency_pre(&self) -> Array2<f64> {
        let m = self.hidden_nodes();
        let flat = self.affine_w.dot(&self.theta) + &self.affine_b;
        let mat = flat.into_shape_with_order((m, m)).expect("m² entries");
        0.5 * (&mat + &mat.t())
    }

    /// The hidden adjacency the layer walks: `sigmoid(S)` with a zero
    /// diagonal, or the explicit matrix when one was supplied.
    pub fn adjacency(&self) -> Array2<f64> {
        if let Some(a) = &self.explicit_adjacency {
            return a.clone();
        }
        let mut a = self.adjacency_pre().mapv(sigmoid);
        for i in 0..a.nrows() {
            a[[i, i]] = 0.0;
        }
        a
    }

    /// Forward pass over one input graph.
    pub fn forward(&self, g: &AttributedGraph) -> Result<ConvForward> {
        if g.feature_dim() != self.feature_dim() {
            return Err(Error::validation(format!(
                "conv layer expects {}-dimensional features, got {}",
                self.feature_dim(),
                g.feature_dim()
            )));
        }
        let adjacency = self.adjacency();
        let y0_pre = g.features().dot(&self.hidden_features.t());
        let y0 = if self.squash_similarity {
            y0_pre.mapv(sigmoid)
        } else {
            y0_pre.clone()
        };
        let cache = fast_forward(g.edges(), g.n(), &adjacency, y0, self.t);
        let output = cache.masked[self.t - 1].clone();
        let pooled = cache.scores[self.t - 1];
        Ok(ConvForward {
            output,
            pooled,
            adjacency,
            cache,
            y0_pre,
        })
    }

    /// Backward pass: `d_output = ∂L/∂Y⁽ᵗ⁾` elementwise.
    pub fn backward(
        &self,
        g: &AttributedGraph,
        fwd: &ConvForward,
        d_output: &Array2<f64>,
    ) -> Result<ConvGradients> {
        if d_output.raw_dim() != fwd.output.raw_dim() {
            return Err(Error::validation(
                "upstream gradient shape does not match the layer output",
            ));
        }
        // Only the final step matrix leaves the layer.
        let zero = Array2::zeros(fwd.output.raw_dim());
        let upstream: Vec<Array2<f64>> = (0..self.t)
            .map(|i| {
                if i == self.t - 1 {
                    d_output.clone()
                } else {
                    zero.clone()
                }
            })
            .collect();
        let grads = fast_backward_matrices(
            &fwd.cache,
            g.edges(),
            g.n(),
            &fwd.adjacency,
            &upstream,
            false,
        );

        // Chain Y₀ back through the optional sigmoid to the two feature
        // matrices: Y₀ᵖʳᵉ = X·X_Hᵀ.
        let d_y0_pre = if self.squash_similarity {
            let y0 = &fwd.cache.y0; // already squashed
            grads.d_y0.clone() * y0 * &(1.0 - y0)
        } else {
            grads.d_y0.clone()
        };
        let d_input_features = d_y0_pre.dot(&self.hidden_features);
        let d_hidden_features = d_y0_pre.t().dot(g.features());

        // Chain the adjacency back through sigmoid ∘ symmetrize ∘ affine.
        let d_theta = if self.explicit_adjacency.is_some() {
            None
        } else {
            let m = self.hidden_nodes();
            let a = &fwd.adjacency;
            let mut d_s = grads.d_h_adj.clone();
            for i in 0..m {
                for j in 0..m {
                    d_s[[i, j]] *= a[[i, j]] * (1.0 - a[[i, j]]);
                }
                d_s[[i, i]] = 0.0; // the diagonal is clamped, not realized
            }
            let d_m = 0.5 * (&d_s + &d_s.t());
            let d_flat = Array1::from_iter(d_m.iter().copied());
            Some(self.affine_w.t().dot(&d_flat))
        };

        Ok(ConvGradients {
            d_input_features,
            d_hidden_features,
            d_theta,
        })
    }
}

// ===== tests =====
