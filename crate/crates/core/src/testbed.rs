//! Synthetic graph testbeds with known planted patterns.
//!
//! Each testbed generates a database of colored graphs whose characteristic
//! substructure is known exactly, so a mined hidden graph can be scored
//! objectively (pattern-matching accuracy, edit distance to the ground
//! truth). Colors come from a fixed palette and are encoded one-hot in the
//! palette order restricted to the colors the testbed uses, with matching
//! label strings on every node (except the deliberately unlabeled testbed).

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{AttributedGraph, GraphDatabase};
use crate::{Error, Result};

/// The global color palette, in column order.
pub const PALETTE: [&str; 4] = ["red", "blue", "green", "purple"];

/// Builds one-hot features (+ label strings) for `colors`, where each entry
/// indexes into `used`: the sub-palette a testbed draws from, in palette
/// order.
fn colored(n: usize, colors: &[usize], used: &[&str]) -> (Array2<f64>, Vec<String>) {
    assert_eq!(colors.len(), n);
    let mut feats = Array2::zeros((n, used.len()));
    let mut labels = Vec::with_capacity(n);
    for (i, &c) in colors.iter().enumerate() {
        feats[[i, c]] = 1.0;
        labels.push(used[c].to_string());
    }
    (feats, labels)
}

fn build(n: usize, edges: &[(usize, usize)], colors: &[usize], used: &[&str]) -> AttributedGraph {
    let (feats, labels) = colored(n, colors, used);
    AttributedGraph::from_edges(n, edges, feats, Some(labels)).expect("fixture is valid")
}

// ===== ground-truth fixtures =====

/// `K₂,₂` with one red side and one blue side — the densest bipartite motif
/// on four nodes (4 nodes, 4 edges).
pub fn butterfly() -> AttributedGraph {
    build(
        4,
        &[(0, 2), (0, 3), (1, 2), (1, 3)],
        &[0, 0, 1, 1],
        &["red", "blue"],
    )
}

/// A red center with three blue leaves (4 nodes, 3 edges).
pub fn three_star() -> AttributedGraph {
    build(4, &[(0, 1), (0, 2), (0, 3)], &[0, 1, 1, 1], &["red", "blue"])
}

/// The majority chain triangle: two red nodes and one blue node. Encoded in
/// the full 4-color space used by the chain testbed.
pub fn chain_triangle_majority() -> AttributedGraph {
    build(
        3,
        &[(0, 1), (0, 2), (1, 2)],
        &[0, 0, 1],
        &["red", "blue", "green", "purple"],
    )
}

/// The minority chain triangle: two purple nodes and one green node.
pub fn chain_triangle_minority() -> AttributedGraph {
    build(
        3,
        &[(0, 1), (0, 2), (1, 2)],
        &[3, 3, 2],
        &["red", "blue", "green", "purple"],
    )
}

/// A green-red-red triangle with a blue tail on the green node
/// (4 nodes, 4 edges; the green node has degree 3, the blue tail degree 1).
pub fn tailed_triangle() -> AttributedGraph {
    build(
        4,
        &[(0, 1), (0, 2), (1, 2), (0, 3)],
        &[2, 0, 0, 1],
        &["red", "blue", "green"],
    )
}

/// A six-cycle with alternating red/blue colors.
pub fn ring_alternating() -> AttributedGraph {
    build(
        6,
        &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)],
        &[0, 1, 0, 1, 0, 1],
        &["red", "blue"],
    )
}

/// A six-cycle colored red,red,blue,blue,green,green — 2-regular, so the
/// labels are the only thing that pins the node order.
pub fn two_regular_labeled() -> AttributedGraph {
    build(
        6,
        &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)],
        &[0, 0, 1, 1, 2, 2],
        &["red", "blue", "green"],
    )
}

/// The triangular prism: 6 nodes, 9 edges, 3-regular, *unlabeled*
/// (constant one-dimensional features, no label strings).
pub fn prism() -> AttributedGraph {
    AttributedGraph::from_edges(
        6,
        &[
            (0, 1),
            (1, 2),
            (2, 0), // top triangle
            (3, 4),
            (4, 5),
            (5, 3), // bottom triangle
            (0, 3),
            (1, 4),
            (2, 5), // vertical struts
        ],
        Array2::ones((6, 1)),
        None,
    )
    .expect("fixture is valid")
}

// ===== testbeds =====

/// The named testbeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Testbed {
    /// Complete bipartite graphs, each side 5–7 nodes, red vs. blue.
    /// Characteristic patterns: the butterfly and the 3-star.
    BipartiteHeterophily,
    /// Chains of 3–5 triangles sharing corner nodes; each triangle is
    /// red-red-blue with probability 0.6, else purple-purple-green.
    TriangleChain,
    /// 100 copies of the tailed triangle.
    TailedTriangle,
    /// 100 copies of the alternating red/blue six-ring.
    Ring,
    /// 100 copies of the unlabeled triangular prism.
    Regular3Unlabeled,
    /// 100 copies of the labeled 2-regular six-cycle.
    Regular2Labeled,
}

impl Testbed {
    pub fn all() -> [Testbed; 6] {
        [
            Testbed::BipartiteHeterophily,
            Testbed::TriangleChain,
            Testbed::TailedTriangle,
            Testbed::Ring,
            Testbed::Regular3Unlabeled,
            Testbed::Regular2Labeled,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Testbed::BipartiteHeterophily => "bipartite",
            Testbed::TriangleChain => "triangle-chain",
            Testbed::TailedTriangle => "tailed-triangle",
            Testbed::Ring => "ring",
            Testbed::Regular3Unlabeled => "regular3-unlabeled",
            Testbed::Regular2Labeled => "regular2-labeled",
        }
    }

    pub fn from_name(name: &str) -> Result<Testbed> {
        Testbed::all()
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown testbed '{name}' (expected one of: {})",
                    Testbed::all().map(|t| t.name()).join(", ")
                ))
            })
    }

    /// The planted patterns, with display names. A mined hidden graph is
    /// "correct" when it matches one of these.
    pub fn ground_truth(&self) -> Vec<(String, AttributedGraph)> {
        match self {
            Testbed::BipartiteHeterophily => vec![
                ("butterfly".into(), butterfly()),
                ("three-star".into(), three_star()),
            ],
            Testbed::TriangleChain => vec![
                ("majority-triangle".into(), chain_triangle_majority()),
                ("minority-triangle".into(), chain_triangle_minority()),
            ],
            Testbed::TailedTriangle => vec![("tailed-triangle".into(), tailed_triangle())],
            Testbed::Ring => vec![("ring".into(), ring_alternating())],
            Testbed::Regular3Unlabeled => vec![("prism".into(), prism())],
            Testbed::Regular2Labeled => {
                vec![("two-regular".into(), two_regular_labeled())]
            }
        }
    }

    /// Node count of the (largest) planted pattern — the natural hidden-graph
    /// size for mining on this testbed.
    pub fn pattern_nodes(&self) -> usize {
        self.ground_truth()
            .iter()
            .map(|(_, g)| g.n())
            .max()
            .expect("every testbed has a pattern")
    }

    /// Feature dimensionality of the generated graphs.
    pub fn feature_dim(&self) -> usize {
        match self {
            Testbed::BipartiteHeterophily | Testbed::Ring => 2,
            Testbed::TriangleChain => 4,
            Testbed::TailedTriangle | Testbed::Regular2Labeled => 3,
            Testbed::Regular3Unlabeled => 1,
        }
    }

    /// Generates `count` graphs. The fixture testbeds produce identical
    /// copies; the stochastic ones draw sizes and colors from the seed.
    pub fn generate(&self, count: usize, seed: u64) -> Result<GraphDatabase> {
        if count == 0 {
            return Err(Error::validation("testbeds need a positive graph count"));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let graphs: Vec<AttributedGraph> = match self {
            Testbed::BipartiteHeterophily => {
                (0..count).map(|_| bipartite_graph(&mut rng)).collect()
            }
            Testbed::TriangleChain => {
                (0..count).map(|_| triangle_chain_graph(&mut rng)).collect()
            }
            Testbed::TailedTriangle => vec![tailed_triangle(); count],
            Testbed::Ring => vec![ring_alternating(); count],
            Testbed::Regular3Unlabeled => vec![prism(); count],
            Testbed::Regular2Labeled => vec![two_regular_labeled(); count],
        };
        GraphDatabase::new(graphs)
    }
}

/// One complete bipartite graph: red side and blue side sized independently
/// and uniformly in 5..=7, every cross edge present.
fn bipartite_graph(rng: &mut ChaCha12Rng) -> AttributedGraph {
    let n_red = rng.random_range(5..=7usize);
    let n_blue = rng.random_range(5..=7usize);
    let n = n_red + n_blue;
    let mut edges = Vec::with_capacity(n_red * n_blue);
    for r in 0..n_red {
        for b in 0..n_blue {
            edges.push((r, n_red + b));
        }
    }
    let colors: Vec<usize> = (0..n).map(|i| usize::from(i >= n_red)).collect();
    build(n, &edges, &colors, &["red", "blue"])
}

/// One chain of 3–5 triangles. Triangle `j` has corners `(a_j, b_j, c_j)`
/// with `a_j = b_{j−1}` for `j ≥ 1` (consecutive triangles share a node).
/// Each triangle independently draws red-red-blue with probability 0.6,
/// else purple-purple-green; the duplicated color goes on `a_j`/`b_j`, the
/// single color on `c_j`, and a node keeps the first color it was given.
fn triangle_chain_graph(rng: &mut ChaCha12Rng) -> AttributedGraph {
    const USED: [&str; 4] = ["red", "blue", "green", "purple"];
    let triangles = rng.random_range(3..=5usize);
    let n = 3 + 2 * (triangles - 1);
    let mut edges = Vec::with_capacity(3 * triangles);
    let mut colors: Vec<Option<usize>> = vec![None; n];
    let mut assign = |node: usize, color: usize, colors: &mut Vec<Option<usize>>| {
        if colors[node].is_none() {
            colors[node] = Some(color);
        }
    };
    let mut prev_b = 0usize;
    let mut next_fresh = 0usize;
    for j in 0..triangles {
        let (a, b, c) = if j == 0 {
            next_fresh = 3;
            (0, 1, 2)
        } else {
            let b = next_fresh;
            let c = next_fresh + 1;
            next_fresh += 2;
            (prev_b, b, c)
        };
        let majority = rng.random_range(0.0..1.0) < 0.6;
        let (dup, single) = if majority { (0, 1) } else { (3, 2) }; // red/blue vs purple/green
        assign(a, dup, &mut colors);
        assign(b, dup, &mut colors);
        assign(c, single, &mut colors);
        edges.push((a, b));
        edges.push((b, c));
        edges.push((a, c));
        prev_b = b;
    }
    let colors: Vec<usize> = colors.into_iter().map(|c| c.expect("all colored")).collect();
    build(n, &edges, &colors, &USED)
}

// ===== tests =====
