//! Attributed graphs, product-graph constructions, and deterministic JSON I/O.
//!
//! Input graphs carry a symmetric nonnegative adjacency matrix (binary for
//! data generated by the testbeds, weighted for realized hidden graphs) and a
//! dense node-feature matrix. When nodes are categorically labeled the
//! features are the one-hot encoding of the labels and the label strings ride
//! along for reporting and DOT export.
//!
//! Serialization is canonical: struct fields serialize in a fixed order and
//! every float is written with 17 significant digits, which round-trips `f64`
//! exactly. Loading a canonically written file and saving it again
//! reproduces the bytes.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{Error, Result};

/// Default cap on the number of entries of an explicit product adjacency
/// matrix, i.e. `(n·m)²` for factor graphs with `n` and `m` nodes.
pub const DEFAULT_PRODUCT_ENTRY_CAP: usize = 1_000_000;

const SYMMETRY_TOL: f64 = 1e-12;

// ===== attributed graphs =====

/// A node-attributed undirected graph.
///
/// Invariants (checked on construction): the adjacency matrix is square,
/// symmetric, nonnegative, finite, and has a zero diagonal; the feature
/// matrix has one row per node; if labels are present they are consistent
/// with one-hot feature rows (same label ⇔ same row).
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    adjacency: Array2<f64>,
    features: Array2<f64>,
    labels: Option<Vec<String>>,
    /// Upper-triangle edge list `(u, v, weight)` with `u < v`, kept in sync
    /// with `adjacency` for the sparse kernel path.
    edges: Vec<(usize, usize, f64)>,
}

impl AttributedGraph {
    /// Builds a graph after validating all structural invariants.
    pub fn new(
        adjacency: Array2<f64>,
        features: Array2<f64>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        Self::validate(&adjacency, &features, labels.as_deref(), "graph")?;
        let edges = edge_list(&adjacency);
        Ok(AttributedGraph {
            adjacency,
            features,
            labels,
            edges,
        })
    }

    /// Builds an unweighted graph from an edge list, with `features` rows
    /// attached per node.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        features: Array2<f64>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let mut adjacency = Array2::zeros((n, n));
        for &(u, v) in edges {
            if u >= n || v >= n || u == v {
                return Err(Error::validation(format!(
                    "edge ({u}, {v}) is out of range for a {n}-node graph"
                )));
            }
            adjacency[[u, v]] = 1.0;
            adjacency[[v, u]] = 1.0;
        }
        Self::new(adjacency, features, labels)
    }

    fn validate(
        adjacency: &Array2<f64>,
        features: &Array2<f64>,
        labels: Option<&[String]>,
        ctx: &str,
    ) -> Result<()> {
        let n = adjacency.nrows();
        if adjacency.ncols() != n {
            return Err(Error::validation(format!(
                "{ctx}.adjacency: expected a square matrix, got {}x{}",
                n,
                adjacency.ncols()
            )));
        }
        if n == 0 {
            return Err(Error::validation(format!("{ctx}: graph has no nodes")));
        }
        for i in 0..n {
            if adjacency[[i, i]] != 0.0 {
                return Err(Error::validation(format!(
                    "{ctx}.adjacency[{i}][{i}]: diagonal must be zero, got {}",
                    adjacency[[i, i]]
                )));
            }
            for j in 0..n {
                let w = adjacency[[i, j]];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::validation(format!(
                        "{ctx}.adjacency[{i}][{j}]: weights must be finite and nonnegative, got {w}"
                    )));
                }
                if (w - adjacency[[j, i]]).abs() > SYMMETRY_TOL {
                    return Err(Error::validation(format!(
                        "{ctx}.adjacency[{i}][{j}]: matrix is not symmetric ({w} vs {})",
                        adjacency[[j, i]]
                    )));
                }
            }
        }
        if features.nrows() != n {
            return Err(Error::validation(format!(
                "{ctx}.features: expected {n} rows (one per node), got {}",
                features.nrows()
            )));
        }
        if features.ncols() == 0 {
            return Err(Error::validation(format!(
                "{ctx}.features: feature dimension must be at least 1"
            )));
        }
        for i in 0..n {
            for c in 0..features.ncols() {
                if !features[[i, c]].is_finite() {
                    return Err(Error::validation(format!(
                        "{ctx}.features[{i}][{c}]: must be finite"
                    )));
                }
            }
        }
        if let Some(labels) = labels {
            if labels.len() != n {
                return Err(Error::validation(format!(
                    "{ctx}.labels: expected {n} entries, got {}",
                    labels.len()
                )));
            }
            for i in 0..n {
                let row = features.row(i);
                let ones = row.iter().filter(|&&x| x == 1.0).count();
                let zeros = row.iter().filter(|&&x| x == 0.0).count();
                if ones != 1 || ones + zeros != row.len() {
                    return Err(Error::validation(format!(
                        "{ctx}.features[{i}]: labeled graphs need one-hot feature rows"
                    )));
                }
            }
            // Same label ⇒ same one-hot column; distinct labels ⇒ distinct columns.
            let hot = |i: usize| features.row(i).iter().position(|&x| x == 1.0).unwrap();
            for i in 0..n {
                for j in (i + 1)..n {
                    let same_label = labels[i] == labels[j];
                    let same_color = hot(i) == hot(j);
                    if same_label != same_color {
                        return Err(Error::validation(format!(
                            "{ctx}.labels: nodes {i} ({:?}) and {j} ({:?}) disagree with their one-hot rows",
                            labels[i], labels[j]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn adjacency(&self) -> &Array2<f64> {
        &self.adjacency
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Upper-triangle edges `(u, v, weight)` with `u < v`.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// True when the graph carries categorical labels (one-hot features).
    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    /// The one-hot color index of every node. Errors for unlabeled graphs.
    pub fn label_indices(&self) -> Result<Vec<usize>> {
        if !self.is_labeled() {
            return Err(Error::validation(
                "label_indices requires a labeled (one-hot) graph",
            ));
        }
        Ok((0..self.n())
            .map(|i| {
                self.features
                    .row(i)
                    .iter()
                    .position(|&x| x == 1.0)
                    .expect("validated one-hot row")
            })
            .collect())
    }

    /// Returns a copy of the graph with nodes renamed by `perm`, where node
    /// `i` of the original becomes node `perm[i]` of the result.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::validation(format!(
                "permutation has length {}, graph has {n} nodes",
                perm.len()
            )));
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || seen[p] {
                return Err(Error::validation("not a permutation"));
            }
            seen[p] = true;
        }
        let mut adjacency = Array2::zeros((n, n));
        let mut features = Array2::zeros((n, self.feature_dim()));
        let mut labels = self.labels.as_ref().map(|_| vec![String::new(); n]);
        for i in 0..n {
            for j in 0..n {
                adjacency[[perm[i], perm[j]]] = self.adjacency[[i, j]];
            }
            for c in 0..self.feature_dim() {
                features[[perm[i], c]] = self.features[[i, c]];
            }
            if let (Some(out), Some(src)) = (labels.as_mut(), self.labels.as_ref()) {
                out[perm[i]] = src[i].clone();
            }
        }
        AttributedGraph::new(adjacency, features, labels)
    }

    /// Replaces the feature matrix (used by feature-augmentation passes).
    /// Labels are kept only if the new features still agree with them.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        let labels = self.labels.clone().filter(|labels| {
            Self::validate(&self.adjacency, &features, Some(labels), "graph").is_ok()
        });
        AttributedGraph::new(self.adjacency.clone(), features, labels)
    }
}

fn edge_list(adjacency: &Array2<f64>) -> Vec<(usize, usize, f64)> {
    let n = adjacency.nrows();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let w = adjacency[[u, v]];
            if w != 0.0 {
                edges.push((u, v, w));
            }
        }
    }
    edges
}

// ===== databases =====

/// A collection of attributed graphs sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDatabase {
    pub graphs: Vec<AttributedGraph>,
}

impl GraphDatabase {
    pub fn new(graphs: Vec<AttributedGraph>) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::validation("database contains no graphs"));
        }
        let d = graphs[0].feature_dim();
        for (i, g) in graphs.iter().enumerate() {
            if g.feature_dim() != d {
                return Err(Error::validation(format!(
                    "graphs[{i}]: feature dimension {} differs from graphs[0] ({d})",
                    g.feature_dim()
                )));
            }
        }
        Ok(GraphDatabase { graphs })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs[0].feature_dim()
    }
}

// ===== product constructions =====

fn check_product_cap(n: usize, m: usize, cap: usize) -> Result<()> {
    let nodes = n.checked_mul(m).ok_or_else(|| {
        Error::resource("product graph node count overflows usize".to_string())
    })?;
    let entries = nodes.checked_mul(nodes);
    match entries {
        Some(e) if e <= cap => Ok(()),
        _ => Err(Error::resource(format!(
            "product adjacency would hold {n}·{m} = {nodes} nodes ({} entries > cap {cap}); \
             use the fast kernel path instead of an explicit product",
            entries.map_or_else(|| "overflowing".to_string(), |e| e.to_string()),
        ))),
    }
}

/// Kronecker product of two adjacency matrices.
///
/// Product node `(u, v)` (node `u` of the first factor, `v` of the second)
/// sits at index `u·m + v`, and the entry at `[(u,v), (u',v')]` is
/// `a[u,u']·b[v,v']`. Guarded by `cap` on the number of output entries.
pub fn kronecker_adjacency(
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    cap: usize,
) -> Result<Array2<f64>> {
    let n = a.nrows();
    let m = b.nrows();
    check_product_cap(n, m, cap)?;
    let mut out = Array2::zeros((n * m, n * m));
    for u in 0..n {
        for up in 0..n {
            let auu = a[[u, up]];
            if auu == 0.0 {
                continue;
            }
            for v in 0..m {
                for vp in 0..m {
                    out[[u * m + v, up * m + vp]] = auu * b[[v, vp]];
                }
            }
        }
    }
    Ok(out)
}

/// The direct product of two labeled graphs.
///
/// Nodes are pairs with matching labels; an edge joins `(u,v)` and `(u',v')`
/// when both factor edges exist. Pairs with mismatched labels are kept at
/// their Kronecker index with all-zero rows ("empty" nodes), so the matrix
/// lines up entry-for-entry with [`kronecker_adjacency`].
#[derive(Debug, Clone)]
pub struct ProductGraph {
    pub adjacency: Array2<f64>,
    /// `node_pairs[u·m + v] == (u, v)`.
    pub node_pairs: Vec<(usize, usize)>,
    /// `true` where the pair's labels do not match (zeroed row/column).
    pub empty_mask: Vec<bool>,
}

impl ProductGraph {
    /// Number of non-empty (label-matching) product nodes.
    pub fn live_nodes(&self) -> usize {
        self.empty_mask.iter().filter(|&&e| !e).count()
    }
}

/// Builds the label-matching direct product of two labeled graphs.
pub fn direct_product(
    g: &AttributedGraph,
    h: &AttributedGraph,
    cap: usize,
) -> Result<ProductGraph> {
    if !g.is_labeled() || !h.is_labeled() {
        return Err(Error::validation(
            "direct_product requires labeled (one-hot) graphs on both sides",
        ));
    }
    let n = g.n();
    let m = h.n();
    check_product_cap(n, m, cap)?;
    let gl = g.label_indices()?;
    let hl = h.label_indices()?;
    // Labels are compared through the shared one-hot space only when the
    // feature dimensions agree; otherwise the label strings decide.
    let matches: Vec<bool> = if g.feature_dim() == h.feature_dim() {
        (0..n * m).map(|i| gl[i / m] == hl[i % m]).collect()
    } else {
        let gs = g.labels().unwrap();
        let hs = h.labels().unwrap();
        (0..n * m).map(|i| gs[i / m] == hs[i % m]).collect()
    };
    let mut adjacency = Array2::zeros((n * m, n * m));
    for (u, v, wg) in g.edges().iter().copied() {
        for (x, y, wh) in h.edges().iter().copied() {
            // Each factor edge pair induces up to two product edges:
            // (u,x)-(v,y) and (u,y)-(v,x).
            for ((p, q), (r, s)) in [((u, x), (v, y)), ((u, y), (v, x))] {
                let i = p * m + q;
                let j = r * m + s;
                if matches[i] && matches[j] {
                    let w = wg * wh;
                    adjacency[[i, j]] = w;
                    adjacency[[j, i]] = w;
                }
            }
        }
    }
    let node_pairs = (0..n * m).map(|i| (i / m, i % m)).collect();
    let empty_mask = matches.iter().map(|&b| !b).collect();
    Ok(ProductGraph {
        adjacency,
        node_pairs,
        empty_mask,
    })
}

/// Symmetric degree normalization `D^{-1/2}·A·D^{-1/2}`.
///
/// Rows (and columns) with zero degree are left zero.
pub fn degree_normalize(a: ArrayView2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a.row(i).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = a[[i, j]] * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    out
}

// ===== canonical JSON =====

/// `serde_json` formatter that pretty-prints with two-space indentation and
/// writes every float with 17 significant digits so that `f64` values
/// round-trip exactly and repeated save/load cycles are byte-identical.
struct CanonicalFormatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl CanonicalFormatter {
    fn new() -> Self {
        CanonicalFormatter {
            inner: serde_json::ser::PrettyFormatter::new(),
        }
    }
}

macro_rules! forward_fmt {
    ($($name:ident),* $(,)?) => {
        $(
            fn $name<W>(&mut self, writer: &mut W) -> std::io::Result<()>
            where
                W: ?Sized + std::io::Write,
            {
                self.inner.$name(writer)
            }
        )*
    };
}

impl serde_json::ser::Formatter for CanonicalFormatter {
    forward_fmt!(
        begin_array,
        end_array,
        begin_object,
        end_object,
        end_array_value,
        end_object_value,
    );

    fn begin_array_value<W>(&mut self, writer: &mut W, first: bool) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.inner.begin_array_value(writer, first)
    }

    fn begin_object_key<W>(&mut self, writer: &mut W, first: bool) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W>(&mut self, writer: &mut W) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.inner.begin_object_value(writer)
    }

    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        if !value.is_finite() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "non-finite float cannot be serialized",
            ));
        }
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.write_f64(writer, value as f64)
    }
}

/// Serializes a value to the canonical JSON text used for all artifacts.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, CanonicalFormatter::new());
    value.serialize(&mut ser).map_err(|e| Error::Json {
        path: "<memory>".to_string(),
        source: e,
    })?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

/// SHA-256 hex digest of a value's canonical JSON, used in run manifests.
pub fn canonical_json_digest<T: Serialize>(value: &T) -> Result<String> {
    use sha2::{Digest, Sha256};
    let text = to_canonical_json(value)?;
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    Ok(format!("{:x}", hasher.finalize()))
}

/// Writes a value as canonical JSON to `path`.
pub fn write_canonical_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_canonical_json(value)?;
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Reads a JSON value from `path`.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })
}

// ===== graph (de)serialization =====

#[derive(Debug, Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    d: usize,
    adjacency: Vec<Vec<f64>>,
    features: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatabaseJson {
    graphs: Vec<GraphJson>,
}

fn graph_to_json(g: &AttributedGraph) -> GraphJson {
    GraphJson {
        n: g.n(),
        d: g.feature_dim(),
        adjacency: g
            .adjacency
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect(),
        features: g.features.rows().into_iter().map(|r| r.to_vec()).collect(),
        labels: g.labels.clone(),
    }
}

fn graph_from_json(j: GraphJson, ctx: &str) -> Result<AttributedGraph> {
    if j.adjacency.len() != j.n || j.adjacency.iter().any(|r| r.len() != j.n) {
        return Err(Error::validation(format!(
            "{ctx}.adjacency: expected a {0}x{0} matrix per the declared n",
            j.n
        )));
    }
    if j.features.len() != j.n || j.features.iter().any(|r| r.len() != j.d) {
        return Err(Error::validation(format!(
            "{ctx}.features: expected a {}x{} matrix per the declared n and d",
            j.n, j.d
        )));
    }
    let adjacency =
        Array2::from_shape_vec((j.n, j.n), j.adjacency.into_iter().flatten().collect())
            .expect("shape checked above");
    let features = Array2::from_shape_vec((j.n, j.d), j.features.into_iter().flatten().collect())
        .expect("shape checked above");
    AttributedGraph::new(adjacency, features, j.labels)
        .map_err(|e| Error::validation(format!("{ctx}: {e}")))
}

/// Saves one graph as canonical JSON.
pub fn save_graph(path: &Path, g: &AttributedGraph) -> Result<()> {
    write_canonical_json(path, &graph_to_json(g))
}

/// Loads one graph from JSON, validating all invariants.
pub fn load_graph(path: &Path) -> Result<AttributedGraph> {
    graph_from_json(read_json(path)?, "graph")
}

/// Saves a database as canonical JSON.
pub fn save_database(path: &Path, db: &GraphDatabase) -> Result<()> {
    let json = DatabaseJson {
        graphs: db.graphs.iter().map(graph_to_json).collect(),
    };
    write_canonical_json(path, &json)
}

/// Loads a database from JSON, validating every graph and the shared
/// feature dimension.
pub fn load_database(path: &Path) -> Result<GraphDatabase> {
    let json: DatabaseJson = read_json(path)?;
    let graphs = json
        .graphs
        .into_iter()
        .enumerate()
        .map(|(i, g)| graph_from_json(g, &format!("graphs[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    GraphDatabase::new(graphs)
}

// ===== tests =====

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn one_hot(indices: &[usize], d: usize) -> Array2<f64> {
        let mut f = Array2::zeros((indices.len(), d));
        for (i, &c) in indices.iter().enumerate() {
            f[[i, c]] = 1.0;
        }
        f
    }

    fn labeled_edge() -> AttributedGraph {
        AttributedGraph::from_edges(
            2,
            &[(0, 1)],
            one_hot(&[0, 1], 2),
            Some(vec!["a".into(), "b".into()]),
        )
        .unwrap()
    }

    fn triangle(label: &str) -> AttributedGraph {
        AttributedGraph::from_edges(
            3,
            &[(0, 1), (1, 2), (0, 2)],
            one_hot(&[0, 0, 0], 1),
            Some(vec![label.into(); 3]),
        )
        .unwrap()
    }

    #[test]
    fn rejects_asymmetric_adjacency() {
        let a = array![[0.0, 1.0], [0.5, 0.0]];
        let err = AttributedGraph::new(a, one_hot(&[0, 0], 1), None).unwrap_err();
        assert!(err.to_string().contains("not symmetric"), "{err}");
    }

    #[test]
    fn rejects_nonzero_diagonal_and_negative_weights() {
        let a = array![[1.0, 0.0], [0.0, 0.0]];
        assert!(AttributedGraph::new(a, one_hot(&[0, 0], 1), None).is_err());
        let a = array![[0.0, -1.0], [-1.0, 0.0]];
        assert!(AttributedGraph::new(a, one_hot(&[0, 0], 1), None).is_err());
    }

    #[test]
    fn rejects_label_feature_mismatch() {
        // Two nodes share the label but disagree in the one-hot row.
        let err = AttributedGraph::from_edges(
            2,
            &[(0, 1)],
            one_hot(&[0, 1], 2),
            Some(vec!["a".into(), "a".into()]),
        )
        .unwrap_err();
        assert!(err.to_string().contains("one-hot"), "{err}");
    }

    #[test]
    fn kronecker_of_two_single_edges_is_a_perfect_matching() {
        let e = labeled_edge();
        let k = kronecker_adjacency(
            e.adjacency().view(),
            e.adjacency().view(),
            DEFAULT_PRODUCT_ENTRY_CAP,
        )
        .unwrap();
        // Product nodes (0,0),(0,1),(1,0),(1,1); edges (0,0)-(1,1) and (0,1)-(1,0).
        let expected = array![
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
        ];
        assert_eq!(k, expected);
    }

    #[test]
    fn kronecker_triangle_times_edge_has_six_nodes_and_six_edges() {
        let t = triangle("a");
        let e = labeled_edge();
        let k = kronecker_adjacency(
            t.adjacency().view(),
            e.adjacency().view(),
            DEFAULT_PRODUCT_ENTRY_CAP,
        )
        .unwrap();
        assert_eq!(k.nrows(), 6);
        let edge_count = k.iter().filter(|&&w| w != 0.0).count() / 2;
        assert_eq!(edge_count, 6, "2·e_G·e_H = 2·3·1");
    }

    #[test]
    fn product_edge_count_matches_2_eg_eh() {
        // Unlabeled Kronecker product of small fixed graphs: path4 × triangle.
        let p = AttributedGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], one_hot(&[0; 4], 1), None)
            .unwrap();
        let t = triangle("a");
        let k = kronecker_adjacency(
            p.adjacency().view(),
            t.adjacency().view(),
            DEFAULT_PRODUCT_ENTRY_CAP,
        )
        .unwrap();
        let edge_count = k.iter().filter(|&&w| w != 0.0).count() / 2;
        assert_eq!(edge_count, 2 * p.edge_count() * t.edge_count());
    }

    #[test]
    fn direct_product_of_matching_edges_keeps_one_edge() {
        let e = labeled_edge();
        let p = direct_product(&e, &e, DEFAULT_PRODUCT_ENTRY_CAP).unwrap();
        assert_eq!(p.live_nodes(), 2, "(0,0) and (1,1) match labels");
        assert_eq!(p.empty_mask, vec![false, true, true, false]);
        let edge_count = p.adjacency.iter().filter(|&&w| w != 0.0).count() / 2;
        assert_eq!(edge_count, 1);
        assert_eq!(p.adjacency[[0, 3]], 1.0);
        assert_eq!(p.node_pairs[3], (1, 1));
    }

    #[test]
    fn direct_product_with_disjoint_labels_is_empty() {
        let e = labeled_edge();
        let f = AttributedGraph::from_edges(
            2,
            &[(0, 1)],
            one_hot(&[0, 1], 2),
            Some(vec!["c".into(), "d".into()]),
        )
        .unwrap();
        // Same one-hot space, but the test wants disjoint labels; rebuild f
        // on a wider palette so no colors coincide.
        let f = AttributedGraph::from_edges(
            2,
            &[(0, 1)],
            one_hot(&[2, 3], 4),
            f.labels().map(|l| l.to_vec()),
        )
        .unwrap();
        let e4 = AttributedGraph::from_edges(
            2,
            &[(0, 1)],
            one_hot(&[0, 1], 4),
            Some(vec!["a".into(), "b".into()]),
        )
        .unwrap();
        let p = direct_product(&e4, &f, DEFAULT_PRODUCT_ENTRY_CAP).unwrap();
        assert_eq!(p.live_nodes(), 0);
        assert!(p.adjacency.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn product_cap_trips_resource_error() {
        let t = triangle("a");
        let err =
            kronecker_adjacency(t.adjacency().view(), t.adjacency().view(), 10).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(err.to_string().contains("fast kernel path"), "{err}");
    }

    #[test]
    fn degree_normalize_known_values() {
        let e = labeled_edge();
        let n = degree_normalize(e.adjacency().view());
        assert_eq!(n[[0, 1]], 1.0, "single edge: both degrees 1");

        let t = triangle("a");
        let n = degree_normalize(t.adjacency().view());
        assert!((n[[0, 1]] - 0.5).abs() < 1e-15, "triangle: 1/√(2·2)");

        let star = AttributedGraph::from_edges(
            4,
            &[(0, 1), (0, 2), (0, 3)],
            one_hot(&[0; 4], 1),
            None,
        )
        .unwrap();
        let n = degree_normalize(star.adjacency().view());
        assert!((n[[0, 1]] - 1.0 / 3f64.sqrt()).abs() < 1e-15, "1/√(3·1)");
    }

    #[test]
    fn degree_normalize_leaves_zero_rows_zero() {
        let mut a = Array2::zeros((3, 3));
        a[[0, 1]] = 1.0;
        a[[1, 0]] = 1.0;
        let n = degree_normalize(a.view());
        assert!(n.row(2).iter().all(|&w| w == 0.0));
        assert_eq!(n[[0, 1]], 1.0);
    }

    #[test]
    fn canonical_floats_round_trip_exactly() {
        let values = vec![
            0.1,
            -0.0,
            1.0 / 3.0,
            f64::MIN_POSITIVE,
            1.2345678901234567e300,
            -9.876543210987654e-201,
        ];
        let text = to_canonical_json(&values).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        for (a, b) in values.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits(), "{a} vs {b}");
        }
    }

    #[test]
    fn graph_save_load_round_trips_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let g = AttributedGraph::from_edges(
            3,
            &[(0, 1), (1, 2)],
            one_hot(&[0, 1, 0], 2),
            Some(vec!["red".into(), "blue".into(), "red".into()]),
        )
        .unwrap();
        let p1 = dir.path().join("g1.json");
        let p2 = dir.path().join("g2.json");
        save_graph(&p1, &g).unwrap();
        let loaded = load_graph(&p1).unwrap();
        assert_eq!(loaded, g);
        save_graph(&p2, &loaded).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "save∘load must be byte-identical"
        );
    }

    #[test]
    fn load_reports_offending_field_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"graphs":[{"n":2,"d":1,"adjacency":[[0.0,1.0],[1.0,0.0]],"features":[[1.0]]}]}"#,
        )
        .unwrap();
        let err = load_database(&path).unwrap_err();
        assert!(err.to_string().contains("graphs[0]"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
}
