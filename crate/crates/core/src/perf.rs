//! Wall-clock scaling measurements for the kernel implementations.
//!
//! The fast color-matching loop is `O(t·(e_G·m + n·m²))` — linear in the
//! number of steps and, across a batch, linear in the number of hidden
//! graphs. The helpers here time the real implementations on seeded random
//! graphs, fit a least-squares line, and report R², so the complexity claim
//! is checked empirically rather than asserted.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use std::path::Path;
use std::time::Instant;

use crate::graph::AttributedGraph;
use crate::kernels::{self, KernelConfig};
use crate::{Error, Result};

/// One timing observation.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    /// Input-graph nodes.
    pub n: usize,
    /// Hidden-graph nodes.
    pub m: usize,
    /// Walk steps.
    pub t: usize,
    /// Batch size (number of hidden graphs scored against the input).
    pub hidden: usize,
    /// Which implementation was timed.
    pub variant: String,
    /// Median wall-clock seconds over the measurement repetitions.
    pub seconds: f64,
}

/// Erdős–Rényi-style random graph with one-hot colors, deterministic in the
/// seed. Guarantees at least one edge so walk scores are non-trivial.
pub fn random_graph(n: usize, d: usize, edge_prob: f64, seed: u64) -> AttributedGraph {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random_range(0.0..1.0) < edge_prob {
                edges.push((u, v));
            }
        }
    }
    if edges.is_empty() {
        edges.push((0, n.saturating_sub(1).max(1)));
    }
    let mut features = Array2::zeros((n, d));
    for u in 0..n {
        let c = rng.random_range(0..d);
        features[[u, c]] = 1.0;
    }
    AttributedGraph::from_edges(n, &edges, features, None).expect("generated graph is valid")
}

/// Times `f` with one warmup call, returning the median of `reps` runs.
fn median_seconds<F: FnMut()>(mut f: F, reps: usize) -> f64 {
    f(); // warmup
    let mut times: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    times[times.len() / 2]
}

/// Named kernel variants for head-to-head timing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelVariant {
    /// Masked product-graph power iteration (quadratic blowup).
    Naive,
    /// The fast factored loop.
    Fast,
}

impl KernelVariant {
    pub fn name(&self) -> &'static str {
        match self {
            KernelVariant::Naive => "naive",
            KernelVariant::Fast => "fast",
        }
    }
}

/// Times one variant on a seeded instance.
pub fn time_variant(
    variant: KernelVariant,
    g: &AttributedGraph,
    h: &AttributedGraph,
    cfg: &KernelConfig,
    reps: usize,
) -> Result<BenchRow> {
    let run: Box<dyn FnMut()> = match variant {
        KernelVariant::Naive => {
            let (g, h, cfg) = (g.clone(), h.clone(), cfg.clone());
            Box::new(move || {
                kernels::rwk_plus_naive(&g, &h, &cfg).expect("bench instance is valid");
            })
        }
        KernelVariant::Fast => {
            let (g, h, cfg) = (g.clone(), h.clone(), cfg.clone());
            Box::new(move || {
                kernels::rwk_plus_fast(&g, &h, &cfg).expect("bench instance is valid");
            })
        }
    };
    let mut run = run;
    let seconds = median_seconds(&mut *run, reps);
    Ok(BenchRow {
        n: g.n(),
        m: h.n(),
        t: cfg.t,
        hidden: 1,
        variant: variant.name().to_string(),
        seconds,
    })
}

/// Fast-path timing as the step count grows (fixed instance).
pub fn scaling_in_steps(
    n: usize,
    m: usize,
    d: usize,
    t_values: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let g = random_graph(n, d, 0.3, seed);
    let h = random_graph(m, d, 0.8, seed ^ 0xABCD);
    t_values
        .iter()
        .map(|&t| time_variant(KernelVariant::Fast, &g, &h, &KernelConfig::uniform(t), reps))
        .collect()
}

/// Fast-path timing as the number of hidden graphs grows: each observation
/// scores the input against `k` hidden graphs (the batch-objective shape).
pub fn scaling_in_hidden(
    n: usize,
    m: usize,
    d: usize,
    t: usize,
    k_values: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let g = random_graph(n, d, 0.3, seed);
    let cfg = KernelConfig::uniform(t);
    let hidden: Vec<AttributedGraph> = (0..*k_values.iter().max().unwrap_or(&1))
        .map(|i| random_graph(m, d, 0.8, seed.wrapping_add(1 + i as u64)))
        .collect();
    k_values
        .iter()
        .map(|&k| {
            let seconds = median_seconds(
                || {
                    for h in &hidden[..k] {
                        kernels::rwk_plus_fast(&g, h, &cfg).expect("bench instance is valid");
                    }
                },
                reps,
            );
            Ok(BenchRow {
                n,
                m,
                t,
                hidden: k,
                variant: "fast-batch".to_string(),
                seconds,
            })
        })
        .collect()
}

/// Naive-vs-fast head-to-head on one instance size.
pub fn head_to_head(
    n: usize,
    m: usize,
    d: usize,
    t: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let g = random_graph(n, d, 0.3, seed);
    let h = random_graph(m, d, 0.8, seed ^ 0xBEEF);
    let cfg = KernelConfig::uniform(t);
    Ok(vec![
        time_variant(KernelVariant::Naive, &g, &h, &cfg, reps)?,
        time_variant(KernelVariant::Fast, &g, &h, &cfg, reps)?,
    ])
}

/// Writes rows as CSV with a fixed header.
pub fn write_csv(rows: &[BenchRow], path: &Path) -> Result<()> {
    let mut out = String::from("n,m,t,hidden,variant,seconds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.9e}\n",
            r.n, r.m, r.t, r.hidden, r.variant, r.seconds
        ));
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Least-squares line fit with its coefficient of determination.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fits `y ≈ slope·x + intercept`. A perfectly explained (or constant,
/// perfectly fit) response gives `r_squared = 1`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::validation(
            "line fit needs two samples of equal length ≥ 2",
        ));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    if sxx == 0.0 {
        return Err(Error::validation("line fit needs varying x values"));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Convenience: fit seconds against a chosen row field.
pub fn fit_rows<F: Fn(&BenchRow) -> f64>(rows: &[BenchRow], x_of: F) -> Result<LinearFit> {
    let xs: Vec<f64> = rows.iter().map(&x_of).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
    linear_fit(&xs, &ys)
}

// ===== tests =====

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn random_graph_is_deterministic_and_one_hot() {
        let a = random_graph(10, 3, 0.4, 5);
        let b = random_graph(10, 3, 0.4, 5);
        assert_eq!(a.adjacency(), b.adjacency());
        assert_eq!(a.features(), b.features());
        for u in 0..10 {
            assert_eq!(a.features().row(u).sum(), 1.0);
        }
        let c = random_graph(10, 3, 0.4, 6);
        assert!(a.adjacency() != c.adjacency() || a.features() != c.features());
    }

    #[test]
    fn linear_fit_recovers_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let fit = linear_fit(&xs, &ys).unwrap();
        assert_abs_diff_eq!(fit.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_fit_flags_poor_fits() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [1.0, -1.0, 1.5, -0.5, 1.0];
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!(fit.r_squared < 0.5);
        assert_eq!(linear_fit(&[1.0], &[2.0]).unwrap_err().exit_code(), 2);
        assert_eq!(
            linear_fit(&[1.0, 1.0], &[2.0, 3.0]).unwrap_err().exit_code(),
            2
        );
    }

    #[test]
    fn csv_writer_emits_fixed_header() {
        let rows = vec![BenchRow {
            n: 10,
            m: 4,
            t: 2,
            hidden: 1,
            variant: "fast".into(),
            seconds: 0.0015,
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.csv");
        write_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("n,m,t,hidden,variant,seconds\n"));
        assert!(text.contains("10,4,2,1,fast,"));
    }

    #[test]
    fn scaling_smoke_produces_rows() {
        let rows = scaling_in_steps(12, 4, 3, &[1, 2], 1, 3).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.seconds >= 0.0));
        let rows = scaling_in_hidden(12, 4, 3, 2, &[1, 2], 1, 3).unwrap();
        assert_eq!(rows.len(), 2);
        let rows = head_to_head(15, 4, 3, 2, 1, 4).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].variant, "naive");
        assert_eq!(rows[1].variant, "fast");
    }
}
