//! Tuned training presets for the bundled testbeds.
//!
//! Mining hidden graphs with sigmoid-realized parameters is sensitive to the
//! optimizer recipe. The learning rate decides whether weights saturate to a
//! dense "wildcard" graph before structure can form, and the useful L1
//! window shifts with the walk length and the feature dimension, so each
//! experiment pins its own `(lr, sparsity, epochs)` triple. The presets
//! below record the recipes that performed best in a grid search at 25–50
//! restarts; they are the configurations exercised by the acceptance suite
//! and exposed through the CLI's `--preset` flag.
//!
//! All presets share the same skeleton: a 100-graph database drawn from one
//! generator with seed 7, SGD with momentum 0.9, L1 applied to features as
//! well as weights, degree normalization on both sides of the kernel, and 50
//! seeded restarts (restart seeds derive from the base seed, so arms of one
//! experiment are seed-paired). Color-matching arms score walks with the
//! "only last step" objective; endpoint arms use "sum of all steps" unless a
//! preset says otherwise.

use crate::eval::{ged_eval, matching_accuracy, GedReport, MatchingReport};
use crate::graph::GraphDatabase;
use crate::kernels::{KernelConfig, Normalization};
use crate::learn::{
    augment_database, train_restarts, FeatureAugmentation, KernelFamily, StructuralColorConfig,
    TrainConfig, TrainRun,
};
use crate::testbed::Testbed;
use crate::Result;

/// Number of graphs in every preset database.
pub const DB_SIZE: usize = 100;
/// Generator seed for every preset database.
pub const DB_SEED: u64 = 7;

/// One fully specified experiment arm: a testbed, an optional feature
/// augmentation, and a complete training configuration.
#[derive(Debug, Clone)]
pub struct Preset {
    /// Stable identifier, e.g. `"bipartite/color-last-t2"`. Used by the CLI.
    pub name: &'static str,
    pub testbed: Testbed,
    pub augmentation: FeatureAugmentation,
    pub config: TrainConfig,
}

impl Preset {
    /// The database this preset trains on (generated, then augmented).
    pub fn database(&self) -> Result<GraphDatabase> {
        let raw = self.testbed.generate(DB_SIZE, DB_SEED)?;
        augment_database(&raw, self.augmentation, &StructuralColorConfig::default())
    }

    /// Train all restarts on the preset database.
    pub fn run(&self) -> Result<Vec<TrainRun>> {
        let db = self.database()?;
        train_restarts(&db, &self.config)
    }

    /// Train, then score recovered patterns against the testbed's ground
    /// truth (exact binarized isomorphism).
    pub fn run_matching(&self) -> Result<(Vec<TrainRun>, MatchingReport)> {
        let runs = self.run()?;
        let rep = matching_accuracy(&runs, &self.testbed.ground_truth())?;
        Ok((runs, rep))
    }

    /// Train, then measure edit distance to the testbed's (single) planted
    /// pattern. `with_labels` selects labeled vs. structure-only distance.
    pub fn run_ged(&self, with_labels: bool) -> Result<(Vec<TrainRun>, GedReport)> {
        let runs = self.run()?;
        let truth = &self.testbed.ground_truth()[0].1;
        let rep = ged_eval(&runs, truth, with_labels)?;
        Ok((runs, rep))
    }
}

fn base(
    kernel: KernelFamily,
    mut kernel_cfg: KernelConfig,
    lr: f64,
    sparsity: f64,
    epochs: usize,
) -> TrainConfig {
    kernel_cfg.normalization = Normalization::DegreeNormalizeHidden;
    let mut cfg = TrainConfig::new(kernel_cfg);
    cfg.kernel = kernel;
    cfg.lr = lr;
    cfg.sparsity_weight = sparsity;
    cfg.sparsity_on_features = true;
    cfg.epochs = epochs;
    cfg.momentum = 0.9;
    cfg.restarts = 50;
    cfg.seed = 0;
    cfg
}

/// Pattern recovery on the bipartite database: can a single 4-node hidden
/// graph land exactly on a planted pattern (butterfly or 3-star)?
///
/// Three arms: the color-matching kernel and the endpoint kernel at the same
/// two-step last-only objective, plus the endpoint kernel with its
/// conventional sum objective at three steps. The tiny learning rate is
/// deliberate: anything faster saturates into the dense wildcard graph that
/// globally maximizes the normalized objective.
pub fn bipartite_recovery() -> [Preset; 3] {
    let bed = Testbed::BipartiteHeterophily;
    [
        Preset {
            name: "bipartite/color-last-t2",
            testbed: bed,
            augmentation: FeatureAugmentation::None,
            config: base(
                KernelFamily::ColorMatching,
                KernelConfig::last_step(2),
                1e-6,
                16_500.0,
                700,
            ),
        },
        Preset {
            name: "bipartite/endpoint-last-t2",
            testbed: bed,
            augmentation: FeatureAugmentation::None,
            config: base(
                KernelFamily::EndpointOnly,
                KernelConfig::last_step(2),
                1e-6,
                16_500.0,
                700,
            ),
        },
        Preset {
            name: "bipartite/endpoint-sum-t3",
            testbed: bed,
            augmentation: FeatureAugmentation::None,
            config: base(
                KernelFamily::EndpointOnly,
                KernelConfig::uniform(3),
                1e-6,
                10_000.0,
                700,
            ),
        },
    ]
}

/// Multi-pattern mining on the triangle-chain database with `k = 4` hidden
/// triangles: does the pairwise diversity penalty make the set of hidden
/// graphs cover *both* planted colorings instead of collapsing onto one?
///
/// Arms share seeds, so the comparison is restart-paired. The diversity
/// weight looks enormous because the raw objective is a sum over 100 graphs
/// of normalized walk counts — penalties compete at that scale.
pub fn diversity_ablation() -> [Preset; 3] {
    let bed = Testbed::TriangleChain;
    let color = |name, diversity_weight| {
        let mut cfg = base(
            KernelFamily::ColorMatching,
            KernelConfig::last_step(2),
            1e-6,
            10_000.0,
            700,
        );
        cfg.hidden_graphs = 4;
        cfg.hidden_nodes = 3;
        cfg.diversity_weight = diversity_weight;
        Preset {
            name,
            testbed: bed,
            augmentation: FeatureAugmentation::None,
            config: cfg,
        }
    };
    let mut endpoint = base(
        KernelFamily::EndpointOnly,
        KernelConfig::uniform(3),
        1e-6,
        10_000.0,
        700,
    );
    endpoint.hidden_graphs = 4;
    endpoint.hidden_nodes = 3;
    [
        color("triangle-chain/color-diverse", 30_000.0),
        color("triangle-chain/color-plain", 0.0),
        Preset {
            name: "triangle-chain/endpoint-sum-t3",
            testbed: bed,
            augmentation: FeatureAugmentation::None,
            config: endpoint,
        },
    ]
}

/// Edit-distance comparison of the two kernel families at a given walk
/// length on the single-pattern testbeds ([`Testbed::TailedTriangle`] and
/// [`Testbed::Ring`]).
///
/// Returns `[color, endpoint]`. Each `(testbed, t)` cell carries its own
/// `(lr, sparsity, epochs)`: per-step walk mass shrinks with `t`, which
/// moves the L1 window, and the 6-node ring tolerates a hotter learning
/// rate than the 4-node tailed triangle.
pub fn distance_comparison(testbed: Testbed, t: usize) -> Result<[Preset; 2]> {
    let (name_color, name_endpoint, lr, sparsity, epochs) = match (testbed, t) {
        (Testbed::TailedTriangle, 2) => (
            "tailed-triangle/color-t2",
            "tailed-triangle/endpoint-t2",
            1e-3,
            1_500.0,
            3_000,
        ),
        (Testbed::TailedTriangle, 4) => (
            "tailed-triangle/color-t4",
            "tailed-triangle/endpoint-t4",
            1e-3,
            700.0,
            3_000,
        ),
        (Testbed::TailedTriangle, 6) => (
            "tailed-triangle/color-t6",
            "tailed-triangle/endpoint-t6",
            3e-4,
            2_500.0,
            3_000,
        ),
        (Testbed::Ring, 2) => ("ring/color-t2", "ring/endpoint-t2", 1e-2, 1_000.0, 700),
        (Testbed::Ring, 4) => ("ring/color-t4", "ring/endpoint-t4", 1e-2, 1_500.0, 1_500),
        (Testbed::Ring, 6) => ("ring/color-t6", "ring/endpoint-t6", 1e-2, 1_000.0, 700),
        (bed, t) => {
            return Err(crate::Error::validation(format!(
                "no tuned distance-comparison preset for testbed '{}' at t={t}",
                bed.name()
            )))
        }
    };
    let m = testbed.ground_truth()[0].1.n();
    let mut color = base(
        KernelFamily::ColorMatching,
        KernelConfig::last_step(t),
        lr,
        sparsity,
        epochs,
    );
    color.hidden_nodes = m;
    let mut endpoint = base(
        KernelFamily::EndpointOnly,
        KernelConfig::uniform(t),
        lr,
        sparsity,
        epochs,
    );
    endpoint.hidden_nodes = m;
    Ok([
        Preset {
            name: name_color,
            testbed,
            augmentation: FeatureAugmentation::None,
            config: color,
        },
        Preset {
            name: name_endpoint,
            testbed,
            augmentation: FeatureAugmentation::None,
            config: endpoint,
        },
    ])
}

/// Structure-only recovery of the triangular prism under the six
/// kernel × feature-augmentation combinations.
///
/// Returns the arms in order: endpoint {none, identity, structural},
/// color {none, identity, structural}. One shared recipe; the hot learning
/// rate is what separates the families here — the endpoint arms saturate
/// while the color arm keeps shaping structure.
///
/// Note the prism is vertex-transitive and the database holds identical
/// copies, so structural colors are constant across nodes on this testbed:
/// they add no node-discriminative information, only extra feature mass.
pub fn structure_only_augmentation() -> [Preset; 6] {
    let bed = Testbed::Regular3Unlabeled;
    let make = |name, kernel, augmentation| {
        let kc = match kernel {
            KernelFamily::ColorMatching => KernelConfig::last_step(2),
            KernelFamily::EndpointOnly => KernelConfig::uniform(2),
        };
        let mut cfg = base(kernel, kc, 1e-2, 3_000.0, 3_000);
        cfg.hidden_nodes = 6;
        Preset {
            name,
            testbed: bed,
            augmentation,
            config: cfg,
        }
    };
    [
        make(
            "prism/endpoint-none",
            KernelFamily::EndpointOnly,
            FeatureAugmentation::None,
        ),
        make(
            "prism/endpoint-identity",
            KernelFamily::EndpointOnly,
            FeatureAugmentation::Identity,
        ),
        make(
            "prism/endpoint-structural",
            KernelFamily::EndpointOnly,
            FeatureAugmentation::StructuralColors,
        ),
        make(
            "prism/color-none",
            KernelFamily::ColorMatching,
            FeatureAugmentation::None,
        ),
        make(
            "prism/color-identity",
            KernelFamily::ColorMatching,
            FeatureAugmentation::Identity,
        ),
        make(
            "prism/color-structural",
            KernelFamily::ColorMatching,
            FeatureAugmentation::StructuralColors,
        ),
    ]
}

/// Labeled recovery of the 2-regular six-cycle with and without structural
/// colors on the color-matching kernel.
///
/// Returns `[plain, structural]`. Unlike the prism, this testbed's labels
/// break vertex-transitivity, so structural colors genuinely distinguish
/// same-label nodes by their neighborhood context. The recipe sits in the
/// gentle-lr window: with eleven feature columns the dense wildcard pays
/// more, and anything hotter than ~1e-4 saturates the structural arm.
pub fn labeled_augmentation() -> [Preset; 2] {
    let bed = Testbed::Regular2Labeled;
    let make = |name, augmentation| {
        let mut cfg = base(
            KernelFamily::ColorMatching,
            KernelConfig::last_step(2),
            1e-4,
            12_000.0,
            3_000,
        );
        cfg.hidden_nodes = 6;
        Preset {
            name,
            testbed: bed,
            augmentation,
            config: cfg,
        }
    };
    [
        make("ring-labeled/color-plain", FeatureAugmentation::None),
        make(
            "ring-labeled/color-structural",
            FeatureAugmentation::StructuralColors,
        ),
    ]
}

/// Every preset, for listing and name-based lookup.
pub fn all() -> Vec<Preset> {
    let mut out: Vec<Preset> = Vec::new();
    out.extend(bipartite_recovery());
    out.extend(diversity_ablation());
    for bed in [Testbed::TailedTriangle, Testbed::Ring] {
        for t in [2, 4, 6] {
            out.extend(distance_comparison(bed, t).expect("tuned cell"));
        }
    }
    out.extend(structure_only_augmentation());
    out.extend(labeled_augmentation());
    out
}

/// Look a preset up by its stable name.
pub fn by_name(name: &str) -> Result<Preset> {
    all()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| {
            crate::Error::validation(format!(
                "unknown preset '{name}'; run `walkmatch presets` for the list"
            ))
        })
}
