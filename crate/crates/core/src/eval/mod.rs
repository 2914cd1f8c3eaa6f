//! CTR metrics, ablation sweeps and rank-based algorithm comparison.

pub mod ablation;
pub mod metrics;
pub mod stats;

pub use ablation::{run_ablation, AblationKind, AblationPoint, AblationReport};
pub use metrics::{acc, auc, evaluate, MetricReport};
pub use stats::{friedman, holm_posthoc, FriedmanResult, HolmRow, ScoreMatrix, StatReport};
