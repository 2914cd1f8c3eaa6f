use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, MetricReport};
use crate::config::{Aggregator, Hyperparams, Variant};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::ingest::PreparedDataset;
use crate::model::{fit, FitOptions, Graphs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    /// Propagation layers 1 to 6.
    Layers,
    Aggregator,
    /// Receptive depth 1 to 3.
    ReceptiveDepth,
    Variant,
}

impl AblationKind {
    pub const ALL: [AblationKind; 4] =
        [AblationKind::Layers, AblationKind::Aggregator, AblationKind::ReceptiveDepth, AblationKind::Variant];

    pub fn as_str(&self) -> &'static str {
        match self {
            AblationKind::Layers => "layers",
            AblationKind::Aggregator => "aggregator",
            AblationKind::ReceptiveDepth => "receptive_depth",
            AblationKind::Variant => "variant",
        }
    }

    /// `(label, hyperparameters)` for every sweep point.
    pub fn points(&self, base: &Hyperparams) -> Vec<(String, Hyperparams)> {
        let with = |f: &dyn Fn(&mut Hyperparams)| {
            let mut h = base.clone();
            f(&mut h);
            h
        };
        match self {
            AblationKind::Layers => {
                (1..=6).map(|l| (l.to_string(), with(&|h| h.layers = l))).collect()
            }
            AblationKind::Aggregator => Aggregator::ALL
                .iter()
                .map(|&a| (a.to_string(), with(&|h| h.aggregator = a)))
                .collect(),
            AblationKind::ReceptiveDepth => {
                (1..=3).map(|d| (d.to_string(), with(&|h| h.depth = d))).collect()
            }
            AblationKind::Variant => Variant::ALL
                .iter()
                .map(|&v| (v.to_string(), with(&|h| h.variant = v)))
                .collect(),
        }
    }
}

impl FromStr for AblationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        match s.as_str() {
            "depth" => Ok(AblationKind::ReceptiveDepth),
            _ => AblationKind::ALL
                .into_iter()
                .find(|k| k.as_str() == s)
                .ok_or_else(|| Error::Invalid(format!("unknown ablation kind {s:?}"))),
        }
    }
}

impl fmt::Display for AblationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub label: String,
    pub hyper: Hyperparams,
    pub best_epoch: usize,
    pub eval: MetricReport,
    pub test: MetricReport,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub kind: AblationKind,
    pub points: Vec<AblationPoint>,
}

impl AblationReport {
    pub fn point(&self, label: &str) -> Option<&AblationPoint> {
        self.points.iter().find(|p| p.label == label)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = format!("{}\tbest_epoch\teval_auc\teval_acc\ttest_auc\ttest_acc\tseed\n", self.kind);
        for p in &self.points {
            s.push_str(&format!(
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\n",
                p.label, p.best_epoch, p.eval.auc, p.eval.acc, p.test.auc, p.test.acc, p.hyper.seed
            ));
        }
        s
    }
}

/// Train one model per sweep point. Point i trains with seed
/// `derive_seed(base.seed, [4, i])`. Points run in parallel on at most
/// `workers` threads (0 = global pool).
pub fn run_ablation(
    kind: AblationKind,
    base: &Hyperparams,
    dataset: &PreparedDataset,
    workers: usize,
) -> Result<AblationReport> {
    let graphs = Graphs::from_dataset(dataset)?;
    let points = kind.points(base);
    let run = || {
        points
            .par_iter()
            .enumerate()
            .map(|(i, (label, hp))| {
                let mut hp = hp.clone();
                hp.seed = derive_seed(base.seed, &[4, i as u64]);
                let started = Instant::now();
                let out = fit(&dataset.split, &graphs, &hp, &FitOptions { workers: 1 })?;
                let eval = evaluate(&out.params, &graphs, &hp, "eval", &dataset.split.eval, 1)?;
                let test = evaluate(&out.params, &graphs, &hp, "test", &dataset.split.test, 1)?;
                log::info!("{kind}={label}: test auc {:.4} acc {:.4}", test.auc, test.acc);
                Ok(AblationPoint {
                    label: label.clone(),
                    hyper: hp,
                    best_epoch: out.log.best_epoch,
                    eval,
                    test,
                    seconds: started.elapsed().as_secs_f64(),
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    let points = if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Invalid(e.to_string()))?
            .install(run)?
    } else {
        run()?
    };
    Ok(AblationReport { kind, points })
}
