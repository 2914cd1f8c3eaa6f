use serde::{Deserialize, Serialize};

use crate::config::Hyperparams;
use crate::error::{Error, Result};
use crate::ingest::LabeledExample;
use crate::model::{eval_sampling_seed, score_examples, Graphs, ModelParams};

/// Area under the ROC curve via the Mann-Whitney U statistic, average ranks on ties.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Invalid("AUC needs both positive and negative labels".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Invalid("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                pos_rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Fraction of examples where `score > 0.5` agrees with the label.
pub fn acc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::Empty("accuracy over no examples".into()));
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| (s > 0.5) == (l == 1))
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension { expected: labels.len(), got: scores.len(), context: "scores vs labels" });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub split: String,
    pub examples: usize,
    pub auc: f64,
    pub acc: f64,
}

/// Score a split and report AUC / ACC.
pub fn evaluate(
    params: &ModelParams,
    graphs: &Graphs,
    hp: &Hyperparams,
    split: &str,
    examples: &[LabeledExample],
    workers: usize,
) -> Result<MetricReport> {
    let scores = score_examples(params, graphs, hp, examples, eval_sampling_seed(hp.seed), workers)?;
    let labels: Vec<u8> = examples.iter().map(|e| e.label).collect();
    Ok(MetricReport {
        split: split.to_string(),
        examples: examples.len(),
        auc: auc(&scores, &labels)?,
        acc: acc(&scores, &labels)?,
    })
}
