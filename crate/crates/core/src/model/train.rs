use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{adam_step, AdamConfig, AdamState};
use super::params::ModelParams;
use super::{loss_and_gradients, sample_batch_tree, score_examples, Graphs};
use crate::config::Hyperparams;
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::eval::metrics::{acc, auc};
use crate::ingest::{DatasetSplit, LabeledExample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-example loss over the epoch's batches.
    pub train_loss: f64,
    pub eval_auc: f64,
    pub eval_acc: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_eval_auc: f64,
    pub best_eval_acc: f64,
    pub stopped_early: bool,
}

impl TrainingLog {
    /// Tab-separated per-epoch table; the timing column is excluded so
    /// identical runs give identical text.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("epoch\ttrain_loss\teval_auc\teval_acc\n");
        for e in &self.epochs {
            s.push_str(&format!("{}\t{:.10}\t{:.10}\t{:.10}\n", e.epoch, e.train_loss, e.eval_auc, e.eval_acc));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    /// Evaluation threads; 0 uses the global pool.
    pub workers: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { workers: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    /// Parameters of the best eval-AUC epoch.
    pub params: ModelParams,
    pub log: TrainingLog,
}

/// Seed of the neighbour samples used when scoring the eval split.
pub(crate) fn eval_sampling_seed(seed: u64) -> u64 {
    derive_seed(seed, &[3])
}

fn split_auc_acc(
    params: &ModelParams,
    graphs: &Graphs,
    hp: &Hyperparams,
    examples: &[LabeledExample],
    workers: usize,
) -> Result<(f64, f64)> {
    let scores = score_examples(params, graphs, hp, examples, eval_sampling_seed(hp.seed), workers)?;
    let labels: Vec<u8> = examples.iter().map(|e| e.label).collect();
    Ok((auc(&scores, &labels)?, acc(&scores, &labels)?))
}

/// Mini-batch Adam over the train split with eval-AUC model selection.
pub fn fit(split: &DatasetSplit, graphs: &Graphs, hp: &Hyperparams, opts: &FitOptions) -> Result<FitOutput> {
    fit_from(ModelParams::init(graphs.shapes(hp), hp.seed), split, graphs, hp, opts)
}

/// [`fit`] starting from given parameters.
pub fn fit_from(
    mut params: ModelParams,
    split: &DatasetSplit,
    graphs: &Graphs,
    hp: &Hyperparams,
    opts: &FitOptions,
) -> Result<FitOutput> {
    hp.validate()?;
    if split.train.is_empty() {
        return Err(Error::Empty("train split".into()));
    }
    let adam = AdamConfig {
        weight_decay: hp.weight_decay,
        ..AdamConfig::new(hp.lr)
    };
    let mut state = AdamState::new(&params);
    let mut best = params.clone();
    let mut log = TrainingLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_eval_auc: f64::NEG_INFINITY,
        best_eval_acc: 0.0,
        stopped_early: false,
    };
    let mut since_best = 0usize;
    let mut order: Vec<usize> = (0..split.train.len()).collect();

    for epoch in 1..=hp.max_epochs {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(hp.seed, &[1, epoch as u64]));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(hp.batchsize).enumerate() {
            let batch: Vec<LabeledExample> = idx.iter().map(|&i| split.train[i]).collect();
            let tree = sample_batch_tree(graphs, &batch, hp, derive_seed(hp.seed, &[2, epoch as u64, b as u64]))?;
            let (loss, grads) = loss_and_gradients(&params, graphs, hp, &batch, &tree)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence { epoch, batch: b, loss });
            }
            total += loss;
            adam_step(&mut params, &grads, &adam, &mut state);
        }
        let (eval_auc, eval_acc) = split_auc_acc(&params, graphs, hp, &split.eval, opts.workers)?;
        let entry = EpochLog {
            epoch,
            train_loss: total / split.train.len() as f64,
            eval_auc,
            eval_acc,
            seconds: started.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}: loss {:.5} eval auc {eval_auc:.4} acc {eval_acc:.4} ({:.1}s)",
            entry.train_loss, entry.seconds
        );
        log.epochs.push(entry);
        if eval_auc > log.best_eval_auc {
            log.best_eval_auc = eval_auc;
            log.best_eval_acc = eval_acc;
            log.best_epoch = epoch;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if hp.patience > 0 && since_best >= hp.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    Ok(FitOutput { params: best, log })
}
