//! Parameters, prediction, loss, gradients and the training loop.
//!
//! Two forward routes exist. The direct route ([`user_representations`],
//! [`crate::item_tower::item_representation`]) is plain array code used for
//! inference and for [`batch_loss`]. The tape route ([`loss_and_gradients`])
//! records the same computation batched on an [`crate::autodiff::Tape`] and yields
//! exact gradients.

mod checkpoint;
mod optim;
mod params;
mod train;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use params::{ModelParams, ParamShapes, SLOT_ENTITY, SLOT_RELATION, SLOT_USER};
pub use train::{fit, fit_from, EpochLog, FitOptions, FitOutput, TrainingLog};
pub(crate) use train::eval_sampling_seed;

pub use crate::autodiff::{GradientSet, TensorGrad};

use crate::autodiff::{NodeId, Tape};
use crate::config::{Aggregator, Hyperparams, Variant};
use crate::error::{Error, Result};
use crate::graph::{InteractionGraph, KnowledgeGraph, SampleTree};
use crate::ingest::{LabeledExample, PreparedDataset};
use crate::item_tower::item_representation;
use crate::user_tower::{aggregate_all, propagate};
use crate::{derive_seed, sigmoid};

/// Probability clamp for the cross-entropy.
pub const PROB_EPS: f64 = 1e-7;

/// Train-only interaction graph plus the bidirectional KG.
#[derive(Debug, Clone)]
pub struct Graphs {
    pub interaction: InteractionGraph,
    pub kg: KnowledgeGraph,
}

impl Graphs {
    pub fn new(interaction: InteractionGraph, kg: KnowledgeGraph) -> Self {
        Self { interaction, kg }
    }

    pub fn from_dataset(ds: &PreparedDataset) -> Result<Self> {
        let interaction = Self::interaction_graph(ds)?;
        Ok(Self { interaction, kg: Self::knowledge_graph(ds)? })
    }

    /// Interaction graph over the train positives only.
    pub fn interaction_graph(ds: &PreparedDataset) -> Result<InteractionGraph> {
        InteractionGraph::build(&ds.split.train_positives(), ds.num_users, ds.num_items)
    }

    /// Bidirectional KG spanning every item and entity.
    pub fn knowledge_graph(ds: &PreparedDataset) -> Result<KnowledgeGraph> {
        KnowledgeGraph::build(&ds.kg.triples, ds.entity_count(), ds.kg.relation_count.max(1), true)
    }

    pub fn shapes(&self, hp: &Hyperparams) -> ParamShapes {
        ParamShapes::new(self.interaction.num_users(), self.kg.entity_count(), self.kg.relation_count(), hp)
    }
}

/// `e_u*` for every user (`m × D`) through the direct route.
pub fn user_representations(params: &ModelParams, graphs: &Graphs, hp: &Hyperparams) -> Result<Array2<f64>> {
    let layers = propagate(&graphs.interaction, params, &hp.propagation())?;
    Ok(aggregate_all(&layers, hp.aggregator))
}

/// Summed clamped binary cross-entropy.
pub fn bce_loss(predictions: &[f64], labels: &[u8]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Empty("loss over an empty batch".into()));
    }
    Ok(predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            let y = y as f64;
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum())
}

fn check_batch(batch: &[LabeledExample], graphs: &Graphs) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    for e in batch {
        if e.user >= graphs.interaction.num_users() {
            return Err(Error::OutOfRange { what: "user", index: e.user, limit: graphs.interaction.num_users() });
        }
        if e.item >= graphs.kg.entity_count() {
            return Err(Error::OutOfRange { what: "item", index: e.item, limit: graphs.kg.entity_count() });
        }
    }
    Ok(())
}

/// Neighbour sample tree with one root per batch item.
pub fn sample_batch_tree(
    graphs: &Graphs,
    batch: &[LabeledExample],
    hp: &Hyperparams,
    seed: u64,
) -> Result<SampleTree> {
    let roots: Vec<usize> = batch.iter().map(|e| e.item).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    graphs.kg.sample_tree(&roots, hp.n_neighbor, hp.depth, &mut rng)
}

/// Predicted click probabilities for a batch whose neighbours are `tree`
/// (direct route).
pub fn predict_batch(
    params: &ModelParams,
    graphs: &Graphs,
    hp: &Hyperparams,
    batch: &[LabeledExample],
    tree: &SampleTree,
) -> Result<Vec<f64>> {
    check_batch(batch, graphs)?;
    let ustar = user_representations(params, graphs, hp)?;
    predict_with_users(&ustar, params, hp, batch, tree)
}

fn predict_with_users(
    ustar: &Array2<f64>,
    params: &ModelParams,
    hp: &Hyperparams,
    batch: &[LabeledExample],
    tree: &SampleTree,
) -> Result<Vec<f64>> {
    batch
        .iter()
        .enumerate()
        .map(|(b, e)| {
            let u = ustar.row(e.user);
            let v = item_representation(u, &tree.root(b), params, hp.leaky_slope)?;
            Ok(sigmoid(u.dot(&v)))
        })
        .collect()
}

/// Click probability for one pair; neighbours are drawn from `seed`.
pub fn predict(
    user: usize,
    item: usize,
    params: &ModelParams,
    graphs: &Graphs,
    hp: &Hyperparams,
    seed: u64,
) -> Result<f64> {
    let batch = [LabeledExample::new(user, item, 0)];
    let tree = sample_batch_tree(graphs, &batch, hp, seed)?;
    Ok(predict_batch(params, graphs, hp, &batch, &tree)?[0])
}

/// Summed clamped BCE for a batch, through the direct route.
pub fn batch_loss(
    params: &ModelParams,
    graphs: &Graphs,
    hp: &Hyperparams,
    batch: &[LabeledExample],
    tree: &SampleTree,
) -> Result<f64> {
    let preds = predict_batch(params, graphs, hp, batch, tree)?;
    let labels: Vec<u8> = batch.iter().map(|e| e.label).collect();
    bce_loss(&preds, &labels)
}

/// Record the batched forward pass; returns the logits node (`B × 1`).
fn record_forward<'g>(
    tape: &mut Tape<'g>,
    params: &ModelParams,
    graphs: &'g Graphs,
    hp: &Hyperparams,
    batch: &[LabeledExample],
    tree: &SampleTree,
) -> Result<NodeId> {
    let g = &graphs.interaction;
    let slope = hp.leaky_slope;
    let n_items = g.num_items();

    // user tower
    let mut users = vec![tape.param(SLOT_USER, &params.user)];
    let item_rows: Vec<usize> = (0..n_items).collect();
    let mut items = vec![tape.gather(SLOT_ENTITY, &params.entity, &item_rows)];
    for l in 1..=hp.layers {
        let (pu, pv) = (users[l - 1], items[l - 1]);
        let hu = tape.spmm(g.user_to_item(), g.item_to_user(), pv);
        let hv = tape.spmm(g.item_to_user(), g.user_to_item(), pu);
        let (nu, nv) = match hp.variant {
            Variant::Dekgci => {
                let w = tape.param(params.slot_layer(l), &params.layer_transforms[l - 1]);
                let zu = tape.matmul_t(hu, w);
                let zv = tape.matmul_t(hv, w);
                (tape.leaky_relu(zu, slope), tape.leaky_relu(zv, slope))
            }
            Variant::Ngcf => {
                let w1 = tape.param(params.slot_layer(l), &params.layer_transforms[l - 1]);
                let w2 = tape.param(params.slot_interaction(l), &params.interaction_transforms[l - 1]);
                let mut side = |own: NodeId, agg: NodeId| {
                    let s = tape.add(own, agg);
                    let lin = tape.matmul_t(s, w1);
                    let p = tape.mul(own, agg);
                    let inter = tape.matmul_t(p, w2);
                    let z = tape.add(lin, inter);
                    tape.leaky_relu(z, slope)
                };
                (side(pu, hu), side(pv, hv))
            }
            Variant::Lightgcn => (hu, hv),
        };
        users.push(nu);
        items.push(nv);
    }
    let ustar_all = match hp.aggregator {
        Aggregator::Sum => users[1..].iter().fold(users[0], |acc, &x| tape.add(acc, x)),
        Aggregator::Concat => tape.concat(&users),
        Aggregator::Neighbor => tape.concat(&users[1..]),
    };
    let batch_users: Vec<usize> = batch.iter().map(|e| e.user).collect();
    let ustar = tape.select_rows(ustar_all, &batch_users);

    // item tower
    let depth = tree.depth();
    let n = tree.n_neighbor;
    let mut h: Vec<NodeId> = tree
        .entities
        .iter()
        .map(|lvl| tape.gather(SLOT_ENTITY, &params.entity, lvl))
        .collect();
    let mut attention = vec![usize::MAX];
    let mut width = 1usize;
    for k in 1..=depth {
        width *= n;
        let rel = tape.gather(SLOT_RELATION, &params.relation, &tree.relations[k]);
        let owner: Vec<usize> = (0..batch.len() * width).map(|j| j / width).collect();
        let urep = tape.select_rows(ustar, &owner);
        let scores = tape.row_dot(urep, rel);
        attention.push(tape.group_softmax(scores, n));
    }
    let kg_params: Vec<(NodeId, NodeId)> = (1..depth)
        .map(|i| {
            (
                tape.param(params.slot_kg_w(i), &params.kg_transforms[i - 1]),
                tape.param(params.slot_kg_b(i), &params.kg_biases[i - 1]),
            )
        })
        .collect();
    let w_item = tape.param(params.slot_item_w(), &params.item_transform);
    let b_item = tape.param(params.slot_item_b(), &params.item_bias);
    for i in 1..=depth {
        let mut next = Vec::with_capacity(depth - i + 1);
        for k in 0..=depth - i {
            let scaled = tape.scale_rows(h[k + 1], attention[k + 1]);
            let nb = tape.group_sum(scaled, n);
            let agg = tape.add(h[k], nb);
            let (w, b) = if i < depth { kg_params[i - 1] } else { (w_item, b_item) };
            let z = tape.matmul_t(agg, w);
            let z = tape.add_bias(z, b);
            next.push(tape.leaky_relu(z, slope));
        }
        h = next;
    }
    Ok(tape.row_dot(ustar, h[0]))
}

/// Summed BCE and its exact gradient for every parameter slot (tape route).
pub fn loss_and_gradients(
    params: &ModelParams,
    graphs: &Graphs,
    hp: &Hyperparams,
    batch: &[LabeledExample],
    tree: &SampleTree,
) -> Result<(f64, GradientSet)> {
    check_batch(batch, graphs)?;
    if tree.num_roots() != batch.len() {
        return Err(Error::Dimension { expected: batch.len(), got: tree.num_roots(), context: "sample tree roots" });
    }
    let mut tape = Tape::new();
    let logits = record_forward(&mut tape, params, graphs, hp, batch, tree)?;
    let labels: Vec<f64> = batch.iter().map(|e| e.label as f64).collect();
    let loss = tape.bce(logits, &labels, PROB_EPS);
    let value = tape.value(loss)[[0, 0]];
    Ok((value, tape.backward(loss, params.slot_count())))
}

/// Gradients only; see [`loss_and_gradients`].
pub fn backward(
    params: &ModelParams,
    graphs: &Graphs,
    hp: &Hyperparams,
    batch: &[LabeledExample],
    tree: &SampleTree,
) -> Result<GradientSet> {
    loss_and_gradients(params, graphs, hp, batch, tree).map(|(_, g)| g)
}

/// Logits through the tape route, for cross-checking the direct route.
pub fn tape_logits(
    params: &ModelParams,
    graphs: &Graphs,
    hp: &Hyperparams,
    batch: &[LabeledExample],
    tree: &SampleTree,
) -> Result<Vec<f64>> {
    check_batch(batch, graphs)?;
    let mut tape = Tape::new();
    let logits = record_forward(&mut tape, params, graphs, hp, batch, tree)?;
    Ok(tape.value(logits).column(0).to_vec())
}

const SCORE_CHUNK: usize = 1024;

/// Predicted probabilities for many examples.
///
/// Chunk `c` samples neighbours from `derive_seed(seed, [c])`, so the output
/// does not depend on `workers`.
pub fn score_examples(
    params: &ModelParams,
    graphs: &Graphs,
    hp: &Hyperparams,
    examples: &[LabeledExample],
    seed: u64,
    workers: usize,
) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Ok(Vec::new());
    }
    check_batch(examples, graphs)?;
    let ustar = user_representations(params, graphs, hp)?;
    let run = || -> Result<Vec<Vec<f64>>> {
        examples
            .par_chunks(SCORE_CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let tree = sample_batch_tree(graphs, chunk, hp, derive_seed(seed, &[c as u64]))?;
                predict_with_users(&ustar, params, hp, chunk, &tree)
            })
            .collect()
    };
    let parts = if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?
            .install(run)?
    } else {
        run()?
    };
    Ok(parts.concat())
}

/// Shapes of every slot, for densifying gradients.
pub fn slot_shapes(params: &ModelParams) -> Vec<(usize, usize)> {
    params.slots().iter().map(|t| t.dim()).collect()
}

/// Attention-weight sums for every sampled group of a batch (diagnostic).
pub fn attention_row_sums(
    params: &ModelParams,
    graphs: &Graphs,
    hp: &Hyperparams,
    batch: &[LabeledExample],
    tree: &SampleTree,
) -> Result<Vec<f64>> {
    let ustar = user_representations(params, graphs, hp)?;
    let mut sums = Vec::new();
    for (b, e) in batch.iter().enumerate() {
        let sub = tree.root(b);
        for k in 1..=sub.depth() {
            for a in crate::item_tower::level_attention(
                ustar.row(e.user),
                &sub.relations[k],
                sub.n_neighbor,
                &params.relation,
            )? {
                sums.push(a.weights.iter().sum());
            }
        }
    }
    Ok(sums)
}
