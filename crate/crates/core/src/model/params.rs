use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Hyperparams, Variant};
use crate::error::{Error, Result};

/// Sizes that determine every parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamShapes {
    pub users: usize,
    pub entities: usize,
    pub relations: usize,
    /// Embedding dimension d.
    pub dim: usize,
    /// Final user dimension D (depends on the aggregator).
    pub out_dim: usize,
    pub layers: usize,
    /// Per-layer interaction transforms (NGCF variant only).
    pub interaction_transforms: bool,
    /// KG receptive depth; depth > 1 adds intermediate transforms.
    pub depth: usize,
}

impl ParamShapes {
    pub fn new(users: usize, entities: usize, relations: usize, hp: &Hyperparams) -> Self {
        Self {
            users,
            entities,
            // a relation-free KG still needs the sentinel relation 0
            relations: relations.max(1),
            dim: hp.dim,
            out_dim: hp.aggregator.output_dim(hp.dim, hp.layers),
            layers: hp.layers,
            interaction_transforms: hp.variant == Variant::Ngcf,
            depth: hp.depth,
        }
    }

    /// `(name, rows, cols)` in canonical slot order.
    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        let d = self.dim;
        let mut out = vec![
            ("user".to_string(), self.users, d),
            ("entity".to_string(), self.entities, d),
            ("relation".to_string(), self.relations, self.out_dim),
        ];
        for l in 1..=self.layers {
            out.push((format!("w1.{l}"), d, d));
        }
        if self.interaction_transforms {
            for l in 1..=self.layers {
                out.push((format!("w2.{l}"), d, d));
            }
        }
        for k in 1..self.depth {
            out.push((format!("kg_w.{k}"), d, d));
            out.push((format!("kg_b.{k}"), 1, d));
        }
        out.push(("item_w".to_string(), self.out_dim, d));
        out.push(("item_b".to_string(), 1, self.out_dim));
        out
    }
}

/// Slot indices of the fixed tensors.
pub const SLOT_USER: usize = 0;
pub const SLOT_ENTITY: usize = 1;
pub const SLOT_RELATION: usize = 2;

/// All trainable tensors.
///
/// Matrices act on row vectors as `x · Wᵀ`, so `W` is stored `out × in`.
/// Biases are `1 × width` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub shapes: ParamShapes,
    /// `m × d` base user embeddings.
    pub user: Array2<f64>,
    /// `|entities| × d`; items are entities `0..n`.
    pub entity: Array2<f64>,
    /// `|relations| × D`.
    pub relation: Array2<f64>,
    /// W₁ per propagation layer.
    pub layer_transforms: Vec<Array2<f64>>,
    /// W₂ per layer of the NGCF variant; empty otherwise.
    pub interaction_transforms: Vec<Array2<f64>>,
    /// Intermediate KG aggregation transforms for depth > 1.
    pub kg_transforms: Vec<Array2<f64>>,
    pub kg_biases: Vec<Array2<f64>>,
    /// `D × d` item transform.
    pub item_transform: Array2<f64>,
    /// `1 × D` item bias.
    pub item_bias: Array2<f64>,
}

fn xavier<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

impl ModelParams {
    /// Xavier-uniform weights and tables, zero biases; deterministic in `seed`.
    pub fn init(shapes: ParamShapes, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = shapes
            .layout()
            .into_iter()
            .map(|(name, r, c)| {
                if name.contains("_b") {
                    Array2::zeros((r, c))
                } else {
                    xavier(&mut rng, r, c)
                }
            })
            .collect();
        Self::from_tensors(shapes, tensors).expect("layout is self-consistent")
    }

    /// Rebuild from tensors in canonical slot order.
    pub fn from_tensors(shapes: ParamShapes, tensors: Vec<Array2<f64>>) -> Result<Self> {
        let layout = shapes.layout();
        if tensors.len() != layout.len() {
            return Err(Error::Dimension {
                expected: layout.len(),
                got: tensors.len(),
                context: "tensor count",
            });
        }
        for ((name, r, c), t) in layout.iter().zip(&tensors) {
            if t.dim() != (*r, *c) {
                return Err(Error::Invalid(format!(
                    "tensor {name}: expected {r}x{c}, got {:?}",
                    t.dim()
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut take = |k: usize| -> Vec<Array2<f64>> { it.by_ref().take(k).collect() };
        let user = take(1).remove(0);
        let entity = take(1).remove(0);
        let relation = take(1).remove(0);
        let layer_transforms = take(shapes.layers);
        let interaction_transforms = take(if shapes.interaction_transforms { shapes.layers } else { 0 });
        let kg = take(2 * shapes.depth.saturating_sub(1));
        let (kg_transforms, kg_biases) = kg
            .chunks(2)
            .map(|p| (p[0].clone(), p[1].clone()))
            .unzip();
        let mut tail = take(2);
        let item_bias = tail.pop().unwrap();
        let item_transform = tail.pop().unwrap();
        Ok(Self {
            shapes,
            user,
            entity,
            relation,
            layer_transforms,
            interaction_transforms,
            kg_transforms,
            kg_biases,
            item_transform,
            item_bias,
        })
    }

    pub fn slots(&self) -> Vec<&Array2<f64>> {
        let mut v = vec![&self.user, &self.entity, &self.relation];
        v.extend(&self.layer_transforms);
        v.extend(&self.interaction_transforms);
        for (w, b) in self.kg_transforms.iter().zip(&self.kg_biases) {
            v.push(w);
            v.push(b);
        }
        v.push(&self.item_transform);
        v.push(&self.item_bias);
        v
    }

    pub fn slots_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = vec![&mut self.user, &mut self.entity, &mut self.relation];
        v.extend(&mut self.layer_transforms);
        v.extend(&mut self.interaction_transforms);
        for (w, b) in self.kg_transforms.iter_mut().zip(&mut self.kg_biases) {
            v.push(w);
            v.push(b);
        }
        v.push(&mut self.item_transform);
        v.push(&mut self.item_bias);
        v
    }

    pub fn slot_count(&self) -> usize {
        self.shapes.layout().len()
    }

    pub fn slot_names(&self) -> Vec<String> {
        self.shapes.layout().into_iter().map(|(n, _, _)| n).collect()
    }

    // slot ids for the tape
    pub(crate) fn slot_layer(&self, l: usize) -> usize {
        3 + (l - 1)
    }

    pub(crate) fn slot_interaction(&self, l: usize) -> usize {
        3 + self.shapes.layers + (l - 1)
    }

    fn kg_base(&self) -> usize {
        3 + self.shapes.layers * if self.shapes.interaction_transforms { 2 } else { 1 }
    }

    pub(crate) fn slot_kg_w(&self, k: usize) -> usize {
        self.kg_base() + 2 * (k - 1)
    }

    pub(crate) fn slot_kg_b(&self, k: usize) -> usize {
        self.kg_base() + 2 * (k - 1) + 1
    }

    pub(crate) fn slot_item_w(&self) -> usize {
        self.slot_count() - 2
    }

    pub(crate) fn slot_item_b(&self) -> usize {
        self.slot_count() - 1
    }

    pub fn is_finite(&self) -> bool {
        self.slots().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}
