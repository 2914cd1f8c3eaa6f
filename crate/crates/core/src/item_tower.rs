//! Item representation from user-relation attention over sampled KG
//! neighbours.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::graph::SampleTree;
use crate::leaky_relu;
use crate::model::ModelParams;

/// Raw and normalised attention for one neighbour set.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionScores {
    pub raw: Vec<f64>,
    pub weights: Vec<f64>,
}

/// `π̂(u, r) = e_u*ᵀ e_r`.
pub fn user_relation_score(user: ArrayView1<'_, f64>, relation: ArrayView1<'_, f64>) -> Result<f64> {
    if user.len() != relation.len() {
        return Err(Error::Dimension {
            expected: user.len(),
            got: relation.len(),
            context: "user vs relation embedding",
        });
    }
    Ok(user.dot(&relation))
}

/// Max-shifted softmax.
pub fn attention_weights(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::Empty("attention over an empty neighbour set".into()));
    }
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|&s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// `Σ_t π_t e_t` with neighbour embeddings as rows.
pub fn neighbor_representation(weights: &[f64], neighbors: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    if weights.len() != neighbors.nrows() {
        return Err(Error::Dimension {
            expected: neighbors.nrows(),
            got: weights.len(),
            context: "attention weights vs neighbours",
        });
    }
    let mut out = Array1::zeros(neighbors.ncols());
    for (w, row) in weights.iter().zip(neighbors.rows()) {
        out.scaled_add(*w, &row);
    }
    Ok(out)
}

/// `LeakyReLU(W (v₀ + V_N) + b)`; `transform` is `D × d`, `bias` has length D.
pub fn item_final(
    base: ArrayView1<'_, f64>,
    neighborhood: ArrayView1<'_, f64>,
    transform: &Array2<f64>,
    bias: ArrayView1<'_, f64>,
    slope: f64,
) -> Result<Array1<f64>> {
    if base.len() != neighborhood.len() || transform.ncols() != base.len() {
        return Err(Error::Dimension {
            expected: transform.ncols(),
            got: base.len().max(neighborhood.len()),
            context: "item transform input",
        });
    }
    if bias.len() != transform.nrows() {
        return Err(Error::Dimension { expected: transform.nrows(), got: bias.len(), context: "item bias" });
    }
    let z = transform.dot(&(&base + &neighborhood)) + bias;
    Ok(z.mapv(|x| leaky_relu(x, slope)))
}

/// Attention of one user over each group of `n` children in a sample level.
pub fn level_attention(
    user: ArrayView1<'_, f64>,
    relations: &[usize],
    n: usize,
    relation_table: &Array2<f64>,
) -> Result<Vec<AttentionScores>> {
    relations
        .chunks(n)
        .map(|group| {
            let raw = group
                .iter()
                .map(|&r| user_relation_score(user, relation_table.row(r)))
                .collect::<Result<Vec<_>>>()?;
            let weights = attention_weights(&raw)?;
            Ok(AttentionScores { raw, weights })
        })
        .collect()
}

/// Final item vector `e_v*` for one (user, item) pair.
///
/// `tree` is a single-root sample of depth H. With H = 1 this is the
/// attention-weighted 1-hop neighbourhood passed through the item transform.
/// With H > 1 each child is first replaced by its own depth-(H-1)
/// representation, using the intermediate KG transforms.
pub fn item_representation(
    user: ArrayView1<'_, f64>,
    tree: &SampleTree,
    params: &ModelParams,
    slope: f64,
) -> Result<Array1<f64>> {
    if tree.num_roots() != 1 {
        return Err(Error::Invalid("item_representation takes a single-root tree".into()));
    }
    let depth = tree.depth();
    if depth == 0 {
        return Err(Error::Invalid("receptive depth must be >= 1".into()));
    }
    if params.kg_transforms.len() != depth - 1 {
        return Err(Error::Dimension {
            expected: depth - 1,
            got: params.kg_transforms.len(),
            context: "KG transforms for receptive depth",
        });
    }
    let n = tree.n_neighbor;
    let attention: Vec<Vec<AttentionScores>> = (1..=depth)
        .map(|k| level_attention(user, &tree.relations[k], n, &params.relation))
        .collect::<Result<_>>()?;

    let mut h: Vec<Array2<f64>> = tree
        .entities
        .iter()
        .map(|level| params.entity.select(ndarray::Axis(0), level))
        .collect();

    for i in 1..=depth {
        let mut next = Vec::with_capacity(depth - i + 1);
        for k in 0..=depth - i {
            let width = h[k].nrows();
            let mut level = Array2::zeros((width, if i < depth { params.shapes.dim } else { params.shapes.out_dim }));
            for j in 0..width {
                let children = h[k + 1].slice(ndarray::s![j * n..(j + 1) * n, ..]);
                let vn = neighbor_representation(&attention[k][j].weights, children)?;
                let out = if i < depth {
                    item_final(
                        h[k].row(j),
                        vn.view(),
                        &params.kg_transforms[i - 1],
                        params.kg_biases[i - 1].row(0),
                        slope,
                    )?
                } else {
                    item_final(h[k].row(j), vn.view(), &params.item_transform, params.item_bias.row(0), slope)?
                };
                level.row_mut(j).assign(&out);
            }
            next.push(level);
        }
        h = next;
    }
    Ok(h.remove(0).row(0).to_owned())
}
