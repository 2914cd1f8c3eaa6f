//! Layered user (and mirrored item) propagation over the interaction graph.
//!
//! Layer-0 user rows come from the user table and layer-0 item rows from
//! the entity table. Every layer updates both sides from the other side's
//! previous layer; item tables exist only to feed the next user layer.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};

use crate::autodiff::csr_matmul;
use crate::config::{Aggregator, PropagationConfig, Variant};
use crate::error::{Error, Result};
use crate::graph::InteractionGraph;
use crate::leaky_relu;
use crate::model::ModelParams;

/// `e_u^(0..=l)` and `e_v^(0..=l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEmbeddings {
    pub users: Vec<Array2<f64>>,
    pub items: Vec<Array2<f64>>,
}

impl LayerEmbeddings {
    pub fn layers(&self) -> usize {
        self.users.len() - 1
    }

    pub fn user_layers(&self, u: usize) -> Vec<ArrayView1<'_, f64>> {
        self.users.iter().map(|t| t.row(u)).collect()
    }
}

/// Message from item `v` to user `u` at some layer:
/// `1/sqrt(|N_v| |N_u|) · W · e_v^(l-1)`.
pub fn message(
    g: &InteractionGraph,
    u: usize,
    v: usize,
    transform: &Array2<f64>,
    item_prev: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    if transform.ncols() != item_prev.len() {
        return Err(Error::Dimension {
            expected: transform.ncols(),
            got: item_prev.len(),
            context: "message transform vs item embedding",
        });
    }
    let c = g.norm_coeff(u, v)?;
    Ok(transform.dot(&item_prev) * c)
}

fn check_tables(g: &InteractionGraph, users: &Array2<f64>, items: &Array2<f64>) -> Result<()> {
    if users.nrows() != g.num_users() {
        return Err(Error::Dimension { expected: g.num_users(), got: users.nrows(), context: "user table rows" });
    }
    if items.nrows() != g.num_items() {
        return Err(Error::Dimension { expected: g.num_items(), got: items.nrows(), context: "item table rows" });
    }
    if users.ncols() != items.ncols() {
        return Err(Error::Dimension { expected: users.ncols(), got: items.ncols(), context: "embedding widths" });
    }
    Ok(())
}

fn check_square(w: &Array2<f64>, d: usize) -> Result<()> {
    if w.dim() != (d, d) {
        return Err(Error::Dimension { expected: d, got: w.nrows().max(w.ncols()), context: "layer transform" });
    }
    Ok(())
}

/// One layer of the default rule:
/// `e_u^(l) = LeakyReLU(Σ_{v∈N_u} c_uv W e_v^(l-1))` and the mirror for items.
///
/// `W` is linear, so the normalised neighbour sum is formed first and
/// transformed once per node. Isolated nodes come out as zero.
pub fn propagate_layer(
    g: &InteractionGraph,
    transform: &Array2<f64>,
    prev_users: &Array2<f64>,
    prev_items: &Array2<f64>,
    slope: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_tables(g, prev_users, prev_items)?;
    check_square(transform, prev_users.ncols())?;
    let hu = csr_matmul(g.user_to_item(), prev_items);
    let hv = csr_matmul(g.item_to_user(), prev_users);
    let users = hu.dot(&transform.t()).mapv(|x| leaky_relu(x, slope));
    let items = hv.dot(&transform.t()).mapv(|x| leaky_relu(x, slope));
    Ok((users, items))
}

/// NGCF rule:
/// `σ(W₁ e_u + Σ_v c_uv (W₁ e_v + W₂ (e_v ⊙ e_u)))`, mirrored for items.
pub fn propagate_ngcf_layer(
    g: &InteractionGraph,
    w1: &Array2<f64>,
    w2: &Array2<f64>,
    prev_users: &Array2<f64>,
    prev_items: &Array2<f64>,
    slope: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_tables(g, prev_users, prev_items)?;
    check_square(w1, prev_users.ncols())?;
    check_square(w2, prev_users.ncols())?;
    let side = |own: &Array2<f64>, agg: Array2<f64>| -> Array2<f64> {
        let lin = (own + &agg).dot(&w1.t());
        let inter = (own * &agg).dot(&w2.t());
        (lin + inter).mapv(|x| leaky_relu(x, slope))
    };
    let users = side(prev_users, csr_matmul(g.user_to_item(), prev_items));
    let items = side(prev_items, csr_matmul(g.item_to_user(), prev_users));
    Ok((users, items))
}

/// LightGCN rule: `Σ_v c_uv e_v`, no transform and no activation.
pub fn propagate_lightgcn_layer(
    g: &InteractionGraph,
    prev_users: &Array2<f64>,
    prev_items: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_tables(g, prev_users, prev_items)?;
    Ok((
        csr_matmul(g.user_to_item(), prev_items),
        csr_matmul(g.item_to_user(), prev_users),
    ))
}

/// Run all layers of the configured variant from the parameter tables.
pub fn propagate(g: &InteractionGraph, params: &ModelParams, cfg: &PropagationConfig) -> Result<LayerEmbeddings> {
    cfg.validate()?;
    if params.layer_transforms.len() != cfg.layers {
        return Err(Error::Dimension {
            expected: cfg.layers,
            got: params.layer_transforms.len(),
            context: "layer transforms",
        });
    }
    if g.num_items() > params.entity.nrows() {
        return Err(Error::OutOfRange { what: "item", index: g.num_items() - 1, limit: params.entity.nrows() });
    }
    let mut users = vec![params.user.clone()];
    let mut items = vec![params.entity.slice(s![..g.num_items(), ..]).to_owned()];
    for l in 1..=cfg.layers {
        let (pu, pv) = (&users[l - 1], &items[l - 1]);
        let (nu, nv) = match cfg.variant {
            Variant::Dekgci => propagate_layer(g, &params.layer_transforms[l - 1], pu, pv, cfg.leaky_slope)?,
            Variant::Ngcf => {
                let w2 = params.interaction_transforms.get(l - 1).ok_or_else(|| {
                    Error::Invalid("NGCF variant needs per-layer interaction transforms".into())
                })?;
                propagate_ngcf_layer(g, &params.layer_transforms[l - 1], w2, pu, pv, cfg.leaky_slope)?
            }
            Variant::Lightgcn => propagate_lightgcn_layer(g, pu, pv)?,
        };
        users.push(nu);
        items.push(nv);
    }
    Ok(LayerEmbeddings { users, items })
}

/// Combine one user's per-layer vectors `[e^(0), …, e^(l)]`.
pub fn aggregate_user(layers: &[ArrayView1<'_, f64>], aggregator: Aggregator) -> Result<Array1<f64>> {
    if layers.len() < 2 {
        return Err(Error::Invalid("aggregation needs layer 0 and at least one propagated layer".into()));
    }
    let d = layers[0].len();
    if let Some(bad) = layers.iter().find(|v| v.len() != d) {
        return Err(Error::Dimension { expected: d, got: bad.len(), context: "layer vector width" });
    }
    Ok(match aggregator {
        Aggregator::Sum => layers.iter().fold(Array1::zeros(d), |acc, v| acc + v),
        Aggregator::Concat => concatenate(Axis(0), layers).expect("equal widths"),
        Aggregator::Neighbor => concatenate(Axis(0), &layers[1..]).expect("equal widths"),
    })
}

/// Final representation `e_u*` for every user, `m × D`.
pub fn aggregate_all(emb: &LayerEmbeddings, aggregator: Aggregator) -> Array2<f64> {
    match aggregator {
        Aggregator::Sum => emb.users.iter().skip(1).fold(emb.users[0].clone(), |acc, t| acc + t),
        Aggregator::Concat => {
            let v: Vec<_> = emb.users.iter().map(|t| t.view()).collect();
            concatenate(Axis(1), &v).expect("equal rows")
        }
        Aggregator::Neighbor => {
            let v: Vec<_> = emb.users.iter().skip(1).map(|t| t.view()).collect();
            concatenate(Axis(1), &v).expect("equal rows")
        }
    }
}
