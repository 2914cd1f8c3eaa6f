#![allow(dead_code)]

use dekgci::config::{Hyperparams, Variant};
use dekgci::graph::{InteractionGraph, KnowledgeGraph, SampleTree};
use dekgci::ingest::LabeledExample;
use dekgci::model::{backward, batch_loss, sample_batch_tree, slot_shapes, Graphs, ModelParams};
use ndarray::{Array1, Array2};
use rand::Rng;

pub struct Toy {
    pub graphs: Graphs,
    pub hp: Hyperparams,
    pub params: ModelParams,
    pub batch: Vec<LabeledExample>,
    pub tree: SampleTree,
}

/// 3 users, 3 items, 4 KG entities, d = 4, 2 layers.
pub fn toy(mut hp: Hyperparams, seed: u64) -> Toy {
    hp.dim = 4;
    hp.layers = 2;
    hp.n_neighbor = 2;
    let pos: Vec<LabeledExample> =
        [(0, 0), (0, 1), (1, 1), (2, 2)].iter().map(|&(u, v)| LabeledExample::new(u, v, 1)).collect();
    let interaction = InteractionGraph::build(&pos, 3, 3).unwrap();
    let kg = KnowledgeGraph::build(&[(0, 0, 3), (1, 1, 3), (2, 1, 3), (1, 0, 2)], 4, 2, true).unwrap();
    let graphs = Graphs::new(interaction, kg);
    let batch = vec![
        LabeledExample::new(0, 0, 1),
        LabeledExample::new(1, 2, 0),
        LabeledExample::new(2, 1, 1),
        LabeledExample::new(0, 2, 0),
    ];
    let tree = sample_batch_tree(&graphs, &batch, &hp, seed).unwrap();
    let params = ModelParams::init(graphs.shapes(&hp), seed);
    Toy { graphs, hp, params, batch, tree }
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

/// Central finite differences of the direct-route loss against the tape
/// gradients, over every entry of every tensor.
pub fn finite_difference_check(t: &Toy, step: f64) -> FdReport {
    let grads = backward(&t.params, &t.graphs, &t.hp, &t.batch, &t.tree).unwrap();
    let shapes = slot_shapes(&t.params);
    let names = t.params.slot_names();
    let mut report = FdReport { checked: 0, max_rel_error: 0.0, worst: String::new() };
    for (slot, shape) in shapes.iter().enumerate() {
        let analytic = grads.grads[slot].to_dense(*shape);
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let loss_at = |delta: f64| {
                    let mut p = t.params.clone();
                    p.slots_mut()[slot][[r, c]] += delta;
                    batch_loss(&p, &t.graphs, &t.hp, &t.batch, &t.tree).unwrap()
                };
                let fd = (loss_at(step) - loss_at(-step)) / (2.0 * step);
                let a = analytic[[r, c]];
                let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-6);
                report.checked += 1;
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst = format!("{}[{r},{c}] analytic {a:e} fd {fd:e}", names[slot]);
                }
            }
        }
    }
    report
}

fn lrelu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 { x } else { slope * x }
}

fn matvec(w: &Array2<f64>, x: &Array1<f64>) -> Array1<f64> {
    Array1::from_shape_fn(w.nrows(), |i| (0..w.ncols()).map(|j| w[[i, j]] * x[j]).sum())
}

/// Per-node layer outputs from a dense adjacency matrix, written as the
/// per-neighbour sums of each rule.
pub fn dense_propagation(
    adj: &[Vec<bool>],
    user0: &Array2<f64>,
    item0: &Array2<f64>,
    w1: &[Array2<f64>],
    w2: &[Array2<f64>],
    variant: Variant,
    slope: f64,
) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
    let (m, n) = (adj.len(), adj.first().map_or(0, Vec::len));
    let du: Vec<f64> = (0..m).map(|u| adj[u].iter().filter(|&&e| e).count() as f64).collect();
    let dv: Vec<f64> = (0..n).map(|v| (0..m).filter(|&u| adj[u][v]).count() as f64).collect();
    let mut users = vec![user0.clone()];
    let mut items = vec![item0.clone()];
    for l in 0..w1.len() {
        let (pu, pv) = (&users[l], &items[l]);
        let d = pu.ncols();
        let node = |own: Array1<f64>, nbrs: Vec<(f64, Array1<f64>)>| -> Array1<f64> {
            match variant {
                Variant::Lightgcn => nbrs.iter().fold(Array1::zeros(d), |acc, (c, e)| acc + *c * e),
                Variant::Dekgci => {
                    let mut z = Array1::zeros(d);
                    for (c, e) in &nbrs {
                        z = z + *c * matvec(&w1[l], e);
                    }
                    z.mapv(|x| lrelu(x, slope))
                }
                Variant::Ngcf => {
                    let mut z = matvec(&w1[l], &own);
                    for (c, e) in &nbrs {
                        z = z + *c * (matvec(&w1[l], e) + matvec(&w2[l], &(e * &own)));
                    }
                    z.mapv(|x| lrelu(x, slope))
                }
            }
        };
        let mut nu = Array2::zeros((m, d));
        for u in 0..m {
            let nbrs = (0..n)
                .filter(|&v| adj[u][v])
                .map(|v| (1.0 / (du[u] * dv[v]).sqrt(), pv.row(v).to_owned()))
                .collect();
            nu.row_mut(u).assign(&node(pu.row(u).to_owned(), nbrs));
        }
        let mut nv = Array2::zeros((n, d));
        for v in 0..n {
            let nbrs = (0..m)
                .filter(|&u| adj[u][v])
                .map(|u| (1.0 / (du[u] * dv[v]).sqrt(), pu.row(u).to_owned()))
                .collect();
            nv.row_mut(v).assign(&node(pv.row(v).to_owned(), nbrs));
        }
        users.push(nu);
        items.push(nv);
    }
    (users, items)
}

pub fn random_adjacency<R: Rng>(rng: &mut R, m: usize, n: usize, p: f64) -> Vec<Vec<bool>> {
    (0..m).map(|_| (0..n).map(|_| rng.random_bool(p)).collect()).collect()
}

pub fn positives(adj: &[Vec<bool>]) -> Vec<LabeledExample> {
    let mut out = Vec::new();
    for (u, row) in adj.iter().enumerate() {
        for (v, &e) in row.iter().enumerate() {
            if e {
                out.push(LabeledExample::new(u, v, 1));
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Label line for acceptance output.
pub fn verdict(pass: bool) -> &'static str {
    if pass { "PASS" } else { "FAIL" }
}

/// Ratings and KG text for a planted-cluster world: users mostly rate items
/// of their own cluster, and each item links to its cluster's attribute
/// entity in the KG.
pub fn planted_world(users: usize, items: usize, clusters: usize, seed: u64) -> (String, String) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let cluster_of_item = |v: usize| v % clusters;
    let mut ratings = String::new();
    for u in 0..users {
        let c = u % clusters;
        for v in 0..items {
            let p = if cluster_of_item(v) == c { 0.7 } else { 0.01 };
            if rng.random_bool(p) {
                ratings.push_str(&format!("{u}\t{v}\t1\n"));
            }
        }
    }
    let mut kg = String::new();
    for v in 0..items {
        kg.push_str(&format!("{v}\t0\t{}\n", items + cluster_of_item(v)));
        kg.push_str(&format!("{v}\t1\t{}\n", items + clusters + rng.random_range(0..4)));
    }
    (ratings, kg)
}
