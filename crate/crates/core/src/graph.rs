//! Immutable interaction graph and knowledge-graph adjacency.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::ingest::LabeledExample;
use crate::io::write_atomic;

/// Row-compressed sparse matrix with `f64` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub rows: usize,
    pub cols: usize,
    pub offsets: Vec<usize>,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Csr {
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.offsets[r], self.offsets[r + 1]);
        (&self.indices[a..b], &self.weights[a..b])
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// Bipartite user-item graph over train-split positives.
///
/// `user_adj[u]` holds the sorted item neighbours N_u, `item_adj[v]` the
/// sorted user neighbours N_v. The two normalised adjacency matrices carry
/// the symmetric coefficient `1/sqrt(|N_u| |N_v|)` on every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    num_users: usize,
    num_items: usize,
    user_to_item: Csr,
    item_to_user: Csr,
}

fn build_csr(rows: usize, cols: usize, edges: &[(usize, usize)]) -> Csr {
    let mut offsets = vec![0usize; rows + 1];
    for &(r, _) in edges {
        offsets[r + 1] += 1;
    }
    for i in 0..rows {
        offsets[i + 1] += offsets[i];
    }
    let mut indices = vec![0usize; edges.len()];
    let mut cursor = offsets.clone();
    for &(r, c) in edges {
        indices[cursor[r]] = c;
        cursor[r] += 1;
    }
    for r in 0..rows {
        indices[offsets[r]..offsets[r + 1]].sort_unstable();
    }
    Csr {
        rows,
        cols,
        offsets,
        indices,
        weights: vec![0.0; edges.len()],
    }
}

impl InteractionGraph {
    /// Build from label-1 examples. Duplicate edges collapse.
    pub fn build(train_positives: &[LabeledExample], m: usize, n: usize) -> Result<Self> {
        let mut edges = Vec::with_capacity(train_positives.len());
        for e in train_positives {
            if e.label != 1 {
                return Err(Error::Invalid(format!(
                    "interaction graph takes positives only; got ({}, {}, {})",
                    e.user, e.item, e.label
                )));
            }
            if e.user >= m {
                return Err(Error::OutOfRange { what: "user", index: e.user, limit: m });
            }
            if e.item >= n {
                return Err(Error::OutOfRange { what: "item", index: e.item, limit: n });
            }
            edges.push((e.user, e.item));
        }
        edges.sort_unstable();
        edges.dedup();
        let mut user_to_item = build_csr(m, n, &edges);
        let flipped: Vec<_> = edges.iter().map(|&(u, v)| (v, u)).collect();
        let mut item_to_user = build_csr(n, m, &flipped);

        let udeg: Vec<f64> = (0..m).map(|u| (user_to_item.offsets[u + 1] - user_to_item.offsets[u]) as f64).collect();
        let vdeg: Vec<f64> = (0..n).map(|v| (item_to_user.offsets[v + 1] - item_to_user.offsets[v]) as f64).collect();
        for u in 0..m {
            for k in user_to_item.offsets[u]..user_to_item.offsets[u + 1] {
                let v = user_to_item.indices[k];
                user_to_item.weights[k] = 1.0 / (udeg[u] * vdeg[v]).sqrt();
            }
        }
        for v in 0..n {
            for k in item_to_user.offsets[v]..item_to_user.offsets[v + 1] {
                let u = item_to_user.indices[k];
                item_to_user.weights[k] = 1.0 / (udeg[u] * vdeg[v]).sqrt();
            }
        }
        Ok(Self {
            num_users: m,
            num_items: n,
            user_to_item,
            item_to_user,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_edges(&self) -> usize {
        self.user_to_item.nnz()
    }

    /// N_u, sorted.
    pub fn user_neighbors(&self, u: usize) -> &[usize] {
        self.user_to_item.row(u).0
    }

    /// N_v, sorted.
    pub fn item_neighbors(&self, v: usize) -> &[usize] {
        self.item_to_user.row(v).0
    }

    pub fn user_degree(&self, u: usize) -> usize {
        self.user_neighbors(u).len()
    }

    pub fn item_degree(&self, v: usize) -> usize {
        self.item_neighbors(v).len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_users && self.user_neighbors(u).binary_search(&v).is_ok()
    }

    /// `1/sqrt(|N_v| |N_u|)` for an existing edge.
    pub fn norm_coeff(&self, u: usize, v: usize) -> Result<f64> {
        if !self.has_edge(u, v) {
            return Err(Error::Invalid(format!("({u}, {v}) is not an edge")));
        }
        Ok(1.0 / ((self.user_degree(u) * self.item_degree(v)) as f64).sqrt())
    }

    /// Normalised users × items adjacency.
    pub fn user_to_item(&self) -> &Csr {
        &self.user_to_item
    }

    /// Normalised items × users adjacency (the transpose).
    pub fn item_to_user(&self) -> &Csr {
        &self.item_to_user
    }

    const CACHE_MAGIC: &'static [u8; 4] = b"DKIG";
    const CACHE_VERSION: u32 = 1;

    /// Versioned binary cache keyed by an arbitrary string (dataset hash + seed).
    pub fn write_cache(&self, path: &Path, key: &str) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(Self::CACHE_MAGIC);
        buf.extend_from_slice(&Self::CACHE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(key.len() as u64).to_le_bytes());
        buf.extend_from_slice(key.as_bytes());
        for x in [self.num_users, self.num_items, self.num_edges()] {
            buf.extend_from_slice(&(x as u64).to_le_bytes());
        }
        for u in 0..self.num_users {
            for &v in self.user_neighbors(u) {
                buf.extend_from_slice(&(u as u64).to_le_bytes());
                buf.extend_from_slice(&(v as u64).to_le_bytes());
            }
        }
        write_atomic(path, &buf)
    }

    /// `Ok(None)` when the cache exists but was written for another key or version.
    pub fn read_cache(path: &Path, key: &str) -> Result<Option<Self>> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = ByteReader::new(&bytes);
        let bad = || Error::Invalid(format!("{}: truncated graph cache", path.display()));
        if r.take(4).ok_or_else(bad)? != Self::CACHE_MAGIC {
            return Ok(None);
        }
        if r.u32().ok_or_else(bad)? != Self::CACHE_VERSION {
            return Ok(None);
        }
        let klen = r.u64().ok_or_else(bad)? as usize;
        if r.take(klen).ok_or_else(bad)? != key.as_bytes() {
            return Ok(None);
        }
        let m = r.u64().ok_or_else(bad)? as usize;
        let n = r.u64().ok_or_else(bad)? as usize;
        let e = r.u64().ok_or_else(bad)? as usize;
        let mut pos = Vec::with_capacity(e);
        for _ in 0..e {
            let u = r.u64().ok_or_else(bad)? as usize;
            let v = r.u64().ok_or_else(bad)? as usize;
            pos.push(LabeledExample::new(u, v, 1));
        }
        Self::build(&pos, m, n).map(Some)
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    pub(crate) fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    pub(crate) fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    pub(crate) fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Per-entity `(relation, tail)` adjacency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    adjacency: Vec<Vec<(usize, usize)>>,
    entity_count: usize,
    relation_count: usize,
}

impl KnowledgeGraph {
    /// With `bidirectional`, each triple `(h, r, t)` also yields `t -> (r, h)`.
    pub fn build(
        triples: &[(usize, usize, usize)],
        entity_count: usize,
        relation_count: usize,
        bidirectional: bool,
    ) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); entity_count];
        for &(h, r, t) in triples {
            for e in [h, t] {
                if e >= entity_count {
                    return Err(Error::OutOfRange { what: "entity", index: e, limit: entity_count });
                }
            }
            if r >= relation_count {
                return Err(Error::OutOfRange { what: "relation", index: r, limit: relation_count });
            }
            adjacency[h].push((r, t));
            if bidirectional {
                adjacency[t].push((r, h));
            }
        }
        Ok(Self {
            adjacency,
            entity_count,
            relation_count,
        })
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    pub fn neighbors(&self, entity: usize) -> &[(usize, usize)] {
        &self.adjacency[entity]
    }

    pub fn degree(&self, entity: usize) -> usize {
        self.adjacency[entity].len()
    }

    pub fn total_adjacency(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// Fixed-size neighbour sample for one entity.
    ///
    /// Without replacement when `degree >= n_neighbor`, with replacement when
    /// `0 < degree < n_neighbor`, and `n_neighbor` copies of the self-loop
    /// `(relation 0, entity)` when the entity has no neighbours.
    pub fn sample_neighbors<R: Rng + ?Sized>(
        &self,
        entity: usize,
        n_neighbor: usize,
        rng: &mut R,
    ) -> Result<NeighborSample> {
        if n_neighbor == 0 {
            return Err(Error::Invalid("n_neighbor must be >= 1".into()));
        }
        if entity >= self.entity_count {
            return Err(Error::OutOfRange { what: "entity", index: entity, limit: self.entity_count });
        }
        let mut out = NeighborSample {
            entities: Vec::with_capacity(n_neighbor),
            relations: Vec::with_capacity(n_neighbor),
        };
        self.sample_into(entity, n_neighbor, rng, &mut out.entities, &mut out.relations);
        Ok(out)
    }

    fn sample_into<R: Rng + ?Sized>(
        &self,
        entity: usize,
        n: usize,
        rng: &mut R,
        entities: &mut Vec<usize>,
        relations: &mut Vec<usize>,
    ) {
        let adj = &self.adjacency[entity];
        let deg = adj.len();
        if deg == 0 {
            entities.extend(std::iter::repeat_n(entity, n));
            relations.extend(std::iter::repeat_n(0, n));
        } else if deg >= n {
            for i in rand::seq::index::sample(rng, deg, n) {
                relations.push(adj[i].0);
                entities.push(adj[i].1);
            }
        } else {
            for _ in 0..n {
                let (r, t) = adj[rng.random_range(0..deg)];
                relations.push(r);
                entities.push(t);
            }
        }
    }

    /// Sample a `depth`-level tree below each root (KGCN-style receptive field).
    pub fn sample_tree<R: Rng + ?Sized>(
        &self,
        roots: &[usize],
        n_neighbor: usize,
        depth: usize,
        rng: &mut R,
    ) -> Result<SampleTree> {
        if n_neighbor == 0 {
            return Err(Error::Invalid("n_neighbor must be >= 1".into()));
        }
        if let Some(&bad) = roots.iter().find(|&&e| e >= self.entity_count) {
            return Err(Error::OutOfRange { what: "entity", index: bad, limit: self.entity_count });
        }
        let mut entities = vec![roots.to_vec()];
        let mut relations = vec![Vec::new()];
        for level in 0..depth {
            let parents = &entities[level];
            let mut es = Vec::with_capacity(parents.len() * n_neighbor);
            let mut rs = Vec::with_capacity(parents.len() * n_neighbor);
            for &p in parents {
                self.sample_into(p, n_neighbor, rng, &mut es, &mut rs);
            }
            entities.push(es);
            relations.push(rs);
        }
        Ok(SampleTree {
            n_neighbor,
            entities,
            relations,
        })
    }
}

/// Sampled neighbours of one entity, aligned arrays of length `n_neighbor`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSample {
    pub entities: Vec<usize>,
    pub relations: Vec<usize>,
}

/// Level-ordered sample tree.
///
/// `entities[0]` are the roots; entry `j` of level `k` has its children at
/// `j*n .. (j+1)*n` of level `k + 1`, connected by `relations[k + 1]`.
/// `relations[0]` is empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleTree {
    pub n_neighbor: usize,
    pub entities: Vec<Vec<usize>>,
    pub relations: Vec<Vec<usize>>,
}

impl SampleTree {
    pub fn depth(&self) -> usize {
        self.entities.len() - 1
    }

    pub fn num_roots(&self) -> usize {
        self.entities[0].len()
    }

    /// The sub-tree under root `b`, as its own single-root tree.
    pub fn root(&self, b: usize) -> SampleTree {
        let mut entities = Vec::with_capacity(self.entities.len());
        let mut relations = Vec::with_capacity(self.entities.len());
        let mut width = 1usize;
        for k in 0..self.entities.len() {
            let range = b * width..(b + 1) * width;
            entities.push(self.entities[k][range.clone()].to_vec());
            relations.push(if k == 0 { Vec::new() } else { self.relations[k][range].to_vec() });
            width *= self.n_neighbor;
        }
        SampleTree {
            n_neighbor: self.n_neighbor,
            entities,
            relations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::{HashSet, VecDeque};

    fn pos(edges: &[(usize, usize)]) -> Vec<LabeledExample> {
        edges.iter().map(|&(u, v)| LabeledExample::new(u, v, 1)).collect()
    }

    #[test]
    fn item_neighbor_sets() {
        let g = InteractionGraph::build(&pos(&[(0, 0), (1, 0)]), 2, 1).unwrap();
        assert_eq!(g.item_neighbors(0), &[0, 1]);
        assert_eq!(g.item_degree(0), 2);
    }

    #[test]
    fn rejects_negative_labels() {
        let ex = [LabeledExample::new(0, 0, 0)];
        assert!(InteractionGraph::build(&ex, 1, 1).is_err());
    }

    #[test]
    fn empty_graph_has_zero_degrees() {
        let g = InteractionGraph::build(&[], 3, 2).unwrap();
        assert!((0..3).all(|u| g.user_degree(u) == 0));
        assert!((0..2).all(|v| g.item_degree(v) == 0));
    }

    #[test]
    fn high_order_path_exists() {
        // u1..u3 -> 0..2, v1,v2,v6 -> 0,1,5
        let g = InteractionGraph::build(&pos(&[(0, 0), (0, 1), (1, 0), (2, 1), (2, 5)]), 3, 6).unwrap();
        // BFS over the bipartite graph: users are 0..3, items offset by 3
        let mut dist = [usize::MAX; 9];
        let mut q = VecDeque::from([0usize]);
        dist[0] = 0;
        while let Some(x) = q.pop_front() {
            let next: Vec<usize> = if x < 3 {
                g.user_neighbors(x).iter().map(|v| v + 3).collect()
            } else {
                g.item_neighbors(x - 3).to_vec()
            };
            for y in next {
                if dist[y] == usize::MAX {
                    dist[y] = dist[x] + 1;
                    q.push_back(y);
                }
            }
        }
        assert_eq!(dist[2], 2, "u1 -> v2 -> u3");
        assert_eq!(dist[3 + 5], 3, "u1 -> v2 -> u3 -> v6");
    }

    #[test]
    fn norm_coefficients() {
        // user 0 with 4 items, each of degree 1
        let g = InteractionGraph::build(&pos(&[(0, 0), (0, 1), (0, 2), (0, 3)]), 1, 4).unwrap();
        assert_eq!(g.norm_coeff(0, 2).unwrap(), 0.5);
        let g = InteractionGraph::build(&pos(&[(0, 0)]), 1, 1).unwrap();
        assert_eq!(g.norm_coeff(0, 0).unwrap(), 1.0);
        // |N_u| = 2, |N_v| = 3
        let g = InteractionGraph::build(&pos(&[(0, 0), (0, 1), (1, 0), (2, 0)]), 3, 2).unwrap();
        assert!((g.norm_coeff(0, 0).unwrap() - 0.408_248_290_463_863).abs() < 1e-12);
        assert!(g.norm_coeff(1, 1).is_err());
    }

    #[test]
    fn kg_directions() {
        let kg = KnowledgeGraph::build(&[(0, 5, 1)], 2, 6, true).unwrap();
        assert_eq!(kg.neighbors(0), &[(5, 1)]);
        assert_eq!(kg.neighbors(1), &[(5, 0)]);
        let kg = KnowledgeGraph::build(&[(0, 5, 1)], 2, 6, false).unwrap();
        assert!(kg.neighbors(1).is_empty());
        assert!(KnowledgeGraph::build(&[(0, 5, 2)], 2, 6, true).is_err());
        assert!(KnowledgeGraph::build(&[(0, 6, 1)], 2, 6, true).is_err());
    }

    #[test]
    fn sampling_modes() {
        let triples: Vec<_> = (1..=10).map(|t| (0, t % 3, t)).collect();
        let kg = KnowledgeGraph::build(&triples, 12, 3, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);

        let s = kg.sample_neighbors(0, 10, &mut rng).unwrap();
        assert_eq!(s.entities.len(), 10);
        let distinct: HashSet<_> = s.entities.iter().collect();
        assert_eq!(distinct.len(), 10);

        let s = kg.sample_neighbors(11, 8, &mut rng).unwrap();
        assert_eq!(s.entities, vec![11; 8]);
        assert_eq!(s.relations, vec![0; 8]);

        assert!(kg.sample_neighbors(0, 0, &mut rng).is_err());
        assert!(kg.sample_neighbors(12, 1, &mut rng).is_err());
    }

    #[test]
    fn with_replacement_frequency() {
        // degree 2, n = 8: both neighbours present w.p. 1 - 2 * (1/2)^8
        let kg = KnowledgeGraph::build(&[(0, 0, 1), (0, 1, 2)], 3, 2, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let trials = 20_000;
        let mut both = 0;
        for _ in 0..trials {
            let s = kg.sample_neighbors(0, 8, &mut rng).unwrap();
            assert!(s.entities.iter().all(|&e| e == 1 || e == 2));
            if s.entities.contains(&1) && s.entities.contains(&2) {
                both += 1;
            }
        }
        let expected = 1.0 - 2.0 * 0.5f64.powi(8);
        let freq = both as f64 / trials as f64;
        let sd = (expected * (1.0 - expected) / trials as f64).sqrt();
        assert!((freq - expected).abs() < 5.0 * sd, "freq {freq} vs {expected}");
    }

    #[test]
    fn tree_layout() {
        let kg = KnowledgeGraph::build(&[(0, 0, 1), (1, 1, 2)], 3, 2, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = kg.sample_tree(&[0, 2], 2, 2, &mut rng).unwrap();
        assert_eq!(t.depth(), 2);
        assert_eq!(t.entities[1].len(), 4);
        assert_eq!(t.entities[2].len(), 8);
        // root 0 has the single neighbour 1 (with replacement)
        assert_eq!(&t.entities[1][..2], &[1, 1]);
        let sub = t.root(1);
        assert_eq!(sub.entities[0], vec![2]);
        assert_eq!(sub.entities[1], t.entities[1][2..4].to_vec());
        assert_eq!(sub.entities[2], t.entities[2][4..8].to_vec());
    }

    #[test]
    fn cache_round_trip() {
        let g = InteractionGraph::build(&pos(&[(0, 1), (2, 0), (1, 1)]), 3, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.bin");
        g.write_cache(&p, "k1").unwrap();
        assert_eq!(InteractionGraph::read_cache(&p, "k1").unwrap(), Some(g));
        assert_eq!(InteractionGraph::read_cache(&p, "k2").unwrap(), None);
    }
}
