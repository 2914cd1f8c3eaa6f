//! Rating / KG file loading, implicit-feedback labelling, negative sampling
//! and the 6:2:2 split.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_lines, write_atomic};

/// One row of a ratings file before labelling.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRating {
    pub user_raw: String,
    pub item_raw: String,
    pub rating: f64,
}

/// A `(user, item, label)` record; the unit of the interaction matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledExample {
    pub user: usize,
    pub item: usize,
    pub label: u8,
}

impl LabeledExample {
    pub fn new(user: usize, item: usize, label: u8) -> Self {
        Self { user, item, label }
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

/// External id ↔ dense index maps.
///
/// Users get dense indices in first-appearance order. Items map to KG
/// entity ids: through the alignment file when one is given, verbatim when
/// every raw item id is a non-negative integer, and in first-appearance
/// order otherwise.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMaps {
    pub users: Vec<String>,
    pub user_index: HashMap<String, usize>,
    pub item_index: HashMap<String, usize>,
}

impl IdMaps {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Size of the item index space (`1 + max item index`).
    pub fn item_space(&self) -> usize {
        self.item_index.values().max().map_or(0, |&m| m + 1)
    }

    pub fn user_external(&self, user: usize) -> Option<&str> {
        self.users.get(user).map(String::as_str)
    }

    pub fn item_external(&self, item: usize) -> Option<&str> {
        self.item_index
            .iter()
            .find(|(_, &v)| v == item)
            .map(|(k, _)| k.as_str())
    }
}

/// Output of [`load_ratings`].
#[derive(Debug, Clone, Default)]
pub struct Ratings {
    /// Deduplicated label-1 examples.
    pub positives: Vec<LabeledExample>,
    /// Pairs that were observed but fell below the threshold. They are
    /// neither positives nor eligible negatives.
    pub below_threshold: Vec<(usize, usize)>,
    /// Every item index seen in the file (or in the alignment, when given).
    pub item_universe: Vec<usize>,
    pub maps: IdMaps,
}

/// `item_external -> entity id`.
pub type ItemAlignment = HashMap<String, usize>;

pub fn parse_rating_line(line: &str) -> std::result::Result<RawRating, String> {
    let mut fields = line.split_whitespace();
    let (Some(u), Some(i), Some(r)) = (fields.next(), fields.next(), fields.next()) else {
        return Err(format!("expected `user item rating`, got {line:?}"));
    };
    let rating: f64 = r
        .parse()
        .map_err(|_| format!("rating {r:?} is not a number"))?;
    if !rating.is_finite() {
        return Err(format!("rating {r:?} is not finite"));
    }
    Ok(RawRating {
        user_raw: u.to_string(),
        item_raw: i.to_string(),
        rating,
    })
}

pub fn read_raw_ratings(path: &Path) -> Result<Vec<RawRating>> {
    let mut rows = Vec::new();
    for (lineno, line) in read_lines(path)? {
        let row = parse_rating_line(&line).map_err(|m| Error::parse(path, lineno, m))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty(format!("{} has no rating rows", path.display())));
    }
    Ok(rows)
}

pub fn load_item_alignment(path: &Path) -> Result<ItemAlignment> {
    let mut map = HashMap::new();
    for (lineno, line) in read_lines(path)? {
        let mut f = line.split_whitespace();
        let (Some(item), Some(entity)) = (f.next(), f.next()) else {
            return Err(Error::parse(path, lineno, "expected `item entity`"));
        };
        let entity: usize = entity
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("entity id {entity:?} is not a non-negative integer")))?;
        map.insert(item.to_string(), entity);
    }
    Ok(map)
}

/// Load a ratings file and convert it to implicit feedback.
///
/// With `positive_threshold = Some(t)` rows with `rating >= t` are positives;
/// with `None` every row is a positive.
pub fn load_ratings(path: &Path, positive_threshold: Option<f64>) -> Result<Ratings> {
    load_ratings_aligned(path, positive_threshold, None)
}

pub fn load_ratings_aligned(
    path: &Path,
    positive_threshold: Option<f64>,
    alignment: Option<&ItemAlignment>,
) -> Result<Ratings> {
    let rows = read_raw_ratings(path)?;
    Ok(label_ratings(&rows, positive_threshold, alignment))
}

/// Labelling core of [`load_ratings`], separated from file IO.
pub fn label_ratings(
    rows: &[RawRating],
    positive_threshold: Option<f64>,
    alignment: Option<&ItemAlignment>,
) -> Ratings {
    let is_positive = |r: f64| positive_threshold.is_none_or(|t| r >= t);

    let mut maps = IdMaps::default();
    let verbatim_items =
        alignment.is_none() && rows.iter().all(|r| r.item_raw.parse::<usize>().is_ok());
    let mut next_item = 0usize;
    let mut dropped = 0usize;

    // resolve items
    let mut item_of_row = Vec::with_capacity(rows.len());
    for r in rows {
        let item = match alignment {
            Some(a) => a.get(&r.item_raw).copied(),
            None => Some(*maps.item_index.entry(r.item_raw.clone()).or_insert_with(|| {
                if verbatim_items {
                    r.item_raw.parse().unwrap()
                } else {
                    next_item += 1;
                    next_item - 1
                }
            })),
        };
        if item.is_none() {
            dropped += 1;
        }
        item_of_row.push(item);
    }
    if let Some(a) = alignment {
        maps.item_index = a.clone();
    }
    if dropped > 0 {
        warn!("{dropped} rating rows reference items without a KG entity and were dropped");
    }

    // users are registered by their positives only
    let mut seen = HashSet::new();
    let mut positives = Vec::new();
    for (r, item) in rows.iter().zip(&item_of_row) {
        let Some(item) = *item else { continue };
        if !is_positive(r.rating) {
            continue;
        }
        let next = maps.users.len();
        let user = *maps.user_index.entry(r.user_raw.clone()).or_insert(next);
        if user == next {
            maps.users.push(r.user_raw.clone());
        }
        if seen.insert((user, item)) {
            positives.push(LabeledExample::new(user, item, 1));
        }
    }

    let mut below = Vec::new();
    let mut below_seen = HashSet::new();
    for (r, item) in rows.iter().zip(&item_of_row) {
        let Some(item) = *item else { continue };
        if is_positive(r.rating) {
            continue;
        }
        if let Some(&user) = maps.user_index.get(&r.user_raw) {
            if !seen.contains(&(user, item)) && below_seen.insert((user, item)) {
                below.push((user, item));
            }
        }
    }

    let mut universe: Vec<usize> = maps.item_index.values().copied().collect();
    universe.sort_unstable();
    universe.dedup();

    Ratings {
        positives,
        below_threshold: below,
        item_universe: universe,
        maps,
    }
}

/// A user for whom fewer distinct negatives existed than positives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShortUser {
    pub user: usize,
    pub wanted: usize,
    pub got: usize,
}

/// Sample label-0 examples 1:1 per user, uniformly without replacement from
/// the items the user never interacted with.
///
/// `exclude` holds further observed pairs (e.g. below-threshold ratings) that
/// must not become negatives. Users are processed in ascending order so the
/// output is a deterministic function of the inputs and `rng`.
pub fn sample_negatives<R: Rng + ?Sized>(
    positives: &[LabeledExample],
    item_universe: &[usize],
    exclude: &[(usize, usize)],
    rng: &mut R,
) -> (Vec<LabeledExample>, Vec<ShortUser>) {
    let mut observed: BTreeMap<usize, HashSet<usize>> = BTreeMap::new();
    let mut wanted: BTreeMap<usize, usize> = BTreeMap::new();
    for p in positives {
        if observed.entry(p.user).or_default().insert(p.item) {
            *wanted.entry(p.user).or_default() += 1;
        }
    }
    for &(u, i) in exclude {
        if let Some(s) = observed.get_mut(&u) {
            s.insert(i);
        }
    }

    let mut negatives = Vec::with_capacity(positives.len());
    let mut short = Vec::new();
    for (&user, &count) in &wanted {
        let seen = &observed[&user];
        let in_universe = item_universe.iter().filter(|i| seen.contains(i)).count();
        let available = item_universe.len() - in_universe;
        let take = count.min(available);
        if take < count {
            warn!("user {user}: only {available} negatives available for {count} positives");
            short.push(ShortUser {
                user,
                wanted: count,
                got: take,
            });
        }
        if take == 0 {
            continue;
        }
        if available >= 4 * take {
            // rejection sampling keeps cost proportional to `take`
            let mut chosen = HashSet::with_capacity(take);
            let mut order = Vec::with_capacity(take);
            while order.len() < take {
                let item = item_universe[rng.random_range(0..item_universe.len())];
                if !seen.contains(&item) && chosen.insert(item) {
                    order.push(item);
                }
            }
            negatives.extend(order.into_iter().map(|i| LabeledExample::new(user, i, 0)));
        } else {
            let candidates: Vec<usize> = item_universe
                .iter()
                .copied()
                .filter(|i| !seen.contains(i))
                .collect();
            for idx in rand::seq::index::sample(rng, candidates.len(), take) {
                negatives.push(LabeledExample::new(user, candidates[idx], 0));
            }
        }
    }
    (negatives, short)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledExample>,
    pub eval: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.eval.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, split: SplitName) -> &[LabeledExample] {
        match split {
            SplitName::Train => &self.train,
            SplitName::Eval => &self.eval,
            SplitName::Test => &self.test,
        }
    }

    pub fn train_positives(&self) -> Vec<LabeledExample> {
        self.train.iter().copied().filter(|e| e.is_positive()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Eval,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Eval, SplitName::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Eval => "eval",
            SplitName::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "eval" => Ok(SplitName::Eval),
            "test" => Ok(SplitName::Test),
            _ => Err(Error::Invalid(format!("unknown split {s:?} (train|eval|test)"))),
        }
    }
}

/// Sizes of the 6:2:2 partition: floors for train and eval, remainder to test.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 6 / 10;
    let eval = n * 2 / 10;
    (train, eval, n - train - eval)
}

/// Uniformly permute, then cut contiguously 60/20/20.
pub fn split_examples<R: Rng + ?Sized>(
    examples: &[LabeledExample],
    rng: &mut R,
) -> Result<DatasetSplit> {
    if examples.len() < 5 {
        return Err(Error::Invalid(format!(
            "need at least 5 examples for a 6:2:2 split, got {}",
            examples.len()
        )));
    }
    let mut shuffled = examples.to_vec();
    shuffled.shuffle(rng);
    let (n_train, n_eval, _) = split_sizes(shuffled.len());
    let test = shuffled.split_off(n_train + n_eval);
    let eval = shuffled.split_off(n_train);
    Ok(DatasetSplit {
        train: shuffled,
        eval,
        test,
    })
}

/// Raw KG triples with id-space sizes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KgTriples {
    pub triples: Vec<(usize, usize, usize)>,
    pub entity_count: usize,
    pub relation_count: usize,
}

impl KgTriples {
    pub fn from_triples(triples: Vec<(usize, usize, usize)>) -> Self {
        let entity_count = triples
            .iter()
            .map(|&(h, _, t)| h.max(t) + 1)
            .max()
            .unwrap_or(0);
        let relation_count = triples.iter().map(|&(_, r, _)| r + 1).max().unwrap_or(0);
        Self {
            triples,
            entity_count,
            relation_count,
        }
    }

    /// Entity space once item ids are accounted for.
    pub fn entity_space(&self, item_space: usize) -> usize {
        self.entity_count.max(item_space)
    }
}

pub fn load_kg(path: &Path) -> Result<KgTriples> {
    let mut triples = Vec::new();
    for (lineno, line) in read_lines(path)? {
        let mut ids = [0usize; 3];
        let mut fields = line.split_whitespace();
        for (slot, name) in ids.iter_mut().zip(["head", "relation", "tail"]) {
            let f = fields
                .next()
                .ok_or_else(|| Error::parse(path, lineno, format!("missing {name}")))?;
            *slot = f.parse().map_err(|_| {
                Error::parse(path, lineno, format!("{name} {f:?} is not a non-negative integer"))
            })?;
        }
        triples.push((ids[0], ids[1], ids[2]));
    }
    Ok(KgTriples::from_triples(triples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_users: usize,
    pub num_items: usize,
    pub num_interactions: usize,
    pub sparsity: f64,
    pub kg_entities: usize,
    pub kg_relations: usize,
    pub kg_triples: usize,
}

/// `sparsity = 1 - (interactions / 2) / (users * items)`.
pub fn sparsity(num_users: usize, num_items: usize, num_interactions: usize) -> Result<f64> {
    let cells = num_users as f64 * num_items as f64;
    if cells == 0.0 {
        return Err(Error::Invalid("users * items = 0; sparsity undefined".into()));
    }
    Ok(1.0 - (num_interactions as f64 / 2.0) / cells)
}

pub fn compute_stats(
    num_users: usize,
    num_items: usize,
    num_interactions: usize,
    kg: &KgTriples,
) -> Result<DatasetStats> {
    Ok(DatasetStats {
        num_users,
        num_items,
        num_interactions,
        sparsity: sparsity(num_users, num_items, num_interactions)?,
        kg_entities: kg.entity_count,
        kg_relations: kg.relation_count,
        kg_triples: kg.triples.len(),
    })
}

impl DatasetStats {
    /// Two-column summary in the layout of the benchmark statistics table.
    pub fn table(&self) -> String {
        let rows = [
            ("Users", self.num_users.to_string()),
            ("Items", self.num_items.to_string()),
            ("Interactions", self.num_interactions.to_string()),
            ("sparsity", format!("{:.2}%", self.sparsity * 100.0)),
            ("KG entities", self.kg_entities.to_string()),
            ("KG relations", self.kg_relations.to_string()),
            ("KG triples", self.kg_triples.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k:<14}{v}\n")).collect()
    }
}

pub fn write_examples(path: &Path, examples: &[LabeledExample]) -> Result<()> {
    let mut out = String::with_capacity(examples.len() * 16);
    for e in examples {
        out.push_str(&format!("{}\t{}\t{}\n", e.user, e.item, e.label));
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_examples(path: &Path) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::new();
    for (lineno, line) in read_lines(path)? {
        let mut f = line.split_whitespace();
        let mut next = |name: &str| -> Result<usize> {
            let s = f
                .next()
                .ok_or_else(|| Error::parse(path, lineno, format!("missing {name}")))?;
            s.parse()
                .map_err(|_| Error::parse(path, lineno, format!("{name} {s:?} is not an integer")))
        };
        let (user, item, label) = (next("user")?, next("item")?, next("label")?);
        if label > 1 {
            return Err(Error::parse(path, lineno, format!("label {label} not in {{0,1}}")));
        }
        out.push(LabeledExample::new(user, item, label as u8));
    }
    Ok(out)
}

pub fn write_kg(path: &Path, kg: &KgTriples) -> Result<()> {
    let mut out = String::with_capacity(kg.triples.len() * 16);
    for (h, r, t) in &kg.triples {
        out.push_str(&format!("{h}\t{r}\t{t}\n"));
    }
    write_atomic(path, out.as_bytes())
}

/// Raw input locations for one dataset.
#[derive(Debug, Clone)]
pub struct RawInputs<'a> {
    pub ratings: &'a Path,
    pub kg: &'a Path,
    pub item2entity: Option<&'a Path>,
    pub positive_threshold: Option<f64>,
}

/// A fully prepared dataset: fixed negatives, fixed split, KG, stats.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub split: DatasetSplit,
    pub num_users: usize,
    /// Item index space; items are entities `0..num_items`.
    pub num_items: usize,
    pub kg: KgTriples,
    pub stats: DatasetStats,
    /// Hex SHA-256 over the raw inputs, threshold and seed.
    pub dataset_hash: String,
    pub seed: u64,
}

impl PreparedDataset {
    pub fn entity_count(&self) -> usize {
        self.kg.entity_space(self.num_items)
    }

    /// Load raw files, label, sample negatives, split and compute stats.
    pub fn prepare<R: Rng + ?Sized>(inputs: &RawInputs<'_>, seed: u64, rng: &mut R) -> Result<Self> {
        let alignment = inputs.item2entity.map(load_item_alignment).transpose()?;
        let ratings = load_ratings_aligned(inputs.ratings, inputs.positive_threshold, alignment.as_ref())?;
        let kg = load_kg(inputs.kg)?;
        Self::from_parts(ratings, kg, dataset_hash(inputs, seed)?, seed, rng)
    }

    pub fn from_parts<R: Rng + ?Sized>(
        ratings: Ratings,
        kg: KgTriples,
        dataset_hash: String,
        seed: u64,
        rng: &mut R,
    ) -> Result<Self> {
        if ratings.positives.is_empty() {
            return Err(Error::Empty("no positive interactions".into()));
        }
        let (negatives, short) = sample_negatives(
            &ratings.positives,
            &ratings.item_universe,
            &ratings.below_threshold,
            rng,
        );
        if !short.is_empty() {
            warn!("{} users had fewer negatives than positives", short.len());
        }
        let mut all = ratings.positives.clone();
        all.extend(negatives);
        let split = split_examples(&all, rng)?;
        let stats = compute_stats(
            ratings.maps.num_users(),
            ratings.item_universe.len(),
            all.len(),
            &kg,
        )?;
        let item_space = ratings.maps.item_space();
        Ok(Self {
            split,
            num_users: ratings.maps.num_users(),
            num_items: item_space,
            kg,
            stats,
            dataset_hash,
            seed,
        })
    }

    /// Write split manifests, KG copy, stats and metadata into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_examples(&dir.join("train.txt"), &self.split.train)?;
        write_examples(&dir.join("eval.txt"), &self.split.eval)?;
        write_examples(&dir.join("test.txt"), &self.split.test)?;
        write_kg(&dir.join("kg.txt"), &self.kg)?;
        let stats = serde_json::to_string_pretty(&self.stats).expect("stats serialize");
        write_atomic(&dir.join("stats.json"), stats.as_bytes())?;
        let meta = format!(
            "version=1\nnum_users={}\nnum_items={}\nentity_count={}\nrelation_count={}\ndataset_hash={}\nseed={}\nnegatives=fixed_at_prepare_1to1\n",
            self.num_users,
            self.num_items,
            self.entity_count(),
            self.kg.relation_count,
            self.dataset_hash,
            self.seed
        );
        write_atomic(&dir.join("meta.txt"), meta.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta = crate::io::read_key_values(&dir.join("meta.txt"))?;
        let get = |k: &str| -> Result<&String> {
            meta.get(k)
                .ok_or_else(|| Error::Invalid(format!("{}: missing key {k}", dir.display())))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Invalid(format!("{}: key {k} is not an integer", dir.display())))
        };
        let split = DatasetSplit {
            train: read_examples(&dir.join("train.txt"))?,
            eval: read_examples(&dir.join("eval.txt"))?,
            test: read_examples(&dir.join("test.txt"))?,
        };
        let mut kg = load_kg(&dir.join("kg.txt"))?;
        kg.entity_count = kg.entity_count.max(num("entity_count")?);
        kg.relation_count = kg.relation_count.max(num("relation_count")?);
        let stats_path = dir.join("stats.json");
        let stats_text = fs::read_to_string(&stats_path).map_err(|e| Error::io(&stats_path, e))?;
        let stats: DatasetStats = serde_json::from_str(&stats_text)
            .map_err(|e| Error::Invalid(format!("{}: {e}", stats_path.display())))?;
        let ds = Self {
            split,
            num_users: num("num_users")?,
            num_items: num("num_items")?,
            kg,
            stats,
            dataset_hash: get("dataset_hash")?.clone(),
            seed: num("seed")? as u64,
        };
        for e in ds.split.train.iter().chain(&ds.split.eval).chain(&ds.split.test) {
            if e.user >= ds.num_users {
                return Err(Error::OutOfRange { what: "user", index: e.user, limit: ds.num_users });
            }
            if e.item >= ds.num_items {
                return Err(Error::OutOfRange { what: "item", index: e.item, limit: ds.num_items });
            }
        }
        Ok(ds)
    }

    /// Keep a random fraction of users (with all their examples).
    pub fn subsample_users<R: Rng + ?Sized>(&self, fraction: f64, rng: &mut R) -> Self {
        let keep: HashSet<usize> = (0..self.num_users)
            .filter(|_| rng.random::<f64>() < fraction)
            .collect();
        let filter = |v: &[LabeledExample]| -> Vec<LabeledExample> {
            v.iter().copied().filter(|e| keep.contains(&e.user)).collect()
        };
        let mut out = self.clone();
        out.split = DatasetSplit {
            train: filter(&self.split.train),
            eval: filter(&self.split.eval),
            test: filter(&self.split.test),
        };
        out
    }
}

/// Conventional file layout of one dataset under a data root:
/// `<root>/<name>/ratings.tsv`, `kg.tsv` and optionally `item2entity.tsv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFiles {
    pub ratings: PathBuf,
    pub kg: PathBuf,
    pub item2entity: Option<PathBuf>,
}

impl DatasetFiles {
    pub fn locate(root: &Path, name: &str) -> Self {
        let dir = root.join(name);
        let alignment = dir.join("item2entity.tsv");
        Self {
            ratings: dir.join("ratings.tsv"),
            kg: dir.join("kg.tsv"),
            item2entity: alignment.is_file().then_some(alignment),
        }
    }

    /// Paths of required files that do not exist.
    pub fn missing(&self) -> Vec<&Path> {
        [self.ratings.as_path(), self.kg.as_path()].into_iter().filter(|p| !p.is_file()).collect()
    }

    pub fn inputs(&self, positive_threshold: Option<f64>) -> RawInputs<'_> {
        RawInputs {
            ratings: &self.ratings,
            kg: &self.kg,
            item2entity: self.item2entity.as_deref(),
            positive_threshold,
        }
    }

    /// [`PreparedDataset::prepare`] with the sampling stream derived from `seed`.
    pub fn prepare(&self, positive_threshold: Option<f64>, seed: u64) -> Result<PreparedDataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, &[0]));
        PreparedDataset::prepare(&self.inputs(positive_threshold), seed, &mut rng)
    }
}

/// SHA-256 over input file bytes plus labelling parameters.
pub fn dataset_hash(inputs: &RawInputs<'_>, seed: u64) -> Result<String> {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for p in [Some(inputs.ratings), Some(inputs.kg), inputs.item2entity].into_iter().flatten() {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    h.update(format!("{:?}", inputs.positive_threshold).as_bytes());
    h.update(seed.to_le_bytes());
    Ok(hex::encode(h.finalize()))
}
