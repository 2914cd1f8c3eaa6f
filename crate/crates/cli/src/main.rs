//! `dekgci` command line: prepare, train, eval, ablate, stats.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use dekgci::config::{Aggregator, Hyperparams, Preset, Variant};
use dekgci::eval::{evaluate, run_ablation, AblationKind, ScoreMatrix, StatReport};
use dekgci::graph::InteractionGraph;
use dekgci::ingest::{DatasetFiles, PreparedDataset, SplitName};
use dekgci::io::{format_key_values, read_key_values, write_atomic};
use dekgci::model::{fit, Checkpoint, FitOptions, Graphs};

const SAMPLING_MODES: [(&str, &str); 3] = [
    ("negative_sampling", "uniform_unseen_1to1_fixed_at_prepare"),
    ("kg_neighbor_sampling", "without_replacement_if_degree_ge_n_else_with_replacement"),
    ("kg_isolated_entity", "self_loop_relation_0"),
];

#[derive(Parser, Debug)]
#[command(name = "dekgci", version, about = "Knowledge-graph CTR recommender: data preparation, training, evaluation, ablations and rank statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Label ratings, sample negatives, split 6:2:2 and write the prepared dataset to <out>/data.
    Prepare {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train a model and write <out>/model.ckpt, its manifest and the training log.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Report AUC and ACC of a checkpoint on one split.
    Eval {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Prepared dataset directory [default: <checkpoint dir>/data].
        #[arg(long)]
        prepared: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: SplitName,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train one model per sweep point and report each point's metrics.
    Ablate {
        /// layers | aggregator | receptive_depth | variant
        #[arg(long)]
        kind: AblationKind,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Friedman, Iman-Davenport and Holm tests over a score matrix.
    Stats {
        /// Headered table: algorithm name then one score per problem, higher is better.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Preset name: movielens, book or lastfm. Selects default hyperparameters,
    /// the rating threshold and <data-dir>/<name>/ input files.
    #[arg(long)]
    dataset: Option<Preset>,
    /// Root holding one directory per dataset.
    #[arg(long, env = "DEKGCI_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Ratings file: `user item [rating]` per line.
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// KG triples file: `head relation tail` per line.
    #[arg(long)]
    kg: Option<PathBuf>,
    /// Optional `item entity` alignment file.
    #[arg(long)]
    item2entity: Option<PathBuf>,
    /// Ratings at or above this value are positive [default: preset value, otherwise all rows].
    #[arg(long)]
    threshold: Option<f64>,
    /// Use an already prepared dataset directory instead of raw files.
    #[arg(long, conflicts_with_all = ["ratings", "kg", "item2entity", "threshold"])]
    prepared: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct HyperArgs {
    /// Flat `key=value` file of hyperparameters (overrides the preset).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    batchsize: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    n_neighbor: Option<usize>,
    #[arg(long)]
    aggregator: Option<Aggregator>,
    #[arg(long)]
    variant: Option<Variant>,
    /// KG receptive-field depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Maximum training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Epochs without eval-AUC improvement before stopping; 0 disables.
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    leaky_slope: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Output directory; every file the command writes goes under it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for scoring and sweeps; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

/// Failures carry the process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = match error.downcast_ref::<dekgci::Error>() {
            Some(dekgci::Error::Divergence { .. }) => 3,
            _ => 2,
        };
        Failure { code, error }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare { data, run } => cmd_prepare(&data, &run),
        Command::Train { data, hyper, run } => cmd_train(&data, &hyper, &run),
        Command::Eval { checkpoint, prepared, split, run } => cmd_eval(&checkpoint, prepared.as_deref(), split, &run),
        Command::Ablate { kind, data, hyper, run } => cmd_ablate(kind, &data, &hyper, &run),
        Command::Stats { matrix, alpha, out } => cmd_stats(&matrix, alpha, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

/// Preset, then config file, then flags.
fn resolve_hyper(preset: Option<Preset>, args: &HyperArgs, seed: Option<u64>) -> anyhow::Result<Hyperparams> {
    let mut hp = preset.map(|p| p.hyperparams()).unwrap_or_default();
    if let Some(path) = &args.config {
        hp.apply(&read_key_values(path)?)?;
    }
    macro_rules! flag {
        ($($f:ident => $field:ident),*) => {
            $(if let Some(v) = args.$f.clone() { hp.$field = v; })*
        };
    }
    flag!(batchsize => batchsize, dim => dim, lr => lr, layers => layers, n_neighbor => n_neighbor,
          aggregator => aggregator, variant => variant, depth => depth, epochs => max_epochs,
          patience => patience, weight_decay => weight_decay, leaky_slope => leaky_slope);
    if let Some(s) = seed {
        hp.seed = s;
    }
    hp.validate()?;
    Ok(hp)
}

fn raw_files(data: &DataArgs) -> anyhow::Result<DatasetFiles> {
    let files = match (&data.ratings, &data.kg) {
        (Some(r), Some(k)) => DatasetFiles { ratings: r.clone(), kg: k.clone(), item2entity: data.item2entity.clone() },
        (None, None) => {
            let preset = data.dataset.ok_or_else(|| anyhow!("give --dataset, --prepared, or both --ratings and --kg"))?;
            let root = data
                .data_dir
                .clone()
                .ok_or_else(|| anyhow!("--dataset needs --data-dir or DEKGCI_DATA_DIR to locate its files"))?;
            let mut f = DatasetFiles::locate(&root, preset.as_str());
            if data.item2entity.is_some() {
                f.item2entity = data.item2entity.clone();
            }
            f
        }
        _ => bail!("--ratings and --kg must be given together"),
    };
    let missing = files.missing();
    if let Some(p) = files.item2entity.as_deref().filter(|p| !p.is_file()) {
        bail!("file not found: {}", p.display());
    }
    if !missing.is_empty() {
        bail!(
            "file not found: {}",
            missing.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
        );
    }
    Ok(files)
}

fn threshold(data: &DataArgs) -> Option<f64> {
    data.threshold.or_else(|| data.dataset.and_then(|p| p.positive_threshold()))
}

const GRAPH_CACHE: &str = "interaction_graph.bin";

/// Prepare from raw files into `<out>/data`, or load `--prepared`.
fn obtain_dataset(data: &DataArgs, out: &Path, seed: u64) -> anyhow::Result<(PreparedDataset, PathBuf)> {
    if let Some(dir) = &data.prepared {
        let ds = PreparedDataset::load(dir).with_context(|| format!("loading prepared dataset {}", dir.display()))?;
        return Ok((ds, dir.clone()));
    }
    let files = raw_files(data)?;
    let ds = files.prepare(threshold(data), seed)?;
    let dir = out.join("data");
    ds.save(&dir)?;
    Graphs::interaction_graph(&ds)?.write_cache(&dir.join(GRAPH_CACHE), &ds.dataset_hash)?;
    Ok((ds, dir))
}

fn load_graphs(ds: &PreparedDataset, dir: &Path) -> anyhow::Result<Graphs> {
    let interaction = match InteractionGraph::read_cache(&dir.join(GRAPH_CACHE), &ds.dataset_hash)? {
        Some(g) => g,
        None => Graphs::interaction_graph(ds)?,
    };
    Ok(Graphs::new(interaction, Graphs::knowledge_graph(ds)?))
}

fn run_metadata(ds_hash: &str, seed: u64, extra: Vec<(&'static str, String)>) -> Vec<(&'static str, String)> {
    let mut kv = vec![("seed", seed.to_string()), ("dataset_hash", ds_hash.to_string())];
    kv.extend(SAMPLING_MODES.iter().map(|(k, v)| (*k, v.to_string())));
    kv.extend(extra);
    kv
}

fn cmd_prepare(data: &DataArgs, run: &RunArgs) -> CmdResult {
    if data.prepared.is_some() {
        return Err(anyhow!("prepare reads raw files; drop --prepared").into());
    }
    let seed = run.seed.unwrap_or_else(|| Hyperparams::default().seed);
    let (ds, dir) = obtain_dataset(data, &run.out, seed)?;
    let table = ds.stats.table();
    print!("{table}");
    let meta = run_metadata(
        &ds.dataset_hash,
        seed,
        vec![
            ("train", ds.split.train.len().to_string()),
            ("eval", ds.split.eval.len().to_string()),
            ("test", ds.split.test.len().to_string()),
            ("data_dir", dir.display().to_string()),
        ],
    );
    write_atomic(&run.out.join("prepare.txt"), format!("{}\n{table}", format_key_values(meta)).as_bytes())?;
    info!("prepared dataset in {}", dir.display());
    Ok(())
}

fn cmd_train(data: &DataArgs, hyper: &HyperArgs, run: &RunArgs) -> CmdResult {
    let hp = resolve_hyper(data.dataset, hyper, run.seed)?;
    let (ds, dir) = obtain_dataset(data, &run.out, hp.seed)?;
    let graphs = load_graphs(&ds, &dir)?;
    info!(
        "training {} / {}: batchsize {} dim {} layers {} n_neighbor {} lr {}",
        hp.variant, hp.aggregator, hp.batchsize, hp.dim, hp.layers, hp.n_neighbor, hp.lr
    );
    let started = Instant::now();
    let out = fit(&ds.split, &graphs, &hp, &FitOptions { workers: run.workers })?;
    let test = evaluate(&out.params, &graphs, &hp, "test", &ds.split.test, run.workers)?;
    let ck = Checkpoint { params: out.params, hyper: hp.clone(), dataset_hash: ds.dataset_hash.clone(), num_items: ds.num_items };
    let path = run.out.join("model.ckpt");
    ck.save(&path)?;
    let meta = run_metadata(
        &ds.dataset_hash,
        hp.seed,
        vec![
            ("best_epoch", out.log.best_epoch.to_string()),
            ("best_eval_auc", format!("{:.6}", out.log.best_eval_auc)),
            ("best_eval_acc", format!("{:.6}", out.log.best_eval_acc)),
            ("test_auc", format!("{:.6}", test.auc)),
            ("test_acc", format!("{:.6}", test.acc)),
            ("epochs_run", out.log.epochs.len().to_string()),
            ("stopped_early", out.log.stopped_early.to_string()),
            ("data_dir", dir.display().to_string()),
            ("wall_seconds", format!("{:.1}", started.elapsed().as_secs_f64())),
        ],
    );
    ck.write_manifest(&path, &meta)?;
    write_atomic(&run.out.join("training_log.tsv"), out.log.to_tsv().as_bytes())?;
    println!(
        "best epoch {} eval auc {:.4} acc {:.4}; test auc {:.4} acc {:.4}",
        out.log.best_epoch, out.log.best_eval_auc, out.log.best_eval_acc, test.auc, test.acc
    );
    Ok(())
}

fn cmd_eval(checkpoint: &Path, prepared: Option<&Path>, split: SplitName, run: &RunArgs) -> CmdResult {
    let ck = Checkpoint::load(checkpoint)?;
    let dir = match prepared {
        Some(d) => d.to_path_buf(),
        None => checkpoint.parent().unwrap_or(Path::new(".")).join("data"),
    };
    let ds = PreparedDataset::load(&dir).with_context(|| format!("loading prepared dataset {}", dir.display()))?;
    if ds.dataset_hash != ck.dataset_hash {
        return Err(anyhow!(
            "checkpoint was trained on dataset {} but {} holds {}",
            ck.dataset_hash,
            dir.display(),
            ds.dataset_hash
        )
        .into());
    }
    let graphs = load_graphs(&ds, &dir)?;
    let expected = graphs.shapes(&ck.hyper);
    if expected != ck.params.shapes {
        return Err(anyhow!("checkpoint shapes {:?} do not match dataset shapes {:?}", ck.params.shapes, expected).into());
    }
    let hp = Hyperparams { seed: run.seed.unwrap_or(ck.hyper.seed), ..ck.hyper.clone() };
    let report = evaluate(&ck.params, &graphs, &hp, split.as_str(), ds.split.get(split), run.workers)?;
    let meta = run_metadata(
        &ds.dataset_hash,
        hp.seed,
        vec![
            ("split", report.split.clone()),
            ("examples", report.examples.to_string()),
            ("auc", format!("{:.6}", report.auc)),
            ("acc", format!("{:.6}", report.acc)),
            ("variant", hp.variant.to_string()),
            ("checkpoint", checkpoint.display().to_string()),
        ],
    );
    write_atomic(&run.out.join(format!("eval_{}.txt", split.as_str())), format_key_values(meta).as_bytes())?;
    println!("{} auc {:.4} acc {:.4} ({} examples)", report.split, report.auc, report.acc, report.examples);
    Ok(())
}

fn cmd_ablate(kind: AblationKind, data: &DataArgs, hyper: &HyperArgs, run: &RunArgs) -> CmdResult {
    let hp = resolve_hyper(data.dataset, hyper, run.seed)?;
    let (ds, _) = obtain_dataset(data, &run.out, hp.seed)?;
    let report = run_ablation(kind, &hp, &ds, run.workers)?;
    let tsv = report.to_tsv();
    print!("{tsv}");
    let meta = run_metadata(&ds.dataset_hash, hp.seed, vec![("kind", kind.to_string())]);
    let header: String = format_key_values(meta).lines().map(|l| format!("# {l}\n")).collect();
    write_atomic(&run.out.join(format!("ablation_{kind}.tsv")), format!("{header}{tsv}").as_bytes())?;
    Ok(())
}

fn cmd_stats(matrix: &Path, alpha: f64, out: &Path) -> CmdResult {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(anyhow!("alpha must lie in (0, 1)").into());
    }
    let sm = ScoreMatrix::load(matrix)?;
    let report = StatReport::compute(&sm, alpha)?;
    let text = report.to_text();
    print!("{text}");
    write_atomic(&out.join("stats.txt"), text.as_bytes())?;
    let json = serde_json::to_string_pretty(&report)?;
    write_atomic(&out.join("stats.json"), json.as_bytes())?;
    Ok(())
}
