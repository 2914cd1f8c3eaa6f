mod common;

use dekgci::config::Hyperparams;
use dekgci::eval::evaluate;
use dekgci::ingest::DatasetFiles;
use dekgci::model::{fit, Checkpoint, FitOptions, Graphs};

fn hyper() -> Hyperparams {
    Hyperparams {
        batchsize: 64,
        dim: 16,
        layers: 2,
        n_neighbor: 4,
        lr: 0.01,
        max_epochs: 12,
        patience: 4,
        ..Hyperparams::default()
    }
}

fn world(dir: &std::path::Path) -> DatasetFiles {
    let (ratings, kg) = common::planted_world(150, 60, 3, 1);
    std::fs::write(dir.join("ratings.tsv"), ratings).unwrap();
    std::fs::write(dir.join("kg.tsv"), kg).unwrap();
    DatasetFiles { ratings: dir.join("ratings.tsv"), kg: dir.join("kg.tsv"), item2entity: None }
}

#[test]
fn learns_planted_structure() {
    let dir = tempfile::tempdir().unwrap();
    let ds = world(dir.path()).prepare(None, 3).unwrap();
    let graphs = Graphs::from_dataset(&ds).unwrap();
    let hp = hyper();
    let out = fit(&ds.split, &graphs, &hp, &FitOptions::default()).unwrap();
    let first = &out.log.epochs[0];
    let last = out.log.epochs.last().unwrap();
    assert!(last.train_loss < first.train_loss, "{:?}", out.log);
    let test = evaluate(&out.params, &graphs, &hp, "test", &ds.split.test, 1).unwrap();
    assert!(test.auc > 0.8, "test auc {}", test.auc);
    assert!(test.acc > 0.7, "test acc {}", test.acc);

    let path = dir.path().join("model.ckpt");
    let ck = Checkpoint { params: out.params.clone(), hyper: hp.clone(), dataset_hash: ds.dataset_hash.clone(), num_items: ds.num_items };
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    let again = evaluate(&back.params, &graphs, &back.hyper, "test", &ds.split.test, 1).unwrap();
    assert_eq!(again, test);
}

#[test]
fn untrained_model_is_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let ds = world(dir.path()).prepare(None, 3).unwrap();
    let graphs = Graphs::from_dataset(&ds).unwrap();
    let hp = Hyperparams { lr: 0.0, max_epochs: 1, ..hyper() };
    let out = fit(&ds.split, &graphs, &hp, &FitOptions::default()).unwrap();
    let all: Vec<_> = ds.split.train.iter().chain(&ds.split.eval).chain(&ds.split.test).copied().collect();
    let m = evaluate(&out.params, &graphs, &hp, "all", &all, 1).unwrap();
    assert!((m.auc - 0.5).abs() < 0.1, "auc {}", m.auc);
}

#[test]
fn training_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let ds = world(dir.path()).prepare(None, 3).unwrap();
    let graphs = Graphs::from_dataset(&ds).unwrap();
    let hp = Hyperparams { max_epochs: 3, ..hyper() };
    let a = fit(&ds.split, &graphs, &hp, &FitOptions { workers: 1 }).unwrap();
    let b = fit(&ds.split, &graphs, &hp, &FitOptions { workers: 4 }).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.log.to_tsv(), b.log.to_tsv());
}
