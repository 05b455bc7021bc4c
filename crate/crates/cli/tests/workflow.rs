mod common;

use std::fs;

use common::QUICK;
use corads_cli::commands::evaluate::{MEMBERS_FILE, REPORT_FILE};
use corads_cli::run::{member_dir, CHECKPOINT_FILE, HISTORY_FILE};
use corads_cli::{
    cmd_ablate, cmd_evaluate, cmd_preprocess, cmd_train, AblationAxis, AblationGrid, EvaluateOptions, RunDir,
};

fn quick(extra: &[&str]) -> Vec<String> {
    QUICK.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn training_resumes_and_records_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::synth(dir.path(), 30, 3);
    let o = quick(&["ensemble_size=2"]);
    let cfg = common::toy_config(dir.path(), &manifest, &refs(&o));

    let first = cmd_train(&cfg).unwrap();
    assert_eq!(first.trained, vec![0, 1]);
    for i in 0..2 {
        let m = member_dir(&first.run_dir, i);
        assert!(m.join(CHECKPOINT_FILE).is_file() && m.join(HISTORY_FILE).is_file());
    }
    let run = RunDir::open(&first.run_dir).unwrap();
    assert_eq!(run.metadata.config_hash, cfg.hash().unwrap());
    assert_eq!(run.config.hash().unwrap(), cfg.hash().unwrap());
    assert_eq!(run.metadata.member_seeds, vec![cfg.train.seed, cfg.train.seed + 1]);

    let again = cmd_train(&cfg).unwrap();
    assert!(again.trained.is_empty());
    assert_eq!(again.skipped, vec![0, 1]);
    assert_eq!(again.run_dir, first.run_dir);

    // an interrupted member (no history yet) is retrained
    let ckpt = member_dir(&first.run_dir, 1).join(CHECKPOINT_FILE);
    let before = fs::read(&ckpt).unwrap();
    fs::remove_file(member_dir(&first.run_dir, 1).join(HISTORY_FILE)).unwrap();
    let resumed = cmd_train(&cfg).unwrap();
    assert_eq!(resumed.trained, vec![1]);
    assert_eq!(resumed.skipped, vec![0]);
    assert_eq!(fs::read(&ckpt).unwrap(), before);

    // the seed changes the run id, not the hash
    let mut other = cfg.clone();
    other.train.seed = 7;
    assert_eq!(other.hash().unwrap(), cfg.hash().unwrap());
    assert_ne!(other.run_id().unwrap(), cfg.run_id().unwrap());
}

#[test]
fn evaluation_reports_compares_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::synth(dir.path(), 30, 4);
    let o = quick(&["ensemble_size=2"]);
    let cfg = common::toy_config(dir.path(), &manifest, &refs(&o));
    let a = cmd_train(&cfg).unwrap().run_dir;
    let mut cfg_b = cfg.clone();
    cfg_b.train.seed = 5;
    let b = cmd_train(&cfg_b).unwrap().run_dir;

    let eval = cmd_evaluate(&a, &EvaluateOptions::default()).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval.out_dir.join(REPORT_FILE)).unwrap()).unwrap();
    for key in ["auc", "auc_ci", "qwk", "qwk_ci", "roc_points", "confusion", "n_scans", "provenance"] {
        assert!(report.get(key).is_some(), "report lacks {key}");
    }
    assert_eq!(report["provenance"]["config_hash"], cfg.hash().unwrap());
    assert_eq!(eval.ensemble.members.len(), 2);
    assert!(eval.ensemble.missing_seeds.is_empty());
    for f in ["predictions.csv", "roc.csv", "roc.svg", "confusion.svg", MEMBERS_FILE] {
        assert!(eval.out_dir.join(f).is_file(), "missing {f}");
    }
    let first = fs::read(eval.out_dir.join(REPORT_FILE)).unwrap();
    cmd_evaluate(&a, &EvaluateOptions::default()).unwrap();
    assert_eq!(fs::read(eval.out_dir.join(REPORT_FILE)).unwrap(), first);

    let cmp = cmd_evaluate(
        &a,
        &EvaluateOptions {
            against: Some(b.clone()),
            out_dir: Some(dir.path().join("cmp")),
            ..Default::default()
        },
    )
    .unwrap()
    .comparison
    .unwrap();
    assert!((0.0..=1.0).contains(&cmp.auc_p));
    assert!(cmp.qwk_p.is_some_and(|p| (0.0..=1.0).contains(&p)));
    assert!(dir.path().join("cmp/comparison.json").is_file());

    // comparing a run with itself finds no difference
    let same = cmd_evaluate(
        &a,
        &EvaluateOptions {
            against: Some(a.clone()),
            out_dir: Some(dir.path().join("self")),
            ..Default::default()
        },
    )
    .unwrap()
    .comparison
    .unwrap();
    assert_eq!(same.auc.0, same.auc.1);
    assert_eq!(same.auc_p, 1.0);

    // a member that never finished is reported, the rest still evaluate
    fs::remove_file(member_dir(&b, 1).join(HISTORY_FILE)).unwrap();
    let partial = cmd_evaluate(&b, &EvaluateOptions::default()).unwrap();
    assert_eq!(partial.ensemble.members.len(), 1);
    assert_eq!(partial.ensemble.missing_seeds, vec![6]);
    assert_eq!(partial.report.provenance["member_seeds"], "5");
}

#[test]
fn ablation_grid_shares_the_cache_and_diffs_only_toggled_fields() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::synth(dir.path(), 24, 6);
    let o = quick(&["ensemble_size=1"]);
    let cfg = common::toy_config(dir.path(), &manifest, &refs(&o));
    let source = cmd_train(&cfg).unwrap().run_dir;
    let ckpt = member_dir(&source, 0).join(CHECKPOINT_FILE);

    let mut base = cfg.clone();
    base.data.pretrained_checkpoint = Some(ckpt);
    let grid = AblationGrid::Axes(vec![AblationAxis::Pretrained, AblationAxis::Lesion]);
    let summary = cmd_ablate(&base, &grid).unwrap();
    assert_eq!(summary.points.len(), 4);
    assert!(summary.cache.hit_rate() > 0.0, "{:?}", summary.cache);
    assert!(summary.summary_path.is_file());

    let mut ids: Vec<String> = Vec::new();
    for p in &summary.points {
        let run = RunDir::open(&p.run_dir).unwrap();
        ids.push(run.metadata.run_id.clone());
        let info = run.metadata.ablation.unwrap();
        assert_eq!(info.base_run, base.run_id().unwrap());
        let mut touched: Vec<&str> = info.diff.iter().map(|(path, _, _)| path.as_str()).collect();
        touched.sort();
        let mut expected: Vec<&str> = p
            .toggled
            .iter()
            .map(|a| match a {
                AblationAxis::Pretrained => "model.pretrained",
                AblationAxis::Lesion => "model.input_channels",
                _ => unreachable!(),
            })
            .collect();
        expected.sort();
        assert_eq!(touched, expected, "point {}", p.label);
        assert!(corads_cli::run::member_complete(&p.run_dir, 0));
    }
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 4);
}

#[test]
fn standard_grid_trains_five_runs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::synth(dir.path(), 20, 9);
    let o = quick(&["ensemble_size=1", "train.max_batches=2", "train.eval_every_batches=2"]);
    let cfg = common::toy_config(dir.path(), &manifest, &refs(&o));
    let source = cmd_train(&cfg).unwrap().run_dir;
    let mut base = cfg.clone();
    base.data.pretrained_checkpoint = Some(member_dir(&source, 0).join(CHECKPOINT_FILE));
    let summary = cmd_ablate(&base, &AblationGrid::Standard).unwrap();
    let labels: Vec<&str> = summary.points.iter().map(|p| p.label.as_str()).collect();
    assert_eq!(
        labels,
        ["base", "pretrained=true", "lesion=off", "head=categorical", "dimensionality=2d"]
    );
    assert!(summary.points.iter().all(|p| p.trained == vec![0]));
}

#[test]
fn preprocessing_twice_hits_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::synth(dir.path(), 12, 2);
    let cfg = common::toy_config(dir.path(), &manifest, &[]);
    let cold = cmd_preprocess(&cfg).unwrap();
    assert_eq!((cold.hits, cold.misses), (0, 12));
    let warm = cmd_preprocess(&cfg).unwrap();
    assert_eq!((warm.hits, warm.misses), (12, 0));
    assert!(dir.path().join("cache").is_dir());
}
