use std::path::Path;
use std::process::Command;

use fiun::dataset::{load_dataset, save_dataset, DatasetFormat, LabelSet};
use fiun::engine::{Method, UnlearnReport};
use fiun::umig::load_graph;
use fiun_cli::{parse_config, parse_config_str, run_experiment, ExperimentConfig, Layout, Stage};

const SMALL: &str = r#"{
    "seed": 5,
    "dataset": {"synthetic": {"num_classes": 4, "dim": 6, "samples_per_class": 60}},
    "topology": {"kind": "fl_star", "clients": 3, "rounds": 2},
    "train": {"epochs": 15},
    "methods": ["fiun", "retrain", "finetune", "ga"]
}"#;

fn config_in(dir: &Path, text: &str) -> ExperimentConfig {
    let path = dir.join("experiment.json");
    std::fs::write(&path, text).unwrap();
    parse_config(&path).unwrap()
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn fiun_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fiun"))
}

#[test]
fn run_writes_loadable_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path(), SMALL);
    let summary = run_experiment(&cfg).unwrap();
    let layout = Layout::new(dir.path().join("out"));

    let base = cfg.load_base().unwrap();
    let stored = load_dataset(&layout.dataset(), DatasetFormat::RawF32).unwrap();
    assert_eq!(stored, base);

    let trained = load_graph(&layout.trained()).unwrap();
    assert_eq!(trained.len(), 8);
    assert!(trained.nodes().all(|n| n.model.is_some() && n.model_fim.is_some()));
    for report in &summary.reports {
        let unlearned = load_graph(&layout.unlearned(report.method)).unwrap();
        assert!(unlearned.ids().eq(trained.ids()));
        let back = UnlearnReport::read_json(&layout.report_json(report.method)).unwrap();
        assert_eq!(&back, report);
        let csv = String::from_utf8(read(layout.report_csv(report.method))).unwrap();
        assert_eq!(csv.lines().count(), report.nodes.len() + 1);
    }
    assert_eq!(summary.compare.len(), 4);
    let compare = String::from_utf8(read(layout.reports().join("compare.csv"))).unwrap();
    assert!(compare.starts_with("method,nodes,max_time_s"));
    assert_eq!(summary.evaluation.len(), 8 * 5);
}

#[test]
fn rerun_is_identical_except_timings() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg_a = config_in(a.path(), SMALL);
    let mut cfg_b = config_in(b.path(), SMALL);
    cfg_b.workers = Some(1);
    let ra = run_experiment(&cfg_a).unwrap();
    let rb = run_experiment(&cfg_b).unwrap();
    for (x, y) in ra.reports.iter().zip(&rb.reports) {
        assert_eq!(
            x.without_timings().to_json().unwrap(),
            y.without_timings().to_json().unwrap()
        );
    }
    let (la, lb) = (Layout::new(a.path().join("out")), Layout::new(b.path().join("out")));
    assert_eq!(read(la.dataset()), read(lb.dataset()));
    assert_eq!(read(la.trained()), read(lb.trained()));
    for m in [Method::Fiun, Method::Retrain, Method::Finetune, Method::GradientAscent] {
        let ga = la.unlearned(m);
        let gb = lb.unlearned(m);
        assert_eq!(read(&ga), read(&gb));
        let models = ga.parent().unwrap().join("models");
        for entry in std::fs::read_dir(&models).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(
                read(models.join(&name)),
                read(gb.parent().unwrap().join("models").join(&name)),
                "{m} {name:?}"
            );
        }
    }
    assert_eq!(
        read(la.reports().join("evaluation.csv")),
        read(lb.reports().join("evaluation.csv"))
    );
}

#[test]
fn methods_must_not_be_empty() {
    let text = SMALL.replace(r#"["fiun", "retrain", "finetune", "ga"]"#, "[]");
    let msg = format!("{:#}", parse_config_str(&text).unwrap_err());
    assert!(msg.contains("methods"), "{msg}");
}

#[test]
fn file_dataset_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let base = config_in(dir.path(), SMALL).load_base().unwrap();
    std::fs::create_dir(dir.path().join("data")).unwrap();
    save_dataset(&base, &dir.path().join("data/blobs.csv"), DatasetFormat::Csv).unwrap();
    let text = SMALL
        .replace(
            r#"{"synthetic": {"num_classes": 4, "dim": 6, "samples_per_class": 60}}"#,
            r#"{"file": {"path": "data/blobs.csv", "format": "csv", "num_classes": 4}}"#,
        )
        .replace(r#"["fiun", "retrain", "finetune", "ga"]"#, r#"["fiun"]"#);
    let cfg = config_in(dir.path(), &text);
    assert_eq!(cfg.load_base().unwrap(), base);
    let summary = run_experiment(&cfg).unwrap();
    assert_eq!(summary.reports[0].c_f, LabelSet::from([0]));
}

#[test]
fn overlap_sets_drive_forgetting() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace(r#""clients": 3, "rounds": 2"#, r#""clients": 2, "rounds": 1"#)
        .replace(
            r#""methods""#,
            r#""unlearn": {"overlap": {"per_node": 2, "fraction": 0.5}}, "methods""#,
        );
    let cfg = config_in(dir.path(), &text);
    let summary = run_experiment(&cfg).unwrap();
    let fiun = &summary.reports[0];
    assert_eq!(fiun.c_f.len(), 3);
    assert_eq!(fiun.discovery.len(), 2);
    let topo = load_graph(&Layout::new(dir.path().join("out")).topology()).unwrap();
    for root in topo.roots() {
        let labels = &topo.node(root).unwrap().train_labels;
        assert_eq!(labels.intersection(&fiun.c_f).len(), 2, "{root}");
    }
}

#[test]
fn binary_runs_stages_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("experiment.json");
    std::fs::write(&cfg, SMALL).unwrap();
    let step = |args: &[&str]| {
        let out = fiun_bin().args(args).arg("--config").arg(&cfg).output().unwrap();
        (out.status.success(), String::from_utf8_lossy(&out.stderr).into_owned())
    };

    let (ok, err) = step(&["unlearn"]);
    assert!(!ok);
    assert!(
        err.contains(&Stage::Unlearn.to_string()) && err.contains("gen-topo"),
        "{err}"
    );

    for cmd in ["gen-topo", "train"] {
        let (ok, err) = step(&[cmd]);
        assert!(ok, "{cmd}: {err}");
    }
    let (ok, err) = step(&["unlearn", "--method", "retrain", "--labels", "1,2"]);
    assert!(ok, "{err}");
    let layout = Layout::new(dir.path().join("out"));
    let report = UnlearnReport::read_json(&layout.report_json(Method::Retrain)).unwrap();
    assert_eq!(report.c_f, LabelSet::from([1, 2]));
    assert!(!layout.report_json(Method::Fiun).exists());

    let (ok, err) = step(&["compare"]);
    assert!(!ok, "compare needs every configured report");
    assert!(err.contains("compare"), "{err}");
    let (ok, err) = step(&["compare", "--method", "retrain"]);
    assert!(ok, "{err}");
    let (ok, err) = step(&["evaluate", "--method", "retrain", "--labels", "1,2"]);
    assert!(ok, "{err}");
    let eval = String::from_utf8(read(layout.reports().join("evaluation.csv"))).unwrap();
    assert_eq!(eval.lines().filter(|l| l.starts_with("retrain,")).count(), 8);
}

#[test]
fn binary_reports_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, SMALL.replace(r#""epochs""#, r#""learningrate""#)).unwrap();
    let out = fiun_bin().arg("run").arg("--config").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("config stage failed") && err.contains("learningrate"),
        "{err}"
    );

    let out = fiun_bin().args(["run", "--method", "sgd"]).output().unwrap();
    assert!(!out.status.success());
}

/// The default ten-class, five-client star, driven through the config path.
#[test]
fn acceptance_scenario_forgets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(
        dir.path(),
        r#"{
            "seed": 0,
            "dataset": {"synthetic": {}},
            "topology": {"kind": "fl_star", "clients": 5, "rounds": 1}
        }"#,
    );
    let summary = run_experiment(&cfg).unwrap();
    let fiun = &summary.reports[0];
    let worst = fiun.nodes.iter().map(|n| n.metrics.accuracy.ad_f).fold(0.0, f64::max);
    assert!(worst <= 0.01, "max AD_f {worst:.4}");
}
