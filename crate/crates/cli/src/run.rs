//! Experiment stages and the output directory layout.
//!
//! ```text
//! <out>/dataset.f32                 base dataset (raw f32)
//! <out>/topology/graph.json         generated graph, no models
//! <out>/trained/graph.json          trained graph with models/ and fims/
//! <out>/unlearned/<method>/graph.json
//! <out>/reports/<method>.json|csv   per-method unlearning reports
//! <out>/reports/evaluation.csv      accuracies of every stored graph
//! <out>/reports/summary.csv         all report rows
//! <out>/reports/compare.csv         one row per method
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};

use fiun::dataset::{load_dataset, save_dataset, DatasetFormat, LabelSet, LabeledDataset};
use fiun::engine::{
    assign_forget_sets, evaluate, run_baseline, run_fiun, speedup, train_graph, worker_pool, DataCatalog, Method,
    Speedup, UnlearnReport, CSV_HEADER,
};
use fiun::umig::{gen_topology, load_graph, save_graph, Umig};

use crate::config::{ExperimentConfig, MethodName};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Generate,
    Train,
    Unlearn,
    Evaluate,
    Compare,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Generate => "gen-topo",
            Stage::Train => "train",
            Stage::Unlearn => "unlearn",
            Stage::Evaluate => "evaluate",
            Stage::Compare => "compare",
        })
    }
}

/// A failure tagged with the stage it happened in.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {:#}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

pub fn in_stage<T>(stage: Stage, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|source| StageError { stage, source })
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.f32")
    }

    pub fn topology(&self) -> PathBuf {
        self.root.join("topology").join("graph.json")
    }

    pub fn trained(&self) -> PathBuf {
        self.root.join("trained").join("graph.json")
    }

    pub fn unlearned(&self, m: Method) -> PathBuf {
        self.root.join("unlearned").join(m.as_str()).join("graph.json")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn report_json(&self, m: Method) -> PathBuf {
        self.reports().join(format!("{}.json", m.as_str()))
    }

    pub fn report_csv(&self, m: Method) -> PathBuf {
        self.reports().join(format!("{}.csv", m.as_str()))
    }
}

fn require(path: &Path, producer: &str) -> Result<()> {
    ensure!(path.is_file(), "{} not found; run `{producer}` first", path.display());
    Ok(())
}

fn base_dataset(layout: &Layout) -> Result<LabeledDataset> {
    let path = layout.dataset();
    require(&path, "gen-topo")?;
    Ok(load_dataset(&path, DatasetFormat::RawF32)?)
}

fn catalog(cfg: &ExperimentConfig, layout: &Layout) -> Result<DataCatalog> {
    Ok(DataCatalog::new(base_dataset(layout)?, cfg.catalog_seed()))
}

fn trained_graph(layout: &Layout) -> Result<Umig> {
    let path = layout.trained();
    require(&path, "train")?;
    Ok(load_graph(&path)?)
}

fn forget_set(cfg: &ExperimentConfig, umig: &Umig, num_classes: usize) -> Result<LabelSet> {
    cfg.forget_set(num_classes, umig.roots().len())
}

fn workers(cfg: &ExperimentConfig) -> usize {
    cfg.workers.unwrap_or(0)
}

/// Writes the base dataset and the generated (untrained) graph.
pub fn gen_topo(cfg: &ExperimentConfig) -> Result<Umig> {
    let layout = Layout::new(&cfg.output.dir);
    let base = cfg.load_base().context("loading dataset")?;
    save_dataset(&base, &layout.dataset(), DatasetFormat::RawF32)?;
    let mut umig = gen_topology(&cfg.topology, base.num_classes(), cfg.topology_seed())?;
    if let Some(sets) = cfg.overlap_sets(base.num_classes(), umig.roots().len())? {
        assign_forget_sets(&mut umig, &sets)?;
    }
    save_graph(&umig, &layout.topology())?;
    Ok(umig)
}

/// Trains every node of the generated graph and caches its model Fisher.
pub fn train(cfg: &ExperimentConfig) -> Result<Umig> {
    let layout = Layout::new(&cfg.output.dir);
    let catalog = catalog(cfg, &layout)?;
    let path = layout.topology();
    require(&path, "gen-topo")?;
    let topo = load_graph(&path)?;
    let pool = worker_pool(workers(cfg))?;
    let trained = train_graph(&topo, &catalog, &cfg.train_config(), &pool)?;
    save_graph(&trained, &layout.trained())?;
    Ok(trained)
}

/// Runs each configured method on the trained graph and writes the
/// unlearned graphs and reports.
pub fn unlearn(cfg: &ExperimentConfig) -> Result<Vec<UnlearnReport>> {
    let layout = Layout::new(&cfg.output.dir);
    let catalog = catalog(cfg, &layout)?;
    let trained = trained_graph(&layout)?;
    let c_f = forget_set(cfg, &trained, catalog.num_classes())?;
    let request = cfg.request(c_f, catalog.base());
    let pool = worker_pool(workers(cfg))?;
    let mut reports = Vec::with_capacity(cfg.methods.len());
    for &name in &cfg.methods {
        let method = name.method();
        let (updated, report) = match cfg.baseline(name) {
            None => run_fiun(&trained, &catalog, &request, &pool),
            Some(kind) => run_baseline(&trained, &catalog, &request, kind, &cfg.train_config()),
        }
        .with_context(|| format!("method {method}"))?;
        save_graph(&updated, &layout.unlearned(method))?;
        report.write_json(&layout.report_json(method))?;
        report.write_csv(&layout.report_csv(method))?;
        reports.push(report);
    }
    Ok(reports)
}

/// One accuracy row per node of the trained graph and of every stored
/// unlearned graph.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRow {
    pub graph: String,
    pub node: String,
    pub ad_f: f64,
    pub ad_r: f64,
    pub delta_acc: f64,
}

pub fn evaluate_stage(cfg: &ExperimentConfig) -> Result<Vec<EvaluationRow>> {
    let layout = Layout::new(&cfg.output.dir);
    let catalog = catalog(cfg, &layout)?;
    let trained = trained_graph(&layout)?;
    let c_f = forget_set(cfg, &trained, catalog.num_classes())?;
    let mut graphs = vec![("trained".to_owned(), trained)];
    for &name in &cfg.methods {
        let path = layout.unlearned(name.method());
        if path.is_file() {
            graphs.push((name.method().as_str().to_owned(), load_graph(&path)?));
        }
    }
    let mut rows = Vec::new();
    for (label, umig) in &graphs {
        let acc = evaluate(umig, &c_f, &catalog).with_context(|| format!("graph {label}"))?;
        for id in umig.ids() {
            let a = acc[id];
            rows.push(EvaluationRow {
                graph: label.clone(),
                node: id.to_string(),
                ad_f: a.ad_f,
                ad_r: a.ad_r,
                delta_acc: a.delta_acc,
            });
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["graph", "node", "num_cf", "ad_f", "ad_r", "delta_acc"])?;
    for r in &rows {
        w.write_record([
            r.graph.clone(),
            r.node.clone(),
            c_f.len().to_string(),
            format!("{:.4}", r.ad_f),
            format!("{:.4}", r.ad_r),
            format!("{:.4}", r.delta_acc),
        ])?;
    }
    write(&layout.reports().join("evaluation.csv"), &w.into_inner()?)?;
    Ok(rows)
}

/// Per-method aggregates. `fiun_speedup` is the ratio of the method's
/// largest cumulative time to FIUn's.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub method: Method,
    pub nodes: usize,
    pub max_time_s: f64,
    pub mean_ad_f: f64,
    pub max_ad_f: f64,
    pub mean_ad_r: f64,
    pub min_ad_r: f64,
    pub fiun_speedup: Option<Speedup>,
}

pub fn compare(cfg: &ExperimentConfig) -> Result<Vec<CompareRow>> {
    let layout = Layout::new(&cfg.output.dir);
    let mut reports = Vec::new();
    for &name in &cfg.methods {
        let path = layout.report_json(name.method());
        require(&path, "unlearn")?;
        reports.push(UnlearnReport::read_json(&path)?);
    }
    let fiun = reports.iter().find(|r| r.method == Method::Fiun);
    let mut rows = Vec::with_capacity(reports.len());
    let mut summary = CSV_HEADER.join(",");
    summary.push('\n');
    for r in &reports {
        summary.push_str(&r.to_csv(false)?);
        let ad_f: Vec<f64> = r.nodes.iter().map(|n| n.metrics.accuracy.ad_f).collect();
        let ad_r: Vec<f64> = r.nodes.iter().map(|n| n.metrics.accuracy.ad_r).collect();
        rows.push(CompareRow {
            method: r.method,
            nodes: r.nodes.len(),
            max_time_s: r.max_cumulative_time(),
            mean_ad_f: mean(&ad_f),
            max_ad_f: ad_f.iter().copied().fold(0.0, f64::max),
            mean_ad_r: mean(&ad_r),
            min_ad_r: ad_r.iter().copied().reduce(f64::min).unwrap_or(0.0),
            fiun_speedup: fiun.map(|f| speedup(f, r)).transpose()?,
        });
    }
    write(&layout.reports().join("summary.csv"), summary.as_bytes())?;
    write(&layout.reports().join("compare.csv"), &compare_csv(&rows)?)?;
    Ok(rows)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn compare_csv(rows: &[CompareRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "nodes",
        "max_time_s",
        "mean_ad_f",
        "max_ad_f",
        "mean_ad_r",
        "min_ad_r",
        "fiun_speedup",
    ])?;
    for r in rows {
        let speedup = match r.fiun_speedup {
            Some(Speedup::Finite(x)) => format!("{x:.2}"),
            Some(Speedup::Infinite) => "inf".to_owned(),
            None => String::new(),
        };
        w.write_record([
            r.method.as_str().to_owned(),
            r.nodes.to_string(),
            format!("{:.6}", r.max_time_s),
            format!("{:.4}", r.mean_ad_f),
            format!("{:.4}", r.max_ad_f),
            format!("{:.4}", r.mean_ad_r),
            format!("{:.4}", r.min_ad_r),
            speedup,
        ])?;
    }
    Ok(w.into_inner()?)
}

pub fn format_compare(rows: &[CompareRow]) -> Result<String> {
    Ok(String::from_utf8(compare_csv(rows)?)?)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Debug)]
pub struct RunSummary {
    pub reports: Vec<UnlearnReport>,
    pub evaluation: Vec<EvaluationRow>,
    pub compare: Vec<CompareRow>,
}

/// Generate, train, unlearn with every method, evaluate and compare.
pub fn run_experiment(cfg: &ExperimentConfig) -> std::result::Result<RunSummary, StageError> {
    in_stage(Stage::Generate, gen_topo(cfg))?;
    in_stage(Stage::Train, train(cfg))?;
    let reports = in_stage(Stage::Unlearn, unlearn(cfg))?;
    let evaluation = in_stage(Stage::Evaluate, evaluate_stage(cfg))?;
    let compare = in_stage(Stage::Compare, compare(cfg))?;
    Ok(RunSummary {
        reports,
        evaluation,
        compare,
    })
}

/// Applies command-line overrides on top of a parsed config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub labels: Option<LabelSet>,
    pub method: Option<MethodName>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
        if let Some(l) = &self.labels {
            cfg.unlearn.labels = Some(l.iter().collect());
            cfg.unlearn.overlap = None;
        }
        if let Some(m) = self.method {
            cfg.methods = vec![m];
        }
        cfg.validate()
    }
}
