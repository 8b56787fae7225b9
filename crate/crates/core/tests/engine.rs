use std::collections::BTreeSet;

use fiun::dataset::{synth_gaussian_blobs, BlobSpec, LabelSet, LabeledDataset};
use fiun::engine::{
    evaluate, run_baseline, run_fiun, train_graph, worker_pool, BaselineKind, DataCatalog, FimSource, Method,
    UnlearnRequest,
};
use fiun::fim::compute_fim;
use fiun::model::{LinearSoftmaxModel, TrainConfig};
use fiun::umig::{gen_topology, ModelNode, NodeId, NodeRole, Topology, Umig};
use fiun::Error;

fn id(s: &str) -> NodeId {
    NodeId::new(s)
}

fn separable() -> LabeledDataset {
    synth_gaussian_blobs(&BlobSpec {
        num_classes: 3,
        dim: 20,
        samples_per_class: 200,
        center_scale: 6.0,
        noise_sigma: 1.0,
        seed: 11,
    })
    .unwrap()
}

// g -> a -> b, every node reading all rows.
fn trained_chain() -> (Umig, DataCatalog) {
    let mut g = Umig::new();
    for n in ["g", "a", "b"] {
        g.add_node(ModelNode::new(n, NodeRole::Trainer).with_dataset("all"))
            .unwrap();
    }
    g.add_edge(&id("g"), &id("a"), None).unwrap();
    g.add_edge(&id("a"), &id("b"), None).unwrap();
    let cat = DataCatalog::new(separable(), 5);
    let cfg = TrainConfig {
        seed: 3,
        ..TrainConfig::default()
    };
    let g = train_graph(&g, &cat, &cfg, &worker_pool(2).unwrap()).unwrap();
    (g, cat)
}

#[test]
fn fiun_on_separable_chain() {
    let (g, cat) = trained_chain();
    let req = UnlearnRequest::new([0].into());
    let (_, report) = run_fiun(&g, &cat, &req, &worker_pool(2).unwrap()).unwrap();
    assert_eq!(report.discovery, vec![id("g")]);
    assert_eq!(report.nodes.len(), 3);
    for n in &report.nodes {
        let a = n.metrics.accuracy;
        assert!(a.ad_f <= 0.01, "{}: AD_f {}", n.id, a.ad_f);
        assert!(a.ad_r >= 0.90, "{}: AD_r {}", n.id, a.ad_r);
        assert_eq!(n.metrics.dampen_passes, 1);
        assert_eq!(n.metrics.model_fim_source, Some(FimSource::Cached));
    }
}

#[test]
fn retrain_on_separable_chain() {
    let (g, cat) = trained_chain();
    let req = UnlearnRequest::new([0].into());
    let cfg = TrainConfig {
        seed: 3,
        ..TrainConfig::default()
    };
    let (_, report) = run_baseline(&g, &cat, &req, BaselineKind::Retrain, &cfg).unwrap();
    assert_eq!(report.method, Method::Retrain);
    for n in &report.nodes {
        let a = n.metrics.accuracy;
        assert!(a.ad_f <= 0.01, "{}: AD_f {}", n.id, a.ad_f);
        assert!(a.ad_r >= 0.95, "{}: AD_r {}", n.id, a.ad_r);
    }
    let t = |n: &str| report.node(&id(n)).unwrap().metrics.cumulative_time_s;
    assert!(t("g") <= t("a") && t("a") <= t("b"));
}

#[test]
fn untouched_request() {
    let (g, cat) = trained_chain();
    let mut mapped = Umig::new();
    let cat2 = DataCatalog::new(cat.base().filter_labels(|l| l != 2), 5);
    for node in g.nodes() {
        mapped.add_node(node.clone().with_dataset("all")).unwrap();
    }
    for (p, c, w) in g.edges() {
        mapped.add_edge(p, c, w).unwrap();
    }
    // No node's labels contain a label absent from their data.
    let labels: LabelSet = [2].into();
    let mut g2 = mapped.clone();
    for n in mapped.ids() {
        let l = mapped.node(n).unwrap().train_labels.difference(&labels);
        g2.set_train_labels(n, l).unwrap();
    }
    let (out, report) = run_fiun(&g2, &cat2, &UnlearnRequest::new(labels), &worker_pool(1).unwrap()).unwrap();
    assert!(report.nodes.is_empty());
    assert!(report.discovery.is_empty());
    assert_eq!(out, g2);
}

#[test]
fn outside_nodes_bit_exact() {
    let ds = synth_gaussian_blobs(&BlobSpec {
        num_classes: 4,
        dim: 3,
        samples_per_class: 50,
        seed: 2,
        ..BlobSpec::default()
    })
    .unwrap();
    let cat = DataCatalog::new(ds, 1);
    let mut g = Umig::new();
    g.add_node(ModelNode::new("clean", NodeRole::Trainer).with_dataset("without:3"))
        .unwrap();
    g.add_node(ModelNode::new("child", NodeRole::Trainer).with_dataset("without:3"))
        .unwrap();
    g.add_node(ModelNode::new("dirty", NodeRole::Trainer).with_dataset("all"))
        .unwrap();
    g.add_edge(&id("clean"), &id("child"), None).unwrap();
    g.add_edge(&id("clean"), &id("dirty"), None).unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let g = train_graph(&g, &cat, &cfg, &worker_pool(1).unwrap()).unwrap();
    let req = UnlearnRequest::new([3].into());
    let pool = worker_pool(1).unwrap();
    let mut outs = vec![run_fiun(&g, &cat, &req, &pool).unwrap()];
    for kind in [
        BaselineKind::Retrain,
        BaselineKind::Finetune,
        BaselineKind::GradientAscent { epochs: 2 },
    ] {
        outs.push(run_baseline(&g, &cat, &req, kind, &cfg).unwrap());
    }
    for (out, report) in outs {
        assert_eq!(report.discovery, vec![id("dirty")]);
        for n in ["clean", "child"] {
            assert_eq!(out.node(&id(n)).unwrap(), g.node(&id(n)).unwrap(), "{}", report.method);
        }
        assert_ne!(
            out.node(&id("dirty")).unwrap().model,
            g.node(&id("dirty")).unwrap().model
        );
    }
}

#[test]
fn worker_count_does_not_matter() {
    let ds = synth_gaussian_blobs(&BlobSpec {
        samples_per_class: 100,
        seed: 4,
        ..BlobSpec::default()
    })
    .unwrap();
    let cat = DataCatalog::new(ds, 4);
    let topo = gen_topology(
        &Topology::DagFl {
            clients: 4,
            rounds: 3,
            approvals: 2,
        },
        10,
        4,
    )
    .unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let g = train_graph(&topo, &cat, &cfg, &worker_pool(3).unwrap()).unwrap();
    assert_eq!(g, train_graph(&topo, &cat, &cfg, &worker_pool(1).unwrap()).unwrap());
    let mut req = UnlearnRequest::new([1, 7].into());
    req.recompute_model_fims = true;
    let (base, base_report) = run_fiun(&g, &cat, &req, &worker_pool(1).unwrap()).unwrap();
    for w in [2, 8] {
        let (out, report) = run_fiun(&g, &cat, &req, &worker_pool(w).unwrap()).unwrap();
        assert_eq!(out, base);
        assert_eq!(report.without_timings(), base_report.without_timings());
    }
    assert!(base_report
        .nodes
        .iter()
        .all(|n| n.metrics.model_fim_source == Some(FimSource::OwnData)));
}

#[test]
fn baseline_contracts() {
    let (g, cat) = trained_chain();
    let req = UnlearnRequest::new([0].into());
    let zero = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    assert!(matches!(
        run_baseline(&g, &cat, &req, BaselineKind::Finetune, &zero),
        Err(Error::Parameter(_))
    ));
    let (out, _) = run_baseline(&g, &cat, &req, BaselineKind::GradientAscent { epochs: 0 }, &zero).unwrap();
    for n in g.ids() {
        assert_eq!(out.node(n).unwrap().model, g.node(n).unwrap().model);
    }
    let (out, report) = run_baseline(
        &g,
        &cat,
        &req,
        BaselineKind::GradientAscent { epochs: 5 },
        &TrainConfig::default(),
    )
    .unwrap();
    assert_eq!(report.method, Method::GradientAscent);
    let forget = cat.base().filter_labels(|l| l == 0);
    for n in g.ids() {
        let before = mean_loglik(g.node(n).unwrap().model.as_ref().unwrap(), &forget);
        let after = mean_loglik(out.node(n).unwrap().model.as_ref().unwrap(), &forget);
        assert!(after < before, "{n}: {after} >= {before}");
    }
}

fn mean_loglik(m: &LinearSoftmaxModel, ds: &LabeledDataset) -> f64 {
    ds.iter()
        .map(|(x, y)| m.predict_proba(x).unwrap()[y as usize].ln())
        .sum::<f64>()
        / ds.len() as f64
}

#[test]
fn evaluation_rules() {
    let (g, cat) = trained_chain();
    let acc = evaluate(&g, &[0].into(), &cat).unwrap();
    for a in acc.values() {
        assert!(a.ad_f == 1.0 && a.ad_r == 1.0 && a.delta_acc == 0.0, "{a:?}");
    }
    let cat2 = DataCatalog::new(cat.base().filter_labels(|l| l != 0), 5);
    let acc = evaluate(&g, &[0].into(), &cat2).unwrap();
    assert!(acc.values().all(|a| a.ad_f_empty && a.ad_f == 0.0 && !a.ad_r_empty));
    let mut bare = Umig::new();
    bare.add_node(ModelNode::new("x", NodeRole::Trainer).with_model(LinearSoftmaxModel::zeros(3, 4)))
        .unwrap();
    assert!(matches!(evaluate(&bare, &[0].into(), &cat), Err(Error::Config(_))));
}

#[test]
fn discovery_without_forget_rows_is_a_config_error() {
    let (g, cat) = trained_chain();
    let mut req = UnlearnRequest::new([0].into());
    req.unlearn_data.insert(id("g"), "without:0".into());
    assert!(matches!(
        run_fiun(&g, &cat, &req, &worker_pool(1).unwrap()),
        Err(Error::Config(_))
    ));
}

// A node with fixed parameters and Fisher inputs, placed below `depth - 1`
// clean ancestors of a single discovery root, gets the same update.
#[test]
fn update_independent_of_depth() {
    let ds = separable();
    let cat = DataCatalog::new(ds.clone(), 0);
    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let fixed = fiun::model::train(None, &ds, &cfg).unwrap();
    let fim = compute_fim(&fixed, &ds).unwrap();
    let mut updates = BTreeSet::new();
    for depth in 1..=5 {
        let mut g = Umig::new();
        for i in 0..depth {
            let node = ModelNode::new(format!("n{i}"), NodeRole::Trainer)
                .with_dataset("all")
                .with_labels(LabelSet::range(3))
                .with_model(fixed.clone())
                .with_fim(fim.clone());
            g.add_node(node).unwrap();
            if i > 0 {
                g.add_edge(&id(&format!("n{}", i - 1)), &id(&format!("n{i}")), None)
                    .unwrap();
            }
        }
        let (out, _) = run_fiun(&g, &cat, &UnlearnRequest::new([1].into()), &worker_pool(2).unwrap()).unwrap();
        let leaf = out
            .node(&id(&format!("n{}", depth - 1)))
            .unwrap()
            .model
            .clone()
            .unwrap();
        updates.insert(leaf.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>());
    }
    assert_eq!(updates.len(), 1);
}
