mod common;

use common::*;
use dce_core::cascade::NodeId;
use dce_core::evaluation::{
    average_precision, cascade_order_precision, evaluate_dataset, map_at_k, order_precision,
    predict_cascades, EvalConfig, GroundTruth,
};
use dce_core::model::EmbeddingMatrix;
use dce_core::prediction::{PredictionRanking, RankingMode};
use dce_core::synthgen::{generate_graph, planted_community_cascades, SynthConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ranking(id: usize, nodes: &[NodeId]) -> PredictionRanking {
    PredictionRanking {
        cascade_id: id,
        entries: nodes.iter().map(|&v| (v, 0.5)).collect(),
    }
}

fn truth(id: usize, nodes: &[NodeId]) -> GroundTruth {
    GroundTruth {
        cascade_id: id,
        nodes: nodes.to_vec(),
    }
}

#[test]
fn twenty_cascades_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut preds, mut truths) = (Vec::new(), Vec::new());
    for _ in 0..20 {
        let (p, t) = random_metric_instance(&mut rng, 25);
        preds.push(p);
        truths.push(t);
    }
    let rankings: Vec<_> = preds
        .iter()
        .enumerate()
        .map(|(i, p)| ranking(i, p))
        .collect();
    let gts: Vec<_> = truths
        .iter()
        .enumerate()
        .map(|(i, t)| truth(i, t))
        .collect();
    for k in [1, 3, 10, 25, 40] {
        assert_eq!(
            map_at_k(&rankings, &gts, k).unwrap(),
            map_oracle(&preds, &truths, k),
            "k={k}"
        );
    }
    assert_eq!(
        order_precision(&rankings, &gts).unwrap(),
        mean_order_precision_oracle(&preds, &truths)
    );
}

#[test]
fn reversed_full_ranking_matches_enumeration() {
    let t = [NodeId(0), NodeId(1), NodeId(2)];
    let p = [NodeId(2), NodeId(1), NodeId(0)];
    let value = cascade_order_precision(&p, &truth(0, &t));
    assert_eq!(value, order_precision_oracle(&p, &t));
    assert!((value - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn map_is_non_decreasing_in_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..300 {
        let (p, t) = random_metric_instance(&mut rng, 20);
        let gt = truth(0, &t);
        let mut prev = 0.0;
        for k in 1..=p.len() {
            let ap = average_precision(&p, &gt, k).unwrap();
            assert_eq!(ap, ap_oracle(&p, &t, k));
            assert!(ap >= prev);
            prev = ap;
        }
    }
}

#[test]
fn swapping_correctly_ordered_neighbours_never_helps() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut swaps = 0;
    for _ in 0..500 {
        let (p, t) = random_metric_instance(&mut rng, 15);
        let base = order_precision_oracle(&p, &t);
        assert_eq!(cascade_order_precision(&p, &truth(0, &t)), base);
        for i in 0..p.len().saturating_sub(1) {
            let (a, b) = (
                t.iter().position(|v| *v == p[i]),
                t.iter().position(|v| *v == p[i + 1]),
            );
            if let (Some(a), Some(b)) = (a, b) {
                if a < b {
                    let mut q = p.clone();
                    q.swap(i, i + 1);
                    let swapped = order_precision_oracle(&q, &t);
                    assert_eq!(cascade_order_precision(&q, &truth(0, &t)), swapped);
                    assert!(
                        swapped <= base + 1e-15,
                        "{p:?} -> {q:?}: {base} -> {swapped}"
                    );
                    swaps += 1;
                }
            }
        }
    }
    assert!(swaps > 100);
}

#[test]
fn pipeline_metrics_match_reference() {
    let cfg = SynthConfig {
        n_nodes: 60,
        n_cascades: 40,
        ..SynthConfig::default()
    };
    let g = generate_graph(&cfg).unwrap();
    let cascades = planted_community_cascades(&g, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let z = EmbeddingMatrix(Array2::from_shape_simple_fn((60, 4), || rng.gen()));
    let eval = EvalConfig::for_nodes(60);
    let report = evaluate_dataset(&z, &cascades, &eval).unwrap();

    let (pairs, _) = predict_cascades(&z, &cascades, RankingMode::OneShot).unwrap();
    let preds: Vec<Vec<NodeId>> = pairs.iter().map(|(r, _)| r.nodes()).collect();
    let truths: Vec<Vec<NodeId>> = pairs.iter().map(|(_, t)| t.nodes.clone()).collect();
    for &(k, v) in &report.map_at_k {
        assert_eq!(v, map_oracle(&preds, &truths, k));
    }
    assert_eq!(
        report.order_precision,
        mean_order_precision_oracle(&preds, &truths)
    );
    assert_eq!(report, evaluate_dataset(&z, &cascades, &eval).unwrap());
}
