//! Infection probabilities from embeddings and ranked predictions for a
//! cascade given its earliest infections.

use ndarray::ArrayView1;

use crate::cascade::{Cascade, NodeId};
use crate::error::{DceError, Result};
use crate::model::EmbeddingMatrix;

/// `P(u | v) = 1 / (1 + exp(||z_v - z_u||^2))`.
pub fn pairwise_infection_prob(z_u: ArrayView1<'_, f64>, z_v: ArrayView1<'_, f64>) -> f64 {
    1.0 / (1.0 + squared_distance(z_u, z_v).exp())
}

fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    assert_eq!(a.len(), b.len(), "embedding dimensions differ");
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `ln(1 - P(u | v))` for squared distance `d2`, i.e. `-ln(1 + exp(-d2))`.
#[inline]
fn log_survival(d2: f64) -> f64 {
    -(-d2).exp().ln_1p()
}

/// Noisy-or `1 - prod_v (1 - P(u | v))`, accumulated in log space.
pub fn aggregate_infection_prob(
    u: NodeId,
    infected: &[NodeId],
    z: &EmbeddingMatrix,
) -> Result<f64> {
    if infected.is_empty() {
        return Err(DceError::Empty(
            "noisy-or aggregation needs at least one infected node".into(),
        ));
    }
    if infected.contains(&u) {
        return Err(DceError::InvalidArgument(format!(
            "node {} is already infected",
            u.0
        )));
    }
    let zu = z.row(u);
    let log_q: f64 = infected
        .iter()
        .map(|&v| log_survival(squared_distance(zu, z.row(v))))
        .sum();
    Ok(-log_q.exp_m1())
}

/// Number of seeds revealed per cascade: `max(1, ceil(0.01 N))`.
pub fn seed_count(n_nodes: usize) -> usize {
    n_nodes.div_ceil(100).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedSet {
    pub cascade_id: usize,
    pub seeds: Vec<(NodeId, f64)>,
}

impl SeedSet {
    pub fn nodes(&self) -> Vec<NodeId> {
        self.seeds.iter().map(|s| s.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeedError {
    /// The cascade has fewer infections than the seed set needs.
    TooShort {
        cascade_id: usize,
        len: usize,
        needed: usize,
    },
}

/// The earliest `seed_count(N)` infections of a cascade.
pub fn select_seeds(cascade: &Cascade, n_nodes: usize) -> std::result::Result<SeedSet, SeedError> {
    let needed = seed_count(n_nodes);
    if cascade.len() < needed {
        return Err(SeedError::TooShort {
            cascade_id: cascade.id,
            len: cascade.len(),
            needed,
        });
    }
    Ok(SeedSet {
        cascade_id: cascade.id,
        seeds: cascade.infections()[..needed].to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankingMode {
    /// Score every node once against the seed set.
    #[default]
    OneShot,
    /// Repeatedly take the most probable node and add it to the infected set.
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRanking {
    pub cascade_id: usize,
    /// `(node, probability)`; the position in this list is the predicted infection order.
    pub entries: Vec<(NodeId, f64)>,
}

impl PredictionRanking {
    pub fn nodes(&self) -> Vec<NodeId> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn by_prob_then_id(a: &(NodeId, f64), b: &(NodeId, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Ranks every non-seed node by noisy-or probability, descending, ties by id.
pub fn rank_nodes(seeds: &SeedSet, z: &EmbeddingMatrix) -> Result<PredictionRanking> {
    rank_nodes_with(seeds, z, RankingMode::OneShot)
}

pub fn rank_nodes_with(
    seeds: &SeedSet,
    z: &EmbeddingMatrix,
    mode: RankingMode,
) -> Result<PredictionRanking> {
    let n = z.n_nodes();
    if seeds.seeds.is_empty() {
        return Err(DceError::Empty(format!(
            "cascade {} has no seeds",
            seeds.cascade_id
        )));
    }
    let mut is_seed = vec![false; n];
    for &(v, _) in &seeds.seeds {
        if v.0 >= n {
            return Err(DceError::InvalidArgument(format!(
                "seed {} outside {n} embeddings",
                v.0
            )));
        }
        is_seed[v.0] = true;
    }
    let candidates: Vec<NodeId> = (0..n).map(NodeId).filter(|v| !is_seed[v.0]).collect();
    // Running log-survival per candidate against the current infected set.
    let mut log_q: Vec<f64> = candidates
        .iter()
        .map(|&u| {
            seeds
                .seeds
                .iter()
                .map(|&(v, _)| log_survival(squared_distance(z.row(u), z.row(v))))
                .sum()
        })
        .collect();
    let entries = match mode {
        RankingMode::OneShot => {
            let mut entries: Vec<(NodeId, f64)> = candidates
                .iter()
                .zip(&log_q)
                .map(|(&u, &lq)| (u, -lq.exp_m1()))
                .collect();
            entries.sort_by(by_prob_then_id);
            entries
        }
        RankingMode::Sequential => {
            let mut remaining: Vec<usize> = (0..candidates.len()).collect();
            let mut entries = Vec::with_capacity(candidates.len());
            while !remaining.is_empty() {
                let (pos, &best) = remaining
                    .iter()
                    .enumerate()
                    .min_by(|(_, &a), (_, &b)| {
                        by_prob_then_id(
                            &(candidates[a], -log_q[a].exp_m1()),
                            &(candidates[b], -log_q[b].exp_m1()),
                        )
                    })
                    .expect("non-empty");
                remaining.swap_remove(pos);
                let picked = candidates[best];
                entries.push((picked, -log_q[best].exp_m1()));
                for &i in &remaining {
                    log_q[i] += log_survival(squared_distance(z.row(candidates[i]), z.row(picked)));
                }
            }
            entries
        }
    };
    Ok(PredictionRanking {
        cascade_id: seeds.cascade_id,
        entries,
    })
}

/// Baseline: non-seed nodes in uniformly random order, each scored with the
/// uniform probability `1 / candidates`.
pub fn random_ranking(
    seeds: &SeedSet,
    n_nodes: usize,
    rng: &mut impl rand::Rng,
) -> PredictionRanking {
    use rand::seq::SliceRandom;
    let mut candidates: Vec<NodeId> = (0..n_nodes)
        .map(NodeId)
        .filter(|v| !seeds.seeds.iter().any(|(s, _)| s == v))
        .collect();
    candidates.shuffle(rng);
    let p = 1.0 / candidates.len().max(1) as f64;
    PredictionRanking {
        cascade_id: seeds.cascade_id,
        entries: candidates.into_iter().map(|v| (v, p)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emb(rows: Array2<f64>) -> EmbeddingMatrix {
        EmbeddingMatrix(rows)
    }

    #[test]
    fn random_ranking_is_a_permutation_of_non_seeds() {
        let c = Cascade::new(0, "c", vec![(NodeId(3), 0.0), (NodeId(1), 1.0)]).unwrap();
        let seeds = select_seeds(&c, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut nodes = random_ranking(&seeds, 8, &mut rng).nodes();
        nodes.sort();
        assert_eq!(nodes, [0, 1, 2, 4, 5, 6, 7].map(NodeId));
    }

    fn random_emb(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        emb(Array2::from_shape_simple_fn((n, d), || rng.gen()))
    }

    #[test]
    fn pairwise_spot_values() {
        let a = array![0.2, 0.7];
        assert_eq!(pairwise_infection_prob(a.view(), a.view()), 0.5);
        let b = array![3f64.ln().sqrt(), 0.0];
        let c = array![0.0, 0.0];
        assert!((pairwise_infection_prob(b.view(), c.view()) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn pairwise_matches_scalar() {
        let z = random_emb(2, 5, 1);
        let mut d2 = 0.0;
        for k in 0..5 {
            d2 += (z.0[[0, k]] - z.0[[1, k]]).powi(2);
        }
        let expect = 1.0 / (1.0 + f64::exp(d2));
        assert!(
            (pairwise_infection_prob(z.row(NodeId(0)), z.row(NodeId(1))) - expect).abs() < 1e-12
        );
    }

    #[test]
    fn aggregate_examples() {
        let z = random_emb(4, 3, 2);
        let single = aggregate_infection_prob(NodeId(0), &[NodeId(1)], &z).unwrap();
        assert!(
            (single - pairwise_infection_prob(z.row(NodeId(0)), z.row(NodeId(1)))).abs() < 1e-15
        );
        let same = emb(Array2::from_elem((3, 2), 0.4));
        let two = aggregate_infection_prob(NodeId(0), &[NodeId(1), NodeId(2)], &same).unwrap();
        assert!((two - 0.75).abs() < 1e-15);
        assert!(aggregate_infection_prob(NodeId(0), &[], &z).is_err());
        assert!(aggregate_infection_prob(NodeId(0), &[NodeId(0)], &z).is_err());
    }

    #[test]
    fn aggregate_matches_direct_product() {
        let z = random_emb(11, 4, 3);
        let seeds: Vec<NodeId> = (1..11).map(NodeId).collect();
        let direct = 1.0
            - seeds
                .iter()
                .map(|&v| 1.0 - pairwise_infection_prob(z.row(NodeId(0)), z.row(v)))
                .product::<f64>();
        let got = aggregate_infection_prob(NodeId(0), &seeds, &z).unwrap();
        assert!((got - direct).abs() < 1e-12);
    }

    #[test]
    fn seed_counts() {
        assert_eq!(seed_count(100), 1);
        assert_eq!(seed_count(300), 3);
        assert_eq!(seed_count(301), 4);
        assert_eq!(seed_count(5), 1);
        let c = Cascade::new(
            0,
            "c",
            (0..5).map(|v| (NodeId(v), 5.0 - v as f64)).collect(),
        )
        .unwrap();
        let s = select_seeds(&c, 100).unwrap();
        assert_eq!(s.seeds, vec![(NodeId(4), 1.0)]);
        assert!(matches!(
            select_seeds(&c, 900),
            Err(SeedError::TooShort { needed: 9, .. })
        ));
    }

    #[test]
    fn seeds_match_sort_and_take() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let infs: Vec<(NodeId, f64)> = (0..40)
            .map(|v| (NodeId(v), rng.gen_range(0..10) as f64))
            .collect();
        let c = Cascade::new(0, "c", infs.clone()).unwrap();
        let mut oracle = infs;
        oracle.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        assert_eq!(select_seeds(&c, 350).unwrap().seeds, oracle[..4].to_vec());
    }

    #[test]
    fn ranking_examples() {
        let z = random_emb(2, 3, 5);
        let seeds = SeedSet {
            cascade_id: 0,
            seeds: vec![(NodeId(0), 0.0)],
        };
        assert_eq!(rank_nodes(&seeds, &z).unwrap().len(), 1);

        let z = emb(array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0]]);
        let r = rank_nodes(&seeds, &z).unwrap();
        assert_eq!(r.nodes(), vec![NodeId(3), NodeId(1), NodeId(2)]);
    }

    #[test]
    fn ranking_matches_naive_recomputation() {
        let n = 40;
        let z = random_emb(n, 6, 6);
        let seeds = SeedSet {
            cascade_id: 3,
            seeds: vec![(NodeId(7), 0.0), (NodeId(19), 1.0)],
        };
        let r = rank_nodes(&seeds, &z).unwrap();
        assert_eq!(r.len(), n - 2);
        let mut naive: Vec<(NodeId, f64)> = (0..n)
            .filter(|&u| u != 7 && u != 19)
            .map(|u| {
                let q: f64 = [7, 19]
                    .iter()
                    .map(|&v| 1.0 - pairwise_infection_prob(z.row(NodeId(u)), z.row(NodeId(v))))
                    .product();
                (NodeId(u), 1.0 - q)
            })
            .collect();
        naive.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for ((a, pa), (b, pb)) in r.entries.iter().zip(&naive) {
            assert_eq!(a, b);
            assert!((pa - pb).abs() < 1e-12);
        }
    }

    #[test]
    fn sequential_mode_covers_all_candidates() {
        let z = random_emb(15, 3, 7);
        let seeds = SeedSet {
            cascade_id: 0,
            seeds: vec![(NodeId(2), 0.0)],
        };
        let seq = rank_nodes_with(&seeds, &z, RankingMode::Sequential).unwrap();
        let one = rank_nodes(&seeds, &z).unwrap();
        assert_eq!(seq.len(), 14);
        assert_eq!(seq.entries[0], one.entries[0]);
        let mut a = seq.nodes();
        a.sort();
        let mut b = one.nodes();
        b.sort();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn noisy_or_is_monotone(seed in any::<u64>(), k in 2usize..9) {
            let z = random_emb(10, 3, seed);
            let infected: Vec<NodeId> = (1..=k).map(NodeId).collect();
            let smaller = aggregate_infection_prob(NodeId(0), &infected[..k - 1], &z).unwrap();
            let larger = aggregate_infection_prob(NodeId(0), &infected, &z).unwrap();
            prop_assert!(larger >= smaller);
        }

        #[test]
        fn probabilities_in_open_unit_interval_with_floor(seed in any::<u64>(), d in 1usize..6) {
            let z = random_emb(12, d, seed);
            let seeds = SeedSet { cascade_id: 0, seeds: vec![(NodeId(0), 0.0), (NodeId(1), 0.5)] };
            let floor = 1.0 / (1.0 + (d as f64).exp());
            for &(u, p) in &rank_nodes(&seeds, &z).unwrap().entries {
                prop_assert!(p > 0.0 && p < 1.0);
                prop_assert!(pairwise_infection_prob(z.row(u), z.row(NodeId(0))) >= floor);
            }
        }

        #[test]
        fn ranking_ignores_seed_order(seed in any::<u64>()) {
            let z = random_emb(12, 3, seed);
            let a = SeedSet { cascade_id: 0, seeds: vec![(NodeId(0), 0.0), (NodeId(5), 0.5), (NodeId(9), 0.7)] };
            let b = SeedSet { cascade_id: 0, seeds: vec![(NodeId(9), 0.7), (NodeId(0), 0.0), (NodeId(5), 0.5)] };
            prop_assert_eq!(rank_nodes(&a, &z).unwrap().nodes(), rank_nodes(&b, &z).unwrap().nodes());
        }
    }
}
