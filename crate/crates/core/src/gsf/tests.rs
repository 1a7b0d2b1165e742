use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{Document, QueryList};
use crate::nn::{AffineLayer, Matrix, Mode, ScoringNet};
use crate::Error;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_list(n: usize, dim: usize, seed: u64) -> QueryList<f64> {
    let mut r = rng(seed);
    let rows = (0..n).map(|_| (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let labels = (0..n).map(|_| f64::from(r.gen_range(0..3u8))).collect();
    QueryList::from_rows("q", rows, labels).unwrap()
}

fn model(m: usize, dim: usize, agg: Aggregation, seed: u64) -> GsfModel<f64> {
    GsfModel::new(m, dim, &[8, 6], true, agg, &mut rng(seed)).unwrap()
}

/// A model whose network ignores its input and always emits `bias`.
fn constant_model(bias: Vec<f64>, dim: usize, agg: Aggregation) -> GsfModel<f64> {
    let m = bias.len();
    let head = AffineLayer::new(Matrix::zeros(m * dim, m), bias).unwrap();
    let net = ScoringNet::from_layers(vec![], head).unwrap();
    GsfModel::from_net(m, dim, 0, net, agg).unwrap()
}

#[test]
fn group_input_is_ordered_concatenation() {
    let q = random_list(3, 2, 1);
    let m1 = model(1, 2, Aggregation::Mean, 0);
    assert_eq!(m1.build_group_input(&q, &Group::new(vec![1])).unwrap(), q.docs[1].features);

    let m2 = model(2, 2, Aggregation::Mean, 0);
    let ab = m2.build_group_input(&q, &Group::new(vec![0, 1])).unwrap();
    let ba = m2.build_group_input(&q, &Group::new(vec![1, 0])).unwrap();
    assert_eq!(ab, [q.docs[0].features.clone(), q.docs[1].features.clone()].concat());
    assert_eq!(ba, [q.docs[1].features.clone(), q.docs[0].features.clone()].concat());
    assert_ne!(ab, ba);
}

#[test]
fn group_input_width_for_large_groups() {
    let m = constant_model(vec![0.0; 64], 136, Aggregation::Mean);
    assert_eq!(m.input_dim(), 8704);
    let q = random_list(64, 136, 3);
    let g = Group::new((0..64).collect());
    assert_eq!(m.build_group_input(&q, &g).unwrap().len(), 8704);
}

#[test]
fn group_input_rejects_masked_slots() {
    let docs = vec![Document::new(vec![1.0], 1.0), Document::padding(1)];
    let q = QueryList::with_mask("q", docs, vec![true, false]).unwrap();
    let m = model(2, 1, Aggregation::Mean, 0);
    assert!(m.build_group_input(&q, &Group::new(vec![0, 1])).is_err());
}

#[test]
fn context_prefix_is_prepended() {
    let mut r = rng(1);
    let m = GsfModel::<f64>::with_context(2, 2, 3, &[4], false, Aggregation::Mean, &mut r).unwrap();
    let q = random_list(3, 2, 2).with_context(vec![9.0, 8.0, 7.0]);
    let input = m.build_group_input(&q, &Group::new(vec![2, 0])).unwrap();
    assert_eq!(&input[..3], &[9.0, 8.0, 7.0]);
    assert_eq!(&input[3..5], q.docs[2].features.as_slice());
    assert!(m.score_list(&q, ScoringMode::Full, &mut r).is_ok());
    assert!(m.score_list(&random_list(3, 2, 2), ScoringMode::Full, &mut r).is_err());
}

#[test]
fn constant_network_aggregation_by_hand() {
    // n=3, m=2: each slot sits in 4 of the 6 ordered pairs, twice in position 0.
    let gs = enumerate_groups(3, 2).unwrap();
    let ones = Matrix::from_rows(&vec![vec![1.0, 0.0]; 6]).unwrap();
    let mask = [true; 3];
    let sum = aggregate(&ones, &gs, &mask, Aggregation::Sum).unwrap();
    let mean = aggregate(&ones, &gs, &mask, Aggregation::Mean).unwrap();
    assert_eq!(sum.scores, vec![2.0; 3]);
    assert_eq!(mean.scores, vec![0.5; 3]);
}

#[test]
fn singleton_groups_sum_equals_mean() {
    let gs = enumerate_groups(4, 1).unwrap();
    let s = Matrix::from_rows(&[vec![0.3], vec![-1.0], vec![2.0], vec![0.0]]).unwrap();
    let a = aggregate(&s, &gs, &[true; 4], Aggregation::Sum).unwrap();
    let b = aggregate(&s, &gs, &[true; 4], Aggregation::Mean).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.scores, vec![0.3, -1.0, 2.0, 0.0]);
}

#[test]
fn aggregate_rejects_uncovered_slots() {
    let gs = GroupSet {
        groups: vec![Group::new(vec![0, 1])],
        origin: GroupOrigin::Sampled,
    };
    let s = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
    assert!(aggregate(&s, &gs, &[true; 3], Aggregation::Mean).is_err());
    assert!(aggregate(&s, &gs, &[true, true, false], Aggregation::Mean).is_ok());
}

#[test]
fn sum_and_mean_rank_identically_when_counts_are_uniform() {
    for seed in 0..30 {
        let mut r = rng(seed);
        let n = r.gen_range(2..=6);
        let m = r.gen_range(1..=n.min(3));
        let q = random_list(n, 3, seed);
        let sum_model = model(m, 3, Aggregation::Sum, seed);
        let mut mean_model = sum_model.clone();
        mean_model.aggregation = Aggregation::Mean;
        for mode in [ScoringMode::Full, ScoringMode::Sampled] {
            let a = sum_model.score_list(&q, mode, &mut rng(seed + 1)).unwrap();
            let b = mean_model.score_list(&q, mode, &mut rng(seed + 1)).unwrap();
            assert_eq!(rank(&a), rank(&b), "seed {seed} mode {mode:?}");
        }
    }
}

#[test]
fn univariate_scores_ignore_co_listed_documents() {
    let m = model(1, 3, Aggregation::Mean, 4);
    let q = random_list(5, 3, 5);
    let mut replaced = q.clone();
    replaced.docs[3].features = vec![10.0, -4.0, 0.5];
    replaced.docs[0].features = vec![0.0, 0.0, 0.0];
    for mode in [ScoringMode::Full, ScoringMode::Sampled] {
        let a = m.score_list(&q, mode, &mut rng(1)).unwrap();
        let b = m.score_list(&replaced, mode, &mut rng(2)).unwrap();
        for i in [1, 2, 4] {
            assert_eq!(a.scores[i].to_bits(), b.scores[i].to_bits());
        }
    }
}

#[test]
fn duplicate_documents_score_identically_under_full_enumeration() {
    let m = model(2, 3, Aggregation::Sum, 6);
    let mut q = random_list(4, 3, 7);
    q.docs[1].features = q.docs[0].features.clone();
    let s = m.score_list(&q, ScoringMode::Full, &mut rng(0)).unwrap();
    assert!((s.scores[0] - s.scores[1]).abs() <= 1e-12);
}

#[test]
fn sampled_means_converge_to_full_enumeration() {
    let m = model(2, 3, Aggregation::Mean, 8);
    let q = random_list(5, 3, 9);
    let exact = m.score_list(&q, ScoringMode::Full, &mut rng(0)).unwrap();
    let mut r = rng(10);
    let draws: Vec<Vec<f64>> = (0..200)
        .map(|_| m.score_list(&q, ScoringMode::Sampled, &mut r).unwrap().scores)
        .collect();
    for i in 0..5 {
        let xs: Vec<f64> = draws.iter().map(|d| d[i]).collect();
        let mean = xs.iter().sum::<f64>() / 200.0;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 199.0).sqrt();
        let se = sd / 200f64.sqrt();
        assert!((mean - exact.scores[i]).abs() <= 2.0 * se, "slot {i}: {mean} vs {}", exact.scores[i]);
    }
}

#[test]
fn sampled_mode_evaluates_the_network_once_per_document() {
    let m = model(3, 2, Aggregation::Mean, 1);
    for n in 3..=9 {
        let q = random_list(n, 2, n as u64);
        let gs = m.groups_for(&q, ScoringMode::Sampled, &mut rng(0)).unwrap();
        let batch = m.forward_lists(&[&q], vec![gs], Mode::Infer).unwrap();
        assert_eq!(batch.evaluations, n);
    }
}

#[test]
fn short_lists_fall_back_to_wrapped_windows() {
    let m = model(4, 2, Aggregation::Mean, 1);
    let q = random_list(2, 2, 3);
    for mode in [ScoringMode::Full, ScoringMode::Sampled] {
        let gs = m.groups_for(&q, mode, &mut rng(0)).unwrap();
        assert_eq!(gs.len(), 2);
        let s = m.score_list(&q, mode, &mut rng(0)).unwrap();
        assert!(s.scores.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn padded_slots_are_never_scored() {
    let mut q = random_list(4, 2, 3);
    q.mask[2] = false;
    q.docs[2].features = vec![f64::MAX, f64::MAX];
    let m = model(2, 2, Aggregation::Mean, 2);
    for mode in [ScoringMode::Full, ScoringMode::Sampled] {
        let gs = m.groups_for(&q, mode, &mut rng(0)).unwrap();
        assert!(gs.groups.iter().all(|g| !g.indices.contains(&2)));
        let s = m.score_list(&q, mode, &mut rng(0)).unwrap();
        assert_eq!(s.scores[2], f64::NEG_INFINITY);
        assert!(!rank(&s).contains(&2));
    }
}

#[test]
fn full_mode_guard() {
    let m = constant_model(vec![0.0; 8], 1, Aggregation::Mean);
    let q = random_list(30, 1, 1);
    assert!(matches!(
        m.score_list(&q, ScoringMode::Full, &mut rng(0)),
        Err(Error::EnumerationTooLarge { .. })
    ));
}

#[test]
fn rank_orders_by_score_then_slot() {
    let s = |v: Vec<f64>| ScoreVector {
        mask: vec![true; v.len()],
        scores: v,
    };
    assert_eq!(rank(&s(vec![0.1, 0.9, 0.5])), vec![1, 2, 0]);
    assert_eq!(rank(&s(vec![0.3; 4])), vec![0, 1, 2, 3]);
    assert_eq!(rank(&s(vec![1.0, 2.0, 1.0, 2.0])), vec![1, 3, 0, 2]);
    let masked = ScoreVector {
        scores: vec![0.2, f64::NEG_INFINITY, 0.7],
        mask: vec![true, false, true],
    };
    assert_eq!(rank(&masked), vec![2, 0]);
}

#[test]
fn routed_gradients_sum_back_to_score_gradients() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let n = r.gen_range(1..=7);
        let m = r.gen_range(1..=4);
        let gs = sample_groups_wrapping(n, m, &mut r);
        let grad: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let counts = gs.occurrence_counts(n);
        for agg in [Aggregation::Mean, Aggregation::Sum] {
            let routed = route_gradients(&grad, &gs, agg);
            let mut back = vec![0.0; n];
            for (row, g) in gs.groups.iter().enumerate() {
                for (p, &slot) in g.indices.iter().enumerate() {
                    back[slot] += routed[(row, p)];
                }
            }
            for i in 0..n {
                let expected = match agg {
                    Aggregation::Mean => grad[i],
                    Aggregation::Sum => grad[i] * counts[i] as f64,
                };
                assert!((back[i] - expected).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn routing_is_the_transpose_of_aggregation() {
    // ⟨route(v), S⟩ = ⟨v, aggregate(S)⟩ for every group-score matrix S.
    let mut r = rng(3);
    let gs = enumerate_groups(4, 3).unwrap();
    let s = Matrix::from_vec(gs.len(), 3, (0..gs.len() * 3).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
    let v: Vec<f64> = (0..4).map(|_| r.gen_range(-1.0..1.0)).collect();
    for agg in [Aggregation::Mean, Aggregation::Sum] {
        let f = aggregate(&s, &gs, &[true; 4], agg).unwrap();
        let lhs: f64 = route_gradients(&v, &gs, agg)
            .as_slice()
            .iter()
            .zip(s.as_slice())
            .map(|(a, b)| a * b)
            .sum();
        let rhs: f64 = v.iter().zip(&f.scores).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}

#[test]
fn json_round_trip_preserves_scores() {
    let mut m = model(2, 3, Aggregation::Mean, 12);
    // Perturb running statistics so they are part of what must survive.
    let q = random_list(6, 3, 13);
    let gs = m.groups_for(&q, ScoringMode::Sampled, &mut rng(1)).unwrap();
    let batch = m.forward_lists(&[&q], vec![gs], Mode::Train).unwrap();
    m.absorb_batch_statistics(&batch).unwrap();
    m.transform = Some(crate::data::FeatureTransform {
        shift: vec![0.1, 0.2, 0.3],
        scale: vec![1.0, 2.0, 0.5],
    });
    let text = m.to_json().unwrap();
    let back = GsfModel::<f64>::from_json(&text).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.to_json().unwrap(), text);
}

#[test]
fn json_rejects_unknown_versions_and_garbage() {
    let m = model(1, 2, Aggregation::Sum, 0);
    let text = m.to_json().unwrap().replace("\"format_version\": 1", "\"format_version\": 7");
    assert!(matches!(GsfModel::<f64>::from_json(&text), Err(Error::UnsupportedFormat(7))));
    assert!(GsfModel::<f64>::from_json("{}").is_err());
    assert!(GsfModel::<f64>::from_json("not json").is_err());
}

#[test]
fn json_document_shape() {
    let m = model(2, 3, Aggregation::Mean, 0);
    let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
    assert_eq!(v["format_version"], 1);
    assert_eq!(v["group_size"], 2);
    assert_eq!(v["input_dim"], 6);
    let types: Vec<&str> = v["layers"].as_array().unwrap().iter().map(|l| l["type"].as_str().unwrap()).collect();
    assert_eq!(types, ["affine", "batch_norm", "relu", "affine", "batch_norm", "relu", "affine"]);
    assert_eq!(v["layers"][0]["dims"], serde_json::json!([6, 8]));
    assert_eq!(v["layers"][0]["weights"].as_array().unwrap().len(), 48);
}

#[test]
fn f32_models_score() {
    let m = GsfModel::<f32>::new(2, 2, &[4], true, Aggregation::Mean, &mut rng(0)).unwrap();
    let q = QueryList::<f32>::from_rows("q", vec![vec![0.1, 0.2], vec![0.3, -0.4], vec![1.0, 0.0]], vec![1.0, 0.0, 0.0]).unwrap();
    let s = m.score_list(&q, ScoringMode::Full, &mut rng(0)).unwrap();
    assert_eq!(rank(&s).len(), 3);
    let back = GsfModel::<f32>::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(back, m);
}
