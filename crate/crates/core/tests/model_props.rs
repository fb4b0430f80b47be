mod common;

use common::*;
use lcr::content::{score_content, score_document_retrieval, score_hybrid, score_query_features, FeatureVector};
use lcr::model::{margin_rank, Dims, Model, Representation, Task, UserTransforms, Variant};
use lcr::FeatureContext;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn variant_strategy() -> impl Strategy<Value = Variant> {
    prop::sample::select(VARIANTS.to_vec())
}

fn random_model(seed: u64, variant: Variant) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = Dims::new(
        rng.random_range(1..=6),
        rng.random_range(1..=5),
        rng.random_range(1..=5),
        rng.random_range(1..=30),
    );
    Model::new(dims, variant, rng.random_range(0.5..3.0), seed).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn score_all_matches_score_and_oracle(seed in any::<u64>(), variant in variant_strategy()) {
        let m = random_model(seed, variant);
        let ctx = FeatureContext::none();
        for q in 0..m.dims.num_queries {
            for u in 0..m.dims.num_users {
                let all = m.score_all(q, u).unwrap();
                prop_assert_eq!(all.len(), m.dims.num_items);
                let oracle = oracle_scores(&m, &ctx, q, u);
                for (d, (&s, &o)) in all.0.iter().zip(&oracle).enumerate() {
                    prop_assert!(close(s, m.score(q, u, d).unwrap(), 1e-12));
                    prop_assert!(close(s, o, 1e-12));
                }
            }
        }
    }

    #[test]
    fn identity_reduces_to_two_dot_products(seed in any::<u64>()) {
        let m = random_model(seed, Variant::Identity);
        let (q, u, d) = (0, m.dims.num_users - 1, m.dims.num_items - 1);
        let s = m.queries.column(q);
        let t = m.items.column(d);
        let v = m.users.column(u);
        prop_assert!(close(m.score(q, u, d).unwrap(), s.dot(&t) + v.dot(&t), 1e-12));
    }

    #[test]
    fn full_with_diagonal_matrices_equals_diagonal(seed in any::<u64>()) {
        let diag_model = random_model(seed, Variant::Diagonal);
        let UserTransforms::Diagonal(diag) = &diag_model.transforms else { unreachable!() };
        let mut full = diag_model.clone();
        full.transforms = UserTransforms::Full(
            (0..diag.ncols()).map(|u| DMatrix::from_diagonal(&diag.column(u).into_owned())).collect(),
        );
        for q in 0..diag_model.dims.num_queries {
            for u in 0..diag_model.dims.num_users {
                let a = diag_model.score_all(q, u).unwrap();
                let b = full.score_all(q, u).unwrap();
                for (x, y) in a.0.iter().zip(&b.0) {
                    prop_assert!(close(*x, *y, 1e-12));
                }
            }
        }
    }

    #[test]
    fn exact_rank_bounds_and_shift_invariance(seed in any::<u64>(), variant in variant_strategy(), shift in -50.0f64..50.0) {
        let m = random_model(seed, variant);
        let scores = m.score_all(0, 0).unwrap().0;
        for d in 0..m.dims.num_items {
            let r = m.exact_rank(0, 0, d).unwrap();
            prop_assert!(r < m.dims.num_items);
            prop_assert_eq!(r, oracle_margin_rank(&scores, d));
            // dyadic shift keeps every comparison exact
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift.round()).collect();
            prop_assert_eq!(margin_rank(&shifted, d), r);
        }
    }

    #[test]
    fn identical_seeds_identical_models(seed in any::<u64>(), variant in variant_strategy()) {
        prop_assert_eq!(random_model(seed, variant), random_model(seed, variant));
    }

    #[test]
    fn initial_model_is_feasible(seed in any::<u64>(), variant in variant_strategy()) {
        let m = random_model(seed, variant);
        let c = m.constraint + 1e-12;
        for mat in [&m.queries, &m.items, &m.users] {
            prop_assert!(lcr::linalg::max_column_norm(mat) <= c);
        }
    }

    #[test]
    fn content_scorers_agree_with_layouts(seed in any::<u64>(), variant in variant_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, variant, layout(Representation::Index, Representation::Index), Task::QueryUserItem);
        let (q, u, d) = inst.triple.ids();
        let fd = inst.items.get(d).cloned().unwrap_or_else(|| FeatureVector::zeros(inst.items.dim()));
        let fq = inst.queries.get(q).cloned().unwrap_or_else(|| FeatureVector::zeros(inst.queries.dim()));
        let ctx = inst.ctx();
        let with = |l| inst.model.clone().with_layout(l).unwrap();

        let content = with(layout(Representation::Index, Representation::Features));
        prop_assert!(close(score_content(&inst.model, q, u, &fd).unwrap(), oracle_scores(&content, &ctx, q, u)[d], 1e-10));
        prop_assert!(close(score_content(&inst.model, q, u, &fd).unwrap(), content.score_in_context(q, u, d, &ctx).unwrap(), 1e-10));

        let qf = with(layout(Representation::Features, Representation::Features));
        prop_assert!(close(score_query_features(&inst.model, &fq, u, &fd).unwrap(), oracle_scores(&qf, &ctx, q, u)[d], 1e-10));

        let hybrid = with(layout(Representation::Both, Representation::Both));
        let h = score_hybrid(&inst.model, q, &fq, u, d, &fd).unwrap();
        prop_assert!(close(h, oracle_scores(&hybrid, &ctx, q, u)[d], 1e-10));
        prop_assert!(close(h, hybrid.score_in_context(q, u, d, &ctx).unwrap(), 1e-10));
    }

    #[test]
    fn hybrid_is_affine_in_item_features(seed in any::<u64>(), variant in variant_strategy(), alpha in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, variant, layout(Representation::Index, Representation::Index), Task::QueryUserItem);
        let (q, u, d) = inst.triple.ids();
        let m = &inst.model;
        let dim = inst.items.dim();
        let fq = inst.queries.get(q).cloned().unwrap_or_else(|| FeatureVector::zeros(inst.queries.dim()));
        let x = FeatureVector::one_hot(dim, 0);
        let y = FeatureVector::one_hot(dim, dim - 1);
        let h = |f: &FeatureVector| score_hybrid(m, q, &fq, u, d, f).unwrap();
        let base = h(&FeatureVector::zeros(dim));
        let lhs = h(&add(&x, &y.scaled(alpha)));
        let rhs = h(&x) + alpha * (h(&y) - base);
        prop_assert!(close(lhs, rhs, 1e-10));
    }

    #[test]
    fn document_retrieval_is_bilinear(seed in any::<u64>(), alpha in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, dq, dd) = (rng.random_range(1..5), rng.random_range(1..6), rng.random_range(1..6));
        let wq = DMatrix::from_fn(n, dq, |_, _| rng.random_range(-1.0..1.0));
        let wd = DMatrix::from_fn(n, dd, |_, _| rng.random_range(-1.0..1.0));
        let cat_q = random_catalog(&mut rng, dq, 2, 0.7, 1.0);
        let cat_d = random_catalog(&mut rng, dd, 1, 0.7, 1.0);
        let (x1, x2, y) = (cat_q.get(0).unwrap(), cat_q.get(1).unwrap(), cat_d.get(0).unwrap());
        let lhs = score_document_retrieval(&wq, &wd, &add(x1, &x2.scaled(alpha)), y).unwrap();
        let rhs = score_document_retrieval(&wq, &wd, x1, y).unwrap() + alpha * score_document_retrieval(&wq, &wd, x2, y).unwrap();
        prop_assert!(close(lhs, rhs, 1e-10));
        let oracle = (&wq * DMatrix::from_column_slice(dq, 1, &x1.to_dense())).dot(&(&wd * DMatrix::from_column_slice(dd, 1, &y.to_dense())));
        prop_assert!(close(score_document_retrieval(&wq, &wd, x1, y).unwrap(), oracle, 1e-12));
    }
}

fn add(a: &FeatureVector, b: &FeatureVector) -> FeatureVector {
    let dense: Vec<f64> = a.to_dense().iter().zip(b.to_dense()).map(|(x, y)| x + y).collect();
    FeatureVector::from_dense(&dense)
}

#[test]
fn zero_feature_vectors() {
    let m = Model::new(Dims::new(3, 2, 2, 2).with_item_features(4).with_query_features(4), Variant::Full, 1.0, 0).unwrap();
    assert_eq!(score_content(&m, 0, 0, &FeatureVector::zeros(4)).unwrap(), 0.0);
    let fd = FeatureVector::one_hot(4, 2);
    let bias: f64 = {
        let e = m.item_map.as_ref().unwrap().column(2);
        m.users.column(1).dot(&e)
    };
    let got = score_query_features(&m, &FeatureVector::zeros(4), 1, &fd).unwrap();
    assert!((got - bias).abs() < 1e-12);
    assert!(score_content(&m, 0, 0, &FeatureVector::zeros(5)).is_err());
    let no_maps = Model::new(Dims::new(3, 2, 2, 2), Variant::Full, 1.0, 0).unwrap();
    assert!(score_content(&no_maps, 0, 0, &FeatureVector::zeros(4)).is_err());
}
