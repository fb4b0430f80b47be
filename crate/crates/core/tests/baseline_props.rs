mod common;

use common::{oracle_position, random_catalog};
use lcr::baselines::{
    catalog_matrix, cosine_score, cooccurrence_matrix, lsi_score, mixed_score, nmf, nmf_objective, select_gamma,
    truncated_svd, ContentScorer, CooccurrenceMode, CooccurrenceOptions, FactorPair, LsiModel, MixedModel, MixedScorer,
    SparseMatrix, SVD_POWER_ITERATIONS,
};
use lcr::model::Task;
use lcr::{Scorer, Triple};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pair(rng: &mut impl Rng, n: usize, rows: usize, cols: usize) -> FactorPair {
    FactorPair {
        left: DMatrix::from_fn(n, rows, |_, _| rng.random_range(-1.0..1.0)),
        right: DMatrix::from_fn(n, cols, |_, _| rng.random_range(-1.0..1.0)),
    }
}

fn random_mixed(rng: &mut impl Rng, gamma: f64) -> MixedModel {
    let n = rng.random_range(1..5);
    let items = rng.random_range(1..20);
    MixedModel { qi: random_pair(rng, n, 4, items), ui: random_pair(rng, n, 3, items), gamma }
}

/// Eigenvalues of `A^T A`, descending; their square roots are the
/// singular values of `A`.
fn gram_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = (a.transpose() * a).symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn sparse_random(rng: &mut impl Rng, rows: usize, cols: usize, density: f64) -> SparseMatrix {
    SparseMatrix::from_dense(&DMatrix::from_fn(rows, cols, |_, _| {
        if rng.random_bool(density) { rng.random_range(1..5) as f64 } else { 0.0 }
    }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mixed_score_is_affine_in_gamma(seed in any::<u64>(), g1 in -4.0f64..4.0, g2 in -4.0f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_mixed(&mut rng, g1);
        let b = MixedModel { gamma: g2, ..a.clone() };
        let zero = MixedModel { gamma: 0.0, ..a.clone() };
        for d in 0..a.num_items() {
            let (sa, sb, s0) = (mixed_score(&a, 1, 2, d).unwrap(), mixed_score(&b, 1, 2, d).unwrap(), mixed_score(&zero, 1, 2, d).unwrap());
            prop_assert!((sa - sb - (g1 - g2) * a.ui.score(2, d)).abs() < 1e-12);
            prop_assert!((s0 - a.qi.score(1, d)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gamma_ranks_like_query_item(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_mixed(&mut rng, 0.0);
        let mixed = MixedScorer::new(&m, Task::QueryUserItem).score_all(3, 1).unwrap().0;
        let qi = MixedScorer::new(&m, Task::QueryItem).score_all(3, 1).unwrap().0;
        for d in 0..m.num_items() {
            prop_assert_eq!(oracle_position(&mixed, d), oracle_position(&qi, d));
        }
    }

    #[test]
    fn svd_of_psd_matrix_recovers_eigenvalues(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size = rng.random_range(2..12);
        let b = DMatrix::from_fn(size, size, |_, _| rng.random_range(-1.0..1.0));
        let a = b.transpose() * &b;
        let n = rng.random_range(1..=size);
        let svd = truncated_svd(&SparseMatrix::from_dense(&a), n, seed, SVD_POWER_ITERATIONS).unwrap();
        let mut eig: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|x, y| y.total_cmp(x));
        // oversampling covers the whole space for these sizes
        for (s, e) in svd.singular_values.iter().zip(&eig) {
            prop_assert!((s - e).abs() <= 1e-6 * e.max(1.0), "{s} vs {e}");
        }
        prop_assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let u = &svd.left_vectors;
        prop_assert!((u.transpose() * u - DMatrix::identity(n, n)).abs().max() < 1e-9);
    }

    #[test]
    fn nmf_factors_stay_nonnegative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, cols) = (rng.random_range(2..10), rng.random_range(2..10));
        let m = sparse_random(&mut rng, rows, cols, 0.4);
        let result = nmf(&m, rng.random_range(1..4), 30, seed).unwrap();
        prop_assert!(result.factors.left.iter().chain(result.factors.right.iter()).all(|&x| x >= 0.0 && x.is_finite()));
        prop_assert!(result.objective.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12));
        prop_assert!((nmf_objective(&m, &result.factors) - result.objective.last().unwrap()).abs() < 1e-9 * result.objective[0].max(1.0));
    }

    #[test]
    fn full_rank_lsi_equals_cosine(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.random_range(1..6);
        let items = random_catalog(&mut rng, dim, dim + 6, 0.8, 1.0);
        let queries = random_catalog(&mut rng, dim, 3, 0.8, 1.0);
        let matrix = catalog_matrix(&items);
        let dense = matrix.to_dense();
        // a rank-deficient item matrix cannot span the query space
        prop_assume!(gram_eigenvalues(&dense).last().copied().unwrap_or(0.0) > 1e-6);
        let lsi = LsiModel::fit(&matrix, dim, seed, SVD_POWER_ITERATIONS).unwrap();
        let cos = ContentScorer::cosine(&queries, &items).unwrap();
        let via_lsi = ContentScorer::lsi(&lsi, &queries, &items).unwrap();
        for q in 0..3 {
            let a = cos.score_all(q, 0).unwrap().0;
            let b = via_lsi.score_all(q, 0).unwrap().0;
            for d in 0..items.num_entities() {
                prop_assert!((a[d] - b[d]).abs() < 1e-8);
                let direct = cosine_score(queries.get(q).unwrap(), items.get(d).unwrap());
                prop_assert!((a[d] - direct).abs() < 1e-12);
                prop_assert!((b[d] - lsi_score(&lsi, queries.get(q).unwrap(), items.get(d).unwrap()).unwrap()).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn sparse_svd_is_near_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = sparse_random(&mut rng, 50, 80, 0.1);
    let dense = m.to_dense();
    let eig = gram_eigenvalues(&dense);
    for n in [1, 5, 10] {
        let svd = truncated_svd(&m, n, 3, SVD_POWER_ITERATIONS).unwrap();
        let err = (&dense - svd.factor_pair().reconstruct()).norm_squared();
        let optimal: f64 = eig[n..].iter().map(|e| e.max(0.0)).sum();
        assert!(err <= 1.05 * optimal, "rank {n}: {err} vs optimal {optimal}");
    }
}

#[test]
fn cooccurrence_counts_pairs() {
    let triples = [Triple::new(0, 1, 2), Triple::new(0, 0, 2), Triple::new(1, 1, 0)];
    let qi = cooccurrence_matrix(&triples, CooccurrenceMode::QueryItem, 2, 3, CooccurrenceOptions::default()).unwrap();
    assert_eq!(qi.to_dense(), DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 2.0, 1.0, 0.0, 0.0]));
    let ui = cooccurrence_matrix(&triples, CooccurrenceMode::UserItem, 2, 3, CooccurrenceOptions::default()).unwrap();
    assert_eq!(ui.to_dense(), DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 1.0]));
    let damped = CooccurrenceOptions { log_damping: true, row_normalize: true };
    let qn = cooccurrence_matrix(&triples, CooccurrenceMode::QueryItem, 2, 3, damped).unwrap();
    assert_eq!(qn.get(0, 2), 1.0);
    assert!(cooccurrence_matrix(&triples, CooccurrenceMode::QueryItem, 1, 3, CooccurrenceOptions::default()).is_err());
    assert!(cooccurrence_matrix(&[], CooccurrenceMode::QueryItem, 1, 3, CooccurrenceOptions::default()).is_err());
}

#[test]
fn gamma_selection_prefers_earliest_tie() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let qi = random_pair(&mut rng, 2, 3, 10);
    let ui = FactorPair { left: DMatrix::zeros(2, 2), right: DMatrix::zeros(2, 10) };
    let validation: Vec<Triple> = (0..30).map(|i| Triple::new(i % 3, i % 2, i % 10)).collect();
    let (gamma, curve) = select_gamma(&qi, &ui, &validation, &[0.5, 0.0, 2.0], 3).unwrap();
    assert_eq!(gamma, 0.5);
    assert!(curve.iter().all(|c| c.1 == curve[0].1));
    assert!(select_gamma(&qi, &ui, &validation, &[], 3).is_err());
}
