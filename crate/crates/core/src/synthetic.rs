//! Planted-factor datasets with a known query x user x item structure.
//!
//! A ground-truth diagonal-transform model is drawn at random; each
//! positive picks a uniform `(q, u)` and then an item uniformly among that
//! pair's `top_k` best-scoring items. User diagonals carry random signs so
//! the user changes which items rank first for a query.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Triple;
use crate::error::{Error, Result};
use crate::grid::DataShape;
use crate::model::{Dims, Model, UserTransforms, Variant};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub dim: usize,
    pub num_queries: usize,
    pub num_users: usize,
    pub num_items: usize,
    pub num_positives: usize,
    /// Positives are drawn from this many best items per `(q, u)`.
    pub top_k: usize,
    /// Standard deviation of the user bias `V`.
    pub bias_scale: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            dim: 5,
            num_queries: 50,
            num_users: 20,
            num_items: 200,
            num_positives: 20_000,
            top_k: 10,
            bias_scale: 0.1,
            validation_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedData {
    pub truth: Model,
    pub train: Vec<Triple>,
    pub validation: Vec<Triple>,
    pub test: Vec<Triple>,
}

impl PlantedData {
    pub fn shape(&self) -> DataShape {
        let d = &self.truth.dims;
        DataShape::new(d.num_queries, d.num_users, d.num_items)
    }
}

pub fn planted_dataset(cfg: &PlantedConfig) -> Result<PlantedData> {
    if cfg.top_k == 0 || cfg.top_k > cfg.num_items {
        return Err(Error::InvalidConfig(format!("top_k must lie in [1, {}]", cfg.num_items)));
    }
    let held_out = cfg.validation_fraction + cfg.test_fraction;
    if !(cfg.validation_fraction >= 0.0 && cfg.test_fraction >= 0.0 && held_out < 1.0) {
        return Err(Error::InvalidConfig("held-out fractions must be non-negative and sum below 1".into()));
    }
    let dims = Dims::new(cfg.dim, cfg.num_queries, cfg.num_users, cfg.num_items);
    let mut truth = Model::new(dims, Variant::Diagonal, f64::MAX, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let gaussian = |rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng| {
        nalgebra::DMatrix::from_fn(rows, cols, |_, _| {
            let g: f64 = StandardNormal.sample(rng);
            scale * g
        })
    };
    truth.queries = gaussian(cfg.dim, cfg.num_queries, 1.0, &mut rng);
    truth.items = gaussian(cfg.dim, cfg.num_items, 1.0, &mut rng);
    truth.users = gaussian(cfg.dim, cfg.num_users, cfg.bias_scale, &mut rng);
    // |entry| in [0.5, 1.5] with a random sign
    let diag = nalgebra::DMatrix::from_fn(cfg.dim, cfg.num_users, |_, _| {
        let magnitude = rng.random_range(0.5..1.5);
        if rng.random_bool(0.5) { magnitude } else { -magnitude }
    });
    truth.transforms = UserTransforms::Diagonal(diag);

    // top items of every (q, u), computed once
    let mut tops = Vec::with_capacity(cfg.num_queries * cfg.num_users);
    for q in 0..cfg.num_queries {
        for u in 0..cfg.num_users {
            let scores = truth.score_all(q, u)?.0;
            let mut order: Vec<usize> = (0..cfg.num_items).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            order.truncate(cfg.top_k);
            tops.push(order);
        }
    }

    let mut triples: Vec<Triple> = (0..cfg.num_positives)
        .map(|_| {
            let q = rng.random_range(0..cfg.num_queries);
            let u = rng.random_range(0..cfg.num_users);
            let top = &tops[q * cfg.num_users + u];
            let d = top[rng.random_range(0..top.len())];
            Triple::new(q as u32, u as u32, d as u32)
        })
        .collect();
    triples.shuffle(&mut rng);
    let n_test = (cfg.test_fraction * triples.len() as f64).round() as usize;
    let n_val = (cfg.validation_fraction * triples.len() as f64).round() as usize;
    let test = triples.split_off(triples.len() - n_test);
    let validation = triples.split_off(triples.len() - n_val);
    Ok(PlantedData { truth, train: triples, validation, test })
}
