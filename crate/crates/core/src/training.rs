//! SGD training with the WARP and AUC ranking losses.
//!
//! Each step draws a training triple `(q, u, d)` and looks for a negative
//! item `j` whose score violates the margin, `1 - f(q,u,d) + f(q,u,j) > 0`.
//! WARP keeps drawing negatives until it finds one and estimates the rank
//! of `d` from the number of draws `N` as `floor((|D| - 1) / N)`; the
//! violation is then weighted by `L(rank) = sum_{i <= rank} alpha_i`. AUC
//! draws a single negative and uses weight 1. After every step the touched
//! embedding columns are projected back onto the norm ball of radius `C`.

use std::time::Instant;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::content::FeatureContext;
use crate::data::Triple;
use crate::error::{Error, Result};
use crate::eval::{recall_at_k, LcrScorer};
use crate::linalg::{axpy, col, col_mut, dot, project_to_ball};
use crate::model::{Model, Task, UserTransforms};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    Warp,
    Auc,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Warp => "warp",
            LossKind::Auc => "auc",
        }
    }

    pub fn parse(s: &str) -> Option<LossKind> {
        match s {
            "warp" => Some(LossKind::Warp),
            "auc" => Some(LossKind::Auc),
            _ => None,
        }
    }
}

/// Position weights `alpha_i` of the rank loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlphaScheme {
    /// `alpha_i = 1 / i`
    #[default]
    Harmonic,
    /// `alpha_i = 1`
    Uniform,
}

impl AlphaScheme {
    pub fn name(self) -> &'static str {
        match self {
            AlphaScheme::Harmonic => "harmonic",
            AlphaScheme::Uniform => "uniform",
        }
    }

    pub fn parse(s: &str) -> Option<AlphaScheme> {
        match s {
            "harmonic" => Some(AlphaScheme::Harmonic),
            "uniform" => Some(AlphaScheme::Uniform),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub learning_rate: f64,
    /// Norm-ball radius `C` for embedding columns.
    pub constraint: f64,
    /// Cap on negative draws per WARP step; `None` means `|D| - 1`.
    pub max_sample_trials: Option<usize>,
    pub epochs: usize,
    pub seed: u64,
    pub alpha: AlphaScheme,
    /// Steps between validation passes; `None` means once per epoch.
    pub validation_every: Option<usize>,
    /// Validation rounds without improvement before stopping; 0 disables
    /// early stopping.
    pub patience: usize,
    /// Cut-off `k` of the validation recall.
    pub validation_k: usize,
    /// Evaluate on at most this many validation triples.
    pub validation_limit: Option<usize>,
    /// Also project the columns of `W_D` and `W_Q`.
    pub project_feature_maps: bool,
    /// Scale the step size by the triple weight `y` when present.
    pub use_triple_weight: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Warp,
            learning_rate: 0.1,
            constraint: 1.0,
            max_sample_trials: None,
            epochs: 10,
            seed: 0,
            alpha: AlphaScheme::Harmonic,
            validation_every: None,
            patience: 3,
            validation_k: 10,
            validation_limit: None,
            project_feature_maps: true,
            use_triple_weight: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, num_items: usize) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.constraint > 0.0 && self.constraint.is_finite()) {
            return Err(Error::InvalidConfig("constraint C must be positive".into()));
        }
        if let Some(m) = self.max_sample_trials {
            if m == 0 || m > num_items.saturating_sub(1).max(1) {
                return Err(Error::InvalidConfig(format!(
                    "max_sample_trials must lie in [1, {}], got {m}",
                    num_items.saturating_sub(1)
                )));
            }
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.validation_every == Some(0) {
            return Err(Error::InvalidConfig("validation_every must be at least 1".into()));
        }
        if self.validation_k == 0 {
            return Err(Error::InvalidConfig("validation k must be at least 1".into()));
        }
        Ok(())
    }

    fn trials_cap(&self, num_items: usize) -> usize {
        let exhaustive = num_items.saturating_sub(1);
        self.max_sample_trials.unwrap_or(exhaustive).min(exhaustive)
    }
}

/// Outcome of one SGD step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub found_violator: bool,
    /// Negative draws consumed.
    pub trials_used: usize,
    pub estimated_rank: usize,
    pub loss_weight: f64,
    /// `1 - f(q,u,d) + f(q,u,j)` for the chosen negative, 0 without one.
    pub hinge: f64,
}

impl StepInfo {
    fn no_violator(trials_used: usize, hinge: f64) -> Self {
        StepInfo { found_violator: false, trials_used, estimated_rank: 0, loss_weight: 0.0, hinge }
    }
}

/// `floor((num_items - 1) / trials)`.
pub fn estimate_rank(num_items: usize, trials: usize) -> Result<usize> {
    if trials == 0 {
        return Err(Error::InvalidInput("rank estimate needs at least one trial".into()));
    }
    Ok(num_items.saturating_sub(1) / trials)
}

/// `L(r) = sum_{i=1..r} alpha_i`.
pub fn rank_weight(rank: usize, scheme: AlphaScheme) -> f64 {
    match scheme {
        AlphaScheme::Uniform => rank as f64,
        AlphaScheme::Harmonic => (1..=rank).map(|i| 1.0 / i as f64).sum(),
    }
}

/// A margin violator found by sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violator {
    pub item: usize,
    /// Number of negative draws consumed, the last one included.
    pub trials: usize,
}

/// Quantities of one `(q, u, d)` example shared by sampling and the
/// gradient.
struct Prepared {
    query: Vec<f64>,
    left: Vec<f64>,
    positive: Vec<f64>,
    positive_score: f64,
}

fn prepare(model: &Model, triple: &Triple, ctx: &FeatureContext<'_>) -> Result<Prepared> {
    let (q, u, d) = triple.ids();
    model.check_user(u)?;
    let query = model.query_embedding(q, ctx)?;
    let left = model.left_factor(u, &query);
    let positive = model.item_embedding(d, ctx)?;
    let positive_score = dot(&left, &positive);
    Ok(Prepared { query, left, positive, positive_score })
}

fn draw_negative<R: Rng + ?Sized>(rng: &mut R, num_items: usize, positive: usize) -> usize {
    let j = rng.random_range(0..num_items - 1);
    if j >= positive { j + 1 } else { j }
}

fn negative_score(model: &Model, prepared: &Prepared, j: usize, ctx: &FeatureContext<'_>) -> Result<f64> {
    if model.layout.item.uses_features() {
        Ok(dot(&prepared.left, &model.item_embedding(j, ctx)?))
    } else {
        Ok(dot(&prepared.left, col(&model.items, j)))
    }
}

fn sample_prepared<R: Rng + ?Sized>(
    model: &Model,
    prepared: &Prepared,
    positive: usize,
    ctx: &FeatureContext<'_>,
    rng: &mut R,
    max_trials: usize,
) -> Result<Option<(Violator, f64)>> {
    let num_items = model.num_items();
    if num_items < 2 {
        return Ok(None);
    }
    for trial in 1..=max_trials {
        let j = draw_negative(rng, num_items, positive);
        let hinge = 1.0 - prepared.positive_score + negative_score(model, prepared, j, ctx)?;
        if hinge > 0.0 {
            return Ok(Some((Violator { item: j, trials: trial }, hinge)));
        }
    }
    Ok(None)
}

/// Draws negatives uniformly from the items other than `d` until one
/// violates the margin, giving up after `max_trials` draws.
pub fn sample_violator<R: Rng + ?Sized>(
    model: &Model,
    triple: &Triple,
    ctx: &FeatureContext<'_>,
    rng: &mut R,
    max_trials: usize,
) -> Result<Option<Violator>> {
    if max_trials == 0 {
        return Err(Error::InvalidInput("max_trials must be at least 1".into()));
    }
    let prepared = prepare(model, triple, ctx)?;
    Ok(sample_prepared(model, &prepared, triple.d as usize, ctx, rng, max_trials)?.map(|(v, _)| v))
}

/// A parameter block: one embedding column or one user's transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Param {
    Query(usize),
    Item(usize),
    User(usize),
    /// The full `n x n` matrix, or the `r x n` low-rank factor.
    TransformFactor(usize),
    /// The diagonal of a diagonal or low-rank-plus-diagonal transform.
    TransformDiag(usize),
    ItemMap(usize),
    QueryMap(usize),
}

/// Gradient of a pairwise surrogate, one entry per touched block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradient {
    pub entries: Vec<(Param, Vec<f64>)>,
}

impl Gradient {
    fn add(&mut self, param: Param, scale: f64, values: &[f64]) {
        if scale == 0.0 {
            return;
        }
        match self.entries.iter_mut().find(|(p, _)| *p == param) {
            Some((_, g)) => axpy(scale, values, g),
            None => self.entries.push((param, values.iter().map(|v| scale * v).collect())),
        }
    }

    pub fn get(&self, param: Param) -> Option<&[f64]> {
        self.entries.iter().find(|(p, _)| *p == param).map(|(_, g)| g.as_slice())
    }
}

impl Model {
    /// Parameter values of a block.
    pub fn param(&self, param: Param) -> Option<&[f64]> {
        match param {
            Param::Query(q) => (q < self.dims.num_queries).then(|| col(&self.queries, q)),
            Param::Item(d) => (d < self.dims.num_items).then(|| col(&self.items, d)),
            Param::User(u) => (u < self.dims.num_users).then(|| col(&self.users, u)),
            Param::ItemMap(i) => self.item_map.as_ref().filter(|m| i < m.ncols()).map(|m| col(m, i)),
            Param::QueryMap(i) => self.query_map.as_ref().filter(|m| i < m.ncols()).map(|m| col(m, i)),
            Param::TransformFactor(u) => match &self.transforms {
                UserTransforms::Full(ms) => ms.get(u).map(|m| m.as_slice()),
                UserTransforms::LowRankPlusDiag { factors, .. } => factors.get(u).map(|m| m.as_slice()),
                _ => None,
            },
            Param::TransformDiag(u) => match &self.transforms {
                UserTransforms::Diagonal(d) | UserTransforms::LowRankPlusDiag { diag: d, .. } => {
                    (u < d.ncols()).then(|| col(d, u))
                }
                _ => None,
            },
        }
    }

    pub fn param_mut(&mut self, param: Param) -> Option<&mut [f64]> {
        match param {
            Param::Query(q) => (q < self.dims.num_queries).then(|| col_mut(&mut self.queries, q)),
            Param::Item(d) => (d < self.dims.num_items).then(|| col_mut(&mut self.items, d)),
            Param::User(u) => (u < self.dims.num_users).then(|| col_mut(&mut self.users, u)),
            Param::ItemMap(i) => self.item_map.as_mut().filter(|m| i < m.ncols()).map(|m| col_mut(m, i)),
            Param::QueryMap(i) => self.query_map.as_mut().filter(|m| i < m.ncols()).map(|m| col_mut(m, i)),
            Param::TransformFactor(u) => match &mut self.transforms {
                UserTransforms::Full(ms) => ms.get_mut(u).map(|m| m.as_mut_slice()),
                UserTransforms::LowRankPlusDiag { factors, .. } => factors.get_mut(u).map(|m| m.as_mut_slice()),
                _ => None,
            },
            Param::TransformDiag(u) => match &mut self.transforms {
                UserTransforms::Diagonal(d) | UserTransforms::LowRankPlusDiag { diag: d, .. } => {
                    (u < d.ncols()).then(|| col_mut(d, u))
                }
                _ => None,
            },
        }
    }
}

fn is_constrained(param: Param, include_feature_maps: bool) -> bool {
    match param {
        Param::Query(_) | Param::Item(_) | Param::User(_) => true,
        Param::ItemMap(_) | Param::QueryMap(_) => include_feature_maps,
        Param::TransformFactor(_) | Param::TransformDiag(_) => false,
    }
}

fn pair_gradient_prepared(
    model: &Model,
    triple: &Triple,
    prepared: &Prepared,
    negative: usize,
    negative_embedding: &[f64],
    ctx: &FeatureContext<'_>,
    weight: f64,
) -> Gradient {
    let (q, u, d) = triple.ids();
    let n = model.dim();
    let a = &prepared.query;
    let left = &prepared.left;
    // b = e_d - e_j; the surrogate is w * (1 - left . b)
    let b: Vec<f64> = prepared.positive.iter().zip(negative_embedding).map(|(p, m)| p - m).collect();
    let mut grad = Gradient::default();

    // gradient w.r.t. the query embedding a, if the task uses it
    let mut grad_query: Option<Vec<f64>> = None;
    match model.task {
        Task::QueryUserItem => {
            grad.add(Param::User(u), -weight, &b);
            let transform = model.user_transform(u);
            let ub = transform.apply(&b).expect("dimension checked by prepare");
            grad_query = Some(ub.iter().map(|x| -weight * x).collect());
            match &model.transforms {
                UserTransforms::Identity => {}
                UserTransforms::Full(_) => {
                    // d(a^T U b)/dU = a b^T, column-major
                    let mut g = vec![0.0; n * n];
                    for (j, &bj) in b.iter().enumerate() {
                        axpy(-weight * bj, a, &mut g[j * n..(j + 1) * n]);
                    }
                    grad.add(Param::TransformFactor(u), 1.0, &g);
                }
                UserTransforms::Diagonal(_) => {
                    let g: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
                    grad.add(Param::TransformDiag(u), -weight, &g);
                }
                UserTransforms::LowRankPlusDiag { factors, .. } => {
                    // a^T L^T L b: d/dL = (L b) a^T + (L a) b^T
                    let factor = &factors[u];
                    let r = factor.nrows();
                    let la = factor * nalgebra::DVector::from_column_slice(a);
                    let lb = factor * nalgebra::DVector::from_column_slice(&b);
                    let mut g = vec![0.0; r * n];
                    for j in 0..n {
                        for k in 0..r {
                            g[j * r + k] = -weight * (lb[k] * a[j] + la[k] * b[j]);
                        }
                    }
                    grad.add(Param::TransformFactor(u), 1.0, &g);
                    let gd: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
                    grad.add(Param::TransformDiag(u), -weight, &gd);
                }
            }
        }
        Task::QueryItem => {
            grad_query = Some(b.iter().map(|x| -weight * x).collect());
        }
        Task::UserItem => {
            grad.add(Param::User(u), -weight, &b);
        }
    }

    if let Some(gq) = grad_query {
        if model.layout.query.uses_index() {
            grad.add(Param::Query(q), 1.0, &gq);
        }
        if model.layout.query.uses_features() {
            if let Some(f) = ctx.queries.and_then(|c| c.get(q)) {
                for (i, v) in f.iter() {
                    grad.add(Param::QueryMap(i), v, &gq);
                }
            }
        }
    }

    // item side: d/de_d = -w left, d/de_j = +w left
    if model.layout.item.uses_index() {
        grad.add(Param::Item(d), -weight, left);
        grad.add(Param::Item(negative), weight, left);
    }
    if model.layout.item.uses_features() {
        if let Some(items) = ctx.items {
            if let Some(f) = items.get(d) {
                for (i, v) in f.iter() {
                    grad.add(Param::ItemMap(i), -weight * v, left);
                }
            }
            if let Some(f) = items.get(negative) {
                for (i, v) in f.iter() {
                    grad.add(Param::ItemMap(i), weight * v, left);
                }
            }
        }
    }
    grad
}

/// Analytic gradient of `weight * (1 - f(q,u,d) + f(q,u,negative))` with
/// respect to every parameter block it touches. The weight is a constant.
pub fn pair_gradient(
    model: &Model,
    triple: &Triple,
    negative: usize,
    ctx: &FeatureContext<'_>,
    weight: f64,
) -> Result<Gradient> {
    let prepared = prepare(model, triple, ctx)?;
    let neg = model.item_embedding(negative, ctx)?;
    Ok(pair_gradient_prepared(model, triple, &prepared, negative, &neg, ctx, weight))
}

/// `param -= step * grad` for every block, then projects the touched
/// constrained columns.
pub fn apply_gradient(model: &mut Model, grad: &Gradient, step: f64, include_feature_maps: bool) {
    let c = model.constraint;
    for (param, g) in &grad.entries {
        let values = model.param_mut(*param).expect("gradient block exists in model");
        axpy(-step, g, values);
        if is_constrained(*param, include_feature_maps) {
            project_to_ball(values, c);
        }
    }
}

/// Projects every column of `S`, `T`, `V` (and optionally `W_D`, `W_Q`)
/// with norm above `c` back onto the ball of radius `c`. User transforms
/// are left unconstrained.
pub fn project_constraints(model: &mut Model, c: f64, include_feature_maps: bool) {
    model.constraint = c;
    model.project(include_feature_maps);
}

fn step_size(config: &TrainConfig, triple: &Triple) -> f64 {
    match (config.use_triple_weight, triple.y) {
        (true, Some(y)) => config.learning_rate * y,
        _ => config.learning_rate,
    }
}

/// One WARP step on `triple`.
pub fn sgd_step_warp<R: Rng + ?Sized>(
    model: &mut Model,
    triple: &Triple,
    ctx: &FeatureContext<'_>,
    rng: &mut R,
    config: &TrainConfig,
) -> Result<StepInfo> {
    let num_items = model.num_items();
    let cap = config.trials_cap(num_items);
    warp_step_with(model, triple, ctx, rng, config, cap, |r| rank_weight(r, config.alpha))
}

fn warp_step_with<R: Rng + ?Sized>(
    model: &mut Model,
    triple: &Triple,
    ctx: &FeatureContext<'_>,
    rng: &mut R,
    config: &TrainConfig,
    cap: usize,
    weight_of: impl Fn(usize) -> f64,
) -> Result<StepInfo> {
    let prepared = prepare(model, triple, ctx)?;
    if cap == 0 {
        return Ok(StepInfo::no_violator(0, 0.0));
    }
    let Some((violator, hinge)) = sample_prepared(model, &prepared, triple.d as usize, ctx, rng, cap)? else {
        return Ok(StepInfo::no_violator(cap, 0.0));
    };
    let rank = estimate_rank(model.num_items(), violator.trials)?;
    let weight = weight_of(rank);
    let neg = model.item_embedding(violator.item, ctx)?;
    let grad = pair_gradient_prepared(model, triple, &prepared, violator.item, &neg, ctx, weight);
    apply_gradient(model, &grad, step_size(config, triple), config.project_feature_maps);
    Ok(StepInfo {
        found_violator: true,
        trials_used: violator.trials,
        estimated_rank: rank,
        loss_weight: weight,
        hinge,
    })
}

/// One AUC step: a single uniform negative, unit weight.
pub fn sgd_step_auc<R: Rng + ?Sized>(
    model: &mut Model,
    triple: &Triple,
    ctx: &FeatureContext<'_>,
    rng: &mut R,
    config: &TrainConfig,
) -> Result<StepInfo> {
    let prepared = prepare(model, triple, ctx)?;
    let num_items = model.num_items();
    if num_items < 2 {
        return Ok(StepInfo::no_violator(0, 0.0));
    }
    let j = draw_negative(rng, num_items, triple.d as usize);
    let neg = model.item_embedding(j, ctx)?;
    let hinge = 1.0 - prepared.positive_score + dot(&prepared.left, &neg);
    if hinge <= 0.0 {
        return Ok(StepInfo::no_violator(1, hinge));
    }
    let grad = pair_gradient_prepared(model, triple, &prepared, j, &neg, ctx, 1.0);
    apply_gradient(model, &grad, step_size(config, triple), config.project_feature_maps);
    Ok(StepInfo { found_violator: true, trials_used: 1, estimated_rank: 0, loss_weight: 1.0, hinge })
}

/// Single-writer stepping state over a training set.
pub struct Trainer<'a> {
    model: Model,
    train: &'a [Triple],
    ctx: FeatureContext<'a>,
    config: TrainConfig,
    rng: ChaCha8Rng,
    /// `weights[r] = L(r)`, precomputed for every reachable rank.
    weights: Vec<f64>,
    steps: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(mut model: Model, train: &'a [Triple], ctx: FeatureContext<'a>, config: TrainConfig) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset("training set"));
        }
        config.validate(model.num_items())?;
        ctx.check(&model)?;
        for t in train {
            let (q, u, d) = t.ids();
            model.check_query(q)?;
            model.check_user(u)?;
            model.check_item(d)?;
        }
        project_constraints(&mut model, config.constraint, config.project_feature_maps);

        let num_items = model.num_items();
        let mut weights = Vec::with_capacity(num_items);
        let mut acc = 0.0;
        weights.push(0.0);
        for i in 1..num_items {
            acc += match config.alpha {
                AlphaScheme::Harmonic => 1.0 / i as f64,
                AlphaScheme::Uniform => 1.0,
            };
            weights.push(acc);
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Trainer { model, train, ctx, config, rng, weights, steps: 0 })
    }

    /// Draws a training triple uniformly and applies one step.
    pub fn step(&mut self) -> Result<StepInfo> {
        let idx = self.rng.random_range(0..self.train.len());
        let triple = self.train[idx];
        self.step_on(&triple)
    }

    pub fn step_on(&mut self, triple: &Triple) -> Result<StepInfo> {
        self.steps += 1;
        match self.config.loss {
            LossKind::Warp => {
                let cap = self.config.trials_cap(self.model.num_items());
                let weights = &self.weights;
                warp_step_with(&mut self.model, triple, &self.ctx, &mut self.rng, &self.config, cap, |r| {
                    weights[r.min(weights.len() - 1)]
                })
            }
            LossKind::Auc => sgd_step_auc(&mut self.model, triple, &self.ctx, &mut self.rng, &self.config),
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn into_model(self) -> Model {
        self.model
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub step: usize,
    pub k: usize,
    pub recall: f64,
    pub seconds: f64,
}

/// Validation passes of a training run plus the round whose parameters
/// were returned.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<HistoryRecord>,
    pub best: Option<HistoryRecord>,
    pub total_steps: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    /// `(step, recall)` pairs; wall time excluded.
    pub fn curve(&self) -> Vec<(usize, f64)> {
        self.records.iter().map(|r| (r.step, r.recall)).collect()
    }

    /// CSV with columns `step,split,k,recall,seconds`; the last row, with
    /// split `best`, describes the returned parameters.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,split,k,recall,seconds\n");
        for r in &self.records {
            out.push_str(&format!("{},validation,{},{:.17},{:.3}\n", r.step, r.k, r.recall, r.seconds));
        }
        if let Some(r) = &self.best {
            out.push_str(&format!("{},best,{},{:.17},{:.3}\n", r.step, r.k, r.recall, r.seconds));
        }
        out
    }
}

/// Trains `model` by SGD on `train` for `epochs * |train|` steps.
///
/// With a non-empty validation set, recall@k is measured before the
/// first step and then every `validation_every` steps; training stops
/// after `patience` rounds without strict improvement and the parameters
/// of the best round are returned. Without validation data the final
/// parameters are returned.
pub fn train(
    model: Model,
    train_set: &[Triple],
    validation: &[Triple],
    ctx: FeatureContext<'_>,
    config: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    let start = Instant::now();
    let mut trainer = Trainer::new(model, train_set, ctx, config.clone())?;
    let total_steps = config.epochs * train_set.len();
    let every = config.validation_every.unwrap_or(train_set.len()).max(1);
    let validation = match config.validation_limit {
        Some(limit) => &validation[..validation.len().min(limit)],
        None => validation,
    };

    let mut history = TrainHistory::default();
    if validation.is_empty() {
        for _ in 0..total_steps {
            trainer.step()?;
        }
        history.total_steps = trainer.steps();
        return Ok((trainer.into_model(), history));
    }

    let k = config.validation_k;
    let evaluate = |model: &Model| -> Result<f64> {
        let scorer = LcrScorer::new(model, ctx)?;
        Ok(recall_at_k(&scorer, validation, &[k])?.recall[0])
    };

    let initial = evaluate(trainer.model())?;
    let mut best = HistoryRecord { step: 0, k, recall: initial, seconds: start.elapsed().as_secs_f64() };
    history.records.push(best.clone());
    let mut best_model = trainer.model().clone();
    let mut stale_rounds = 0;

    while trainer.steps() < total_steps {
        let chunk = every.min(total_steps - trainer.steps());
        for _ in 0..chunk {
            trainer.step()?;
        }
        let recall = evaluate(trainer.model())?;
        let record = HistoryRecord { step: trainer.steps(), k, recall, seconds: start.elapsed().as_secs_f64() };
        debug!("step {} validation recall@{} = {:.4}", record.step, k, recall);
        history.records.push(record.clone());
        if recall > best.recall {
            best = record;
            best_model = trainer.model().clone();
            stale_rounds = 0;
        } else {
            stale_rounds += 1;
            if config.patience > 0 && stale_rounds >= config.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    history.total_steps = trainer.steps();
    history.best = Some(best);
    Ok((best_model, history))
}
