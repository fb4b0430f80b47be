//! Hyperparameter sweeps selected on validation recall.

use std::fmt::Write as _;

use log::info;

use crate::config::{Config, TrainSettings};
use crate::content::FeatureContext;
use crate::data::Triple;
use crate::error::{Error, Result};
use crate::eval::{recall_at_k, EvalReport, LcrScorer};
use crate::model::{Dims, Model};
use crate::training::{train, TrainHistory};

/// Entity counts and feature dimensions of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataShape {
    pub num_queries: usize,
    pub num_users: usize,
    pub num_items: usize,
    pub item_feature_dim: usize,
    pub query_feature_dim: usize,
}

impl DataShape {
    pub fn new(num_queries: usize, num_users: usize, num_items: usize) -> Self {
        DataShape { num_queries, num_users, num_items, item_feature_dim: 0, query_feature_dim: 0 }
    }
}

/// Fresh model for `settings`, seeded by `settings.train.seed`.
pub fn build_model(settings: &TrainSettings, shape: &DataShape) -> Result<Model> {
    let dims = Dims::new(settings.dim, shape.num_queries, shape.num_users, shape.num_items)
        .with_item_features(shape.item_feature_dim)
        .with_query_features(shape.query_feature_dim)
        .with_lowrank_rank(settings.effective_lowrank_rank());
    Model::new(dims, settings.variant, settings.train.constraint, settings.train.seed)?
        .with_task(settings.task)
        .with_layout(settings.layout)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub learning_rates: Vec<f64>,
    pub constraints: Vec<f64>,
    pub dims: Vec<usize>,
    /// Mixing weights for the mixed baseline.
    pub gammas: Vec<f64>,
    /// Selection metric is validation recall@k.
    pub k: usize,
}

pub const GRID_KEYS: &[&str] = &["lr", "C", "dim", "gamma", "k"];
pub const DEFAULT_SELECTION_K: usize = 30;

impl GridSpec {
    /// Single-point grid at the base settings.
    pub fn single(base: &TrainSettings) -> GridSpec {
        GridSpec {
            learning_rates: vec![base.train.learning_rate],
            constraints: vec![base.train.constraint],
            dims: vec![base.dim],
            gammas: crate::baselines::GAMMA_GRID.to_vec(),
            k: DEFAULT_SELECTION_K,
        }
    }

    /// Reads `[grid]`; absent lists fall back to the base settings.
    pub fn from_config(config: &Config, base: &TrainSettings) -> Result<GridSpec> {
        config.check_keys("grid", GRID_KEYS)?;
        let mut spec = GridSpec::single(base);
        if let Some(v) = config.parse_list("grid", "lr")? {
            spec.learning_rates = v;
        }
        if let Some(v) = config.parse_list("grid", "C")? {
            spec.constraints = v;
        }
        if let Some(v) = config.parse_list("grid", "dim")? {
            spec.dims = v;
        }
        if let Some(v) = config.parse_list("grid", "gamma")? {
            spec.gammas = v;
        }
        if let Some(k) = config.parse_value("grid", "k")? {
            spec.k = k;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() || self.constraints.is_empty() || self.dims.is_empty() {
            return Err(Error::InvalidConfig("empty grid".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("selection k must be at least 1".into()));
        }
        Ok(())
    }

    /// Grid points in lr-major, then C, then dim order.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.learning_rates.len() * self.constraints.len() * self.dims.len());
        for &learning_rate in &self.learning_rates {
            for &constraint in &self.constraints {
                for &dim in &self.dims {
                    out.push(GridPoint { learning_rate, constraint, dim });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub learning_rate: f64,
    pub constraint: f64,
    pub dim: usize,
}

impl GridPoint {
    pub fn apply(&self, base: &TrainSettings) -> TrainSettings {
        let mut s = base.clone();
        s.train.learning_rate = self.learning_rate;
        s.train.constraint = self.constraint;
        s.dim = self.dim;
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub point: GridPoint,
    pub validation_recall: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub k: usize,
    pub rows: Vec<GridRow>,
    /// Index into `rows` of the selected point.
    pub best: usize,
    pub model: Model,
    pub history: TrainHistory,
    /// Winner evaluated on the test split, when one is given.
    pub test: Option<EvalReport>,
}

impl GridOutcome {
    pub fn render_table(&self) -> String {
        let mut out = format!("{:>10} {:>8} {:>5} {:>10}\n", "lr", "C", "dim", format!("val R@{}", self.k));
        for (i, row) in self.rows.iter().enumerate() {
            let mark = if i == self.best { " *" } else { "" };
            let _ = writeln!(
                out,
                "{:>10} {:>8} {:>5} {:>9.2}%{}",
                row.point.learning_rate,
                row.point.constraint,
                row.point.dim,
                100.0 * row.validation_recall,
                mark
            );
        }
        out
    }
}

/// Trains every grid point on `train_set`, keeps the one with the highest
/// validation recall@k (earliest point on ties) and evaluates it on
/// `test` with `test_ks`.
#[allow(clippy::too_many_arguments)]
pub fn experiment_grid(
    base: &TrainSettings,
    spec: &GridSpec,
    shape: &DataShape,
    train_set: &[Triple],
    validation: &[Triple],
    test: &[Triple],
    test_ks: &[usize],
    ctx: FeatureContext<'_>,
) -> Result<GridOutcome> {
    spec.validate()?;
    if validation.is_empty() {
        return Err(Error::EmptyDataset("validation set"));
    }
    let mut rows: Vec<GridRow> = Vec::new();
    let mut best: Option<(usize, Model, TrainHistory)> = None;
    for point in spec.points() {
        let mut settings = point.apply(base);
        settings.train.validation_k = spec.k;
        let model = build_model(&settings, shape)?;
        let (model, history) = train(model, train_set, validation, ctx, &settings.train)?;
        let recall = history.best.as_ref().map_or(0.0, |b| b.recall);
        info!(
            "grid lr={} C={} dim={}: validation recall@{} = {:.4}",
            point.learning_rate, point.constraint, point.dim, spec.k, recall
        );
        let better = best.as_ref().is_none_or(|(i, _, _)| recall > rows[*i].validation_recall);
        rows.push(GridRow { point, validation_recall: recall, steps: history.total_steps });
        if better {
            best = Some((rows.len() - 1, model, history));
        }
    }
    let (best, model, history) = best.expect("non-empty grid");
    let test = if test.is_empty() {
        None
    } else {
        Some(recall_at_k(&LcrScorer::new(&model, ctx)?, test, test_ks)?)
    };
    Ok(GridOutcome { k: spec.k, rows, best, model, history, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_enumerate_product() {
        let spec = GridSpec {
            learning_rates: vec![0.1, 0.01],
            constraints: vec![1.0, 2.0, 4.0],
            dims: vec![5, 10],
            gammas: vec![],
            k: 30,
        };
        let pts = spec.points();
        assert_eq!(pts.len(), 12);
        assert_eq!(pts[0], GridPoint { learning_rate: 0.1, constraint: 1.0, dim: 5 });
        assert_eq!(pts[11], GridPoint { learning_rate: 0.01, constraint: 4.0, dim: 10 });
    }

    #[test]
    fn from_config_and_empty() {
        let base = TrainSettings::default();
        let c: Config = "[grid]\nlr = 0.1, 0.2\nk = 10\n".parse().unwrap();
        let spec = GridSpec::from_config(&c, &base).unwrap();
        assert_eq!(spec.learning_rates, vec![0.1, 0.2]);
        assert_eq!(spec.dims, vec![base.dim]);
        assert_eq!(spec.k, 10);

        let mut empty = spec.clone();
        empty.dims.clear();
        assert!(empty.validate().is_err());
        let c: Config = "[grid]\nbogus = 1\n".parse().unwrap();
        assert!(GridSpec::from_config(&c, &base).is_err());
    }
}
