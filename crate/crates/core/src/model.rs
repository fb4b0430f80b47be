//! Factorized query x user x item scoring models.
//!
//! A model scores an item `d` for a query `q` and user `u` as
//!
//! ```text
//! f(q, u, d) = (S_q^T U_u + V_u^T) T_d
//! ```
//!
//! where `S`, `T` and `V` hold one `n`-dimensional embedding column per
//! query, item and user, and `U_u` is a per-user linear map of the
//! embedding space. The map can be a full matrix, the identity (which
//! splits the score into separate query x item and user x item terms), a
//! diagonal rescaling, or a low-rank-plus-diagonal matrix.
//!
//! All matrices are stored column-major with one column per entity, so
//! `col(&model.items, d)` is the embedding `T_d`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, IdKind, Result};
use crate::linalg::{axpy, col, dot, project_columns};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// Embedding dimension `n`.
    pub dim: usize,
    pub num_queries: usize,
    pub num_users: usize,
    pub num_items: usize,
    /// Item content feature dimension, 0 when items carry no features.
    pub item_feature_dim: usize,
    /// Query content feature dimension, 0 when queries carry no features.
    pub query_feature_dim: usize,
    /// Rank of the low-rank user factor; 0 unless the low-rank variant is used.
    pub lowrank_rank: usize,
}

impl Dims {
    pub fn new(dim: usize, num_queries: usize, num_users: usize, num_items: usize) -> Self {
        Dims {
            dim,
            num_queries,
            num_users,
            num_items,
            item_feature_dim: 0,
            query_feature_dim: 0,
            lowrank_rank: 0,
        }
    }

    pub fn with_item_features(mut self, dim: usize) -> Self {
        self.item_feature_dim = dim;
        self
    }

    pub fn with_query_features(mut self, dim: usize) -> Self {
        self.query_feature_dim = dim;
        self
    }

    pub fn with_lowrank_rank(mut self, rank: usize) -> Self {
        self.lowrank_rank = rank;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("dim", self.dim),
            ("num_queries", self.num_queries),
            ("num_users", self.num_users),
            ("num_items", self.num_items),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::InvalidDims(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Default rank of the low-rank user factor: `ceil(n / 4)`.
pub fn default_lowrank_rank(dim: usize) -> usize {
    dim.div_ceil(4).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Full,
    Identity,
    Diagonal,
    LowRankPlusDiag,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Identity => "identity",
            Variant::Diagonal => "diagonal",
            Variant::LowRankPlusDiag => "lowrank",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "full" => Some(Variant::Full),
            "identity" => Some(Variant::Identity),
            "diagonal" => Some(Variant::Diagonal),
            "lowrank" => Some(Variant::LowRankPlusDiag),
            _ => None,
        }
    }
}

/// Which terms of the score take part.
///
/// `QueryItem` keeps only the query/item match `S_q^T T_d`, `UserItem`
/// keeps only the user/item bias `V_u^T T_d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Task {
    #[default]
    QueryUserItem,
    QueryItem,
    UserItem,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::QueryUserItem => "qui",
            Task::QueryItem => "qi",
            Task::UserItem => "ui",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        match s {
            "qui" => Some(Task::QueryUserItem),
            "qi" => Some(Task::QueryItem),
            "ui" => Some(Task::UserItem),
            _ => None,
        }
    }
}

/// How one side (query or item) is embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Representation {
    /// Indexed embedding column (`S_q` or `T_d`).
    #[default]
    Index,
    /// Content features mapped through `W_Q` or `W_D`.
    Features,
    /// Sum of the indexed column and the mapped features.
    Both,
}

impl Representation {
    pub fn uses_index(self) -> bool {
        matches!(self, Representation::Index | Representation::Both)
    }

    pub fn uses_features(self) -> bool {
        matches!(self, Representation::Features | Representation::Both)
    }

    pub fn name(self) -> &'static str {
        match self {
            Representation::Index => "id",
            Representation::Features => "features",
            Representation::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Representation> {
        match s {
            "id" => Some(Representation::Index),
            "features" => Some(Representation::Features),
            "both" => Some(Representation::Both),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Layout {
    pub query: Representation,
    pub item: Representation,
}

impl Layout {
    pub fn collaborative() -> Self {
        Layout::default()
    }

    pub fn uses_features(&self) -> bool {
        self.query.uses_features() || self.item.uses_features()
    }
}

/// Per-user transform parameters for every user.
#[derive(Debug, Clone, PartialEq)]
pub enum UserTransforms {
    Identity,
    /// One `n x n` matrix per user.
    Full(Vec<DMatrix<f64>>),
    /// Column `u` holds user `u`'s diagonal.
    Diagonal(DMatrix<f64>),
    LowRankPlusDiag {
        /// One `r x n` factor per user.
        factors: Vec<DMatrix<f64>>,
        /// Column `u` holds user `u`'s diagonal.
        diag: DMatrix<f64>,
    },
}

impl UserTransforms {
    pub fn variant(&self) -> Variant {
        match self {
            UserTransforms::Identity => Variant::Identity,
            UserTransforms::Full(_) => Variant::Full,
            UserTransforms::Diagonal(_) => Variant::Diagonal,
            UserTransforms::LowRankPlusDiag { .. } => Variant::LowRankPlusDiag,
        }
    }

    /// Total number of stored reals.
    pub fn num_params(&self) -> usize {
        match self {
            UserTransforms::Identity => 0,
            UserTransforms::Full(ms) => ms.iter().map(|m| m.len()).sum(),
            UserTransforms::Diagonal(d) => d.len(),
            UserTransforms::LowRankPlusDiag { factors, diag } => {
                factors.iter().map(|m| m.len()).sum::<usize>() + diag.len()
            }
        }
    }

    pub fn get(&self, user: usize) -> UserTransform<'_> {
        match self {
            UserTransforms::Identity => UserTransform::Identity,
            UserTransforms::Full(ms) => UserTransform::Full(&ms[user]),
            UserTransforms::Diagonal(d) => UserTransform::Diagonal(col(d, user)),
            UserTransforms::LowRankPlusDiag { factors, diag } => UserTransform::LowRankPlusDiag {
                factor: &factors[user],
                diag: col(diag, user),
            },
        }
    }
}

/// Borrowed view of a single user's transform `U_u`.
#[derive(Debug, Clone, Copy)]
pub enum UserTransform<'a> {
    Identity,
    Full(&'a DMatrix<f64>),
    Diagonal(&'a [f64]),
    LowRankPlusDiag {
        factor: &'a DMatrix<f64>,
        diag: &'a [f64],
    },
}

impl UserTransform<'_> {
    fn check_len(&self, len: usize) -> Result<()> {
        let expected = match self {
            UserTransform::Identity => return Ok(()),
            UserTransform::Full(m) => m.ncols(),
            UserTransform::Diagonal(d) => d.len(),
            UserTransform::LowRankPlusDiag { factor, diag } => {
                if factor.ncols() != diag.len() {
                    return Err(Error::DimensionMismatch {
                        expected: diag.len(),
                        got: factor.ncols(),
                    });
                }
                diag.len()
            }
        };
        if expected != len {
            return Err(Error::DimensionMismatch { expected, got: len });
        }
        Ok(())
    }

    /// Computes `U_u x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        Ok(match self {
            UserTransform::Full(m) => {
                let n = m.nrows();
                let mut out = vec![0.0; n];
                for (j, &xj) in x.iter().enumerate() {
                    axpy(xj, col(m, j), &mut out);
                }
                out
            }
            _ => self.apply_symmetric(x),
        })
    }

    /// Computes `U_u^T x`.
    pub fn apply_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        Ok(self.apply_transpose_unchecked(x))
    }

    pub(crate) fn apply_transpose_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match self {
            UserTransform::Full(m) => (0..m.ncols()).map(|j| dot(col(m, j), x)).collect(),
            _ => self.apply_symmetric(x),
        }
    }

    fn apply_symmetric(&self, x: &[f64]) -> Vec<f64> {
        match self {
            UserTransform::Identity => x.to_vec(),
            UserTransform::Diagonal(d) => d.iter().zip(x).map(|(a, b)| a * b).collect(),
            UserTransform::LowRankPlusDiag { factor, diag } => {
                // (L^T L + D) x with L stored r x n
                let projected = *factor * nalgebra::DVector::from_column_slice(x);
                let mut out: Vec<f64> = diag.iter().zip(x).map(|(a, b)| a * b).collect();
                for (j, o) in out.iter_mut().enumerate() {
                    *o += dot(col(factor, j), projected.as_slice());
                }
                out
            }
            UserTransform::Full(_) => unreachable!("full transform is not symmetric"),
        }
    }

    /// Dense `n x n` form of the transform.
    pub fn to_dense(&self, dim: usize) -> DMatrix<f64> {
        match self {
            UserTransform::Identity => DMatrix::identity(dim, dim),
            UserTransform::Full(m) => (*m).clone(),
            UserTransform::Diagonal(d) => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)),
            UserTransform::LowRankPlusDiag { factor, diag } => {
                factor.transpose() * *factor
                    + DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag))
            }
        }
    }
}

/// Scores of every item for one `(q, u)` pair; index `i` holds `f(q, u, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Learned parameters of a latent collaborative retrieval model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub dims: Dims,
    pub task: Task,
    pub layout: Layout,
    /// Radius `C` of the norm ball for embedding columns.
    pub constraint: f64,
    /// `S`, `n x |Q|`.
    pub queries: DMatrix<f64>,
    /// `T`, `n x |D|`.
    pub items: DMatrix<f64>,
    /// `V`, `n x |U|`.
    pub users: DMatrix<f64>,
    pub transforms: UserTransforms,
    /// `W_D`, `n x n_D`.
    pub item_map: Option<DMatrix<f64>>,
    /// `W_Q`, `n x n_Q`.
    pub query_map: Option<DMatrix<f64>>,
}

impl Model {
    /// Creates a randomly initialized model.
    ///
    /// Every parameter is drawn i.i.d. from `N(0, 1/n)`, then the embedding
    /// columns are projected onto the ball of radius `constraint`. Feature
    /// maps are allocated when the matching feature dimension is non-zero.
    pub fn new(dims: Dims, variant: Variant, constraint: f64, seed: u64) -> Result<Model> {
        dims.validate()?;
        if !(constraint > 0.0 && constraint.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "constraint C must be positive, got {constraint}"
            )));
        }
        let mut dims = dims;
        if variant == Variant::LowRankPlusDiag && dims.lowrank_rank == 0 {
            dims.lowrank_rank = default_lowrank_rank(dims.dim);
        } else if variant != Variant::LowRankPlusDiag {
            dims.lowrank_rank = 0;
        }

        let n = dims.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (n as f64).sqrt()).expect("finite std");
        let mut random = |rows: usize, cols: usize| {
            DMatrix::from_fn(rows, cols, |_, _| normal.sample(&mut rng))
        };

        let queries = random(n, dims.num_queries);
        let items = random(n, dims.num_items);
        let users = random(n, dims.num_users);
        let transforms = match variant {
            Variant::Identity => UserTransforms::Identity,
            Variant::Full => UserTransforms::Full((0..dims.num_users).map(|_| random(n, n)).collect()),
            Variant::Diagonal => UserTransforms::Diagonal(random(n, dims.num_users)),
            Variant::LowRankPlusDiag => {
                let factors = (0..dims.num_users)
                    .map(|_| random(dims.lowrank_rank, n))
                    .collect();
                let diag = random(n, dims.num_users);
                UserTransforms::LowRankPlusDiag { factors, diag }
            }
        };
        let item_map = (dims.item_feature_dim > 0).then(|| random(n, dims.item_feature_dim));
        let query_map = (dims.query_feature_dim > 0).then(|| random(n, dims.query_feature_dim));

        let mut model = Model {
            dims,
            task: Task::default(),
            layout: Layout::default(),
            constraint,
            queries,
            items,
            users,
            transforms,
            item_map,
            query_map,
        };
        model.project(true);
        Ok(model)
    }

    pub fn with_task(mut self, task: Task) -> Self {
        self.task = task;
        self
    }

    /// Sets how queries and items are embedded; the needed feature maps
    /// must exist.
    pub fn with_layout(mut self, layout: Layout) -> Result<Self> {
        if layout.item.uses_features() && self.item_map.is_none() {
            return Err(Error::MissingComponent("item feature map W_D"));
        }
        if layout.query.uses_features() && self.query_map.is_none() {
            return Err(Error::MissingComponent("query feature map W_Q"));
        }
        self.layout = layout;
        Ok(self)
    }

    pub fn variant(&self) -> Variant {
        self.transforms.variant()
    }

    pub fn dim(&self) -> usize {
        self.dims.dim
    }

    pub fn num_items(&self) -> usize {
        self.dims.num_items
    }

    /// Projects embedding columns of `S`, `T`, `V` (and, when
    /// `include_feature_maps`, of `W_D`, `W_Q`) onto the constraint ball.
    /// User transforms are never touched.
    pub fn project(&mut self, include_feature_maps: bool) {
        let c = self.constraint;
        project_columns(&mut self.queries, c);
        project_columns(&mut self.items, c);
        project_columns(&mut self.users, c);
        if include_feature_maps {
            if let Some(m) = self.item_map.as_mut() {
                project_columns(m, c);
            }
            if let Some(m) = self.query_map.as_mut() {
                project_columns(m, c);
            }
        }
    }

    pub fn check_query(&self, q: usize) -> Result<()> {
        check_id(IdKind::Query, q, self.dims.num_queries)
    }

    pub fn check_user(&self, u: usize) -> Result<()> {
        check_id(IdKind::User, u, self.dims.num_users)
    }

    pub fn check_item(&self, d: usize) -> Result<()> {
        check_id(IdKind::Item, d, self.dims.num_items)
    }

    pub fn user_transform(&self, u: usize) -> UserTransform<'_> {
        self.transforms.get(u)
    }

    /// Left factor `U_u^T a + V_u` for a query embedding `a`, restricted to
    /// the terms of the model's task. Scores are `left . item_embedding`.
    pub fn left_factor(&self, u: usize, query_embedding: &[f64]) -> Vec<f64> {
        self.left_factor_for(self.task, u, query_embedding)
    }

    pub(crate) fn left_factor_for(&self, task: Task, u: usize, query_embedding: &[f64]) -> Vec<f64> {
        match task {
            Task::QueryUserItem => {
                let mut left = self.user_transform(u).apply_transpose_unchecked(query_embedding);
                axpy(1.0, col(&self.users, u), &mut left);
                left
            }
            Task::QueryItem => query_embedding.to_vec(),
            Task::UserItem => col(&self.users, u).to_vec(),
        }
    }

    /// `f(q, u, d) = (S_q^T U_u + V_u^T) T_d`.
    pub fn score(&self, q: usize, u: usize, d: usize) -> Result<f64> {
        self.check_query(q)?;
        self.check_user(u)?;
        self.check_item(d)?;
        let left = self.left_factor(u, col(&self.queries, q));
        Ok(dot(&left, col(&self.items, d)))
    }

    /// Scores every item for `(q, u)`, computing the left factor once.
    pub fn score_all(&self, q: usize, u: usize) -> Result<ScoreVector> {
        self.check_query(q)?;
        self.check_user(u)?;
        let left = self.left_factor(u, col(&self.queries, q));
        Ok(ScoreVector(score_columns(&left, &self.items)))
    }

    /// Margin-based rank of item `d`: the number of items `j != d` with
    /// `f(q, u, j) + 1 >= f(q, u, d)`.
    pub fn exact_rank(&self, q: usize, u: usize, d: usize) -> Result<usize> {
        self.check_item(d)?;
        let scores = self.score_all(q, u)?;
        Ok(margin_rank(scores.as_slice(), d))
    }
}

/// `left . T_i` for every column `i` of `items`.
pub fn score_columns(left: &[f64], items: &DMatrix<f64>) -> Vec<f64> {
    let n = items.nrows();
    items.as_slice().chunks(n).map(|t| dot(left, t)).collect()
}

/// Counts `j != positive` with `scores[j] + 1 >= scores[positive]`.
pub fn margin_rank(scores: &[f64], positive: usize) -> usize {
    let target = scores[positive];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| j != positive && 1.0 + s >= target)
        .count()
}

pub(crate) fn check_id(kind: IdKind, id: usize, count: usize) -> Result<()> {
    if id < count {
        Ok(())
    } else {
        Err(Error::IdOutOfRange { kind, id, count })
    }
}
