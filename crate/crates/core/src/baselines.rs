//! Matrix-factorization and content baselines.
//!
//! SVD and NMF factorize a query x item or user x item co-occurrence
//! matrix. The query x user x item generalization sums the two
//! factorization scores with a mixing weight `gamma` picked on validation
//! data. Content baselines rank by cosine similarity of raw features or of
//! their projection onto the top singular directions of the item-feature
//! matrix (LSI).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::content::{embed, FeatureCatalog, FeatureVector};
use crate::data::Triple;
use crate::error::{Error, IdKind, Result};
use crate::eval::{recall_at_k, Scorer};
use crate::linalg::{col, dot, norm};
use crate::model::{check_id, Task};

/// Sparse matrix as row-major sorted `(row, col, value)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl SparseMatrix {
    /// Builds a matrix from unordered entries; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut entries: Vec<(u32, u32, f64)>) -> Result<SparseMatrix> {
        if let Some(&(r, c, _)) = entries.iter().find(|(r, c, _)| *r as usize >= rows || *c as usize >= cols) {
            return Err(Error::InvalidInput(format!("entry ({r}, {c}) outside a {rows} x {cols} matrix")));
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(u32, u32, f64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        Ok(SparseMatrix { rows, cols, entries: merged })
    }

    pub fn from_dense(m: &DMatrix<f64>) -> SparseMatrix {
        let mut entries = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    entries.push((r as u32, c as u32, m[(r, c)]));
                }
            }
        }
        SparseMatrix { rows: m.nrows(), cols: m.ncols(), entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(row as u32, col as u32), |&(r, c, _)| (r, c))
            .map(|i| self.entries[i].2)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            m[(r as usize, c as usize)] = v;
        }
        m
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|e| e.2 * e.2).sum()
    }

    /// `A x` for a dense `cols x k` matrix.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.cols);
        let mut out = DMatrix::zeros(self.rows, x.ncols());
        for j in 0..x.ncols() {
            let xj = col(x, j);
            let oj = &mut out.as_mut_slice()[j * self.rows..(j + 1) * self.rows];
            for &(r, c, v) in &self.entries {
                oj[r as usize] += v * xj[c as usize];
            }
        }
        out
    }

    /// `A^T x` for a dense `rows x k` matrix.
    pub fn tr_mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.rows);
        let mut out = DMatrix::zeros(self.cols, x.ncols());
        for j in 0..x.ncols() {
            let xj = col(x, j);
            let oj = &mut out.as_mut_slice()[j * self.cols..(j + 1) * self.cols];
            for &(r, c, v) in &self.entries {
                oj[c as usize] += v * xj[r as usize];
            }
        }
        out
    }

    fn map_values(&mut self, f: impl Fn(f64) -> f64) {
        self.entries.iter_mut().for_each(|e| e.2 = f(e.2));
    }

    fn normalize_rows_l1(&mut self) {
        let mut sums = vec![0.0; self.rows];
        for &(r, _, v) in &self.entries {
            sums[r as usize] += v.abs();
        }
        for e in &mut self.entries {
            let s = sums[e.0 as usize];
            if s > 0.0 {
                e.2 /= s;
            }
        }
    }
}

/// Which pair a co-occurrence matrix counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CooccurrenceMode {
    QueryItem,
    UserItem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CooccurrenceOptions {
    /// Apply `log(1 + x)` to the counts.
    pub log_damping: bool,
    /// Scale each row to unit L1 norm (after damping).
    pub row_normalize: bool,
}

/// Counts `(q, d)` or `(u, d)` pairs of the triples into a
/// `num_rows x num_items` matrix.
pub fn cooccurrence_matrix(
    triples: &[Triple],
    mode: CooccurrenceMode,
    num_rows: usize,
    num_items: usize,
    options: CooccurrenceOptions,
) -> Result<SparseMatrix> {
    if triples.is_empty() {
        return Err(Error::EmptyDataset("co-occurrence triples"));
    }
    let entries = triples
        .iter()
        .map(|t| {
            let row = match mode {
                CooccurrenceMode::QueryItem => t.q,
                CooccurrenceMode::UserItem => t.u,
            };
            (row, t.d, 1.0)
        })
        .collect();
    let mut m = SparseMatrix::from_triplets(num_rows, num_items, entries)?;
    if options.log_damping {
        m.map_values(f64::ln_1p);
    }
    if options.row_normalize {
        m.normalize_rows_l1();
    }
    Ok(m)
}

/// Factors with `A ~ left^T right`; one column per row (resp. column)
/// entity of the factorized matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    /// `n x rows`
    pub left: DMatrix<f64>,
    /// `n x cols`
    pub right: DMatrix<f64>,
}

impl FactorPair {
    pub fn dim(&self) -> usize {
        self.left.nrows()
    }

    pub fn score(&self, row: usize, col_id: usize) -> f64 {
        dot(col(&self.left, row), col(&self.right, col_id))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.left.transpose() * &self.right
    }
}

/// Rank-`n` singular value decomposition `A ~ U diag(s) V^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    /// `rows x n`, orthonormal columns.
    pub left_vectors: DMatrix<f64>,
    /// Descending.
    pub singular_values: Vec<f64>,
    /// `cols x n`, orthonormal columns.
    pub right_vectors: DMatrix<f64>,
}

impl TruncatedSvd {
    /// Folds `sqrt(sigma)` into both sides.
    pub fn factor_pair(&self) -> FactorPair {
        let n = self.singular_values.len();
        let root = DVector::from_iterator(n, self.singular_values.iter().map(|s| s.sqrt()));
        let scale = DMatrix::from_diagonal(&root);
        FactorPair {
            left: &scale * self.left_vectors.transpose(),
            right: &scale * self.right_vectors.transpose(),
        }
    }
}

pub const SVD_OVERSAMPLING: usize = 8;
pub const SVD_POWER_ITERATIONS: usize = 4;

fn orthonormal_basis(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Rank-`n` SVD by randomized subspace iteration: a Gaussian sketch of
/// the range, `power_iterations` rounds of alternating `A^T`/`A`
/// products with re-orthonormalization, then an exact SVD of the small
/// projected matrix.
pub fn truncated_svd(matrix: &SparseMatrix, n: usize, seed: u64, power_iterations: usize) -> Result<TruncatedSvd> {
    let min_dim = matrix.rows.min(matrix.cols);
    if n == 0 || n > min_dim {
        return Err(Error::InvalidInput(format!("rank {n} must lie in [1, {min_dim}]")));
    }
    let width = (n + SVD_OVERSAMPLING).min(min_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(matrix.cols, width, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormal_basis(matrix.mul_dense(&omega));
    for _ in 0..power_iterations {
        let z = orthonormal_basis(matrix.tr_mul_dense(&q));
        q = orthonormal_basis(matrix.mul_dense(&z));
    }
    // B = Q^T A, l x cols
    let b = matrix.tr_mul_dense(&q).transpose();
    let svd = b.svd(true, true);
    let u_small = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    order.truncate(n);

    let u_full = &q * &u_small;
    let left_vectors = DMatrix::from_fn(matrix.rows, n, |r, k| u_full[(r, order[k])]);
    let right_vectors = DMatrix::from_fn(matrix.cols, n, |c, k| v_t[(order[k], c)]);
    let singular_values = order.iter().map(|&i| svd.singular_values[i]).collect();
    Ok(TruncatedSvd { left_vectors, singular_values, right_vectors })
}

pub const NMF_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct NmfResult {
    pub factors: FactorPair,
    /// `||A - W H||_F^2` before the first update and after each one.
    pub objective: Vec<f64>,
}

/// `||A - W H||_F^2` with `W = left^T`, `H = right`, using only the
/// non-zeros of `A`.
pub fn nmf_objective(matrix: &SparseMatrix, factors: &FactorPair) -> f64 {
    let cross: f64 = matrix
        .entries
        .iter()
        .map(|&(r, c, v)| v * factors.score(r as usize, c as usize))
        .sum();
    let gram_w = &factors.left * factors.left.transpose();
    let gram_h = &factors.right * factors.right.transpose();
    let quad = gram_w.component_mul(&gram_h).sum();
    matrix.frobenius_sq() - 2.0 * cross + quad
}

/// Non-negative factorization by Lee-Seung multiplicative updates of the
/// Frobenius objective.
pub fn nmf(matrix: &SparseMatrix, n: usize, iterations: usize, seed: u64) -> Result<NmfResult> {
    if n == 0 {
        return Err(Error::InvalidInput("NMF rank must be at least 1".into()));
    }
    if let Some(&(r, c, v)) = matrix.entries.iter().find(|e| e.2 < 0.0) {
        return Err(Error::InvalidInput(format!("negative entry {v} at ({r}, {c})")));
    }
    let total: f64 = matrix.entries.iter().map(|e| e.2).sum();
    let mean = total / (matrix.rows * matrix.cols).max(1) as f64;
    // E|g| = sqrt(2/pi), so E[(W H)_ij] = n * scale^2 * 2/pi = mean
    let scale = (mean / (n as f64 * 2.0 / std::f64::consts::PI)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize, cols: usize| {
        DMatrix::from_fn(rows, cols, |_, _| {
            let g: f64 = StandardNormal.sample(&mut rng);
            scale * g.abs()
        })
    };
    // W is rows x n, H is n x cols
    let mut w = draw(matrix.rows, n);
    let mut h = draw(n, matrix.cols);

    let objective_of = |w: &DMatrix<f64>, h: &DMatrix<f64>| {
        nmf_objective(matrix, &FactorPair { left: w.transpose(), right: h.clone() })
    };
    let mut objective = Vec::with_capacity(iterations + 1);
    objective.push(objective_of(&w, &h));

    let multiplicative = |x: &mut DMatrix<f64>, num: &DMatrix<f64>, den: &DMatrix<f64>| {
        for ((xi, ni), di) in x.iter_mut().zip(num.iter()).zip(den.iter()) {
            if *di > 0.0 {
                *xi *= ni / di;
            }
        }
    };
    for _ in 0..iterations {
        // H <- H * (W^T A) / (W^T W H)
        let num_h = matrix.tr_mul_dense(&w).transpose();
        let den_h = (w.transpose() * &w) * &h;
        multiplicative(&mut h, &num_h, &den_h);
        // W <- W * (A H^T) / (W H H^T)
        let num_w = matrix.mul_dense(&h.transpose());
        let den_w = &w * (&h * h.transpose());
        multiplicative(&mut w, &num_w, &den_w);
        objective.push(objective_of(&w, &h));
    }
    Ok(NmfResult { factors: FactorPair { left: w.transpose(), right: h }, objective })
}

/// Query x item and user x item factorizations combined as
/// `qi(q, d) + gamma * ui(u, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedModel {
    pub qi: FactorPair,
    pub ui: FactorPair,
    pub gamma: f64,
}

impl MixedModel {
    pub fn num_items(&self) -> usize {
        self.qi.right.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.qi.right.ncols() != self.ui.right.ncols() {
            return Err(Error::Inconsistent(format!(
                "query x item factors cover {} items, user x item factors {}",
                self.qi.right.ncols(),
                self.ui.right.ncols()
            )));
        }
        Ok(())
    }
}

pub fn mixed_score(mixed: &MixedModel, q: usize, u: usize, d: usize) -> Result<f64> {
    check_id(IdKind::Query, q, mixed.qi.left.ncols())?;
    check_id(IdKind::User, u, mixed.ui.left.ncols())?;
    check_id(IdKind::Item, d, mixed.num_items())?;
    Ok(mixed.qi.score(q, d) + mixed.gamma * mixed.ui.score(u, d))
}

/// Scores a mixed model; `QueryItem` and `UserItem` keep one term.
pub struct MixedScorer<'a> {
    pub model: &'a MixedModel,
    pub task: Task,
    pub label: String,
}

impl<'a> MixedScorer<'a> {
    pub fn new(model: &'a MixedModel, task: Task) -> Self {
        MixedScorer { model, task, label: format!("mixed-{}", task.name()) }
    }

    pub fn named(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl Scorer for MixedScorer<'_> {
    fn num_items(&self) -> usize {
        self.model.num_items()
    }

    fn score_into(&self, q: usize, u: usize, out: &mut [f64]) -> Result<()> {
        let m = self.model;
        out.fill(0.0);
        if self.task != Task::UserItem {
            check_id(IdKind::Query, q, m.qi.left.ncols())?;
            let left = col(&m.qi.left, q);
            for (d, o) in out.iter_mut().enumerate() {
                *o += dot(left, col(&m.qi.right, d));
            }
        }
        if self.task != Task::QueryItem {
            check_id(IdKind::User, u, m.ui.left.ncols())?;
            let gamma = if self.task == Task::UserItem { 1.0 } else { m.gamma };
            let left = col(&m.ui.left, u);
            for (d, o) in out.iter_mut().enumerate() {
                *o += gamma * dot(left, col(&m.ui.right, d));
            }
        }
        Ok(())
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

pub const GAMMA_GRID: [f64; 7] = [0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0];

/// Picks the `gamma` with the highest validation recall@k; ties go to
/// the earlier grid entry. Returns the chosen value and the full curve.
pub fn select_gamma(
    qi: &FactorPair,
    ui: &FactorPair,
    validation: &[Triple],
    grid: &[f64],
    k: usize,
) -> Result<(f64, Vec<(f64, f64)>)> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty gamma grid".into()));
    }
    let mut curve = Vec::with_capacity(grid.len());
    let mut best = (grid[0], f64::NEG_INFINITY);
    for &gamma in grid {
        let model = MixedModel { qi: qi.clone(), ui: ui.clone(), gamma };
        let recall = recall_at_k(&MixedScorer::new(&model, Task::QueryUserItem), validation, &[k])?.recall[0];
        curve.push((gamma, recall));
        if recall > best.1 {
            best = (gamma, recall);
        }
    }
    Ok((best.0, curve))
}

/// `x . y / (|x| |y|)`, 0 when either norm is 0.
pub fn cosine_score(x: &FeatureVector, y: &FeatureVector) -> f64 {
    let denom = x.norm() * y.norm();
    if denom > 0.0 { x.dot(y) / denom } else { 0.0 }
}

fn dense_cosine(x: &[f64], y: &[f64]) -> f64 {
    let denom = norm(x) * norm(y);
    if denom > 0.0 { dot(x, y) / denom } else { 0.0 }
}

/// One row per catalog entity; absent entities are empty rows.
pub fn catalog_matrix(catalog: &FeatureCatalog) -> SparseMatrix {
    let entries = catalog
        .iter()
        .flat_map(|(id, f)| f.iter().map(move |(i, v)| (id as u32, i as u32, v)))
        .collect();
    SparseMatrix { rows: catalog.num_entities(), cols: catalog.dim(), entries }
}

/// Projection onto the top right singular vectors of an item x feature
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LsiModel {
    /// `n x feature_dim`, orthonormal rows.
    pub basis: DMatrix<f64>,
}

impl LsiModel {
    pub fn fit(item_features: &SparseMatrix, n: usize, seed: u64, power_iterations: usize) -> Result<LsiModel> {
        let svd = truncated_svd(item_features, n, seed, power_iterations)?;
        Ok(LsiModel { basis: svd.right_vectors.transpose() })
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn project(&self, features: &FeatureVector) -> Result<Vec<f64>> {
        embed(&self.basis, features)
    }
}

/// Cosine similarity of the two vectors after LSI projection.
pub fn lsi_score(model: &LsiModel, query: &FeatureVector, item: &FeatureVector) -> Result<f64> {
    Ok(dense_cosine(&model.project(query)?, &model.project(item)?))
}

/// Ranks items by feature similarity to the query's features, ignoring
/// the user. Without an LSI model raw cosine similarity is used.
pub struct ContentScorer<'a> {
    queries: &'a FeatureCatalog,
    lsi: Option<&'a LsiModel>,
    /// Unit-norm item vectors (projected when LSI is used); `None` for
    /// items without features.
    items: Vec<Option<Vec<f64>>>,
}

impl<'a> ContentScorer<'a> {
    pub fn cosine(queries: &'a FeatureCatalog, items: &'a FeatureCatalog) -> Result<Self> {
        Self::build(queries, items, None)
    }

    pub fn lsi(model: &'a LsiModel, queries: &'a FeatureCatalog, items: &'a FeatureCatalog) -> Result<Self> {
        Self::build(queries, items, Some(model))
    }

    fn build(queries: &'a FeatureCatalog, items: &'a FeatureCatalog, lsi: Option<&'a LsiModel>) -> Result<Self> {
        if queries.dim() != items.dim() {
            return Err(Error::DimensionMismatch { expected: items.dim(), got: queries.dim() });
        }
        if let Some(m) = lsi {
            if m.feature_dim() != items.dim() {
                return Err(Error::DimensionMismatch { expected: m.feature_dim(), got: items.dim() });
            }
        }
        let mut vectors = Vec::with_capacity(items.num_entities());
        for id in 0..items.num_entities() {
            vectors.push(match items.get(id) {
                None => None,
                Some(f) => Some(unit(Self::represent(lsi, f)?)),
            });
        }
        Ok(ContentScorer { queries, lsi, items: vectors })
    }

    fn represent(lsi: Option<&LsiModel>, f: &FeatureVector) -> Result<Vec<f64>> {
        match lsi {
            Some(m) => m.project(f),
            None => Ok(f.to_dense()),
        }
    }
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

impl Scorer for ContentScorer<'_> {
    fn num_items(&self) -> usize {
        self.items.len()
    }

    fn score_into(&self, q: usize, _u: usize, out: &mut [f64]) -> Result<()> {
        check_id(IdKind::Query, q, self.queries.num_entities())?;
        let Some(f) = self.queries.get(q) else {
            out.fill(0.0);
            return Ok(());
        };
        let query = unit(Self::represent(self.lsi, f)?);
        for (o, item) in out.iter_mut().zip(&self.items) {
            *o = item.as_ref().map_or(0.0, |v| dot(&query, v));
        }
        Ok(())
    }

    fn name(&self) -> String {
        match self.lsi {
            Some(m) => format!("lsi-{}", m.dim()),
            None => "cosine".into(),
        }
    }
}
