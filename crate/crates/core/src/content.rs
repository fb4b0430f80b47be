//! Content-feature scoring.
//!
//! Items (and optionally queries) can be embedded from sparse content
//! features through the linear maps `W_D` and `W_Q`:
//!
//! * item content: `f = S_q^T U_u W_D x_d + V_u^T W_D x_d`
//! * query and item content: `f = (W_Q x_q)^T U_u W_D x_d + V_u^T W_D x_d`
//! * hybrid: the six-term sum combining indexed and content embeddings,
//!   which equals the plain score with query embedding `S_q + W_Q x_q`
//!   and item embedding `T_d + W_D x_d`.

use std::borrow::Cow;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{axpy, col, dot, norm};
use crate::model::{score_columns, Model, ScoreVector};

/// Sparse real vector with a declared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl FeatureVector {
    /// Builds a vector from `(index, value)` pairs; indices must be
    /// strictly increasing and below `dim`.
    pub fn new(dim: usize, entries: Vec<(u32, f64)>) -> Result<FeatureVector> {
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (idx, value) in entries {
            if idx as usize >= dim {
                return Err(Error::InvalidFeatures(format!("index {idx} >= dimension {dim}")));
            }
            if let Some(&prev) = indices.last() {
                if idx <= prev {
                    return Err(Error::InvalidFeatures(format!(
                        "indices not strictly increasing ({prev} then {idx})"
                    )));
                }
            }
            if !value.is_finite() {
                return Err(Error::InvalidFeatures(format!("non-finite value at index {idx}")));
            }
            indices.push(idx);
            values.push(value);
        }
        Ok(FeatureVector { dim, indices, values })
    }

    pub fn zeros(dim: usize) -> FeatureVector {
        FeatureVector { dim, indices: Vec::new(), values: Vec::new() }
    }

    pub fn one_hot(dim: usize, index: usize) -> FeatureVector {
        assert!(index < dim, "one-hot index out of range");
        FeatureVector { dim, indices: vec![index as u32], values: vec![1.0] }
    }

    pub fn from_dense(dense: &[f64]) -> FeatureVector {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        FeatureVector { dim: dense.len(), indices, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        // merge join over sorted indices
        let (mut a, mut b) = (0, 0);
        let mut sum = 0.0;
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    sum += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        sum
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn scaled(&self, alpha: f64) -> FeatureVector {
        FeatureVector {
            dim: self.dim,
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * alpha).collect(),
        }
    }

    /// Scales to unit L2 norm; zero vectors are returned unchanged.
    pub fn l2_normalized(&self) -> FeatureVector {
        let n = self.norm();
        if n > 0.0 { self.scaled(1.0 / n) } else { self.clone() }
    }

    /// Scales to unit L1 norm; zero vectors are returned unchanged.
    pub fn l1_normalized(&self) -> FeatureVector {
        let n: f64 = self.values.iter().map(|v| v.abs()).sum();
        if n > 0.0 { self.scaled(1.0 / n) } else { self.clone() }
    }
}

/// Feature vectors keyed by dense entity id, all of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCatalog {
    dim: usize,
    entries: Vec<Option<FeatureVector>>,
}

impl FeatureCatalog {
    pub fn new(dim: usize, num_entities: usize) -> FeatureCatalog {
        FeatureCatalog { dim, entries: vec![None; num_entities] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_entities(&self) -> usize {
        self.entries.len()
    }

    pub fn num_present(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    pub fn insert(&mut self, id: usize, features: FeatureVector) -> Result<()> {
        if features.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: features.dim() });
        }
        let count = self.entries.len();
        let slot = self
            .entries
            .get_mut(id)
            .ok_or_else(|| Error::InvalidInput(format!("catalog id {id} out of range ({count})")))?;
        *slot = Some(features);
        Ok(())
    }

    pub fn get(&self, id: usize) -> Option<&FeatureVector> {
        self.entries.get(id).and_then(|e| e.as_ref())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &FeatureVector)> + '_ {
        self.entries.iter().enumerate().filter_map(|(i, e)| e.as_ref().map(|f| (i, f)))
    }
}

/// `W x` for a feature map `W` (`n x dim`) and sparse `x`.
pub fn embed(map: &DMatrix<f64>, features: &FeatureVector) -> Result<Vec<f64>> {
    if features.dim() != map.ncols() {
        return Err(Error::DimensionMismatch { expected: map.ncols(), got: features.dim() });
    }
    let mut out = vec![0.0; map.nrows()];
    embed_into(map, features, &mut out);
    Ok(out)
}

/// `out += W x`, dimensions already checked.
pub(crate) fn embed_into(map: &DMatrix<f64>, features: &FeatureVector, out: &mut [f64]) {
    for (i, v) in features.iter() {
        axpy(v, col(map, i), out);
    }
}

fn item_map(model: &Model) -> Result<&DMatrix<f64>> {
    model.item_map.as_ref().ok_or(Error::MissingComponent("item feature map W_D"))
}

fn query_map(model: &Model) -> Result<&DMatrix<f64>> {
    model.query_map.as_ref().ok_or(Error::MissingComponent("query feature map W_Q"))
}

fn full_left(model: &Model, u: usize, query_embedding: &[f64]) -> Vec<f64> {
    model.left_factor_for(crate::model::Task::QueryUserItem, u, query_embedding)
}

/// Item-content score `S_q^T U_u W_D x_d + V_u^T W_D x_d`.
pub fn score_content(model: &Model, q: usize, u: usize, item_features: &FeatureVector) -> Result<f64> {
    model.check_query(q)?;
    model.check_user(u)?;
    let item = embed(item_map(model)?, item_features)?;
    Ok(dot(&full_left(model, u, col(&model.queries, q)), &item))
}

/// Query- and item-content score
/// `(W_Q x_q)^T U_u W_D x_d + V_u^T W_D x_d`.
pub fn score_query_features(
    model: &Model,
    query_features: &FeatureVector,
    u: usize,
    item_features: &FeatureVector,
) -> Result<f64> {
    model.check_user(u)?;
    let query = embed(query_map(model)?, query_features)?;
    let item = embed(item_map(model)?, item_features)?;
    Ok(dot(&full_left(model, u, &query), &item))
}

/// Collaborative plus content score, evaluated as the explicit sum of
/// its six terms.
pub fn score_hybrid(
    model: &Model,
    q: usize,
    query_features: &FeatureVector,
    u: usize,
    d: usize,
    item_features: &FeatureVector,
) -> Result<f64> {
    model.check_query(q)?;
    model.check_user(u)?;
    model.check_item(d)?;
    let item_content = embed(item_map(model)?, item_features)?;
    let query_content = embed(query_map(model)?, query_features)?;
    let transform = model.user_transform(u);
    let s_q = col(&model.queries, q);
    let t_d = col(&model.items, d);
    let v_u = col(&model.users, u);

    let u_content = transform.apply(&item_content)?;
    let u_indexed = transform.apply(t_d)?;
    let terms = [
        dot(s_q, &u_content),
        dot(s_q, &u_indexed),
        dot(&query_content, &u_content),
        dot(&query_content, &u_indexed),
        dot(v_u, &item_content),
        dot(v_u, t_d),
    ];
    Ok(terms.iter().sum())
}

/// Document-retrieval score `(W_Q x_q) . (W_D x_d)` with no user model.
/// Pass the same map twice for the shared-map form.
pub fn score_document_retrieval(
    query_map: &DMatrix<f64>,
    item_map: &DMatrix<f64>,
    query_features: &FeatureVector,
    item_features: &FeatureVector,
) -> Result<f64> {
    if query_map.nrows() != item_map.nrows() {
        return Err(Error::DimensionMismatch { expected: query_map.nrows(), got: item_map.nrows() });
    }
    let q = embed(query_map, query_features)?;
    let d = embed(item_map, item_features)?;
    Ok(dot(&q, &d))
}

/// Feature catalogs available to a model whose layout uses content.
#[derive(Debug, Clone, Copy, Default)]
pub struct FeatureContext<'a> {
    pub items: Option<&'a FeatureCatalog>,
    pub queries: Option<&'a FeatureCatalog>,
}

impl<'a> FeatureContext<'a> {
    pub fn none() -> Self {
        FeatureContext::default()
    }

    pub fn items(items: &'a FeatureCatalog) -> Self {
        FeatureContext { items: Some(items), queries: None }
    }

    /// Validates the catalogs against a model's layout and dimensions.
    pub fn check(&self, model: &Model) -> Result<()> {
        if model.layout.item.uses_features() {
            let cat = self.items.ok_or(Error::MissingComponent("item feature catalog"))?;
            let map = item_map(model)?;
            if cat.dim() != map.ncols() {
                return Err(Error::DimensionMismatch { expected: map.ncols(), got: cat.dim() });
            }
        }
        if model.layout.query.uses_features() {
            let cat = self.queries.ok_or(Error::MissingComponent("query feature catalog"))?;
            let map = query_map(model)?;
            if cat.dim() != map.ncols() {
                return Err(Error::DimensionMismatch { expected: map.ncols(), got: cat.dim() });
            }
        }
        Ok(())
    }
}

impl Model {
    /// Query embedding under the model's layout: `S_q`, `W_Q x_q`, or
    /// their sum. Queries without features contribute nothing on the
    /// content side.
    pub fn query_embedding(&self, q: usize, ctx: &FeatureContext<'_>) -> Result<Vec<f64>> {
        self.check_query(q)?;
        let mut out = if self.layout.query.uses_index() {
            col(&self.queries, q).to_vec()
        } else {
            vec![0.0; self.dim()]
        };
        if self.layout.query.uses_features() {
            let cat = ctx.queries.ok_or(Error::MissingComponent("query feature catalog"))?;
            if let Some(f) = cat.get(q) {
                let map = query_map(self)?;
                if f.dim() != map.ncols() {
                    return Err(Error::DimensionMismatch { expected: map.ncols(), got: f.dim() });
                }
                embed_into(map, f, &mut out);
            }
        }
        Ok(out)
    }

    /// Item embedding under the model's layout: `T_d`, `W_D x_d`, or
    /// their sum.
    pub fn item_embedding(&self, d: usize, ctx: &FeatureContext<'_>) -> Result<Vec<f64>> {
        self.check_item(d)?;
        let mut out = if self.layout.item.uses_index() {
            col(&self.items, d).to_vec()
        } else {
            vec![0.0; self.dim()]
        };
        if self.layout.item.uses_features() {
            let cat = ctx.items.ok_or(Error::MissingComponent("item feature catalog"))?;
            if let Some(f) = cat.get(d) {
                let map = item_map(self)?;
                if f.dim() != map.ncols() {
                    return Err(Error::DimensionMismatch { expected: map.ncols(), got: f.dim() });
                }
                embed_into(map, f, &mut out);
            }
        }
        Ok(out)
    }

    /// All item embeddings as an `n x |D|` matrix. Borrows `T` when the
    /// layout is purely indexed.
    pub fn effective_items(&self, ctx: &FeatureContext<'_>) -> Result<Cow<'_, DMatrix<f64>>> {
        if !self.layout.item.uses_features() {
            return Ok(Cow::Borrowed(&self.items));
        }
        ctx.check(self)?;
        let n = self.dim();
        let mut data = Vec::with_capacity(n * self.num_items());
        for d in 0..self.num_items() {
            data.extend(self.item_embedding(d, ctx)?);
        }
        Ok(Cow::Owned(DMatrix::from_vec(n, self.num_items(), data)))
    }

    /// Scores every item for `(q, u)` under the model's layout and task.
    pub fn score_all_in_context(&self, q: usize, u: usize, ctx: &FeatureContext<'_>) -> Result<ScoreVector> {
        self.check_user(u)?;
        let items = self.effective_items(ctx)?;
        let left = self.left_factor(u, &self.query_embedding(q, ctx)?);
        Ok(ScoreVector(score_columns(&left, &items)))
    }

    /// Single-item score under the model's layout and task.
    pub fn score_in_context(&self, q: usize, u: usize, d: usize, ctx: &FeatureContext<'_>) -> Result<f64> {
        self.check_user(u)?;
        let left = self.left_factor(u, &self.query_embedding(q, ctx)?);
        Ok(dot(&left, &self.item_embedding(d, ctx)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::col_mut;
    use crate::model::{Dims, Layout, Representation, Variant};

    fn fv(dim: usize, entries: &[(u32, f64)]) -> FeatureVector {
        FeatureVector::new(dim, entries.to_vec()).unwrap()
    }

    #[test]
    fn feature_vector_invariants() {
        assert!(FeatureVector::new(4, vec![(0, 2.0), (3, 1.0)]).is_ok());
        assert!(FeatureVector::new(4, vec![(4, 1.0)]).is_err());
        assert!(FeatureVector::new(4, vec![(2, 1.0), (2, 1.0)]).is_err());
        assert!(FeatureVector::new(4, vec![(2, 1.0), (1, 1.0)]).is_err());
        let v = fv(5, &[(1, 3.0), (4, 4.0)]);
        assert_eq!(v.to_dense(), vec![0.0, 3.0, 0.0, 0.0, 4.0]);
        assert_eq!(v.norm(), 5.0);
        assert_eq!(v.dot(&fv(5, &[(0, 9.0), (4, 2.0)])), 8.0);
        assert_eq!(FeatureVector::from_dense(&[0.0, 2.0, 0.0]), fv(3, &[(1, 2.0)]));
    }

    #[test]
    fn catalog_rejects_wrong_dimension() {
        let mut cat = FeatureCatalog::new(3, 2);
        assert!(cat.insert(0, fv(3, &[(0, 1.0)])).is_ok());
        assert!(cat.insert(1, fv(4, &[(0, 1.0)])).is_err());
        assert!(cat.insert(2, fv(3, &[(0, 1.0)])).is_err());
        assert!(cat.get(1).is_none());
        assert_eq!(cat.num_present(), 1);
    }

    #[test]
    fn identity_map_recovers_indexed_score() {
        // n = n_D = 3 and W_D = I: one-hot features at j reproduce the
        // plain score with T_d = e_j.
        let mut m = Model::new(Dims::new(3, 2, 2, 3).with_item_features(3), Variant::Full, 1.0, 4).unwrap();
        m.item_map = Some(DMatrix::identity(3, 3));
        m.items = DMatrix::identity(3, 3);
        for j in 0..3 {
            let content = score_content(&m, 1, 0, &FeatureVector::one_hot(3, j)).unwrap();
            let indexed = m.score(1, 0, j).unwrap();
            assert!((content - indexed).abs() < 1e-15);
        }
        assert_eq!(score_content(&m, 0, 0, &FeatureVector::zeros(3)).unwrap(), 0.0);
    }

    #[test]
    fn missing_maps_are_errors() {
        let m = Model::new(Dims::new(3, 2, 2, 3), Variant::Identity, 1.0, 4).unwrap();
        let x = FeatureVector::zeros(3);
        assert!(matches!(score_content(&m, 0, 0, &x), Err(Error::MissingComponent(_))));
        assert!(matches!(score_query_features(&m, &x, 0, &x), Err(Error::MissingComponent(_))));
        assert!(matches!(score_hybrid(&m, 0, &x, 0, 0, &x), Err(Error::MissingComponent(_))));

        let m = Model::new(Dims::new(3, 2, 2, 3).with_item_features(5), Variant::Identity, 1.0, 4).unwrap();
        assert!(matches!(
            score_content(&m, 0, 0, &FeatureVector::zeros(4)),
            Err(Error::DimensionMismatch { expected: 5, got: 4 })
        ));
    }

    #[test]
    fn one_hot_query_recovers_indexed_query() {
        let dims = Dims::new(4, 3, 2, 5).with_item_features(6).with_query_features(3);
        let mut m = Model::new(dims, Variant::Diagonal, 1.0, 11).unwrap();
        m.query_map = Some(m.queries.clone());
        let x = fv(6, &[(0, 0.5), (5, -1.0)]);
        for q in 0..3 {
            let a = score_query_features(&m, &FeatureVector::one_hot(3, q), 1, &x).unwrap();
            let b = score_content(&m, q, 1, &x).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
        // zero query keeps only the bias term
        let bias = dot(col(&m.users, 1), &embed(m.item_map.as_ref().unwrap(), &x).unwrap());
        let zero_q = score_query_features(&m, &FeatureVector::zeros(3), 1, &x).unwrap();
        assert!((zero_q - bias).abs() < 1e-15);
    }

    #[test]
    fn hybrid_degenerate_cases() {
        let dims = Dims::new(4, 3, 2, 5).with_item_features(6).with_query_features(3);
        let mut m = Model::new(dims, Variant::Full, 1.0, 12).unwrap();
        let xq = fv(3, &[(1, 2.0)]);
        let xd = fv(6, &[(2, 1.0), (4, 0.5)]);
        let h = score_hybrid(&m, 2, &FeatureVector::zeros(3), 1, 3, &FeatureVector::zeros(6)).unwrap();
        assert!((h - m.score(2, 1, 3).unwrap()).abs() < 1e-14);

        m.queries.fill(0.0);
        m.items.fill(0.0);
        let h = score_hybrid(&m, 2, &xq, 1, 3, &xd).unwrap();
        assert!((h - score_query_features(&m, &xq, 1, &xd).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn document_retrieval_cases() {
        let w = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 1.0, -1.0]);
        let x = fv(3, &[(0, 1.0), (2, 1.0)]);
        let self_score = score_document_retrieval(&w, &w, &x, &x).unwrap();
        assert!(self_score >= 0.0);
        assert_eq!(self_score, 9.0 + 1.0);

        // W e_0 = (1,0), W e_1 = (0,1): orthogonal
        let s = score_document_retrieval(&w, &w, &FeatureVector::one_hot(3, 0), &FeatureVector::one_hot(3, 1)).unwrap();
        assert_eq!(s, 0.0);

        let narrow = DMatrix::zeros(3, 3);
        assert!(score_document_retrieval(&w, &narrow, &x, &x).is_err());
    }

    #[test]
    fn layout_embeddings() {
        let dims = Dims::new(3, 2, 2, 4).with_item_features(5);
        let m = Model::new(dims, Variant::Identity, 1.0, 2).unwrap();
        let m = m.with_layout(Layout { query: Representation::Index, item: Representation::Both }).unwrap();
        let mut cat = FeatureCatalog::new(5, 4);
        cat.insert(1, fv(5, &[(0, 1.0), (3, 2.0)])).unwrap();
        let ctx = FeatureContext::items(&cat);

        let mut expected = col(&m.items, 1).to_vec();
        axpy(1.0, col(m.item_map.as_ref().unwrap(), 0), &mut expected);
        axpy(2.0, col(m.item_map.as_ref().unwrap(), 3), &mut expected);
        assert_eq!(m.item_embedding(1, &ctx).unwrap(), expected);
        // item 0 has no features: indexed part only
        assert_eq!(m.item_embedding(0, &ctx).unwrap(), col(&m.items, 0).to_vec());

        assert!(matches!(
            m.score_all_in_context(0, 0, &FeatureContext::none()),
            Err(Error::MissingComponent(_))
        ));
        let all = m.score_all_in_context(0, 1, &ctx).unwrap();
        for d in 0..4 {
            assert!((all.0[d] - m.score_in_context(0, 1, d, &ctx).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn layout_requires_maps() {
        let m = Model::new(Dims::new(3, 2, 2, 4), Variant::Identity, 1.0, 2).unwrap();
        let layout = Layout { query: Representation::Index, item: Representation::Features };
        assert!(m.clone().with_layout(layout).is_err());
        let mut m2 = m;
        col_mut(&mut m2.items, 0)[0] = 0.0;
        assert!(m2.with_layout(Layout::collaborative()).is_ok());
    }
}
