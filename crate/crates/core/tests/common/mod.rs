//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's scoring or gradient code paths.

#![allow(dead_code)]

use lcr::content::{FeatureCatalog, FeatureContext, FeatureVector};
use lcr::model::{Dims, Layout, Model, Representation, Task, UserTransforms, Variant};
use lcr::training::{pair_gradient, Param};
use lcr::Triple;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub const VARIANTS: [Variant; 4] = [Variant::Full, Variant::Identity, Variant::Diagonal, Variant::LowRankPlusDiag];

/// `U_u` assembled directly from the stored parameters.
pub fn dense_transform(model: &Model, u: usize) -> DMatrix<f64> {
    let n = model.dims.dim;
    match &model.transforms {
        UserTransforms::Identity => DMatrix::identity(n, n),
        UserTransforms::Full(ms) => ms[u].clone(),
        UserTransforms::Diagonal(d) => DMatrix::from_diagonal(&d.column(u).into_owned()),
        UserTransforms::LowRankPlusDiag { factors, diag } => {
            factors[u].transpose() * &factors[u] + DMatrix::from_diagonal(&diag.column(u).into_owned())
        }
    }
}

/// Dense feature matrix with one column per entity; missing rows are zero.
pub fn dense_features(catalog: &FeatureCatalog) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(catalog.dim(), catalog.num_entities());
    for (id, f) in catalog.iter() {
        for (i, v) in f.iter() {
            m[(i, id)] = v;
        }
    }
    m
}

/// Embedding matrix of one side under a representation.
fn side(index: &DMatrix<f64>, map: Option<&DMatrix<f64>>, cat: Option<&FeatureCatalog>, r: Representation) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(index.nrows(), index.ncols());
    if matches!(r, Representation::Index | Representation::Both) {
        out += index;
    }
    if matches!(r, Representation::Features | Representation::Both) {
        out += map.unwrap() * dense_features(cat.unwrap());
    }
    out
}

/// Every item's score for `(q, u)` by dense matrix algebra:
/// `(U_u^T a + V_u)^T E` restricted to the model's task.
pub fn oracle_scores(model: &Model, ctx: &FeatureContext<'_>, q: usize, u: usize) -> Vec<f64> {
    let queries = side(&model.queries, model.query_map.as_ref(), ctx.queries, model.layout.query);
    let items = side(&model.items, model.item_map.as_ref(), ctx.items, model.layout.item);
    let a: DVector<f64> = queries.column(q).into_owned();
    let v: DVector<f64> = model.users.column(u).into_owned();
    let left = match model.task {
        Task::QueryUserItem => dense_transform(model, u).transpose() * a + v,
        Task::QueryItem => a,
        Task::UserItem => v,
    };
    (items.transpose() * left).iter().copied().collect()
}

/// 0-based position under descending score, ascending id, by sorting.
pub fn oracle_position(scores: &[f64], d: usize) -> usize {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order.iter().position(|&i| i == d).unwrap()
}

pub fn oracle_margin_rank(scores: &[f64], d: usize) -> usize {
    (0..scores.len()).filter(|&j| j != d && 1.0 + scores[j] >= scores[d]).count()
}

pub fn random_catalog<R: Rng>(rng: &mut R, dim: usize, entities: usize, density: f64, present: f64) -> FeatureCatalog {
    let mut cat = FeatureCatalog::new(dim, entities);
    for id in 0..entities {
        if !rng.random_bool(present) {
            continue;
        }
        let mut entries: Vec<(u32, f64)> = Vec::new();
        for i in 0..dim {
            if rng.random_bool(density) {
                entries.push((i as u32, rng.random_range(-2.0..2.0)));
            }
        }
        cat.insert(id, FeatureVector::new(dim, entries).unwrap()).unwrap();
    }
    cat
}

/// A random small problem: model, catalogs, triple and negative.
pub struct Instance {
    pub model: Model,
    pub items: FeatureCatalog,
    pub queries: FeatureCatalog,
    pub triple: Triple,
    pub negative: usize,
    pub weight: f64,
}

impl Instance {
    pub fn ctx(&self) -> FeatureContext<'_> {
        FeatureContext { items: Some(&self.items), queries: Some(&self.queries) }
    }
}

pub fn random_instance<R: Rng>(rng: &mut R, variant: Variant, layout: Layout, task: Task) -> Instance {
    let n = rng.random_range(1..=6);
    let nq = rng.random_range(1..=5);
    let nu = rng.random_range(1..=4);
    let nd = rng.random_range(2..=8);
    let fd = rng.random_range(1..=6);
    let fq = rng.random_range(1..=6);
    let mut dims = Dims::new(n, nq, nu, nd).with_item_features(fd).with_query_features(fq);
    if variant == Variant::LowRankPlusDiag {
        dims = dims.with_lowrank_rank(rng.random_range(1..=n));
    }
    let model = Model::new(dims, variant, 10.0, rng.random())
        .unwrap()
        .with_task(task)
        .with_layout(layout)
        .unwrap();
    let items = random_catalog(rng, fd, nd, 0.6, 0.85);
    let queries = random_catalog(rng, fq, nq, 0.6, 0.85);
    let d = rng.random_range(0..nd);
    let mut negative = rng.random_range(0..nd - 1);
    if negative >= d {
        negative += 1;
    }
    let triple = Triple::new(rng.random_range(0..nq) as u32, rng.random_range(0..nu) as u32, d as u32);
    Instance { model, items, queries, triple, negative, weight: rng.random_range(0.1..5.0) }
}

/// `w (1 - f(q,u,d) + f(q,u,j))` through the dense oracle.
pub fn surrogate(inst: &Instance, model: &Model) -> f64 {
    let (q, u, d) = inst.triple.ids();
    let s = oracle_scores(model, &inst.ctx(), q, u);
    inst.weight * (1.0 - s[d] + s[inst.negative])
}

/// Every block the surrogate can depend on.
pub fn candidate_params(inst: &Instance) -> Vec<Param> {
    let (q, u, d) = inst.triple.ids();
    let mut out = vec![
        Param::Query(q),
        Param::User(u),
        Param::Item(d),
        Param::Item(inst.negative),
        Param::TransformFactor(u),
        Param::TransformDiag(u),
    ];
    out.extend((0..inst.items.dim()).map(Param::ItemMap));
    out.extend((0..inst.queries.dim()).map(Param::QueryMap));
    out
}

/// Largest relative error between the analytic gradient and central
/// differences with step `h` over all blocks. Blocks absent from the
/// analytic gradient count as zero.
pub fn gradient_error(inst: &Instance, h: f64) -> f64 {
    let grad = pair_gradient(&inst.model, &inst.triple, inst.negative, &inst.ctx(), inst.weight).unwrap();
    let mut model = inst.model.clone();
    let mut worst: f64 = 0.0;
    let mut params = candidate_params(inst);
    params.dedup();
    for p in params {
        let Some(len) = model.param(p).map(<[f64]>::len) else {
            assert!(grad.get(p).is_none(), "gradient for a block the model lacks: {p:?}");
            continue;
        };
        let mut fd = vec![0.0; len];
        for (i, slot) in fd.iter_mut().enumerate() {
            let orig = model.param(p).unwrap()[i];
            model.param_mut(p).unwrap()[i] = orig + h;
            let plus = surrogate(inst, &model);
            model.param_mut(p).unwrap()[i] = orig - h;
            let minus = surrogate(inst, &model);
            model.param_mut(p).unwrap()[i] = orig;
            *slot = (plus - minus) / (2.0 * h);
        }
        let analytic = grad.get(p).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; len]);
        let diff = analytic.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = norm(&analytic).max(norm(&fd));
        // both sides vanish: nothing to compare beyond the absolute gap
        let err = if scale < 1e-8 { diff } else { diff / scale };
        worst = worst.max(err);
    }
    worst
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn layout(query: Representation, item: Representation) -> Layout {
    Layout { query, item }
}
