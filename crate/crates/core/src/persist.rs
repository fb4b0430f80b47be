//! Binary model files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic "LCRM" | version u32 | tag u8 (1 = LCR, 2 = mixed, 3 = LSI)
//! dims: dim, num_queries, num_users, num_items, item_feature_dim,
//!       query_feature_dim, lowrank_rank as u64
//! LCR:   variant u8 | task u8 | query repr u8 | item repr u8 | C f64
//!        S, T, V, transforms, [has u8, W_D], [has u8, W_Q]
//! mixed: gamma f64 | qi.left, qi.right, ui.left, ui.right
//! LSI:   basis
//! ```
//!
//! Each matrix is `rows u64 | cols u64 | rows * cols f64` in column-major
//! order. Transforms are `|U|` full matrices, one diagonal matrix, or `|U|`
//! low-rank factors followed by the diagonal matrix.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use nalgebra::DMatrix;

use crate::baselines::{FactorPair, LsiModel, MixedModel};
use crate::error::{Error, Result};
use crate::model::{Dims, Layout, Model, Representation, Task, UserTransforms, Variant};

pub const MODEL_MAGIC: &[u8; 4] = b"LCRM";
pub const MODEL_VERSION: u32 = 1;

const TAG_LCR: u8 = 1;
const TAG_MIXED: u8 = 2;
const TAG_LSI: u8 = 3;

/// Any model that can be stored in a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Lcr(Model),
    Mixed(MixedModel),
    Lsi(LsiModel),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Lcr(_) => "lcr",
            SavedModel::Mixed(_) => "mixed",
            SavedModel::Lsi(_) => "lsi",
        }
    }

    pub fn as_ref(&self) -> ModelRef<'_> {
        match self {
            SavedModel::Lcr(m) => ModelRef::Lcr(m),
            SavedModel::Mixed(m) => ModelRef::Mixed(m),
            SavedModel::Lsi(m) => ModelRef::Lsi(m),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ModelRef<'a> {
    Lcr(&'a Model),
    Mixed(&'a MixedModel),
    Lsi(&'a LsiModel),
}

impl<'a> From<&'a Model> for ModelRef<'a> {
    fn from(m: &'a Model) -> Self {
        ModelRef::Lcr(m)
    }
}

impl<'a> From<&'a MixedModel> for ModelRef<'a> {
    fn from(m: &'a MixedModel) -> Self {
        ModelRef::Mixed(m)
    }
}

impl<'a> From<&'a LsiModel> for ModelRef<'a> {
    fn from(m: &'a LsiModel) -> Self {
        ModelRef::Lsi(m)
    }
}

fn variant_code(v: Variant) -> u8 {
    match v {
        Variant::Full => 0,
        Variant::Identity => 1,
        Variant::Diagonal => 2,
        Variant::LowRankPlusDiag => 3,
    }
}

fn task_code(t: Task) -> u8 {
    match t {
        Task::QueryUserItem => 0,
        Task::QueryItem => 1,
        Task::UserItem => 2,
    }
}

fn repr_code(r: Representation) -> u8 {
    match r {
        Representation::Index => 0,
        Representation::Features => 1,
        Representation::Both => 2,
    }
}

fn write_dims<W: Write>(w: &mut W, d: &Dims) -> io::Result<()> {
    for v in [d.dim, d.num_queries, d.num_users, d.num_items, d.item_feature_dim, d.query_feature_dim, d.lowrank_rank] {
        w.write_u64::<LittleEndian>(v as u64)?;
    }
    Ok(())
}

fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> io::Result<()> {
    w.write_u64::<LittleEndian>(m.nrows() as u64)?;
    w.write_u64::<LittleEndian>(m.ncols() as u64)?;
    for &x in m.as_slice() {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn write_optional<W: Write>(w: &mut W, m: Option<&DMatrix<f64>>) -> io::Result<()> {
    w.write_u8(m.is_some() as u8)?;
    if let Some(m) = m {
        write_matrix(w, m)?;
    }
    Ok(())
}

/// Dims recorded for a mixed model: the factor rank and the three entity
/// counts.
fn mixed_dims(m: &MixedModel) -> Dims {
    Dims::new(m.qi.dim(), m.qi.left.ncols(), m.ui.left.ncols(), m.num_items())
}

fn lsi_dims(m: &LsiModel) -> Dims {
    Dims { item_feature_dim: m.feature_dim(), query_feature_dim: m.feature_dim(), ..Dims::new(m.dim(), 0, 0, 0) }
}

pub fn write_model<'a, W: Write>(w: &mut W, model: impl Into<ModelRef<'a>>) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    w.write_u32::<LittleEndian>(MODEL_VERSION)?;
    match model.into() {
        ModelRef::Lcr(m) => {
            w.write_u8(TAG_LCR)?;
            write_dims(w, &m.dims)?;
            w.write_all(&[
                variant_code(m.variant()),
                task_code(m.task),
                repr_code(m.layout.query),
                repr_code(m.layout.item),
            ])?;
            w.write_f64::<LittleEndian>(m.constraint)?;
            for mat in [&m.queries, &m.items, &m.users] {
                write_matrix(w, mat)?;
            }
            match &m.transforms {
                UserTransforms::Identity => {}
                UserTransforms::Full(ms) => {
                    for mat in ms {
                        write_matrix(w, mat)?;
                    }
                }
                UserTransforms::Diagonal(d) => write_matrix(w, d)?,
                UserTransforms::LowRankPlusDiag { factors, diag } => {
                    for mat in factors {
                        write_matrix(w, mat)?;
                    }
                    write_matrix(w, diag)?;
                }
            }
            write_optional(w, m.item_map.as_ref())?;
            write_optional(w, m.query_map.as_ref())?;
        }
        ModelRef::Mixed(m) => {
            m.validate()?;
            if m.ui.dim() != m.qi.dim() {
                return Err(Error::Inconsistent("mixed factors must share one rank".into()));
            }
            w.write_u8(TAG_MIXED)?;
            write_dims(w, &mixed_dims(m))?;
            w.write_f64::<LittleEndian>(m.gamma)?;
            for mat in [&m.qi.left, &m.qi.right, &m.ui.left, &m.ui.right] {
                write_matrix(w, mat)?;
            }
        }
        ModelRef::Lsi(m) => {
            w.write_u8(TAG_LSI)?;
            write_dims(w, &lsi_dims(m))?;
            write_matrix(w, &m.basis)?;
        }
    }
    Ok(())
}

pub fn save_model<'a>(path: impl AsRef<Path>, model: impl Into<ModelRef<'a>>) -> Result<()> {
    let mut buf = Vec::new();
    write_model(&mut buf, model)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    read_model(&fs::read(path)?)
}

/// Bounds-checked cursor; every shortfall is `Truncated`, and no
/// allocation exceeds the remaining input.
struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4)?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(LittleEndian::read_u64(self.take(8)?))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Inconsistent("size exceeds the address space".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(LittleEndian::read_f64(self.take(8)?))
    }

    fn dims(&mut self) -> Result<Dims> {
        Ok(Dims {
            dim: self.usize()?,
            num_queries: self.usize()?,
            num_users: self.usize()?,
            num_items: self.usize()?,
            item_feature_dim: self.usize()?,
            query_feature_dim: self.usize()?,
            lowrank_rank: self.usize()?,
        })
    }

    fn matrix(&mut self, what: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let (r, c) = (self.usize()?, self.usize()?);
        if (r, c) != (rows, cols) {
            return Err(Error::Inconsistent(format!("{what} is {r} x {c}, dims require {rows} x {cols}")));
        }
        let len = r.checked_mul(c).and_then(|n| n.checked_mul(8)).ok_or(Error::Truncated)?;
        let bytes = self.take(len)?;
        let mut data = vec![0.0; r * c];
        LittleEndian::read_f64_into(bytes, &mut data);
        Ok(DMatrix::from_vec(r, c, data))
    }

    fn optional_matrix(&mut self, what: &str, rows: usize, cols: usize) -> Result<Option<DMatrix<f64>>> {
        match self.u8()? {
            0 => Ok(None),
            1 => self.matrix(what, rows, cols).map(Some),
            f => Err(Error::Inconsistent(format!("bad presence flag {f} for {what}"))),
        }
    }
}

fn decode<T>(what: &str, code: u8, table: &[T]) -> Result<T>
where
    T: Copy,
{
    table
        .get(code as usize)
        .copied()
        .ok_or_else(|| Error::Inconsistent(format!("unknown {what} code {code}")))
}

pub fn read_model(bytes: &[u8]) -> Result<SavedModel> {
    let mut r = Cursor { buf: bytes };
    if r.take(4)? != MODEL_MAGIC {
        return Err(Error::NotAModelFile);
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion { found: version, supported: MODEL_VERSION });
    }
    let tag = r.u8()?;
    let dims = r.dims()?;
    let model = match tag {
        TAG_LCR => SavedModel::Lcr(read_lcr(&mut r, dims)?),
        TAG_MIXED => {
            dims.validate().map_err(|e| Error::Inconsistent(e.to_string()))?;
            let gamma = r.f64()?;
            let n = dims.dim;
            let qi = FactorPair {
                left: r.matrix("query factors", n, dims.num_queries)?,
                right: r.matrix("query-side item factors", n, dims.num_items)?,
            };
            let ui = FactorPair {
                left: r.matrix("user factors", n, dims.num_users)?,
                right: r.matrix("user-side item factors", n, dims.num_items)?,
            };
            SavedModel::Mixed(MixedModel { qi, ui, gamma })
        }
        TAG_LSI => SavedModel::Lsi(LsiModel { basis: r.matrix("LSI basis", dims.dim, dims.item_feature_dim)? }),
        t => return Err(Error::Inconsistent(format!("unknown model type tag {t}"))),
    };
    if !r.buf.is_empty() {
        return Err(Error::Inconsistent(format!("{} trailing bytes", r.buf.len())));
    }
    Ok(model)
}

fn read_lcr(r: &mut Cursor<'_>, dims: Dims) -> Result<Model> {
    dims.validate().map_err(|e| Error::Inconsistent(e.to_string()))?;
    let header = r.take(4)?;
    let variant = decode(
        "variant",
        header[0],
        &[Variant::Full, Variant::Identity, Variant::Diagonal, Variant::LowRankPlusDiag],
    )?;
    let task = decode("task", header[1], &[Task::QueryUserItem, Task::QueryItem, Task::UserItem])?;
    let reprs = [Representation::Index, Representation::Features, Representation::Both];
    let layout = Layout { query: decode("representation", header[2], &reprs)?, item: decode("representation", header[3], &reprs)? };
    let constraint = r.f64()?;
    if (variant == Variant::LowRankPlusDiag) != (dims.lowrank_rank > 0) {
        return Err(Error::Inconsistent("low-rank rank does not match the variant".into()));
    }
    let n = dims.dim;
    let queries = r.matrix("S", n, dims.num_queries)?;
    let items = r.matrix("T", n, dims.num_items)?;
    let users = r.matrix("V", n, dims.num_users)?;
    let transforms = match variant {
        Variant::Identity => UserTransforms::Identity,
        Variant::Full => UserTransforms::Full(
            (0..dims.num_users).map(|_| r.matrix("user transform", n, n)).collect::<Result<_>>()?,
        ),
        Variant::Diagonal => UserTransforms::Diagonal(r.matrix("diagonal transforms", n, dims.num_users)?),
        Variant::LowRankPlusDiag => {
            let factors = (0..dims.num_users)
                .map(|_| r.matrix("low-rank factor", dims.lowrank_rank, n))
                .collect::<Result<_>>()?;
            let diag = r.matrix("diagonal transforms", n, dims.num_users)?;
            UserTransforms::LowRankPlusDiag { factors, diag }
        }
    };
    let item_map = r.optional_matrix("W_D", n, dims.item_feature_dim)?;
    let query_map = r.optional_matrix("W_Q", n, dims.query_feature_dim)?;
    let model = Model { dims, task, layout, constraint, queries, items, users, transforms, item_map, query_map };
    model
        .with_layout(layout)
        .map_err(|e| Error::Inconsistent(format!("layout needs a missing component: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes_of<'a>(m: impl Into<ModelRef<'a>>) -> Vec<u8> {
        let mut buf = Vec::new();
        write_model(&mut buf, m).unwrap();
        buf
    }

    #[test]
    fn lcr_round_trip_all_variants() {
        for v in [Variant::Full, Variant::Identity, Variant::Diagonal, Variant::LowRankPlusDiag] {
            let dims = Dims::new(3, 4, 2, 5).with_item_features(6);
            let m = Model::new(dims, v, 1.0, 7).unwrap();
            let back = read_model(&bytes_of(&m)).unwrap();
            assert_eq!(back, SavedModel::Lcr(m));
        }
    }

    #[test]
    fn error_paths() {
        let m = Model::new(Dims::new(2, 2, 2, 2), Variant::Diagonal, 1.0, 0).unwrap();
        let good = bytes_of(&m);

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(read_model(&bad), Err(Error::NotAModelFile)));

        let mut bad = good.clone();
        bad[4..8].copy_from_slice(&(MODEL_VERSION + 1).to_le_bytes());
        assert!(matches!(read_model(&bad), Err(Error::UnsupportedVersion { .. })));

        assert!(matches!(read_model(&good[..good.len() - 1]), Err(Error::Truncated)));
        assert!(matches!(read_model(&good[..2]), Err(Error::Truncated)));

        // num_items in dims (4th u64 after the tag) no longer matches T
        let mut bad = good.clone();
        bad[9 + 24] = 3;
        assert!(matches!(read_model(&bad), Err(Error::Inconsistent(_))));
    }
}
