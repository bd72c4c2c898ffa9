//! Named parameter storage and the binary checkpoint format.
//!
//! Checkpoint layout (little-endian): magic `MSPC`, format version `u32`,
//! tensor count `u32`, then per tensor: name length `u32`, UTF-8 name
//! bytes, rows `u32`, cols `u32`, `rows * cols` f64 values.

use std::collections::HashMap;
use std::io::{self, Read, Write};

use rand::Rng;
use thiserror::Error;

use super::matrix::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MSPC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("tensor name is not UTF-8")]
    BadName,
    #[error("checkpoint lacks tensor {0:?}")]
    Missing(String),
    #[error("tensor {name:?} has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("tensor {0:?} contains non-finite values")]
    NonFinite(String),
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
    frozen: Vec<bool>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    /// Panics on a duplicate name.
    pub fn add(&mut self, name: &str, value: Matrix) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter {name}"
        );
        let id = ParamId(self.values.len());
        self.names.push(name.to_string());
        self.values.push(value);
        self.frozen.push(false);
        self.by_name.insert(name.to_string(), id);
        id
    }

    /// Uniform in `[-scale, scale]`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut R,
    ) -> ParamId {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        self.add(name, Matrix::from_vec(rows, cols, data))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.frozen[id.0]
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.frozen[id.0] = frozen;
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.values.len() as u32).to_le_bytes())?;
        for (name, m) in self.names.iter().zip(&self.values) {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(m.rows() as u32).to_le_bytes())?;
            w.write_all(&(m.cols() as u32).to_le_bytes())?;
            for v in m.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    /// Loads every tensor of this store from a checkpoint by name. Extra
    /// tensors in the file are ignored; frozen flags are kept.
    pub fn load_checkpoint<R: Read>(&mut self, r: R) -> Result<(), CheckpointError> {
        let tensors = read_checkpoint(r)?;
        let mut by_name: HashMap<String, Matrix> = tensors.into_iter().collect();
        for i in 0..self.values.len() {
            let name = &self.names[i];
            let m = by_name
                .remove(name)
                .ok_or_else(|| CheckpointError::Missing(name.clone()))?;
            if m.shape() != self.values[i].shape() {
                return Err(CheckpointError::Shape {
                    name: name.clone(),
                    expected: self.values[i].shape(),
                    found: m.shape(),
                });
            }
            self.values[i] = m;
        }
        Ok(())
    }

    /// Serialized bytes of the named tensors only, in store order.
    pub fn tensor_bytes(&self, ids: &[ParamId]) -> Vec<u8> {
        ids.iter()
            .flat_map(|&id| {
                self.values[id.0]
                    .data()
                    .iter()
                    .flat_map(|v| v.to_le_bytes())
            })
            .collect()
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Raw `(name, tensor)` list in file order.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Matrix)>, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let count = read_u32(&mut r)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| CheckpointError::BadName)?;
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        let mut b = [0u8; 8];
        for _ in 0..rows * cols {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        let m = Matrix::from_vec(rows, cols, data);
        if !m.is_finite() {
            return Err(CheckpointError::NonFinite(name));
        }
        out.push((name, m));
    }
    Ok(out)
}
