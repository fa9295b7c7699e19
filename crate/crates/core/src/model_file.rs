//! Binary model persistence.
//!
//! Layout: magic `HDCN`, format version (u32 LE), a length-prefixed JSON
//! metadata block (encoding map + imputation values), then one record per
//! layer: a type code byte, shape dimensions as u32 LE counts, and
//! parameters as little-endian IEEE-754 doubles in row-major order.
//! Loading reproduces parameters bit-exactly.

use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::EncodingMap;
use crate::nn::{Layer, Network};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"HDCN";
pub const FORMAT_VERSION: u32 = 1;

const CODE_EMBEDDING: u8 = 1;
const CODE_CONV1D: u8 = 2;
const CODE_RELU: u8 = 3;
const CODE_DROPOUT: u8 = 4;
const CODE_GLOBAL_MAX_POOL: u8 = 5;
const CODE_DENSE: u8 = 6;
const CODE_SIGMOID: u8 = 7;

/// Everything needed to run a saved network on raw records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub encoding: EncodingMap,
    /// Per-column substitution values for missing cells.
    pub impute_values: Vec<f64>,
}

#[derive(Debug)]
pub enum ModelFileError {
    Io(io::Error),
    BadMagic([u8; 4]),
    BadVersion(u32),
    Corrupt(String),
}

impl fmt::Display for ModelFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelFileError::Io(e) => write!(f, "model file i/o: {e}"),
            ModelFileError::BadMagic(m) => {
                write!(f, "bad magic {m:?}, expected {MAGIC:?}")
            }
            ModelFileError::BadVersion(v) => {
                write!(
                    f,
                    "unsupported format version {v}, expected {FORMAT_VERSION}"
                )
            }
            ModelFileError::Corrupt(msg) => write!(f, "corrupt model file: {msg}"),
        }
    }
}

impl std::error::Error for ModelFileError {}

impl From<io::Error> for ModelFileError {
    fn from(e: io::Error) -> Self {
        ModelFileError::Io(e)
    }
}

pub fn save_model(path: &Path, net: &Network, meta: &ModelMeta) -> Result<(), ModelFileError> {
    let bytes = to_bytes(net, meta)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(Network, ModelMeta), ModelFileError> {
    let bytes = fs::read(path)?;
    from_bytes(&bytes)
}

pub fn to_bytes(net: &Network, meta: &ModelMeta) -> Result<Vec<u8>, ModelFileError> {
    let mut out = Vec::new();
    out.write_all(&MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let meta_json = serde_json::to_vec(meta)
        .map_err(|e| ModelFileError::Corrupt(format!("metadata encode: {e}")))?;
    out.write_all(&(meta_json.len() as u32).to_le_bytes())?;
    out.write_all(&meta_json)?;
    out.write_all(&(net.layers.len() as u32).to_le_bytes())?;
    for layer in &net.layers {
        match layer {
            Layer::Embedding { table } => {
                out.push(CODE_EMBEDDING);
                write_tensor(&mut out, table)?;
            }
            Layer::Conv1d {
                kernels,
                bias,
                padding,
                stride,
            } => {
                out.push(CODE_CONV1D);
                out.write_all(&(*padding as u32).to_le_bytes())?;
                out.write_all(&(*stride as u32).to_le_bytes())?;
                write_tensor(&mut out, kernels)?;
                write_tensor(&mut out, bias)?;
            }
            Layer::Relu => out.push(CODE_RELU),
            Layer::Dropout { p } => {
                out.push(CODE_DROPOUT);
                out.write_all(&p.to_le_bytes())?;
            }
            Layer::GlobalMaxPool => out.push(CODE_GLOBAL_MAX_POOL),
            Layer::Dense { weights, bias } => {
                out.push(CODE_DENSE);
                write_tensor(&mut out, weights)?;
                write_tensor(&mut out, bias)?;
            }
            Layer::Sigmoid => out.push(CODE_SIGMOID),
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(Network, ModelMeta), ModelFileError> {
    let mut cursor = io::Cursor::new(bytes);
    let mut magic = [0u8; 4];
    cursor.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(ModelFileError::BadMagic(magic));
    }
    let version = read_u32(&mut cursor)?;
    if version != FORMAT_VERSION {
        return Err(ModelFileError::BadVersion(version));
    }
    let meta_len = read_u32(&mut cursor)? as usize;
    let mut meta_json = vec![0u8; meta_len];
    cursor.read_exact(&mut meta_json)?;
    let meta: ModelMeta = serde_json::from_slice(&meta_json)
        .map_err(|e| ModelFileError::Corrupt(format!("metadata decode: {e}")))?;

    let n_layers = read_u32(&mut cursor)? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let mut code = [0u8; 1];
        cursor.read_exact(&mut code)?;
        let layer = match code[0] {
            CODE_EMBEDDING => Layer::Embedding {
                table: read_tensor(&mut cursor, 2)?,
            },
            CODE_CONV1D => {
                let padding = read_u32(&mut cursor)? as usize;
                let stride = read_u32(&mut cursor)? as usize;
                Layer::Conv1d {
                    kernels: read_tensor(&mut cursor, 3)?,
                    bias: read_tensor(&mut cursor, 1)?,
                    padding,
                    stride,
                }
            }
            CODE_RELU => Layer::Relu,
            CODE_DROPOUT => {
                let mut buf = [0u8; 8];
                cursor.read_exact(&mut buf)?;
                Layer::Dropout {
                    p: f64::from_le_bytes(buf),
                }
            }
            CODE_GLOBAL_MAX_POOL => Layer::GlobalMaxPool,
            CODE_DENSE => Layer::Dense {
                weights: read_tensor(&mut cursor, 2)?,
                bias: read_tensor(&mut cursor, 1)?,
            },
            CODE_SIGMOID => Layer::Sigmoid,
            other => {
                return Err(ModelFileError::Corrupt(format!(
                    "unknown layer code {other}"
                )));
            }
        };
        layers.push(layer);
    }
    if cursor.position() != bytes.len() as u64 {
        return Err(ModelFileError::Corrupt("trailing bytes".to_string()));
    }
    Ok((Network { layers }, meta))
}

fn write_tensor(out: &mut Vec<u8>, t: &Tensor) -> Result<(), ModelFileError> {
    out.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor(
    cursor: &mut io::Cursor<&[u8]>,
    expect_dims: usize,
) -> Result<Tensor, ModelFileError> {
    let ndims = read_u32(cursor)? as usize;
    if ndims != expect_dims {
        return Err(ModelFileError::Corrupt(format!(
            "tensor rank {ndims}, expected {expect_dims}"
        )));
    }
    let mut shape = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        shape.push(read_u32(cursor)? as usize);
    }
    let count: usize = shape.iter().product();
    let mut data = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        cursor.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    Ok(Tensor::new(shape, data))
}

fn read_u32(cursor: &mut io::Cursor<&[u8]>) -> Result<u32, ModelFileError> {
    let mut buf = [0u8; 4];
    cursor.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
