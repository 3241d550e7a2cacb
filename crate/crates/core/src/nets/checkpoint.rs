//! Parameter checkpoint files.
//!
//! Layout (little-endian): magic `UWCK`, version `u32`, then for each layer
//! until end of file: `rows u32`, `cols u32`, `rows·cols` f64 weights in
//! row-major order, `rows` f64 biases.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ndcore::Matrix;
use crate::nets::mlp::{Layer, MlpParams, MlpSpec};
use crate::nets::policy::{PolicyParams, PolicySpec};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"UWCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_layers(layers: &[&Layer]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for layer in layers {
        let (rows, cols) = layer.weight.shape();
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        for v in layer.weight.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in layer.bias.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated while reading {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n * 8, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn decode_layers(bytes: &[u8]) -> Result<Vec<Layer>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::format(0, "bad checkpoint magic"));
    }
    let version = cur.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
    }
    let mut layers = Vec::new();
    while cur.pos < bytes.len() {
        let start = cur.pos as u64;
        let rows = cur.u32("layer rows")? as usize;
        let cols = cur.u32("layer cols")? as usize;
        if rows == 0 || cols == 0 {
            return Err(Error::format(start, "empty layer"));
        }
        let w = cur.f64s(rows * cols, "weights")?;
        let b = cur.f64s(rows, "biases")?;
        layers.push(Layer::from_parts(Matrix::from_vec(rows, cols, w)?, Matrix::from_vec(1, rows, b)?)?);
    }
    if layers.is_empty() {
        return Err(Error::format(cur.pos as u64, "checkpoint holds no layers"));
    }
    Ok(layers)
}

pub fn write_layers(path: &Path, layers: &[&Layer]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_layers(layers))?;
    Ok(())
}

pub fn read_layers(path: &Path) -> Result<Vec<Layer>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_layers(&bytes)
}

pub fn save_mlp(path: &Path, params: &MlpParams) -> Result<()> {
    let layers: Vec<&Layer> = params.layers().iter().collect();
    write_layers(path, &layers)
}

pub fn load_mlp(path: &Path, spec: &MlpSpec) -> Result<MlpParams> {
    MlpParams::from_layers(spec, read_layers(path)?)
}

pub fn save_policy(path: &Path, params: &PolicyParams) -> Result<()> {
    write_layers(path, &params.layers())
}

pub fn load_policy(path: &Path, spec: &PolicySpec) -> Result<PolicyParams> {
    PolicyParams::from_layers(spec, read_layers(path)?)
}
