//! Binary weight files: magic, format version, output activation, layer
//! sizes, then every parameter as a little-endian `f64`.

use std::io::{Read, Write};

use super::{Mlp, OutputActivation};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ADTW";
const VERSION: u32 = 1;
const MAX_LAYERS: usize = 64;
const MAX_WIDTH: u64 = 1 << 24;

fn corrupt(msg: impl Into<String>) -> Error {
    Error::DataQuality(format!("weight data: {}", msg.into()))
}

/// Serializes `net` into `out`.
pub fn write_mlp<W: Write>(net: &Mlp, out: &mut W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let act = match net.output {
        OutputActivation::Identity => 0u8,
        OutputActivation::Sigmoid => 1u8,
    };
    out.write_all(&[act])?;
    out.write_all(&(net.sizes.len() as u32).to_le_bytes())?;
    for &s in &net.sizes {
        out.write_all(&(s as u64).to_le_bytes())?;
    }
    for p in net.params() {
        out.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|_| corrupt("unexpected end of data"))?;
    Ok(buf)
}

/// Reads one network written by [`write_mlp`].
pub fn read_mlp<R: Read>(input: &mut R) -> Result<Mlp> {
    if &read_array::<4, _>(input)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(read_array(input)?);
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let output = match read_array::<1, _>(input)?[0] {
        0 => OutputActivation::Identity,
        1 => OutputActivation::Sigmoid,
        other => return Err(corrupt(format!("unknown activation tag {other}"))),
    };
    let count = u32::from_le_bytes(read_array(input)?) as usize;
    if !(2..=MAX_LAYERS).contains(&count) {
        return Err(corrupt(format!("implausible layer count {count}")));
    }
    let mut sizes = Vec::with_capacity(count);
    for _ in 0..count {
        let s = u64::from_le_bytes(read_array(input)?);
        if s == 0 || s > MAX_WIDTH {
            return Err(corrupt(format!("implausible layer size {s}")));
        }
        sizes.push(s as usize);
    }
    let mut net = Mlp::zeros(&sizes, output)?;
    for p in net.params_mut() {
        let v = f64::from_le_bytes(read_array(input)?);
        if !v.is_finite() {
            return Err(corrupt("non-finite parameter"));
        }
        *p = v;
    }
    Ok(net)
}

impl Mlp {
    /// Writes the network to `path`.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut buf = Vec::new();
        write_mlp(self, &mut buf)?;
        crate::experiment::write_atomic(path, &buf)
    }

    /// Reads a network from `path`; trailing bytes are an error.
    pub fn load(path: &std::path::Path) -> Result<Mlp> {
        let bytes = std::fs::read(path)?;
        let mut cursor = bytes.as_slice();
        let net = read_mlp(&mut cursor).map_err(|e| Error::ModelFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if !cursor.is_empty() {
            return Err(Error::ModelFile {
                path: path.to_path_buf(),
                message: format!("{} trailing bytes", cursor.len()),
            });
        }
        Ok(net)
    }

    /// Loads and checks the layer sizes against `expected`.
    pub fn load_with_shape(path: &std::path::Path, expected: &[usize]) -> Result<Mlp> {
        let net = Self::load(path)?;
        if net.sizes() != expected {
            return Err(Error::ModelFile {
                path: path.to_path_buf(),
                message: format!("layer sizes {:?}, expected {expected:?}", net.sizes()),
            });
        }
        Ok(net)
    }
}
