//! LCPF checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "LCPF" | version: u32 | config_len: u32 | config JSON (UTF-8)
//! tensor_count: u32
//! per tensor: name_len: u16 | name (UTF-8) | rank: u8 | dims: u64 each
//!             | data: f64 little-endian each
//! ```
//!
//! Tensors round-trip bitwise.

use std::io::{Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{CoreError, Result};

const MAGIC: &[u8; 4] = b"LCPF";
const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> CoreError {
    CoreError::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let config_json = serde_json::to_vec(&params.config).map_err(|e| bad(e.to_string()))?;
    w.write_all(&(config_json.len() as u32).to_le_bytes())?;
    w.write_all(&config_json)?;

    let named = params.named();
    w.write_all(&(named.len() as u32).to_le_bytes())?;
    for (name, tensor) in named {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
        w.write_all(name_bytes)?;
        w.write_all(&[tensor.rank() as u8])?;
        for &dim in tensor.shape() {
            w.write_all(&(dim as u64).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn checkpoint_bytes(params: &ModelParams) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_checkpoint(params, &mut buf)?;
    Ok(buf)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(params, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ModelParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("bad magic bytes (not an LCPF file)"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let config_len = read_u32(&mut r)? as usize;
    let mut config_buf = vec![0u8; config_len];
    r.read_exact(&mut config_buf)?;
    let config: ModelConfig =
        serde_json::from_slice(&config_buf).map_err(|e| bad(format!("config block: {e}")))?;
    config.validate().map_err(|e| bad(e.to_string()))?;

    let mut params = ModelParams::zeros(&config)?;
    let expected: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    let position: std::collections::BTreeMap<&str, usize> =
        expected.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let count = read_u32(&mut r)? as usize;
    if count != expected.len() {
        return Err(bad(format!(
            "tensor count {count} does not match the {} tensors this config requires",
            expected.len()
        )));
    }
    let mut filled = vec![false; expected.len()];
    {
        let mut slots = params.tensors_mut();
        for _ in 0..count {
            let name_len = read_u16(&mut r)? as usize;
            let mut name_buf = vec![0u8; name_len];
            r.read_exact(&mut name_buf)?;
            let name = String::from_utf8(name_buf).map_err(|e| bad(e.to_string()))?;
            let &slot = position
                .get(name.as_str())
                .ok_or_else(|| bad(format!("unknown tensor '{name}'")))?;
            if filled[slot] {
                return Err(bad(format!("tensor '{name}' appears twice")));
            }
            let mut rank_buf = [0u8; 1];
            r.read_exact(&mut rank_buf)?;
            let rank = rank_buf[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(read_u64(&mut r)? as usize);
            }
            if slots[slot].shape() != dims.as_slice() {
                return Err(bad(format!(
                    "tensor '{name}' has shape {:?}, expected {:?}",
                    dims,
                    slots[slot].shape()
                )));
            }
            let data = slots[slot].data_mut();
            let mut buf = [0u8; 8];
            for v in data.iter_mut() {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            filled[slot] = true;
        }
    }
    if let Some(missing) = filled.iter().position(|&f| !f) {
        return Err(bad(format!("tensor '{}' missing", expected[missing])));
    }
    Ok(params)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
