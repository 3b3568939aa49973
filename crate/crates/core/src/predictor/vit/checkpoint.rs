use std::io::{Read, Write};
use std::path::Path;

use super::params::VitParams;
use super::VitConfig;
use crate::error::Error;
use crate::Result;

const MAGIC: &[u8; 4] = b"MSCK";
const VERSION: u32 = 1;

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

/// Layout: magic, version (u32), config JSON (u32 length + bytes), tensor
/// count (u32), then per tensor: name (u32 length + UTF-8), element count
/// (u64), f32 little-endian values.
pub fn write_checkpoint<W: Write>(mut w: W, params: &VitParams) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let cfg = serde_json::to_vec(&params.config)?;
    w.write_all(&(cfg.len() as u32).to_le_bytes())?;
    w.write_all(&cfg)?;
    let tensors = params.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.len() as u64).to_le_bytes())?;
        for v in t {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
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

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<VitParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return format_err("not a model checkpoint");
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return format_err(format!("unsupported checkpoint version {version}"));
    }
    let cfg_len = read_u32(&mut r)? as usize;
    let mut cfg = vec![0u8; cfg_len];
    r.read_exact(&mut cfg)?;
    let config: VitConfig = serde_json::from_slice(&cfg)?;
    config.validate()?;
    let mut params = VitParams::init(&config, 0);
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let count = read_u32(&mut r)? as usize;
    if count != names.len() {
        return format_err(format!("expected {} tensors, found {count}", names.len()));
    }
    for (expected, dst) in names.iter().zip(params.tensors_mut()) {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        if name != expected.as_bytes() {
            return format_err(format!("expected tensor {expected}, found {}", String::from_utf8_lossy(&name)));
        }
        let len = read_u64(&mut r)? as usize;
        if len != dst.len() {
            return format_err(format!("tensor {expected} has {len} values, expected {}", dst.len()));
        }
        let mut buf = vec![0u8; len * 4];
        r.read_exact(&mut buf)?;
        for (d, c) in dst.iter_mut().zip(buf.chunks_exact(4)) {
            *d = f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64;
        }
    }
    Ok(params)
}

pub fn save_checkpoint(path: &Path, params: &VitParams) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_checkpoint(&mut w, params)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<VitParams> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_matches_single_precision() {
        let mut p = VitParams::init(&VitConfig::tiny(), 11);
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        let q = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(q, p);
        let mut again = Vec::new();
        write_checkpoint(&mut again, &q).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn corrupted_input_is_rejected() {
        let p = VitParams::init(&VitConfig::tiny(), 11);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Format(_))));
    }
}
