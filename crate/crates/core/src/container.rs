//! Flat binary feature container with a JSON sidecar.
//!
//! Layout (little-endian): magic `MSPI`, version `u32`, dims `N_S, N_T, C, F`
//! as `u32`, frame rate `f64`, then `N_S * N_T * C * F` row-major `f32`
//! values. The sidecar (`<file>.json`) carries axis metadata.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::periphery::CochleagramEnvelope;
use crate::preprocess::{DimStackLayout, StmImage};
use crate::similarity::NccMatrix;
use crate::stm::StmTensor;
use crate::Result;

pub const MAGIC: &[u8; 4] = b"MSPI";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub dims: [usize; 4],
    pub frame_rate_hz: f64,
    pub data: Vec<f32>,
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

impl Container {
    pub fn new(dims: [usize; 4], frame_rate_hz: f64, data: &[f64]) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() {
            return format_err(format!("dims {dims:?} do not match {} values", data.len()));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) {
            return format_err("dimension exceeds u32 range");
        }
        Ok(Self {
            dims,
            frame_rate_hz,
            data: data.iter().map(|&v| v as f32).collect(),
        })
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for d in self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&self.frame_rate_hz.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 32];
        r.read_exact(&mut header)
            .map_err(|_| Error::Format("truncated container header".into()))?;
        if &header[..4] != MAGIC {
            return format_err("bad magic, not a feature container");
        }
        let u32_at = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes"));
        let version = u32_at(4);
        if version != VERSION {
            return format_err(format!("unsupported container version {version}"));
        }
        let dims = [u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize, u32_at(20) as usize];
        let frame_rate_hz = f64::from_le_bytes(header[24..32].try_into().expect("8 bytes"));
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("dimension product overflows".into()))?;
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if buf.len() != n * 4 {
            return format_err(format!("expected {} data bytes, found {}", n * 4, buf.len()));
        }
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self {
            dims,
            frame_rate_hz,
            data,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 4 * self.data.len());
        self.write_to(&mut out).expect("writing to memory");
        out
    }
}

/// `<path>.json` next to a container file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the container and its pretty-printed sidecar.
pub fn save<M: Serialize>(path: &Path, container: &Container, meta: &M) -> Result<()> {
    std::fs::write(path, container.to_bytes())?;
    let mut json = serde_json::to_string_pretty(meta)?;
    json.push('\n');
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn load<M: DeserializeOwned>(path: &Path) -> Result<(Container, M)> {
    let c = Container::read_from(std::io::BufReader::new(std::fs::File::open(path)?))?;
    let meta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    Ok((c, meta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeMeta {
    pub kind: String,
    pub n_channels: usize,
    pub n_frames: usize,
    pub frame_rate_hz: f64,
    pub center_frequencies_hz: Vec<f64>,
}

pub fn envelope_container(env: &CochleagramEnvelope) -> Result<(Container, EnvelopeMeta)> {
    Ok((
        Container::new([1, 1, env.n_channels, env.n_frames], env.frame_rate_hz, &env.data)?,
        EnvelopeMeta {
            kind: "envelope".into(),
            n_channels: env.n_channels,
            n_frames: env.n_frames,
            frame_rate_hz: env.frame_rate_hz,
            center_frequencies_hz: env.center_frequencies_hz.clone(),
        },
    ))
}

pub fn envelope_from_container(c: &Container, meta: &EnvelopeMeta) -> Result<CochleagramEnvelope> {
    if c.dims != [1, 1, meta.n_channels, meta.n_frames] {
        return format_err("envelope container dims disagree with sidecar");
    }
    CochleagramEnvelope::new(
        c.to_f64(),
        meta.n_channels,
        meta.n_frames,
        c.frame_rate_hz,
        meta.center_frequencies_hz.clone(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StmMeta {
    pub kind: String,
    pub axes: [String; 4],
    pub shape: [usize; 4],
    pub spectral_centers_rad_per_channel: Vec<f64>,
    pub temporal_centers_rad_per_frame: Vec<f64>,
    pub temporal_centers_hz: Vec<f64>,
    pub center_frequencies_hz: Vec<f64>,
    pub frame_rate_hz: f64,
    pub border_frames: usize,
    pub border_channels: usize,
}

pub fn stm_container(stm: &StmTensor) -> Result<(Container, StmMeta)> {
    Ok((
        Container::new(stm.shape(), stm.frame_rate_hz, &stm.data)?,
        StmMeta {
            kind: "stm".into(),
            axes: ["spectral".into(), "temporal".into(), "channel".into(), "frame".into()],
            shape: stm.shape(),
            spectral_centers_rad_per_channel: stm.spectral_centers.clone(),
            temporal_centers_rad_per_frame: stm.temporal_centers.clone(),
            temporal_centers_hz: (0..stm.n_t).map(|t| stm.temporal_center_hz(t)).collect(),
            center_frequencies_hz: stm.center_frequencies_hz.clone(),
            frame_rate_hz: stm.frame_rate_hz,
            border_frames: stm.border_frames,
            border_channels: stm.border_channels,
        },
    ))
}

pub fn stm_from_container(c: &Container, meta: &StmMeta) -> Result<StmTensor> {
    if c.dims != meta.shape {
        return format_err("STM container dims disagree with sidecar");
    }
    let [n_s, n_t, n_c, n_f] = c.dims;
    Ok(StmTensor {
        data: c.to_f64(),
        n_s,
        n_t,
        n_channels: n_c,
        n_frames: n_f,
        spectral_centers: meta.spectral_centers_rad_per_channel.clone(),
        temporal_centers: meta.temporal_centers_rad_per_frame.clone(),
        center_frequencies_hz: meta.center_frequencies_hz.clone(),
        frame_rate_hz: c.frame_rate_hz,
        border_frames: meta.border_frames,
        border_channels: meta.border_channels,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NccMeta {
    pub kind: String,
    pub n_s: usize,
    pub n_t: usize,
    pub spectral_centers_rad_per_channel: Vec<f64>,
    pub temporal_centers_rad_per_frame: Vec<f64>,
    /// Missing entries are stored as NaN.
    pub missing: usize,
}

pub fn ncc_container(ncc: &NccMatrix) -> Result<(Container, NccMeta)> {
    Ok((
        Container::new([ncc.n_s, ncc.n_t, 1, 1], 0.0, &ncc.to_dense(f64::NAN))?,
        NccMeta {
            kind: "ncc".into(),
            n_s: ncc.n_s,
            n_t: ncc.n_t,
            spectral_centers_rad_per_channel: ncc.spectral_centers.clone(),
            temporal_centers_rad_per_frame: ncc.temporal_centers.clone(),
            missing: ncc.data.iter().filter(|v| v.is_none()).count(),
        },
    ))
}

pub fn ncc_from_container(c: &Container, meta: &NccMeta) -> Result<NccMatrix> {
    if c.dims != [meta.n_s, meta.n_t, 1, 1] {
        return format_err("NCC container dims disagree with sidecar");
    }
    Ok(NccMatrix {
        data: c.data.iter().map(|&v| if v.is_nan() { None } else { Some(v as f64) }).collect(),
        n_s: meta.n_s,
        n_t: meta.n_t,
        spectral_centers: meta.spectral_centers_rad_per_channel.clone(),
        temporal_centers: meta.temporal_centers_rad_per_frame.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub kind: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub layout: DimStackLayout,
}

/// Image dims are `(2, 1, H, W)`: clean then degraded channel.
pub fn image_container(image: &StmImage) -> Result<(Container, ImageMeta)> {
    Ok((
        Container::new([StmImage::CHANNELS, 1, image.height, image.width], 0.0, &image.data)?,
        ImageMeta {
            kind: "stm_image".into(),
            channels: StmImage::CHANNELS,
            height: image.height,
            width: image.width,
            layout: image.layout,
        },
    ))
}

pub fn image_from_container(c: &Container, meta: &ImageMeta) -> Result<StmImage> {
    if c.dims != [StmImage::CHANNELS, 1, meta.height, meta.width] {
        return format_err("image container dims disagree with sidecar");
    }
    Ok(StmImage {
        data: c.to_f64(),
        height: meta.height,
        width: meta.width,
        layout: meta.layout,
    })
}
