//! On-disk formats.
//!
//! - Volumes: raw little-endian `f32`, x fastest, with a JSON sidecar
//!   `{nx, ny, nz, voxel_pitch_mm, origin_mm}` stored next to the data file
//!   as `<file>.json`.
//! - Projections: 16-bit binary PGM (`P5`, maxval 65535) whose linear value
//!   scaling is recorded in the sidecar, or raw little-endian `f32`. Both
//!   share the sidecar `{rows, cols, pixel_pitch_mm, kind, encoding, ...}`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::projection::{Projection, ProjectionError, ProjectionKind};
use crate::volume::{Volume, VolumeError, VolumeSpec};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Format { path: path.to_path_buf(), msg: msg.into() }
}

/// `<path>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn f32_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

fn f32_values(path: &Path, bytes: &[u8], expected: usize) -> Result<Vec<f64>, IoError> {
    if bytes.len() != expected * 4 {
        return Err(format_err(path, format!("expected {} bytes of f32 data, found {}", expected * 4, bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

pub fn write_volume(path: &Path, vol: &Volume) -> Result<(), IoError> {
    fs::write(path, f32_bytes(vol.data())).map_err(io_err(path))?;
    write_json(&sidecar_path(path), vol.spec())
}

pub fn read_volume(path: &Path) -> Result<Volume, IoError> {
    let spec: VolumeSpec = read_json(&sidecar_path(path))?;
    spec.validate()?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    let data = f32_values(path, &bytes, spec.len())?;
    Ok(Volume::from_data(spec, data)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Pgm16,
    F32,
}

/// Projection sidecar. For PGM, pixel value `q` maps to
/// `scale_min + (scale_max - scale_min) · q / 65535`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionHeader {
    pub rows: usize,
    pub cols: usize,
    pub pixel_pitch_mm: f64,
    pub kind: ProjectionKind,
    pub encoding: Encoding,
    #[serde(default)]
    pub scale_min: f64,
    #[serde(default = "one")]
    pub scale_max: f64,
}

fn one() -> f64 {
    1.0
}

pub fn write_projection_raw(path: &Path, proj: &Projection) -> Result<(), IoError> {
    fs::write(path, f32_bytes(proj.data())).map_err(io_err(path))?;
    let header = ProjectionHeader {
        rows: proj.rows(),
        cols: proj.cols(),
        pixel_pitch_mm: proj.pixel_pitch(),
        kind: proj.kind(),
        encoding: Encoding::F32,
        scale_min: 0.0,
        scale_max: 1.0,
    };
    write_json(&sidecar_path(path), &header)
}

pub fn write_projection_pgm(path: &Path, proj: &Projection) -> Result<(), IoError> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in proj.data() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if proj.kind() == ProjectionKind::Probability {
        lo = 0.0;
        hi = 1.0;
    }
    let span = hi - lo;
    let mut bytes = format!("P5\n{} {}\n65535\n", proj.cols(), proj.rows()).into_bytes();
    for v in proj.data() {
        let q = if span > 0.0 { ((v - lo) / span * 65535.0).round().clamp(0.0, 65535.0) as u16 } else { 0 };
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    fs::write(path, bytes).map_err(io_err(path))?;
    let header = ProjectionHeader {
        rows: proj.rows(),
        cols: proj.cols(),
        pixel_pitch_mm: proj.pixel_pitch(),
        kind: proj.kind(),
        encoding: Encoding::Pgm16,
        scale_min: lo,
        scale_max: hi,
    };
    write_json(&sidecar_path(path), &header)
}

/// Writes PGM when the extension is `.pgm`, raw `f32` otherwise.
pub fn write_projection(path: &Path, proj: &Projection) -> Result<(), IoError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("pgm") => write_projection_pgm(path, proj),
        _ => write_projection_raw(path, proj),
    }
}

fn pgm_token(path: &Path, r: &mut impl BufRead) -> Result<String, IoError> {
    let mut tok = Vec::new();
    loop {
        let mut b = [0u8];
        if r.read(&mut b).map_err(io_err(path))? == 0 {
            break;
        }
        match b[0] {
            b'#' if tok.is_empty() => {
                let mut line = String::new();
                r.read_line(&mut line).map_err(io_err(path))?;
            }
            c if c.is_ascii_whitespace() => {
                if !tok.is_empty() {
                    break;
                }
            }
            c => tok.push(c),
        }
    }
    String::from_utf8(tok).map_err(|_| format_err(path, "bad PGM header"))
}

/// Reads a 16-bit (or 8-bit) binary PGM. Without a sidecar the values are
/// scaled to `[0, 1]` and treated as a probability map with unit pitch.
pub fn read_projection_pgm(path: &Path) -> Result<Projection, IoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(file);
    if pgm_token(path, &mut r)? != "P5" {
        return Err(format_err(path, "not a binary PGM (P5)"));
    }
    let mut num = |what: &str| -> Result<usize, IoError> {
        pgm_token(path, &mut r)?.parse().map_err(|_| format_err(path, format!("bad PGM {what}")))
    };
    let cols = num("width")?;
    let rows = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(format_err(path, format!("unsupported maxval {maxval}")));
    }
    let mut raw = Vec::new();
    r.read_to_end(&mut raw).map_err(io_err(path))?;
    let wide = maxval > 255;
    let need = rows * cols * if wide { 2 } else { 1 };
    if raw.len() < need {
        return Err(format_err(path, format!("expected {need} bytes of pixel data, found {}", raw.len())));
    }
    let q: Vec<f64> = if wide {
        raw[..need].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect()
    } else {
        raw[..need].iter().map(|b| *b as f64).collect()
    };
    let side = sidecar_path(path);
    let (pitch, kind, lo, hi) = if side.exists() {
        let h: ProjectionHeader = read_json(&side)?;
        if h.rows != rows || h.cols != cols {
            return Err(format_err(path, "sidecar dimensions disagree with the PGM header"));
        }
        (h.pixel_pitch_mm, h.kind, h.scale_min, h.scale_max)
    } else {
        (1.0, ProjectionKind::Probability, 0.0, 1.0)
    };
    let m = maxval as f64;
    let data = q.into_iter().map(|v| lo + (hi - lo) * v / m).collect();
    Ok(Projection::from_data(rows, cols, pitch, kind, data)?)
}

pub fn read_projection_raw(path: &Path) -> Result<Projection, IoError> {
    let h: ProjectionHeader = read_json(&sidecar_path(path))?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    let data = f32_values(path, &bytes, h.rows * h.cols)?;
    Ok(Projection::from_data(h.rows, h.cols, h.pixel_pitch_mm, h.kind, data)?)
}

/// Reads either format, detected from the file's magic bytes.
pub fn read_projection(path: &Path) -> Result<Projection, IoError> {
    let mut magic = [0u8; 2];
    let n = fs::File::open(path).and_then(|mut f| f.read(&mut magic)).map_err(io_err(path))?;
    if n == 2 && &magic == b"P5" {
        read_projection_pgm(path)
    } else {
        read_projection_raw(path)
    }
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}
