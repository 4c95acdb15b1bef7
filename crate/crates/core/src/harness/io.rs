//! Raw image and sinogram files, and atomic writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{invalid, Error, Result};
use crate::operator::{ImageGrid, ImageShape, ProjectionGeometry, Sinogram};

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub const RAW_MAGIC: &[u8; 8] = b"DM4CTRAW";
pub const RAW_VERSION: u32 = 1;
const HEADER_FIXED: usize = 8 + 4 + 4;

/// Contents of a raw file.
#[derive(Debug, Clone, PartialEq)]
pub enum RawData {
    Image(ImageGrid),
    Sinogram(Sinogram),
}

impl RawData {
    fn kind(&self) -> u8 {
        match self {
            RawData::Image(_) => 0,
            RawData::Sinogram(_) => 1,
        }
    }

    fn dims(&self) -> [u64; 2] {
        match self {
            RawData::Image(g) => [g.height() as u64, g.width() as u64],
            RawData::Sinogram(s) => [s.n_angles() as u64, s.detector_count() as u64],
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            RawData::Image(g) => &g.values,
            RawData::Sinogram(s) => &s.values,
        }
    }

    pub fn into_image(self) -> Result<ImageGrid> {
        match self {
            RawData::Image(g) => Ok(g),
            RawData::Sinogram(_) => Err(invalid("expected an image, found a sinogram")),
        }
    }

    pub fn into_sinogram(self) -> Result<Sinogram> {
        match self {
            RawData::Sinogram(s) => Ok(s),
            RawData::Image(_) => Err(invalid("expected a sinogram, found an image")),
        }
    }
}

/// Path of the geometry sidecar that accompanies a raw sinogram.
pub fn geometry_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".geom");
    PathBuf::from(s)
}

/// Serializes to the raw layout. Values are stored as `f32`.
pub fn encode_raw(data: &RawData) -> Vec<u8> {
    let values = data.values();
    let mut out = Vec::with_capacity(HEADER_FIXED + 16 + 1 + 4 * values.len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&RAW_VERSION.to_le_bytes());
    out.extend_from_slice(&2u32.to_le_bytes());
    for d in data.dims() {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.push(data.kind());
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn save_raw(path: &Path, data: &RawData) -> Result<()> {
    if let RawData::Sinogram(s) = data {
        write_atomic(&geometry_sidecar(path), geometry_text(&s.geometry).as_bytes())?;
    }
    write_atomic(path, &encode_raw(data))
}

pub fn save_image(path: &Path, image: &ImageGrid) -> Result<()> {
    save_raw(path, &RawData::Image(image.clone()))
}

pub fn save_sinogram(path: &Path, sino: &Sinogram) -> Result<()> {
    save_raw(path, &RawData::Sinogram(sino.clone()))
}

pub fn load_raw(path: &Path) -> Result<RawData> {
    let bytes = fs::read(path)?;
    let truncated = |expected: u64| Error::Truncated {
        path: path.to_path_buf(),
        expected,
        found: bytes.len() as u64,
    };
    if bytes.len() < 8 || &bytes[..8] != RAW_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if bytes.len() < HEADER_FIXED {
        return Err(truncated(HEADER_FIXED as u64));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let unsupported = |what, value| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        what,
        value,
    };
    let version = u32_at(8);
    if version != RAW_VERSION {
        return Err(unsupported("version", version as u64));
    }
    let ndim = u32_at(12) as usize;
    let header = ndim
        .checked_mul(8)
        .and_then(|d| d.checked_add(HEADER_FIXED + 1))
        .ok_or(Error::DimOverflow {
            path: path.to_path_buf(),
        })?;
    if bytes.len() < header {
        return Err(truncated(header as u64));
    }
    let dims: Vec<u64> = (0..ndim)
        .map(|k| {
            let o = HEADER_FIXED + 8 * k;
            u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap())
        })
        .collect();
    let count = dims
        .iter()
        .try_fold(1u64, |acc, d| acc.checked_mul(*d))
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(header as u64))
        .filter(|c| usize::try_from(*c).is_ok())
        .ok_or(Error::DimOverflow {
            path: path.to_path_buf(),
        })?;
    if bytes.len() as u64 != count {
        return Err(truncated(count));
    }
    if ndim != 2 {
        return Err(unsupported("ndim", ndim as u64));
    }
    let kind = bytes[header - 1];
    let values: Vec<f64> = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let (rows, cols) = (dims[0] as usize, dims[1] as usize);
    match kind {
        0 => Ok(RawData::Image(ImageGrid::from_values(
            ImageShape::new(cols, rows),
            values,
        )?)),
        1 => {
            let text = fs::read_to_string(geometry_sidecar(path))?;
            let geometry = parse_geometry(&text)?;
            if geometry.n_angles() != rows || geometry.detector_count != cols {
                return Err(Error::ShapeMismatch(format!(
                    "sidecar describes {}x{}, payload is {rows}x{cols}",
                    geometry.n_angles(),
                    geometry.detector_count
                )));
            }
            Ok(RawData::Sinogram(Sinogram::from_values(geometry, values)?))
        }
        k => Err(unsupported("kind", k as u64)),
    }
}

pub fn load_image(path: &Path) -> Result<ImageGrid> {
    load_raw(path)?.into_image()
}

pub fn load_sinogram(path: &Path) -> Result<Sinogram> {
    load_raw(path)?.into_sinogram()
}

/// `key=value` lines describing a geometry; angles are comma separated.
pub fn geometry_text(g: &ProjectionGeometry) -> String {
    let angles: Vec<String> = g.angles.iter().map(|a| format!("{a:?}")).collect();
    format!(
        "detector_count={}\ndetector_pitch={:?}\ndetector_offset={:?}\nangles={}\n",
        g.detector_count,
        g.detector_pitch,
        g.detector_offset,
        angles.join(",")
    )
}

pub fn parse_geometry(text: &str) -> Result<ProjectionGeometry> {
    let mut count = None;
    let mut pitch = None;
    let mut offset = 0.0;
    let mut angles = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Config { line: i + 1, message };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        match k.trim() {
            "detector_count" => {
                count = Some(v.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?)
            }
            "detector_pitch" => pitch = Some(num(v)?),
            "detector_offset" => offset = num(v)?,
            "angles" => angles = Some(v.split(',').map(num).collect::<Result<Vec<_>>>()?),
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    let missing = |k: &str| Error::Config {
        line: 0,
        message: format!("geometry sidecar lacks {k}"),
    };
    Ok(ProjectionGeometry::new(
        angles.ok_or_else(|| missing("angles"))?,
        count.ok_or_else(|| missing("detector_count"))?,
        pitch.ok_or_else(|| missing("detector_pitch"))?,
    )?
    .with_offset(offset))
}
