//! Raw grid files with JSON sidecars, and CSV solver traces.
//!
//! A grid `name` is stored as `name.raw` (little-endian, row-major; complex
//! values interleaved as re, im) next to `name.json` holding the shape,
//! dtype, unit and optional notes.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, ErrorKind};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constraints::SupportMask;
use crate::grid::{ComplexField, RealImage, Unit};
use crate::trace::ConvergenceTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dtype {
    F64,
    C128,
    U8Mask,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::C128 => 16,
            Dtype::U8Mask => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitTag {
    Radians,
    Dimensionless,
    Mask,
}

impl From<Unit> for UnitTag {
    fn from(u: Unit) -> Self {
        match u {
            Unit::Radians => UnitTag::Radians,
            Unit::Dimensionless => UnitTag::Dimensionless,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridMeta {
    pub shape: [usize; 2],
    pub dtype: Dtype,
    pub unit: UnitTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
    Mask(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub meta: GridMeta,
    pub data: GridData,
}

fn bad_data(msg: impl Into<String>) -> io::Error {
    io::Error::new(ErrorKind::InvalidData, msg.into())
}

/// `stem.raw` and `stem.json` for a grid stem (any extension is replaced).
pub fn grid_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("raw"), stem.with_extension("json"))
}

impl GridFile {
    pub fn real(img: &RealImage, notes: Option<String>) -> Self {
        Self {
            meta: GridMeta {
                shape: [img.ny(), img.nx()],
                dtype: Dtype::F64,
                unit: img.unit().into(),
                notes,
            },
            data: GridData::Real(img.data().to_vec()),
        }
    }

    pub fn complex(field: &ComplexField, notes: Option<String>) -> Self {
        Self {
            meta: GridMeta {
                shape: [field.ny(), field.nx()],
                dtype: Dtype::C128,
                unit: UnitTag::Dimensionless,
                notes,
            },
            data: GridData::Complex(field.data().to_vec()),
        }
    }

    pub fn mask(mask: &SupportMask, notes: Option<String>) -> Self {
        let (ny, nx) = mask.shape();
        Self {
            meta: GridMeta {
                shape: [ny, nx],
                dtype: Dtype::U8Mask,
                unit: UnitTag::Mask,
                notes,
            },
            data: GridData::Mask(mask.inside().to_vec()),
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        match &self.data {
            GridData::Real(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            GridData::Complex(v) => v
                .iter()
                .flat_map(|c| c.re.to_le_bytes().into_iter().chain(c.im.to_le_bytes()))
                .collect(),
            GridData::Mask(v) => v.iter().map(|&b| b as u8).collect(),
        }
    }

    pub fn sidecar(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.meta).expect("grid metadata serializes");
        s.push('\n');
        s
    }

    pub fn from_parts(meta: GridMeta, payload: &[u8]) -> io::Result<Self> {
        let [ny, nx] = meta.shape;
        if ny == 0 || nx == 0 {
            return Err(bad_data("grid shape must be nonzero"));
        }
        let expected = ny * nx * meta.dtype.size();
        if payload.len() != expected {
            return Err(bad_data(format!(
                "payload has {} bytes, shape {ny}x{nx} of {:?} needs {expected}",
                payload.len(),
                meta.dtype
            )));
        }
        let word = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
        let data = match meta.dtype {
            Dtype::F64 => GridData::Real(payload.chunks_exact(8).map(word).collect()),
            Dtype::C128 => GridData::Complex(
                payload
                    .chunks_exact(16)
                    .map(|c| Complex64::new(word(&c[..8]), word(&c[8..])))
                    .collect(),
            ),
            Dtype::U8Mask => GridData::Mask(
                payload
                    .iter()
                    .map(|&b| match b {
                        0 => Ok(false),
                        1 => Ok(true),
                        _ => Err(bad_data(format!("mask byte {b} is not 0 or 1"))),
                    })
                    .collect::<io::Result<_>>()?,
            ),
        };
        Ok(Self { meta, data })
    }

    pub fn write(&self, stem: &Path) -> io::Result<()> {
        let (raw, json) = grid_paths(stem);
        fs::write(raw, self.payload())?;
        fs::write(json, self.sidecar())
    }

    pub fn read(stem: &Path) -> io::Result<Self> {
        let (raw, json) = grid_paths(stem);
        let meta: GridMeta = serde_json::from_str(&fs::read_to_string(&json)?)
            .map_err(|e| bad_data(format!("{}: {e}", json.display())))?;
        Self::from_parts(meta, &fs::read(raw)?)
    }

    pub fn into_real(self) -> io::Result<RealImage> {
        let [ny, nx] = self.meta.shape;
        let unit = match self.meta.unit {
            UnitTag::Radians => Unit::Radians,
            _ => Unit::Dimensionless,
        };
        match self.data {
            GridData::Real(v) => RealImage::new(ny, nx, v, unit).map_err(|e| bad_data(e.to_string())),
            _ => Err(bad_data(format!("expected an f64 grid, found {:?}", self.meta.dtype))),
        }
    }

    pub fn into_mask(self) -> io::Result<SupportMask> {
        let [ny, nx] = self.meta.shape;
        match self.data {
            GridData::Mask(v) => SupportMask::new(ny, nx, v).map_err(|e| bad_data(e.to_string())),
            _ => Err(bad_data(format!("expected a u8-mask grid, found {:?}", self.meta.dtype))),
        }
    }
}

pub fn write_real(stem: &Path, img: &RealImage, notes: Option<String>) -> io::Result<()> {
    GridFile::real(img, notes).write(stem)
}

pub fn read_real(stem: &Path) -> io::Result<RealImage> {
    GridFile::read(stem)?.into_real()
}

pub fn read_mask(stem: &Path) -> io::Result<SupportMask> {
    GridFile::read(stem)?.into_mask()
}

pub const TRACE_HEADER: &str =
    "iteration,objective,primal_residual,dual_residual,gradient_residual,stepsize,backtracks,elapsed_s";

fn cell(out: &mut String, v: Option<f64>) {
    out.push(',');
    if let Some(v) = v {
        let _ = write!(out, "{v:.16e}");
    }
}

/// One header line plus one row per iteration; absent values are empty.
pub fn trace_to_csv(trace: &ConvergenceTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let _ = write!(out, "{}", r.iteration);
        cell(&mut out, r.objective);
        cell(&mut out, r.primal_residual);
        cell(&mut out, r.dual_residual);
        cell(&mut out, r.gradient_residual);
        cell(&mut out, r.stepsize);
        let _ = write!(out, ",{}", r.backtracks);
        cell(&mut out, Some(r.elapsed));
        out.push('\n');
    }
    out
}

pub fn write_trace_csv(path: &Path, trace: &ConvergenceTrace) -> io::Result<()> {
    fs::write(path, trace_to_csv(trace))
}
