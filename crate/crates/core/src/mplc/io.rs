//! Mask persistence.
//!
//! Text: one row per line, phases in radians, space-separated, shortest
//! round-trip decimal. PGM: binary 16-bit graymap with (−π, π] mapped
//! linearly onto [0, 65535]. A JSON manifest ties the planes together.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{wrap_phase, MplcSystem};
use crate::error::{Error, Result};
use crate::optics::Grid;

const PGM_MAX: f64 = 65535.0;

pub fn write_mask_text(mask: &Array2<f64>, path: &Path) -> Result<()> {
    let (rows, cols) = mask.dim();
    let mut out = String::with_capacity(rows * cols * 20);
    for row in mask.rows() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_mask_text(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| {
                Error::format(path, format!("line {}: bad number {tok:?}", lineno + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::format(
                    path,
                    format!("line {}: non-finite phase", lineno + 1),
                ));
            }
            values.push(v);
        }
        let n = values.len() - before;
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(Error::format(
                    path,
                    format!("line {}: ragged row", lineno + 1),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::format(path, "empty mask file"))?;
    Ok(Array2::from_shape_vec((rows, cols), values).expect("counted"))
}

fn phase_to_level(phi: f64) -> u16 {
    let t = (wrap_phase(phi) + PI) / (2.0 * PI);
    (t * PGM_MAX).round().clamp(0.0, PGM_MAX) as u16
}

fn level_to_phase(v: u16) -> f64 {
    wrap_phase(v as f64 / PGM_MAX * 2.0 * PI - PI)
}

pub fn write_mask_pgm(mask: &Array2<f64>, path: &Path) -> Result<()> {
    let (rows, cols) = mask.dim();
    let mut bytes = Vec::with_capacity(rows * cols * 2 + 32);
    write!(bytes, "P5\n{cols} {rows}\n65535\n").expect("in-memory write");
    for v in mask.iter() {
        bytes.extend_from_slice(&phase_to_level(*v).to_be_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_mask_pgm(path: &Path) -> Result<Array2<f64>> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader
        .decode()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let luma = match img {
        image::DynamicImage::ImageLuma16(b) => b,
        other => {
            return Err(Error::format(
                path,
                format!("expected a 16-bit graymap, got {:?}", other.color()),
            ))
        }
    };
    let (w, h) = luma.dimensions();
    let data: Vec<f64> = luma.pixels().map(|p| level_to_phase(p.0[0])).collect();
    Ok(Array2::from_shape_vec((h as usize, w as usize), data).expect("image dimensions"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskFormat {
    Text,
    Pgm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskFiles {
    pub text: String,
    pub pgm: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n_planes: usize,
    pub plane_spacing: f64,
    pub lead_in: f64,
    pub lead_out: f64,
    pub grid: Grid,
    /// File names relative to the manifest directory, plane order.
    pub masks: Vec<MaskFiles>,
    /// Training options and any other provenance the caller wants kept.
    #[serde(default)]
    pub training: serde_json::Value,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Writes every mask as text and PGM plus `manifest.json` into `dir`.
pub fn export_system(
    system: &MplcSystem,
    dir: &Path,
    training: serde_json::Value,
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut masks = Vec::with_capacity(system.n_planes());
    for (p, mask) in system.masks().iter().enumerate() {
        let files = MaskFiles {
            text: format!("mask_{}.txt", p + 1),
            pgm: format!("mask_{}.pgm", p + 1),
        };
        write_mask_text(mask, &dir.join(&files.text))?;
        write_mask_pgm(mask, &dir.join(&files.pgm))?;
        masks.push(files);
    }
    let manifest = Manifest {
        n_planes: system.n_planes(),
        plane_spacing: system.plane_spacing(),
        lead_in: system.lead_in(),
        lead_out: system.lead_out(),
        grid: *system.grid(),
        masks,
        training,
    };
    let path = dir.join(MANIFEST_NAME);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Rebuilds a system from a manifest file, reading masks in `format`.
pub fn import_system(manifest_path: &Path, format: MaskFormat) -> Result<(MplcSystem, Manifest)> {
    let manifest = read_manifest(manifest_path)?;
    let dir: PathBuf = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let g = manifest.grid;
    let grid = Grid::new(g.nx, g.ny, g.pitch, g.wavelength)?;
    if manifest.masks.len() != manifest.n_planes {
        return Err(Error::format(
            manifest_path,
            format!(
                "{} planes but {} mask entries",
                manifest.n_planes,
                manifest.masks.len()
            ),
        ));
    }
    let masks = manifest
        .masks
        .iter()
        .map(|f| {
            let path = match format {
                MaskFormat::Text => dir.join(&f.text),
                MaskFormat::Pgm => dir.join(&f.pgm),
            };
            let m = match format {
                MaskFormat::Text => read_mask_text(&path)?,
                MaskFormat::Pgm => read_mask_pgm(&path)?,
            };
            if m.dim() != grid.shape() {
                return Err(Error::format(
                    &path,
                    "mask shape does not match manifest grid",
                ));
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let system = MplcSystem::with_masks(
        grid,
        manifest.plane_spacing,
        manifest.lead_in,
        manifest.lead_out,
        masks,
    )?;
    Ok((system, manifest))
}
