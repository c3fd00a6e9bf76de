//! Plain-text field persistence: `<stem>.re.csv`, `<stem>.im.csv` and a
//! `<stem>.json` sidecar holding the grid.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{Field, Grid, C64};
use crate::error::{Error, Result};

fn sibling(stem: &Path, suffix: &str) -> PathBuf {
    let mut name = stem.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    stem.with_file_name(name)
}

fn write_matrix(path: &Path, grid: &Grid, value: impl Fn(usize, usize) -> f64) -> Result<()> {
    let mut out = String::with_capacity(grid.nx * grid.ny * 20);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", value(j, i)));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_matrix(path: &Path, grid: &Grid) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::with_capacity(grid.nx * grid.ny);
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        let before = values.len();
        for tok in line.split(',') {
            let v: f64 = tok.trim().parse().map_err(|_| {
                Error::format(path, format!("line {}: bad number {tok:?}", lineno + 1))
            })?;
            values.push(v);
        }
        if values.len() - before != grid.nx {
            return Err(Error::format(
                path,
                format!("line {}: expected {} columns", lineno + 1, grid.nx),
            ));
        }
    }
    if rows != grid.ny {
        return Err(Error::format(
            path,
            format!("expected {} rows, found {rows}", grid.ny),
        ));
    }
    Ok(values)
}

/// Writes `field` next to `stem`; returns the three paths written.
pub fn write_field(field: &Field, stem: &Path) -> Result<[PathBuf; 3]> {
    let grid = field.grid();
    let re = sibling(stem, ".re.csv");
    let im = sibling(stem, ".im.csv");
    let meta = sibling(stem, ".json");
    write_matrix(&re, grid, |j, i| field.data()[[j, i]].re)?;
    write_matrix(&im, grid, |j, i| field.data()[[j, i]].im)?;
    let json = serde_json::to_string_pretty(grid).expect("grid serializes");
    fs::write(&meta, json).map_err(|e| Error::io(&meta, e))?;
    Ok([re, im, meta])
}

pub fn read_field(stem: &Path) -> Result<Field> {
    let meta = sibling(stem, ".json");
    let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
    let raw: Grid = serde_json::from_str(&text).map_err(|e| Error::format(&meta, e.to_string()))?;
    let grid = Grid::new(raw.nx, raw.ny, raw.pitch, raw.wavelength)?;
    let re = read_matrix(&sibling(stem, ".re.csv"), &grid)?;
    let im = read_matrix(&sibling(stem, ".im.csv"), &grid)?;
    let data: Vec<C64> = re
        .into_iter()
        .zip(im)
        .map(|(a, b)| C64::new(a, b))
        .collect();
    let data = Array2::from_shape_vec(grid.shape(), data).expect("shape checked while reading");
    Field::from_array(grid, data)
}
