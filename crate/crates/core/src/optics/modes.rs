use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{inner_product, Field, Grid, C64};
use crate::error::{Error, Result};

/// Waist must span at least this many pixels.
pub const MIN_WAIST_PIXELS: f64 = 4.0;
/// Grid extent must be at least this many waists.
pub const MIN_EXTENT_WAISTS: f64 = 6.0;
/// A spot's center must sit at least this many waists inside the grid edge.
pub const SPOT_CONTAINMENT_WAISTS: f64 = 3.0;

/// How sampling-guard violations are reported.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPolicy {
    /// Reject instead of warning.
    pub strict: bool,
}

impl SamplingPolicy {
    pub const LENIENT: Self = Self { strict: false };
    pub const STRICT: Self = Self { strict: true };

    fn check(&self, grid: &Grid, waist: f64) -> Result<()> {
        if !(waist.is_finite() && waist > 0.0) {
            return Err(Error::invalid(format!(
                "waist must be positive, got {waist}"
            )));
        }
        let mut problems = Vec::new();
        if waist < MIN_WAIST_PIXELS * grid.pitch {
            problems.push(format!(
                "waist {waist:e} m is under {MIN_WAIST_PIXELS} pixels ({:e} m)",
                grid.pitch
            ));
        }
        let extent = grid.extent_x().min(grid.extent_y());
        if extent < MIN_EXTENT_WAISTS * waist {
            problems.push(format!(
                "grid extent {extent:e} m is under {MIN_EXTENT_WAISTS} waists"
            ));
        }
        if problems.is_empty() {
            return Ok(());
        }
        let msg = problems.join("; ");
        if self.strict {
            Err(Error::invalid(msg))
        } else {
            log::warn!("{msg}");
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeLabel {
    Hg { m: usize, n: usize },
    Spot(usize),
    Named(String),
}

impl std::fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModeLabel::Hg { m, n } => write!(f, "HG{m}{n}"),
            ModeLabel::Spot(k) => write!(f, "spot{k}"),
            ModeLabel::Named(s) => f.write_str(s),
        }
    }
}

/// Ordered set of orthonormal fields sharing one grid.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    grid: Grid,
    modes: Vec<Field>,
    labels: Vec<ModeLabel>,
}

impl ModeBasis {
    /// Builds a basis, checking `|⟨fᵢ|fⱼ⟩ − δᵢⱼ| < tol`.
    pub fn new(modes: Vec<Field>, labels: Vec<ModeLabel>, tol: f64) -> Result<Self> {
        let Some(first) = modes.first() else {
            return Err(Error::invalid("mode basis needs at least one mode"));
        };
        if modes.len() != labels.len() {
            return Err(Error::invalid("one label per mode is required"));
        }
        let grid = *first.grid();
        for (i, fi) in modes.iter().enumerate() {
            for (j, fj) in modes.iter().enumerate().skip(i) {
                let ov = inner_product(fi, fj)?;
                let expected = if i == j { 1.0 } else { 0.0 };
                if (ov - expected).norm() >= tol {
                    return Err(Error::invalid(format!(
                        "modes {} and {} are not orthonormal: ⟨f|g⟩ = {ov}",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        Ok(Self {
            grid,
            modes,
            labels,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn modes(&self) -> &[Field] {
        &self.modes
    }

    pub fn labels(&self) -> &[ModeLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

/// Physicists' Hermite polynomial Hₙ(x) by the three-term recurrence.
fn hermite(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 * x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = 2.0 * x * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Normalized 1D Hermite-Gauss function of order `m` and waist `w`.
fn hg_1d(m: usize, w: f64, x: f64) -> f64 {
    let norm = (2.0 / PI).powf(0.25) / (w * 2f64.powi(m as i32) * factorial(m)).sqrt();
    norm * hermite(m, 2f64.sqrt() * x / w) * (-(x * x) / (w * w)).exp()
}

/// Normalized HGₘₙ at the beam waist, `m` along x and `n` along y.
pub fn hermite_gaussian(grid: &Grid, m: usize, n: usize, waist: f64) -> Result<Field> {
    hermite_gaussian_with(grid, m, n, waist, SamplingPolicy::LENIENT)
}

pub fn hermite_gaussian_with(
    grid: &Grid,
    m: usize,
    n: usize,
    waist: f64,
    policy: SamplingPolicy,
) -> Result<Field> {
    policy.check(grid, waist)?;
    let ux: Vec<f64> = grid.x_axis().iter().map(|&x| hg_1d(m, waist, x)).collect();
    let uy: Vec<f64> = grid.y_axis().iter().map(|&y| hg_1d(n, waist, y)).collect();
    let data = ndarray::Array2::from_shape_fn(grid.shape(), |(j, i)| C64::new(ux[i] * uy[j], 0.0));
    Field::from_array(*grid, data)
}

/// The `d+1` modes with `m + n = d`, in lexicographic `(m, n)` order.
pub fn hg_family(grid: &Grid, d: usize, waist: f64, policy: SamplingPolicy) -> Result<ModeBasis> {
    let mut modes = Vec::with_capacity(d + 1);
    let mut labels = Vec::with_capacity(d + 1);
    for m in 0..=d {
        let n = d - m;
        modes.push(hermite_gaussian_with(grid, m, n, waist, policy)?);
        labels.push(ModeLabel::Hg { m, n });
    }
    ModeBasis::new(modes, labels, 1e-4)
}

/// Normalized fundamental Gaussian centered at `center` (meters).
pub fn gaussian_spot(grid: &Grid, waist: f64, center: (f64, f64)) -> Result<Field> {
    SamplingPolicy::LENIENT.check(grid, waist)?;
    let (cx, cy) = center;
    let margin = SPOT_CONTAINMENT_WAISTS * waist;
    if !(cx.is_finite() && cy.is_finite())
        || cx - margin < grid.x(0)
        || cx + margin > grid.x(grid.nx - 1)
        || cy - margin < grid.y(0)
        || cy + margin > grid.y(grid.ny - 1)
    {
        return Err(Error::invalid(format!(
            "spot at ({cx:e}, {cy:e}) with waist {waist:e} is not contained in the grid"
        )));
    }
    let ux: Vec<f64> = grid
        .x_axis()
        .iter()
        .map(|&x| hg_1d(0, waist, x - cx))
        .collect();
    let uy: Vec<f64> = grid
        .y_axis()
        .iter()
        .map(|&y| hg_1d(0, waist, y - cy))
        .collect();
    let data = ndarray::Array2::from_shape_fn(grid.shape(), |(j, i)| C64::new(ux[i] * uy[j], 0.0));
    Field::from_array(*grid, data)
}

/// `count` points evenly spaced on a circle, the first at 90° and
/// proceeding counterclockwise.
pub fn spot_layout(count: usize, radius: f64, center: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    if count == 0 {
        return Err(Error::invalid("spot count must be >= 1"));
    }
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::invalid(format!("radius must be >= 0, got {radius}")));
    }
    Ok((0..count)
        .map(|k| {
            let angle = PI / 2.0 + 2.0 * PI * k as f64 / count as f64;
            (
                center.0 + radius * angle.cos(),
                center.1 + radius * angle.sin(),
            )
        })
        .collect())
}
