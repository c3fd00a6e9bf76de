//! Transverse-plane grids, sampled fields and abstract state vectors.
//!
//! A [`Field`] stores its samples as an `ny x nx` array (row index = y,
//! column index = x). Physical coordinates are centered: pixel `i` sits at
//! `(i - n/2) * pitch`, so index `n/2` is the optical axis.

mod io;
mod modes;

pub use io::{read_field, write_field};
pub use modes::{
    gaussian_spot, hermite_gaussian, hermite_gaussian_with, hg_family, spot_layout, ModeBasis,
    ModeLabel, SamplingPolicy,
};

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Discretized transverse plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    /// Pixel size in meters.
    pub pitch: f64,
    /// Wavelength in meters.
    pub wavelength: f64,
}

impl Grid {
    /// Validates and builds a grid. Pixel counts must be even and at least 2.
    pub fn new(nx: usize, ny: usize, pitch: f64, wavelength: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::invalid(format!(
                "grid dimensions must be >= 2, got {nx}x{ny}"
            )));
        }
        if !nx.is_multiple_of(2) || !ny.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "grid dimensions must be even, got {nx}x{ny}"
            )));
        }
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(Error::invalid(format!(
                "pitch must be positive, got {pitch}"
            )));
        }
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::invalid(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            pitch,
            wavelength,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn extent_x(&self) -> f64 {
        self.nx as f64 * self.pitch
    }

    pub fn extent_y(&self) -> f64 {
        self.ny as f64 * self.pitch
    }

    pub fn pixel_area(&self) -> f64 {
        self.pitch * self.pitch
    }

    /// x coordinate of column `i`.
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - (self.nx / 2) as f64) * self.pitch
    }

    /// y coordinate of row `j`.
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 - (self.ny / 2) as f64) * self.pitch
    }

    pub fn x_axis(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn y_axis(&self) -> Vec<f64> {
        (0..self.ny).map(|j| self.y(j)).collect()
    }

    /// Spatial frequencies (cycles/meter) of the x axis in standard FFT
    /// order: `0, 1, ..., n/2-1, -n/2, ..., -1` times `1/(n*pitch)`.
    pub fn fx_axis(&self) -> Vec<f64> {
        fft_frequencies(self.nx, self.pitch)
    }

    pub fn fy_axis(&self) -> Vec<f64> {
        fft_frequencies(self.ny, self.pitch)
    }

    /// Free-space wavenumber 2π/λ.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Whether the physical point lies inside the sampled area.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x(0) && x <= self.x(self.nx - 1) && y >= self.y(0) && y <= self.y(self.ny - 1)
    }

    pub(crate) fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

fn fft_frequencies(n: usize, pitch: f64) -> Vec<f64> {
    let span = n as f64 * pitch;
    (0..n)
        .map(|k| {
            let k = if k < n / 2 {
                k as f64
            } else {
                k as f64 - n as f64
            };
            k / span
        })
        .collect()
}

/// `make_grid` under its operational name.
pub fn make_grid(nx: usize, ny: usize, pitch: f64, wavelength: f64) -> Result<Grid> {
    Grid::new(nx, ny, pitch, wavelength)
}

/// Complex scalar amplitude sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    data: Array2<C64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            data: Array2::zeros(grid.shape()),
            grid,
        }
    }

    pub fn from_array(grid: Grid, data: Array2<C64>) -> Result<Self> {
        if data.dim() != grid.shape() {
            return Err(Error::invalid(format!(
                "array shape {:?} does not match grid {}x{} (rows x cols = ny x nx)",
                data.dim(),
                grid.ny,
                grid.nx
            )));
        }
        Ok(Self { grid, data })
    }

    /// Builds a field by evaluating `f(x, y)` at every pixel center.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> C64) -> Self {
        let xs = grid.x_axis();
        let ys = grid.y_axis();
        let data = Array2::from_shape_fn(grid.shape(), |(j, i)| f(xs[i], ys[j]));
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &Array2<C64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<C64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array2<C64> {
        self.data
    }

    /// Σ|a|²·pitch².
    pub fn power(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.pixel_area()
    }

    pub fn norm(&self) -> f64 {
        self.power().sqrt()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.power() - 1.0).abs() <= tol
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("cannot normalize a zero field"));
        }
        self.data.mapv_inplace(|z| z / n);
        Ok(self)
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            grid: self.grid,
            data: self.data.mapv(|z| z * s),
        }
    }

    /// `self + s * other`, in place.
    pub fn add_scaled(&mut self, s: C64, other: &Field) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        Zip::from(&mut self.data)
            .and(&other.data)
            .for_each(|a, &b| *a += s * b);
        Ok(())
    }

    pub fn intensity(&self) -> Array2<f64> {
        self.data.mapv(|z| z.norm_sqr())
    }

    /// Largest elementwise |a - b|.
    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// ⟨f|g⟩ = Σ conj(f)·g·pitch².
pub fn inner_product(f: &Field, g: &Field) -> Result<C64> {
    f.grid.ensure_same(&g.grid)?;
    Ok(inner_unchecked(&f.data, &g.data) * f.grid.pixel_area())
}

pub(crate) fn inner_unchecked(f: &Array2<C64>, g: &Array2<C64>) -> C64 {
    Zip::from(f)
        .and(g)
        .fold(C64::new(0.0, 0.0), |acc, a, b| acc + a.conj() * b)
}

/// Abstract Hilbert-space vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVec(#[serde(with = "crate::serde_c64::vec")] Vec<C64>);

impl StateVec {
    pub fn new(coeffs: Vec<C64>) -> Self {
        Self(coeffs)
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self(coeffs.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Unit vector `e_k` of length `len`.
    pub fn basis(len: usize, k: usize) -> Self {
        let mut v = vec![C64::new(0.0, 0.0); len];
        v[k] = C64::new(1.0, 0.0);
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.0
    }

    pub fn into_coeffs(self) -> Vec<C64> {
        self.0
    }

    pub fn inner(&self, other: &StateVec) -> C64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self(self.0.iter().map(|z| z * s).collect())
    }

    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        (n > 0.0).then(|| self.scaled(C64::new(1.0 / n, 0.0)))
    }

    /// Pads with zeros up to `len` coefficients.
    pub fn embed(&self, len: usize) -> Self {
        let mut v = self.0.clone();
        v.resize(len.max(self.len()), C64::new(0.0, 0.0));
        Self(v)
    }

    /// `self - s * other`.
    pub fn sub_scaled(&self, s: C64, other: &StateVec) -> Self {
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a - s * b)
                .collect(),
        )
    }
}

impl std::ops::Index<usize> for StateVec {
    type Output = C64;

    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

/// Σₖ coeffsₖ·basisₖ.
pub fn superpose(coeffs: &StateVec, basis: &ModeBasis) -> Result<Field> {
    if coeffs.len() != basis.len() {
        return Err(Error::invalid(format!(
            "{} coefficients for a basis of {} modes",
            coeffs.len(),
            basis.len()
        )));
    }
    let mut out = Field::zeros(*basis.grid());
    for (c, mode) in coeffs.coeffs().iter().zip(basis.modes()) {
        out.add_scaled(*c, mode)?;
    }
    Ok(out)
}

/// Coefficients ⟨basisₖ|field⟩.
pub fn project(field: &Field, basis: &ModeBasis) -> Result<StateVec> {
    basis
        .modes()
        .iter()
        .map(|m| inner_product(m, field))
        .collect::<Result<Vec<_>>>()
        .map(StateVec::new)
}

/// Matrix of pairwise inner products ⟨fᵢ|fⱼ⟩.
pub fn gram_matrix(fields: &[Field]) -> Result<Array2<C64>> {
    let n = fields.len();
    let mut g = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = inner_product(&fields[i], &fields[j])?;
            g[[i, j]] = v;
            g[[j, i]] = v.conj();
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_extent_and_wavelength() {
        let g = make_grid(256, 256, 8e-6, 633e-9).unwrap();
        assert_relative_eq!(g.extent_x(), 2.048e-3, max_relative = 1e-12);
        assert_eq!(g.wavelength, 633e-9);
        assert_eq!(g.x(128), 0.0);
        assert_eq!(g.y(128), 0.0);
    }

    #[test]
    fn minimal_and_invalid_grids() {
        assert!(make_grid(2, 2, 1.0, 1.0).is_ok());
        assert!(matches!(
            make_grid(0, 256, 8e-6, 633e-9),
            Err(Error::InvalidArgument(_))
        ));
        assert!(make_grid(255, 256, 8e-6, 633e-9).is_err());
        assert!(make_grid(4, 4, -1.0, 633e-9).is_err());
        assert!(make_grid(4, 4, 1.0, 0.0).is_err());
    }

    #[test]
    fn frequency_axis_is_fft_ordered() {
        let g = make_grid(4, 4, 0.5, 1.0).unwrap();
        assert_eq!(g.fx_axis(), vec![0.0, 0.5, -1.0, -0.5]);
    }

    #[test]
    fn field_shape_must_match() {
        let g = make_grid(4, 6, 1.0, 1.0).unwrap();
        assert!(Field::from_array(g, Array2::zeros((6, 4))).is_ok());
        assert!(Field::from_array(g, Array2::zeros((4, 6))).is_err());
    }

    #[test]
    fn inner_product_rejects_mismatched_grids() {
        let a = Field::zeros(make_grid(4, 4, 1.0, 1.0).unwrap());
        let b = Field::zeros(make_grid(4, 4, 2.0, 1.0).unwrap());
        assert!(matches!(inner_product(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn state_vec_embedding() {
        let v = StateVec::from_real(&[0.6, 0.8]);
        let e = v.embed(3);
        assert_eq!(e.len(), 3);
        assert_eq!(e[2], C64::new(0.0, 0.0));
        assert!(e.is_unit(1e-12));
    }
}
