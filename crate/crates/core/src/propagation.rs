//! Angular-spectrum free-space propagation.
//!
//! A field is transformed to the spatial-frequency domain, each plane-wave
//! component is multiplied by `exp(-i·kz·α)` with
//! `kz = sqrt((2π/λ)² − |k⊥|²)`, and the result is transformed back. The
//! full square root is used (no Fresnel approximation). Evanescent
//! components (`|k⊥| > 2π/λ`) are zeroed, which keeps `H(α)` and `H(−α)`
//! exact adjoints of each other.
//!
//! Sign convention: with a forward FFT kernel `e^{-2πi f x}`, a phase ramp
//! `exp(i·g·x)` moves a beam by `−λ·z·g/2π` after distance `z`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Zip};
use once_cell::sync::Lazy;
use parking_lot::RwLock;

use crate::error::{Error, Result};
use crate::fft::{fft2, ifft2};
use crate::optics::{Field, Grid, C64};

/// Per-frequency propagation factors for one (grid, distance) pair, in
/// FFT order.
#[derive(Debug, Clone)]
pub struct SpectralKernel {
    grid: Grid,
    distance: f64,
    factors: Array2<C64>,
    evanescent: Array2<bool>,
}

impl SpectralKernel {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn factors(&self) -> &Array2<C64> {
        &self.factors
    }

    pub fn evanescent(&self) -> &Array2<bool> {
        &self.evanescent
    }

    /// Multiplies a spectrum in place.
    pub fn apply_to_spectrum(&self, spectrum: &mut Array2<C64>) {
        Zip::from(spectrum)
            .and(&self.factors)
            .for_each(|s, &k| *s *= k);
    }

    /// Propagates raw samples in place (grid already checked by the caller).
    pub(crate) fn apply(&self, data: &mut Array2<C64>) {
        fft2(data);
        self.apply_to_spectrum(data);
        ifft2(data);
    }
}

/// Builds the kernel for `distance` meters (negative = backward).
pub fn make_kernel(grid: &Grid, distance: f64) -> SpectralKernel {
    let k = grid.wavenumber();
    let k2 = k * k;
    let kx: Vec<f64> = grid.fx_axis().iter().map(|f| 2.0 * PI * f).collect();
    let ky: Vec<f64> = grid.fy_axis().iter().map(|f| 2.0 * PI * f).collect();
    let mut evanescent = Array2::from_elem(grid.shape(), false);
    let factors = Array2::from_shape_fn(grid.shape(), |(j, i)| {
        let kt2 = kx[i] * kx[i] + ky[j] * ky[j];
        if kt2 <= k2 {
            let kz = (k2 - kt2).sqrt();
            C64::from_polar(1.0, -kz * distance)
        } else {
            evanescent[[j, i]] = true;
            C64::new(0.0, 0.0)
        }
    });
    SpectralKernel {
        grid: *grid,
        distance,
        factors,
        evanescent,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct KernelKey {
    nx: usize,
    ny: usize,
    pitch: u64,
    wavelength: u64,
    distance: u64,
}

impl KernelKey {
    fn new(grid: &Grid, distance: f64) -> Self {
        Self {
            nx: grid.nx,
            ny: grid.ny,
            pitch: grid.pitch.to_bits(),
            wavelength: grid.wavelength.to_bits(),
            distance: distance.to_bits(),
        }
    }
}

const KERNEL_CACHE_LIMIT: usize = 128;

static KERNELS: Lazy<RwLock<HashMap<KernelKey, Arc<SpectralKernel>>>> =
    Lazy::new(|| RwLock::new(HashMap::new()));

/// Shared, cached kernel. Results are identical to [`make_kernel`].
pub fn cached_kernel(grid: &Grid, distance: f64) -> Arc<SpectralKernel> {
    let key = KernelKey::new(grid, distance);
    if let Some(k) = KERNELS.read().get(&key) {
        return Arc::clone(k);
    }
    let kernel = Arc::new(make_kernel(grid, distance));
    let mut map = KERNELS.write();
    if map.len() >= KERNEL_CACHE_LIMIT {
        map.clear();
    }
    Arc::clone(map.entry(key).or_insert(kernel))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropagationOptions {
    /// Zero-padding factor applied during propagation (1 = off, 2 doubles
    /// each grid dimension).
    pub guard_band: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { guard_band: 1 }
    }
}

/// Propagates `field` by `distance` meters.
pub fn propagate(field: &Field, distance: f64) -> Field {
    let kernel = cached_kernel(field.grid(), distance);
    let mut data = field.data().clone();
    kernel.apply(&mut data);
    Field::from_array(*field.grid(), data).expect("shape preserved")
}

pub fn propagate_with(field: &Field, distance: f64, opts: PropagationOptions) -> Result<Field> {
    match opts.guard_band {
        0 => Err(Error::invalid("guard band factor must be >= 1")),
        1 => Ok(propagate(field, distance)),
        g => {
            let grid = field.grid();
            let padded = Grid::new(grid.nx * g, grid.ny * g, grid.pitch, grid.wavelength)?;
            let (ox, oy) = ((padded.nx - grid.nx) / 2, (padded.ny - grid.ny) / 2);
            let mut big = Array2::zeros(padded.shape());
            big.slice_mut(ndarray::s![oy..oy + grid.ny, ox..ox + grid.nx])
                .assign(field.data());
            cached_kernel(&padded, distance).apply(&mut big);
            let cropped = big
                .slice(ndarray::s![oy..oy + grid.ny, ox..ox + grid.nx])
                .to_owned();
            Field::from_array(*grid, cropped)
        }
    }
}

/// Removes evanescent spatial frequencies.
pub fn band_limit(field: &Field) -> Field {
    propagate(field, 0.0)
}

/// Second-moment beam width `2·sqrt(⟨r_x²⟩)` of the intensity along x,
/// about its centroid. Equals the 1/e² radius for a Gaussian.
pub fn second_moment_width_x(field: &Field) -> f64 {
    let grid = field.grid();
    let xs = grid.x_axis();
    let intensity = field.intensity();
    let total: f64 = intensity.sum();
    let mean: f64 = intensity
        .indexed_iter()
        .map(|((_, i), p)| p * xs[i])
        .sum::<f64>()
        / total;
    let var: f64 = intensity
        .indexed_iter()
        .map(|((_, i), p)| p * (xs[i] - mean).powi(2))
        .sum::<f64>()
        / total;
    2.0 * var.sqrt()
}

/// Intensity centroid `(x, y)` in meters.
pub fn centroid(field: &Field) -> (f64, f64) {
    let grid = field.grid();
    let (xs, ys) = (grid.x_axis(), grid.y_axis());
    let intensity = field.intensity();
    let total: f64 = intensity.sum();
    let (mut cx, mut cy) = (0.0, 0.0);
    for ((j, i), p) in intensity.indexed_iter() {
        cx += p * xs[i];
        cy += p * ys[j];
    }
    (cx / total, cy / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{gaussian_spot, hermite_gaussian, inner_product, make_grid};
    use approx::assert_abs_diff_eq;

    fn grid() -> Grid {
        make_grid(64, 64, 8e-6, 633e-9).unwrap()
    }

    #[test]
    fn zero_distance_kernel_is_unity() {
        let k = make_kernel(&grid(), 0.0);
        assert!(k.factors().iter().all(|z| *z == C64::new(1.0, 0.0)));
    }

    #[test]
    fn dc_component_phase() {
        let g = grid();
        let alpha = 1.234e-3;
        let k = make_kernel(&g, alpha);
        let expected = C64::from_polar(1.0, -2.0 * PI * alpha / g.wavelength);
        assert!((k.factors()[[0, 0]] - expected).norm() < 1e-9);
    }

    #[test]
    fn kernels_compose_and_conjugate() {
        let g = grid();
        let (a, b) = (3e-3, -1.1e-3);
        let (ka, kb, kab) = (
            make_kernel(&g, a),
            make_kernel(&g, b),
            make_kernel(&g, a + b),
        );
        for ((x, y), z) in ka.factors().iter().zip(kb.factors()).zip(kab.factors()) {
            assert!((x * y - z).norm() < 1e-9);
        }
        let kn = make_kernel(&g, -a);
        for (x, y) in ka.factors().iter().zip(kn.factors()) {
            assert_eq!(*y, x.conj());
        }
    }

    #[test]
    fn evanescent_components_are_zeroed() {
        // pitch < λ/2 puts the corner frequencies beyond 1/λ
        let g = make_grid(16, 16, 0.3e-6, 1e-6).unwrap();
        let k = make_kernel(&g, 1e-6);
        let n_ev = k.evanescent().iter().filter(|&&e| e).count();
        assert!(n_ev > 0);
        for (f, &e) in k.factors().iter().zip(k.evanescent()) {
            if e {
                assert_eq!(f.norm(), 0.0);
            } else {
                assert_abs_diff_eq!(f.norm(), 1.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn zero_distance_is_identity_and_inverse_roundtrips() {
        let g = grid();
        let f = hermite_gaussian(&g, 1, 2, 40e-6).unwrap();
        let peak = f.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(propagate(&f, 0.0).max_abs_diff(&f) < 1e-12 * peak);
        let back = propagate(&propagate(&f, 17e-3), -17e-3);
        assert!(back.max_abs_diff(&f) < 1e-9 * peak);
    }

    #[test]
    fn cached_and_uncached_kernels_agree() {
        let g = grid();
        let f = gaussian_spot(&g, 40e-6, (16e-6, 0.0)).unwrap();
        let mut direct = f.data().clone();
        make_kernel(&g, 5e-3).apply(&mut direct);
        assert_eq!(&direct, propagate(&f, 5e-3).data());
    }

    #[test]
    fn guard_band_keeps_energy_inside_when_beam_is_small() {
        let g = grid();
        let f = gaussian_spot(&g, 40e-6, (0.0, 0.0)).unwrap();
        let plain = propagate(&f, 2e-3);
        let padded = propagate_with(&f, 2e-3, PropagationOptions { guard_band: 2 }).unwrap();
        assert!(inner_product(&plain, &padded).unwrap().norm() > 0.999);
        assert!(propagate_with(&f, 1e-3, PropagationOptions { guard_band: 0 }).is_err());
    }
}
