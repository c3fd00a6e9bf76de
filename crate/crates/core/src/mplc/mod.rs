//! Multi-plane light converter: a stack of phase-only masks separated by
//! free-space propagation.
//!
//! Light travels `lead_in` to plane 1, picks up `exp(i·φ₁)`, travels
//! `plane_spacing` to plane 2, and so on; after the last mask it travels
//! `lead_out` to the output plane.

mod io;
mod wfm;

pub use io::{
    export_system, import_system, read_manifest, read_mask_pgm, read_mask_text, write_mask_pgm,
    write_mask_text, Manifest, MaskFiles, MaskFormat, MANIFEST_NAME,
};
pub use wfm::{mask_update, wavefront_match, MaskInit, UpdateRule, WfmOptions, WfmReport};

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::optics::{inner_product, Field, Grid, C64};
use crate::propagation::{cached_kernel, SpectralKernel};

/// Wraps a phase into (−π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    if p <= -PI {
        p += 2.0 * PI;
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct MplcSystem {
    grid: Grid,
    plane_spacing: f64,
    lead_in: f64,
    lead_out: f64,
    masks: Vec<Array2<f64>>,
}

impl MplcSystem {
    /// A system with `n_planes` flat (zero-phase) masks.
    pub fn new(
        grid: Grid,
        n_planes: usize,
        plane_spacing: f64,
        lead_in: f64,
        lead_out: f64,
    ) -> Result<Self> {
        if n_planes == 0 {
            return Err(Error::invalid("an MPLC needs at least one plane"));
        }
        let masks = vec![Array2::zeros(grid.shape()); n_planes];
        Self::with_masks(grid, plane_spacing, lead_in, lead_out, masks)
    }

    pub fn with_masks(
        grid: Grid,
        plane_spacing: f64,
        lead_in: f64,
        lead_out: f64,
        masks: Vec<Array2<f64>>,
    ) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::invalid("an MPLC needs at least one plane"));
        }
        for (name, v) in [
            ("plane_spacing", plane_spacing),
            ("lead_in", lead_in),
            ("lead_out", lead_out),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (p, m) in masks.iter().enumerate() {
            if m.dim() != grid.shape() {
                return Err(Error::invalid(format!(
                    "mask {} has shape {:?}, grid is {:?}",
                    p + 1,
                    m.dim(),
                    grid.shape()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "mask {} has non-finite phases",
                    p + 1
                )));
            }
        }
        let masks = masks.into_iter().map(|m| m.mapv(wrap_phase)).collect();
        Ok(Self {
            grid,
            plane_spacing,
            lead_in,
            lead_out,
            masks,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_planes(&self) -> usize {
        self.masks.len()
    }

    pub fn plane_spacing(&self) -> f64 {
        self.plane_spacing
    }

    pub fn lead_in(&self) -> f64 {
        self.lead_in
    }

    pub fn lead_out(&self) -> f64 {
        self.lead_out
    }

    pub fn masks(&self) -> &[Array2<f64>] {
        &self.masks
    }

    pub fn mask(&self, plane: usize) -> &Array2<f64> {
        &self.masks[plane]
    }

    /// Replaces the phase of `plane` (0-based), wrapping into (−π, π].
    pub fn set_mask(&mut self, plane: usize, mask: Array2<f64>) -> Result<()> {
        if plane >= self.masks.len() {
            return Err(Error::invalid(format!("plane {plane} out of range")));
        }
        if mask.dim() != self.grid.shape() {
            return Err(Error::invalid("mask shape does not match grid"));
        }
        self.masks[plane] = mask.mapv(wrap_phase);
        Ok(())
    }

    /// Total optical path from input plane to output plane.
    pub fn total_length(&self) -> f64 {
        self.lead_in + self.plane_spacing * (self.n_planes() - 1) as f64 + self.lead_out
    }

    pub(crate) fn kernels(&self) -> Kernels {
        Kernels {
            lead_in: cached_kernel(&self.grid, self.lead_in),
            spacing: cached_kernel(&self.grid, self.plane_spacing),
            lead_out: cached_kernel(&self.grid, self.lead_out),
            back_lead_in: cached_kernel(&self.grid, -self.lead_in),
            back_spacing: cached_kernel(&self.grid, -self.plane_spacing),
            back_lead_out: cached_kernel(&self.grid, -self.lead_out),
        }
    }

    /// Input plane → output plane.
    pub fn apply_forward(&self, field: &Field) -> Result<Field> {
        self.grid.ensure_same(field.grid())?;
        let k = self.kernels();
        let mut data = field.data().clone();
        k.lead_in.apply(&mut data);
        for p in 0..self.n_planes() {
            apply_phase(&mut data, &self.masks[p], 1.0);
            self.forward_kernel(&k, p).apply(&mut data);
        }
        Field::from_array(self.grid, data)
    }

    /// Exact adjoint of [`apply_forward`](Self::apply_forward): output plane
    /// → input plane with conjugated masks and negated distances.
    pub fn apply_backward(&self, field: &Field) -> Result<Field> {
        self.grid.ensure_same(field.grid())?;
        let k = self.kernels();
        let mut data = field.data().clone();
        k.back_lead_out.apply(&mut data);
        for p in (0..self.n_planes()).rev() {
            apply_phase(&mut data, &self.masks[p], -1.0);
            let kernel = if p == 0 {
                &k.back_lead_in
            } else {
                &k.back_spacing
            };
            kernel.apply(&mut data);
        }
        Field::from_array(self.grid, data)
    }

    /// Kernel for the hop after `plane`.
    pub(crate) fn forward_kernel<'a>(&self, k: &'a Kernels, plane: usize) -> &'a SpectralKernel {
        if plane + 1 == self.n_planes() {
            &k.lead_out
        } else {
            &k.spacing
        }
    }
}

pub(crate) struct Kernels {
    pub lead_in: Arc<SpectralKernel>,
    pub spacing: Arc<SpectralKernel>,
    pub lead_out: Arc<SpectralKernel>,
    pub back_lead_in: Arc<SpectralKernel>,
    pub back_spacing: Arc<SpectralKernel>,
    pub back_lead_out: Arc<SpectralKernel>,
}

/// Multiplies by `exp(i·sign·φ)`.
pub(crate) fn apply_phase(data: &mut Array2<C64>, mask: &Array2<f64>, sign: f64) {
    Zip::from(data)
        .and(mask)
        .for_each(|z, &phi| *z *= C64::from_polar(1.0, sign * phi));
}

/// `T[j, i] = ⟨output_j | U input_i⟩`.
pub fn transfer_matrix(
    system: &MplcSystem,
    inputs: &[Field],
    outputs: &[Field],
) -> Result<Array2<C64>> {
    for f in inputs.iter().chain(outputs) {
        system.grid.ensure_same(f.grid())?;
    }
    let propagated = inputs
        .iter()
        .map(|f| system.apply_forward(f))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Array2::zeros((outputs.len(), inputs.len()));
    for (j, out) in outputs.iter().enumerate() {
        for (i, u) in propagated.iter().enumerate() {
            t[[j, i]] = inner_product(out, u)?;
        }
    }
    Ok(t)
}
