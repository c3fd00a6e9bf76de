//! End-to-end virtual experiments: sorter construction, detection, data
//! processing and the overlapping-image demo.

mod detect;
mod images;
mod processing;
mod report;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mplc::{wavefront_match, MplcSystem, WfmOptions, WfmReport};
use crate::optics::{
    gaussian_spot, hg_family, inner_product, make_grid, spot_layout, superpose, Field, Grid,
    ModeBasis, SamplingPolicy, C64,
};
use crate::usd::{symmetric_states, theta_for_fidelity, OverlapBranch, SymmetricStateSet};

pub use detect::{outcomes_from_fields, simulate_outcomes, DetectorLayout, SimulatedOutcomes};
pub use images::{
    fidelity_matrix, field_from_image, image_usd, load_image, save_image_pgm, synthetic_faces,
    AuxField, ImageOptions, ImageTask, ImageUsdResult, PixelMode,
};
pub use processing::{
    accuracy, confusion_matrix, correct_measurement, correction_vector, error_probability,
    scale_columns, usd_vs_mesd_report, ErrorProbability, MesdRow,
};
pub use report::{matrix_csv, RunReport};

/// Largest supported state dimension.
pub const MAX_DIMENSION: usize = 8;
/// Output spots must overlap less than this (squared magnitude).
pub const SPOT_CROSSTALK_LIMIT: f64 = 1e-4;

/// Spot centers and the matching normalized Gaussian fields.
pub type SpotSet = (Vec<(f64, f64)>, Vec<Field>);

/// Physical layout of a simulated sorter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    pub nx: usize,
    pub ny: usize,
    /// Sample pitch (m).
    pub pitch: f64,
    /// Wavelength (m).
    pub wavelength: f64,
    pub n_planes: usize,
    /// Distance between consecutive masks (m).
    pub plane_spacing: f64,
    /// Input plane to first mask (m).
    pub lead_in: f64,
    /// Last mask to detector (m).
    pub lead_out: f64,
    /// Waist of the input Hermite-Gauss family (m).
    pub input_waist: f64,
    /// Waist of each output spot (m).
    pub spot_waist: f64,
    /// Radius of the spot circle (m); derived from the spot count when absent.
    pub spot_radius: Option<f64>,
    /// Detector disk radius in units of the spot waist.
    pub detector_radius_waists: f64,
    /// Adjacent spots sit at least this many waists apart when the radius
    /// is derived.
    pub spot_spacing_waists: f64,
    /// Reject undersampled modes instead of warning.
    pub strict: bool,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            nx: 256,
            ny: 256,
            pitch: 8e-6,
            wavelength: 633e-9,
            n_planes: 4,
            plane_spacing: 17e-3,
            lead_in: 17e-3,
            lead_out: 17e-3,
            input_waist: 40e-6,
            spot_waist: 32e-6,
            spot_radius: None,
            detector_radius_waists: 1.5,
            spot_spacing_waists: 6.0,
            strict: false,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if self.n_planes == 0 {
            return Err(Error::invalid("n_planes must be >= 1"));
        }
        for (name, v) in [
            ("plane_spacing", self.plane_spacing),
            ("lead_in", self.lead_in),
            ("lead_out", self.lead_out),
            ("input_waist", self.input_waist),
            ("spot_waist", self.spot_waist),
            ("detector_radius_waists", self.detector_radius_waists),
            ("spot_spacing_waists", self.spot_spacing_waists),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(r) = self.spot_radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::invalid(format!(
                    "spot_radius must be positive, got {r}"
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        make_grid(self.nx, self.ny, self.pitch, self.wavelength)
    }

    pub fn policy(&self) -> SamplingPolicy {
        SamplingPolicy {
            strict: self.strict,
        }
    }

    /// Radius of the circle carrying `count` spots.
    pub fn spot_radius_for(&self, count: usize) -> f64 {
        self.spot_radius.unwrap_or_else(|| {
            if count < 2 {
                0.0
            } else {
                0.5 * self.spot_spacing_waists * self.spot_waist / (PI / count as f64).sin()
            }
        })
    }

    pub fn detector_radius(&self) -> f64 {
        self.detector_radius_waists * self.spot_waist
    }

    /// An untrained system with flat masks.
    pub fn system(&self) -> Result<MplcSystem> {
        MplcSystem::new(
            self.grid()?,
            self.n_planes,
            self.plane_spacing,
            self.lead_in,
            self.lead_out,
        )
    }

    /// `count` output spots on a circle, ordered as [`spot_layout`].
    pub fn spots(&self, count: usize) -> Result<SpotSet> {
        let grid = self.grid()?;
        let centers = spot_layout(count, self.spot_radius_for(count), (0.0, 0.0))?;
        let fields = centers
            .iter()
            .map(|&c| gaussian_spot(&grid, self.spot_waist, c))
            .collect::<Result<Vec<_>>>()?;
        for i in 0..fields.len() {
            for j in (i + 1)..fields.len() {
                let o = inner_product(&fields[i], &fields[j])?.norm_sqr();
                if o >= SPOT_CROSSTALK_LIMIT {
                    return Err(Error::invalid(format!(
                        "spots {} and {} overlap by {o:.2e}; increase the spot radius",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok((centers, fields))
    }

    pub fn detector(&self, count: usize) -> Result<DetectorLayout> {
        let (centers, spots) = self.spots(count)?;
        DetectorLayout::calibrated(&self.grid()?, centers, self.detector_radius(), &spots)
    }
}

/// Input and target fields for a `(d, F)` sorter, before training.
#[derive(Debug, Clone)]
pub struct SorterTask {
    pub d: usize,
    pub fidelity: f64,
    pub states: SymmetricStateSet,
    /// The `d+1` Hermite-Gauss modes with `m + n = d`, lexicographic in `(m, n)`.
    pub basis: ModeBasis,
    pub inputs: Vec<Field>,
    /// `√(1−F)·spotᵢ + √F·spot_?`.
    pub targets: Vec<Field>,
    /// `d+1` spots, ambiguous last.
    pub spots: Vec<Field>,
    pub spot_centers: Vec<(f64, f64)>,
}

impl SorterTask {
    pub fn new(d: usize, fidelity: f64, geometry: &Geometry) -> Result<Self> {
        if !(2..=MAX_DIMENSION).contains(&d) {
            return Err(Error::invalid(format!(
                "dimension must lie in 2..={MAX_DIMENSION}, got {d}"
            )));
        }
        if !(0.0..1.0).contains(&fidelity) {
            return Err(Error::invalid(format!(
                "fidelity must lie in [0, 1), got {fidelity}"
            )));
        }
        geometry.validate()?;
        let grid = geometry.grid()?;
        let theta = theta_for_fidelity(d, fidelity, OverlapBranch::Positive)?;
        let states = symmetric_states(d, theta)?;
        let basis = hg_family(&grid, d, geometry.input_waist, geometry.policy())?;
        let inputs = states
            .states
            .iter()
            .map(|s| superpose(&s.embed(d + 1), &basis))
            .collect::<Result<Vec<_>>>()?;
        let (spot_centers, spots) = geometry.spots(d + 1)?;
        let a = C64::new((1.0 - fidelity).sqrt(), 0.0);
        let b = C64::new(fidelity.sqrt(), 0.0);
        let targets = (0..d)
            .map(|i| {
                let mut t = spots[i].scaled(a);
                t.add_scaled(b, &spots[d])?;
                t.normalized()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            d,
            fidelity,
            states,
            basis,
            inputs,
            targets,
            spots,
            spot_centers,
        })
    }

    pub fn train(self, geometry: &Geometry, opts: &WfmOptions) -> Result<SorterDesign> {
        let (system, report) =
            wavefront_match(&geometry.system()?, &self.inputs, &self.targets, opts)?;
        Ok(SorterDesign {
            task: self,
            system,
            report,
        })
    }
}

/// A trained sorter.
#[derive(Debug, Clone)]
pub struct SorterDesign {
    pub task: SorterTask,
    pub system: MplcSystem,
    pub report: WfmReport,
}

impl SorterDesign {
    pub fn d(&self) -> usize {
        self.task.d
    }

    pub fn fidelity(&self) -> f64 {
        self.task.fidelity
    }

    pub fn inputs(&self) -> &[Field] {
        &self.task.inputs
    }

    pub fn targets(&self) -> &[Field] {
        &self.task.targets
    }
}

/// Builds and trains the sorter for `d` symmetric states of pairwise fidelity `F`.
pub fn build_sorter(
    d: usize,
    fidelity: f64,
    geometry: &Geometry,
    opts: &WfmOptions,
) -> Result<SorterDesign> {
    SorterTask::new(d, fidelity, geometry)?.train(geometry, opts)
}
