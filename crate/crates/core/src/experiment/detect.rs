use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::SorterDesign;
use crate::error::{Error, Result};
use crate::optics::{Field, Grid};
use crate::outcome::OutcomeMatrix;

/// Camera regions integrated for each outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorLayout {
    grid: Grid,
    centers: Vec<(f64, f64)>,
    radius: f64,
    #[serde(skip)]
    masks: Vec<Array2<bool>>,
    /// Fraction of each outcome's own spot power collected by its disk.
    efficiency: Vec<f64>,
}

impl DetectorLayout {
    /// Disks of `radius` around `centers`, with unit efficiency.
    pub fn new(grid: &Grid, centers: Vec<(f64, f64)>, radius: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::invalid("detector needs at least one outcome"));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid(format!(
                "detector radius must be positive, got {radius}"
            )));
        }
        for i in 0..centers.len() {
            for j in (i + 1)..centers.len() {
                let (a, b) = (centers[i], centers[j]);
                let dist = (a.0 - b.0).hypot(a.1 - b.1);
                if dist <= 2.0 * radius {
                    return Err(Error::invalid(format!(
                        "detector disks {} and {} overlap (centers {dist:e} m apart, radius {radius:e} m)",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let masks = centers.iter().map(|&c| disk(grid, c, radius)).collect();
        let efficiency = vec![1.0; centers.len()];
        Ok(Self {
            grid: *grid,
            centers,
            radius,
            masks,
            efficiency,
        })
    }

    /// Like [`new`](Self::new), with efficiencies measured on `spots`
    /// (one per outcome).
    pub fn calibrated(
        grid: &Grid,
        centers: Vec<(f64, f64)>,
        radius: f64,
        spots: &[Field],
    ) -> Result<Self> {
        let mut layout = Self::new(grid, centers, radius)?;
        if spots.len() != layout.len() {
            return Err(Error::invalid(format!(
                "{} calibration spots for {} outcomes",
                spots.len(),
                layout.len()
            )));
        }
        let eff = spots
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let e = layout.integrate(s)?[k] / s.power();
                if e > 0.0 {
                    Ok(e)
                } else {
                    Err(Error::invalid(format!(
                        "outcome {} collects no calibration light",
                        k + 1
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        layout.efficiency = eff;
        Ok(layout)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[(f64, f64)] {
        &self.centers
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn masks(&self) -> &[Array2<bool>] {
        &self.masks
    }

    pub fn efficiency(&self) -> &[f64] {
        &self.efficiency
    }

    /// Power inside each disk.
    pub fn integrate(&self, field: &Field) -> Result<Vec<f64>> {
        self.grid.ensure_same(field.grid())?;
        let area = self.grid.pixel_area();
        Ok(self
            .masks
            .iter()
            .map(|m| {
                let mut s = 0.0;
                Zip::from(m).and(field.data()).for_each(|&inside, z| {
                    if inside {
                        s += z.norm_sqr();
                    }
                });
                s * area
            })
            .collect())
    }
}

fn disk(grid: &Grid, center: (f64, f64), radius: f64) -> Array2<bool> {
    let r2 = radius * radius;
    Array2::from_shape_fn(grid.shape(), |(j, i)| {
        let dx = grid.x(i) - center.0;
        let dy = grid.y(j) - center.1;
        dx * dx + dy * dy <= r2
    })
}

/// Detector readout for a set of inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulatedOutcomes {
    /// Power integrated in each disk, inputs of unit power.
    pub raw: OutcomeMatrix,
    /// Raw powers divided by disk efficiency, then row-normalized.
    pub normalized: OutcomeMatrix,
    /// Fraction of each input's power landing in any disk.
    pub collected: Vec<f64>,
}

/// Reads out output-plane `fields`, one per input state.
pub fn outcomes_from_fields(
    fields: &[Field],
    detector: &DetectorLayout,
) -> Result<SimulatedOutcomes> {
    let d = fields.len();
    if detector.len() != d + 1 {
        return Err(Error::invalid(format!(
            "{d} inputs need {} outcomes, detector has {}",
            d + 1,
            detector.len()
        )));
    }
    let mut raw = Array2::zeros((d, d + 1));
    let mut collected = Vec::with_capacity(d);
    for (i, f) in fields.iter().enumerate() {
        let p = detector.integrate(f)?;
        collected.push(p.iter().sum());
        for (k, v) in p.into_iter().enumerate() {
            raw[[i, k]] = v;
        }
    }
    let mut compensated = raw.clone();
    for (k, &e) in detector.efficiency().iter().enumerate() {
        compensated.column_mut(k).mapv_inplace(|v| v / e);
    }
    Ok(SimulatedOutcomes {
        raw: OutcomeMatrix::new(raw)?,
        normalized: OutcomeMatrix::new(compensated)?.row_normalized()?,
        collected,
    })
}

/// Propagates each design input through the trained masks and reads it out.
pub fn simulate_outcomes(
    design: &SorterDesign,
    detector: &DetectorLayout,
) -> Result<SimulatedOutcomes> {
    let outputs = design
        .inputs()
        .iter()
        .map(|f| design.system.apply_forward(f))
        .collect::<Result<Vec<_>>>()?;
    outcomes_from_fields(&outputs, detector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{Geometry, SorterTask};
    use crate::usd::ideal_outcome_matrix;

    #[test]
    fn overlapping_disks_are_rejected() {
        let g = Geometry::default().grid().unwrap();
        let err = DetectorLayout::new(&g, vec![(0.0, 0.0), (100e-6, 0.0)], 60e-6).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        assert!(DetectorLayout::new(&g, vec![(0.0, 0.0), (130e-6, 0.0)], 60e-6).is_ok());
    }

    #[test]
    fn disks_catch_most_of_their_spot() {
        let geo = Geometry::default();
        for count in [3, 4, 9] {
            let det = geo.detector(count).unwrap();
            for e in det.efficiency() {
                assert!(*e >= 0.98, "{e}");
            }
        }
    }

    #[test]
    fn ideal_fields_reproduce_ideal_matrix() {
        let geo = Geometry::default();
        for (d, f) in [(2, 0.2), (3, 0.5), (5, 0.8)] {
            let task = SorterTask::new(d, f, &geo).unwrap();
            let det = geo.detector(d + 1).unwrap();
            let out = outcomes_from_fields(&task.targets, &det).unwrap();
            let ideal = ideal_outcome_matrix(&task.states).unwrap();
            for (a, b) in out.normalized.values().iter().zip(ideal.values()) {
                assert!((a - b).abs() < 1e-6, "d={d} F={f}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn target_fields_land_in_their_own_disk() {
        let geo = Geometry::default();
        let task = SorterTask::new(3, 0.0, &geo).unwrap();
        let det = geo.detector(4).unwrap();
        let out = outcomes_from_fields(&task.spots[..3], &det).unwrap();
        for i in 0..3 {
            assert!(out.raw.get(i, i) >= 0.98);
        }
    }
}
