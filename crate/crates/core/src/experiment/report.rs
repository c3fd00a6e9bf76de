use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::detect::SimulatedOutcomes;
use super::processing::{
    confusion_matrix, correct_measurement, correction_vector, error_probability, ErrorProbability,
};
use super::Geometry;
use crate::error::{Error, Result};
use crate::mplc::WfmReport;
use crate::outcome::OutcomeMatrix;
use crate::usd::{ideal_pattern, mesd_bound};

/// Everything recorded for one `(d, F)` run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub d: usize,
    pub fidelity: f64,
    pub geometry: Geometry,
    /// Absent when the masks were bypassed.
    pub wfm: Option<WfmReport>,
    pub raw: OutcomeMatrix,
    pub normalized: OutcomeMatrix,
    pub ideal: OutcomeMatrix,
    /// Absent when the ideal matrix has an empty column.
    pub correction: Option<Vec<f64>>,
    pub corrected: Option<OutcomeMatrix>,
    #[serde(with = "crate::serde_c64::real_matrix")]
    pub confusion: Array2<f64>,
    pub p_err: ErrorProbability,
    pub mesd_bound: f64,
    pub below_bound: bool,
    pub mean_ambiguous: f64,
}

impl RunReport {
    pub fn new(
        d: usize,
        fidelity: f64,
        geometry: &Geometry,
        wfm: Option<WfmReport>,
        outcomes: &SimulatedOutcomes,
    ) -> Result<Self> {
        if outcomes.normalized.d() != d {
            return Err(Error::invalid(format!(
                "outcome matrix has {} rows, expected {d}",
                outcomes.normalized.d()
            )));
        }
        let ideal = ideal_pattern(d, fidelity);
        let normalized = outcomes.normalized.clone();
        let (correction, corrected) = match correction_vector(&normalized, &ideal) {
            Ok(v) if v.iter().all(|x| *x > 0.0) => {
                let c = correct_measurement(&normalized, &v)?;
                (Some(v), Some(c))
            }
            _ => (None, None),
        };
        let p_err = error_probability(&normalized);
        let bound = mesd_bound(fidelity)?;
        let mean_ambiguous = (0..d).map(|i| normalized.ambiguous(i)).sum::<f64>() / d as f64;
        Ok(Self {
            d,
            fidelity,
            geometry: geometry.clone(),
            wfm,
            raw: outcomes.raw.clone(),
            confusion: confusion_matrix(&normalized)?,
            normalized,
            ideal,
            correction,
            corrected,
            below_bound: p_err.mean < bound,
            p_err,
            mesd_bound: bound,
            mean_ambiguous,
        })
    }

    /// Writes `report.json` and one CSV per matrix into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let json = serde_json::to_string_pretty(self).expect("report is serializable");
        let path = dir.join("report.json");
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        written.push(path);
        let mut mats: Vec<(&str, &Array2<f64>, bool)> = vec![
            ("raw.csv", self.raw.values(), true),
            ("normalized.csv", self.normalized.values(), true),
            ("ideal.csv", self.ideal.values(), true),
            ("confusion.csv", &self.confusion, false),
        ];
        if let Some(c) = &self.corrected {
            mats.push(("corrected.csv", c.values(), true));
        }
        for (name, m, with_ambiguous) in mats {
            let path = dir.join(name);
            std::fs::write(&path, matrix_csv(m, with_ambiguous))
                .map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// CSV with an `input` column and outcome headers `1..d` (plus `?`).
pub fn matrix_csv(m: &Array2<f64>, with_ambiguous: bool) -> String {
    let mut s = String::from("input");
    for j in 0..m.ncols() {
        if with_ambiguous && j + 1 == m.ncols() {
            s.push_str(",?");
        } else {
            let _ = write!(s, ",{}", j + 1);
        }
    }
    s.push('\n');
    for (i, row) in m.rows().into_iter().enumerate() {
        let _ = write!(s, "{}", i + 1);
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}
