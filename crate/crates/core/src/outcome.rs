use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Detection probabilities: one row per input state, one column per outcome
/// (`1..d`, then the ambiguous outcome last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutcomeMatrix {
    #[serde(with = "crate::serde_c64::real_matrix")]
    values: Array2<f64>,
}

impl OutcomeMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows == 0 || cols != rows + 1 {
            return Err(Error::invalid(format!(
                "outcome matrix must be d x (d+1), got {rows} x {cols}"
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "outcome matrix entries must be finite and >= 0",
            ));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        if rows.iter().any(|r| r.len() != d + 1) {
            return Err(Error::invalid("each row needs d+1 entries"));
        }
        Self::new(Array2::from_shape_vec((d, d + 1), flat).expect("length checked"))
    }

    /// Number of input states.
    pub fn d(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, input: usize, outcome: usize) -> f64 {
        self.values[[input, outcome]]
    }

    pub fn ambiguous(&self, input: usize) -> f64 {
        self.values[[input, self.d()]]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.values.rows().into_iter().map(|r| r.sum()).collect()
    }

    /// Rows rescaled to sum to one.
    pub fn row_normalized(&self) -> Result<Self> {
        let mut values = self.values.clone();
        for (i, mut row) in values.rows_mut().into_iter().enumerate() {
            let s = row.sum();
            if s <= 0.0 {
                return Err(Error::invalid(format!(
                    "row {i} has zero total probability"
                )));
            }
            row.mapv_inplace(|v| v / s);
        }
        Ok(Self { values })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.rows().into_iter().map(|r| r.to_vec()).collect()
    }
}
