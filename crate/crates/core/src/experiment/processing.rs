use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outcome::OutcomeMatrix;
use crate::usd::mesd_bound;

fn ensure_same_shape(a: &OutcomeMatrix, b: &OutcomeMatrix) -> Result<()> {
    if a.values().dim() != b.values().dim() {
        return Err(Error::invalid(format!(
            "matrix shapes differ: {:?} vs {:?}",
            a.values().dim(),
            b.values().dim()
        )));
    }
    Ok(())
}

/// `v = (E₁₁/M₁₁, …, E_dd/M_dd, Σᵢ Eᵢ? / Σᵢ Mᵢ?)`.
pub fn correction_vector(e: &OutcomeMatrix, m: &OutcomeMatrix) -> Result<Vec<f64>> {
    ensure_same_shape(e, m)?;
    let d = e.d();
    let mut v = Vec::with_capacity(d + 1);
    for j in 0..d {
        let den = m.get(j, j);
        if den == 0.0 {
            return Err(Error::invalid(format!(
                "reference entry ({0},{0}) is zero",
                j + 1
            )));
        }
        v.push(e.get(j, j) / den);
    }
    let num: f64 = (0..d).map(|i| e.ambiguous(i)).sum();
    let den: f64 = (0..d).map(|i| m.ambiguous(i)).sum();
    if den == 0.0 {
        return Err(Error::invalid("reference ambiguous column is zero"));
    }
    v.push(num / den);
    Ok(v)
}

/// `M′ᵢⱼ = Mᵢⱼ·vⱼ`.
pub fn scale_columns(m: &OutcomeMatrix, v: &[f64]) -> Result<OutcomeMatrix> {
    if v.len() != m.d() + 1 {
        return Err(Error::invalid(format!(
            "correction vector has {} entries, matrix has {} columns",
            v.len(),
            m.d() + 1
        )));
    }
    let mut out = m.values().clone();
    for (j, &s) in v.iter().enumerate() {
        out.column_mut(j).mapv_inplace(|x| x * s);
    }
    OutcomeMatrix::new(out)
}

/// Undoes per-outcome attenuation in a measured matrix, `Eᵢⱼ / vⱼ`, then
/// renormalizes rows.
pub fn correct_measurement(measured: &OutcomeMatrix, v: &[f64]) -> Result<OutcomeMatrix> {
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::invalid("correction entries must be positive"));
    }
    let inv: Vec<f64> = v.iter().map(|x| 1.0 / x).collect();
    scale_columns(measured, &inv)?.row_normalized()
}

/// Drops the ambiguous column and renormalizes each row.
pub fn confusion_matrix(m: &OutcomeMatrix) -> Result<Array2<f64>> {
    let d = m.d();
    let mut c = Array2::zeros((d, d));
    for i in 0..d {
        let total: f64 = (0..d).map(|j| m.get(i, j)).sum();
        if total <= 0.0 {
            return Err(Error::UndefinedRow(i));
        }
        for j in 0..d {
            c[[i, j]] = m.get(i, j) / total;
        }
    }
    Ok(c)
}

/// Mean diagonal of a confusion matrix.
pub fn accuracy(confusion: &Array2<f64>) -> f64 {
    let d = confusion.nrows();
    (0..d).map(|i| confusion[[i, i]]).sum::<f64>() / d as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorProbability {
    pub per_row: Vec<f64>,
    pub mean: f64,
}

/// Mass in wrong conclusive outcomes, per row and averaged.
pub fn error_probability(m: &OutcomeMatrix) -> ErrorProbability {
    let d = m.d();
    let per_row: Vec<f64> = (0..d)
        .map(|i| (0..d).filter(|&j| j != i).map(|j| m.get(i, j)).sum())
        .collect();
    let mean = per_row.iter().sum::<f64>() / d as f64;
    ErrorProbability { per_row, mean }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MesdRow {
    pub d: usize,
    pub fidelity: f64,
    pub p_err: f64,
    pub mesd_bound: f64,
    pub below_bound: bool,
}

/// One row per `(d, F, normalized matrix)`.
pub fn usd_vs_mesd_report(entries: &[(usize, f64, &OutcomeMatrix)]) -> Result<Vec<MesdRow>> {
    entries
        .iter()
        .map(|&(d, fidelity, m)| {
            if m.d() != d {
                return Err(Error::invalid(format!(
                    "matrix for d = {d} has {} rows",
                    m.d()
                )));
            }
            let p_err = error_probability(m).mean;
            let bound = mesd_bound(fidelity)?;
            Ok(MesdRow {
                d,
                fidelity,
                p_err,
                mesd_bound: bound,
                below_bound: p_err < bound,
            })
        })
        .collect()
}
