//! Symmetric non-orthogonal state sets and their unambiguous-discrimination
//! measurement, in abstract Hilbert space.
//!
//! The `d` states are built from a regular simplex frame of `d` unit vectors
//! in `d−1` dimensions (pairwise overlap `−1/(d−1)`), mixed into an extra
//! coordinate with angle θ:
//! `|ψᵢ⟩ = sinθ·|ψ′ᵢ⟩ + cosθ·|d⟩`, giving a common overlap
//! `β = cos²θ − sin²θ/(d−1)` and fidelity `F = β²`.
//!
//! The measurement vectors are `Dᵢ ∝ ψᵢ^⊥ + sqrt(−⟨ψ₁^⊥|ψ₂^⊥⟩)·|d+1⟩`,
//! where `ψᵢ^⊥` is orthogonal to every other state, completed by one
//! ambiguous vector. With this construction `|⟨Dᵢ|ψᵢ⟩|² = 1 − |β|`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{StateVec, C64};
use crate::outcome::OutcomeMatrix;

/// Relative singular-value threshold below which a state set is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// `d` real unit vectors in `d−1` dimensions with pairwise overlap `−1/(d−1)`,
/// built one lower-triangular component at a time.
pub fn symmetric_frame(d: usize) -> Result<Vec<StateVec>> {
    if d < 2 {
        return Err(Error::invalid(format!("dimension must be >= 2, got {d}")));
    }
    let dim = d - 1;
    let target = -1.0 / (d - 1) as f64;
    let mut psi = vec![vec![0.0f64; dim]; d];
    for i in 0..d {
        for j in 0..dim {
            psi[i][j] = if i == 0 && j == 0 {
                1.0
            } else if j < i {
                let partial: f64 = (0..j).map(|a| psi[i][a] * psi[j][a]).sum();
                (target - partial) / psi[j][j]
            } else if j == i {
                let partial: f64 = (0..j).map(|a| psi[i][a] * psi[i][a]).sum();
                (1.0 - partial).max(0.0).sqrt()
            } else {
                0.0
            };
        }
    }
    Ok(psi.iter().map(|v| StateVec::from_real(v)).collect())
}

/// Which sign of the overlap `β = ±sqrt(F)` to realize.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapBranch {
    #[default]
    Positive,
    Negative,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymmetricStateSet {
    pub d: usize,
    pub theta: f64,
    pub states: Vec<StateVec>,
    /// Common pairwise overlap ⟨ψᵢ|ψⱼ⟩ (real for this construction).
    pub beta: f64,
    /// `|β|²`.
    pub fidelity: f64,
}

pub fn overlap_for_theta(d: usize, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    c * c - s * s / (d - 1) as f64
}

/// Mixes the simplex frame into a `d`-th coordinate at angle `theta ∈ [0, π/2]`.
pub fn symmetric_states(d: usize, theta: f64) -> Result<SymmetricStateSet> {
    let frame = symmetric_frame(d)?;
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(Error::invalid(format!(
            "theta must lie in [0, π/2], got {theta}"
        )));
    }
    let (s, c) = theta.sin_cos();
    let states = frame
        .iter()
        .map(|f| {
            let mut v: Vec<C64> = f.coeffs().iter().map(|z| z * s).collect();
            v.push(C64::new(c, 0.0));
            StateVec::new(v)
        })
        .collect();
    let beta = overlap_for_theta(d, theta);
    Ok(SymmetricStateSet {
        d,
        theta,
        states,
        beta,
        fidelity: beta * beta,
    })
}

/// Mixing angle giving `|β|² = fidelity` on the requested branch.
pub fn theta_for_fidelity(d: usize, fidelity: f64, branch: OverlapBranch) -> Result<f64> {
    if d < 2 {
        return Err(Error::invalid(format!("dimension must be >= 2, got {d}")));
    }
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(Error::invalid(format!(
            "fidelity must lie in [0, 1], got {fidelity}"
        )));
    }
    let beta = match branch {
        OverlapBranch::Positive => fidelity.sqrt(),
        OverlapBranch::Negative => -fidelity.sqrt(),
    };
    // β = 1 − sin²θ·d/(d−1)
    let sin2 = (1.0 - beta) * (d - 1) as f64 / d as f64;
    if sin2 > 1.0 + 1e-15 {
        return Err(Error::NoSolution(format!(
            "overlap {beta} is below the minimum −1/(d−1) for d = {d}"
        )));
    }
    Ok(sin2.clamp(0.0, 1.0).sqrt().asin())
}

/// Unit vector orthogonal to every state except `states[i]`, phased so that
/// ⟨ψᵢ^⊥|ψᵢ⟩ is real and positive.
pub fn orthocomplement(states: &[StateVec], i: usize) -> Result<StateVec> {
    if states.len() < 2 {
        return Err(Error::invalid("need at least two states"));
    }
    if i >= states.len() {
        return Err(Error::invalid(format!("state index {i} out of range")));
    }
    let n = states[0].len();
    if states.iter().any(|s| s.len() != n) {
        return Err(Error::invalid("states have different lengths"));
    }
    let others: Vec<&StateVec> = states
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, s)| s)
        .collect();
    let stacked = DMatrix::from_fn(n, others.len(), |r, c| others[c][r]);
    let svd = stacked.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let significant: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > RANK_TOLERANCE * smax)
        .collect();
    if smax == 0.0 || significant.len() < others.len() {
        return Err(Error::DegenerateInput(format!(
            "the states other than #{i} span only {} of {} dimensions",
            significant.len(),
            others.len()
        )));
    }
    let target = &states[i];
    let mut residual = target.clone();
    for &k in &significant {
        let col = StateVec::new(u.column(k).iter().copied().collect());
        residual = residual.sub_scaled(col.inner(target), &col);
    }
    let norm = residual.norm();
    if norm < RANK_TOLERANCE * target.norm().max(1.0) {
        return Err(Error::DegenerateInput(format!(
            "state #{i} lies in the span of the others"
        )));
    }
    let v = residual.scaled(C64::new(1.0 / norm, 0.0));
    let phase = v.inner(target);
    Ok(v.scaled(C64::from_polar(1.0, phase.arg())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UsdMeasurement {
    pub d: usize,
    /// Discrimination vectors D₁…D_d in `d+1` dimensions.
    pub vectors: Vec<StateVec>,
    /// The ambiguous outcome |?⟩.
    pub ambiguous: StateVec,
    /// ⟨Dᵢ|ψᵢ⟩, common to all i.
    #[serde(with = "c64_pair")]
    pub alpha: C64,
    /// Input states padded with a zero coefficient to `d+1` dimensions.
    pub embedded_states: Vec<StateVec>,
    /// ⟨ψ₁^⊥|ψ₂^⊥⟩.
    #[serde(with = "c64_pair")]
    pub cross_overlap: C64,
}

mod c64_pair {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(C64::new(re, im))
    }
}

impl UsdMeasurement {
    /// All `d+1` outcome vectors, ambiguous last.
    pub fn outcomes(&self) -> impl Iterator<Item = &StateVec> {
        self.vectors.iter().chain(std::iter::once(&self.ambiguous))
    }
}

const CROSS_TOLERANCE: f64 = 1e-9;

pub fn usd_measurement(set: &SymmetricStateSet) -> Result<UsdMeasurement> {
    let d = set.d;
    if set.fidelity >= 1.0 {
        return Err(Error::DegenerateInput(
            "identical states cannot be discriminated".into(),
        ));
    }
    let perps = (0..d)
        .map(|i| orthocomplement(&set.states, i))
        .collect::<Result<Vec<_>>>()?;
    let cross = perps[0].inner(&perps[1]);
    if cross.im.abs() > CROSS_TOLERANCE || cross.re > CROSS_TOLERANCE {
        return Err(Error::ConstructionViolated(format!(
            "⟨ψ₁^⊥|ψ₂^⊥⟩ = {cross} must be real and non-positive"
        )));
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let c = perps[i].inner(&perps[j]);
            if (c - cross).norm() > 1e-8 {
                return Err(Error::ConstructionViolated(format!(
                    "⟨ψ{}^⊥|ψ{}^⊥⟩ = {c} differs from {cross}; the set is not symmetric",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    let lift = (-cross.re).max(0.0).sqrt();
    let vectors: Vec<StateVec> = perps
        .iter()
        .map(|p| {
            let mut v = p.embed(d + 1).into_coeffs();
            v[d] = C64::new(lift, 0.0);
            StateVec::new(v)
                .normalized()
                .expect("non-zero by construction")
        })
        .collect();
    let embedded_states: Vec<StateVec> = set.states.iter().map(|s| s.embed(d + 1)).collect();

    let ambiguous = gram_schmidt(&StateVec::basis(d + 1, d), &vectors)
        .or_else(|| gram_schmidt(&embedded_states[0], &vectors))
        .ok_or_else(|| {
            Error::ConstructionViolated("could not complete the measurement basis".into())
        })?;
    let alpha = vectors[0].inner(&embedded_states[0]);
    Ok(UsdMeasurement {
        d,
        vectors,
        ambiguous,
        alpha,
        embedded_states,
        cross_overlap: cross,
    })
}

fn gram_schmidt(start: &StateVec, against: &[StateVec]) -> Option<StateVec> {
    let mut v = start.clone();
    for b in against {
        v = v.sub_scaled(b.inner(&v), b);
    }
    (v.norm() >= 1e-10).then(|| v.normalized().expect("non-zero"))
}

/// Ideal detection pattern: `1−F` in the own outcome, `F` in the ambiguous
/// outcome, zero elsewhere.
pub fn ideal_outcome_matrix(set: &SymmetricStateSet) -> Result<OutcomeMatrix> {
    usd_measurement(set)?;
    Ok(ideal_pattern(set.d, set.fidelity))
}

pub(crate) fn ideal_pattern(d: usize, fidelity: f64) -> OutcomeMatrix {
    let mut m = ndarray::Array2::zeros((d, d + 1));
    for i in 0..d {
        m[[i, i]] = 1.0 - fidelity;
        m[[i, d]] = fidelity;
    }
    OutcomeMatrix::new(m).expect("valid by construction")
}

/// Born-rule probabilities |⟨outcome_k|ψᵢ⟩|² of the constructed measurement.
pub fn measurement_probabilities(meas: &UsdMeasurement) -> OutcomeMatrix {
    let d = meas.d;
    let mut m = ndarray::Array2::zeros((d, d + 1));
    for (i, psi) in meas.embedded_states.iter().enumerate() {
        for (k, out) in meas.outcomes().enumerate() {
            m[[i, k]] = out.inner(psi).norm_sqr();
        }
    }
    OutcomeMatrix::new(m).expect("probabilities are non-negative")
}

/// Minimum error probability of a minimum-error measurement on states of
/// pairwise fidelity `F`: `½(1 − sqrt(1 − F))`.
pub fn mesd_bound(fidelity: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(Error::invalid(format!(
            "fidelity must lie in [0, 1], got {fidelity}"
        )));
    }
    Ok(0.5 * (1.0 - (1.0 - fidelity).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gram(states: &[StateVec]) -> Vec<Vec<C64>> {
        states
            .iter()
            .map(|a| states.iter().map(|b| a.inner(b)).collect())
            .collect()
    }

    #[test]
    fn frame_d2() {
        let f = symmetric_frame(2).unwrap();
        assert_eq!(f[0].coeffs(), &[C64::new(1.0, 0.0)]);
        assert_eq!(f[1].coeffs(), &[C64::new(-1.0, 0.0)]);
        assert!(symmetric_frame(1).is_err());
    }

    #[test]
    fn frame_d3_is_trine() {
        let f = symmetric_frame(3).unwrap();
        let h = 3f64.sqrt() / 2.0;
        let expected = [[1.0, 0.0], [-0.5, h], [-0.5, -h]];
        for (v, e) in f.iter().zip(expected) {
            assert_abs_diff_eq!(v[0].re, e[0], epsilon = 1e-15);
            assert_abs_diff_eq!(v[1].re, e[1], epsilon = 1e-15);
        }
        for (i, row) in gram(&f).iter().enumerate() {
            for (j, g) in row.iter().enumerate() {
                let e = if i == j { 1.0 } else { -0.5 };
                assert_abs_diff_eq!(g.re, e, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn states_theta_limits() {
        let s = symmetric_states(4, 0.0).unwrap();
        for v in &s.states {
            assert_eq!(v, &StateVec::basis(4, 3));
        }
        assert_eq!(s.fidelity, 1.0);

        let d = 5;
        let theta = ((d - 1) as f64 / d as f64).sqrt().asin();
        let s = symmetric_states(d, theta).unwrap();
        assert!(s.beta.abs() < 1e-15);
        for (i, row) in gram(&s.states).iter().enumerate() {
            for (j, g) in row.iter().enumerate() {
                assert_abs_diff_eq!(g.norm(), if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
        assert!(symmetric_states(3, -0.1).is_err());
        assert!(symmetric_states(3, 1.6).is_err());
    }

    #[test]
    fn states_d3_theta_06() {
        let s = symmetric_states(3, 0.6).unwrap();
        let beta = 0.6f64.cos().powi(2) - 0.6f64.sin().powi(2) / 2.0;
        assert_abs_diff_eq!(s.beta, beta, epsilon = 1e-15);
        for (i, row) in gram(&s.states).iter().enumerate() {
            for (j, g) in row.iter().enumerate() {
                let e = if i == j { 1.0 } else { beta };
                assert_abs_diff_eq!(g.re, e, epsilon = 1e-12);
                assert_abs_diff_eq!(g.im, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn theta_inversion() {
        assert_eq!(
            theta_for_fidelity(4, 1.0, OverlapBranch::Positive).unwrap(),
            0.0
        );
        for branch in [OverlapBranch::Positive, OverlapBranch::Negative] {
            let t = theta_for_fidelity(4, 0.0, branch).unwrap();
            assert_abs_diff_eq!(t.sin().powi(2), 0.75, epsilon = 1e-15);
        }
        let t = theta_for_fidelity(3, 0.25, OverlapBranch::Positive).unwrap();
        assert_abs_diff_eq!(overlap_for_theta(3, t), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            symmetric_states(3, t).unwrap().fidelity,
            0.25,
            epsilon = 1e-12
        );

        // β = −sqrt(F) must stay above −1/(d−1)
        assert!(theta_for_fidelity(3, 0.2, OverlapBranch::Negative).is_ok());
        assert!(matches!(
            theta_for_fidelity(3, 0.5, OverlapBranch::Negative),
            Err(Error::NoSolution(_))
        ));
        assert!(theta_for_fidelity(3, 1.5, OverlapBranch::Positive).is_err());
    }

    #[test]
    fn orthocomplement_of_orthonormal_states_is_identity() {
        let states: Vec<StateVec> = (0..4).map(|k| StateVec::basis(4, k)).collect();
        for i in 0..4 {
            let p = orthocomplement(&states, i).unwrap();
            assert!(p.sub_scaled(C64::new(1.0, 0.0), &states[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn orthocomplement_trine_mixed() {
        let s = symmetric_states(3, 0.9).unwrap();
        for i in 0..3 {
            let p = orthocomplement(&s.states, i).unwrap();
            for j in 0..3 {
                let ov = p.inner(&s.states[j]);
                if j == i {
                    assert!(ov.re > 0.0 && ov.im.abs() < 1e-15);
                } else {
                    assert!(ov.norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn orthocomplement_degenerate() {
        let s = symmetric_states(3, 0.0).unwrap();
        assert!(matches!(
            orthocomplement(&s.states, 0),
            Err(Error::DegenerateInput(_))
        ));
        let s = symmetric_states(2, 0.0).unwrap();
        assert!(matches!(
            orthocomplement(&s.states, 0),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn measurement_at_zero_fidelity() {
        let d = 4;
        let t = theta_for_fidelity(d, 0.0, OverlapBranch::Positive).unwrap();
        let s = symmetric_states(d, t).unwrap();
        let m = usd_measurement(&s).unwrap();
        for (dv, psi) in m.vectors.iter().zip(&m.embedded_states) {
            assert!(dv.inner(psi).norm() > 1.0 - 1e-12);
        }
        assert!((m.ambiguous.inner(&StateVec::basis(d + 1, d)).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measurement_success_is_one_minus_overlap() {
        for d in 2..=6 {
            for f in [0.1, 0.4, 0.8] {
                let t = theta_for_fidelity(d, f, OverlapBranch::Positive).unwrap();
                let s = symmetric_states(d, t).unwrap();
                let m = usd_measurement(&s).unwrap();
                let p = measurement_probabilities(&m);
                for i in 0..d {
                    assert_abs_diff_eq!(p.get(i, i), 1.0 - f.sqrt(), epsilon = 1e-9);
                    assert_abs_diff_eq!(p.ambiguous(i), f.sqrt(), epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn non_symmetric_input_is_rejected() {
        let mut s = symmetric_states(3, 0.7).unwrap();
        s.states[2] = StateVec::from_real(&[0.1, 0.2, (1.0f64 - 0.05).sqrt()]);
        assert!(matches!(
            usd_measurement(&s),
            Err(Error::ConstructionViolated(_))
        ));
    }

    #[test]
    fn ideal_matrix_pattern() {
        let s = symmetric_states(
            3,
            theta_for_fidelity(3, 0.34, OverlapBranch::Positive).unwrap(),
        )
        .unwrap();
        let m = ideal_outcome_matrix(&s).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(m.get(i, i), 0.66, epsilon = 1e-12);
            assert_abs_diff_eq!(m.ambiguous(i), 0.34, epsilon = 1e-12);
            assert_abs_diff_eq!(m.row_sums()[i], 1.0, epsilon = 1e-12);
        }
        let s = symmetric_states(
            3,
            theta_for_fidelity(3, 0.0, OverlapBranch::Positive).unwrap(),
        )
        .unwrap();
        let m = ideal_outcome_matrix(&s).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(m.get(i, j), e, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mesd_values() {
        assert_eq!(mesd_bound(0.0).unwrap(), 0.0);
        assert_eq!(mesd_bound(1.0).unwrap(), 0.5);
        assert_eq!(mesd_bound(0.75).unwrap(), 0.25);
        assert!(mesd_bound(-0.1).is_err());
        assert!(mesd_bound(1.1).is_err());
    }
}
