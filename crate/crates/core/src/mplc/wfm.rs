//! Wavefront matching.
//!
//! Input modes are propagated forward and target modes backward through the
//! stack; at each plane the mask is replaced by the phase that best matches
//! the two families. With forward field `a` arriving at a plane, backward
//! field `b` leaving it, and mask `φ`, the per-mode overlap is
//! `oᵢ = Σ conj(bᵢ)·e^{iφ}·aᵢ·pitch²`, which equals ⟨targetᵢ|U|inputᵢ⟩ at
//! every plane.
//!
//! Planes are visited 1→n then n→1 in every sweep. Only the fields touched
//! by the last mask change are recomputed.

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_phase, wrap_phase, Kernels, MplcSystem};
use crate::error::{Error, Result};
use crate::optics::{Field, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UpdateRule {
    /// Phase of the overlap-aligned sum Σ wᵢ·bᵢ·conj(aᵢ)·e^{i·arg oᵢ}.
    Averaged,
    /// Small-angle correction φ ← φ − step·Σ wᵢ Im γᵢ / Σ wᵢ |γᵢ| with
    /// γᵢ = conj(ôᵢ)·e^{iφ}·conj(bᵢ)·aᵢ.
    Incremental { step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MaskInit {
    Flat,
    /// Uniform phases in (−π, π] from a ChaCha8 stream.
    Random {
        seed: u64,
    },
    /// Start from the masks already in the system.
    Keep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WfmOptions {
    pub max_sweeps: usize,
    /// Stop once the mean overlap changes by less than this in a sweep.
    pub tolerance: f64,
    pub init: MaskInit,
    pub rule: UpdateRule,
    /// Per-mode weights in the mask update; uniform when absent.
    pub weights: Option<Vec<f64>>,
    /// Reuse plane fields between updates instead of re-propagating from
    /// the ends. Results are identical either way.
    pub cache_fields: bool,
}

impl Default for WfmOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 300,
            tolerance: 1e-5,
            init: MaskInit::Flat,
            rule: UpdateRule::Averaged,
            weights: None,
            cache_fields: true,
        }
    }
}

impl WfmOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::invalid("max_sweeps must be >= 1"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if let UpdateRule::Incremental { step } = self.rule {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::invalid("incremental step must be positive"));
            }
        }
        if let Some(w) = &self.weights {
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.iter().all(|v| *v == 0.0) {
                return Err(Error::invalid(
                    "weights must be non-negative and not all zero",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfmReport {
    /// Mean overlap before the first sweep.
    pub initial_eta: f64,
    /// Mean overlap after each sweep.
    pub eta_trace: Vec<f64>,
    /// Final |⟨targetᵢ|U|inputᵢ⟩|² per mode.
    pub mode_overlaps: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Sweeps whose mean overlap fell by more than 1e-6.
    pub monotone_violations: usize,
}

impl WfmReport {
    pub fn final_eta(&self) -> f64 {
        self.eta_trace.last().copied().unwrap_or(self.initial_eta)
    }
}

const MONOTONE_SLACK: f64 = 1e-6;

fn overlap(a: &Array2<C64>, b: &Array2<C64>, phasor: &Array2<C64>, area: f64) -> C64 {
    Zip::from(a)
        .and(b)
        .and(phasor)
        .fold(C64::new(0.0, 0.0), |acc, a, b, p| acc + b.conj() * p * a)
        * area
}

fn update_raw(
    forward: &[&Array2<C64>],
    backward: &[&Array2<C64>],
    current: &Array2<f64>,
    weights: &[f64],
    rule: UpdateRule,
    area: f64,
) -> Array2<f64> {
    let phasor = current.mapv(|p| C64::from_polar(1.0, p));
    let overlaps: Vec<C64> = forward
        .iter()
        .zip(backward)
        .map(|(a, b)| overlap(a, b, &phasor, area))
        .collect();
    match rule {
        UpdateRule::Averaged => {
            let mut acc = Array2::<C64>::zeros(current.dim());
            for i in 0..forward.len() {
                let rot = C64::from_polar(weights[i], overlaps[i].arg());
                Zip::from(&mut acc)
                    .and(forward[i])
                    .and(backward[i])
                    .for_each(|s, a, b| *s += rot * b * a.conj());
            }
            acc.mapv(|z| wrap_phase(z.arg()))
        }
        UpdateRule::Incremental { step } => {
            let mut num = Array2::<f64>::zeros(current.dim());
            let mut den = Array2::<f64>::zeros(current.dim());
            for i in 0..forward.len() {
                let o = overlaps[i];
                let unit = if o.norm() > 0.0 {
                    o / o.norm()
                } else {
                    C64::new(1.0, 0.0)
                };
                let w = weights[i];
                Zip::from(&mut num)
                    .and(&mut den)
                    .and(forward[i])
                    .and(backward[i])
                    .and(&phasor)
                    .for_each(|n, d, a, b, p| {
                        let gamma = unit.conj() * p * b.conj() * a;
                        *n += w * gamma.im;
                        *d += w * gamma.norm();
                    });
            }
            let mut out = current.clone();
            Zip::from(&mut out)
                .and(&num)
                .and(&den)
                .for_each(|phi, &n, &d| {
                    if d > 0.0 {
                        *phi = wrap_phase(*phi - step * n / d);
                    }
                });
            out
        }
    }
}

/// New phase for one plane from the forward fields arriving at it and the
/// backward-propagated target fields at the same plane.
pub fn mask_update(
    forward: &[Field],
    backward: &[Field],
    current: &Array2<f64>,
    weights: Option<&[f64]>,
    rule: UpdateRule,
) -> Result<Array2<f64>> {
    if forward.is_empty() {
        return Err(Error::invalid("mask update needs at least one mode"));
    }
    if forward.len() != backward.len() {
        return Err(Error::invalid("forward and backward mode counts differ"));
    }
    let grid = *forward[0].grid();
    for f in forward.iter().chain(backward) {
        grid.ensure_same(f.grid())?;
    }
    if current.dim() != grid.shape() {
        return Err(Error::invalid("mask shape does not match grid"));
    }
    let weights = resolve_weights(weights, forward.len())?;
    let a: Vec<&Array2<C64>> = forward.iter().map(Field::data).collect();
    let b: Vec<&Array2<C64>> = backward.iter().map(Field::data).collect();
    Ok(update_raw(
        &a,
        &b,
        current,
        &weights,
        rule,
        grid.pixel_area(),
    ))
}

fn resolve_weights(weights: Option<&[f64]>, n: usize) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0; n]),
        Some(w) if w.len() == n => Ok(w.to_vec()),
        Some(w) => Err(Error::invalid(format!("{} weights for {n} modes", w.len()))),
    }
}

struct Trainer<'a> {
    sys: MplcSystem,
    kernels: Kernels,
    inputs: &'a [Field],
    targets: &'a [Field],
    weights: Vec<f64>,
    rule: UpdateRule,
    cache: bool,
    /// fwd[p][i]: mode i arriving at plane p.
    fwd: Vec<Vec<Array2<C64>>>,
    /// bwd[p][i]: target i propagated back to just after plane p.
    bwd: Vec<Vec<Array2<C64>>>,
}

impl<'a> Trainer<'a> {
    fn forward_from_input(&self, plane: usize) -> Vec<Array2<C64>> {
        self.inputs
            .par_iter()
            .map(|f| {
                let mut d = f.data().clone();
                self.kernels.lead_in.apply(&mut d);
                for q in 0..plane {
                    apply_phase(&mut d, self.sys.mask(q), 1.0);
                    self.kernels.spacing.apply(&mut d);
                }
                d
            })
            .collect()
    }

    fn backward_from_output(&self, plane: usize) -> Vec<Array2<C64>> {
        let n = self.sys.n_planes();
        self.targets
            .par_iter()
            .map(|f| {
                let mut d = f.data().clone();
                self.kernels.back_lead_out.apply(&mut d);
                for q in ((plane + 1)..n).rev() {
                    apply_phase(&mut d, self.sys.mask(q), -1.0);
                    self.kernels.back_spacing.apply(&mut d);
                }
                d
            })
            .collect()
    }

    fn step_forward(&self, plane: usize) -> Vec<Array2<C64>> {
        let mask = self.sys.mask(plane);
        self.fwd[plane]
            .par_iter()
            .map(|a| {
                let mut d = a.clone();
                apply_phase(&mut d, mask, 1.0);
                self.kernels.spacing.apply(&mut d);
                d
            })
            .collect()
    }

    fn step_backward(&self, plane: usize) -> Vec<Array2<C64>> {
        let mask = self.sys.mask(plane);
        self.bwd[plane]
            .par_iter()
            .map(|b| {
                let mut d = b.clone();
                apply_phase(&mut d, mask, -1.0);
                self.kernels.back_spacing.apply(&mut d);
                d
            })
            .collect()
    }

    fn refresh(&mut self, plane: usize) {
        if !self.cache {
            self.fwd[plane] = self.forward_from_input(plane);
            self.bwd[plane] = self.backward_from_output(plane);
        }
    }

    fn update(&mut self, plane: usize) {
        self.refresh(plane);
        let a: Vec<&Array2<C64>> = self.fwd[plane].iter().collect();
        let b: Vec<&Array2<C64>> = self.bwd[plane].iter().collect();
        let new = update_raw(
            &a,
            &b,
            self.sys.mask(plane),
            &self.weights,
            self.rule,
            self.sys.grid().pixel_area(),
        );
        self.sys.masks[plane] = new;
    }

    fn overlaps(&mut self) -> Vec<f64> {
        self.refresh(0);
        let phasor = self.sys.mask(0).mapv(|p| C64::from_polar(1.0, p));
        let area = self.sys.grid().pixel_area();
        self.fwd[0]
            .iter()
            .zip(&self.bwd[0])
            .map(|(a, b)| overlap(a, b, &phasor, area).norm_sqr())
            .collect()
    }

    fn sweep(&mut self) {
        let n = self.sys.n_planes();
        for p in 0..n {
            self.update(p);
            if self.cache && p + 1 < n {
                self.fwd[p + 1] = self.step_forward(p);
            }
        }
        for p in (0..n).rev() {
            self.update(p);
            if self.cache && p > 0 {
                self.bwd[p - 1] = self.step_backward(p);
            }
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Trains the masks of `system` so that each input maps onto its target.
pub fn wavefront_match(
    system: &MplcSystem,
    inputs: &[Field],
    targets: &[Field],
    opts: &WfmOptions,
) -> Result<(MplcSystem, WfmReport)> {
    opts.validate()?;
    if inputs.is_empty() {
        return Err(Error::invalid("wavefront matching needs at least one mode"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    for (k, f) in inputs.iter().chain(targets).enumerate() {
        system.grid().ensure_same(f.grid())?;
        if !f.is_normalized(1e-6) {
            return Err(Error::invalid(format!(
                "mode {k} is not normalized (power {})",
                f.power()
            )));
        }
    }
    let weights = resolve_weights(opts.weights.as_deref(), inputs.len())?;

    let mut sys = system.clone();
    match opts.init {
        MaskInit::Flat => sys.masks.iter_mut().for_each(|m| m.fill(0.0)),
        MaskInit::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for m in sys.masks.iter_mut() {
                m.mapv_inplace(|_| wrap_phase(rng.random_range(-PI..PI)));
            }
        }
        MaskInit::Keep => {}
    }

    let n = sys.n_planes();
    let kernels = sys.kernels();
    let mut t = Trainer {
        sys,
        kernels,
        inputs,
        targets,
        weights,
        rule: opts.rule,
        cache: opts.cache_fields,
        fwd: vec![Vec::new(); n],
        bwd: vec![Vec::new(); n],
    };
    t.fwd[0] = t.forward_from_input(0);
    for p in 1..n {
        t.fwd[p] = if t.cache {
            t.step_forward(p - 1)
        } else {
            t.forward_from_input(p)
        };
    }
    t.bwd[n - 1] = t.backward_from_output(n - 1);
    for p in (0..n - 1).rev() {
        t.bwd[p] = if t.cache {
            t.step_backward(p + 1)
        } else {
            t.backward_from_output(p)
        };
    }

    let initial_eta = mean(&t.overlaps());
    let mut report = WfmReport {
        initial_eta,
        eta_trace: Vec::with_capacity(opts.max_sweeps),
        mode_overlaps: Vec::new(),
        sweeps: 0,
        converged: false,
        monotone_violations: 0,
    };
    let mut prev = initial_eta;
    let mut mode_overlaps = Vec::new();
    for sweep in 1..=opts.max_sweeps {
        t.sweep();
        mode_overlaps = t.overlaps();
        let eta = mean(&mode_overlaps);
        report.eta_trace.push(eta);
        report.sweeps = sweep;
        if eta < prev - MONOTONE_SLACK {
            report.monotone_violations += 1;
            log::warn!("sweep {sweep}: mean overlap fell from {prev} to {eta}");
        }
        log::debug!("sweep {sweep}: eta = {eta:.6}");
        if (eta - prev).abs() < opts.tolerance {
            report.converged = true;
            break;
        }
        prev = eta;
    }
    report.mode_overlaps = mode_overlaps;
    Ok((t.sys, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{gaussian_spot, hermite_gaussian, make_grid, Grid};
    use crate::propagation::propagate;

    fn grid() -> Grid {
        make_grid(64, 64, 8e-6, 633e-9).unwrap()
    }

    #[test]
    fn matched_mode_gives_flat_mask() {
        let g = grid();
        let a = gaussian_spot(&g, 60e-6, (0.0, 0.0)).unwrap();
        let m = mask_update(
            std::slice::from_ref(&a),
            std::slice::from_ref(&a),
            &Array2::zeros(g.shape()),
            None,
            UpdateRule::Averaged,
        )
        .unwrap();
        assert!(m.iter().all(|p| p.abs() < 1e-12));
    }

    #[test]
    fn phase_shifted_target_gives_matching_mask() {
        let g = grid();
        let a = gaussian_spot(&g, 60e-6, (0.0, 0.0)).unwrap();
        let phi = Array2::from_shape_fn(g.shape(), |(j, i)| 0.3 * (i as f64 - j as f64).sin());
        let mut b = a.clone();
        Zip::from(b.data_mut())
            .and(&phi)
            .for_each(|z, &p| *z *= C64::from_polar(1.0, p));
        let current = Array2::from_elem(g.shape(), 0.7);
        let m = mask_update(&[a], &[b], &current, None, UpdateRule::Averaged).unwrap();
        // e^{iφ'} must carry a into b, up to one global constant
        let offset = m[[0, 0]] - phi[[0, 0]];
        for (x, y) in m.iter().zip(phi.iter()) {
            assert!(wrap_phase(x - y - offset).abs() < 1e-9);
        }
    }

    #[test]
    fn mask_update_errors() {
        let g = grid();
        let z = Array2::zeros(g.shape());
        assert!(mask_update(&[], &[], &z, None, UpdateRule::Averaged).is_err());
        let a = gaussian_spot(&g, 60e-6, (0.0, 0.0)).unwrap();
        assert!(mask_update(
            std::slice::from_ref(&a),
            &[],
            &z,
            None,
            UpdateRule::Averaged
        )
        .is_err());
        assert!(mask_update(
            std::slice::from_ref(&a),
            std::slice::from_ref(&a),
            &z,
            Some(&[1.0, 2.0]),
            UpdateRule::Averaged
        )
        .is_err());
    }

    #[test]
    fn identity_task_converges_in_one_sweep() {
        let g = grid();
        let sys = MplcSystem::new(g, 3, 5e-3, 5e-3, 5e-3).unwrap();
        let inputs: Vec<Field> = (0..2)
            .map(|m| hermite_gaussian(&g, m, 1, 60e-6).unwrap())
            .collect();
        let targets: Vec<Field> = inputs
            .iter()
            .map(|f| propagate(f, sys.total_length()))
            .collect();
        let (trained, report) =
            wavefront_match(&sys, &inputs, &targets, &WfmOptions::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.sweeps, 1);
        assert!(report.final_eta() >= 0.999);
        // where the light is, masks stay flat
        for m in trained.masks() {
            assert!(m[[32, 32]].abs() < 1e-6);
        }
    }

    fn sorter_task() -> (MplcSystem, Vec<Field>, Vec<Field>) {
        let g = grid();
        let sys = MplcSystem::new(g, 3, 10e-3, 10e-3, 10e-3).unwrap();
        let inputs: Vec<Field> = [(0, 0), (1, 0), (0, 1)]
            .iter()
            .map(|&(m, n)| hermite_gaussian(&g, m, n, 40e-6).unwrap())
            .collect();
        let targets: Vec<Field> = [(-80e-6, 0.0), (80e-6, 0.0), (0.0, 80e-6)]
            .iter()
            .map(|&c| gaussian_spot(&g, 30e-6, c).unwrap())
            .collect();
        (sys, inputs, targets)
    }

    #[test]
    fn averaged_rule_is_monotone_and_improves() {
        let (sys, inputs, targets) = sorter_task();
        let opts = WfmOptions {
            max_sweeps: 25,
            ..Default::default()
        };
        let (_, report) = wavefront_match(&sys, &inputs, &targets, &opts).unwrap();
        assert_eq!(report.monotone_violations, 0);
        assert!(report.final_eta() > report.initial_eta + 0.3);
        assert!(report
            .eta_trace
            .iter()
            .all(|e| (0.0..=1.0 + 1e-12).contains(e)));
    }

    #[test]
    fn incremental_rule_improves() {
        let (sys, inputs, targets) = sorter_task();
        let opts = WfmOptions {
            max_sweeps: 25,
            rule: UpdateRule::Incremental { step: 0.5 },
            ..Default::default()
        };
        let (_, report) = wavefront_match(&sys, &inputs, &targets, &opts).unwrap();
        assert!(report.final_eta() > report.initial_eta + 0.1);
    }

    #[test]
    fn caching_does_not_change_results() {
        let (sys, inputs, targets) = sorter_task();
        let base = WfmOptions {
            max_sweeps: 4,
            tolerance: 1e-12,
            init: MaskInit::Random { seed: 9 },
            ..Default::default()
        };
        let (a, ra) = wavefront_match(&sys, &inputs, &targets, &base).unwrap();
        let (b, rb) = wavefront_match(
            &sys,
            &inputs,
            &targets,
            &WfmOptions {
                cache_fields: false,
                ..base.clone()
            },
        )
        .unwrap();
        assert_eq!(a.masks(), b.masks());
        assert_eq!(ra, rb);
        let (c, _) = wavefront_match(&sys, &inputs, &targets, &base).unwrap();
        assert_eq!(a.masks(), c.masks());
    }

    #[test]
    fn rejects_unnormalized_or_mismatched_modes() {
        let (sys, inputs, targets) = sorter_task();
        let opts = WfmOptions::default();
        assert!(wavefront_match(&sys, &inputs[..2], &targets, &opts).is_err());
        assert!(wavefront_match(&sys, &[], &[], &opts).is_err());
        let mut bad = inputs.clone();
        bad[0] = bad[0].scaled(C64::new(2.0, 0.0));
        assert!(wavefront_match(&sys, &bad, &targets, &opts).is_err());
        let bad_opts = WfmOptions {
            max_sweeps: 0,
            ..Default::default()
        };
        assert!(wavefront_match(&sys, &inputs, &targets, &bad_opts).is_err());
    }
}
