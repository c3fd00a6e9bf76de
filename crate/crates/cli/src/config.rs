use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use usd_mplc::experiment::{AuxField, Geometry, PixelMode, MAX_DIMENSION};
use usd_mplc::mplc::{MaskInit, UpdateRule};
use usd_mplc::WfmOptions;

use crate::error::CliError;

/// Mask initialization as written in config files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitPolicy {
    #[default]
    Flat,
    /// Uniform random phases from the run seed.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WfmConfig {
    pub max_sweeps: usize,
    pub tolerance: f64,
    pub init: InitPolicy,
    pub rule: UpdateRule,
    pub weights: Option<Vec<f64>>,
}

impl Default for WfmConfig {
    fn default() -> Self {
        let o = WfmOptions::default();
        Self {
            max_sweeps: o.max_sweeps,
            tolerance: o.tolerance,
            init: InitPolicy::Flat,
            rule: o.rule,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagesConfig {
    pub paths: Vec<PathBuf>,
    /// Simulation samples per image pixel along each axis.
    pub scale: usize,
    pub pixels_are: PixelMode,
    pub aux: AuxField,
    pub fidelity_tolerance: f64,
}

impl Default for ImagesConfig {
    fn default() -> Self {
        Self {
            paths: Vec::new(),
            scale: 1,
            pixels_are: PixelMode::Amplitude,
            aux: AuxField::default(),
            fidelity_tolerance: 0.05,
        }
    }
}

/// Everything a command needs; flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dimensions: Vec<usize>,
    pub fidelities: Vec<f64>,
    pub geometry: Geometry,
    pub wfm: WfmConfig,
    pub seed: u64,
    pub output: PathBuf,
    pub strict: bool,
    pub images: ImagesConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dimensions: vec![3],
            fidelities: vec![0.5],
            geometry: Geometry::default(),
            wfm: WfmConfig::default(),
            seed: 0,
            output: PathBuf::from("out"),
            strict: false,
            images: ImagesConfig::default(),
        }
    }
}

fn bad(path: impl Into<String>, msg: impl Into<String>) -> CliError {
    CliError::Validation {
        path: path.into(),
        msg: msg.into(),
    }
}

fn positive(path: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(bad(path, format!("must be a positive number, got {v}")))
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| bad("config", format!("{}: {e}", path.display())))
    }

    /// Checks every field against the library's preconditions.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.dimensions.is_empty() {
            return Err(bad("dimensions", "needs at least one value"));
        }
        for (k, &d) in self.dimensions.iter().enumerate() {
            if !(2..=MAX_DIMENSION).contains(&d) {
                return Err(bad(
                    format!("dimensions[{k}]"),
                    format!("dimension must lie in 2..={MAX_DIMENSION}, got {d}"),
                ));
            }
        }
        if self.fidelities.is_empty() {
            return Err(bad("fidelities", "needs at least one value"));
        }
        for (k, &f) in self.fidelities.iter().enumerate() {
            if !(0.0..1.0).contains(&f) {
                return Err(bad(
                    format!("fidelities[{k}]"),
                    format!("must lie in [0, 1), got {f}"),
                ));
            }
        }
        let g = &self.geometry;
        for (name, v) in [("nx", g.nx), ("ny", g.ny)] {
            if v < 2 || v % 2 != 0 {
                return Err(bad(
                    format!("geometry.{name}"),
                    format!("must be even and >= 2, got {v}"),
                ));
            }
        }
        if g.n_planes == 0 {
            return Err(bad("geometry.n_planes", "must be >= 1"));
        }
        for (name, v) in [
            ("pitch", g.pitch),
            ("wavelength", g.wavelength),
            ("plane_spacing", g.plane_spacing),
            ("lead_in", g.lead_in),
            ("lead_out", g.lead_out),
            ("input_waist", g.input_waist),
            ("spot_waist", g.spot_waist),
            ("detector_radius_waists", g.detector_radius_waists),
            ("spot_spacing_waists", g.spot_spacing_waists),
        ] {
            positive(&format!("geometry.{name}"), v)?;
        }
        if let Some(r) = g.spot_radius {
            positive("geometry.spot_radius", r)?;
        }
        if self.wfm.max_sweeps == 0 {
            return Err(bad("wfm.max_sweeps", "must be >= 1"));
        }
        positive("wfm.tolerance", self.wfm.tolerance)?;
        if let UpdateRule::Incremental { step } = self.wfm.rule {
            positive("wfm.rule.step", step)?;
        }
        if let Some(w) = &self.wfm.weights {
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.iter().all(|v| *v == 0.0) {
                return Err(bad("wfm.weights", "must be non-negative and not all zero"));
            }
        }
        if self.output.as_os_str().is_empty() {
            return Err(bad("output", "must not be empty"));
        }
        if self.images.scale == 0 {
            return Err(bad("images.scale", "must be >= 1"));
        }
        positive("images.fidelity_tolerance", self.images.fidelity_tolerance)?;
        let AuxField::Hg { waist, .. } = self.images.aux;
        positive("images.aux.waist", waist)?;
        Ok(())
    }

    pub fn wfm_options(&self) -> WfmOptions {
        WfmOptions {
            max_sweeps: self.wfm.max_sweeps,
            tolerance: self.wfm.tolerance,
            init: match self.wfm.init {
                InitPolicy::Flat => MaskInit::Flat,
                InitPolicy::Random => MaskInit::Random { seed: self.seed },
            },
            rule: self.wfm.rule,
            weights: self.wfm.weights.clone(),
            cache_fields: true,
        }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            strict: self.geometry.strict || self.strict,
            ..self.geometry.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn errors_name_the_field() {
        let cfg = RunConfig {
            dimensions: vec![3, 1],
            ..RunConfig::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("dimensions[1]"), "{err}");

        let mut cfg = RunConfig::default();
        cfg.geometry.plane_spacing = -1.0;
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("geometry.plane_spacing"));

        let cfg = RunConfig {
            fidelities: vec![1.0],
            ..RunConfig::default()
        };
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("fidelities[0]"));
    }

    #[test]
    fn partial_json_keeps_defaults() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"dimensions": [2], "geometry": {"nx": 64}}"#).unwrap();
        assert_eq!(cfg.dimensions, vec![2]);
        assert_eq!(cfg.geometry.nx, 64);
        assert_eq!(cfg.geometry.ny, 256);
        assert!(serde_json::from_str::<RunConfig>(r#"{"dimension": 2}"#).is_err());
    }

    #[test]
    fn random_init_uses_seed() {
        let mut cfg = RunConfig {
            seed: 42,
            ..RunConfig::default()
        };
        cfg.wfm.init = InitPolicy::Random;
        assert_eq!(cfg.wfm_options().init, MaskInit::Random { seed: 42 });
    }
}
