//! Discrimination of overlapping images.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::detect::{outcomes_from_fields, SimulatedOutcomes};
use super::processing::{accuracy, confusion_matrix};
use super::{DetectorLayout, Geometry};
use crate::error::{Error, Result};
use crate::mplc::{wavefront_match, MplcSystem, WfmOptions, WfmReport};
use crate::optics::{
    gram_matrix, hermite_gaussian_with, inner_product, Field, Grid, StateVec, C64,
};
use crate::usd::{orthocomplement, RANK_TOLERANCE};

/// How grayscale levels map to field amplitude.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelMode {
    /// Level is the amplitude.
    #[default]
    Amplitude,
    /// Level is the intensity; amplitude is its square root.
    Intensity,
}

impl std::str::FromStr for PixelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amplitude" => Ok(Self::Amplitude),
            "intensity" => Ok(Self::Intensity),
            other => Err(Error::invalid(format!(
                "pixel mode must be `amplitude` or `intensity`, got `{other}`"
            ))),
        }
    }
}

/// Reads an 8- or 16-bit grayscale PGM/PNG as levels in `[0, 1]`,
/// indexed `[row, column]`.
pub fn load_image(path: &Path) -> Result<Array2<f64>> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader
        .decode()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let levels: Vec<f64> = match img {
        image::DynamicImage::ImageLuma8(b) => {
            b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()
        }
        image::DynamicImage::ImageLuma16(b) => b
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        other => {
            return Err(Error::format(
                path,
                format!("expected 8- or 16-bit grayscale, found {:?}", other.color()),
            ))
        }
    };
    Ok(Array2::from_shape_vec((h, w), levels).expect("decoder returns w*h samples"))
}

/// Writes levels in `[0, 1]` as a 16-bit binary PGM.
pub fn save_image_pgm(levels: &Array2<f64>, path: &Path) -> Result<()> {
    let (h, w) = levels.dim();
    let raw: Vec<u16> = levels
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(w as u32, h as u32, raw)
        .expect("buffer sized from dims");
    buf.save_with_format(path, image::ImageFormat::Pnm)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::format(path, other.to_string()),
        })
}

/// Places `levels` at the grid center, each pixel covering a
/// `scale x scale` block of samples, and normalizes.
pub fn field_from_image(
    levels: &Array2<f64>,
    grid: &Grid,
    scale: usize,
    mode: PixelMode,
) -> Result<Field> {
    if scale == 0 {
        return Err(Error::invalid("image scale must be >= 1"));
    }
    let (h, w) = levels.dim();
    let (ny, nx) = grid.shape();
    if h * scale > ny || w * scale > nx {
        return Err(Error::invalid(format!(
            "{w}x{h} image at scale {scale} does not fit the {nx}x{ny} grid"
        )));
    }
    if levels.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid(
            "image levels must be finite and non-negative",
        ));
    }
    let (oy, ox) = ((ny - h * scale) / 2, (nx - w * scale) / 2);
    let mut data = Array2::zeros(grid.shape());
    for ((r, c), &v) in levels.indexed_iter() {
        let amp = match mode {
            PixelMode::Amplitude => v,
            PixelMode::Intensity => v.sqrt(),
        };
        for dy in 0..scale {
            for dx in 0..scale {
                data[[oy + r * scale + dy, ox + c * scale + dx]] = C64::new(amp, 0.0);
            }
        }
    }
    let f = Field::from_array(*grid, data)?;
    if f.power() == 0.0 {
        return Err(Error::DegenerateInput("image is entirely dark".into()));
    }
    f.normalized()
}

/// `|⟨fᵢ|fⱼ⟩|²` for all pairs.
pub fn fidelity_matrix(fields: &[Field]) -> Result<Array2<f64>> {
    Ok(gram_matrix(fields)?.mapv(|z| z.norm_sqr()))
}

// Eyes (x offset, y), mouth height and curvature, in unit face coordinates.
const FACES: [(f64, f64, f64, f64); 3] = [
    (0.18, -0.30, 0.38, 0.8),
    (0.30, -0.08, 0.14, -0.8),
    (0.42, -0.30, 0.60, 0.0),
];

fn face(size: usize, params: (f64, f64, f64, f64), head_weight: f64) -> Array2<f64> {
    let (ex, ey, my, curve) = params;
    let (eye_sigma, mouth_width, mouth_half_len): (f64, f64, f64) = (0.06, 0.045, 0.25);
    let half = size as f64 / 2.0;
    let mut img = Array2::from_shape_fn((size, size), |(r, c)| {
        let x = (c as f64 - half + 0.5) / half;
        let y = (r as f64 - half + 0.5) / half;
        let head = (-(x.hypot(y / 1.15) / 0.7).powi(8)).exp();
        let eye =
            |cx: f64| (-((x - cx).powi(2) + (y - ey).powi(2)) / (2.0 * eye_sigma.powi(2))).exp();
        let arc = my - curve * x * x;
        let overhang = (x.abs() - mouth_half_len).max(0.0);
        let mouth = (-((y - arc).powi(2) + overhang.powi(2)) / (2.0 * mouth_width.powi(2))).exp();
        head_weight * head + eye(ex) + eye(-ex) + mouth
    });
    let peak = img.iter().copied().fold(0.0, f64::max);
    img.mapv_inplace(|v| v / peak);
    img
}

fn mean_pairwise_fidelity(imgs: &[Array2<f64>]) -> f64 {
    let unit: Vec<Array2<f64>> = imgs
        .iter()
        .map(|a| a / a.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut s = 0.0;
    let mut n = 0;
    for i in 0..unit.len() {
        for j in (i + 1)..unit.len() {
            s += (&unit[i] * &unit[j]).sum().powi(2);
            n += 1;
        }
    }
    s / n as f64
}

/// Three cartoon faces sharing a head outline, with the outline weight
/// chosen so the mean pairwise fidelity is `fidelity`.
pub fn synthetic_faces(size: usize, fidelity: f64) -> Result<Vec<Array2<f64>>> {
    if size < 16 {
        return Err(Error::invalid("face images need at least 16 pixels"));
    }
    let make = |h: f64| FACES.iter().map(|&p| face(size, p, h)).collect::<Vec<_>>();
    let (lo_f, hi_f) = (
        mean_pairwise_fidelity(&make(0.0)),
        mean_pairwise_fidelity(&make(10.0)),
    );
    if !(lo_f..=hi_f).contains(&fidelity) {
        return Err(Error::NoSolution(format!(
            "face fidelity must lie in [{lo_f:.3}, {hi_f:.3}], got {fidelity}"
        )));
    }
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mean_pairwise_fidelity(&make(mid)) < fidelity {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(make(0.5 * (lo + hi)))
}

/// The extra direction completing the measurement space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AuxField {
    /// A centered Hermite-Gauss mode.
    Hg { m: usize, n: usize, waist: f64 },
}

impl Default for AuxField {
    fn default() -> Self {
        AuxField::Hg {
            m: 1,
            n: 0,
            waist: 150e-6,
        }
    }
}

impl AuxField {
    fn field(&self, grid: &Grid, geometry: &Geometry) -> Result<Field> {
        match *self {
            AuxField::Hg { m, n, waist } => {
                hermite_gaussian_with(grid, m, n, waist, geometry.policy())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImageOptions {
    pub aux: AuxField,
    /// Allowed spread of pairwise fidelities before warning.
    pub fidelity_tolerance: f64,
    pub wfm: WfmOptions,
}

impl Default for ImageOptions {
    fn default() -> Self {
        Self {
            aux: AuxField::default(),
            fidelity_tolerance: 0.05,
            wfm: WfmOptions::default(),
        }
    }
}

/// Measurement modes for a set of images, before training.
#[derive(Debug, Clone)]
pub struct ImageTask {
    pub images: Vec<Field>,
    pub fidelities: Array2<f64>,
    /// Discrimination fields, one per image, then the ambiguous field.
    pub measurement: Vec<Field>,
    /// `n+1` spots, ambiguous last.
    pub spots: Vec<Field>,
    pub detector: DetectorLayout,
}

fn hermitian(g: &Array2<C64>) -> DMatrix<C64> {
    let n = g.nrows();
    DMatrix::from_fn(n, n, |i, j| g[[i, j]])
}

impl ImageTask {
    pub fn new(images: &[Field], geometry: &Geometry, opts: &ImageOptions) -> Result<Self> {
        let n = images.len();
        if n < 2 {
            return Err(Error::invalid("need at least two images"));
        }
        geometry.validate()?;
        let grid = geometry.grid()?;
        for (k, f) in images.iter().enumerate() {
            grid.ensure_same(f.grid())?;
            if !f.is_normalized(1e-6) {
                return Err(Error::invalid(format!("image {} is not normalized", k + 1)));
            }
        }
        let gram = gram_matrix(images)?;
        let fidelities = gram.mapv(|z| z.norm_sqr());
        let off: Vec<f64> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| fidelities[[i, j]])
            .collect();
        let spread = off.iter().copied().fold(f64::MIN, f64::max)
            - off.iter().copied().fold(f64::MAX, f64::min);
        if spread > opts.fidelity_tolerance {
            log::warn!("pairwise image fidelities spread by {spread:.3}; discrimination will not be exactly unambiguous");
        }

        // Orthonormal basis eₖ = Σᵢ fᵢ (G^{-1/2})ᵢₖ; image i has coordinates G^{1/2} eᵢ.
        let eig = SymmetricEigen::new(hermitian(&gram));
        let max_ev = eig.eigenvalues.max();
        if eig.eigenvalues.min() <= RANK_TOLERANCE * max_ev.max(1.0) {
            return Err(Error::DegenerateInput(
                "images are linearly dependent".into(),
            ));
        }
        let u = &eig.eigenvectors;
        let root = |p: f64| {
            let diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| C64::new(v.powf(p), 0.0)));
            u * diag * u.adjoint()
        };
        let inv_sqrt = root(-0.5);
        let sqrt = root(0.5);
        let mut basis = Vec::with_capacity(n + 1);
        for k in 0..n {
            let mut e = Field::zeros(grid);
            for (i, f) in images.iter().enumerate() {
                e.add_scaled(inv_sqrt[(i, k)], f)?;
            }
            basis.push(e);
        }
        let mut aux = opts.aux.field(&grid, geometry)?;
        for e in &basis {
            let c = inner_product(e, &aux)?;
            aux.add_scaled(-c, e)?;
        }
        if aux.norm() < 1e-6 {
            return Err(Error::DegenerateInput(
                "auxiliary field lies in the image span".into(),
            ));
        }
        basis.push(aux.normalized()?);

        let coords: Vec<StateVec> = (0..n)
            .map(|i| StateVec::new((0..n).map(|k| sqrt[(k, i)]).collect()))
            .collect();
        let perps = (0..n)
            .map(|i| orthocomplement(&coords, i))
            .collect::<Result<Vec<_>>>()?;
        let mut cross = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                cross += perps[i].inner(&perps[j]).re;
            }
        }
        cross /= (n * (n - 1) / 2) as f64;
        if cross > 1e-12 {
            return Err(Error::ConstructionViolated(format!(
                "mean complement overlap {cross} is positive; one auxiliary mode cannot separate them"
            )));
        }
        let lift = (-cross).sqrt();
        let raw: Vec<StateVec> = perps
            .iter()
            .map(|p| {
                let mut v = p.embed(n + 1).into_coeffs();
                v[n] = C64::new(lift, 0.0);
                StateVec::new(v)
            })
            .collect();
        let mut vectors = symmetric_orthonormalize(&raw)?;
        let mut amb = StateVec::basis(n + 1, n);
        for v in &vectors {
            amb = amb.sub_scaled(v.inner(&amb), v);
        }
        vectors.push(amb.normalized().ok_or_else(|| {
            Error::ConstructionViolated("could not complete the measurement basis".into())
        })?);
        let measurement = vectors
            .iter()
            .map(|v| {
                let mut f = Field::zeros(grid);
                for (c, e) in v.coeffs().iter().zip(&basis) {
                    f.add_scaled(*c, e)?;
                }
                f.normalized()
            })
            .collect::<Result<Vec<_>>>()?;

        let (centers, spots) = geometry.spots(n + 1)?;
        let detector =
            DetectorLayout::calibrated(&grid, centers, geometry.detector_radius(), &spots)?;
        Ok(Self {
            images: images.to_vec(),
            fidelities,
            measurement,
            spots,
            detector,
        })
    }

    /// Output fields of a perfect device: each measurement field lands
    /// exactly on its spot.
    pub fn ideal_outputs(&self) -> Result<Vec<Field>> {
        self.images
            .iter()
            .map(|img| {
                let mut out = Field::zeros(*img.grid());
                for (m, s) in self.measurement.iter().zip(&self.spots) {
                    out.add_scaled(inner_product(m, img)?, s)?;
                }
                Ok(out)
            })
            .collect()
    }

    pub fn train(&self, geometry: &Geometry, opts: &WfmOptions) -> Result<(MplcSystem, WfmReport)> {
        wavefront_match(&geometry.system()?, &self.measurement, &self.spots, opts)
    }
}

/// Löwdin orthonormalization `V (V†V)^{-1/2}`.
fn symmetric_orthonormalize(vs: &[StateVec]) -> Result<Vec<StateVec>> {
    let n = vs.len();
    let g = DMatrix::from_fn(n, n, |i, j| vs[i].inner(&vs[j]));
    let eig = SymmetricEigen::new(g);
    if eig.eigenvalues.min() <= RANK_TOLERANCE {
        return Err(Error::DegenerateInput(
            "measurement vectors are dependent".into(),
        ));
    }
    let u = &eig.eigenvectors;
    let w = u
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| C64::new(v.powf(-0.5), 0.0)))
        * u.adjoint();
    Ok((0..n)
        .map(|k| {
            let len = vs[0].len();
            StateVec::new(
                (0..len)
                    .map(|c| (0..n).map(|i| vs[i].coeffs()[c] * w[(i, k)]).sum())
                    .collect(),
            )
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct ImageUsdResult {
    pub task: ImageTask,
    pub system: MplcSystem,
    pub report: WfmReport,
    pub outcomes: SimulatedOutcomes,
    pub confusion: Array2<f64>,
    /// Mean share of each image's conclusive light in its own outcome.
    pub accuracy: f64,
}

/// Trains a sorter for `images` and classifies them through it.
pub fn image_usd(
    images: &[Field],
    geometry: &Geometry,
    opts: &ImageOptions,
) -> Result<ImageUsdResult> {
    let task = ImageTask::new(images, geometry, opts)?;
    let (system, report) = task.train(geometry, &opts.wfm)?;
    let outputs = images
        .iter()
        .map(|f| system.apply_forward(f))
        .collect::<Result<Vec<_>>>()?;
    let outcomes = outcomes_from_fields(&outputs, &task.detector)?;
    let confusion = confusion_matrix(&outcomes.raw)?;
    let accuracy = accuracy(&confusion);
    Ok(ImageUsdResult {
        task,
        system,
        report,
        outcomes,
        confusion,
        accuracy,
    })
}
