use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use usd_mplc::experiment::{
    build_sorter, fidelity_matrix, field_from_image, image_usd, load_image, matrix_csv,
    outcomes_from_fields, ImageOptions, RunReport, SorterDesign, SorterTask,
};
use usd_mplc::mplc::{export_system, import_system, read_manifest, MaskFormat, MANIFEST_NAME};
use usd_mplc::{Field, OutcomeMatrix, WfmReport};

use crate::config::RunConfig;
use crate::error::CliError;

pub fn cell_dir(out: &Path, d: usize, fidelity: f64) -> PathBuf {
    out.join(format!("d{d}_F{fidelity}"))
}

fn cells(cfg: &RunConfig) -> Vec<(usize, f64)> {
    cfg.dimensions
        .iter()
        .flat_map(|&d| cfg.fidelities.iter().map(move |&f| (d, f)))
        .collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Inputs that fully determine a trained cell.
fn cell_params(cfg: &RunConfig, d: usize, fidelity: f64) -> serde_json::Value {
    json!({
        "d": d,
        "fidelity": fidelity,
        "seed": cfg.seed,
        "geometry": cfg.geometry(),
        "wfm": cfg.wfm_options(),
    })
}

pub fn params_hash(params: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(params.to_string().as_bytes()))
}

fn check_convergence(cfg: &RunConfig, report: &WfmReport) -> Result<(), CliError> {
    if report.converged {
        return Ok(());
    }
    if cfg.geometry().strict {
        return Err(CliError::NotConverged {
            sweeps: report.sweeps,
            eta: report.final_eta(),
        });
    }
    warn!(
        "training stopped after {} sweeps without converging (eta {:.6})",
        report.sweeps,
        report.final_eta()
    );
    Ok(())
}

/// Trains one cell and writes masks, manifest and the training report.
fn design_cell(cfg: &RunConfig, d: usize, fidelity: f64) -> Result<SorterDesign, CliError> {
    let dir = cell_dir(&cfg.output, d, fidelity);
    info!("training d = {d}, F = {fidelity}");
    let design = build_sorter(d, fidelity, &cfg.geometry(), &cfg.wfm_options())?;
    check_convergence(cfg, &design.report)?;
    let params = cell_params(cfg, d, fidelity);
    let training = json!({
        "hash": params_hash(&params),
        "params": params,
        "report": design.report,
    });
    export_system(&design.system, &dir, training)?;
    write_json(&dir.join("wfm_report.json"), &design.report)?;
    info!(
        "d = {d}, F = {fidelity}: eta {:.4} -> {}",
        design.report.final_eta(),
        dir.display()
    );
    Ok(design)
}

pub fn design(cfg: &RunConfig) -> Result<(), CliError> {
    for (d, f) in cells(cfg) {
        design_cell(cfg, d, f)?;
    }
    Ok(())
}

fn simulate_fields(
    cfg: &RunConfig,
    d: usize,
    fidelity: f64,
    outputs: &[Field],
    wfm: Option<WfmReport>,
) -> Result<RunReport, CliError> {
    let geometry = cfg.geometry();
    let detector = geometry.detector(d + 1)?;
    let outcomes = outcomes_from_fields(outputs, &detector)?;
    let report = RunReport::new(d, fidelity, &geometry, wfm, &outcomes)?;
    report.write(&cell_dir(&cfg.output, d, fidelity))?;
    Ok(report)
}

fn simulate_design(cfg: &RunConfig, design: &SorterDesign) -> Result<RunReport, CliError> {
    let outputs = design
        .inputs()
        .iter()
        .map(|f| design.system.apply_forward(f))
        .collect::<Result<Vec<_>, _>>()?;
    simulate_fields(
        cfg,
        design.d(),
        design.fidelity(),
        &outputs,
        Some(design.report.clone()),
    )
}

/// Where `simulate` gets its outputs from.
#[derive(Debug, Clone, Default)]
pub struct SimulateSource {
    /// Use the analytic target fields instead of any masks.
    pub ideal: bool,
    /// Explicit manifest; otherwise the cell directory is searched, then
    /// the sorter is trained.
    pub manifest: Option<PathBuf>,
    pub mask_format: Option<MaskFormat>,
}

pub fn simulate(cfg: &RunConfig, src: &SimulateSource) -> Result<Vec<RunReport>, CliError> {
    let cells = cells(cfg);
    if src.manifest.is_some() && cells.len() != 1 {
        return Err(CliError::Validation {
            path: "manifest".into(),
            msg: format!(
                "an explicit manifest needs exactly one (d, F) cell, got {}",
                cells.len()
            ),
        });
    }
    let mut reports = Vec::with_capacity(cells.len());
    for (d, f) in cells {
        let report = if src.ideal {
            let task = SorterTask::new(d, f, &cfg.geometry())?;
            simulate_fields(cfg, d, f, &task.targets, None)?
        } else {
            let manifest = src.manifest.clone().or_else(|| {
                Some(cell_dir(&cfg.output, d, f).join(MANIFEST_NAME)).filter(|p| p.exists())
            });
            match manifest {
                Some(path) => {
                    info!("loading masks from {}", path.display());
                    let (system, manifest) =
                        import_system(&path, src.mask_format.unwrap_or(MaskFormat::Text))?;
                    let wfm = serde_json::from_value(manifest.training["report"].clone()).ok();
                    let task = SorterTask::new(d, f, &cfg.geometry())?;
                    let outputs = task
                        .inputs
                        .iter()
                        .map(|x| system.apply_forward(x))
                        .collect::<Result<Vec<_>, _>>()?;
                    simulate_fields(cfg, d, f, &outputs, wfm)?
                }
                None => simulate_design(cfg, &design_cell(cfg, d, f)?)?,
            }
        };
        info!(
            "d = {d}, F = {f}: p_err {:.4}, bound {:.4}",
            report.p_err.mean, report.mesd_bound
        );
        reports.push(report);
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub d: usize,
    pub fidelity: f64,
    pub p_err: Option<f64>,
    pub mesd_bound: Option<f64>,
    pub below_bound: Option<bool>,
    pub mean_ambiguous: Option<f64>,
    pub eta: Option<f64>,
    /// `ok`, `resumed`, or the error message.
    pub status: String,
    #[serde(skip)]
    pub exit_code: i32,
}

/// Reuses a finished cell when its stored parameters match.
fn resumable(cfg: &RunConfig, d: usize, fidelity: f64) -> Option<RunReport> {
    let dir = cell_dir(&cfg.output, d, fidelity);
    let manifest = read_manifest(&dir.join(MANIFEST_NAME)).ok()?;
    let want = params_hash(&cell_params(cfg, d, fidelity));
    if manifest.training["hash"].as_str() != Some(want.as_str()) {
        return None;
    }
    let text = fs::read_to_string(dir.join("report.json")).ok()?;
    serde_json::from_str(&text).ok()
}

fn sweep_cell(cfg: &RunConfig, d: usize, fidelity: f64, resume: bool) -> SweepRow {
    let (result, status) = match resume.then(|| resumable(cfg, d, fidelity)).flatten() {
        Some(r) => {
            info!("d = {d}, F = {fidelity}: resumed");
            (Ok(r), "resumed")
        }
        None => (
            design_cell(cfg, d, fidelity).and_then(|x| simulate_design(cfg, &x)),
            "ok",
        ),
    };
    match result {
        Ok(r) => SweepRow {
            d,
            fidelity,
            p_err: Some(r.p_err.mean),
            mesd_bound: Some(r.mesd_bound),
            below_bound: Some(r.below_bound),
            mean_ambiguous: Some(r.mean_ambiguous),
            eta: r.wfm.as_ref().map(WfmReport::final_eta),
            status: status.into(),
            exit_code: 0,
        },
        Err(e) => {
            warn!("d = {d}, F = {fidelity}: {e}");
            SweepRow {
                d,
                fidelity,
                p_err: None,
                mesd_bound: None,
                below_bound: None,
                mean_ambiguous: None,
                eta: None,
                status: e.to_string(),
                exit_code: e.exit_code(),
            }
        }
    }
}

fn csv_field<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn aggregate_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("d,F,p_err,mesd_bound,below_bound,mean_ambiguous,eta,status\n");
    for r in rows {
        let status = if r.status.contains([',', '"', '\n']) {
            format!("\"{}\"", r.status.replace('"', "\"\"").replace('\n', " "))
        } else {
            r.status.clone()
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.d,
            r.fidelity,
            csv_field(r.p_err),
            csv_field(r.mesd_bound),
            csv_field(r.below_bound),
            csv_field(r.mean_ambiguous),
            csv_field(r.eta),
            status
        );
    }
    s
}

/// Runs every `(d, F)` cell, in parallel up to the rayon pool size, then
/// writes `aggregate.csv` and `aggregate.json`.
pub fn sweep(cfg: &RunConfig, resume: bool) -> Result<Vec<SweepRow>, CliError> {
    fs::create_dir_all(&cfg.output).map_err(|e| CliError::io(&cfg.output, e))?;
    let rows: Vec<SweepRow> = cells(cfg)
        .into_par_iter()
        .map(|(d, f)| sweep_cell(cfg, d, f, resume))
        .collect();
    let csv = cfg.output.join("aggregate.csv");
    fs::write(&csv, aggregate_csv(&rows)).map_err(|e| CliError::io(&csv, e))?;
    write_json(&cfg.output.join("aggregate.json"), &rows)?;
    let failed: Vec<&SweepRow> = rows.iter().filter(|r| r.exit_code != 0).collect();
    if let Some(first) = failed.first() {
        return Err(CliError::PartialSweep {
            failed: failed.len(),
            total: rows.len(),
            code: first.exit_code,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageReport {
    pub images: Vec<PathBuf>,
    pub fidelities: Vec<Vec<f64>>,
    pub wfm: Option<WfmReport>,
    pub raw: Option<OutcomeMatrix>,
    pub normalized: Option<OutcomeMatrix>,
    pub confusion: Option<Vec<Vec<f64>>>,
    pub accuracy: Option<f64>,
}

fn load_fields(cfg: &RunConfig) -> Result<Vec<Field>, CliError> {
    let paths = &cfg.images.paths;
    if paths.len() < 2 {
        return Err(CliError::Validation {
            path: "images.paths".into(),
            msg: format!("need at least 2 images, got {}", paths.len()),
        });
    }
    let levels = paths
        .iter()
        .map(|p| load_image(p))
        .collect::<Result<Vec<_>, _>>()?;
    let first = levels[0].dim();
    for (k, l) in levels.iter().enumerate().skip(1) {
        if l.dim() != first {
            return Err(CliError::Validation {
                path: format!("images.paths[{k}]"),
                msg: format!(
                    "{} is {}x{}, expected {}x{} like {}",
                    paths[k].display(),
                    l.ncols(),
                    l.nrows(),
                    first.1,
                    first.0,
                    paths[0].display()
                ),
            });
        }
    }
    let grid = cfg.geometry().grid()?;
    Ok(levels
        .iter()
        .map(|l| field_from_image(l, &grid, cfg.images.scale, cfg.images.pixels_are))
        .collect::<Result<Vec<_>, _>>()?)
}

fn fidelity_text(f: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for row in f {
        let cols: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(s, "{}", cols.join(" "));
    }
    s
}

pub fn sort_images(cfg: &RunConfig, gram_only: bool) -> Result<ImageReport, CliError> {
    let fields = load_fields(cfg)?;
    let out = &cfg.output;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let gram = fidelity_matrix(&fields)?;
    let fidelities: Vec<Vec<f64>> = gram.outer_iter().map(|r| r.to_vec()).collect();
    print!("{}", fidelity_text(&fidelities));
    let path = out.join("fidelities.csv");
    fs::write(&path, matrix_csv(&gram, false)).map_err(|e| CliError::io(&path, e))?;

    let mut report = ImageReport {
        images: cfg.images.paths.clone(),
        fidelities,
        wfm: None,
        raw: None,
        normalized: None,
        confusion: None,
        accuracy: None,
    };
    if !gram_only {
        let opts = ImageOptions {
            aux: cfg.images.aux.clone(),
            fidelity_tolerance: cfg.images.fidelity_tolerance,
            wfm: cfg.wfm_options(),
        };
        let res = image_usd(&fields, &cfg.geometry(), &opts)?;
        check_convergence(cfg, &res.report)?;
        export_system(
            &res.system,
            &out.join("masks"),
            json!({ "report": res.report }),
        )?;
        let path = out.join("confusion.csv");
        fs::write(&path, matrix_csv(&res.confusion, false)).map_err(|e| CliError::io(&path, e))?;
        let path = out.join("raw.csv");
        fs::write(&path, matrix_csv(res.outcomes.raw.values(), true))
            .map_err(|e| CliError::io(&path, e))?;
        println!("accuracy {:.4}", res.accuracy);
        report.confusion = Some(res.confusion.outer_iter().map(|r| r.to_vec()).collect());
        report.accuracy = Some(res.accuracy);
        report.raw = Some(res.outcomes.raw);
        report.normalized = Some(res.outcomes.normalized);
        report.wfm = Some(res.report);
    }
    write_json(&out.join("images_report.json"), &report)?;
    Ok(report)
}
