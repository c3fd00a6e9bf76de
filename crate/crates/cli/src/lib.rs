//! `usdsort`: train, simulate and sweep USD mode sorters from the command line.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use usd_mplc::experiment::PixelMode;
use usd_mplc::mplc::MaskFormat;

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "usdsort",
    version,
    about = "Design and simulate USD mode sorters"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Reject unresolved sampling and fail on non-convergence.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Cells {
    /// State dimensions, comma separated.
    #[arg(long = "d", value_delimiter = ',')]
    pub d: Vec<usize>,
    /// Pairwise fidelities, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub fidelity: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PixelsArg {
    Intensity,
    Amplitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskFormatArg {
    Text,
    Pgm,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train sorters and export masks.
    Design {
        #[command(flatten)]
        cells: Cells,
    },
    /// Compute outcome matrices and reports.
    Simulate {
        #[command(flatten)]
        cells: Cells,
        /// Bypass the masks and detect the analytic target fields.
        #[arg(long)]
        ideal: bool,
        /// Masks to load instead of the run directory.
        #[arg(long, conflicts_with = "ideal")]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum)]
        mask_format: Option<MaskFormatArg>,
    },
    /// Design and simulate every (d, F) cell, then aggregate.
    Sweep {
        #[command(flatten)]
        cells: Cells,
        /// Skip cells whose stored parameters match.
        #[arg(long)]
        resume: bool,
    },
    /// Discriminate grayscale images.
    SortImages {
        /// Grayscale PGM or PNG files.
        paths: Vec<PathBuf>,
        /// Print pairwise fidelities and stop.
        #[arg(long)]
        report_gram_only: bool,
        #[arg(long, value_enum)]
        pixels_are: Option<PixelsArg>,
        /// Samples per pixel along each axis.
        #[arg(long)]
        scale: Option<usize>,
    },
}

fn apply_cells(cfg: &mut RunConfig, cells: &Cells) {
    if !cells.d.is_empty() {
        cfg.dimensions = cells.d.clone();
    }
    if !cells.fidelity.is_empty() {
        cfg.fidelities = cells.fidelity.clone();
    }
}

/// Loads the config file (if any) and applies flag overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.common.out {
        cfg.output = out.clone();
    }
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    cfg.strict |= cli.common.strict;
    match &cli.command {
        Command::Design { cells }
        | Command::Simulate { cells, .. }
        | Command::Sweep { cells, .. } => apply_cells(&mut cfg, cells),
        Command::SortImages {
            paths,
            pixels_are,
            scale,
            ..
        } => {
            if !paths.is_empty() {
                cfg.images.paths = paths.clone();
            }
            if let Some(p) = pixels_are {
                cfg.images.pixels_are = match p {
                    PixelsArg::Intensity => PixelMode::Intensity,
                    PixelsArg::Amplitude => PixelMode::Amplitude,
                };
            }
            if let Some(s) = scale {
                cfg.images.scale = *s;
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    if let Some(jobs) = cli.common.jobs {
        if jobs == 0 {
            return Err(CliError::Validation {
                path: "jobs".into(),
                msg: "must be >= 1".into(),
            });
        }
        // Fails only if the pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match &cli.command {
        Command::Design { .. } => commands::design(&cfg),
        Command::Simulate {
            ideal,
            manifest,
            mask_format,
            ..
        } => {
            let src = commands::SimulateSource {
                ideal: *ideal,
                manifest: manifest.clone(),
                mask_format: mask_format.map(|f| match f {
                    MaskFormatArg::Text => MaskFormat::Text,
                    MaskFormatArg::Pgm => MaskFormat::Pgm,
                }),
            };
            commands::simulate(&cfg, &src).map(|_| ())
        }
        Command::Sweep { resume, .. } => commands::sweep(&cfg, *resume).map(|_| ()),
        Command::SortImages {
            report_gram_only, ..
        } => commands::sort_images(&cfg, *report_gram_only).map(|_| ()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"dimensions": [4], "fidelities": [0.1, 0.2], "seed": 7}"#,
        )
        .unwrap();
        let cli = Cli::parse_from([
            "usdsort",
            "sweep",
            "--config",
            path.to_str().unwrap(),
            "--d",
            "2,3",
            "--seed",
            "9",
        ]);
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!(cfg.dimensions, vec![2, 3]);
        assert_eq!(cfg.fidelities, vec![0.1, 0.2]);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn invalid_dimension_is_a_validation_error() {
        let cli = Cli::parse_from(["usdsort", "design", "--d", "1"]);
        let err = resolve_config(&cli).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("dimension"));
    }

    #[test]
    fn missing_config_is_io() {
        let cli = Cli::parse_from(["usdsort", "design", "--config", "/nonexistent/run.json"]);
        assert_eq!(resolve_config(&cli).unwrap_err().exit_code(), 2);
    }
}
