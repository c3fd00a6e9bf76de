//! Sorts the synthetic face set through a trained sorter.
//!
//! `cargo run --release -p usd-mplc --example faces -- [fixture-dir]`
//! writes `face_{1,2,3}.pgm` into `fixture-dir` when given.

use std::path::PathBuf;

use usd_mplc::experiment::{
    fidelity_matrix, field_from_image, image_usd, save_image_pgm, synthetic_faces, Geometry,
    ImageOptions, PixelMode,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let geometry = Geometry::default();
    let grid = geometry.grid()?;
    let faces = synthetic_faces(128, 0.34)?;
    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        std::fs::create_dir_all(&dir)?;
        for (k, f) in faces.iter().enumerate() {
            save_image_pgm(f, &dir.join(format!("face_{}.pgm", k + 1)))?;
        }
    }
    let fields = faces
        .iter()
        .map(|f| field_from_image(f, &grid, 1, PixelMode::Amplitude))
        .collect::<Result<Vec<_>, _>>()?;
    println!("fidelities:\n{:.4}", fidelity_matrix(&fields)?);
    let start = std::time::Instant::now();
    let res = image_usd(&fields, &geometry, &ImageOptions::default())?;
    println!(
        "eta {:.4} after {} sweeps ({:.1} s)",
        res.report.final_eta(),
        res.report.sweeps,
        start.elapsed().as_secs_f64()
    );
    println!(
        "normalized outcomes:\n{:.4}",
        res.outcomes.normalized.values()
    );
    println!("confusion:\n{:.4}", res.confusion);
    println!("accuracy {:.4}", res.accuracy);
    Ok(())
}
