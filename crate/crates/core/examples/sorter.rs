//! Trains a symmetric-state sorter and prints its outcome matrix.
//!
//! `cargo run --release -p usd-mplc --example sorter -- 3 0.5`

use usd_mplc::experiment::{build_sorter, simulate_outcomes, Geometry, RunReport};
use usd_mplc::WfmOptions;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let d: usize = args.next().map_or(Ok(3), |s| s.parse())?;
    let fidelity: f64 = args.next().map_or(Ok(0.0), |s| s.parse())?;
    // Optional JSON overrides, e.g. SORTER_GEOMETRY='{"spot_waist": 5e-5}'.
    let geometry: Geometry = match std::env::var("SORTER_GEOMETRY") {
        Ok(json) => serde_json::from_str(&json)?,
        Err(_) => Geometry::default(),
    };
    let start = std::time::Instant::now();
    let opts: WfmOptions = match std::env::var("SORTER_WFM") {
        Ok(json) => serde_json::from_str(&json)?,
        Err(_) => WfmOptions::default(),
    };
    let design = build_sorter(d, fidelity, &geometry, &opts)?;
    let det = geometry.detector(d + 1)?;
    let outcomes = simulate_outcomes(&design, &det)?;
    let report = RunReport::new(
        d,
        fidelity,
        &geometry,
        Some(design.report.clone()),
        &outcomes,
    )?;
    println!(
        "d={d} F={fidelity}: eta {:.4} -> {:.4} after {} sweeps ({:.1} s), monotone violations {}",
        design.report.initial_eta,
        design.report.final_eta(),
        design.report.sweeps,
        start.elapsed().as_secs_f64(),
        design.report.monotone_violations
    );
    let trace = &design.report.eta_trace;
    for k in [0, 9, 49, 99, 199, 299] {
        if let Some(e) = trace.get(k) {
            print!("[{}] {e:.4} ", k + 1);
        }
    }
    println!();
    for row in report.normalized.to_rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        println!("  {}", cells.join("  "));
    }
    println!(
        "p_err {:.4}  bound {:.4}  collected {:?}",
        report.p_err.mean, report.mesd_bound, outcomes.collected
    );
    Ok(())
}
