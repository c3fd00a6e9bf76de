use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"{"geometry": {"nx": 64, "ny": 64}, "wfm": {"max_sweeps": 8}}"#;

fn usdsort(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_usdsort"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn workspace(config: &str) -> TempDir {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.json"), config).unwrap();
    tmp
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn faces() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/faces");
    (1..=3).map(|k| dir.join(format!("face_{k}.pgm"))).collect()
}

fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn design_writes_masks_and_manifest() {
    let tmp = workspace(SMALL);
    let out = usdsort(
        tmp.path(),
        &[
            "design",
            "--config",
            "run.json",
            "--d",
            "3",
            "--fidelity",
            "0.5",
            "--out",
            "o",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let cell = tmp.path().join("o/d3_F0.5");
    for p in 1..=4 {
        assert!(cell.join(format!("mask_{p}.txt")).is_file());
        assert!(cell.join(format!("mask_{p}.pgm")).is_file());
    }
    assert!(!cell.join("mask_5.txt").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cell.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["n_planes"], 4);
    assert_eq!(manifest["training"]["params"]["d"], 3);
    assert_eq!(manifest["training"]["hash"].as_str().unwrap().len(), 64);
    assert!(cell.join("wfm_report.json").is_file());
}

#[test]
fn design_is_deterministic() {
    let tmp = workspace(
        r#"{"geometry": {"nx": 64, "ny": 64}, "wfm": {"max_sweeps": 5, "init": "random"}}"#,
    );
    for out in ["a", "b"] {
        let o = usdsort(
            tmp.path(),
            &[
                "design",
                "--config",
                "run.json",
                "--d",
                "2",
                "--fidelity",
                "0.3",
                "--seed",
                "11",
                "--out",
                out,
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for p in 1..=4 {
        let name = format!("d2_F0.3/mask_{p}.txt");
        let a = fs::read(tmp.path().join("a").join(&name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(&name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn dimension_one_is_rejected() {
    let tmp = workspace(SMALL);
    let out = usdsort(tmp.path(), &["design", "--d", "1", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("dimension"), "{}", stderr(&out));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn unknown_config_field_is_rejected() {
    let tmp = workspace(r#"{"geometry": {"n_plane": 4}}"#);
    let out = usdsort(tmp.path(), &["design", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("n_plane"), "{}", stderr(&out));
}

#[test]
fn ideal_simulation_matches_pattern() {
    let tmp = workspace(SMALL);
    let out = usdsort(
        tmp.path(),
        &[
            "simulate",
            "--config",
            "run.json",
            "--ideal",
            "--d",
            "3",
            "--fidelity",
            "0.4",
            "--out",
            "o",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let m = read_csv(&tmp.path().join("o/d3_F0.4/normalized.csv"));
    assert_eq!(m.len(), 3);
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let want = if j == 3 {
                0.4
            } else if i == j {
                0.6
            } else {
                0.0
            };
            assert!((v - want).abs() < 1e-6, "({i},{j}) = {v}");
        }
    }
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("o/d3_F0.4/report.json")).unwrap(),
    )
    .unwrap();
    assert!(report["wfm"].is_null());
    assert!(report["p_err"]["mean"].as_f64().unwrap() < 1e-6);
}

#[test]
fn simulate_reuses_designed_masks() {
    let tmp = workspace(SMALL);
    let args = [
        "--config",
        "run.json",
        "--d",
        "2",
        "--fidelity",
        "0",
        "--out",
        "o",
    ];
    assert!(usdsort(tmp.path(), &[&["design"], &args[..]].concat())
        .status
        .success());
    let before = fs::read(tmp.path().join("o/d2_F0/mask_1.txt")).unwrap();
    let out = usdsort(tmp.path(), &[&["simulate"], &args[..]].concat());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        before,
        fs::read(tmp.path().join("o/d2_F0/mask_1.txt")).unwrap()
    );
    let c = read_csv(&tmp.path().join("o/d2_F0/confusion.csv"));
    assert!(c[0][0] > 0.9 && c[1][1] > 0.9, "{c:?}");

    let pgm = usdsort(
        tmp.path(),
        &[&["simulate", "--mask-format", "pgm"], &args[..]].concat(),
    );
    assert!(pgm.status.success(), "{}", stderr(&pgm));
}

#[test]
fn corrupt_pgm_is_an_io_error() {
    let tmp = workspace(SMALL);
    let args = [
        "--config",
        "run.json",
        "--d",
        "2",
        "--fidelity",
        "0.5",
        "--out",
        "o",
    ];
    assert!(usdsort(tmp.path(), &[&["design"], &args[..]].concat())
        .status
        .success());
    let bad = tmp.path().join("o/d2_F0.5/mask_2.pgm");
    fs::write(&bad, b"P5\n64 64\n65535\ngarbage").unwrap();
    let out = usdsort(
        tmp.path(),
        &[&["simulate", "--mask-format", "pgm"], &args[..]].concat(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("mask_2.pgm"), "{}", stderr(&out));

    fs::remove_file(tmp.path().join("o/d2_F0.5/mask_3.txt")).unwrap();
    let out = usdsort(tmp.path(), &[&["simulate"], &args[..]].concat());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("mask_3.txt"), "{}", stderr(&out));
}

#[test]
fn sweep_aggregates_and_resumes() {
    let tmp = workspace(SMALL);
    let args = [
        "sweep",
        "--config",
        "run.json",
        "--d",
        "3",
        "--fidelity",
        "0.2,0.5,0.8",
        "--out",
        "s",
        "--jobs",
        "2",
    ];
    let out = usdsort(tmp.path(), &args);
    assert!(out.status.success(), "{}", stderr(&out));
    let agg = fs::read_to_string(tmp.path().join("s/aggregate.csv")).unwrap();
    let rows: Vec<&str> = agg.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.ends_with(",ok")), "{agg}");
    for f in ["0.2", "0.5", "0.8"] {
        assert!(tmp.path().join(format!("s/d3_F{f}/report.json")).is_file());
    }
    let stamp = fs::metadata(tmp.path().join("s/d3_F0.5/mask_1.txt"))
        .unwrap()
        .modified()
        .unwrap();

    let out = usdsort(tmp.path(), &[&args[..], &["--resume"]].concat());
    assert!(out.status.success(), "{}", stderr(&out));
    let again = fs::read_to_string(tmp.path().join("s/aggregate.csv")).unwrap();
    assert!(
        again.lines().skip(1).all(|r| r.ends_with(",resumed")),
        "{again}"
    );
    assert_eq!(
        fs::metadata(tmp.path().join("s/d3_F0.5/mask_1.txt"))
            .unwrap()
            .modified()
            .unwrap(),
        stamp
    );
    let strip = |s: &str| {
        s.lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_owned())
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&agg), strip(&again));

    // A changed seed invalidates the stored hash.
    let out = usdsort(
        tmp.path(),
        &[&args[..], &["--resume", "--seed", "5"]].concat(),
    );
    assert!(out.status.success());
    let third = fs::read_to_string(tmp.path().join("s/aggregate.csv")).unwrap();
    assert!(third.lines().skip(1).all(|r| r.ends_with(",ok")), "{third}");
}

#[test]
fn sweep_records_failed_cells() {
    let tmp = workspace(SMALL);
    let out = usdsort(
        tmp.path(),
        &[
            "sweep",
            "--config",
            "run.json",
            "--d",
            "2,8",
            "--fidelity",
            "0.5",
            "--out",
            "s",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let agg = fs::read_to_string(tmp.path().join("s/aggregate.csv")).unwrap();
    let rows: Vec<&str> = agg.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].ends_with(",ok"));
    assert!(rows[1].starts_with("8,0.5,,"), "{agg}");
}

#[test]
fn strict_mode_fails_on_non_convergence() {
    let tmp = workspace(r#"{"geometry": {"nx": 64, "ny": 64}, "wfm": {"max_sweeps": 2}}"#);
    let out = usdsort(
        tmp.path(),
        &[
            "design", "--config", "run.json", "--d", "2", "--strict", "--out", "o",
        ],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn gram_only_prints_fidelities() {
    let tmp = workspace("{}");
    let faces = faces();
    let paths: Vec<&str> = faces.iter().map(|p| p.to_str().unwrap()).collect();
    let out = usdsort(
        tmp.path(),
        &[
            &["sort-images", "--report-gram-only", "--out", "g"],
            &paths[..],
        ]
        .concat(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let gram: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(gram.len(), 3);
    for (i, row) in gram.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.34 };
            assert!((v - want).abs() <= 0.02, "({i},{j}) = {v}");
        }
    }
    assert!(!tmp.path().join("g/masks").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("g/images_report.json")).unwrap())
            .unwrap();
    assert!(report["accuracy"].is_null());
}

#[test]
fn mismatched_images_are_rejected() {
    let tmp = workspace("{}");
    let small = tmp.path().join("small.pgm");
    let mut bytes = b"P5\n32 32\n255\n".to_vec();
    bytes.extend(std::iter::repeat_n(128u8, 32 * 32));
    fs::write(&small, bytes).unwrap();
    let faces = faces();
    let out = usdsort(
        tmp.path(),
        &[
            "sort-images",
            "--report-gram-only",
            faces[0].to_str().unwrap(),
            small.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("images.paths[1]"), "{}", stderr(&out));
}

#[test]
fn sorts_shipped_faces() {
    let tmp = workspace("{}");
    let faces = faces();
    let paths: Vec<&str> = faces.iter().map(|p| p.to_str().unwrap()).collect();
    let out = usdsort(
        tmp.path(),
        &[
            &["sort-images", "--out", "f", "--pixels-are", "amplitude"],
            &paths[..],
        ]
        .concat(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("f/images_report.json")).unwrap())
            .unwrap();
    let acc = report["accuracy"].as_f64().unwrap();
    assert!(acc >= 0.95, "accuracy {acc}");
    assert!(tmp.path().join("f/masks/manifest.json").is_file());
    assert_eq!(read_csv(&tmp.path().join("f/confusion.csv")).len(), 3);
}
