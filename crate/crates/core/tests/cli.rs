//! End-to-end runs of the `ogsnet` binary.

use std::path::Path;
use std::process::Command;

fn ogsnet(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ogsnet"))
        .current_dir(dir)
        .env_remove("OGSNET_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    ogsnet(dir, args).status.code().expect("exit code")
}

const SITES: &str = "name,lat_deg,lon_deg,roi_radius_px\na,-38.1,142.1,1\nb,-37.2,143.4,1\nc,-35.6,141.3,0\n";

fn synth(dir: &Path) {
    std::fs::write(dir.join("sites.csv"), SITES).unwrap();
    let args = [
        "synth",
        "--n-lat",
        "12",
        "--n-lon",
        "12",
        "--lat-min",
        "-40",
        "--lon-min",
        "140",
        "--pixel-size",
        "0.5",
        "--frames",
        "300",
        "--corr-length",
        "2",
        "--seed",
        "3",
        "--out",
        "m.cmg",
    ];
    assert_eq!(code(dir, &args), 0);
}

/// `(m, p_at_most_m, ci95)` rows of an outage table.
fn outage_rows(text: &str) -> Vec<(usize, f64, f64)> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn pipeline_gives_monotone_cdf_and_manifest() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path());
    let avail = [
        "availability",
        "--masks",
        "m.cmg",
        "--out",
        "grid.txt",
        "--sites",
        "sites.csv",
        "--site-table",
        "avail.csv",
    ];
    assert_eq!(code(d.path(), &avail), 0);
    assert_eq!(
        code(
            d.path(),
            &["corr-matrix", "--masks", "m.cmg", "--sites", "sites.csv", "--out", "corr.csv"]
        ),
        0
    );
    let out = [
        "outage",
        "--avail",
        "avail.csv",
        "--corr",
        "corr.csv",
        "--samples",
        "200000",
        "--out",
        "cdf.csv",
    ];
    assert_eq!(code(d.path(), &out), 0);
    let text = std::fs::read_to_string(d.path().join("cdf.csv")).unwrap();
    assert!(text.contains("# psd_repaired"));
    let rows = outage_rows(&text);
    assert_eq!(rows.len(), 4);
    assert!(rows.windows(2).all(|w| w[0].1 <= w[1].1));
    assert_eq!(rows[3].1, 1.0);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("cdf.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "outage");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert!(manifest["inputs"][0]["sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn independent_outage_matches_product() {
    let d = tempfile::tempdir().unwrap();
    let args = [
        "outage",
        "--omega",
        "0.3,0.5,0.4",
        "--r",
        "0",
        "--samples",
        "1000000",
        "--seed",
        "2",
        "--out",
        "o.csv",
    ];
    assert_eq!(code(d.path(), &args), 0);
    let rows = outage_rows(&std::fs::read_to_string(d.path().join("o.csv")).unwrap());
    let (_, p0, ci) = rows[0];
    assert!((p0 - 0.06).abs() <= ci, "p0 {p0} ci {ci}");
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(d.path(), &["outage", "--bogus"]), 2);
    assert_eq!(
        code(
            d.path(),
            &["corr-matrix", "--masks", "missing.cmg", "--sites", "s.csv", "--out", "x.csv"]
        ),
        3
    );
    assert_eq!(code(d.path(), &["outage", "--omega", "0.3,1.5", "--out", "x.csv"]), 4);
    assert!(!d.path().join("x.csv").exists());
    let err = String::from_utf8(ogsnet(d.path(), &["outage", "--omega", "0.3,1.5", "--out", "x.csv"]).stderr).unwrap();
    assert!(!err.is_empty());
}

#[test]
fn config_values_override_flags() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("run.cfg"), "# outage settings\nsamples = 70000\nseed = 9\n").unwrap();
    let args = [
        "outage",
        "--omega",
        "0.3",
        "--n",
        "2",
        "--samples",
        "5",
        "--config",
        "run.cfg",
        "--out",
        "o.csv",
    ];
    assert_eq!(code(d.path(), &args), 0);
    let text = std::fs::read_to_string(d.path().join("o.csv")).unwrap();
    assert!(text.contains("# n_samples = 70000"), "{text}");
    assert!(text.contains("# seed = 9"));
}

#[test]
fn thread_count_does_not_change_tables() {
    let d = tempfile::tempdir().unwrap();
    let base = [
        "outage",
        "--omega",
        "0.3,0.35,0.4",
        "--r",
        "0.2",
        "--samples",
        "400000",
        "--seed",
        "5",
    ];
    for (threads, out) in [("1", "t1.csv"), ("3", "t3.csv")] {
        let mut args = vec!["--threads", threads];
        args.extend_from_slice(&base);
        args.extend_from_slice(&["--out", out]);
        assert_eq!(code(d.path(), &args), 0);
    }
    let env_run = Command::new(env!("CARGO_BIN_EXE_ogsnet"))
        .current_dir(d.path())
        .env("OGSNET_THREADS", "2")
        .args(base)
        .args(["--out", "t2.csv"])
        .status()
        .unwrap();
    assert!(env_run.success());
    let read = |f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read("t1.csv"), read("t3.csv"));
    assert_eq!(read("t1.csv"), read("t2.csv"));
}
