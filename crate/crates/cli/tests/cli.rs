use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polysign::report::read_table;
use tempfile::TempDir;

fn polysign(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polysign"))
        .current_dir(dir)
        .args(args)
        .env_remove("POLYSIGN_THREADS")
        .output()
        .expect("run polysign")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Value printed on a `name value` line.
fn printed(o: &Output, name: &str) -> f64 {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(name).and_then(|v| v.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no `{name}` in output:\n{}", stdout(o)))
        .parse()
        .unwrap()
}

const DISK_M1: &str = r#"{"domain": {"shape": "disk", "radius": 1, "cells": 24}, "m": 1,
    "source": {"kind": "constant", "value": 1}}"#;
const RECT_M2: &str = r#"{"domain": {"shape": "rectangle", "lx": 5, "ly": 1, "cells": 80}, "m": 2, "seed": 5,
    "source": {"kind": "random", "trial": 1}}"#;

#[test]
fn solve_writes_one_row_per_point() {
    let dir = TempDir::new().unwrap();
    write_config(dir.path(), "disk_m1.json", DISK_M1);
    let o = polysign(dir.path(), &["solve", "--config", "disk_m1.json"]);
    assert!(o.status.success(), "{o:?}");
    assert!(printed(&o, "residual") < 1e-10);
    let table = read_table(&std::fs::read_to_string(dir.path().join("out/u.csv")).unwrap()).unwrap();
    assert_eq!(table.columns, ["x", "y", "value"]);
    assert_eq!(table.rows.len() as f64, printed(&o, "points"));
    // Torsion function of the unit disk.
    for r in &table.rows {
        let exact = (1.0 - r[0] * r[0] - r[1] * r[1]) / 4.0;
        assert!((r[2] - exact).abs() < 5e-3);
    }
}

#[test]
fn zero_source_gives_zero_solution() {
    let dir = TempDir::new().unwrap();
    write_config(dir.path(), "zero.json", r#"{"domain": {"shape": "box3d", "lx": 1, "ly": 1, "lz": 1, "cells": 8}, "m": 2, "source": {"kind": "zero"}}"#);
    let o = polysign(dir.path(), &["solve", "--config", "zero.json", "--out", "z"]);
    assert!(o.status.success(), "{o:?}");
    let table = read_table(&std::fs::read_to_string(dir.path().join("z/u.csv")).unwrap()).unwrap();
    assert_eq!(table.columns, ["x", "y", "z", "value"]);
    assert_eq!(table.rows.len(), 7 * 7 * 7);
    assert!(table.column("value").unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn malformed_config_exits_with_two() {
    let dir = TempDir::new().unwrap();
    for (i, text) in [
        "{\"domain\":",
        r#"{"domain": {"shape": "disk", "radius": 1, "cells": 24}, "m": 1}"#,
        r#"{"domain": {"shape": "ellipse", "cells": 24}, "m": 1, "source": {"kind": "zero"}}"#,
        r#"{"domain": {"shape": "disk", "radius": 1, "cells": 24}, "m": 1, "source": {"kind": "random"}}"#,
    ]
    .iter()
    .enumerate()
    {
        let name = format!("bad{i}.json");
        write_config(dir.path(), &name, text);
        let o = polysign(dir.path(), &["solve", "--config", &name]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("polysign:"));
    }
    let o = polysign(dir.path(), &["solve"]);
    assert_eq!(o.status.code(), Some(2));
    let o = polysign(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_thread_count_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    write_config(dir.path(), "disk_m1.json", DISK_M1);
    let o = Command::new(env!("CARGO_BIN_EXE_polysign"))
        .current_dir(dir.path())
        .args(["solve", "--config", "disk_m1.json"])
        .env("POLYSIGN_THREADS", "none")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_polysign"))
        .current_dir(dir.path())
        .args(["solve", "--config", "disk_m1.json"])
        .env("POLYSIGN_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
}

#[test]
fn constants_detect_the_sign_change_and_are_deterministic() {
    let dir = TempDir::new().unwrap();
    write_config(dir.path(), "rect.json", RECT_M2);
    let a = polysign(dir.path(), &["constants", "--config", "rect.json", "--out", "a"]);
    let b = polysign(dir.path(), &["constants", "--config", "rect.json", "--out", "b"]);
    assert!(a.status.success() && b.status.success(), "{a:?}");
    let text = std::fs::read_to_string(dir.path().join("a/constants.csv")).unwrap();
    assert_eq!(text, std::fs::read_to_string(dir.path().join("b/constants.csv")).unwrap());
    assert!(text.starts_with("# polysign constants v1\ndomain,m,cells,c2_star,"));
    assert_eq!(text.lines().count(), 3);
    assert!(printed(&a, "c2_star") > 0.0);
    assert!(printed(&a, "c1_hat") > 0.0);
    assert!(printed(&a, "c3_hat").is_finite());

    write_config(dir.path(), "disk_m1.json", DISK_M1);
    let o = polysign(dir.path(), &["constants", "--config", "disk_m1.json"]);
    assert!(o.status.success());
    assert_eq!(printed(&o, "c2_star"), 0.0);
}

#[test]
fn constants_refuse_grids_over_the_dense_cap() {
    let dir = TempDir::new().unwrap();
    write_config(dir.path(), "disk_m1.json", DISK_M1);
    let o = polysign(dir.path(), &["constants", "--config", "disk_m1.json", "--cells", "128"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("4096"));
    assert!(!dir.path().join("out/constants.csv").exists());
}

#[test]
fn decompose_mixed_source_and_round_trip() {
    let dir = TempDir::new().unwrap();
    write_config(dir.path(), "rect.json", RECT_M2);
    let o = polysign(dir.path(), &["decompose", "--config", "rect.json"]);
    assert!(o.status.success(), "{o:?}");
    let scale = printed(&o, "scale");
    assert!(printed(&o, "min_u_oplus") >= -1e-12 * scale);
    assert!(printed(&o, "min_u_ominus") >= -1e-12 * scale);
    assert!(printed(&o, "chain_slack") >= -1e-12 * scale);
    assert!(printed(&o, "residual") <= 1e-10 * scale);

    let text = std::fs::read_to_string(dir.path().join("out/decomposition.csv")).unwrap();
    let table = read_table(&text).unwrap();
    assert_eq!(table.kind, "solution");
    assert_eq!(table.columns, ["x", "y", "f", "u", "u_oplus", "u_ominus"]);
    let f = table.column("f").unwrap();
    assert!(f.iter().any(|&v| v > 0.0) && f.iter().any(|&v| v < 0.0));
    let u = table.column("u").unwrap();
    assert_eq!(u.iter().fold(0.0f64, |m, v| m.max(v.abs())), scale);
    let (p, q) = (table.column("u_oplus").unwrap(), table.column("u_ominus").unwrap());
    for i in 0..u.len() {
        assert!((u[i] - (p[i] - q[i])).abs() <= 1e-10 * scale);
    }
}

#[test]
fn nonnegative_source_on_the_disk_has_no_negative_part() {
    let dir = TempDir::new().unwrap();
    write_config(
        dir.path(),
        "disk.json",
        r#"{"domain": {"shape": "disk", "radius": 1, "cells": 24}, "m": 2,
            "source": {"kind": "bumps", "bumps": [{"center": [0.2, -0.1, 0], "width": 0.3, "amplitude": 1}]}}"#,
    );
    let o = polysign(dir.path(), &["decompose", "--config", "disk.json"]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(printed(&o, "c2_used"), 0.0);
    assert_eq!(printed(&o, "min_u_ominus"), 0.0);
}

#[test]
fn decompose_without_correction_exits_with_five() {
    let dir = TempDir::new().unwrap();
    let text = RECT_M2.replacen("\"m\": 2,", "\"m\": 2, \"c2_used\": 0,", 1);
    write_config(dir.path(), "rect.json", &text);
    let o = polysign(dir.path(), &["decompose", "--config", "rect.json"]);
    assert_eq!(o.status.code(), Some(5), "{o:?}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("violated"));
}

#[test]
fn verify_reports_forced_violation() {
    let dir = TempDir::new().unwrap();
    write_config(dir.path(), "v.json", r#"{"verify": {"checks": [9], "corrupt_c2_used": true}}"#);
    let o = polysign(dir.path(), &["verify", "--config", "v.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("[FAIL]  9"));
    let summary = std::fs::read_to_string(dir.path().join("out/verify_summary.csv")).unwrap();
    assert!(summary.starts_with("# polysign verify summary v1\ncheck,name,passed,"));
    assert!(summary.contains("\n9,decomposition_identity,false,"));
}

#[test]
fn verify_subset_passes_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    write_config(dir.path(), "v.json", r#"{"verify": {"checks": [2, 4, 9]}}"#);
    let a = polysign(dir.path(), &["verify", "--config", "v.json", "--out", "a"]);
    let b = polysign(dir.path(), &["verify", "--config", "v.json", "--out", "b"]);
    assert!(a.status.success(), "{}", stdout(&a));
    assert!(b.status.success());
    let read = |d: &str| std::fs::read_to_string(dir.path().join(d).join("verify_summary.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_eq!(read("a").lines().count(), 5);
}

#[test]
fn experiment_writes_summary_and_trials() {
    let dir = TempDir::new().unwrap();
    write_config(
        dir.path(),
        "e.json",
        r#"{"domain": {"shape": "box3d", "lx": 1, "ly": 1, "lz": 1, "cells": 8}, "m": 1, "seed": 3,
            "experiment": {"kind": "hls_lemma", "p_plus": 1.2, "refine": true}}"#,
    );
    let o = polysign(dir.path(), &["experiment", "--config", "e.json"]);
    assert!(o.status.success(), "{o:?}");
    assert!(printed(&o, "empirical_constant").is_finite());
    let ratio = printed(&o, "refinement_ratio");
    assert!(ratio > 0.0 && ratio.is_finite());
    let summary = std::fs::read_to_string(dir.path().join("out/experiment.csv")).unwrap();
    let row = summary.lines().nth(2).unwrap();
    assert!(row.starts_with("hls_lemma,\"box3d(1,1,1)\",1,8,"), "{row}");
    let trials = read_table(&std::fs::read_to_string(dir.path().join("out/trials.csv")).unwrap()).unwrap();
    assert_eq!(trials.rows.len(), 40);
    let after_label = row.split_once("\",").unwrap().1;
    let q = after_label.split(',').nth(4).unwrap().parse::<f64>().unwrap();
    assert!((q - 6.0).abs() < 1e-12);

    // Overriding the seed changes the sources.
    let o2 = polysign(dir.path(), &["experiment", "--config", "e.json", "--seed", "4", "--out", "other"]);
    assert!(o2.status.success());
    assert_ne!(printed(&o, "empirical_constant"), printed(&o2, "empirical_constant"));
}

#[test]
fn experiment_without_seed_is_rejected() {
    let dir = TempDir::new().unwrap();
    write_config(
        dir.path(),
        "e.json",
        r#"{"domain": {"shape": "disk", "radius": 1, "cells": 16}, "m": 2, "experiment": {"kind": "theorem1_plus"}}"#,
    );
    let o = polysign(dir.path(), &["experiment", "--config", "e.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = polysign(dir.path(), &["experiment", "--config", "e.json", "--seed", "1"]);
    assert!(o.status.success(), "{o:?}");
}
