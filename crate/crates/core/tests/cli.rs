//! End-to-end tests of the `mts` binary: file formats, exit codes, and
//! agreement with direct library calls.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use mts::estimators;
use mts::hashing::SeedSet;
use mts::sketch::{MtsSketch, SketchConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mts"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mts-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_ids(path: &PathBuf, ids: &[u64]) {
    let mut text = String::new();
    for id in ids {
        text.push_str(&id.to_string());
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn fixture_ids() -> Vec<u64> {
    // 100 pinned ids with repeats.
    (0..100u64).map(|i| (i * i + 7) % 40).collect()
}

#[test]
fn build_then_estimate_matches_library() {
    let dir = scratch("build-estimate");
    let ids_path = dir.join("ids.txt");
    let sketch_path = dir.join("a.mts");
    let ids = fixture_ids();
    write_ids(&ids_path, &ids);

    let out = run(bin()
        .args(["sketch-build", "--input"])
        .arg(&ids_path)
        .arg("--output")
        .arg(&sketch_path)
        .args(["-m", "64", "-u", "32", "--value-seed", "5", "--bucket-seed", "6"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(bin().args(["estimate", "--expr", "A"]).arg(&sketch_path));
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["algorithm"], "single");

    let config = SketchConfig::new(64, 32, SeedSet::new(5, 6)).unwrap();
    let mut sketch = MtsSketch::new(config).unwrap();
    sketch.insert_all(ids);
    let expected = estimators::estimate_single(&sketch).unwrap();
    assert_eq!(doc["value"].as_f64().unwrap(), expected.value);
}

#[test]
fn empty_input_is_a_data_error() {
    let dir = scratch("empty-input");
    let ids_path = dir.join("empty.txt");
    fs::write(&ids_path, "").unwrap();
    let out = run(bin()
        .args(["sketch-build", "--input"])
        .arg(&ids_path)
        .arg("--output")
        .arg(dir.join("x.mts")));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn golden_sketch_bytes_are_stable() {
    let dir = scratch("golden");
    let ids_path = dir.join("ids.txt");
    let sketch_path = dir.join("golden.mts");
    write_ids(&ids_path, &fixture_ids());
    let out = run(bin()
        .args(["sketch-build", "--input"])
        .arg(&ids_path)
        .arg("--output")
        .arg(&sketch_path)
        .args(["-m", "64", "-u", "32", "--value-seed", "5", "--bucket-seed", "6"]));
    assert!(out.status.success());
    let bytes = fs::read(&sketch_path).unwrap();
    let golden = include_bytes!("fixtures/golden_100.mts");
    assert_eq!(bytes, golden, "sketch file bytes drifted from the frozen fixture");
}

#[test]
fn merge_of_shards_equals_sketch_of_concatenation() {
    let dir = scratch("shards");
    let all: Vec<u64> = (0..600u64).map(|i| (i * 31 + 5) % 200).collect();
    let shards: Vec<&[u64]> = all.chunks(200).collect();

    let mut shard_paths = Vec::new();
    for (i, shard) in shards.iter().enumerate() {
        let ids_path = dir.join(format!("shard{i}.txt"));
        write_ids(&ids_path, shard);
        let sketch_path = dir.join(format!("shard{i}.mts"));
        let out = run(bin()
            .args(["sketch-build", "--input"])
            .arg(&ids_path)
            .arg("--output")
            .arg(&sketch_path)
            .args(["-m", "64", "-u", "32"]));
        assert!(out.status.success());
        shard_paths.push(sketch_path);
    }

    let merged_path = dir.join("merged.mts");
    let mut cmd = bin();
    cmd.args(["merge", "--output"]).arg(&merged_path);
    for p in &shard_paths {
        cmd.arg(p);
    }
    assert!(run(&mut cmd).status.success());

    let whole_ids = dir.join("all.txt");
    write_ids(&whole_ids, &all);
    let whole_path = dir.join("all.mts");
    assert!(run(bin()
        .args(["sketch-build", "--input"])
        .arg(&whole_ids)
        .arg("--output")
        .arg(&whole_path)
        .args(["-m", "64", "-u", "32"]))
    .status
    .success());

    assert_eq!(
        fs::read(&merged_path).unwrap(),
        fs::read(&whole_path).unwrap()
    );
}

#[test]
fn mismatched_seeds_exit_3() {
    let dir = scratch("mismatch");
    let ids_path = dir.join("ids.txt");
    write_ids(&ids_path, &fixture_ids());
    for (name, seed) in [("a.mts", "5"), ("b.mts", "9")] {
        assert!(run(bin()
            .args(["sketch-build", "--input"])
            .arg(&ids_path)
            .arg("--output")
            .arg(dir.join(name))
            .args(["-m", "64", "-u", "32", "--value-seed", seed]))
        .status
        .success());
    }
    let out = run(bin()
        .args(["merge", "--output"])
        .arg(dir.join("m.mts"))
        .arg(dir.join("a.mts"))
        .arg(dir.join("b.mts")));
    assert_eq!(out.status.code(), Some(3));

    let out = run(bin()
        .args(["estimate", "--expr", "A & B"])
        .arg(dir.join("a.mts"))
        .arg(dir.join("b.mts")));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn pair_and_expression_estimates_dispatch() {
    let dir = scratch("dispatch");
    // Three overlapping streams with known relationships; each element
    // appears twice so the subsample window is not all singletons.
    let a: Vec<u64> = (0..400u64).flat_map(|e| [e, e]).collect();
    let b: Vec<u64> = (200..600u64).flat_map(|e| [e, e]).collect();
    let c: Vec<u64> = (300..700u64).flat_map(|e| [e, e]).collect();
    for (name, ids) in [("a", &a), ("b", &b), ("c", &c)] {
        let ids_path = dir.join(format!("{name}.txt"));
        write_ids(&ids_path, ids);
        assert!(run(bin()
            .args(["sketch-build", "--input"])
            .arg(&ids_path)
            .arg("--output")
            .arg(dir.join(format!("{name}.mts")))
            .args(["-m", "256", "-u", "1024"]))
        .status
        .success());
    }

    let out = run(bin()
        .args(["estimate", "--expr", "A & B"])
        .arg(dir.join("a.mts"))
        .arg(dir.join("b.mts")));
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["algorithm"], "intersection");
    assert!(doc["components"]["rho_hat"].is_f64());
    assert!(doc["components"]["rho_hat_clamped"].is_f64());
    // Unsampled streams with a roomy subsample: the estimate should be
    // close to the exact |A n B| = 200.
    let value = doc["value"].as_f64().unwrap();
    assert!((120.0..=280.0).contains(&value), "intersection estimate {value}");

    let out = run(bin()
        .args(["estimate", "--expr", "(A & B) - C"])
        .arg(dir.join("a.mts"))
        .arg(dir.join("b.mts"))
        .arg(dir.join("c.mts")));
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["algorithm"], "expression");
    // Exact |(A n B) \ C| = |{200..300}| = 100.
    let value = doc["value"].as_f64().unwrap();
    assert!((40.0..=180.0).contains(&value), "expression estimate {value}");
}

#[test]
fn arity_mismatch_is_a_data_error() {
    let dir = scratch("arity");
    let ids_path = dir.join("ids.txt");
    write_ids(&ids_path, &fixture_ids());
    assert!(run(bin()
        .args(["sketch-build", "--input"])
        .arg(&ids_path)
        .arg("--output")
        .arg(dir.join("a.mts")))
    .status
    .success());
    let out = run(bin()
        .args(["estimate", "--expr", "A & B"])
        .arg(dir.join("a.mts")));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_smoke_run_writes_csv_and_logs() {
    let dir = scratch("experiment");
    let spec_path = dir.join("spec.cfg");
    fs::write(
        &spec_path,
        "scenario = two_stream\na = 400\nalpha_list = 0.5\ndist = uniform\nfreq_lo = 4\nfreq_hi = 12\nP = 0.5\nm = 64\nu = 128\nruns = 2\nseed = 3\nalgorithms = intersection\n",
    )
    .unwrap();
    let csv_path = dir.join("out.csv");
    let log_path = dir.join("runs.jsonl");
    let out = run(bin()
        .arg("experiment")
        .arg(&spec_path)
        .arg("--output")
        .arg(&csv_path)
        .arg("--log-runs")
        .arg(&log_path)
        .args(["--threads", "2"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("algorithm,expr,alpha"));
    let row = lines.next().unwrap();
    assert!(row.starts_with("intersection,A & B,0.5,2,200,"));

    let log = fs::read_to_string(&log_path).unwrap();
    let entries: Vec<serde_json::Value> = log
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(entries.len(), 2);
    assert!(entries[0]["estimate"].is_f64());
}

#[test]
fn bad_spec_reports_line_number() {
    let dir = scratch("badspec");
    let spec_path = dir.join("spec.cfg");
    fs::write(&spec_path, "scenario = two_stream\nalpha_list = 0.5\nruns = nope\nalgorithms = union\n").unwrap();
    let out = run(bin().arg("experiment").arg(&spec_path));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "stderr: {err}");
}

#[test]
fn corrupt_sketch_file_is_a_data_error() {
    let dir = scratch("corrupt");
    fs::write(dir.join("bad.mts"), b"MTS1 not really").unwrap();
    let out = run(bin()
        .args(["estimate", "--expr", "A"])
        .arg(dir.join("bad.mts")));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn export_workload_writes_streams() {
    let dir = scratch("export");
    let spec_path = dir.join("spec.cfg");
    fs::write(
        &spec_path,
        "scenario = two_stream\na = 50\nalpha_list = 0.5\ndist = uniform\nfreq_lo = 2\nfreq_hi = 4\nP = 0.5\nm = 16\nu = 8\nruns = 2\nseed = 11\nalgorithms = union\n",
    )
    .unwrap();
    let out_dir = dir.join("streams");
    let out = run(bin()
        .arg("export-workload")
        .arg(&spec_path)
        .arg("--out-dir")
        .arg(&out_dir)
        .arg("--sampled"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["stream_0.txt", "stream_1.txt", "sampled_0.txt", "sampled_1.txt"] {
        let text = fs::read_to_string(out_dir.join(name)).unwrap();
        assert!(!text.is_empty());
        for line in text.lines() {
            line.parse::<u64>().unwrap();
        }
    }
}

#[test]
fn small_range_correction_flag_rescales() {
    let dir = scratch("small-range");
    let ids_path = dir.join("ids.txt");
    // 30 distinct elements twice each: far below 2.5 m for m = 256, so the
    // linear-counting correction applies.
    let ids: Vec<u64> = (0..30u64).flat_map(|e| [e, e]).collect();
    write_ids(&ids_path, &ids);
    assert!(run(bin()
        .args(["sketch-build", "--input"])
        .arg(&ids_path)
        .arg("--output")
        .arg(dir.join("a.mts"))
        .args(["-m", "256", "-u", "64", "--value-seed", "5", "--bucket-seed", "6"]))
    .status
    .success());

    let raw = run(bin().args(["estimate", "--expr", "A"]).arg(dir.join("a.mts")));
    let corrected = run(bin()
        .args(["estimate", "--expr", "A", "--small-range-correction"])
        .arg(dir.join("a.mts")));
    assert!(raw.status.success() && corrected.status.success());
    let raw_doc: serde_json::Value = serde_json::from_slice(&raw.stdout).unwrap();
    let cor_doc: serde_json::Value = serde_json::from_slice(&corrected.stdout).unwrap();

    let config = SketchConfig::new(256, 64, SeedSet::new(5, 6)).unwrap();
    let mut sketch = MtsSketch::new(config).unwrap();
    sketch.insert_all(ids);
    let expect_raw = estimators::hll_estimate(sketch.registers());
    let expect_cor = estimators::hll_estimate_corrected(sketch.registers());
    assert_ne!(expect_raw, expect_cor);
    assert_eq!(raw_doc["components"]["n_s_hat"].as_f64().unwrap(), expect_raw);
    assert_eq!(
        cor_doc["components"]["small_range_corrected_union"]
            .as_f64()
            .unwrap(),
        expect_cor
    );
    // With every element repeated, the scale is 1 and the corrected value
    // is the corrected register read itself.
    assert_eq!(cor_doc["value"].as_f64().unwrap(), expect_cor);
    let v = cor_doc["value"].as_f64().unwrap();
    assert!((25.0..=35.0).contains(&v), "corrected estimate {v}");
}
