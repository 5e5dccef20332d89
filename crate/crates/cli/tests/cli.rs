use std::fs;
use std::path::{Path, PathBuf};

use mrdc_cli::{run_cli, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

fn run(args: &[&str]) -> i32 {
    let mut v = vec!["mrdc"];
    v.extend_from_slice(args);
    run_cli(&v)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec![
        "simulate", "--out", p(&out), "--size", "32", "--coils", "4", "--records", "3", "--seed", "7", "--calib", "8",
    ];
    args.extend_from_slice(extra);
    assert_eq!(run(&args), EXIT_OK);
    out
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&[]), EXIT_USAGE);
    assert_eq!(run(&["bogus"]), EXIT_USAGE);
    assert_eq!(run(&["simulate", "--out", "x", "--frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&["train", "--data", "x", "--variant", "unet", "--out", "m"]), EXIT_USAGE);
    assert_eq!(run(&["recon", "--data", "d", "--out", "o"]), EXIT_USAGE);
    assert_eq!(run(&["--help"]), EXIT_OK);
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["train", "--data", p(&dir.path().join("missing")), "--variant", "dccnn", "--out", "m"]), EXIT_RUNTIME);
    assert_eq!(run(&["simulate", "--out", p(&dir.path().join("d")), "--size", "16", "--af", "4", "--calib", "24"]), EXIT_RUNTIME);
}

#[test]
fn simulate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a", &[]);
    let b = simulate(dir.path(), "b", &[]);
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta.len(), 9);
    assert_eq!(ta, tb);
    let c = simulate(dir.path(), "c", &["--protocols", "sagittal_pd"]);
    assert_ne!(tree(&c), ta);
    assert_eq!(run(&["simulate", "--out", p(&a)]), EXIT_RUNTIME);
}

fn eval_json(data: &Path, recons: &[&Path], json: &Path) -> serde_json::Value {
    let mut args = vec!["eval", "--data", p(data), "--json", p(json)];
    for r in recons {
        args.extend(["--recon", p(r)]);
    }
    assert_eq!(run(&args), EXIT_OK);
    serde_json::from_slice(&fs::read(json).unwrap()).unwrap()
}

#[test]
fn reference_reconstruction_scores_inf() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d", &[]);
    let rec = dir.path().join("ref");
    assert_eq!(run(&["recon", "--baseline", "reference", "--data", p(&data), "--out", p(&rec)]), EXIT_OK);
    let json = eval_json(&data, &[&rec], &dir.path().join("e.json"));
    for row in json["rows"].as_array().unwrap() {
        let cell = &row["cells"][0];
        assert_eq!(cell["psnr"]["mean"], "inf");
        assert_eq!(cell["ssim"]["mean"], 1.0);
    }
    let pgm = fs::read(rec.join("rec00000.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n32 32\n65535\n"));
    assert_eq!(pgm.len(), 15 + 32 * 32 * 2);
    assert_eq!(fs::metadata(rec.join("rec00000.cplx")).unwrap().len(), 32 * 32 * 8);
}

#[test]
fn train_recon_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d", &[]);
    let model = dir.path().join("m.ckpt");
    let code = run(&[
        "train", "--data", p(&data), "--variant", "dccnn", "--nc", "2", "--nd", "2", "--filters", "4", "--epochs", "2",
        "--batch", "2", "--calib", "8", "--out", p(&model), "--quiet", "--precision", "f32",
        "--loss-log", p(&dir.path().join("loss.json")),
    ]);
    assert_eq!(code, EXIT_OK);
    let losses: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("loss.json")).unwrap()).unwrap();
    assert_eq!(losses["epoch_losses"].as_array().unwrap().len(), 2);

    let zf = dir.path().join("zf");
    let pocs = dir.path().join("pocs");
    let net = dir.path().join("net");
    let net6 = dir.path().join("net6");
    assert_eq!(run(&["recon", "--baseline", "zf", "--data", p(&data), "--out", p(&zf)]), EXIT_OK);
    assert_eq!(run(&["recon", "--baseline", "pocsense", "--data", p(&data), "--out", p(&pocs), "--iters", "5"]), EXIT_OK);
    assert_eq!(run(&["recon", "--model", p(&model), "--data", p(&data), "--out", p(&net)]), EXIT_OK);
    assert_eq!(run(&["recon", "--model", p(&model), "--data", p(&data), "--out", p(&net6), "--af", "3"]), EXIT_OK);

    let json_path = dir.path().join("e.json");
    let json = eval_json(&data, &[&zf, &pocs, &net, &net6], &json_path);
    assert_eq!(json["afs"], serde_json::json!([3.0, 4.0]));
    let models: Vec<&str> = json["rows"].as_array().unwrap().iter().map(|r| r["model"].as_str().unwrap()).collect();
    assert!(models.contains(&"Zero-filled") && models.contains(&"POCSENSE") && models.contains(&"DC-CNN"));

    // Same records, same reconstructions: identical scores on a second pass.
    let again = eval_json(&data, &[&zf, &pocs, &net, &net6], &dir.path().join("e2.json"));
    assert_eq!(json, again);

    // A DC-CNN built for 4 coils refuses 6-coil data.
    let other = dir.path().join("six");
    assert_eq!(
        run(&["simulate", "--out", p(&other), "--size", "32", "--coils", "6", "--records", "1", "--calib", "8"]),
        EXIT_OK
    );
    assert_eq!(run(&["recon", "--model", p(&model), "--data", p(&other), "--out", p(&dir.path().join("x"))]), EXIT_RUNTIME);
}

#[test]
fn eval_text_and_json_agree() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d", &[]);
    let zf = dir.path().join("zf");
    assert_eq!(run(&["recon", "--baseline", "zf", "--data", p(&data), "--out", p(&zf)]), EXIT_OK);
    let exe = env!("CARGO_BIN_EXE_mrdc");
    let out = std::process::Command::new(exe)
        .args(["eval", "--data", p(&data), "--recon", p(&zf)])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let (text, json) = stdout.split_once("\n\n").unwrap();
    let json: serde_json::Value = serde_json::from_str(json).unwrap();
    let rows = json["rows"].as_array().unwrap();
    let lines: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(lines.len(), rows.len());
    for (line, row) in lines.iter().zip(rows) {
        let c = &row["cells"][0];
        for m in ["psnr", "ssim"] {
            let (mean, std) = (c[m]["mean"].as_f64().unwrap(), c[m]["std"].as_f64().unwrap());
            let cell = format!("{mean:.2} ± {std:.2}");
            assert!(line.contains(&cell), "{line:?} lacks {cell}");
        }
    }
    assert!(text.contains("AF=4"));
}

#[test]
fn bad_thread_env_is_usage_error() {
    let exe = env!("CARGO_BIN_EXE_mrdc");
    let out = std::process::Command::new(exe)
        .env("MRDC_THREADS", "zero")
        .args(["eval", "--data", "x", "--recon", "y"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = std::process::Command::new(exe).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}
