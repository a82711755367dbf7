use std::path::Path;

use vspair::cli::{run_with, EVAL_COLUMNS, EXIT_DATA, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, UQ_COLUMNS};
use vspair::io::read_csv;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("vspair").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn verify_theory_canonical_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let (code, out, _) = run(&["verify-theory", "--n", "200000", "--csv", p(&csv)]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.matches("PASS").count(), 3);
    let (h, rows) = read_csv(&csv).unwrap();
    assert_eq!(h[0], "y");
    assert_eq!(rows.len(), 3);
}

#[test]
fn underpowered_verification_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("theory.cfg");
    let ys: String = (0..12).map(|k| format!("y = {}\n", k as f64 * 0.25 - 1.5)).collect();
    std::fs::write(&cfg, format!("# canonical problem, small N\nn = 10000\nseed = 3\n{ys}")).unwrap();
    let (code, _, err) = run(&["verify-theory", "--config", p(&cfg)]);
    assert_eq!(code, EXIT_VERIFY, "{err}");
    assert!(err.contains("grid points failed"));
}

#[test]
fn usage_errors_exit_one() {
    let (code, _, err) = run(&["train", "--bogus"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("Usage"));
    let (code, _, _) = run(&[]);
    assert_eq!(code, EXIT_USAGE);
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("verify-theory"));
}

#[test]
fn missing_files_exit_two_with_path() {
    let (code, _, err) = run(&["train", "--config", "/no/such/run.cfg", "--data", "/tmp", "--out", "/tmp/x"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("/no/such/run.cfg"), "{err}");
    let (code, _, err) = run(&["verify-theory", "--config", "/no/such/theory.cfg"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("/no/such/theory.cfg"));
}

#[test]
fn bad_config_exits_two_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "lr = 0.001\nwarmup = 3\n").unwrap();
    let (code, _, err) = run(&["train", "--config", p(&cfg), "--data", p(dir.path()), "--out", "x"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn toy_pipeline_train_eval_uq_perturb() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (train, test) = (d.join("train"), d.join("test"));
    assert_eq!(run(&["gen-data", "--kind", "toy-digits", "--out", p(&train), "--size", "1000", "--seed", "1"]).0, 0);
    assert_eq!(run(&["gen-data", "--kind", "toy-digits", "--out", p(&test), "--size", "40", "--seed", "2"]).0, 0);
    let cfg = d.join("run.cfg");
    std::fs::write(&cfg, "latent_x = 128\n").unwrap();
    let ckpt = d.join("m.ckpt");
    let hist = d.join("h.csv");
    let (code, out, err) = run(&[
        "train", "--preset", "toy", "--config", p(&cfg), "--data", p(&train), "--variant", "vspair", "--out",
        p(&ckpt), "--history", p(&hist),
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.matches("epoch").count(), 30);
    assert_eq!(read_csv(&hist).unwrap().1.len(), 30);

    let csv = d.join("eval.csv");
    let (code, _, err) = run(&["eval", "--ckpt", p(&ckpt), "--data", p(&test), "--samples", "30", "--csv", p(&csv)]);
    assert_eq!(code, 0, "{err}");
    let (h, rows) = read_csv(&csv).unwrap();
    assert_eq!(h, EVAL_COLUMNS);
    for col in ["mse", "mse_n", "avg_nnz", "sparsity", "psnr"] {
        let k = h.iter().position(|c| c == col).unwrap();
        assert!(rows[0][k].parse::<f64>().unwrap().is_finite());
    }

    let report = d.join("uq.csv");
    let images = d.join("img");
    let (code, _, err) = run(&[
        "uq", "--ckpt", p(&ckpt), "--data", p(&test), "--samples", "10", "--limit", "5", "--report", p(&report),
        "--images", p(&images),
    ]);
    assert_eq!(code, 0, "{err}");
    let (h, rows) = read_csv(&report).unwrap();
    assert_eq!(h, UQ_COLUMNS);
    assert_eq!(rows.len(), 5);
    assert!(images.join("0004_variance.pgm").exists());

    let sweep = d.join("sweep");
    let (code, _, err) = run(&[
        "perturb", "--ckpt", p(&ckpt), "--data", p(&test), "--image-index", "2", "--dim", "5", "--mode", "std",
        "--out", p(&sweep),
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(read_csv(sweep.join("sweep.csv")).unwrap().1.len(), 9);
    assert!(sweep.join("scale_08.pgm").exists());

    let (code, _, err) = run(&["perturb", "--ckpt", p(&ckpt), "--data", p(&test), "--image-index", "99", "--dim", "0", "--out", p(&sweep)]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("out of range"));
}
