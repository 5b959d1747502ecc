use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_structcov"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().expect("exit code")
}

/// Per-record rows of an eval CSV as (nll, kl, frob) cells.
fn eval_rows(path: PathBuf) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("record_id,nll,kl_to_gt,frob_to_gt"));
    lines
        .filter(|l| !l.starts_with("mean,"))
        .map(|l| l.split(',').skip(1).map(str::to_owned).collect())
        .collect()
}

fn mean_kl(path: PathBuf) -> f64 {
    let rows = eval_rows(path);
    rows.iter().map(|r| r[1].parse::<f64>().unwrap()).sum::<f64>() / rows.len() as f64
}

fn no_temp_files(dir: &Path) -> bool {
    fs::read_dir(dir)
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp"))
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["gen", "--dataset", "splines", "--count", "10", "--seed", "7", "--out", "a.ssyn"]);
    ok(d.path(), &["gen", "--dataset", "splines", "--count", "10", "--seed", "7", "--out", "b.ssyn"]);
    let a = fs::read(d.path().join("a.ssyn")).unwrap();
    assert_eq!(a, fs::read(d.path().join("b.ssyn")).unwrap());
    assert_eq!(&a[..4], b"SSYN");
    assert_eq!(a.len(), 12 + 10 * 8 * (50 + 50 + 50 * 50));

    ok(d.path(), &["gen", "--dataset", "splines", "--count", "10", "--seed", "8", "--out", "c.ssyn"]);
    assert_ne!(a, fs::read(d.path().join("c.ssyn")).unwrap());
    assert!(no_temp_files(d.path()));
}

#[test]
fn disjoint_ranges_concatenate_to_the_full_run() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["gen", "--dataset", "ellipses", "--count", "4", "--seed", "2", "--out", "all.ssyn"]);
    ok(d.path(), &["gen", "--dataset", "ellipses", "--count", "2", "--seed", "2", "--start", "2", "--out", "tail.ssyn"]);
    let all = fs::read(d.path().join("all.ssyn")).unwrap();
    let tail = fs::read(d.path().join("tail.ssyn")).unwrap();
    let rec = 8 * (256 + 256 + 256 * 256);
    assert_eq!(&all[12 + 2 * rec..], &tail[12..]);
}

#[test]
fn ground_truth_eval_has_zero_distances() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["gen", "--dataset", "splines", "--count", "12", "--seed", "1", "--out", "t.ssyn"]);
    ok(d.path(), &["eval", "--data", "t.ssyn", "--ground-truth", "--out", "gt.csv"]);
    let rows = eval_rows(d.path().join("gt.csv"));
    assert_eq!(rows.len(), 12);
    for r in &rows {
        assert_eq!(r[1].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[2].parse::<f64>().unwrap(), 0.0);
    }
    let text = fs::read_to_string(d.path().join("gt.csv")).unwrap();
    assert!(text.lines().last().unwrap().ends_with(",0.00 ± 0.00,0.00 ± 0.00"));
}

#[test]
fn full_nll_adds_the_gaussian_constant() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["gen", "--dataset", "splines", "--count", "3", "--seed", "1", "--out", "t.ssyn"]);
    ok(d.path(), &["eval", "--data", "t.ssyn", "--ground-truth", "--out", "a.csv"]);
    ok(d.path(), &["eval", "--data", "t.ssyn", "--ground-truth", "--full-nll", "--out", "b.csv"]);
    let c = 50.0 * (2.0 * std::f64::consts::PI).ln();
    for (a, b) in eval_rows(d.path().join("a.csv")).iter().zip(eval_rows(d.path().join("b.csv"))) {
        let (a, b): (f64, f64) = (a[0].parse().unwrap(), b[0].parse().unwrap());
        assert!((b - a - c).abs() <= 1e-9 * b.abs().max(1.0));
    }
}

#[test]
fn structured_head_beats_diagonal_on_splines() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    let gen = |start: &str, count: &str, out: &str| {
        ok(p, &["gen", "--dataset", "splines", "--seed", "3", "--jitter", "0.1", "--start", start, "--count", count, "--out", out]);
    };
    gen("0", "800", "train.ssyn");
    gen("800", "100", "test.ssyn");
    let train = ["fit", "--data", "train.ssyn", "--epochs", "20", "--seed", "4"];
    ok(p, &[&train[..], &["--head", "diagonal", "--model", "diag.ckpt", "--out", "diag_fit.csv"]].concat());
    ok(
        p,
        &[&train[..], &["--dataset", "splines", "--head", "sparse-chol", "--patch", "5", "--model", "chol.ckpt", "--out", "chol_fit.csv"]].concat(),
    );
    ok(p, &["eval", "--data", "test.ssyn", "--model", "diag.ckpt", "--out", "diagonal.csv"]);
    ok(p, &["eval", "--data", "test.ssyn", "--model", "chol.ckpt", "--out", "sparse_chol.csv"]);
    let (kd, ks) = (mean_kl(p.join("diagonal.csv")), mean_kl(p.join("sparse_chol.csv")));
    assert!(ks < kd, "sparse {ks} vs diagonal {kd}");

    let fit_csv = fs::read_to_string(p.join("chol_fit.csv")).unwrap();
    let lines: Vec<&str> = fit_csv.lines().collect();
    assert_eq!(lines.len(), 22);
    assert!(lines[21].starts_with("final,"));

    ok(p, &["report", "--inputs", "diagonal.csv", "sparse_chol.csv", "--out", "table.csv"]);
    let table = fs::read_to_string(p.join("table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "model,count,nll,kl_to_gt,frob_to_gt");
    assert!(rows[1].starts_with("diagonal,100,") && rows[2].starts_with("sparse_chol,100,"));
    assert!(rows[1].contains(" ± "));
    assert!(no_temp_files(p));
}

#[test]
fn sample_writes_triptychs() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    ok(p, &["gen", "--dataset", "ellipses", "--count", "40", "--seed", "9", "--out", "e.ssyn"]);
    ok(p, &["fit", "--data", "e.ssyn", "--dataset", "ellipses", "--head", "sparse-chol", "--patch", "3", "--hidden", "8", "--epochs", "1", "--model", "m.ckpt", "--out", "f.csv"]);
    ok(p, &["sample", "--data", "e.ssyn", "--model", "m.ckpt", "--dataset", "ellipses", "--count", "3", "--seed", "1", "--out", "gallery"]);
    for i in 0..3 {
        let img = fs::read(p.join(format!("gallery/sample_{i:04}.pgm"))).unwrap();
        let header = b"P5\n48 16\n255\n";
        assert_eq!(&img[..header.len()], header);
        assert_eq!(img.len(), header.len() + 48 * 16);
    }
    assert!(!p.join("gallery/sample_0003.pgm").exists());
    let first = fs::read(p.join("gallery/sample_0000.pgm")).unwrap();
    ok(p, &["sample", "--data", "e.ssyn", "--model", "m.ckpt", "--dataset", "ellipses", "--count", "1", "--seed", "1", "--out", "again"]);
    assert_eq!(first, fs::read(p.join("again/sample_0000.pgm")).unwrap());
}

#[test]
fn denoise_writes_csv_and_triplets() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    ok(p, &["gen", "--dataset", "ellipses", "--count", "60", "--seed", "5", "--out", "train.ssyn"]);
    ok(p, &["gen", "--dataset", "ellipses", "--count", "4", "--seed", "5", "--start", "60", "--out", "test.ssyn"]);
    ok(
        p,
        &["denoise", "--train", "train.ssyn", "--data", "test.ssyn", "--recon-rank", "8", "--patch", "3", "--hidden", "8", "--epochs", "1", "--images", "2", "--out", "dn"],
    );
    let csv = fs::read_to_string(p.join("dn/denoise.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "record_id,mse_noisy,mse_denoised");
    assert_eq!(lines.len(), 6);
    assert!(lines[5].starts_with("mean,"));
    assert!(p.join("dn/denoise_0001.pgm").exists());
    assert!(!p.join("dn/denoise_0002.pgm").exists());
    let img = fs::read(p.join("dn/denoise_0000.pgm")).unwrap();
    assert!(img.starts_with(b"P5\n48 16\n255\n"));
}

#[test]
fn usage_errors_exit_with_two() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    ok(p, &["gen", "--dataset", "splines", "--count", "5", "--out", "t.ssyn"]);
    let fit = |extra: &[&str]| code(p, &[&["fit", "--data", "t.ssyn", "--model", "m", "--out", "o"], extra].concat());
    assert_eq!(fit(&["--head", "diagonal", "--patch", "3"]), 2);
    assert_eq!(fit(&["--head", "sparse-chol", "--dataset", "splines", "--rank", "2", "--patch", "3"]), 2);
    assert_eq!(fit(&["--head", "lowrank", "--patch", "3", "--rank", "2"]), 2);
    assert_eq!(fit(&["--head", "lowrank"]), 2);
    assert_eq!(fit(&["--head", "sparse-chol", "--dataset", "splines", "--patch", "4"]), 2);
    assert_eq!(fit(&["--head", "diagonal", "--lr", "-1"]), 2);
    assert_eq!(fit(&["--head", "nonsense"]), 2);
    assert_eq!(code(p, &["gen", "--dataset", "splines", "--count", "0", "--out", "x"]), 2);
    assert_eq!(code(p, &["eval", "--data", "t.ssyn", "--out", "x.csv"]), 2);
    assert_eq!(code(p, &["frobnicate"]), 2);
    assert!(!p.join("m").exists());
}

#[test]
fn runtime_errors_exit_with_one() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    assert_eq!(code(p, &["eval", "--data", "missing.ssyn", "--ground-truth", "--out", "x.csv"]), 1);
    fs::write(p.join("junk.ssyn"), b"not a dataset").unwrap();
    assert_eq!(code(p, &["eval", "--data", "junk.ssyn", "--ground-truth", "--out", "x.csv"]), 1);
    assert_eq!(code(p, &["report", "--inputs", "junk.ssyn", "--out", "t.csv"]), 1);
    assert!(!p.join("x.csv").exists() && !p.join("t.csv").exists());
    assert!(no_temp_files(p));
}
