use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use degradekit::io::{load_image, save_png};
use degradekit::kernels::KernelPool;
use degradekit::noise::NoisePool;
use degradekit::seed::{rng_from_seed, sha256_hex};
use degradekit::Image;
use rand::Rng;
use rand_distr::Normal;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_degradekit"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn random_image(h: usize, w: usize, seed: u64) -> Image {
    let mut rng = rng_from_seed(seed);
    Image::from_fn(h, w, 3, |_, _, _| rng.random::<f32>()).unwrap()
}

fn noisy_flat(h: usize, w: usize, seed: u64) -> Image {
    let mut rng = rng_from_seed(seed);
    let n = Normal::new(0.0f32, 2.0 / 255.0).unwrap();
    Image::from_fn(h, w, 3, |_, _, _| 0.5 + rng.sample(n)).unwrap()
}

fn tree_hashes(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name().to_string_lossy().into_owned();
        out.insert(name, sha256_hex(&std::fs::read(entry.path()).unwrap()));
    }
    out
}

/// Kernel pool, noise pool and a small HQ corpus under `root`.
fn setup(root: &Path, images: usize) {
    std::fs::create_dir_all(root.join("hq/sub")).unwrap();
    std::fs::create_dir_all(root.join("src")).unwrap();
    for i in 0..images {
        let dir = if i % 3 == 2 { "hq/sub" } else { "hq" };
        save_png(&random_image(48 + 4 * i, 56, i as u64), root.join(format!("{dir}/img{i}.png"))).unwrap();
    }
    save_png(&noisy_flat(128, 128, 99), root.join("src/flat.png")).unwrap();
    assert_eq!(code(&run(&["build-kernels", "--out", "k.pool", "--seed", "3"], root)), 0);
    let out = run(&["harvest-noise", "--src", "src", "--out", "n.pool"], root);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(!NoisePool::load(root.join("n.pool")).unwrap().is_empty());
}

#[test]
fn degrade_is_reproducible_across_runs_and_job_counts() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    setup(root, 5);
    let base = ["degrade", "--hq", "hq", "--kernels", "k.pool", "--noise", "n.pool", "--seed", "7"];
    for (out, jobs) in [("o1", "1"), ("o2", "1"), ("o3", "4")] {
        let mut args = base.to_vec();
        args.extend(["--out", out, "--jobs", jobs]);
        let res = run(&args, root);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
    }
    let first = tree_hashes(&root.join("o1"));
    assert_eq!(first.len(), 5 * 4 * 2 + 1);
    assert_eq!(first, tree_hashes(&root.join("o2")));
    assert_eq!(first, tree_hashes(&root.join("o3")));
    assert!(first.contains_key("sub__img2_x0.5_lr.png"));

    let mut args = base.to_vec();
    args[8] = "8";
    args.extend(["--out", "o4"]);
    assert_eq!(code(&run(&args, root)), 0);
    assert_ne!(first["img0_x1_lr.png"], tree_hashes(&root.join("o4"))["img0_x1_lr.png"]);
}

#[test]
fn degrade_outputs_have_exact_lr_dimensions() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    setup(root, 2);
    let res = run(&["degrade", "--hq", "hq", "--kernels", "k.pool", "--noise", "n.pool", "--out", "o"], root);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(root.join("o/manifest.json")).unwrap()).unwrap();
    let pairs = manifest["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 8);
    for p in pairs {
        let hr = load_image(root.join("o").join(p["hr_file"].as_str().unwrap())).unwrap();
        let lr = load_image(root.join("o").join(p["lr_file"].as_str().unwrap())).unwrap();
        assert_eq!((lr.height() * 4, lr.width() * 4), (hr.height(), hr.width()));
    }
}

#[test]
fn config_file_is_applied_and_echoed() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    setup(root, 2);
    std::fs::write(
        root.join("cfg.json"),
        r#"{"degradation": {"scale": 2, "augment_scales": [1.0], "jpeg_probability": 0.0, "global_seed": 11}}"#,
    )
    .unwrap();
    let res = run(
        &["degrade", "--config", "cfg.json", "--hq", "hq", "--kernels", "k.pool", "--noise", "n.pool", "--out", "o"],
        root,
    );
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(root.join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["scale"], 2);
    assert_eq!(manifest["config"]["global_seed"], 11);
    assert_eq!(manifest["run_config"]["degradation"]["scale"], 2);
    assert_eq!(manifest["pairs"].as_array().unwrap().len(), 2);
    assert!(manifest["pairs"].as_array().unwrap().iter().all(|p| p["record"]["jpeg_applied"] == false));

    std::fs::write(root.join("bad.json"), r#"{"degradation": {"scale": 0}}"#).unwrap();
    let res = run(&["degrade", "--config", "bad.json", "--hq", "hq", "--kernels", "k.pool", "--noise", "n.pool", "--out", "o5"], root);
    assert_eq!(code(&res), 1);
    std::fs::write(root.join("typo.json"), r#"{"degradation": {"jpeg_qualty": 50}}"#).unwrap();
    let res = run(&["degrade", "--config", "typo.json", "--hq", "hq", "--kernels", "k.pool", "--noise", "n.pool", "--out", "o5"], root);
    assert_eq!(code(&res), 1);
    assert!(!root.join("o5").exists());
}

#[test]
fn evaluate_identical_directories() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    std::fs::create_dir_all(root.join("a")).unwrap();
    for i in 0..3 {
        save_png(&random_image(24, 30, i), root.join(format!("a/im{i}.png"))).unwrap();
    }
    let res = run(&["evaluate", "--sr", "a", "--gt", "a", "--out", "report.csv"], root);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let text = std::fs::read_to_string(root.join("report.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "image,psnr,ssim,ms_ssim,nlpd,lpips");
    assert_eq!(lines.len(), 5);
    for line in &lines[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], "inf");
        assert_eq!(cols[2].parse::<f64>().unwrap(), 1.0);
    }
    assert!(lines[4].starts_with("mean,inf,1,"));
}

#[test]
fn evaluate_with_nr_scores_adds_pi() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    std::fs::create_dir_all(root.join("sr")).unwrap();
    std::fs::create_dir_all(root.join("gt")).unwrap();
    for i in 0..2 {
        save_png(&random_image(32, 32, i), root.join(format!("sr/im{i}.png"))).unwrap();
        save_png(&random_image(32, 32, i + 10), root.join(format!("gt/im{i}.png"))).unwrap();
    }
    std::fs::write(root.join("nr.csv"), "image,niqe,nrqm\nim0.png,4.56,7.62\nim1,3.75,7.08\n").unwrap();
    let res = run(&["evaluate", "--sr", "sr", "--gt", "gt", "--out", "r.csv", "--nr-scores", "nr.csv"], root);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let text = std::fs::read_to_string(root.join("r.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().unwrap().clone();
    let pi = header.iter().position(|h| h == "pi").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert!((rows[0][pi].parse::<f64>().unwrap() - 3.47).abs() < 1e-9);
    assert!((rows[1][pi].parse::<f64>().unwrap() - 3.335).abs() < 1e-9);

    std::fs::write(root.join("nr2.csv"), "image,niqe,nrqm\nim0,4.56,7.62\n").unwrap();
    let res = run(&["evaluate", "--sr", "sr", "--gt", "gt", "--out", "r2.csv", "--nr-scores", "nr2.csv"], root);
    assert_eq!(code(&res), 1);
    assert!(!root.join("r2.csv").exists());
}

#[test]
fn evaluate_rejects_mismatched_sizes_without_output() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    std::fs::create_dir_all(root.join("sr")).unwrap();
    std::fs::create_dir_all(root.join("gt")).unwrap();
    save_png(&random_image(32, 32, 0), root.join("sr/x.png")).unwrap();
    save_png(&random_image(32, 36, 0), root.join("gt/x.png")).unwrap();
    let res = run(&["evaluate", "--sr", "sr", "--gt", "gt", "--out", "r.csv"], root);
    assert_eq!(code(&res), 1);
    assert!(!root.join("r.csv").exists());
    let leftovers: Vec<_> = std::fs::read_dir(root).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(leftovers.len(), 2, "{leftovers:?}");
}

#[test]
fn mor_aggregate_trivial_study() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    std::fs::write(root.join("r.csv"), "participant,image,method,rank\np1,img1,A,1\np1,img1,B,2\n").unwrap();
    let res = run(&["mor", "aggregate", "--ranks", "r.csv", "--out", "mor.json"], root);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.contains("MOR(A)=1.0\n"), "{stdout}");
    assert!(stdout.contains("MOR(B)=2.0\n"), "{stdout}");
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(root.join("mor.json")).unwrap()).unwrap();
    assert_eq!(json["record_count"], 1);
}

#[test]
fn mor_aggregate_rejects_ties_with_location() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    std::fs::write(
        root.join("r.csv"),
        "participant,image,method,rank\np1,img1,A,1\np1,img1,B,2\np2,img9,A,1\np2,img9,B,1\n",
    )
    .unwrap();
    let res = run(&["mor", "aggregate", "--ranks", "r.csv"], root);
    assert_eq!(code(&res), 1);
    let err = stderr(&res);
    assert!(err.contains("p2") && err.contains("img9"), "{err}");

    std::fs::write(root.join("short.csv"), "participant,image,method,rank\np1,img1,A,1\n").unwrap();
    let res = run(&["mor", "aggregate", "--ranks", "short.csv", "--methods", "A,B"], root);
    assert_eq!(code(&res), 1);
    assert!(stderr(&res).contains("p1"));
}

#[test]
fn mor_prepare_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    for m in ["m1", "m2", "m3"] {
        std::fs::create_dir_all(root.join(m)).unwrap();
        for i in 0..4 {
            save_png(&random_image(8, 8, i), root.join(format!("{m}/face{i}.png"))).unwrap();
        }
    }
    let args = |out: &'static str| {
        vec!["mor", "prepare", "--method", "one=m1", "--method", "two=m2", "--method", "three=m3", "--seed", "5", "--out", out]
    };
    assert_eq!(code(&run(&args("s1.json"), root)), 0);
    assert_eq!(code(&run(&args("s2.json"), root)), 0);
    let s1 = std::fs::read(root.join("s1.json")).unwrap();
    assert_eq!(s1, std::fs::read(root.join("s2.json")).unwrap());
    let study: serde_json::Value = serde_json::from_slice(&s1).unwrap();
    assert_eq!(study["items"].as_array().unwrap().len(), 4);
    assert_eq!(study["methods"][1]["code"], "B");

    std::fs::remove_file(root.join("m3/face2.png")).unwrap();
    let res = run(&args("s3.json"), root);
    assert_eq!(code(&res), 1);
    assert!(stderr(&res).contains("face2"));
    assert!(!root.join("s3.json").exists());
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    assert_eq!(code(&run(&["degrade", "--hq", "x", "--bogus"], root)), 1);
    assert_eq!(code(&run(&["degrade", "--hq", "x"], root)), 1);
    assert_eq!(code(&run(&[], root)), 1);
    assert_eq!(code(&run(&["evaluate", "--sr", "a", "--gt", "b", "--out", "r", "--jobs", "0"], root)), 1);
    assert_eq!(code(&run(&["--help"], root)), 0);
}

#[test]
fn io_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    assert_eq!(code(&run(&["evaluate", "--sr", "missing", "--gt", "missing", "--out", "r.csv"], root)), 2);
    assert_eq!(code(&run(&["mor", "aggregate", "--ranks", "missing.csv"], root)), 2);
    assert_eq!(
        code(&run(&["degrade", "--hq", ".", "--kernels", "missing.pool", "--noise", "n", "--out", "o"], root)),
        2
    );
}

#[test]
fn noise_is_required_unless_disabled() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    setup(root, 1);
    let res = run(&["degrade", "--hq", "hq", "--kernels", "k.pool", "--out", "o"], root);
    assert_eq!(code(&res), 1);
    std::fs::write(root.join("cfg.json"), r#"{"degradation": {"noise_enabled": false}}"#).unwrap();
    let res = run(&["degrade", "--config", "cfg.json", "--hq", "hq", "--kernels", "k.pool", "--out", "o"], root);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
}

#[test]
fn build_kernels_imports_external_files() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    std::fs::write(root.join("est.txt"), "# estimated\nKERN1 3\n0 0 0\n0 0.98 0\n0 0 0\n").unwrap();
    let res = run(&["build-kernels", "--no-synth", "--import", "est.txt", "--out", "k.pool"], root);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let pool = KernelPool::load(root.join("k.pool")).unwrap();
    assert_eq!(pool.len(), 1);
    assert!((pool.kernels()[0].sum() - 1.0).abs() < 1e-12);

    let res = run(&["build-kernels", "--import", "est.txt", "--out", "k2.pool"], root);
    assert_eq!(code(&res), 0);
    assert_eq!(KernelPool::load(root.join("k2.pool")).unwrap().len(), 65);

    std::fs::write(root.join("bad.txt"), "KERN1 3\n1 1 1\n1 1\n1 1 1\n").unwrap();
    let res = run(&["build-kernels", "--import", "bad.txt", "--out", "k3.pool"], root);
    assert_eq!(code(&res), 1);
    assert!(stderr(&res).contains("bad.txt:3"), "{}", stderr(&res));
    assert_eq!(code(&run(&["build-kernels", "--no-synth", "--out", "k4.pool"], root)), 1);
}

#[test]
fn harvest_on_constant_corpus_gives_empty_pool() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    std::fs::create_dir_all(root.join("src")).unwrap();
    save_png(&Image::filled(96, 96, 3, 0.5).unwrap(), root.join("src/c.png")).unwrap();
    let res = run(&["harvest-noise", "--src", "src", "--out", "n.pool"], root);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert!(NoisePool::load(root.join("n.pool")).unwrap().is_empty());
}

#[test]
fn corrupt_synthetic_writes_pairs() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    setup(root, 2);
    let res = run(&["corrupt-synthetic", "--hq", "hq", "--kernels", "k.pool", "--out", "syn", "--seed", "1"], root);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let gt = load_image(root.join("syn/img1_gt.png")).unwrap();
    let lr = load_image(root.join("syn/img1_lr.png")).unwrap();
    assert_eq!((lr.height() * 4, lr.width() * 4), (gt.height(), gt.width()));
    let res = run(&["corrupt-synthetic", "--hq", "hq", "--kernels", "k.pool", "--out", "syn2", "--seed", "1", "--jobs", "3"], root);
    assert_eq!(code(&res), 0);
    assert_eq!(tree_hashes(&root.join("syn")), tree_hashes(&root.join("syn2")));
}
