use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dfsmc(dir: &Path, args: &[&str]) -> Output {
    dfsmc_env(dir, args, &[])
}

fn dfsmc_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dfsmc"));
    cmd.current_dir(dir).args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("run dfsmc")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = dfsmc(dir, args);
    assert!(
        out.status.success(),
        "dfsmc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const CONFIG: &str = "input = 1x16x16\nepochs = 2\nfeatures = 8\nbatch_size = 8\nseed = 5\n";

fn dataset(dir: &Path) {
    fs::write(dir.join("run.cfg"), CONFIG).unwrap();
    ok(
        dir,
        &[
            "synth",
            "--out",
            "data",
            "--per-class",
            "5",
            "--size",
            "16",
            "--seed",
            "3",
        ],
    );
}

/// Run every stage into `work` and return the produced artifacts' bytes.
fn full_run(dir: &Path, work: &str, env: &[(&str, &str)]) -> Vec<(String, Vec<u8>)> {
    let w = |name: &str| format!("{work}/{name}");
    let steps: Vec<Vec<String>> = vec![
        vec![
            "split".into(),
            "--data".into(),
            "data".into(),
            "--out".into(),
            w("m.tsv"),
        ],
        vec![
            "augment".into(),
            "--manifest".into(),
            w("m.tsv"),
            "--out".into(),
            w("aug.tsv"),
        ],
        vec![
            "train".into(),
            "--arch".into(),
            "mini-resnet".into(),
            "--manifest".into(),
            w("aug.tsv"),
            "--out".into(),
            w("r.bin"),
        ],
        vec![
            "train".into(),
            "--arch".into(),
            "mini-densenet".into(),
            "--manifest".into(),
            w("aug.tsv"),
            "--out".into(),
            w("d.bin"),
        ],
        vec![
            "features".into(),
            "--weights".into(),
            w("r.bin"),
            "--manifest".into(),
            w("aug.tsv"),
            "--out".into(),
            w("r.csv"),
        ],
        vec![
            "features".into(),
            "--weights".into(),
            w("d.bin"),
            "--manifest".into(),
            w("aug.tsv"),
            "--out".into(),
            w("d.csv"),
        ],
        vec![
            "fuse-svm".into(),
            "--resnet-cache".into(),
            w("r.csv"),
            "--densenet-cache".into(),
            w("d.csv"),
            "--out".into(),
            w("svm.txt"),
        ],
        vec![
            "eval".into(),
            "--svm".into(),
            w("svm.txt"),
            "--resnet-weights".into(),
            w("r.bin"),
            "--densenet-weights".into(),
            w("d.bin"),
            "--manifest".into(),
            w("m.tsv"),
            "--out".into(),
            w("report"),
        ],
    ];
    for step in steps {
        let mut args: Vec<&str> = vec!["--config", "run.cfg"];
        args.extend(step.iter().map(String::as_str));
        let out = dfsmc_env(dir, &args, env);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    [
        "m.tsv",
        "aug.tsv",
        "r.bin",
        "d.bin",
        "r.csv",
        "d.csv",
        "svm.txt",
        "report/summary.txt",
        "report/confusion.csv",
        "report/per_class.csv",
    ]
    .iter()
    .map(|name| {
        (
            name.to_string(),
            fs::read(dir.join(work).join(name)).unwrap(),
        )
    })
    .collect()
}

#[test]
fn split_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path());
    for out in ["a.tsv", "b.tsv"] {
        ok(
            dir.path(),
            &[
                "split", "--data", "data", "--ratio", "0.6", "--seed", "7", "--out", out,
            ],
        );
    }
    assert_eq!(
        fs::read(dir.path().join("a.tsv")).unwrap(),
        fs::read(dir.path().join("b.tsv")).unwrap()
    );
    ok(
        dir.path(),
        &[
            "split", "--data", "data", "--ratio", "0.6", "--seed", "8", "--out", "c.tsv",
        ],
    );
    assert_ne!(
        fs::read(dir.path().join("a.tsv")).unwrap(),
        fs::read(dir.path().join("c.tsv")).unwrap()
    );
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dfsmc(dir.path(), &["split", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "{stderr}");
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_inputs_exit_with_a_one_line_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("junk.bin"), b"not weights").unwrap();
    fs::write(
        dir.path().join("m.tsv"),
        b"# dfsmc-manifest v1 seed=1 ratio=0.5\n",
    )
    .unwrap();
    let out = dfsmc(
        dir.path(),
        &[
            "features",
            "--weights",
            "junk.bin",
            "--manifest",
            "m.tsv",
            "--out",
            "f.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.contains("not a dfsmc weight file"), "{stderr}");
    assert!(!dir.path().join("f.csv").exists());
}

#[test]
fn usage_mistakes_after_parsing_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dfsmc_env(dir.path(), &["show-config"], &[("DFSMC_THREADS", "many")]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(dir.path().join("bad.cfg"), "ratio = 7\n").unwrap();
    let out = dfsmc(dir.path(), &["--config", "bad.cfg", "show-config"]);
    assert_eq!(out.status.code(), Some(2));
    let out = dfsmc(
        dir.path(),
        &[
            "train",
            "--arch",
            "mini-resnet",
            "--scheme",
            "finetune",
            "--manifest",
            "m",
            "--out",
            "w",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "seed = 9\ncost = 2.5\n").unwrap();
    let shown = ok(dir.path(), &["--config", "run.cfg", "show-config"]);
    assert!(
        shown.contains("seed = 9\n") && shown.contains("cost = 2.5\n"),
        "{shown}"
    );
    fs::write(dir.path().join("round.cfg"), &shown).unwrap();
    assert_eq!(
        ok(dir.path(), &["--config", "round.cfg", "show-config"]),
        shown
    );
}

#[test]
fn full_pipeline_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path());
    let a = full_run(dir.path(), "one", &[("DFSMC_THREADS", "1")]);
    let b = full_run(dir.path(), "three", &[("DFSMC_THREADS", "3")]);
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        if name.ends_with(".tsv") {
            continue;
        }
        assert!(x == y, "{name} differs between runs");
    }
    let summary = String::from_utf8(a[7].1.clone()).unwrap();
    assert!(summary.contains("test_samples=10"), "{summary}");
    let confusion = String::from_utf8(a[8].1.clone()).unwrap();
    assert!(
        confusion.starts_with("true\\predicted,checker,diagonal"),
        "{confusion}"
    );
}

#[test]
fn augment_leaves_its_input_manifest_alone() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path());
    ok(dir.path(), &["split", "--data", "data", "--out", "m.tsv"]);
    let before = fs::read(dir.path().join("m.tsv")).unwrap();
    ok(
        dir.path(),
        &["augment", "--manifest", "m.tsv", "--copies", "2"],
    );
    assert_eq!(fs::read(dir.path().join("m.tsv")).unwrap(), before);
    let augmented = fs::read_to_string(dir.path().join("m.aug.tsv")).unwrap();
    assert_eq!(augmented.matches(".aug1.pgm").count(), 15);
    let out = dfsmc(
        dir.path(),
        &["augment", "--manifest", "m.tsv", "--out", "m.tsv"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn convert_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path().join("bin/fam")).unwrap();
    fs::write(dir.path().join("bin/fam/a.exe"), vec![7u8; 3000]).unwrap();
    ok(dir.path(), &["convert", "--in", "bin", "--out", "img"]);
    assert!(dir.path().join("img/fam/a.exe.pgm").exists());

    dataset(dir.path());
    full_run(dir.path(), "w", &[]);
    let out = ok(
        dir.path(),
        &[
            "predict",
            "--svm",
            "w/svm.txt",
            "--resnet-weights",
            "w/r.bin",
            "--densenet-weights",
            "w/d.bin",
            "--image",
            "img/fam/a.exe.pgm",
            "--manifest",
            "w/m.tsv",
        ],
    );
    assert!(out.starts_with("class="), "{out}");
    assert_eq!(out.lines().nth(1).unwrap().split(',').count(), 5);

    let swapped = dfsmc(
        dir.path(),
        &[
            "predict",
            "--svm",
            "w/svm.txt",
            "--resnet-weights",
            "w/d.bin",
            "--densenet-weights",
            "w/r.bin",
            "--image",
            "img/fam/a.exe.pgm",
        ],
    );
    assert_eq!(swapped.status.code(), Some(3));
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["gradcheck"]);
    assert_eq!(
        out.lines().filter(|l| l.starts_with("PASS")).count(),
        11,
        "{out}"
    );
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path());
    let out = ok(
        dir.path(),
        &[
            "--config", "run.cfg", "run", "--data", "data", "--out", "all",
        ],
    );
    assert_eq!(
        out.lines().filter(|l| l.contains("accuracy=")).count(),
        3,
        "{out}"
    );
    for name in [
        "run.cfg",
        "manifest.tsv",
        "mini-resnet.bin",
        "mini-densenet.bin",
        "svm.txt",
        "features/resnet.csv",
        "report/compare.csv",
    ] {
        assert!(dir.path().join("all").join(name).exists(), "{name}");
    }
    let compare = fs::read_to_string(dir.path().join("all/report/compare.csv")).unwrap();
    assert_eq!(compare.lines().filter(|l| l.contains(",macro,")).count(), 3);
}
