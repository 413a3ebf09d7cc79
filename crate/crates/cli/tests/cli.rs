//! End-to-end tests of the `dsc` binary: exit codes, file outputs, and
//! cross-process determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dsc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn dsc")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

// small full-shape model; low iteration count keeps each process short
const TINY: &str = "
[solver]
iterations = 12
dt_over_tau = 0.2

[training]
epochs = 1
learning_rate = 0.05
seed = 3

[layer:v1]
branch = vision
parents = external
features = 4
kernel = 16x16
stride = 16x16
lambda = 0.05
nonnegative = true

[layer:t1]
branch = text
parents = external
features = 4
kernel = 8x16
stride = 8x16
lambda = 0.05
nonnegative = true

[layer:p1]
branch = joint
parents = v1, t1
features = 6
kernel = 4x4, 2x8
stride = 4x4, 2x8
lambda = 0.02
nonnegative = true
";

#[test]
fn help_lists_every_verb() {
    let dir = tempfile::tempdir().unwrap();
    let out = dsc(&["--help"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    for verb in ["train", "infer", "analyze", "generate", "toy-gen", "faces-gen"] {
        assert!(text.contains(verb), "help is missing '{}':\n{}", verb, text);
    }
}

#[test]
fn training_twice_from_one_seed_is_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("toy.cfg"), TINY).unwrap();
    for name in ["a.dscckpt", "b.dscckpt"] {
        let out = dsc(
            &["train", "--config", "toy.cfg", "--toy-seed", "7", "--out", name],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(
        fs::read(dir.path().join("a.dscckpt")).unwrap(),
        fs::read(dir.path().join("b.dscckpt")).unwrap(),
        "two identically seeded runs wrote different checkpoints"
    );
    assert_eq!(
        fs::read(dir.path().join("a.metrics.csv")).unwrap(),
        fs::read(dir.path().join("b.metrics.csv")).unwrap()
    );
}

#[test]
fn usage_mistakes_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("toy.cfg"), TINY).unwrap();
    let out = dsc(
        &[
            "train", "--config", "toy.cfg", "--toy-seed", "0", "--out", "m.dscckpt",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));

    // nothing to infer
    let out = dsc(
        &[
            "infer", "--checkpoint", "m.dscckpt", "--toy-seed", "0", "--index", "0",
            "--no-image", "--no-text",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    // ambiguous sample selection
    let out = dsc(
        &[
            "infer", "--checkpoint", "m.dscckpt", "--toy-seed", "0", "--index", "0", "--probe",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    // absent checkpoint
    let out = dsc(
        &["infer", "--checkpoint", "nothere.dscckpt", "--toy-seed", "0", "--index", "0"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    // unknown flag is clap's problem, same exit code
    let out = dsc(&["train", "--frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    // generation must drop exactly one modality
    let out = dsc(
        &[
            "generate", "--checkpoint", "m.dscckpt", "--toy-seed", "0", "--index", "0",
            "--out", "gen",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn invalid_config_exits_two_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("broken.cfg"),
        TINY.replace("dt_over_tau = 0.2", "dt_over_tau = maybe"),
    )
    .unwrap();
    let out = dsc(
        &["train", "--config", "broken.cfg", "--toy-seed", "0", "--out", "m.dscckpt"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dt_over_tau"), "{}", stderr(&out));
}

#[test]
fn numeric_divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    // an absurd drive weight on a signed layer multiplies the membrane by
    // ~1e12 each step; 60 iterations is far past f64 overflow
    let unstable = TINY
        .replace("epochs = 1", "epochs = 0")
        .replace("iterations = 12", "iterations = 60")
        .replace("dt_over_tau = 0.2", "dt_over_tau = 1")
        .replace(
            "branch = vision\nparents = external\nfeatures = 4\nkernel = 16x16\nstride = 16x16\nlambda = 0.05\nnonnegative = true",
            "branch = vision\nparents = external\nparent_scales = 1000000000000\nfeatures = 4\nkernel = 16x16\nstride = 16x16\nlambda = 0.05",
        );
    assert!(unstable.contains("parent_scales"), "replacement must hit");
    fs::write(dir.path().join("unstable.cfg"), unstable).unwrap();
    let out = dsc(
        &["train", "--config", "unstable.cfg", "--toy-seed", "0", "--out", "m.dscckpt"],
        dir.path(),
    );
    assert!(out.status.success(), "zero-epoch train: {}", stderr(&out));

    let out = dsc(
        &["infer", "--checkpoint", "m.dscckpt", "--toy-seed", "0", "--index", "0"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("numeric divergence"), "{}", stderr(&out));
}

#[test]
fn corpus_cache_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("toy.cfg"), TINY).unwrap();

    let out = dsc(&["toy-gen", "--seed", "5", "--out", "toy.dsccorp"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("100 samples"), "{}", stdout(&out));

    let out = dsc(
        &[
            "train", "--config", "toy.cfg", "--corpus", "toy.dsccorp", "--out", "m.dscckpt",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("m.metrics.csv").exists());

    let out = dsc(
        &[
            "infer", "--checkpoint", "m.dscckpt", "--corpus", "toy.dsccorp", "--probe",
            "--centroids", "p1",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("layer p1:"), "{}", text);
    assert!(text.contains("nearest: "), "{}", text);

    let out = dsc(
        &["analyze", "--checkpoint", "m.dscckpt", "--corpus", "toy.dsccorp", "sparsity"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("layer p1: mean_sparsity"), "{}", stdout(&out));

    let out = dsc(
        &[
            "analyze", "--checkpoint", "m.dscckpt", "--corpus", "toy.dsccorp", "export",
            "--layer", "p1", "--out", "codes.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        fs::read_to_string(dir.path().join("codes.csv")).unwrap().lines().count(),
        101
    );

    let out = dsc(
        &[
            "generate", "--checkpoint", "m.dscckpt", "--corpus", "toy.dsccorp", "--index",
            "99", "--no-text", "--out", "gen",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("gen/generated_text.png").exists());
    assert!(dir.path().join("gen/reconstructed_image.png").exists());
}
