//! Command-level tests: each command run in-process (and the binary for
//! environment handling), exercising files, exit codes, and round-trips.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime};

use duet_cli::{run, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL};
use duet_core::features::write_wav_pcm16;
use duet_core::formats::{load_loss_trace, load_model, save_feature, FeatureKind};
use duet_core::linalg::Matrix;

fn duet<const N: usize>(args: [&str; N]) -> i32 {
    run(std::iter::once("duet").chain(args))
}

fn duet_ok<const N: usize>(args: [&str; N]) {
    let code = duet(args);
    assert_eq!(code, 0, "duet {args:?} exited {code}");
}

fn p(path: &Path) -> String {
    path.display().to_string()
}

fn write_vector(path: &Path, values: &[f64]) {
    let m = Matrix::from_fn(values.len(), 1, |r, _| values[r]);
    save_feature(path, FeatureKind::Vector, &m).unwrap();
}

fn mtime(path: &Path) -> SystemTime {
    fs::metadata(path).unwrap().modified().unwrap()
}

/// A synthetic dataset directory; returns the manifest path.
fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = p(dir);
    let mut args = vec!["duet", "synth", "--out-dir", &out];
    args.extend(extra);
    assert_eq!(run(args.clone()), 0, "synth {args:?} failed");
    dir.join("manifest.tsv")
}

#[test]
fn extract_writes_skips_and_isolates_corrupt_items() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out_dir = dir.join("features");

    // Three one-second WAVs plus per-item text features.
    let mut manifest = String::from("id\taudio\ttext\tcategory\n");
    for (i, id) in ["s1", "s2", "s3"].iter().enumerate() {
        let samples: Vec<f64> = (0..22050)
            .map(|t| (0.1 * (i + 1) as f64 * t as f64).sin() * 0.3)
            .collect();
        write_wav_pcm16(&dir.join(format!("{id}.wav")), &samples, 22050).unwrap();
        write_vector(&dir.join(format!("{id}.feat")), &[i as f64, 1.0]);
        manifest.push_str(&format!("{id}\t{id}.wav\t{id}.feat\tmood\n"));
    }
    let manifest_path = dir.join("manifest.tsv");
    fs::write(&manifest_path, manifest).unwrap();

    duet_ok([
        "extract",
        "--manifest",
        &p(&manifest_path),
        "--out-dir",
        &p(&out_dir),
        "--variant",
        "mfcc",
    ]);
    let index = out_dir.join("index.tsv");
    assert!(index.exists());
    for id in ["s1", "s2", "s3"] {
        assert!(out_dir.join(format!("{id}.feat")).exists());
    }
    let stamps: Vec<SystemTime> = ["s1", "s2", "s3"]
        .iter()
        .map(|id| mtime(&out_dir.join(format!("{id}.feat"))))
        .chain([mtime(&index)])
        .collect();

    // Unchanged inputs: the re-run must not write anything.
    std::thread::sleep(Duration::from_millis(1100));
    duet_ok([
        "extract",
        "--manifest",
        &p(&manifest_path),
        "--out-dir",
        &p(&out_dir),
        "--variant",
        "mfcc",
    ]);
    let again: Vec<SystemTime> = ["s1", "s2", "s3"]
        .iter()
        .map(|id| mtime(&out_dir.join(format!("{id}.feat"))))
        .chain([mtime(&index)])
        .collect();
    assert_eq!(stamps, again, "an unchanged re-run rewrote files");

    // One corrupt source: the other two still extract, the run fails.
    fs::write(dir.join("s2.wav"), b"RIFF not really a wav").unwrap();
    let code = duet([
        "extract",
        "--manifest",
        &p(&manifest_path),
        "--out-dir",
        &p(&out_dir),
        "--variant",
        "mfcc",
    ]);
    assert_eq!(code, EXIT_DATA);
    let index_text = fs::read_to_string(&index).unwrap();
    assert!(index_text.contains("s1\t"));
    assert!(!index_text.contains("s2\t"), "failed item stayed in the index");
    assert!(index_text.contains("s3\t"));
}

#[test]
fn synth_is_seed_deterministic_and_stores_the_population_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        synth(
            dir,
            &[
                "--pairs", "12", "--latent-dim", "2", "--audio-dim", "6", "--text-dim", "8",
                "--categories", "4", "--seed", "9", "--split-ratio", "0.75",
            ],
        );
    }
    for rel in ["manifest.tsv", "ground_truth.tsv", "audio/item-00003.feat", "text/item-00007.feat"] {
        let (fa, fb) = (a.join(rel), b.join(rel));
        assert_eq!(
            fs::read(&fa).unwrap(),
            fs::read(&fb).unwrap(),
            "{rel} differs between identical seeds"
        );
    }

    let truth = fs::read_to_string(a.join("ground_truth.tsv")).unwrap();
    let correlations: Vec<f64> = truth
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("component"))
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(correlations.len(), 2);
    assert!(correlations.windows(2).all(|w| w[0] >= w[1]));
    assert!(correlations.iter().all(|&r| (0.0..=1.0).contains(&r)));

    let manifest = fs::read_to_string(a.join("manifest.tsv")).unwrap();
    assert_eq!(manifest.matches("\ttrain").count(), 9);
    assert_eq!(manifest.matches("\ttest").count(), 3);
}

#[test]
fn synth_train_eval_round_trip_with_a_component_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let manifest = synth(
        &dir.join("data"),
        &[
            "--pairs", "60", "--latent-dim", "2", "--audio-dim", "10", "--text-dim", "12",
            "--categories", "5", "--noise", "0.05", "--seed", "3",
        ],
    );
    let model = dir.join("linear.model");
    duet_ok([
        "train",
        "--manifest",
        &p(&manifest),
        "--variant",
        "linear-cca",
        "--shared-dim",
        "2",
        "--out",
        &p(&model),
    ]);
    assert!(model.exists());
    let loaded = load_model(&model).unwrap();
    assert_eq!(loaded.embed_dim(), 2);

    let report = dir.join("eval.report");
    let table = dir.join("eval.tsv");
    duet_ok([
        "eval",
        "--model",
        &p(&model),
        "--manifest",
        &p(&manifest),
        "--components",
        "1,2,5",
        "--top-n",
        "1,5",
        "--report",
        &p(&report),
        "--table",
        &p(&table),
    ]);
    let table_text = fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = table_text.lines().collect();
    assert_eq!(lines[0], "components\tmrr1\trecall@1\trecall@5");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("5\tn/a"), "k past the fit must be n/a: {}", lines[3]);
    let mrr_at_2: f64 = lines[2].split('\t').nth(1).unwrap().parse().unwrap();
    assert!(mrr_at_2 > 0.5, "near-noiseless linear data should retrieve well, got {mrr_at_2}");

    // Category level works off the manifest labels.
    duet_ok([
        "eval",
        "--model",
        &p(&model),
        "--manifest",
        &p(&manifest),
        "--components",
        "2",
        "--level",
        "category",
        "--report",
        &p(&report),
        "--table",
        &p(&table),
    ]);
}

#[test]
fn identical_train_invocations_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let manifest = synth(
        &dir.join("data"),
        &[
            "--pairs", "40", "--latent-dim", "2", "--audio-dim", "6", "--text-dim", "7",
            "--categories", "4", "--seed", "11",
        ],
    );
    let train = |tag: &str| {
        let model = dir.join(format!("{tag}.model"));
        duet_ok([
            "train",
            "--manifest",
            &p(&manifest),
            "--variant",
            "feature-dcca",
            "--epochs",
            "3",
            "--batch-size",
            "40",
            "--shared-dim",
            "2",
            "--seed",
            "4",
            "--out",
            &p(&model),
        ]);
        model
    };
    let one = train("one");
    let two = train("two");
    assert_eq!(fs::read(&one).unwrap(), fs::read(&two).unwrap());
    assert_eq!(
        fs::read(one.with_extension("trace.tsv")).unwrap(),
        fs::read(two.with_extension("trace.tsv")).unwrap()
    );
    let trace = load_loss_trace(&one.with_extension("trace.tsv")).unwrap();
    assert_eq!(trace.last().unwrap().epoch, 2);
}

#[test]
fn linear_cca_finishes_the_400_pair_set_quickly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let manifest = synth(&dir.join("data"), &["--seed", "1"]);
    let model = dir.join("m.model");
    let start = Instant::now();
    duet_ok([
        "train",
        "--manifest",
        &p(&manifest),
        "--variant",
        "linear-cca",
        "--shared-dim",
        "20",
        "--out",
        &p(&model),
    ]);
    let elapsed = start.elapsed();
    assert!(
        elapsed < Duration::from_secs(10),
        "linear-cca took {elapsed:?} on the 400-pair set"
    );
}

#[test]
fn symmetric_views_score_the_same_in_both_directions() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);

    let mut manifest = String::from("id\taudio\ttext\tcategory\n");
    for i in 0..30 {
        let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        write_vector(&dir.join(format!("i{i}.a.feat")), &v);
        write_vector(&dir.join(format!("i{i}.t.feat")), &v);
        manifest.push_str(&format!("i{i}\ti{i}.a.feat\ti{i}.t.feat\tm\n"));
    }
    let manifest_path = dir.join("manifest.tsv");
    fs::write(&manifest_path, manifest).unwrap();

    let model = dir.join("sym.model");
    duet_ok([
        "train", "--manifest", &p(&manifest_path), "--variant", "linear-cca",
        "--shared-dim", "3", "--out", &p(&model),
    ]);

    let mut mrrs = Vec::new();
    for direction in ["audio-to-text", "text-to-audio"] {
        let table = dir.join(format!("{direction}.tsv"));
        duet_ok([
            "eval", "--model", &p(&model), "--manifest", &p(&manifest_path),
            "--components", "3", "--direction", direction,
            "--report", &p(&dir.join(format!("{direction}.report"))), "--table", &p(&table),
        ]);
        let text = fs::read_to_string(&table).unwrap();
        let mrr: f64 = text.lines().nth(1).unwrap().split('\t').nth(1).unwrap().parse().unwrap();
        mrrs.push(mrr);
    }
    assert_eq!(mrrs[0], 1.0);
    assert_eq!(mrrs[1], 1.0);
}

#[test]
fn gradcheck_reports_and_the_corrupt_hook_fails() {
    assert_eq!(duet(["gradcheck", "--cca-sizes", "3:20"]), 0);
    assert_eq!(
        duet(["gradcheck", "--cca-sizes", "3:20", "--corrupt-hook"]),
        EXIT_NUMERICAL
    );
    assert_eq!(duet(["gradcheck", "--cca-sizes", "banana"]), EXIT_CONFIG);
}

#[test]
fn cross_validation_stamps_fractions_and_plot_data_flattens_them() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let manifest = synth(
        &dir.join("data"),
        &[
            "--pairs", "40", "--latent-dim", "2", "--audio-dim", "6", "--text-dim", "7",
            "--categories", "4", "--noise", "0.05", "--seed", "21",
        ],
    );
    let report = dir.join("cv.report");
    duet_ok([
        "eval",
        "--cross-validate",
        "--manifest",
        &p(&manifest),
        "--variant",
        "linear-cca",
        "--shared-dim",
        "2",
        "--components",
        "1,2",
        "--split-ratio",
        "0.5",
        "--runs",
        "2",
        "--seed",
        "6",
        "--report",
        &p(&report),
        "--table",
        &p(&dir.join("cv.tsv")),
    ]);
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.contains("train-fraction\t0.5"), "{text}");
    assert!(text.contains("seeds\t6,7"), "{text}");

    // Component axis: one (series, x, y) triple per metric and k.
    let triples = dir.join("triples.tsv");
    duet_ok(["plot-data", "--report", &p(&report), "--out", &p(&triples)]);
    let flat = fs::read_to_string(&triples).unwrap();
    assert_eq!(flat.lines().next().unwrap(), "series\tx\ty");
    assert!(flat.contains("audio-to-text/instance/mrr1\t1\t"));
    assert!(flat.contains("audio-to-text/instance/recall@5\t2\t"));

    // Training-fraction axis reads the stamped fraction.
    duet_ok([
        "plot-data", "--report", &p(&report), "--x-axis", "training-fraction",
        "--components", "2", "--out", &p(&triples),
    ]);
    let flat = fs::read_to_string(&triples).unwrap();
    assert!(flat.contains("audio-to-text/instance/mrr1\t0.5\t"), "{flat}");

    // A plain eval report carries no fraction and is refused on this axis.
    let model = dir.join("m.model");
    duet_ok([
        "train", "--manifest", &p(&manifest), "--variant", "linear-cca",
        "--shared-dim", "2", "--out", &p(&model),
    ]);
    let plain = dir.join("plain.report");
    duet_ok([
        "eval", "--model", &p(&model), "--manifest", &p(&manifest),
        "--components", "2", "--report", &p(&plain), "--table", &p(&dir.join("plain.tsv")),
    ]);
    assert_eq!(
        duet([
            "plot-data", "--report", &p(&plain), "--x-axis", "training-fraction",
            "--components", "2",
        ]),
        EXIT_CONFIG
    );
}

#[test]
fn failure_classes_come_back_as_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let manifest = synth(
        &dir.join("data"),
        &["--pairs", "12", "--latent-dim", "2", "--audio-dim", "6", "--text-dim", "7", "--categories", "3"],
    );

    // Config class: bad variant name, bad config file key, bad flag value.
    assert_eq!(
        duet(["train", "--manifest", &p(&manifest), "--variant", "deep-cca"]),
        EXIT_CONFIG
    );
    let bad_cfg = dir.join("bad.toml");
    fs::write(&bad_cfg, "[train]\nepoks = 3\n").unwrap();
    assert_eq!(
        duet(["train", "--manifest", &p(&manifest), "--config", &p(&bad_cfg)]),
        EXIT_CONFIG
    );

    // Data class: missing manifest, unreadable model.
    assert_eq!(
        duet(["train", "--manifest", &p(&dir.join("nope.tsv"))]),
        EXIT_DATA
    );
    let not_model = dir.join("not.model");
    fs::write(&not_model, b"junk").unwrap();
    assert_eq!(
        duet(["eval", "--model", &p(&not_model), "--manifest", &p(&manifest)]),
        EXIT_DATA
    );
}

#[test]
fn the_config_env_var_supplies_defaults_for_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let manifest = synth(
        &dir.join("data"),
        &["--pairs", "30", "--latent-dim", "2", "--audio-dim", "6", "--text-dim", "7", "--categories", "3"],
    );
    let cfg = dir.join("run.toml");
    fs::write(
        &cfg,
        "[train]\nvariant = \"feature-dcca\"\nepochs = 2\nbatch_size = 30\nshared_dim = 2\n",
    )
    .unwrap();
    let model = dir.join("env.model");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_duet"))
        .args(["train", "--manifest", &p(&manifest), "--out", &p(&model)])
        .env("DUET_CONFIG", &cfg)
        .status()
        .unwrap();
    assert!(status.success());
    let trace = load_loss_trace(&model.with_extension("trace.tsv")).unwrap();
    assert_eq!(trace.last().unwrap().epoch, 1, "config epochs=2 was not picked up");

    // An explicit flag still beats the configured value.
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_duet"))
        .args(["train", "--manifest", &p(&manifest), "--out", &p(&model), "--epochs", "1"])
        .env("DUET_CONFIG", &cfg)
        .status()
        .unwrap();
    assert!(status.success());
    let trace = load_loss_trace(&model.with_extension("trace.tsv")).unwrap();
    assert_eq!(trace.last().unwrap().epoch, 0);
}
