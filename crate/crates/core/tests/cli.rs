use std::path::Path;
use std::process::{Command, Output};

use dabea::basemodels::{save_labels, LabelSet};
use dabea::imageio::write_ppm;
use dabea::preprocess::ImageTensor;

fn dabea(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dabea"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = dabea(dir, args);
    assert!(
        out.status.success(),
        "dabea {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(dabea(d, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(dabea(d, &["pipeline", "--pool", "median"]).status.code(), Some(1));
    assert_eq!(dabea(d, &["pipeline", "--k", "0"]).status.code(), Some(1));
    assert_eq!(dabea(d, &["pool", "--slots", "missing.csv", "--out", "x.csv"]).status.code(), Some(2));

    std::fs::write(d.join("bad.csv"), "model_id,image_id,aug_index,p0,p1,p2,p3,p4,p5,p6\nm,a,0,0.5,0.5,0.5,0,0,0,0\n").unwrap();
    let out = dabea(d, &["bag", "--predictions", "bad.csv", "--n", "2", "--out", "b.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv:2"));

    // A bag whose probabilities overflow the fusion logits.
    ok(d, &["synth", "--make-labels", "14", "--labels-out", "l.csv", "--k", "2", "--out", "p.csv"]);
    ok(d, &["bag", "--predictions", "p.csv", "--n", "2", "--out", "bag.csv"]);
    std::fs::write(
        d.join("w.txt"),
        "format = dabea-fusion/1\nchannels = 1\nlayout = shared\nsource_model_ids = synth\nw = 1.7e308\nb = 1.7e308\n",
    )
    .unwrap();
    let out = dabea(d, &["fuse-predict", "--bag", "bag.csv", "--weights", "w.txt", "--out", "s.csv"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("run.conf"),
        "# small synthetic run\nsynth_images = 140\nsynth_test_images = 70\nk = 4\nn = 6\nepochs = 3\noutput_dir = out\n",
    )
    .unwrap();
    let stdout = ok(d, &["--threads", "1", "pipeline", "--config", "run.conf", "--model-set", "both", "--pool=max", "--seed", "3"]);
    assert!(stdout.contains("balanced_accuracy = "));
    let resolved = String::from_utf8(read(d.join("out/config.txt"))).unwrap();
    for line in ["model_set = both", "pool = max", "seed = 3", "k = 4", "threads = 1"] {
        assert!(resolved.contains(line), "{line} missing from\n{resolved}");
    }
    let weights = String::from_utf8(read(d.join("out/weights.txt"))).unwrap();
    assert!(weights.contains("channels = 4"));

    // The resolved config reproduces the run.
    ok(d, &["pipeline", "--config", "out/config.txt", "--output-dir", "again"]);
    assert_eq!(read(d.join("out/predictions.csv")), read(d.join("again/predictions.csv")));
}

#[test]
fn pipeline_matches_manual_subcommand_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let seed = "11";
    ok(d, &[
        "--threads", "1", "pipeline", "--seed", seed, "--synth-images", "210", "--synth-test-images", "90",
        "--k", "5", "--n", "12", "--epochs", "20", "--lr", "0.01", "--pool", "extreme", "--output-dir", "run",
    ]);

    // Labels: same generator, split and prefixes as the pipeline.
    ok(d, &["--seed", seed, "synth", "--make-labels", "210", "--prefix", "dev", "--labels-out", "dev.csv"]);
    ok(d, &["--seed", seed, "synth", "--make-labels", "90", "--prefix", "test", "--labels-out", "test.csv"]);
    ok(d, &["--seed", seed, "split", "--labels", "dev.csv", "--train-out", "train.csv", "--val-out", "val.csv"]);
    assert_eq!(read(d.join("val.csv")), read(d.join("run/val_labels.csv")));
    assert_eq!(read(d.join("test.csv")), read(d.join("run/eval_labels.csv")));

    // Channel m uses seed + m over validation-then-test rows.
    for (m, id) in ["iv4-norm", "irv2-norm"].iter().enumerate() {
        let s = (11 + m).to_string();
        ok(d, &[
            "--seed", &s, "synth", "--labels", "run/predict_labels.csv", "--k", "5", "--model-id", id,
            "--out", &format!("{id}.csv"),
        ]);
        assert_eq!(read(d.join(format!("{id}.csv"))), read(d.join(format!("run/channels/{id}.csv"))));
    }
    let preds = "iv4-norm.csv,irv2-norm.csv";
    ok(d, &["--seed", seed, "bag", "--predictions", preds, "--ids", "val.csv", "--n", "12", "--out", "bag_val.csv"]);
    ok(d, &["--seed", seed, "fuse-train", "--bag", "bag_val.csv", "--labels", "val.csv", "--epochs", "20", "--lr", "0.01", "--out", "w.txt"]);
    ok(d, &["--seed", seed, "bag", "--predictions", preds, "--ids", "test.csv", "--n", "12", "--out", "bag_test.csv"]);
    ok(d, &["fuse-predict", "--bag", "bag_test.csv", "--weights", "w.txt", "--out", "slots.csv"]);
    ok(d, &["pool", "--slots", "slots.csv", "--pool", "extreme", "--out", "pooled.csv"]);
    ok(d, &["evaluate", "--predictions", "pooled.csv", "--labels", "test.csv", "--out", "report.txt", "--json-out", "report.json"]);

    assert_eq!(read(d.join("w.txt")), read(d.join("run/weights.txt")));
    assert_eq!(read(d.join("pooled.csv")), read(d.join("run/predictions.csv")));
    assert_eq!(read(d.join("report.txt")), read(d.join("run/report.txt")));
    assert_eq!(read(d.join("report.json")), read(d.join("run/report.json")));
}

fn write_image_dataset(dir: &Path, n: usize) -> LabelSet {
    std::fs::create_dir_all(dir.join("images")).unwrap();
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let class = i % 7;
        // Class sets the dominant channel and the brightness level.
        let img = ImageTensor::from_fn(12, 12, |y, x, c| {
            let base = 30.0 + 25.0 * class as f64;
            let tint = if c == class % 3 { 60.0 } else { 0.0 };
            (base + tint + ((x * 7 + y * 3 + i) % 11) as f64).min(255.0)
        })
        .unwrap();
        let id = format!("im{i:03}");
        write_ppm(&dir.join("images").join(format!("{id}.ppm")), &img).unwrap();
        ids.push(id);
        labels.push(class);
    }
    LabelSet::new(ids, labels).unwrap()
}

#[test]
fn image_source_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let all = write_image_dataset(d, 98);
    let dev: Vec<usize> = (0..70).collect();
    let test: Vec<usize> = (70..98).collect();
    save_labels(&all.select(&dev).unwrap(), &d.join("dev.csv")).unwrap();
    save_labels(&all.select(&test).unwrap(), &d.join("test.csv")).unwrap();
    let args = [
        "--threads", "1", "pipeline", "--source", "images", "--images-dir", "images", "--labels", "dev.csv",
        "--test-labels", "test.csv", "--model-set", "both", "--k", "3", "--n", "5", "--epochs", "5",
        "--stub-epochs", "30", "--stub-grids", "4,3",
    ];
    let mut a = args.to_vec();
    a.extend(["--output-dir", "a"]);
    ok(d, &a);
    let mut b = args.to_vec();
    b.extend(["--output-dir", "b"]);
    ok(d, &b);
    for f in ["predictions.csv", "weights.txt", "report.txt", "models/iv4-unnorm.txt", "models/irv2-norm.txt"] {
        assert_eq!(read(d.join("a").join(f)), read(d.join("b").join(f)), "{f}");
    }
    let report = String::from_utf8(read(d.join("a/report.txt"))).unwrap();
    assert!(report.contains("samples = 28"));

    // Stage subcommands on the same images.
    ok(d, &["--seed", "0", "stub-train", "--images-dir", "images", "--labels", "a/train_labels.csv", "--k", "3", "--grid", "4", "--epochs", "30", "--out", "m.txt"]);
    assert_eq!(read(d.join("m.txt")), read(d.join("a/models/iv4-unnorm.txt")));
    ok(d, &["--seed", "0", "stub-predict", "--model", "m.txt", "--images-dir", "images", "--labels", "a/predict_labels.csv", "--k", "3", "--model-id", "iv4-unnorm", "--out", "p.csv"]);
    assert_eq!(read(d.join("p.csv")), read(d.join("a/channels/iv4-unnorm.csv")));

    ok(d, &["augment", "--image", "images/im000.ppm", "--out-dir", "aug", "--k", "4", "--format", "ppm"]);
    assert!(d.join("aug/im000_aug3.ppm").is_file());
    assert_eq!(dabea(d, &["augment", "--image", "images/im000.ppm", "--out-dir", "aug", "--normalize", "--format", "ppm"]).status.code(), Some(1));
    ok(d, &["augment", "--image", "images/im000.ppm", "--out-dir", "aug", "--normalize"]);
    assert!(d.join("aug/im000_aug9.dat").is_file());
}

#[test]
fn failed_run_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("labels.csv"), "image_id,label\n").unwrap();
    std::fs::write(d.join("p.csv"), "model_id,image_id,aug_index,p0,p1,p2,p3,p4,p5,p6\n").unwrap();
    let out = dabea(d, &[
        "pipeline", "--source", "predictions", "--labels", "labels.csv", "--predictions", "p.csv,p.csv",
        "--output-dir", "out",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stage `split`"), "{stderr}");
    let marker = String::from_utf8(read(d.join("out/INCOMPLETE"))).unwrap();
    assert!(marker.starts_with("failed: stage `split`"));
}
