use std::fs;
use std::path::Path;
use std::process::Command;

fn run(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_trajsample")).args(args).output().expect("spawn trajsample");
    assert!(
        out.status.success(),
        "trajsample {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let corpus = root.join("corpus");
    run(&["synth", "--out", s(&corpus), "--seed", "3", "--videos-per-class", "2", "--frames", "20"]);

    let labels: Vec<(String, String)> = fs::read_to_string(corpus.join("labels.csv"))
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(',').map(|(a, b)| (a.to_string(), b.to_string())))
        .skip(1)
        .collect();
    assert_eq!(labels.len(), 6);

    let first = corpus.join("videos").join(&labels[0].0);
    let flow = root.join("flow");
    let out = run(&["flow", "--frames", s(&first), "--out", s(&flow)]);
    assert!(out.starts_with("19 flow fields"), "{out}");
    assert!(flow.join("flow_000000.flo").exists());

    let boxes = root.join("boxes.csv");
    run(&["proposals", "--frames", s(&first), "--frame", "0", "--top-n", "50", "--out", s(&boxes)]);
    let sal = root.join("s.sal");
    run(&["saliency", "--boxes", s(&boxes), "--frame", "0", "--width", "128", "--height", "128", "--out", s(&sal)]);
    assert!(sal.exists());

    let mut feature_dirs = Vec::new();
    for (id, _) in &labels {
        let dense = root.join("feat").join(id);
        run(&["extract", "--frames", s(&corpus.join("videos").join(id)), "--out", s(&dense)]);
        let sampled = root.join("sampled").join(id);
        run(&[
            "sample",
            "--features",
            s(&dense),
            "--strategy",
            "random",
            "--rate",
            "0.8",
            "--seed",
            "1",
            "--out",
            s(&sampled),
        ]);
        feature_dirs.push(sampled);
    }

    let cb = root.join("cb.bin");
    let mut args = vec!["codebook", "--gmm-k", "4", "--sample-size", "2000", "--out", s(&cb), "--features"];
    args.extend(feature_dirs.iter().map(|d| s(d)));
    run(&args);

    let mut list = String::new();
    for ((id, label), dir) in labels.iter().zip(&feature_dirs) {
        let fv = root.join(format!("{id}.fv"));
        run(&["encode", "--codebook", s(&cb), "--features", s(dir), "--out", s(&fv)]);
        list.push_str(&format!("{id}.fv,{label}\n"));
    }
    let list_path = root.join("list.csv");
    fs::write(&list_path, list).unwrap();

    let model = root.join("model.svm");
    run(&["train", "--list", s(&list_path), "--out", s(&model)]);
    let report = run(&["eval", "--model", s(&model), "--list", s(&list_path)]);
    assert!(report.contains("accuracy"), "{report}");

    let fv0 = root.join(format!("{}.fv", labels[0].0));
    let predicted = run(&["predict", "--model", s(&model), "--fv", s(&fv0)]);
    assert_eq!(predicted.trim().rsplit(',').next().unwrap(), labels[0].1);
}

#[test]
fn rejects_missing_input() {
    let out = Command::new(env!("CARGO_BIN_EXE_trajsample"))
        .args(["extract", "--frames", "/nonexistent/frames", "--out", "/tmp/never"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
