use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_engage-mil"))
        .args(args)
        .env("ENGAGE_MIL_LOG", "quiet")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn five_run_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    let splits = root.join("splits");
    let config = root.join("tiny.json");
    std::fs::write(
        &config,
        r#"{"k": 4, "hidden_dim": 6, "h1": 12, "h2": 5, "epochs": 3, "batch_size": 8}"#,
    )
    .unwrap();

    let out = ok(&["synth", "--out", p(&data), "--subjects", "6", "--videos-per-subject", "6", "--k", "4", "--seed", "2"]);
    assert!(out.contains("synth config:"));
    assert!(out.lines().any(|l| l.starts_with("NE")));
    ok(&["split", "--data", p(&data), "--n", "3", "--seed", "4", "--out", p(&splits)]);
    for i in 1..=3 {
        assert!(splits.join(format!("split_{i}.json")).exists());
    }

    // gaze and pose on split 1, pose on split 2, bootstrapped gaze on split 3, head on split 1
    let runs = [
        ("gaze", "split_1", false),
        ("pose", "split_1", false),
        ("pose", "split_2", false),
        ("gaze", "split_3", true),
        ("head", "split_1", false),
    ];
    let mut preds = Vec::new();
    for (i, (modality, split, boot)) in runs.iter().enumerate() {
        let out_dir = root.join(format!("run{i}"));
        let split_path = splits.join(format!("{split}.json"));
        let mut args = vec![
            "train", "--data", p(&data), "--split", p(&split_path), "--modality", modality,
            "--config", p(&config), "--out", p(&out_dir),
        ];
        if *boot {
            args.push("--bootstrap");
        }
        let echoed = ok(&args);
        assert!(echoed.contains("\"hidden_dim\":6"), "{echoed}");
        assert!(echoed.contains(&format!("\"bootstrap\":{boot}")));
        let history = std::fs::read_to_string(out_dir.join("history.csv")).unwrap();
        assert_eq!(history.lines().count(), 4);
        assert!(history.starts_with("epoch,lr,train_loss,train_mse,val_mse\n"));

        let pred = root.join(format!("pred{i}.csv"));
        ok(&["predict", "--data", p(&data), "--checkpoint", p(&out_dir.join("checkpoint.json")), "--out", p(&pred)]);
        preds.push(pred);
    }

    let ens = root.join("ensemble.csv");
    let mut args = vec!["ensemble", "--inputs"];
    args.extend(preds.iter().map(|x| p(x)));
    args.extend(["--weights", "1,1,1,1,2", "--out", p(&ens)]);
    ok(&args);
    let text = std::fs::read_to_string(&ens).unwrap();
    assert!(text.starts_with("video_id,prediction\n"));
    assert_eq!(text.lines().count(), 37);

    let report = root.join("report.json");
    let table = ok(&["eval", "--data", p(&data), "--predictions", p(&ens), "--out", p(&report), "--quantize"]);
    assert!(table.contains("overall"));
    assert!(table.contains("normalized*"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["quantized"], true);
    assert_eq!(json["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum::<u64>(), 36);

    let val_report = root.join("val.json");
    ok(&["eval", "--data", p(&data), "--predictions", p(&ens), "--out", p(&val_report), "--split", p(&splits.join("split_1.json"))]);
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = run(&["eval", "--data", p(&missing), "--predictions", "x.csv", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"epochs": 0}"#).unwrap();
    let out = run(&[
        "train", "--data", p(dir.path()), "--split", "s.json", "--modality", "gaze", "--config", p(&bad), "--out", "o",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));

    let out = run(&["synth", "--out", p(dir.path()), "--subjects", "0"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["split", "--data", p(dir.path()), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_loss_oracle_suite_passes() {
    let out = ok(&["verify", "--suite", "loss-oracle"]);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 3);
}
