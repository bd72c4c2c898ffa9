use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_molprompt"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

#[test]
fn parse_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["parse", "c1ccccc1O", "CC(=O)N"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "input,atoms,bonds,smiles,error");
    assert!(lines[1].starts_with("c1ccccc1O,7,7,"));
    assert!(lines[2].starts_with("CC(=O)N,4,3,"));
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["parse", "C1CC", "CCO"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("1 of 2"));

    let missing = run(dir.path(), &["featurize", "--input", "does-not-exist.csv"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn featurize_and_split_custom_columns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("in.csv");
    let rows: String = [
        "CCO",
        "c1ccccc1C",
        "c1ccncc1O",
        "C1CCCCC1N",
        "CC(=O)O",
        "c1ccc2ccccc2c1",
        "OCC(O)CO",
        "c1ccsc1",
    ]
    .iter()
    .enumerate()
    .map(|(i, s)| format!("{s},{}\n", i as f64 * 0.5))
    .collect();
    fs::write(&csv, format!("mol,y\n{rows}")).unwrap();
    let common = [
        "--input",
        csv.to_str().unwrap(),
        "--smiles-column",
        "mol",
        "--label-column",
        "y",
    ];

    let out = run(dir.path(), &[&["featurize"][..], &common].concat());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let features = fs::read_to_string(dir.path().join("features.csv")).unwrap();
    assert_eq!(features.lines().count(), 9);

    let out = run(dir.path(), &[&["split"][..], &common].concat());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let split = fs::read_to_string(dir.path().join("split.csv")).unwrap();
    assert_eq!(split.lines().count(), 9);
}

#[test]
fn pretrain_then_analyse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"pretrain_epochs": 1, "epochs": 2, "probe_epochs": [2], "encoder": {"dim": 8, "layers": 2, "heads": 2}}"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let out = run(dir.path(), &["pretrain", "--config", c]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let ckpt = dir.path().join("checkpoint.bin");
    assert!(ckpt.exists() && dir.path().join("model.json").exists());
    assert_eq!(
        fs::read_to_string(dir.path().join("pretrain_loss.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );

    let k = ckpt.to_str().unwrap();
    let out = run(
        dir.path(),
        &[
            "rogi",
            "--config",
            c,
            "--checkpoint",
            k,
            "--weights",
            "0.5,0.3,0.2",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rogi: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("rogi.json")).unwrap()).unwrap();
    assert!(rogi.is_object());

    let out = run(dir.path(), &["finetune", "--config", c, "--checkpoint", k]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("finetune_metrics.csv").exists());

    let out = run(dir.path(), &["rogi", "--weights", "0.5,0.5,0.5"]);
    assert_eq!(out.status.code(), Some(2));
}
