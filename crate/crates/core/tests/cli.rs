use std::path::Path;
use std::process::Command;

fn droughtcast(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_droughtcast")).args(args).env("DROUGHTCAST_THREADS", "1").output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: [&str; 6] = ["--set", "synth.t_len=96", "--set", "synth.rows=6", "--set", "synth.cols=6"];

#[test]
fn pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cube = dir.path().join("cube.pdsc");
    let mut args = vec!["synth", "--out", p(&cube)];
    args.extend(SMALL);
    assert_eq!(droughtcast(&args).0, 0);
    let before = std::fs::read(&cube).unwrap();

    let (code, out) = droughtcast(&["stats", "--input", p(&cube)]);
    assert_eq!(code, 0);
    assert!(out.contains("span_months=96") && out.contains("pct_drought="));

    let split = dir.path().join("split");
    assert_eq!(droughtcast(&["split", "--input", p(&cube), "--out", p(&split)]).0, 0);
    assert!(split.join("train.pdsc").exists() && split.join("test.pdsc").exists());

    let model = dir.path().join("m.model");
    let (code, out) = droughtcast(&["train", "--input", p(&cube), "--model", "gbdt", "--set", "gbdt.n_rounds=10", "--out", p(&model)]);
    assert_eq!(code, 0, "{out}");
    assert!(out.starts_with("config_hash="));

    let fc = dir.path().join("f.csv");
    assert_eq!(droughtcast(&["predict", "--input", p(&cube), "--model-file", p(&model), "--out", p(&fc)]).0, 0);
    let eval = dir.path().join("eval");
    let (code, out) = droughtcast(&["evaluate", "--input", p(&cube), "--forecast", p(&fc), "--out", p(&eval)]);
    assert_eq!(code, 0);
    assert!(out.contains("roc_auc="));
    let report = std::fs::read_to_string(eval.join("report.csv")).unwrap();
    assert!(report.starts_with("experiment,model,region,horizon,seed,crop,area,metric,value,config_hash"));

    let svg = dir.path().join("m.svg");
    let map = eval.join("map_roc_auc.csv");
    assert_eq!(droughtcast(&["render", "--map", p(&map), "--vmin", "0.5", "--vmax", "1", "--out", p(&svg)]).0, 0);
    let first = std::fs::read(&svg).unwrap();
    assert_eq!(droughtcast(&["render", "--map", p(&map), "--vmin", "0.5", "--vmax", "1", "--out", p(&svg)]).0, 0);
    assert_eq!(std::fs::read(&svg).unwrap(), first);
    let field = dir.path().join("p.svg");
    assert_eq!(droughtcast(&["render", "--forecast", p(&fc), "--input", p(&cube), "--month", "80", "--out", p(&field)]).0, 0);

    assert_eq!(std::fs::read(&cube).unwrap(), before);
}

#[test]
fn ablate_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cube = dir.path().join("cube.pdsc");
    let mut args = vec!["synth", "--out", p(&cube)];
    args.extend(SMALL);
    droughtcast(&args);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let (code, _) = droughtcast(&[
            "ablate", "crop", "--input", p(&cube), "--set", "models=baseline,logreg", "--set", "horizons=1",
            "--set", "crop_fracs=0,0.3", "--out", p(&out),
        ]);
        assert_eq!(code, 0);
        assert!(out.join("config.txt").exists() && out.join("train.log").exists());
        std::fs::read(out.join("report.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.pdsc");
    assert_eq!(droughtcast(&["stats", "--input", p(&missing)]).0, 2);
    let junk = dir.path().join("junk.pdsc");
    std::fs::write(&junk, b"not a cube").unwrap();
    assert_eq!(droughtcast(&["stats", "--input", p(&junk)]).0, 2);
    assert_eq!(droughtcast(&["bogus"]).0, 1);
    assert_eq!(droughtcast(&["synth", "--out", p(&junk), "--set", "synth.ar_coeff=1.5"]).0, 1);
    assert_eq!(droughtcast(&["synth", "--out", p(&junk), "--set", "nonsense"]).0, 1);
    assert_eq!(droughtcast(&["--help"]).0, 0);
}

#[test]
fn csv_input_needs_dims() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    std::fs::write(&csv, "t,row,col,pdsi\n0,0,0,-1.5\n1,0,0,-2.5\n").unwrap();
    assert_eq!(droughtcast(&["stats", "--input", p(&csv)]).0, 1);
    let (code, out) = droughtcast(&["stats", "--input", p(&csv), "--dims", "2,1,1"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("span_months=2"));
}
