use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use afnet_cli::load_config;

fn afnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afnet")).args(args).output().expect("spawn afnet")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = afnet(args);
    assert!(o.status.success(), "afnet {args:?} failed: {}", stderr(&o));
    stdout(&o)
}

fn tiny_cfg(dir: &Path) -> String {
    let p = dir.join("tiny.cfg");
    fs::write(&p, "input_size=32\nwidths=4,8,16,32   # narrow\n").unwrap();
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn config_file_defaults_overrides_and_typos() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.cfg");
    fs::write(&empty, "").unwrap();
    let c = load_config(&empty).unwrap();
    assert_eq!(c.train.epochs, 70);
    assert_eq!(c.train.learning_rate, 1e-4);
    assert_eq!((c.train.beta1, c.train.beta2), (0.9, 0.999));

    let p = dir.path().join("lr.cfg");
    fs::write(&p, "# comment\n\nlearning_rate=0.001\n").unwrap();
    assert_eq!(load_config(&p).unwrap().train.learning_rate, 0.001);

    fs::write(&p, "learnig_rate=0.001\n").unwrap();
    let err = format!("{:#}", load_config(&p).unwrap_err());
    assert!(err.contains("line 1") && err.contains("learnig_rate"), "{err}");

    fs::write(&p, "epochs=3\nepochs=many\n").unwrap();
    assert!(format!("{:#}", load_config(&p).unwrap_err()).contains("line 2"));
    fs::write(&p, "epochs\n").unwrap();
    assert!(format!("{:#}", load_config(&p).unwrap_err()).contains("line 1"));

    let o = afnet(&["params", "--config", s(&p)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr(&o).lines().count(), 1, "{}", stderr(&o));
}

#[test]
fn resolved_config_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = load_config(tiny_cfg(dir.path())).unwrap();
    c.set("fusion_positions", "2,3,4").unwrap();
    c.set("train_seed", "9").unwrap();
    let p = dir.path().join("resolved.cfg");
    fs::write(&p, c.to_text()).unwrap();
    assert_eq!(load_config(&p).unwrap(), c);
}

#[test]
fn usage_errors_exit_two() {
    let o = afnet(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = afnet(&["synth", "--subjects", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = afnet(&["protocol", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2), "data source is required");
    assert_eq!(afnet(&[]).status.code(), Some(2));
}

#[test]
fn params_prints_component_table() {
    let toy = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/toy.cfg");
    let out = ok(&["params", "--config", toy]);
    assert!(out.starts_with("component,params\n"));
    assert!(out.contains("texture.ma1,") && out.contains("depth.iwc4,") && out.contains("total,"));
}

#[test]
fn synth_writes_six_scans_per_subject() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    ok(&["synth", "--subjects", "12", "--out", s(&out)]);
    let scans = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "scan"))
        .count();
    assert_eq!(scans, 72);
    let manifest = fs::read_to_string(out.join("run_manifest.txt")).unwrap();
    assert!(manifest.contains("command=synth") && manifest.contains("config.subjects=12"));
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = tiny_cfg(d);
    let (raw, prep) = (d.join("raw"), d.join("prep"));
    ok(&["synth", "--subjects", "2", "--out", s(&raw), "--seed", "5"]);
    ok(&["preprocess", "--input", s(&raw), "--out", s(&prep), "--size", "32", "--previews"]);
    assert!(prep.join("index.csv").exists() && prep.join("previews").exists());

    // Flags beat --set, which beats the file.
    fs::write(d.join("three.cfg"), format!("{}epochs=3\n", fs::read_to_string(&cfg).unwrap())).unwrap();
    let run = d.join("train");
    let out = ok(&[
        "train", "--config", s(&d.join("three.cfg")), "--set", "epochs=2", "--epochs", "1", "--data", s(&prep),
        "--out", s(&run),
    ]);
    assert!(out.contains("trained 1 epochs on 12 samples"), "{out}");
    assert_eq!(fs::read_to_string(run.join("train_log.csv")).unwrap().lines().count(), 2);
    assert!(fs::read_to_string(run.join("resolved.cfg")).unwrap().contains("epochs=1\n"));
    assert!(run.join("run_manifest.txt").exists());

    let ck = run.join("checkpoint");
    let out = ok(&["eval", "--checkpoint", s(&ck), "--data", s(&prep), "--out", s(&d.join("eval"))]);
    assert!(out.starts_with("accuracy "));
    assert!(d.join("eval/eval_confusion.aftn").exists());

    let cam = d.join("cam");
    ok(&["cam", "--checkpoint", s(&ck), "--data", s(&prep), "--item", "3", "--out", s(&cam)]);
    let map = afnet::Tensor::load(cam.join("cam.aftn")).unwrap();
    assert_eq!(map.shape(), &[32, 32]);
    assert!(map.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let o = afnet(&["cam", "--checkpoint", s(&ck), "--data", s(&prep), "--layer", "nope", "--out", s(&cam)]);
    assert_eq!(o.status.code(), Some(1));

    let (p1, p2) = (d.join("p1"), d.join("p2"));
    for p in [&p1, &p2] {
        ok(&["protocol", "--config", &cfg, "--epochs", "1", "--data", s(&prep), "--k", "2", "--out", s(p)]);
    }
    for f in ["protocol_summary.txt", "protocol_folds.csv", "protocol_confusion.aftn"] {
        assert_eq!(fs::read(p1.join(f)).unwrap(), fs::read(p2.join(f)).unwrap(), "{f}");
    }
    let manifest = fs::read_to_string(p1.join("run_manifest.txt")).unwrap();
    assert!(manifest.contains("config.epochs=1") && manifest.contains("config.k=2"));
}

#[test]
fn ablate_on_in_memory_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_cfg(dir.path());
    let out = dir.path().join("abl");
    let table = ok(&["ablate", "--config", &cfg, "--epochs", "1", "--synthetic", "2", "--k", "2", "--axis", "ma", "--out", s(&out)]);
    assert!(table.contains("2D+3D w/ MA"));
    assert_eq!(fs::read_to_string(out.join("ablation_ma.csv")).unwrap().lines().count(), 7);
    let o = afnet(&["ablate", "--synthetic", "2", "--axis", "colour", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown ablation axis"));
}
