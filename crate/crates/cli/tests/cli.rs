use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spansrl"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf8 path")
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        let root = dir.path().to_path_buf();
        let f = Fixture { _dir: dir, root };
        ok(&[
            "gen-data",
            "--out",
            s(&f.path("train.jsonl")),
            "--embeddings",
            s(&f.path("emb.txt")),
            "--sentences",
            "30",
            "--dim",
            "8",
        ]);
        ok(&["gen-data", "--out", s(&f.path("dev.jsonl")), "--seed", "2", "--sentences", "10"]);
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn train(&self, out: &str, seed: &str) -> String {
        ok(&[
            "train",
            "--train",
            s(&self.path("train.jsonl")),
            "--dev",
            s(&self.path("dev.jsonl")),
            "--embeddings",
            s(&self.path("emb.txt")),
            "--out",
            s(&self.path(out)),
            "--epochs",
            "3",
            "--hidden",
            "8",
            "--layers",
            "2",
            "--seed",
            seed,
        ])
    }
}

#[test]
fn train_predict_evaluate() {
    let f = Fixture::new();
    let log = f.train("model.json", "1");
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("epoch=1 lr=0.001 loss="));
    assert!(lines[0].contains("dev_f1="));
    assert!(lines[3].starts_with("best_epoch="));

    let pred = f.path("pred.jsonl");
    let conll = f.path("pred.conll");
    let predict = |out: &Path| {
        ok(&[
            "predict",
            s(&f.path("model.json")),
            s(&f.path("dev.jsonl")),
            "--out",
            s(out),
            "--conll",
            s(&conll),
        ])
    };
    predict(&pred);
    let again = f.path("pred2.jsonl");
    predict(&again);
    assert_eq!(fs::read(&pred).unwrap(), fs::read(&again).unwrap());
    assert!(!fs::read_to_string(&conll).unwrap().is_empty());

    let report = f.path("report.json");
    let table = ok(&["evaluate", s(&pred), s(&f.path("dev.jsonl")), "--out", s(&report)]);
    assert!(table.lines().any(|l| l.starts_with("labeled")));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(json["labeled"]["f1"].is_number());
    assert!(fs::read_to_string(f.path("report.json.confusion.csv")).unwrap().starts_with("gold\\pred"));

    let gold = f.path("dev.jsonl");
    ok(&["evaluate", s(&gold), s(&gold), "--out", s(&report)]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["labeled"]["f1"], 1.0);
    assert_eq!(json["boundary"]["f1"], 1.0);
}

#[test]
fn seeded_training_is_reproducible() {
    let f = Fixture::new();
    f.train("a.json", "4");
    f.train("b.json", "4");
    assert_eq!(fs::read(f.path("a.json")).unwrap(), fs::read(f.path("b.json")).unwrap());
}

#[test]
fn single_base_ensemble_matches_base() {
    let f = Fixture::new();
    f.train("base.json", "1");
    let log = ok(&[
        "ensemble",
        "--bases",
        s(&f.path("base.json")),
        "--train",
        s(&f.path("train.jsonl")),
        "--dev",
        s(&f.path("dev.jsonl")),
        "--epochs",
        "0",
        "--out",
        s(&f.path("ens.json")),
    ]);
    assert!(log.contains("initial_dev_f1="));
    let ckpt: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.path("ens.json")).unwrap()).unwrap();
    assert_eq!(ckpt["kind"], "ensemble");
    assert_eq!(ckpt["bases"][0]["path"], "base.json");

    for (ck, out) in [("base.json", "p_base.jsonl"), ("ens.json", "p_ens.jsonl")] {
        ok(&["predict", s(&f.path(ck)), s(&f.path("dev.jsonl")), "--out", s(&f.path(out))]);
    }
    assert_eq!(
        fs::read(f.path("p_base.jsonl")).unwrap(),
        fs::read(f.path("p_ens.jsonl")).unwrap()
    );

    f.train("base.json", "2");
    let out = run(&["predict", s(&f.path("ens.json")), s(&f.path("dev.jsonl")), "--out", s(&f.path("x.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_writes_neighbours_and_label_vectors() {
    let f = Fixture::new();
    f.train("model.json", "1");
    let out = f.path("nn.json");
    ok(&[
        "analyze",
        s(&f.path("model.json")),
        s(&f.path("dev.jsonl")),
        s(&f.path("train.jsonl")),
        "--k",
        "3",
        "--out",
        s(&out),
    ]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    for entry in json.as_array().unwrap() {
        assert!(entry["neighbors"].as_array().unwrap().len() <= 3);
    }
    let csv = fs::read_to_string(f.path("nn.json.labels.csv")).unwrap();
    assert!(csv.starts_with("label,v1,"));
    assert_eq!(csv.lines().count(), 6);

    let bad = run(&[
        "analyze",
        s(&f.path("model.json")),
        s(&f.path("dev.jsonl")),
        s(&f.path("train.jsonl")),
        "--k",
        "0",
        "--out",
        s(&out),
    ]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn conll_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    fs::write(
        &input,
        "She\t-\t(A0*)\nkept\tkeep\t(V*)\na\t-\t(A1*\ncat\t-\t*)\n\n",
    )
    .unwrap();
    let jsonl = dir.path().join("out.jsonl");
    ok(&["convert-conll", s(&input), "--out", s(&jsonl)]);
    let text = fs::read_to_string(&jsonl).unwrap();
    let inst: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(inst["predicate"], 2);
    assert_eq!(inst["spans"], serde_json::json!([[1, 1, "A0"], [3, 4, "A1"]]));

    let back = dir.path().join("back.txt");
    ok(&["convert-conll", s(&jsonl), "--out", s(&back), "--reverse"]);
    let jsonl2 = dir.path().join("again.jsonl");
    ok(&["convert-conll", s(&back), "--out", s(&jsonl2)]);
    assert_eq!(text, fs::read_to_string(&jsonl2).unwrap());
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    let missing = run(&["evaluate", "/nonexistent/p.jsonl", "/nonexistent/g.jsonl"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\": 1}\n").unwrap();
    let out = run(&["evaluate", s(&bad), s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
}
