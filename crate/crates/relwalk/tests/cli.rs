use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};
use std::time::Instant;

use relwalk::synth::{planted_database, PlantedConfig};
use tempfile::TempDir;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let db = planted_database(&PlantedConfig {
            n_items: 60,
            ..PlantedConfig::default()
        })
        .unwrap();
        fs::create_dir(dir.path().join("data")).unwrap();
        relwalk::dataset::write_database(&db, &dir.path().join("data")).unwrap();
        relwalk::descriptor::write_schema(db.schema(), &dir.path().join("schema.json")).unwrap();
        fs::write(
            dir.path().join("config.json"),
            r#"{"dataset_dir": "data", "schema": "schema.json",
                "task": {"relation": "Item", "attribute": "label"},
                "l_max": 1, "trainer": {"epochs": 3}, "strategies": ["kvar", "online"],
                "ratios": [0.5, 1.0], "seeds": [0, 1], "folds": 5,
                "dynamic": {"fractions": [0.2]}}"#,
        )
        .unwrap();
        Fixture { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, out: &str, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_relwalk"))
            .arg("--config")
            .arg(self.path("config.json"))
            .arg("--out-dir")
            .arg(self.path(out))
            .args(args)
            .output()
            .unwrap()
    }

    fn write_csv(&self, dir: &str, relation: &str, text: &str) {
        fs::create_dir_all(self.path(dir)).unwrap();
        fs::write(self.path(dir).join(format!("{relation}.csv")), text).unwrap();
    }

    fn trained_model(&self) -> PathBuf {
        let out = self.run("train", &["train"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        self.path("train/model.json")
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn lists_schemes() {
    let fx = Fixture::new();
    let out = fx.run("s", &["schemes", "--stats"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("targeted_schemes=12"), "{text}");
    assert!(text.contains("Item[id]—[item]Tag.t1"), "{text}");
}

#[test]
fn score_select_train_evaluate() {
    let fx = Fixture::new();
    let out = fx.run("o", &["score", "--strategy", "kvar", "--ratio", "0.5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let selection = fx.path("o/selection_kvar_r0.5.json");
    assert!(selection.exists());
    assert!(fx.path("o/scores_kvar.csv").exists());

    let out = fx.run("o", &["train", "--selection", selection.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["model.json", "epochs.csv", "embeddings.csv", "manifest.json"] {
        assert!(fx.path("o").join(f).exists(), "{f}");
    }
    let model = fx.path("o/model.json");
    let out = fx.run("o", &["evaluate", "--model", model.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fx.path("o/evaluation.json")).unwrap()).unwrap();
    let acc = eval["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn usage_errors_exit_two() {
    let fx = Fixture::new();
    assert_eq!(code(&fx.run("u", &["score", "--strategy", "online"])), 2);
    assert_eq!(code(&fx.run("u", &["score", "--strategy", "bogus"])), 2);
    assert_eq!(code(&fx.run("u", &["train", "--online", "0.5"])), 2);
    assert_eq!(code(&fx.run("u", &[])), 2);
}

#[test]
fn extension_paths() {
    let fx = Fixture::new();
    let model = fx.trained_model();
    let before = fs::read(&model).unwrap();

    fs::create_dir(fx.path("empty")).unwrap();
    let out = fx.run(
        "e0",
        &["extend", "--model", model.to_str().unwrap(), "--new-data", fx.path("empty").to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(fx.path("e0/model.json")).unwrap(), before);

    fx.write_csv("new", "Item", "id,label\ni900,L0\n");
    fx.write_csv(
        "new",
        "Tag",
        "tid,item,t1,t2,tconst\ntx0,i900,t1_0,t2_0,const\ntx1,i900,t1_1,t2_0,const\n",
    );
    fx.write_csv("new", "Visit", "vid,item,v1,v2,v3,v4\nvx0,i900,v1_0,v2_0,v3_0,v4_0\n");
    let out = fx.run(
        "e1",
        &[
            "extend",
            "--model",
            model.to_str().unwrap(),
            "--new-data",
            fx.path("new").to_str().unwrap(),
            "--verify",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let embeddings = fs::read_to_string(fx.path("e1/new_embeddings.csv")).unwrap();
    assert!(embeddings.contains("i900"), "{embeddings}");

    fx.write_csv("dangling", "Tag", "tid,item,t1,t2,tconst\ntz,i999,a,b,const\n");
    let out = fx.run(
        "e2",
        &["extend", "--model", model.to_str().unwrap(), "--new-data", fx.path("dangling").to_str().unwrap()],
    );
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_dataset_is_an_integrity_error() {
    let fx = Fixture::new();
    fs::remove_file(fx.path("data/Tag.csv")).unwrap();
    let out = fx.run("m", &["train"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn minimal_experiment() {
    let fx = Fixture::new();
    let started = Instant::now();
    let out = fx.run("x", &["--workers", "2", "experiment", "--dynamic"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(started.elapsed().as_secs() < 60);
    for f in ["report.json", "curves.csv", "ensemble.csv", "thresholds.csv", "dynamic.csv", "manifest.json"] {
        assert!(fx.path("x").join(f).exists(), "{f}");
    }
    let report = relwalk::experiment::ExperimentReport::read(&fx.path("x/report.json")).unwrap();
    assert!(report.leakage_check_passed);
    assert_eq!(report.n_schemes, 12);
    assert!(report.cells.iter().all(|c| c.ok));
    assert!(report.ensemble("online", 0.5).is_some());
    assert!(!report.dynamic.is_empty());

    let plot = fx.path("x/plot.csv");
    let out = fx.run(
        "x",
        &["plot-data", "--report", fx.path("x/report.json").to_str().unwrap(), "--output", plot.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(&plot).unwrap();
    assert!(text.starts_with("strategy,ratio,time,accuracy"), "{text}");
}
