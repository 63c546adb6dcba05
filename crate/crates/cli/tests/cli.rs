mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use common::*;
use radar_xconv::net::NetworkSpec;
use radar_xconv::train::{toy_spec, SUITE_OPS};
use tempfile::TempDir;

/// Small dataset plus one trained run, shared by the slower tests.
struct Fixture {
    _dir: TempDir,
    data: PathBuf,
    config: PathBuf,
    run: PathBuf,
}

fn tiny_spec() -> NetworkSpec {
    toy_spec(64, true)
}

fn tiny_train() -> Vec<(&'static str, toml::Value)> {
    vec![
        ("epochs", toml::Value::Integer(2)),
        ("lr", toml::Value::Float(1e-3)),
        ("validation_fraction", toml::Value::Float(0.34)),
    ]
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let data = dir.path().join("data");
        let config = write_config(&dir.path().join("run.toml"), 21, Some(&tiny_spec()), &tiny_train());
        ok(&["generate", "--scenes", "3", "--seed", "5", "--out", &p(&data)]);
        let run = dir.path().join("run");
        ok(&["train", "--data", &p(&data), "--out", &p(&run), "--config", &p(&config)]);
        Fixture {
            _dir: dir,
            data,
            config,
            run,
        }
    })
}

fn checkpoint() -> PathBuf {
    fixture().run.join("checkpoint.rpseg")
}

#[test]
fn generate_one_scene_writes_one_scene_and_metadata() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("one");
    let stdout = ok(&["generate", "--scenes", "1", "--seed", "3", "--out", &p(&out)]);
    assert_eq!(listing(&out), ["config.toml", "scene_00000.csv", "scene_00000.toml", "stats.toml"]);
    assert!(stdout.contains("pedestrian"), "{stdout}");
    let stats = read_toml(&out.join("stats.toml"));
    assert!(stats.contains_key("counts"), "{stats:?}");
}

#[test]
fn generate_is_byte_identical_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["generate", "--scenes", "4", "--seed", "99", "--out", &p(&a)]);
    ok(&["generate", "--scenes", "4", "--seed", "99", "--out", &p(&b)]);
    assert_eq!(listing(&a), listing(&b));
    for name in listing(&a) {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name}");
    }
    let c = dir.path().join("c");
    ok(&["generate", "--scenes", "4", "--seed", "100", "--out", &p(&c)]);
    assert_ne!(fs::read(a.join("scene_00000.csv")).unwrap(), fs::read(c.join("scene_00000.csv")).unwrap());
}

#[test]
fn generate_zero_scenes_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = expect_code(&["generate", "--scenes", "0", "--out", &p(&dir.path().join("x"))], 1);
    assert!(stderr(&out).contains("--scenes"), "{}", stderr(&out));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    expect_code(&["generate", "--scenes", "1", "--bogus"], 1);
    expect_code(&["train", "--data"], 1);
}

#[test]
fn train_without_data_dir_fails_with_message() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nowhere");
    let out = expect_code(&["train", "--data", &p(&missing), "--out", &p(&dir.path().join("o"))], 2);
    assert!(stderr(&out).contains("nowhere"), "{}", stderr(&out));
}

#[test]
fn train_writes_one_checkpoint_and_reruns_identically() {
    let f = fixture();
    let names = listing(&f.run);
    assert_eq!(names, ["checkpoint.rpseg", "config.toml", "epochs.jsonl", "report.toml"]);
    let log = fs::read_to_string(f.run.join("epochs.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);

    let dir = TempDir::new().unwrap();
    let again = dir.path().join("again");
    ok(&["train", "--data", &p(&f.data), "--out", &p(&again), "--config", &p(&f.config)]);
    for name in names {
        assert_eq!(fs::read(f.run.join(&name)).unwrap(), fs::read(again.join(&name)).unwrap(), "{name}");
    }
}

#[test]
fn run_directory_config_reproduces_the_run() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("from_written_config");
    let written = f.run.join("config.toml");
    ok(&["train", "--data", &p(&f.data), "--out", &p(&out), "--config", &p(&written)]);
    assert_eq!(fs::read(checkpoint()).unwrap(), fs::read(out.join("checkpoint.rpseg")).unwrap());
}

#[test]
fn eval_reports_metrics_counts_and_all_confusion_cells() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("r").join("eval.toml");
    let stdout = ok(&["eval", "--ckpt", &p(&checkpoint()), "--data", &p(&f.data), "--report", &p(&report)]);
    assert!(stdout.contains("Vehicle") || stdout.contains("vehicle"), "{stdout}");
    let r = read_toml(&report);
    for class in ["vehicle", "pedestrian", "average"] {
        for stat in ["precision", "recall", "f1"] {
            let v = r[class][stat].as_float().unwrap();
            assert!((0.0..=1.0).contains(&v), "{class}.{stat} = {v}");
        }
    }
    assert!(r["params"].as_integer().unwrap() > 0);
    assert!(r["flops"].as_integer().unwrap() > 0);
    for key in ["counts", "normalized"] {
        let rows = r["confusion"][key].as_array().unwrap();
        let cells: usize = rows.iter().map(|row| row.as_array().unwrap().len()).sum();
        assert_eq!((rows.len(), cells), (3, 9), "{key}");
    }
    let total: i64 = r["confusion"]["counts"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|row| row.as_array().unwrap().iter().map(|c| c.as_integer().unwrap()))
        .sum();
    assert!(total > 0);
    assert!(dir.path().join("r").join("eval.config.toml").is_file());
}

#[test]
fn eval_rejects_a_checkpoint_spec_mismatch() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let other = write_config(&dir.path().join("vanilla.toml"), 21, Some(&NetworkSpec::vanilla()), &[]);
    let out = expect_code(
        &["eval", "--ckpt", &p(&checkpoint()), "--data", &p(&f.data), "--report", &p(&dir.path().join("r.toml")), "--config", &p(&other)],
        2,
    );
    assert!(stderr(&out).contains("mismatch"), "{}", stderr(&out));
}

#[test]
fn corrupted_checkpoint_is_a_data_error() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let mut bytes = fs::read(checkpoint()).unwrap();
    bytes.truncate(bytes.len() - 3);
    let bad = dir.path().join("bad.rpseg");
    fs::write(&bad, bytes).unwrap();
    let report = dir.path().join("r.toml");
    expect_code(&["eval", "--ckpt", &p(&bad), "--data", &p(&f.data), "--report", &p(&report)], 2);
    fs::write(&bad, b"not a checkpoint").unwrap();
    expect_code(&["eval", "--ckpt", &p(&bad), "--data", &p(&f.data), "--report", &p(&report)], 2);
}

fn svg_circles(path: &Path) -> Vec<(String, String)> {
    let text = fs::read_to_string(path).unwrap();
    let doc = roxmltree::Document::parse(&text).expect("well-formed SVG");
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let detections = doc
        .descendants()
        .find(|n| n.attribute("id") == Some("detections"))
        .expect("detections group");
    detections
        .children()
        .filter(|n| n.has_tag_name("circle"))
        .map(|n| (n.attribute("class").unwrap().to_string(), n.attribute("fill").unwrap().to_string()))
        .collect()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,score_vehicle,score_pedestrian,predicted,truth"));
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn scene_points(csv: &Path) -> usize {
    fs::read_to_string(csv).unwrap().lines().skip(1).filter(|l| !l.trim().is_empty()).count()
}

#[test]
fn predict_writes_svg_and_csv_for_a_labeled_scene() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let scene = f.data.join("scene_00001.csv");
    let svg = dir.path().join("pred.svg");
    ok(&["predict", "--ckpt", &p(&checkpoint()), "--scene", &p(&scene), "--svg", &p(&svg)]);
    let n = scene_points(&scene);
    let circles = svg_circles(&svg);
    assert_eq!(circles.len(), n);
    assert!(circles.iter().all(|(c, _)| ["TP", "TN", "FN", "FP"].contains(&c.as_str())));
    let rows = csv_rows(&svg.with_extension("csv"));
    assert_eq!(rows.len(), n);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 5);
        assert_eq!(row[0], i.to_string());
        for s in &row[1..3] {
            let v: f64 = s.parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
        assert!(["static", "vehicle", "pedestrian"].contains(&row[3].as_str()));
        assert!(["static", "vehicle", "pedestrian"].contains(&row[4].as_str()));
    }
    assert!(dir.path().join("pred.config.toml").is_file());
}

#[test]
fn predict_without_labels_colors_by_prediction() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let src = f.data.join("scene_00002.csv");
    let scene = dir.path().join("scene_unlabeled.csv");
    let stripped: String = fs::read_to_string(&src)
        .unwrap()
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 0 { format!("{l}\n") } else { format!("{},\n", l.rsplit_once(',').unwrap().0) })
        .collect();
    fs::write(&scene, stripped).unwrap();
    fs::copy(src.with_extension("toml"), scene.with_extension("toml")).unwrap();

    let svg = dir.path().join("out").join("plain.svg");
    let csv = dir.path().join("plain_points.csv");
    let stdout = ok(&["predict", "--ckpt", &p(&checkpoint()), "--scene", &p(&scene), "--svg", &p(&svg), "--csv", &p(&csv)]);
    assert!(stdout.contains("labeled = false"), "{stdout}");
    let circles = svg_circles(&svg);
    assert_eq!(circles.len(), scene_points(&scene));
    assert!(circles.iter().all(|(c, _)| ["static", "vehicle", "pedestrian"].contains(&c.as_str())));
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), circles.len());
    assert!(rows.iter().all(|r| r[4].is_empty()));
}

#[test]
fn gradcheck_default_passes_and_lists_every_op_once() {
    let stdout = ok(&["gradcheck"]);
    for op in SUITE_OPS {
        let hits = stdout.lines().filter(|l| l.split_whitespace().next() == Some(op)).count();
        assert_eq!(hits, 1, "{op} in\n{stdout}");
    }
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn gradcheck_notices_a_corrupted_backward() {
    let out = expect_code(&["gradcheck", "--inject-fault", "dense"], 3);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL"), "{stdout}");
    expect_code(&["gradcheck", "--inject-fault", "nonsense"], 1);
}

#[test]
fn ablate_emits_four_rows_and_the_full_row_matches_train_plus_eval() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("ablate");
    ok(&["ablate", "--data", &p(&f.data), "--out", &p(&out), "--config", &p(&f.config)]);
    assert!(out.join("config.toml").is_file());
    let table = read_toml(&out.join("ablation.toml"));
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let txt = fs::read_to_string(out.join("ablation.txt")).unwrap();
    for row in rows {
        let name = row["name"].as_str().unwrap();
        assert!(txt.contains(name), "{name} missing from\n{txt}");
    }

    let report = dir.path().join("full.toml");
    ok(&["eval", "--ckpt", &p(&checkpoint()), "--data", &p(&f.data), "--report", &p(&report), "--config", &p(&f.config)]);
    let plain = read_toml(&report);
    let full = rows[0]["report"].as_table().unwrap();
    for key in ["vehicle", "pedestrian", "average", "confusion", "params", "flops"] {
        assert_eq!(full[key], plain[key], "{key}");
    }
}

#[test]
fn config_errors_name_file_line_and_key() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("broken.toml");
    fs::write(&cfg, "seed = 1\n\n[train]\nepochs = 3\nlearning_rate = 0.5\n").unwrap();
    let out = expect_code(&["show-config", "--config", &p(&cfg)], 1);
    let msg = stderr(&out);
    assert!(msg.contains("broken.toml:5") && msg.contains("train.learning_rate"), "{msg}");

    fs::write(&cfg, "[scenes]\nposition_noise = \"far\"\n").unwrap();
    let msg = stderr(&expect_code(&["gradcheck", "--config", &p(&cfg)], 1));
    assert!(msg.contains("broken.toml:2") && msg.contains("scenes.position_noise"), "{msg}");

    expect_code(&["show-config", "--config", &p(&dir.path().join("absent.toml"))], 1);
}

#[test]
fn show_config_round_trips() {
    let dir = TempDir::new().unwrap();
    let first = ok(&["show-config"]);
    let path = dir.path().join("resolved.toml");
    fs::write(&path, &first).unwrap();
    assert_eq!(ok(&["show-config", "--config", &p(&path)]), first);
}
