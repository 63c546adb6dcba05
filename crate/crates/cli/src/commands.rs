use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use radar_xconv::diff::{decode_checkpoint, OpKind, ParamStore};
use radar_xconv::net::{count_flops, count_params, init_params, NetworkSpec};
use radar_xconv::pointcloud::{Label, PointCloud};
use radar_xconv::synth::{dataset_stats, generate_scenes, read_dataset, read_scene, write_dataset, LabeledDataset};
use radar_xconv::train::{
    ablate_features, evaluate, format_confusion, format_table, predict_cloud, run_gradcheck_suite, train_with,
    Ablation, Report,
};
use radar_xconv::{derive_seed, rng_from_seed};
use serde::Serialize;

use crate::config::{NetworkSection, RunConfig};
use crate::error::{CliError, CliResult};
use crate::svg;

pub const CHECKPOINT_FILE: &str = "checkpoint.rpseg";
pub const EPOCH_LOG_FILE: &str = "epochs.jsonl";
pub const REPORT_FILE: &str = "report.toml";

/// Evaluation and prediction stream of the run seed.
fn eval_seed(seed: u64) -> u64 {
    derive_seed(seed, 4)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// `<stem>.config.toml` beside a single-file output.
fn sibling_config(path: &Path) -> PathBuf {
    let stem = path.file_stem().map_or("out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.config.toml"))
}

fn parent_dir(path: &Path) -> CliResult<()> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(dir) => create_dir(dir),
        None => Ok(()),
    }
}

fn load_dataset(dir: &Path) -> CliResult<LabeledDataset> {
    if !dir.is_dir() {
        return Err(CliError::data(format!("data directory {} does not exist", dir.display())));
    }
    let ds = read_dataset(dir)?;
    if ds.is_empty() {
        return Err(CliError::data(format!("{} holds no scene_*.csv files", dir.display())));
    }
    Ok(ds)
}

fn labeled_clouds(ds: &LabeledDataset, dir: &Path) -> CliResult<Vec<PointCloud>> {
    let clouds = ds.clouds()?;
    if let Some(i) = clouds.iter().position(|c| c.labels().is_none()) {
        return Err(CliError::data(format!("{}: scene {i} has unlabeled detections", dir.display())));
    }
    Ok(clouds)
}

fn method_name(cfg: &RunConfig) -> String {
    match (&cfg.network.spec, &cfg.network.preset) {
        (Some(_), _) => "custom".into(),
        (None, Some(p)) => p.clone(),
        (None, None) => "pp_msg".into(),
    }
}

fn report(method: &str, spec: &NetworkSpec, ev: &radar_xconv::train::Evaluation) -> Report {
    Report::new(method, &ev.metrics, &ev.confusion, count_params(spec), count_flops(spec, spec.input_points))
}

pub fn generate(cfg: &RunConfig, scenes: usize, out: &Path) -> CliResult<()> {
    if scenes == 0 {
        return Err(CliError::usage("--scenes must be at least 1"));
    }
    let ds = LabeledDataset::new(generate_scenes(&cfg.scenes, scenes, cfg.seed)?);
    write_dataset(&ds, out)?;
    let stats = dataset_stats(&ds)?;
    let mut text = toml::to_string(&stats).map_err(|e| CliError::data(e.to_string()))?;
    text.push_str("\n[classes]\nnames = [\"static\", \"vehicle\", \"pedestrian\"]\n");
    write_file(&out.join("stats.toml"), text)?;
    cfg.write_into(out)?;
    println!("wrote {scenes} scenes to {}", out.display());
    println!("{:<11} {:>9} {:>8}", "class", "count", "percent");
    for l in Label::ALL {
        println!("{:<11} {:>9} {:>7.2}%", l.name(), stats.counts[l.index()], 100.0 * stats.fraction(l));
    }
    println!("mean detections per scene {:.1}, per frame {:.1}", stats.mean_points_per_scene, stats.mean_points_per_frame);
    Ok(())
}

pub fn train(cfg: &RunConfig, data: &Path, out: &Path) -> CliResult<()> {
    let spec = cfg.network_spec().map_err(CliError::usage)?;
    let tcfg = cfg.train_config();
    let ds = load_dataset(data)?;
    let clouds = labeled_clouds(&ds, data)?;
    create_dir(out)?;
    cfg.write_into(out)?;
    let log_path = out.join(EPOCH_LOG_FILE);
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| CliError::data(format!("{}: {e}", log_path.display())))?);
    let mut io_err = None;
    let start = Instant::now();
    println!(
        "training {} ({} params) on {} scenes for {} epochs",
        method_name(cfg),
        count_params(&spec),
        clouds.len(),
        tcfg.epochs
    );
    let outcome = train_with(&clouds, &spec, &tcfg, |r| {
        if let Err(e) = writeln!(log, "{}", r.to_json()).and_then(|_| log.flush()) {
            io_err.get_or_insert(e);
        }
        println!(
            "epoch {:4}  loss {:.6}  {} macro F1 {:.4}{}  [{:.0?}]",
            r.epoch,
            r.loss,
            r.selection,
            r.macro_f1,
            if r.best { "  *" } else { "" },
            start.elapsed()
        );
    })?;
    if let Some(e) = io_err {
        return Err(CliError::data(format!("{}: {e}", log_path.display())));
    }
    write_file(&out.join(CHECKPOINT_FILE), outcome.checkpoint(&spec, &tcfg)?)?;

    let (_, sel) = tcfg.split(clouds.len());
    let selection: Vec<PointCloud> = sel.iter().map(|&i| clouds[i].clone()).collect();
    let ev = evaluate(&selection, &spec, &outcome.best, derive_seed(tcfg.seed, 3))?;
    let rep = report(&method_name(cfg), &spec, &ev);
    let mut text = format!("best_epoch = {}\nselection_scenes = {}\n", outcome.best_epoch, selection.len());
    text.push_str(&rep.to_toml());
    write_file(&out.join(REPORT_FILE), text)?;
    println!("best epoch {} (macro F1 {:.4})", outcome.best_epoch, outcome.best_macro_f1);
    print!("{}", format_table(&[rep]));
    Ok(())
}

/// Spec and parameters of a checkpoint, checked against each other.
pub fn load_checkpoint(path: &Path) -> CliResult<(NetworkSpec, ParamStore<f32>)> {
    let bytes = fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let ckpt = decode_checkpoint(&bytes).map_err(|e| CliError::from(e).context(path.display()))?;
    let spec: NetworkSpec = ckpt
        .meta
        .get("spec")
        .cloned()
        .ok_or_else(|| CliError::data(format!("{}: checkpoint carries no network spec", path.display())))?
        .try_into()
        .map_err(|e| CliError::data(format!("{}: bad network spec: {e}", path.display())))?;
    spec.validate().map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let expected = init_params::<f32>(&spec, &mut rng_from_seed(0))?;
    if expected.len() != ckpt.params.len() {
        return Err(CliError::data(format!(
            "{}: spec needs {} parameter arrays, checkpoint has {}",
            path.display(),
            expected.len(),
            ckpt.params.len()
        )));
    }
    for (name, arr) in expected.iter() {
        let got = ckpt
            .params
            .get(name)
            .map_err(|_| CliError::data(format!("{}: parameter {name} missing", path.display())))?;
        if got.shape() != arr.shape() {
            return Err(CliError::data(format!(
                "{}: parameter {name} has shape {:?}, spec expects {:?}",
                path.display(),
                got.shape(),
                arr.shape()
            )));
        }
    }
    Ok((spec, ckpt.params))
}

/// Rejects a config that selects a different network than the checkpoint.
fn check_spec_agrees(cfg: &RunConfig, ckpt_spec: &NetworkSpec) -> CliResult<()> {
    if cfg.network == NetworkSection::default() {
        return Ok(());
    }
    let wanted = cfg.network_spec().map_err(CliError::usage)?;
    if &wanted != ckpt_spec {
        return Err(CliError::data(
            "checkpoint/spec mismatch: the config's [network] differs from the network stored in the checkpoint",
        ));
    }
    Ok(())
}

/// Config as used with a checkpoint's network.
fn with_spec(cfg: &RunConfig, spec: &NetworkSpec) -> RunConfig {
    RunConfig {
        network: NetworkSection {
            spec: Some(spec.clone()),
            ..Default::default()
        },
        ..cfg.clone()
    }
}

pub fn eval(cfg: &RunConfig, ckpt: &Path, data: &Path, report_path: &Path) -> CliResult<()> {
    let (spec, params) = load_checkpoint(ckpt)?;
    check_spec_agrees(cfg, &spec)?;
    let ds = load_dataset(data)?;
    let clouds = labeled_clouds(&ds, data)?;
    let ev = evaluate(&clouds, &spec, &params, eval_seed(cfg.seed))?;
    let method = ckpt.parent().and_then(|p| p.file_name()).map_or("model".into(), |n| n.to_string_lossy().into_owned());
    let rep = report(&method, &spec, &ev);
    parent_dir(report_path)?;
    write_file(report_path, rep.to_toml())?;
    let used = with_spec(cfg, &spec);
    write_file(&sibling_config(report_path), used.resolved_toml()?)?;
    print!("{}", format_table(std::slice::from_ref(&rep)));
    println!();
    print!("{}", format_confusion(&rep.confusion));
    Ok(())
}

#[derive(Serialize)]
struct PredictionSummary {
    points: usize,
    labeled: bool,
    predicted: [u64; 3],
}

pub fn predict(cfg: &RunConfig, ckpt: &Path, scene_path: &Path, svg_path: &Path, csv_path: Option<&Path>) -> CliResult<()> {
    let (spec, params) = load_checkpoint(ckpt)?;
    check_spec_agrees(cfg, &spec)?;
    let scene = read_scene(scene_path)?;
    let pc = scene.accumulated()?;
    let pred = predict_cloud(&pc, &spec, &params, eval_seed(cfg.seed))?;
    let truth = pc.labels();

    parent_dir(svg_path)?;
    let title = scene_path.file_name().map_or("scene".into(), |n| n.to_string_lossy().into_owned());
    write_file(svg_path, svg::render(&pc, &pred.labels, truth.as_deref(), &scene.boxes, &title))?;

    let csv_path = csv_path.map_or_else(|| svg_path.with_extension("csv"), Path::to_path_buf);
    parent_dir(&csv_path)?;
    let mut csv = String::from("index,score_vehicle,score_pedestrian,predicted,truth\n");
    for (i, label) in pred.labels.iter().enumerate() {
        let t = truth.as_ref().map_or("", |t| t[i].name());
        csv.push_str(&format!(
            "{i},{:.6},{:.6},{},{t}\n",
            pred.scores[2 * i],
            pred.scores[2 * i + 1],
            label.name()
        ));
    }
    write_file(&csv_path, csv)?;
    write_file(&sibling_config(svg_path), with_spec(cfg, &spec).resolved_toml()?)?;

    let mut predicted = [0u64; 3];
    pred.labels.iter().for_each(|l| predicted[l.index()] += 1);
    let summary = PredictionSummary {
        points: pc.len(),
        labeled: truth.is_some(),
        predicted,
    };
    print!("{}", toml::to_string(&summary).map_err(|e| CliError::data(e.to_string()))?);
    Ok(())
}

pub fn gradcheck(cfg: &RunConfig, fault: Option<OpKind>) -> CliResult<()> {
    let start = Instant::now();
    let lines = run_gradcheck_suite(&cfg.gradcheck, fault)?;
    println!("{:<18} {:>14} {:>8}  status", "op", "max rel error", "coords");
    for l in &lines {
        println!(
            "{:<18} {:>14.3e} {:>8}  {}",
            l.op,
            l.max_rel_error,
            l.coords,
            if l.passed { "ok" } else { "FAIL" }
        );
    }
    println!("tolerance {:e}, {:.1?}", cfg.gradcheck.tolerance, start.elapsed());
    let failed: Vec<&str> = lines.iter().filter(|l| !l.passed).map(|l| l.op).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("gradient check failed for {}", failed.join(", "))))
    }
}

#[derive(Serialize)]
struct AblationFile {
    rows: Vec<AblationEntry>,
}

#[derive(Serialize)]
struct AblationEntry {
    name: String,
    best_epoch: usize,
    report: Report,
}

pub fn ablate(cfg: &RunConfig, data: &Path, eval_data: Option<&Path>, out: &Path) -> CliResult<()> {
    let spec = cfg.network_spec().map_err(CliError::usage)?;
    let tcfg = cfg.train_config();
    let train_set = labeled_clouds(&load_dataset(data)?, data)?;
    let eval_set = match eval_data {
        Some(dir) => labeled_clouds(&load_dataset(dir)?, dir)?,
        None => train_set.clone(),
    };
    create_dir(out)?;
    cfg.write_into(out)?;
    let rows = ablate_features(&train_set, &eval_set, &spec, &tcfg, &Ablation::ALL)?;
    let entries: Vec<AblationEntry> = rows
        .iter()
        .map(|r| {
            let s = r.config.apply(&spec);
            AblationEntry {
                name: r.name.clone(),
                best_epoch: r.best_epoch,
                report: Report::new(r.name.clone(), &r.metrics, &r.confusion, count_params(&s), count_flops(&s, s.input_points)),
            }
        })
        .collect();
    let table = format_table(&entries.iter().map(|e| e.report.clone()).collect::<Vec<_>>());
    write_file(&out.join("ablation.txt"), &table)?;
    let file = AblationFile { rows: entries };
    write_file(&out.join("ablation.toml"), toml::to_string(&file).map_err(|e| CliError::data(e.to_string()))?)?;
    print!("{table}");
    Ok(())
}

pub fn show_config(cfg: &RunConfig) -> CliResult<()> {
    print!("{}", cfg.resolved_toml()?);
    Ok(())
}
