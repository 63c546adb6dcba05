//! Directory layout: `scene_00000.csv` holds one detection per line
//! (`frame_age,x,y,v_r,sigma,label`, raw per-frame coordinates) and
//! `scene_00000.toml` holds the scene metadata (seed, ego poses, boxes).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BoundingBox, LabeledDataset, Scene};
use crate::pointcloud::{EgoPose, Label, PointCloud, RadarDetection, MAX_FRAMES};
use crate::{Error, Result};

const HEADER: &str = "frame_age,x,y,v_r,sigma,label";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    /// Decimal string: TOML integers stop at i64::MAX.
    #[serde(with = "crate::seed_string")]
    seed: u64,
    poses: Vec<EgoPose>,
    #[serde(default)]
    boxes: Vec<BoundingBox>,
}

/// Decimal with 9 significant digits, trailing zeros trimmed.
pub fn format_sig9(v: f32) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let v = v as f64;
    let sci = format!("{v:.8e}");
    let exp: i32 = sci[sci.find('e').expect("scientific format") + 1..].parse().expect("exponent");
    if !(-7..=15).contains(&exp) {
        return sci;
    }
    let decimals = (8 - exp).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

fn scene_stem(index: usize) -> String {
    format!("scene_{index:05}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `scene` as `<stem>.csv` plus `<stem>.toml` inside `dir`.
pub fn write_scene(scene: &Scene, dir: &Path, stem: &str) -> Result<PathBuf> {
    if scene.frames.len() != scene.poses.len() || scene.frames.is_empty() || scene.frames.len() > MAX_FRAMES {
        return Err(Error::invalid(format!(
            "scene has {} frames and {} poses",
            scene.frames.len(),
            scene.poses.len()
        )));
    }
    let nf = scene.frames.len();
    let mut csv = String::with_capacity(48 * scene.num_points() + HEADER.len() + 1);
    csv.push_str(HEADER);
    csv.push('\n');
    for (i, frame) in scene.frames.iter().enumerate() {
        for p in &frame.points {
            let age = nf - 1 - i;
            let label = p.label.map(|l| l.index().to_string()).unwrap_or_default();
            csv.push_str(&format!(
                "{age},{},{},{},{},{label}\n",
                format_sig9(p.x),
                format_sig9(p.y),
                format_sig9(p.v_r),
                format_sig9(p.sigma)
            ));
        }
    }
    let sidecar = Sidecar {
        seed: scene.seed,
        poses: scene.poses.clone(),
        boxes: scene.boxes.clone(),
    };
    let meta = toml::to_string(&sidecar).map_err(|e| Error::invalid(format!("sidecar: {e}")))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    write_file(&csv_path, &csv)?;
    write_file(&dir.join(format!("{stem}.toml")), &meta)?;
    Ok(csv_path)
}

/// Writes every scene into `dir` (created if missing).
pub fn write_dataset(ds: &LabeledDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, scene) in ds.scenes.iter().enumerate() {
        write_scene(scene, dir, &scene_stem(i))?;
    }
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("{name}: cannot parse `{s}`")))
}

/// Reads one scene from its CSV file and the sidecar next to it.
pub fn read_scene(csv_path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let meta_path = csv_path.with_extension("toml");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let sidecar: Sidecar = toml::from_str(&meta_text).map_err(|e| {
        let line = e
            .span()
            .map(|s| meta_text[..s.start.min(meta_text.len())].lines().count().max(1))
            .unwrap_or(0);
        parse_err(&meta_path, line, e.message().to_string())
    })?;
    let nf = sidecar.poses.len();
    if nf == 0 || nf > MAX_FRAMES {
        return Err(parse_err(&meta_path, 0, format!("expected 1..={MAX_FRAMES} poses, found {nf}")));
    }

    let mut lines = text.lines().enumerate();
    match lines.next() {
        None => return Err(parse_err(csv_path, 1, "empty file")),
        Some((_, h)) if h.trim() != HEADER => {
            return Err(parse_err(csv_path, 1, format!("bad header `{h}`, expected `{HEADER}`")))
        }
        Some(_) => {}
    }
    let mut frames: Vec<Vec<RadarDetection>> = vec![Vec::new(); nf];
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(parse_err(csv_path, n, format!("expected 6 columns, found {}", cols.len())));
        }
        let age: usize = parse_field(csv_path, n, "frame_age", cols[0])?;
        if age >= nf {
            return Err(parse_err(csv_path, n, format!("frame_age {age} but only {nf} poses")));
        }
        let mut d = RadarDetection::new(
            parse_field(csv_path, n, "x", cols[1])?,
            parse_field(csv_path, n, "y", cols[2])?,
            parse_field(csv_path, n, "v_r", cols[3])?,
            parse_field(csv_path, n, "sigma", cols[4])?,
        );
        d.frame_age = age as u8;
        let label = cols[5].trim();
        if !label.is_empty() {
            let idx: usize = parse_field(csv_path, n, "label", label)?;
            d.label = Some(Label::from_index(idx).ok_or_else(|| parse_err(csv_path, n, format!("label {idx} not in 0..=2")))?);
        }
        d.validate().map_err(|e| parse_err(csv_path, n, e.to_string()))?;
        frames[nf - 1 - age].push(d);
    }
    if frames.iter().all(Vec::is_empty) {
        return Err(parse_err(csv_path, 2, "no detections"));
    }
    Ok(Scene {
        seed: sidecar.seed,
        frames: frames.into_iter().map(PointCloud::new).collect(),
        poses: sidecar.poses,
        boxes: sidecar.boxes,
    })
}

/// Reads every `scene_*.csv` in `dir`, sorted by file name.
pub fn read_dataset(dir: &Path) -> Result<LabeledDataset> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_scene = path.extension().is_some_and(|e| e == "csv")
            && path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("scene_"));
        if is_scene {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::invalid(format!("{}: no scene_*.csv files", dir.display())));
    }
    paths.sort();
    Ok(LabeledDataset::new(paths.iter().map(|p| read_scene(p)).collect::<Result<_>>()?))
}
