//! Synthetic radar scenes and the on-disk dataset format.

mod dataset;
mod scene;

pub use dataset::{format_sig9, read_dataset, read_scene, write_dataset, write_scene};
pub use scene::{
    generate_scene, generate_scenes, label_detections, sample_rcs, simulate_doppler, BoundingBox, ObjectKind,
    ObjectSpec, RcsModel, Reflector, SceneConfig, SceneSpec, Span, WallSpec, FRAME_INTERVAL,
    PEDESTRIAN_SPEED_THRESHOLD, VEHICLE_SPEED_THRESHOLD,
};

use serde::Serialize;

use crate::pointcloud::{accumulate_frames, EgoPose, Label, PointCloud};
use crate::{Error, Result};

/// One multi-frame scene. Frames are oldest first, each in its own sensor
/// coordinates; `poses[i]` maps frame `i` into the newest frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub seed: u64,
    pub frames: Vec<PointCloud>,
    pub poses: Vec<EgoPose>,
    pub boxes: Vec<BoundingBox>,
}

impl Scene {
    /// Ego-motion compensated union of all frames.
    pub fn accumulated(&self) -> Result<PointCloud> {
        accumulate_frames(&self.frames, &self.poses)
    }

    pub fn num_points(&self) -> usize {
        self.frames.iter().map(PointCloud::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    pub scenes: Vec<Scene>,
}

impl LabeledDataset {
    pub fn new(scenes: Vec<Scene>) -> Self {
        LabeledDataset { scenes }
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    /// Accumulated clouds of every scene, in order.
    pub fn clouds(&self) -> Result<Vec<PointCloud>> {
        self.scenes.iter().map(Scene::accumulated).collect()
    }
}

/// Class occurrence over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStats {
    pub scenes: usize,
    /// Indexed by [`Label::index`].
    pub counts: [u64; 3],
    pub fractions: [f64; 3],
    pub mean_points_per_scene: f64,
    pub mean_points_per_frame: f64,
}

impl ClassStats {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn fraction(&self, label: Label) -> f64 {
        self.fractions[label.index()]
    }
}

/// Per-class counts and fractions over all labeled detections.
pub fn dataset_stats(ds: &LabeledDataset) -> Result<ClassStats> {
    let mut counts = [0u64; 3];
    let mut frames = 0usize;
    for scene in &ds.scenes {
        frames += scene.frames.len();
        for p in scene.frames.iter().flat_map(|f| &f.points) {
            if let Some(l) = p.label {
                counts[l.index()] += 1;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::invalid("dataset has no labeled detections"));
    }
    let points: usize = ds.scenes.iter().map(Scene::num_points).sum();
    Ok(ClassStats {
        scenes: ds.len(),
        counts,
        fractions: counts.map(|c| c as f64 / total as f64),
        mean_points_per_scene: points as f64 / ds.len() as f64,
        mean_points_per_frame: points as f64 / frames.max(1) as f64,
    })
}
