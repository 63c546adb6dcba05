//! Radar detections, point clouds and the geometric pre-processing that
//! happens before the network sees a cloud.

mod grouping;
mod sampling;

use std::f64::consts::PI;
use std::fmt;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Rng};

pub use grouping::{
    ball_group, ball_query, knn_group, knn_query, localize, localize_query, Grouping,
};
pub use sampling::farthest_point_sampling;

/// Number of frames accumulated into one sample.
pub const MAX_FRAMES: usize = 4;

/// Cloud size the network is trained on.
pub const DEFAULT_CLOUD_SIZE: usize = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Static = 0,
    Vehicle = 1,
    Pedestrian = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Static, Label::Vehicle, Label::Pedestrian];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Static => "static",
            Label::Vehicle => "vehicle",
            Label::Pedestrian => "pedestrian",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One radar detection. `v_r` is already ego-motion compensated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarDetection {
    pub x: f32,
    pub y: f32,
    pub v_r: f32,
    pub sigma: f32,
    /// 0 = newest frame.
    pub frame_age: u8,
    pub label: Option<Label>,
}

impl RadarDetection {
    pub fn new(x: f32, y: f32, v_r: f32, sigma: f32) -> Self {
        RadarDetection {
            x,
            y,
            v_r,
            sigma,
            frame_age: 0,
            label: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn field(&self, field: Field) -> f32 {
        match field {
            Field::X => self.x,
            Field::Y => self.y,
            Field::Vr => self.v_r,
            Field::Sigma => self.sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_age as usize >= MAX_FRAMES {
            return Err(Error::invalid(format!(
                "frame_age {} outside 0..{}",
                self.frame_age, MAX_FRAMES
            )));
        }
        if !(self.x.is_finite() && self.y.is_finite() && self.v_r.is_finite() && self.sigma.is_finite()) {
            return Err(Error::invalid("detection with non-finite field"));
        }
        Ok(())
    }
}

/// Per-detection quantities that can be fed to the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    X,
    Y,
    Vr,
    Sigma,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::X => "x",
            Field::Y => "y",
            Field::Vr => "v_r",
            Field::Sigma => "sigma",
        }
    }
}

/// Divisors applied to raw field values before they enter the network as
/// features (never to coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldScales {
    pub x: f64,
    pub y: f64,
    pub v_r: f64,
    pub sigma: f64,
}

impl Default for FieldScales {
    fn default() -> Self {
        FieldScales {
            x: 25.0,
            y: 25.0,
            v_r: 5.0,
            sigma: 10.0,
        }
    }
}

impl FieldScales {
    pub fn get(&self, field: Field) -> f64 {
        match field {
            Field::X => self.x,
            Field::Y => self.y,
            Field::Vr => self.v_r,
            Field::Sigma => self.sigma,
        }
    }
}

/// Which detection fields become coordinates (used for sampling, grouping and
/// localization) and which become per-point features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputLayout {
    pub coords: Vec<Field>,
    pub features: Vec<Field>,
    /// Multiplier applied to `v_r` when it is used as a coordinate.
    pub doppler_scale: f64,
    /// Permits a field in both `coords` and `features`.
    pub allow_overlap: bool,
    /// Feature normalization divisors.
    pub feature_scale: FieldScales,
}

impl Default for InputLayout {
    fn default() -> Self {
        InputLayout {
            coords: vec![Field::X, Field::Y, Field::Vr],
            features: vec![Field::Sigma],
            doppler_scale: 1.0,
            allow_overlap: false,
            feature_scale: FieldScales::default(),
        }
    }
}

impl InputLayout {
    /// Plain (x, y) coordinates with v_r and sigma as features.
    pub fn planar() -> Self {
        InputLayout {
            coords: vec![Field::X, Field::Y],
            features: vec![Field::Vr, Field::Sigma],
            ..Default::default()
        }
    }

    pub fn coord_dims(&self) -> usize {
        self.coords.len()
    }

    pub fn feature_dims(&self) -> usize {
        self.features.len()
    }

    pub fn uses(&self, field: Field) -> bool {
        self.coords.contains(&field) || self.features.contains(&field)
    }

    /// Removes `field` from both coordinates and features.
    pub fn without(&self, field: Field) -> InputLayout {
        let mut out = self.clone();
        out.coords.retain(|&f| f != field);
        out.features.retain(|&f| f != field);
        out
    }

    /// Fields seen by the pre-processing network, in the fixed order
    /// x, y, v_r, sigma, restricted to what the layout uses.
    pub fn raw_fields(&self) -> Vec<Field> {
        [Field::X, Field::Y, Field::Vr, Field::Sigma]
            .into_iter()
            .filter(|&f| self.uses(f))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coords.contains(&Field::X) && self.coords.contains(&Field::Y)) {
            return Err(Error::invalid("layout coords must contain x and y"));
        }
        if self.coords.contains(&Field::Sigma) {
            return Err(Error::invalid("sigma cannot be a coordinate"));
        }
        if self.features.iter().any(|f| matches!(f, Field::X | Field::Y)) {
            return Err(Error::invalid("features may only contain v_r and sigma"));
        }
        if !(2..=3).contains(&self.coords.len()) {
            return Err(Error::invalid(format!("{} coordinate dims, expected 2 or 3", self.coords.len())));
        }
        if self.features.len() > 2 {
            return Err(Error::invalid("at most 2 feature dims"));
        }
        let mut seen = Vec::new();
        for f in self.coords.iter().chain(&self.features) {
            if seen.contains(f) {
                let in_both = self.coords.contains(f) && self.features.contains(f);
                if !(in_both && self.allow_overlap) {
                    return Err(Error::invalid(format!("field {} listed twice", f.name())));
                }
            }
            seen.push(*f);
        }
        if !(self.doppler_scale.is_finite() && self.doppler_scale > 0.0) {
            return Err(Error::invalid("doppler_scale must be positive"));
        }
        let fs = self.feature_scale;
        if [fs.x, fs.y, fs.v_r, fs.sigma].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("feature_scale entries must be positive"));
        }
        Ok(())
    }
}

/// Row-major N×D coordinate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Coords {
    dim: usize,
    data: Vec<f64>,
}

impl Coords {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::shape("coords", format!("multiple of {dim}"), data.len()));
        }
        Ok(Coords { dim, data })
    }

    pub fn from_rows<const D: usize>(rows: &[[f64; D]]) -> Self {
        Coords {
            dim: D,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, indices: &[usize]) -> Coords {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Coords { dim: self.dim, data }
    }

    pub fn translated(&self, offset: &[f64]) -> Coords {
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.dim) {
            for (v, o) in row.iter_mut().zip(offset) {
                *v += o;
            }
        }
        out
    }

    pub(crate) fn dist2(&self, i: usize, q: &[f64]) -> f64 {
        self.row(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// An ordered collection of detections.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<RadarDetection>,
}

impl PointCloud {
    pub fn new(points: Vec<RadarDetection>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn labels(&self) -> Option<Vec<Label>> {
        self.points.iter().map(|p| p.label).collect()
    }

    /// N×D coordinates under `layout`, with `v_r` scaled by `doppler_scale`.
    pub fn coords(&self, layout: &InputLayout) -> Coords {
        let mut data = Vec::with_capacity(self.len() * layout.coord_dims());
        for p in &self.points {
            for &f in &layout.coords {
                let v = p.field(f) as f64;
                data.push(if f == Field::Vr { v * layout.doppler_scale } else { v });
            }
        }
        Coords {
            dim: layout.coord_dims().max(1),
            data,
        }
    }

    /// N×F row-major features under `layout`, divided by its feature scales.
    pub fn features(&self, layout: &InputLayout) -> Vec<f64> {
        self.scaled_fields(&layout.features, layout)
    }

    /// Like [`PointCloud::field_matrix`], each column divided by its scale.
    pub fn scaled_fields(&self, fields: &[Field], layout: &InputLayout) -> Vec<f64> {
        let inv: Vec<f64> = fields.iter().map(|&f| 1.0 / layout.feature_scale.get(f)).collect();
        let mut data = Vec::with_capacity(self.len() * fields.len());
        for p in &self.points {
            data.extend(fields.iter().zip(&inv).map(|(&f, s)| p.field(f) as f64 * s));
        }
        data
    }

    pub fn field_matrix(&self, fields: &[Field]) -> Vec<f64> {
        let mut data = Vec::with_capacity(self.len() * fields.len());
        for p in &self.points {
            data.extend(fields.iter().map(|&f| p.field(f) as f64));
        }
        data
    }

    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }
}

/// Planar rigid transform taking a past frame into the newest frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoPose {
    pub tx: f64,
    pub ty: f64,
    pub theta: f64,
}

impl Default for EgoPose {
    fn default() -> Self {
        Self::identity()
    }
}

pub(crate) fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

impl EgoPose {
    pub fn new(tx: f64, ty: f64, theta: f64) -> Self {
        EgoPose {
            tx,
            ty,
            theta: wrap_angle(theta),
        }
    }

    pub fn identity() -> Self {
        EgoPose {
            tx: 0.0,
            ty: 0.0,
            theta: 0.0,
        }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (c * x - s * y + self.tx, s * x + c * y + self.ty)
    }

    /// Rotates a vector without translating it.
    pub fn rotate(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (c * x - s * y, s * x + c * y)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &EgoPose) -> EgoPose {
        let (tx, ty) = self.apply(other.tx, other.ty);
        EgoPose::new(tx, ty, self.theta + other.theta)
    }

    pub fn inverse(&self) -> EgoPose {
        let (s, c) = self.theta.sin_cos();
        EgoPose::new(-(c * self.tx + s * self.ty), s * self.tx - c * self.ty, -self.theta)
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.tx.abs() <= tol && self.ty.abs() <= tol && wrap_angle(self.theta).abs() <= tol
    }
}

/// Concatenates up to four frames (oldest first, newest last) into the newest
/// frame's coordinate system. `poses[i]` maps frame `i` into the newest frame.
pub fn accumulate_frames(frames: &[PointCloud], poses: &[EgoPose]) -> Result<PointCloud> {
    if frames.is_empty() {
        return Err(Error::invalid("no frames to accumulate"));
    }
    if frames.len() > MAX_FRAMES {
        return Err(Error::invalid(format!("{} frames, at most {MAX_FRAMES}", frames.len())));
    }
    if frames.len() != poses.len() {
        return Err(Error::invalid(format!(
            "{} frames but {} poses",
            frames.len(),
            poses.len()
        )));
    }
    if !poses[poses.len() - 1].is_identity(1e-9) {
        return Err(Error::invalid("newest frame pose must be the identity"));
    }
    let total = frames.iter().map(PointCloud::len).sum();
    let mut points = Vec::with_capacity(total);
    for (i, (frame, pose)) in frames.iter().zip(poses).enumerate() {
        let age = (frames.len() - 1 - i) as u8;
        for p in &frame.points {
            let (x, y) = pose.apply(p.x as f64, p.y as f64);
            points.push(RadarDetection {
                x: x as f32,
                y: y as f32,
                frame_age: age,
                ..*p
            });
        }
    }
    Ok(PointCloud { points })
}

/// Source indices realizing [`normalize_size`]: all points plus uniformly drawn
/// duplicates when `n < target`, a sorted uniform subset when `n > target`.
pub fn normalize_indices(n: usize, target: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if n == 0 || target == 0 {
        return Err(Error::invalid("normalize_size needs n >= 1 and target >= 1"));
    }
    let mut out: Vec<usize> = if n <= target {
        let mut v: Vec<usize> = (0..n).collect();
        v.extend((n..target).map(|_| rng.random_range(0..n)));
        v
    } else {
        let mut v = index::sample(rng, n, target).into_vec();
        v.sort_unstable();
        v
    };
    out.truncate(target);
    Ok(out)
}

/// Resizes a cloud to exactly `target` detections.
pub fn normalize_size(pc: &PointCloud, target: usize, rng: &mut Rng) -> Result<PointCloud> {
    let idx = normalize_indices(pc.len(), target, rng)?;
    Ok(pc.select(&idx))
}
