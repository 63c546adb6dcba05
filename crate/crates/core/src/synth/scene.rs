use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::pointcloud::{accumulate_frames, EgoPose, Label, PointCloud, RadarDetection, MAX_FRAMES};
use crate::{Error, Result, Rng};

/// Radar cycle time between consecutive frames (s).
pub const FRAME_INTERVAL: f64 = 0.05;
/// Speed above which a vehicle box counts as moving (m/s).
pub const VEHICLE_SPEED_THRESHOLD: f64 = 2.5;
/// Speed above which a pedestrian box counts as moving (m/s).
pub const PEDESTRIAN_SPEED_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Vehicle,
    Pedestrian,
}

impl ObjectKind {
    /// (length, width) in meters.
    pub fn default_extent(self) -> [f64; 2] {
        match self {
            ObjectKind::Vehicle => [4.5, 1.8],
            ObjectKind::Pedestrian => [0.5, 0.5],
        }
    }

    pub fn speed_threshold(self) -> f64 {
        match self {
            ObjectKind::Vehicle => VEHICLE_SPEED_THRESHOLD,
            ObjectKind::Pedestrian => PEDESTRIAN_SPEED_THRESHOLD,
        }
    }

    pub fn label(self) -> Label {
        match self {
            ObjectKind::Vehicle => Label::Vehicle,
            ObjectKind::Pedestrian => Label::Pedestrian,
        }
    }

    pub fn reflector(self) -> Reflector {
        match self {
            ObjectKind::Vehicle => Reflector::Vehicle,
            ObjectKind::Pedestrian => Reflector::Pedestrian,
        }
    }
}

/// A moving (or parked) object. `center` and `heading` are given in the
/// newest frame's coordinate system at the newest timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub kind: ObjectKind,
    pub center: [f64; 2],
    pub extent: [f64; 2],
    pub heading: f64,
    pub speed: f64,
    pub reflectivity_mean: f64,
    pub points_per_frame: usize,
}

impl ObjectSpec {
    /// Class defaults for geometry, reflectivity and point density.
    pub fn new(kind: ObjectKind, center: [f64; 2], heading: f64, speed: f64) -> Self {
        let rcs = RcsModel::default();
        ObjectSpec {
            kind,
            center,
            extent: kind.default_extent(),
            heading,
            speed,
            reflectivity_mean: rcs.mean(kind.reflector()),
            points_per_frame: match kind {
                ObjectKind::Vehicle => 10,
                ObjectKind::Pedestrian => 3,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.extent[0] > 0.0 && self.extent[1] > 0.0) {
            return Err(Error::invalid(format!("object extent must be positive, got {:?}", self.extent)));
        }
        if !(self.speed >= 0.0) || !self.heading.is_finite() || !self.reflectivity_mean.is_finite() {
            return Err(Error::invalid("object speed must be >= 0 and all fields finite"));
        }
        Ok(())
    }

    fn velocity(&self) -> [f64; 2] {
        [self.speed * self.heading.cos(), self.speed * self.heading.sin()]
    }
}

/// Static line reflector (guard rail, building front).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallSpec {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub points_per_frame: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reflector {
    Vehicle,
    Pedestrian,
    Clutter,
}

/// Gaussian RCS per reflector class, in dBsm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RcsModel {
    pub vehicle_mean: f64,
    pub pedestrian_mean: f64,
    pub clutter_mean: f64,
    pub std_dev: f64,
}

impl Default for RcsModel {
    fn default() -> Self {
        RcsModel {
            vehicle_mean: 10.0,
            pedestrian_mean: -5.0,
            clutter_mean: 0.0,
            std_dev: 5.0,
        }
    }
}

impl RcsModel {
    pub fn mean(&self, kind: Reflector) -> f64 {
        match kind {
            Reflector::Vehicle => self.vehicle_mean,
            Reflector::Pedestrian => self.pedestrian_mean,
            Reflector::Clutter => self.clutter_mean,
        }
    }

    pub fn sample(&self, kind: Reflector, rng: &mut Rng) -> f64 {
        gaussian(self.mean(kind), self.std_dev, rng)
    }
}

/// One draw from the default [`RcsModel`].
pub fn sample_rcs(kind: Reflector, rng: &mut Rng) -> f64 {
    RcsModel::default().sample(kind, rng)
}

fn gaussian(mean: f64, std_dev: f64, rng: &mut Rng) -> f64 {
    if std_dev == 0.0 {
        return mean;
    }
    Normal::new(mean, std_dev).expect("validated std_dev").sample(rng)
}

/// Isotropic world-frame jitter. Object detections are redrawn until they lie
/// inside their source box, shrunk a little to absorb f32 rounding.
fn position_noise(p: [f64; 2], source: Option<&BoundingBox>, std_dev: f64, rng: &mut Rng) -> [f64; 2] {
    const TRIES: usize = 64;
    let draw = |rng: &mut Rng| [p[0] + gaussian(0.0, std_dev, rng), p[1] + gaussian(0.0, std_dev, rng)];
    let Some(b) = source else {
        return draw(rng);
    };
    let guard = BoundingBox {
        extent: [b.extent[0] * (1.0 - 1e-4), b.extent[1] * (1.0 - 1e-4)],
        ..b.clone()
    };
    for _ in 0..TRIES {
        let q = draw(rng);
        if guard.contains(q[0], q[1]) {
            return q;
        }
    }
    p
}

/// Radial component of `object_velocity − ego_residual` as seen from the
/// sensor at the origin. Zero at the origin itself.
pub fn simulate_doppler(point: [f64; 2], object_velocity: [f64; 2], ego_residual: [f64; 2]) -> f64 {
    let r = point[0].hypot(point[1]);
    if r == 0.0 {
        return 0.0;
    }
    let rel = [object_velocity[0] - ego_residual[0], object_velocity[1] - ego_residual[1]];
    (rel[0] * point[0] + rel[1] * point[1]) / r
}

/// Ground-truth box of one object in one frame, in the newest frame's
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub kind: ObjectKind,
    pub center: [f64; 2],
    pub extent: [f64; 2],
    pub heading: f64,
    pub inflation: f64,
    pub dynamic: bool,
    pub speed: f64,
    pub frame_age: u8,
}

impl BoundingBox {
    /// Point-in-box against the inflated extent, in the box frame.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let (s, c) = self.heading.sin_cos();
        let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
        u.abs() <= 0.5 * self.inflation * self.extent[0] && v.abs() <= 0.5 * self.inflation * self.extent[1]
    }

    /// Corners counter-clockwise, without inflation.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        box_corners(self.center, self.extent, self.heading)
    }

    fn dist2_to_center(&self, x: f64, y: f64) -> f64 {
        (x - self.center[0]).powi(2) + (y - self.center[1]).powi(2)
    }
}

fn box_corners(center: [f64; 2], extent: [f64; 2], heading: f64) -> [[f64; 2]; 4] {
    let (s, c) = heading.sin_cos();
    let (hl, hw) = (0.5 * extent[0], 0.5 * extent[1]);
    [(hl, -hw), (hl, hw), (-hl, hw), (-hl, -hw)].map(|(u, v)| [center[0] + c * u - s * v, center[1] + s * u + c * v])
}

/// Labels every detection by the inflated boxes of its own frame: inside a box
/// whose speed exceeds the class threshold gives that class, everything else
/// is Static. Overlaps go to the box with the nearest center.
pub fn label_detections(pc: &PointCloud, boxes: &[BoundingBox], speeds: &[f64]) -> Result<PointCloud> {
    if boxes.len() != speeds.len() {
        return Err(Error::invalid(format!("{} boxes but {} speeds", boxes.len(), speeds.len())));
    }
    let mut out = pc.clone();
    for p in &mut out.points {
        let (x, y) = (p.x as f64, p.y as f64);
        let mut best: Option<(f64, usize)> = None;
        for (i, b) in boxes.iter().enumerate() {
            if b.frame_age != p.frame_age || !b.contains(x, y) {
                continue;
            }
            let d = b.dist2_to_center(x, y);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        p.label = Some(match best {
            Some((_, i)) if speeds[i] > boxes[i].kind.speed_threshold() => boxes[i].kind.label(),
            _ => Label::Static,
        });
    }
    Ok(out)
}

/// Everything needed to render one synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub objects: Vec<ObjectSpec>,
    pub walls: Vec<WallSpec>,
    /// Expected clutter detections per frame (Poisson).
    pub clutter_density: f64,
    /// Ego speed along its heading (m/s).
    pub ego_speed: f64,
    /// Ego yaw rate (rad/s).
    pub yaw_rate: f64,
    pub frames: usize,
    /// Position noise stddev (m).
    pub position_noise: f64,
    /// Doppler noise stddev (m/s).
    pub doppler_noise: f64,
    pub inflation: f64,
    /// Clutter field of view: maximum range (m) and half opening angle (rad).
    pub max_range: f64,
    pub half_fov: f64,
    pub rcs: RcsModel,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            objects: Vec::new(),
            walls: Vec::new(),
            clutter_density: 0.0,
            ego_speed: 0.0,
            yaw_rate: 0.0,
            frames: MAX_FRAMES,
            position_noise: 0.1,
            doppler_noise: 0.2,
            inflation: 1.25,
            max_range: 60.0,
            half_fov: 1.0,
            rcs: RcsModel::default(),
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.frames > MAX_FRAMES {
            return Err(Error::invalid(format!("frames must be in 1..={MAX_FRAMES}, got {}", self.frames)));
        }
        if !(self.inflation >= 1.0) {
            return Err(Error::invalid(format!("inflation must be >= 1, got {}", self.inflation)));
        }
        let nonneg = [
            ("clutter_density", self.clutter_density),
            ("position_noise", self.position_noise),
            ("doppler_noise", self.doppler_noise),
            ("rcs.std_dev", self.rcs.std_dev),
            ("ego_speed", self.ego_speed),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.max_range > 1.0) || !(self.half_fov > 0.0 && self.half_fov <= std::f64::consts::PI) {
            return Err(Error::invalid("field of view needs max_range > 1 and half_fov in (0, pi]"));
        }
        for o in &self.objects {
            o.validate()?;
        }
        Ok(())
    }

    /// Ego pose of every frame in the newest frame's coordinates.
    pub fn ego_poses(&self) -> Vec<EgoPose> {
        let dt = FRAME_INTERVAL;
        let dtheta = self.yaw_rate * dt;
        let step = self.ego_speed * dt;
        let delta = EgoPose::new(step * (0.5 * dtheta).cos(), step * (0.5 * dtheta).sin(), dtheta);
        let back = delta.inverse();
        let mut poses = vec![EgoPose::identity(); self.frames];
        for i in (0..self.frames.saturating_sub(1)).rev() {
            poses[i] = poses[i + 1].compose(&back);
        }
        poses
    }
}

/// Point uniformly distributed along the sensor-facing edges of a box.
fn sample_facing_perimeter(corners: &[[f64; 2]; 4], sensor: [f64; 2], rng: &mut Rng) -> [f64; 2] {
    let mut edges = Vec::with_capacity(4);
    for i in 0..4 {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
        // Counter-clockwise corners: outward normal is (ey, -ex).
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        if ey * (sensor[0] - mid[0]) - ex * (sensor[1] - mid[1]) > 0.0 {
            edges.push((a, b, ex.hypot(ey)));
        }
    }
    if edges.is_empty() {
        // Sensor inside the box; every edge faces it.
        for i in 0..4 {
            let (a, b) = (corners[i], corners[(i + 1) % 4]);
            edges.push((a, b, (b[0] - a[0]).hypot(b[1] - a[1])));
        }
    }
    let total: f64 = edges.iter().map(|e| e.2).sum();
    let mut s = rng.random::<f64>() * total;
    for &(a, b, len) in &edges {
        if s <= len && len > 0.0 {
            let t = s / len;
            return [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        }
        s -= len;
    }
    edges[edges.len() - 1].1
}

/// Renders `spec` into labeled per-frame clouds (each in its own sensor
/// frame), the poses mapping them into the newest frame, and one box per
/// object and frame.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = crate::rng_from_seed(spec.seed);
    let poses = spec.ego_poses();
    let nf = spec.frames;
    let mut frames = Vec::with_capacity(nf);
    let mut boxes = Vec::new();
    let mut speeds = Vec::new();

    for (i, pose) in poses.iter().enumerate() {
        let age = (nf - 1 - i) as u8;
        let back = (nf - 1 - i) as f64 * FRAME_INTERVAL;
        let to_sensor = pose.inverse();
        let sensor = [pose.tx, pose.ty];
        // Detections as (world position, world velocity, reflector mean, source box).
        let mut raw: Vec<([f64; 2], [f64; 2], f64, Option<usize>)> = Vec::new();

        for o in &spec.objects {
            let v = o.velocity();
            let center = [o.center[0] - v[0] * back, o.center[1] - v[1] * back];
            let corners = box_corners(center, o.extent, o.heading);
            for _ in 0..o.points_per_frame {
                raw.push((sample_facing_perimeter(&corners, sensor, &mut rng), v, o.reflectivity_mean, Some(boxes.len())));
            }
            boxes.push(BoundingBox {
                kind: o.kind,
                center,
                extent: o.extent,
                heading: o.heading,
                inflation: spec.inflation,
                dynamic: o.speed > o.kind.speed_threshold(),
                speed: o.speed,
                frame_age: age,
            });
            speeds.push(o.speed);
        }
        for w in &spec.walls {
            for _ in 0..w.points_per_frame {
                let t: f64 = rng.random();
                let p = [w.start[0] + t * (w.end[0] - w.start[0]), w.start[1] + t * (w.end[1] - w.start[1])];
                raw.push((p, [0.0, 0.0], spec.rcs.clutter_mean, None));
            }
        }
        let n_clutter = if spec.clutter_density > 0.0 {
            Poisson::new(spec.clutter_density)
                .map_err(|e| Error::invalid(format!("clutter_density: {e}")))?
                .sample(&mut rng) as usize
        } else {
            0
        };
        let r_min = 1.0f64;
        for _ in 0..n_clutter {
            let r = (r_min * r_min + rng.random::<f64>() * (spec.max_range.powi(2) - r_min * r_min)).sqrt();
            let a = rng.random_range(-spec.half_fov..=spec.half_fov);
            let p = pose.apply(r * a.cos(), r * a.sin());
            raw.push(([p.0, p.1], [0.0, 0.0], spec.rcs.clutter_mean, None));
        }
        raw.shuffle(&mut rng);

        let mut points = Vec::with_capacity(raw.len());
        for (world, vel, rcs_mean, source) in raw {
            let (sx, sy) = to_sensor.apply(world[0], world[1]);
            let (vx, vy) = to_sensor.rotate(vel[0], vel[1]);
            let v_r = simulate_doppler([sx, sy], [vx, vy], [0.0, 0.0]) + gaussian(0.0, spec.doppler_noise, &mut rng);
            let noisy = position_noise(world, source.map(|b| &boxes[b]), spec.position_noise, &mut rng);
            let (x, y) = to_sensor.apply(noisy[0], noisy[1]);
            let sigma = gaussian(rcs_mean, spec.rcs.std_dev, &mut rng);
            let mut d = RadarDetection::new(x as f32, y as f32, v_r as f32, sigma as f32);
            d.frame_age = age;
            points.push(d);
        }
        frames.push(PointCloud::new(points));
    }

    let labeled = label_detections(&accumulate_frames(&frames, &poses)?, &boxes, &speeds)?;
    let mut it = labeled.points.iter();
    for frame in &mut frames {
        for p in &mut frame.points {
            p.label = it.next().and_then(|q| q.label);
        }
    }
    Ok(Scene {
        seed: spec.seed,
        frames,
        poses,
        boxes,
    })
}

/// Inclusive integer range.
pub type Span = [usize; 2];

/// Distribution over random scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Target mean detections per single frame.
    pub mean_points_per_frame: f64,
    pub vehicles: Span,
    pub pedestrians: Span,
    pub walls: Span,
    pub vehicle_points: Span,
    pub pedestrian_points: Span,
    pub wall_points: Span,
    /// Maximum speeds (m/s); moving objects draw uniformly below these.
    pub vehicle_max_speed: f64,
    pub pedestrian_max_speed: f64,
    /// Fraction of objects that stand still.
    pub parked_fraction: f64,
    pub ego_max_speed: f64,
    pub max_yaw_rate: f64,
    pub position_noise: f64,
    pub doppler_noise: f64,
    pub inflation: f64,
    pub max_range: f64,
    pub half_fov: f64,
    pub rcs: RcsModel,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let base = SceneSpec::default();
        SceneConfig {
            mean_points_per_frame: 184.0,
            vehicles: [0, 4],
            pedestrians: [0, 4],
            walls: [1, 3],
            vehicle_points: [6, 16],
            pedestrian_points: [2, 5],
            wall_points: [10, 40],
            vehicle_max_speed: 15.0,
            pedestrian_max_speed: 2.0,
            parked_fraction: 0.25,
            ego_max_speed: 15.0,
            max_yaw_rate: 0.0,
            position_noise: base.position_noise,
            doppler_noise: base.doppler_noise,
            inflation: base.inflation,
            max_range: base.max_range,
            half_fov: base.half_fov,
            rcs: base.rcs,
        }
    }
}

fn mid(s: Span) -> f64 {
    0.5 * (s[0] + s[1]) as f64
}

fn draw(s: Span, rng: &mut Rng) -> usize {
    rng.random_range(s[0]..=s[1])
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [
            ("vehicles", self.vehicles),
            ("pedestrians", self.pedestrians),
            ("walls", self.walls),
            ("vehicle_points", self.vehicle_points),
            ("pedestrian_points", self.pedestrian_points),
            ("wall_points", self.wall_points),
        ] {
            if s[0] > s[1] {
                return Err(Error::invalid(format!("{name}: empty range {s:?}")));
            }
        }
        if !(0.0..=1.0).contains(&self.parked_fraction) {
            return Err(Error::invalid("parked_fraction must be in [0, 1]"));
        }
        if !(self.mean_points_per_frame >= 0.0) {
            return Err(Error::invalid("mean_points_per_frame must be >= 0"));
        }
        Ok(())
    }

    /// Expected non-clutter detections per frame.
    pub fn structured_points(&self) -> f64 {
        mid(self.vehicles) * mid(self.vehicle_points)
            + mid(self.pedestrians) * mid(self.pedestrian_points)
            + mid(self.walls) * mid(self.wall_points)
    }

    /// Draws one scene description; clutter fills the gap to the target mean.
    pub fn sample(&self, seed: u64) -> Result<SceneSpec> {
        self.validate()?;
        let mut rng = crate::rng_from_seed(seed);
        let mut objects = Vec::new();
        let kinds = [
            (ObjectKind::Vehicle, self.vehicles, self.vehicle_points, self.vehicle_max_speed),
            (ObjectKind::Pedestrian, self.pedestrians, self.pedestrian_points, self.pedestrian_max_speed),
        ];
        for (kind, count, points, max_speed) in kinds {
            for _ in 0..draw(count, &mut rng) {
                let r = rng.random_range(5.0..0.8 * self.max_range);
                let a = rng.random_range(-0.8 * self.half_fov..=0.8 * self.half_fov);
                let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                let speed = if rng.random::<f64>() < self.parked_fraction {
                    0.0
                } else {
                    rng.random::<f64>() * max_speed
                };
                let mut o = ObjectSpec::new(kind, [r * a.cos(), r * a.sin()], heading, speed);
                o.reflectivity_mean = self.rcs.mean(kind.reflector());
                o.points_per_frame = draw(points, &mut rng);
                objects.push(o);
            }
        }
        let walls = (0..draw(self.walls, &mut rng))
            .map(|_| {
                let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let y = side * rng.random_range(4.0..20.0);
                let x0 = rng.random_range(0.0..20.0);
                let len = rng.random_range(10.0..40.0);
                WallSpec {
                    start: [x0, y],
                    end: [x0 + len, y],
                    points_per_frame: draw(self.wall_points, &mut rng),
                }
            })
            .collect();
        let clutter_mean = (self.mean_points_per_frame - self.structured_points()).max(0.0);
        Ok(SceneSpec {
            objects,
            walls,
            clutter_density: clutter_mean * rng.random_range(0.5..1.5),
            ego_speed: rng.random::<f64>() * self.ego_max_speed,
            yaw_rate: if self.max_yaw_rate > 0.0 {
                rng.random_range(-self.max_yaw_rate..=self.max_yaw_rate)
            } else {
                0.0
            },
            frames: MAX_FRAMES,
            position_noise: self.position_noise,
            doppler_noise: self.doppler_noise,
            inflation: self.inflation,
            max_range: self.max_range,
            half_fov: self.half_fov,
            rcs: self.rcs.clone(),
            seed,
        })
    }
}

/// `count` scenes; scene `i` uses seed `derive_seed(seed, i)`.
pub fn generate_scenes(cfg: &SceneConfig, count: usize, seed: u64) -> Result<Vec<Scene>> {
    (0..count)
        .map(|i| generate_scene(&cfg.sample(crate::derive_seed(seed, i as u64))?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn doppler_examples() {
        assert_eq!(simulate_doppler([10.0, 0.0], [0.0, 0.0], [0.0, 0.0]), 0.0);
        assert_eq!(simulate_doppler([10.0, 0.0], [-5.0, 0.0], [0.0, 0.0]), -5.0);
        assert_eq!(simulate_doppler([0.0, 10.0], [-5.0, 0.0], [0.0, 0.0]), 0.0);
    }

    #[test]
    fn rcs_zero_std_gives_means() {
        let m = RcsModel {
            std_dev: 0.0,
            ..Default::default()
        };
        let mut rng = rng_from_seed(1);
        assert_eq!(m.sample(Reflector::Vehicle, &mut rng), 10.0);
        assert_eq!(m.sample(Reflector::Pedestrian, &mut rng), -5.0);
        assert_eq!(m.sample(Reflector::Clutter, &mut rng), 0.0);
    }

    #[test]
    fn rcs_sample_mean() {
        let mut rng = rng_from_seed(7);
        let n = 100_000;
        for (kind, mean) in [(Reflector::Vehicle, 10.0), (Reflector::Pedestrian, -5.0), (Reflector::Clutter, 0.0)] {
            let avg = (0..n).map(|_| sample_rcs(kind, &mut rng)).sum::<f64>() / n as f64;
            assert!((avg - mean).abs() < 0.1, "{kind:?}: {avg}");
        }
        let a: Vec<f64> = (0..5).map(|_| sample_rcs(Reflector::Vehicle, &mut rng_from_seed(3))).collect();
        assert!(a.iter().all(|&v| v == a[0]));
    }

    #[test]
    fn object_noise_stays_in_source_box() {
        let b = BoundingBox {
            kind: ObjectKind::Pedestrian,
            center: [3.0, -2.0],
            extent: [0.5, 0.5],
            heading: 0.7,
            inflation: 1.25,
            dynamic: true,
            speed: 1.0,
            frame_age: 0,
        };
        let mut rng = rng_from_seed(9);
        for c in b.corners() {
            for _ in 0..200 {
                let q = position_noise(c, Some(&b), 0.1, &mut rng);
                assert!(b.contains(q[0], q[1]));
            }
        }
    }

    fn vehicle_box(speed: f64) -> BoundingBox {
        BoundingBox {
            kind: ObjectKind::Vehicle,
            center: [10.0, 0.0],
            extent: [4.5, 1.8],
            heading: 0.0,
            inflation: 1.25,
            dynamic: speed > VEHICLE_SPEED_THRESHOLD,
            speed,
            frame_age: 0,
        }
    }

    #[test]
    fn labeling_thresholds() {
        let pc = PointCloud::new(vec![RadarDetection::new(10.5, 0.2, 0.0, 0.0), RadarDetection::new(30.0, 0.0, 0.0, 0.0)]);
        let fast = label_detections(&pc, &[vehicle_box(3.0)], &[3.0]).unwrap();
        assert_eq!(fast.labels().unwrap(), vec![Label::Vehicle, Label::Static]);
        let slow = label_detections(&pc, &[vehicle_box(2.0)], &[2.0]).unwrap();
        assert_eq!(slow.labels().unwrap(), vec![Label::Static, Label::Static]);
        assert!(label_detections(&pc, &[vehicle_box(2.0)], &[]).is_err());
    }

    #[test]
    fn inflation_widens_box() {
        let b = vehicle_box(5.0);
        // Half width is 0.9, inflated 1.125.
        assert!(b.contains(10.0, 1.0));
        assert!(!b.contains(10.0, 1.2));
    }

    #[test]
    fn overlapping_boxes_pick_nearest_center() {
        let ped = BoundingBox {
            kind: ObjectKind::Pedestrian,
            center: [11.5, 0.0],
            extent: [0.5, 0.5],
            heading: 0.0,
            inflation: 1.25,
            dynamic: true,
            speed: 1.0,
            frame_age: 0,
        };
        let pc = PointCloud::new(vec![RadarDetection::new(11.4, 0.0, 0.0, 0.0), RadarDetection::new(10.2, 0.0, 0.0, 0.0)]);
        let out = label_detections(&pc, &[vehicle_box(5.0), ped], &[5.0, 1.0]).unwrap();
        assert_eq!(out.labels().unwrap(), vec![Label::Pedestrian, Label::Vehicle]);
    }

    #[test]
    fn wall_only_scene() {
        let spec = SceneSpec {
            walls: vec![WallSpec {
                start: [5.0, -3.0],
                end: [15.0, -3.0],
                points_per_frame: 10,
            }],
            ego_speed: 10.0,
            ..Default::default()
        };
        let scene = generate_scene(&spec).unwrap();
        assert_eq!(scene.frames.len(), 4);
        for f in &scene.frames {
            assert_eq!(f.len(), 10);
            assert!(f.points.iter().all(|p| p.label == Some(Label::Static)));
        }
    }

    #[test]
    fn static_points_have_zero_doppler_without_noise() {
        let spec = SceneSpec {
            walls: vec![WallSpec {
                start: [5.0, 3.0],
                end: [25.0, 3.0],
                points_per_frame: 20,
            }],
            objects: vec![ObjectSpec::new(ObjectKind::Vehicle, [20.0, -2.0], 0.3, 0.0)],
            clutter_density: 30.0,
            ego_speed: 12.0,
            yaw_rate: 0.2,
            doppler_noise: 0.0,
            position_noise: 0.0,
            ..Default::default()
        };
        let scene = generate_scene(&spec).unwrap();
        for f in &scene.frames {
            assert!(f.points.iter().all(|p| p.v_r == 0.0));
        }
    }

    #[test]
    fn ego_poses_end_at_identity_and_move_backwards() {
        let spec = SceneSpec {
            ego_speed: 10.0,
            ..Default::default()
        };
        let poses = spec.ego_poses();
        assert!(poses[3].is_identity(0.0));
        assert!((poses[0].tx + 3.0 * 10.0 * FRAME_INTERVAL).abs() < 1e-12);
    }

    #[test]
    fn moving_labels_inside_own_frame_boxes() {
        let cfg = SceneConfig::default();
        for scene in generate_scenes(&cfg, 10, 42).unwrap() {
            let acc = scene.accumulated().unwrap();
            for p in &acc.points {
                let Some(label) = p.label else { panic!("unlabeled point") };
                if label == Label::Static {
                    continue;
                }
                assert!(scene
                    .boxes
                    .iter()
                    .any(|b| b.frame_age == p.frame_age && b.kind.label() == label && b.dynamic && b.contains(p.x as f64, p.y as f64)));
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SceneConfig::default();
        assert_eq!(generate_scenes(&cfg, 3, 9).unwrap(), generate_scenes(&cfg, 3, 9).unwrap());
        assert_ne!(generate_scenes(&cfg, 1, 9).unwrap(), generate_scenes(&cfg, 1, 10).unwrap());
    }
}
