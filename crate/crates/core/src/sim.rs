//! Synthetic ground truth: waypoint trajectories, IMU synthesis, an analytic
//! test scene and complete on-disk datasets.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equirect::{EquirectFrame, EquirectGrid, GeometryError, Rgb};
use crate::filter::STANDARD_GRAVITY;
use crate::imu_io::{self, DataError, Dataset, FrameManifest, ImuSample, ImuTrace, OrientationTrace};
use crate::quat::{UnitQuat, Vec3};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
    #[error("requested duration {requested} s is shorter than the {required} s traversal")]
    Infeasible { requested: f64, required: f64 },
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("invalid noise model: {0}")]
    Noise(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    /// meters, world frame
    pub position: Vec3,
    pub orientation: UnitQuat,
    /// Dwell on arrival, seconds.
    #[serde(default)]
    pub pause: f64,
}

impl Waypoint {
    pub fn new(position: Vec3, orientation: UnitQuat, pause: f64) -> Self {
        Self {
            position,
            orientation,
            pause,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    pub waypoints: Vec<Waypoint>,
    /// Cruise speed, m/s.
    pub speed: f64,
    /// Maximum linear acceleration magnitude, m/s².
    pub accel_limit: f64,
    /// Upper bound on the constant per-segment angular rate, rad/s. Only
    /// binds on segments that rotate a lot over a short distance.
    pub max_angular_rate: f64,
    /// IMU and ground-truth rate, Hz.
    pub sample_rate: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self::demo()
    }
}

fn rot(axis: Vec3, degrees: f64) -> UnitQuat {
    UnitQuat::from_axis_angle(axis, degrees.to_radians()).expect("non-zero axis")
}

impl TrajectorySpec {
    /// Representative six-waypoint path: 0.1 m/s cruise, 0.05 m/s² ramps,
    /// 5 s dwell at every waypoint, 280 s end to end. Waypoint 3 is upside
    /// down relative to the start.
    pub fn demo() -> Self {
        let p = |x, y, z| Vec3::new(x, y, z);
        let start = Waypoint::new(p(0.0, 0.0, 0.0), UnitQuat::IDENTITY, 0.0);
        let stops = [
            (p(3.9486, 0.0, 0.7897), rot(Vec3::Z, 60.0)),
            (p(3.9486, 3.9486, 1.5795), rot(Vec3::Z, 120.0) * rot(Vec3::Y, -30.0)),
            (p(0.0, 3.9486, 0.7897), rot(Vec3::X, 180.0)),
            (p(0.0, 0.0, 1.5795), rot(Vec3::Z, -45.0) * rot(Vec3::X, 40.0)),
            (p(3.9486, 1.9743, 2.3692), rot(Vec3::Y, 45.0)),
            (p(1.9743, 0.0, 0.7897), rot(Vec3::Z, 150.0)),
        ];
        let mut waypoints = vec![start];
        waypoints.extend(stops.iter().map(|&(pos, q)| Waypoint::new(pos, q, 5.0)));
        Self {
            waypoints,
            speed: 0.1,
            accel_limit: 0.05,
            max_angular_rate: 0.5,
            sample_rate: 100.0,
        }
    }

    /// Rotation-only path about several axes, including a pass through the
    /// upside-down orientation. About 30 s long.
    pub fn pure_rotation() -> Self {
        let o = Vec3::ZERO;
        let qs = [
            UnitQuat::IDENTITY,
            rot(Vec3::Z, 90.0),
            rot(Vec3::Z, 90.0) * rot(Vec3::X, 60.0),
            rot(Vec3::X, 180.0),
            rot(Vec3::new(1.0, 1.0, 0.0), -70.0),
            rot(Vec3::Y, 45.0) * rot(Vec3::Z, -120.0),
        ];
        Self {
            waypoints: qs.iter().map(|&q| Waypoint::new(o, q, 0.0)).collect(),
            speed: 0.1,
            accel_limit: 0.05,
            max_angular_rate: 0.4,
            sample_rate: 100.0,
        }
    }

    /// Two coincident waypoints: a fixed pose for the whole duration.
    pub fn stationary() -> Self {
        let w = Waypoint::new(Vec3::ZERO, UnitQuat::IDENTITY, 0.0);
        Self {
            waypoints: vec![w, w],
            ..Self::demo()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Trajectory(m));
        if self.waypoints.len() < 2 {
            return bad(format!("need at least 2 waypoints, got {}", self.waypoints.len()));
        }
        for (name, v) in [
            ("speed", self.speed),
            ("accel_limit", self.accel_limit),
            ("max_angular_rate", self.max_angular_rate),
            ("sample_rate", self.sample_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if !(w.pause >= 0.0 && w.pause.is_finite()) {
                return bad(format!("waypoint {i} has negative pause"));
            }
            if !w.position.is_finite() {
                return bad(format!("waypoint {i} has a non-finite position"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    /// Camera-to-world.
    pub orientation: UnitQuat,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        position: Vec3::ZERO,
        orientation: UnitQuat::IDENTITY,
    };
}

/// Speed profile over one straight segment: ramp at `accel` to `peak`,
/// cruise, ramp down, lasting exactly `duration`.
#[derive(Debug, Clone, Copy)]
struct Trapezoid {
    length: f64,
    peak: f64,
    accel: f64,
    duration: f64,
}

impl Trapezoid {
    /// Shortest traversal under the speed and acceleration limits.
    fn min_duration(length: f64, speed: f64, accel: f64) -> f64 {
        if length <= 0.0 {
            0.0
        } else if length >= speed * speed / accel {
            length / speed + speed / accel
        } else {
            2.0 * (length / accel).sqrt()
        }
    }

    /// Profile with full-rate ramps that takes `duration ≥ min_duration`.
    fn stretched(length: f64, accel: f64, duration: f64) -> Self {
        let peak = if length <= 0.0 {
            0.0
        } else {
            let at = accel * duration;
            let disc = (at * at - 4.0 * accel * length).max(0.0);
            0.5 * (at - disc.sqrt())
        };
        Self {
            length,
            peak,
            accel,
            duration,
        }
    }

    /// Distance covered after `tau` seconds.
    fn distance(&self, tau: f64) -> f64 {
        if self.length <= 0.0 || self.duration <= 0.0 {
            return 0.0;
        }
        let tau = tau.clamp(0.0, self.duration);
        let ramp = self.peak / self.accel;
        if tau <= ramp {
            0.5 * self.accel * tau * tau
        } else if tau >= self.duration - ramp {
            let r = self.duration - tau;
            self.length - 0.5 * self.accel * r * r
        } else {
            0.5 * self.accel * ramp * ramp + self.peak * (tau - ramp)
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Hold { pose: Pose, duration: f64 },
    Move { from: Pose, to: Pose, profile: Trapezoid },
}

impl Piece {
    fn duration(&self) -> f64 {
        match self {
            Piece::Hold { duration, .. } => *duration,
            Piece::Move { profile, .. } => profile.duration,
        }
    }

    fn pose_at(&self, tau: f64) -> Pose {
        match *self {
            Piece::Hold { pose, .. } => pose,
            Piece::Move { from, to, profile } => {
                let d = to.position - from.position;
                let frac = if profile.length > 0.0 {
                    profile.distance(tau) / profile.length
                } else {
                    0.0
                };
                let s = if profile.duration > 0.0 {
                    (tau / profile.duration).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                Pose {
                    position: from.position + d * frac,
                    orientation: from.orientation.slerp(to.orientation, s),
                }
            }
        }
    }
}

/// Analytic piecewise trajectory: straight moves with trapezoidal speed and
/// constant-rate slerped orientation, with dwells at waypoints.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pieces: Vec<(f64, Piece)>,
    duration: f64,
    sample_rate: f64,
}

/// Builds the trajectory. A requested `duration` longer than the traversal
/// holds the final pose; a shorter one is an error.
pub fn generate_trajectory(spec: &TrajectorySpec, duration: Option<f64>) -> Result<Trajectory, SimError> {
    spec.validate()?;
    let mut pieces = Vec::new();
    let mut t = 0.0;
    let pose_of = |w: &Waypoint| Pose {
        position: w.position,
        orientation: w.orientation,
    };
    let push = |pieces: &mut Vec<(f64, Piece)>, t: &mut f64, piece: Piece| {
        if piece.duration() > 0.0 {
            pieces.push((*t, piece));
            *t += piece.duration();
        }
    };
    let first = &spec.waypoints[0];
    push(&mut pieces, &mut t, Piece::Hold {
        pose: pose_of(first),
        duration: first.pause,
    });
    for pair in spec.waypoints.windows(2) {
        let (a, b) = (pose_of(&pair[0]), pose_of(&pair[1]));
        let length = (b.position - a.position).norm();
        let angle = a.orientation.geodesic_distance(b.orientation);
        let dur = Trapezoid::min_duration(length, spec.speed, spec.accel_limit).max(angle / spec.max_angular_rate);
        push(&mut pieces, &mut t, Piece::Move {
            from: a,
            to: b,
            profile: Trapezoid::stretched(length, spec.accel_limit, dur),
        });
        push(&mut pieces, &mut t, Piece::Hold {
            pose: b,
            duration: pair[1].pause,
        });
    }
    let required = t;
    let last = pose_of(spec.waypoints.last().expect("validated"));
    if let Some(d) = duration {
        if !(d.is_finite()) || d < required - 1e-9 {
            return Err(SimError::Infeasible { requested: d, required });
        }
        push(&mut pieces, &mut t, Piece::Hold {
            pose: last,
            duration: d - required,
        });
    }
    if pieces.is_empty() {
        pieces.push((0.0, Piece::Hold { pose: last, duration: 0.0 }));
    }
    Ok(Trajectory {
        pieces,
        duration: t,
        sample_rate: spec.sample_rate,
    })
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn pose_at(&self, t: f64) -> Pose {
        let i = self.pieces.partition_point(|(start, _)| *start <= t).max(1) - 1;
        let (start, piece) = self.pieces[i];
        piece.pose_at(t - start)
    }

    /// Poses at `sample_rate` from `0` to `t_end` (default: the end).
    pub fn sample(&self, t_end: Option<f64>) -> PoseTrace {
        let end = t_end.unwrap_or(self.duration).min(self.duration);
        let n = (end * self.sample_rate + 1e-9).floor() as usize + 1;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / self.sample_rate;
                (t, self.pose_at(t))
            })
            .collect();
        PoseTrace { samples }
    }
}

/// Uniformly sampled ground-truth poses.
#[derive(Debug, Clone)]
pub struct PoseTrace {
    pub samples: Vec<(f64, Pose)>,
}

impl PoseTrace {
    pub fn orientation_trace(&self) -> OrientationTrace {
        OrientationTrace::from_pairs(self.samples.iter().map(|(t, p)| (*t, p.orientation)))
            .expect("uniform sampling is strictly increasing")
    }
}

/// IMU error model. When `gyro_bias` is absent a constant bias is drawn
/// uniformly from `±DEFAULT_BIAS_RANGE` per axis using `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Per-sample white noise standard deviation, rad/s.
    pub gyro_sigma: f64,
    pub gyro_bias: Option<Vec3>,
    /// Per-sample white noise standard deviation, m/s².
    pub accel_sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub const DEFAULT_GYRO_SIGMA: f64 = 0.005;
    pub const DEFAULT_BIAS_RANGE: f64 = 0.002;
    pub const DEFAULT_ACCEL_SIGMA: f64 = 0.05;

    pub fn none() -> Self {
        Self {
            gyro_sigma: 0.0,
            gyro_bias: Some(Vec3::ZERO),
            accel_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.gyro_sigma >= 0.0 && self.accel_sigma >= 0.0) {
            return Err(SimError::Noise("sigmas must be >= 0".into()));
        }
        if let Some(b) = self.gyro_bias {
            if !b.is_finite() {
                return Err(SimError::Noise("gyro bias must be finite".into()));
            }
        }
        Ok(())
    }

    /// The bias actually applied: explicit, or drawn from the seed.
    pub fn resolved_bias(&self) -> Vec3 {
        self.gyro_bias.unwrap_or_else(|| {
            // separate stream from the per-sample noise
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
            let r = Self::DEFAULT_BIAS_RANGE;
            Vec3::new(rng.random_range(-r..=r), rng.random_range(-r..=r), rng.random_range(-r..=r))
        })
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            gyro_sigma: Self::DEFAULT_GYRO_SIGMA,
            gyro_bias: None,
            accel_sigma: Self::DEFAULT_ACCEL_SIGMA,
            seed: 0,
        }
    }
}

/// Body-frame IMU readings consistent with the pose trace.
///
/// Angular rate at sample `i` is the logarithm of the relative rotation from
/// sample `i − 1` divided by the spacing (forward difference at `i = 0`), so
/// exact integration over each interval reproduces the ground truth.
/// Linear acceleration is the second central difference of position.
pub fn synthesize_imu(poses: &PoseTrace, noise: &NoiseModel) -> Result<ImuTrace, SimError> {
    noise.validate()?;
    let s = &poses.samples;
    if s.len() < 2 {
        return Err(SimError::Trajectory("need at least 2 pose samples".into()));
    }
    let bias = noise.resolved_bias();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let draw = |sigma: f64, rng: &mut ChaCha8Rng| {
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        Vec3::new(x, y, z) * sigma
    };
    let gravity_reaction = Vec3::new(0.0, 0.0, STANDARD_GRAVITY);
    let n = s.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (t, pose) = s[i];
        let (a, b) = if i == 0 { (0, 1) } else { (i - 1, i) };
        let dt = s[b].0 - s[a].0;
        let rel = s[a].1.orientation.inverse() * s[b].1.orientation;
        let gyro = rel.to_rotation_vector() * (1.0 / dt);

        let lin = if n >= 3 {
            let c = i.clamp(1, n - 2);
            let (t0, t1, t2) = (s[c - 1].0, s[c].0, s[c + 1].0);
            let (p0, p1, p2) = (s[c - 1].1.position, s[c].1.position, s[c + 1].1.position);
            let v01 = (p1 - p0) * (1.0 / (t1 - t0));
            let v12 = (p2 - p1) * (1.0 / (t2 - t1));
            (v12 - v01) * (2.0 / (t2 - t0))
        } else {
            Vec3::ZERO
        };
        let accel = pose.orientation.inverse().rotate(lin + gravity_reaction);

        let gyro = gyro + bias + draw(noise.gyro_sigma, &mut rng);
        let accel = accel + draw(noise.accel_sigma, &mut rng);
        out.push(ImuSample { t, gyro, accel });
    }
    Ok(ImuTrace::new(out, None)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// 15° latitude/longitude lines over a direction-tinted background.
    LatlongGrid,
    /// Plain direction-tinted background; pairs with [`SceneSpec::cardinal_markers`].
    CardinalMarkers,
    /// Color varies with longitude only.
    Stripes,
}

/// A colored disc on the sphere.
///
/// Direction markers have a fixed angular `radius` (rad). Position markers
/// are balls of physical `size` (m) whose angular radius follows the
/// small-angle rule `size / distance` from the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Marker {
    Direction { direction: Vec3, radius: f64, color: Rgb },
    Position { position: Vec3, size: f64, color: Rgb },
}

impl Marker {
    fn color(&self) -> Rgb {
        match *self {
            Marker::Direction { color, .. } | Marker::Position { color, .. } => color,
        }
    }

    /// `(bearing, angular radius)` seen from `eye`, if visible.
    pub fn apparent(&self, eye: Vec3) -> Option<(Vec3, f64)> {
        match *self {
            Marker::Direction { direction, radius, .. } => Some((direction.normalized()?, radius)),
            Marker::Position { position, size, .. } => {
                let off = position - eye;
                let dist = off.norm();
                Some((off.normalized()?, size / dist))
            }
        }
    }
}

/// A marker as seen from one camera position.
struct Disc {
    bearing: Vec3,
    radius: f64,
    cos_reach: f64,
    color: Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub pattern: Pattern,
    pub markers: Vec<Marker>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            pattern: Pattern::LatlongGrid,
            markers: Self::cardinal_marker_table(),
        }
    }
}

/// Angular width of soft edges, about two pixels at 640×320.
const EDGE: f64 = 0.02;
/// Grid line spacing and Gaussian line half-width.
const GRID_SPACING: f64 = PI / 12.0;
const GRID_SIGMA: f64 = 0.0175;
/// Beyond six sigma the line contributes nothing visible.
const GRID_CUTOFF: f64 = 6.0 * GRID_SIGMA;

impl SceneSpec {
    /// Marker colors for ±X, ±Y, ±Z.
    pub const CARDINAL_COLORS: [(Vec3, Rgb); 6] = [
        (Vec3::X, [230, 30, 30]),
        (Vec3::new(-1.0, 0.0, 0.0), [30, 220, 220]),
        (Vec3::Y, [30, 200, 40]),
        (Vec3::new(0.0, -1.0, 0.0), [220, 40, 220]),
        (Vec3::Z, [40, 60, 230]),
        (Vec3::new(0.0, 0.0, -1.0), [235, 215, 30]),
    ];

    pub fn cardinal_marker_table() -> Vec<Marker> {
        Self::CARDINAL_COLORS
            .iter()
            .map(|&(direction, color)| Marker::Direction {
                direction,
                radius: 10f64.to_radians(),
                color,
            })
            .collect()
    }

    pub fn cardinal_markers() -> Self {
        Self {
            pattern: Pattern::CardinalMarkers,
            markers: Self::cardinal_marker_table(),
        }
    }

    pub fn latlong_grid() -> Self {
        Self {
            pattern: Pattern::LatlongGrid,
            markers: Vec::new(),
        }
    }

    pub fn stripes() -> Self {
        Self {
            pattern: Pattern::Stripes,
            markers: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (i, m) in self.markers.iter().enumerate() {
            let ok = match *m {
                Marker::Direction { direction, radius, .. } => {
                    direction.normalized().is_some() && radius > 0.0 && radius < PI
                }
                Marker::Position { position, size, .. } => position.is_finite() && size > 0.0,
            };
            if !ok {
                return Err(SimError::Scene(format!("marker {i} is degenerate")));
            }
            if self.markers[..i].iter().any(|o| o.color() == m.color()) {
                return Err(SimError::Scene(format!("marker {i} repeats a color")));
            }
        }
        Ok(())
    }

    fn background(&self, d: Vec3) -> [f64; 3] {
        let tint = [128.0 + 60.0 * d.x, 128.0 + 60.0 * d.y, 128.0 + 60.0 * d.z];
        match self.pattern {
            Pattern::CardinalMarkers => tint,
            Pattern::LatlongGrid => {
                let horizontal = d.x.hypot(d.y);
                let lat = d.z.atan2(horizontal);
                let lon = d.y.atan2(d.x);
                let lat_off = lat - (lat / GRID_SPACING).round() * GRID_SPACING;
                let lon_off = lon - (lon / GRID_SPACING).round() * GRID_SPACING;
                // angular distance to the nearest parallel / meridian plane
                let to_parallel = lat_off.abs();
                let to_meridian = (horizontal * lon_off.sin()).abs().min(1.0).asin();
                let line = |x: f64| {
                    if x > GRID_CUTOFF {
                        0.0
                    } else {
                        (-0.5 * (x / GRID_SIGMA).powi(2)).exp()
                    }
                };
                let ink = line(to_parallel).max(line(to_meridian));
                tint.map(|c| c * (1.0 - 0.7 * ink))
            }
            Pattern::Stripes => {
                let lon = d.y.atan2(d.x);
                [
                    128.0 + 90.0 * lon.cos(),
                    128.0 + 90.0 * lon.sin(),
                    128.0 + 80.0 * (8.0 * lon).sin(),
                ]
            }
        }
    }

    /// Color seen along world direction `d` from camera position `eye`.
    /// The nearest marker (relative to its radius) wins.
    pub fn color(&self, d: Vec3, eye: Vec3) -> Rgb {
        let discs = self.discs(eye);
        self.color_with(d, &discs)
    }

    fn discs(&self, eye: Vec3) -> Vec<Disc> {
        self.markers
            .iter()
            .filter_map(|m| {
                let (bearing, radius) = m.apparent(eye)?;
                Some(Disc {
                    bearing,
                    radius,
                    cos_reach: (radius + 0.5 * EDGE).min(PI).cos(),
                    color: m.color(),
                })
            })
            .collect()
    }

    fn color_with(&self, d: Vec3, discs: &[Disc]) -> Rgb {
        let mut c = self.background(d);
        // no disc reaches d: every blend weight would be zero
        let touched = discs.iter().any(|m| d.dot(m.bearing) > m.cos_reach);
        let best = discs
            .iter()
            .filter(|_| touched)
            .map(|m| {
                let ang = d.cross(m.bearing).norm().atan2(d.dot(m.bearing));
                (ang / m.radius, ang, m.radius, m.color)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, ang, r, mc)) = best {
            let alpha = ((r - ang) / EDGE + 0.5).clamp(0.0, 1.0);
            for k in 0..3 {
                c[k] = c[k] * (1.0 - alpha) + mc[k] as f64 * alpha;
            }
        }
        c.map(|v| (v + 0.5).floor().clamp(0.0, 255.0) as u8)
    }
}

/// Renders the scene seen by a camera at `pose`.
pub fn render_scene(scene: &SceneSpec, pose: &Pose, width: u32, height: u32) -> Result<EquirectFrame, SimError> {
    let grid = EquirectGrid::new(width, height)?;
    render_with_grid(scene, pose, &grid)
}

fn render_with_grid(scene: &SceneSpec, pose: &Pose, grid: &EquirectGrid) -> Result<EquirectFrame, SimError> {
    let (w, h) = grid.dimensions();
    let discs = scene.discs(pose.position);
    Ok(EquirectFrame::from_fn(w, h, |u, v| {
        let d_world = pose.orientation.rotate(grid.direction(u, v));
        scene.color_with(d_world, &discs)
    })?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub trajectory: TrajectorySpec,
    pub scene: SceneSpec,
    pub noise: NoiseModel,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    /// Dataset length in seconds. Longer than the traversal holds the final
    /// pose; shorter keeps the leading part of the trajectory.
    pub duration: Option<f64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            trajectory: TrajectorySpec::demo(),
            scene: SceneSpec::default(),
            noise: NoiseModel::default(),
            width: 640,
            height: 320,
            fps: 10.0,
            duration: None,
        }
    }
}

impl DatasetConfig {
    /// Camera resolution and frame rate of the recorded footage.
    pub const FULL_WIDTH: u32 = 3840;
    pub const FULL_HEIGHT: u32 = 1920;
    pub const FULL_FPS: f64 = 29.97;
}

/// Writes a complete dataset into `out_dir`: PNG frames, IMU CSV,
/// ground-truth JSONL and the manifest.
pub fn generate_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<Dataset, SimError> {
    config.scene.validate()?;
    config.noise.validate()?;
    if !(config.fps > 0.0 && config.fps.is_finite()) {
        return Err(SimError::Trajectory(format!("fps {} must be positive", config.fps)));
    }
    let natural = generate_trajectory(&config.trajectory, None)?;
    let traj = match config.duration {
        Some(d) if d > natural.duration() => generate_trajectory(&config.trajectory, Some(d))?,
        _ => natural,
    };
    let span = config.duration.unwrap_or(traj.duration()).min(traj.duration());
    let poses = traj.sample(Some(span));
    let imu = synthesize_imu(&poses, &config.noise)?;
    let truth = poses.orientation_trace();
    let grid = EquirectGrid::new(config.width, config.height)?;

    let frames_dir = out_dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| DataError::io(&frames_dir, e))?;
    let n_frames = (span * config.fps * (1.0 + 1e-12)).floor() as usize + 1;
    let names: Vec<String> = (0..n_frames)
        .map(|k| format!("frames/{}", imu_io::frame_file_name(k)))
        .collect();
    names.par_iter().enumerate().try_for_each(|(k, name)| {
        let pose = traj.pose_at(k as f64 / config.fps);
        let frame = render_with_grid(&config.scene, &pose, &grid)?;
        imu_io::save_frame(&frame, &out_dir.join(name))?;
        Ok::<_, SimError>(())
    })?;

    imu_io::save_imu_csv(&imu, &out_dir.join("imu.csv"))?;
    truth.save(&out_dir.join("ground_truth.jsonl"))?;
    let mut manifest = FrameManifest::new(config.width, config.height, config.fps, 0.0, names);
    manifest.imu = Some("imu.csv".into());
    manifest.ground_truth = Some("ground_truth.jsonl".into());
    let ds = Dataset::new(manifest, out_dir);
    ds.save_manifest()?;
    Ok(ds)
}

/// World direction of the point at latitude/longitude, for scene authoring.
pub fn direction_from_lat_lon(lat: f64, lon: f64) -> Vec3 {
    let lat = lat.clamp(-FRAC_PI_2, FRAC_PI_2);
    Vec3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin())
}
