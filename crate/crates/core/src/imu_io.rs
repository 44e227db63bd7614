//! Trace data model and the on-disk dataset formats.
//!
//! * IMU CSV: header `t,gx,gy,gz,ax,ay,az`; seconds, rad/s, m/s²; body frame;
//!   accelerometer at rest reads +g along body +Z when level. Lines starting
//!   with `#` are comments.
//! * Orientation JSONL: one `{"t","w","x","y","z"}` object per line,
//!   scalar-first Hamilton quaternion mapping camera to world.
//! * Manifest JSON: `width, height, fps, t0, frames[], imu, orientations,
//!   ground_truth, convention`, paths relative to the manifest directory.
//!
//! All timestamps share one clock; frame `k` is taken at `t0 + k / fps`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equirect::{EquirectFrame, GeometryError};
use crate::quat::{UnitQuat, Vec3, UNIT_TOLERANCE};

/// Written into every manifest and orientation-trace descriptor.
pub const CONVENTION: &str =
    "quaternion=hamilton,scalar-first,active,camera-to-world; world=right-handed,z-up; \
     equirect=lon:2pi(u+0.5)/W-pi,lat:pi/2-pi(v+0.5)/H; accel-at-rest=+g on body +z";

pub const IMU_CSV_HEADER: [&str; 7] = ["t", "gx", "gy", "gz", "ax", "ay", "az"];

/// A recorded gap larger than this many nominal periods is rejected by the filter.
pub const MAX_GAP_PERIODS: f64 = 10.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("io: {0}")]
    Stream(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("trace is empty")]
    Empty,
    #[error("trace needs at least {required} samples, got {actual}")]
    TooShort { required: usize, actual: usize },
    #[error("timestamp {t} at index {index} does not increase")]
    NonMonotonic { index: usize, t: f64 },
    #[error("non-finite value in sample {index}")]
    NonFinite { index: usize },
    #[error("time {t} outside trace span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// rad/s, body frame.
    pub gyro: Vec3,
    /// m/s², body frame, includes the reaction to gravity.
    pub accel: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImuTrace {
    samples: Vec<ImuSample>,
    nominal_rate: f64,
}

impl ImuTrace {
    /// Validates ordering and finiteness. Without an explicit rate the
    /// nominal rate is the inverse of the median sample spacing.
    pub fn new(samples: Vec<ImuSample>, nominal_rate: Option<f64>) -> Result<Self, DataError> {
        if samples.is_empty() {
            return Err(DataError::Empty);
        }
        if samples.len() < 2 {
            return Err(DataError::TooShort {
                required: 2,
                actual: samples.len(),
            });
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.t.is_finite() && s.gyro.is_finite() && s.accel.is_finite()) {
                return Err(DataError::NonFinite { index: i });
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(DataError::NonMonotonic { index: i, t: s.t });
            }
        }
        let nominal_rate = match nominal_rate {
            Some(r) if r > 0.0 && r.is_finite() => r,
            Some(r) => return Err(DataError::Manifest(format!("nominal rate {r} must be positive"))),
            None => {
                let mut dts: Vec<f64> = samples.windows(2).map(|p| p[1].t - p[0].t).collect();
                dts.sort_by(f64::total_cmp);
                1.0 / dts[dts.len() / 2]
            }
        };
        Ok(Self {
            samples,
            nominal_rate,
        })
    }

    pub fn samples(&self) -> &[ImuSample] {
        &self.samples
    }

    pub fn nominal_rate(&self) -> f64 {
        self.nominal_rate
    }

    pub fn nominal_period(&self) -> f64 {
        1.0 / self.nominal_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples[self.samples.len() - 1].t - self.samples[0].t
    }

    /// Indices `i` where the spacing to sample `i - 1` exceeds the gap limit.
    pub fn gaps(&self) -> Vec<usize> {
        let limit = MAX_GAP_PERIODS * self.nominal_period();
        self.samples
            .windows(2)
            .enumerate()
            .filter(|(_, p)| p[1].t - p[0].t > limit)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

pub fn parse_imu_csv(source: impl Read) -> Result<ImuTrace, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(source);
    let csv_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        DataError::Parse {
            line,
            message: e.to_string(),
        }
    };
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.is_empty() {
        return Err(DataError::Empty);
    }
    if headers.iter().ne(IMU_CSV_HEADER) {
        return Err(DataError::Parse {
            line: reader.position().line().saturating_sub(1).max(1),
            message: format!("expected header `{}`, got `{}`", IMU_CSV_HEADER.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut samples: Vec<ImuSample> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut vals = [0.0f64; 7];
        for (slot, field) in vals.iter_mut().zip(record.iter()) {
            *slot = field.parse().map_err(|_| DataError::Parse {
                line,
                message: format!("`{field}` is not a number"),
            })?;
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Parse {
                line,
                message: "non-finite value".into(),
            });
        }
        if let Some(prev) = samples.last() {
            if vals[0] <= prev.t {
                return Err(DataError::Parse {
                    line,
                    message: format!("timestamp {} does not increase past {}", vals[0], prev.t),
                });
            }
        }
        samples.push(ImuSample {
            t: vals[0],
            gyro: Vec3::new(vals[1], vals[2], vals[3]),
            accel: Vec3::new(vals[4], vals[5], vals[6]),
        });
    }
    ImuTrace::new(samples, None)
}

pub fn write_imu_csv(trace: &ImuTrace, mut sink: impl Write) -> Result<(), DataError> {
    writeln!(sink, "# t [s]; gyro gx,gy,gz [rad/s]; accel ax,ay,az [m/s^2]; body frame")?;
    writeln!(sink, "# accelerometer at rest reads +g along body +z when level")?;
    writeln!(sink, "{}", IMU_CSV_HEADER.join(","))?;
    for s in &trace.samples {
        writeln!(
            sink,
            "{},{},{},{},{},{},{}",
            s.t, s.gyro.x, s.gyro.y, s.gyro.z, s.accel.x, s.accel.y, s.accel.z
        )?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_imu_csv(path: &Path) -> Result<ImuTrace, DataError> {
    let f = File::open(path).map_err(|e| DataError::io(path, e))?;
    parse_imu_csv(BufReader::new(f))
}

pub fn save_imu_csv(trace: &ImuTrace, path: &Path) -> Result<(), DataError> {
    let f = File::create(path).map_err(|e| DataError::io(path, e))?;
    write_imu_csv(trace, BufWriter::new(f))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationSample {
    pub t: f64,
    pub q: UnitQuat,
}

/// Timestamped orientations, strictly increasing in time and sign-continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationTrace {
    entries: Vec<OrientationSample>,
    pub frame_convention: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrientationRecord {
    t: f64,
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl OrientationTrace {
    /// Rejects empty or non-increasing input; flips any entry whose dot
    /// product with its predecessor is negative.
    pub fn new(mut entries: Vec<OrientationSample>) -> Result<Self, DataError> {
        if entries.is_empty() {
            return Err(DataError::Empty);
        }
        for i in 0..entries.len() {
            if !entries[i].t.is_finite() {
                return Err(DataError::NonFinite { index: i });
            }
            if i > 0 {
                if entries[i].t <= entries[i - 1].t {
                    return Err(DataError::NonMonotonic {
                        index: i,
                        t: entries[i].t,
                    });
                }
                if entries[i].q.dot(entries[i - 1].q) < 0.0 {
                    entries[i].q = -entries[i].q;
                }
            }
        }
        Ok(Self {
            entries,
            frame_convention: CONVENTION.to_string(),
        })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, UnitQuat)>) -> Result<Self, DataError> {
        Self::new(pairs.into_iter().map(|(t, q)| OrientationSample { t, q }).collect())
    }

    pub fn entries(&self) -> &[OrientationSample] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.entries[0].t
    }

    pub fn end(&self) -> f64 {
        self.entries[self.entries.len() - 1].t
    }

    /// Mean entry spacing; zero for a single-entry trace.
    pub fn nominal_period(&self) -> f64 {
        if self.entries.len() < 2 {
            0.0
        } else {
            (self.end() - self.start()) / (self.entries.len() - 1) as f64
        }
    }

    /// Orientation at time `t`, slerped between the bracketing entries.
    /// Times up to one nominal period outside the span clamp to the endpoint.
    pub fn orientation_at(&self, t: f64) -> Result<UnitQuat, DataError> {
        let margin = self.nominal_period();
        let (start, end) = (self.start(), self.end());
        if !(t >= start - margin && t <= end + margin) {
            return Err(DataError::OutOfRange { t, start, end });
        }
        if t <= start {
            return Ok(self.entries[0].q);
        }
        if t >= end {
            return Ok(self.entries[self.entries.len() - 1].q);
        }
        let i = self.entries.partition_point(|e| e.t <= t);
        let (a, b) = (self.entries[i - 1], self.entries[i]);
        if t == a.t {
            return Ok(a.q);
        }
        Ok(a.q.slerp(b.q, (t - a.t) / (b.t - a.t)))
    }

    pub fn write_jsonl(&self, mut sink: impl Write) -> Result<(), DataError> {
        for e in &self.entries {
            let rec = OrientationRecord {
                t: e.t,
                w: e.q.w(),
                x: e.q.x(),
                y: e.q.y(),
                z: e.q.z(),
            };
            serde_json::to_writer(&mut sink, &rec).map_err(std::io::Error::from)?;
            sink.write_all(b"\n")?;
        }
        sink.flush()?;
        Ok(())
    }

    pub fn read_jsonl(source: impl Read) -> Result<Self, DataError> {
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(source).lines().enumerate() {
            let line_no = i as u64 + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let rec: OrientationRecord = serde_json::from_str(line).map_err(|e| DataError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let q = UnitQuat::new(rec.w, rec.x, rec.y, rec.z).map_err(|e| DataError::Parse {
                line: line_no,
                message: format!("{e} (tolerance {UNIT_TOLERANCE})"),
            })?;
            if let Some(OrientationSample { t: prev, .. }) = entries.last() {
                if rec.t <= *prev {
                    return Err(DataError::Parse {
                        line: line_no,
                        message: format!("timestamp {} does not increase past {prev}", rec.t),
                    });
                }
            }
            entries.push(OrientationSample { t: rec.t, q });
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let f = File::open(path).map_err(|e| DataError::io(path, e))?;
        Self::read_jsonl(f)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let f = File::create(path).map_err(|e| DataError::io(path, e))?;
        self.write_jsonl(BufWriter::new(f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameManifest {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub t0: f64,
    pub frames: Vec<String>,
    pub imu: Option<String>,
    pub orientations: Option<String>,
    pub ground_truth: Option<String>,
    pub convention: String,
}

impl FrameManifest {
    pub fn new(width: u32, height: u32, fps: f64, t0: f64, frames: Vec<String>) -> Self {
        Self {
            width,
            height,
            fps,
            t0,
            frames,
            imu: None,
            orientations: None,
            ground_truth: None,
            convention: CONVENTION.to_string(),
        }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_time(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.fps
    }

    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    fn validate_shape(&self) -> Result<(), DataError> {
        if self.frames.is_empty() {
            return Err(DataError::Manifest("no frames".into()));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(DataError::Manifest(format!("fps {} must be positive", self.fps)));
        }
        if !self.t0.is_finite() {
            return Err(DataError::Manifest("t0 must be finite".into()));
        }
        if self.height == 0 || self.width != 2 * self.height {
            return Err(GeometryError::AspectRatio {
                width: self.width,
                height: self.height,
            }
            .into());
        }
        Ok(())
    }
}

/// A manifest bound to the directory it was loaded from.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: FrameManifest,
    root: PathBuf,
}

impl Dataset {
    pub fn new(manifest: FrameManifest, root: impl Into<PathBuf>) -> Self {
        Self {
            manifest,
            root: root.into(),
        }
    }

    /// Loads `manifest.json` (or the given file) and checks that every
    /// referenced file exists.
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let manifest_path = if path.is_dir() {
            path.join("manifest.json")
        } else {
            path.to_path_buf()
        };
        let bytes = std::fs::read(&manifest_path).map_err(|e| DataError::io(&manifest_path, e))?;
        let manifest: FrameManifest =
            serde_json::from_slice(&bytes).map_err(|e| DataError::Manifest(e.to_string()))?;
        manifest.validate_shape()?;
        let root = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let ds = Self { manifest, root };
        let refs = ds
            .manifest
            .frames
            .iter()
            .chain(ds.manifest.imu.iter())
            .chain(ds.manifest.orientations.iter())
            .chain(ds.manifest.ground_truth.iter());
        for r in refs {
            let p = ds.resolve(r);
            if !p.is_file() {
                return Err(DataError::Manifest(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(ds)
    }

    pub fn save_manifest(&self) -> Result<(), DataError> {
        self.manifest.validate_shape()?;
        let path = self.manifest_path();
        let json = serde_json::to_vec_pretty(&self.manifest).map_err(std::io::Error::from)?;
        std::fs::write(&path, json).map_err(|e| DataError::io(&path, e))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn frame_path(&self, k: usize) -> PathBuf {
        self.resolve(&self.manifest.frames[k])
    }

    pub fn load_frame(&self, k: usize) -> Result<EquirectFrame, DataError> {
        let frame = load_frame(&self.frame_path(k), self.manifest.frame_time(k))?;
        if (frame.width(), frame.height()) != (self.manifest.width, self.manifest.height) {
            return Err(DataError::Manifest(format!(
                "frame {k} is {}x{}, manifest says {}x{}",
                frame.width(),
                frame.height(),
                self.manifest.width,
                self.manifest.height
            )));
        }
        Ok(frame)
    }

    fn optional(&self, field: &Option<String>, name: &str) -> Result<PathBuf, DataError> {
        field
            .as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| DataError::Manifest(format!("manifest has no `{name}` entry")))
    }

    pub fn imu(&self) -> Result<ImuTrace, DataError> {
        read_imu_csv(&self.optional(&self.manifest.imu, "imu")?)
    }

    pub fn orientations(&self) -> Result<OrientationTrace, DataError> {
        OrientationTrace::load(&self.optional(&self.manifest.orientations, "orientations")?)
    }

    pub fn ground_truth(&self) -> Result<OrientationTrace, DataError> {
        OrientationTrace::load(&self.optional(&self.manifest.ground_truth, "ground_truth")?)
    }
}

/// Conventional frame file name for index `k`.
pub fn frame_file_name(k: usize) -> String {
    format!("frame_{k:06}.png")
}

pub fn load_frame(path: &Path, timestamp: f64) -> Result<EquirectFrame, DataError> {
    let img = image::open(path).map_err(|e| DataError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(EquirectFrame::from_image(img.into_rgb8(), timestamp)?)
}

pub fn save_frame(frame: &EquirectFrame, path: &Path) -> Result<(), DataError> {
    save_rgb_png(frame.width(), frame.height(), frame.pixels(), path)
}

pub fn save_rgb_png(width: u32, height: u32, pixels: &[u8], path: &Path) -> Result<(), DataError> {
    image::save_buffer_with_format(path, pixels, width, height, image::ColorType::Rgb8, image::ImageFormat::Png)
        .map_err(|e| DataError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}
