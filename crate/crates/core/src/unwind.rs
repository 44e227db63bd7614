//! Rotation unwinding.
//!
//! The unwound camera frame is coupled to the camera: absent correction it
//! carries the camera orientation `q_C`. Each step multiplies it by the
//! inverse of the estimated camera orientation,
//!
//! ```text
//! q_U,k := q_U,k · q̂_C,k⁻¹
//! ```
//!
//! so a perfect estimate keeps `q_U` at the identity and the viewer only
//! sees rotations caused by their own head motion. In image space the same
//! correction resamples frame `k` along `q̂_C,k⁻¹`, giving a world-aligned
//! panorama.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equirect::{EquirectFrame, EquirectGrid, Execution, ViewMode, ViewerPose, ViewportRenderer, ViewportSpec};
use crate::imu_io::{DataError, Dataset, FrameManifest, OrientationTrace};
use crate::quat::UnitQuat;

#[derive(Debug, Error)]
pub enum UnwindError {
    #[error("orientation trace does not cover frame {frame} at t = {t}")]
    FrameCoverage { frame: usize, t: f64 },
    #[error("truth trace does not cover estimate at t = {t}")]
    TruthCoverage { t: f64 },
    #[error("head trace does not cover frame {frame} at t = {t}")]
    HeadCoverage { frame: usize, t: f64 },
    #[error("unwound mode needs a camera orientation trace")]
    MissingOrientations,
    #[error("head trace is empty")]
    EmptyHeadTrace,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Geometry(#[from] crate::equirect::GeometryError),
}

/// Orientation of the unwound camera frame relative to the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnwindState {
    pub q_u: UnitQuat,
    pub k: u64,
}

impl Default for UnwindState {
    fn default() -> Self {
        Self {
            q_u: UnitQuat::IDENTITY,
            k: 0,
        }
    }
}

impl UnwindState {
    /// Camera rotation propagates into the coupled unwound frame.
    pub fn couple(self, q_camera: UnitQuat) -> Self {
        Self { q_u: q_camera, ..self }
    }

    /// Applies the correction for step `k` and advances the step index.
    pub fn unwind(self, q_estimate: UnitQuat) -> Self {
        Self {
            q_u: self.q_u * q_estimate.inverse(),
            k: self.k + 1,
        }
    }

    /// Couples to the camera, then corrects with the estimate.
    pub fn step(self, q_camera: UnitQuat, q_estimate: UnitQuat) -> Self {
        self.couple(q_camera).unwind(q_estimate)
    }
}

/// Per-step closed form `q_U = q_C · q̂_C⁻¹`: identity for a perfect
/// estimate, otherwise the residual estimation error.
pub fn unwind_step(q_camera: UnitQuat, q_estimate: UnitQuat) -> UnitQuat {
    q_camera * q_estimate.inverse()
}

/// Camera orientation at every frame time, or the first uncovered frame.
pub fn frame_orientations(manifest: &FrameManifest, orientations: &OrientationTrace) -> Result<Vec<UnitQuat>, UnwindError> {
    (0..manifest.frame_count())
        .map(|k| {
            let t = manifest.frame_time(k);
            orientations
                .orientation_at(t)
                .map_err(|_| UnwindError::FrameCoverage { frame: k, t })
        })
        .collect()
}

/// World-aligns every frame of `dataset` with the estimated orientations.
///
/// Coverage is checked for all frames before any output is produced. Frames
/// are handed to `sink` in order; rows inside a frame are rendered in
/// parallel.
pub fn unwind_frames<F>(dataset: &Dataset, orientations: &OrientationTrace, mut sink: F) -> Result<(), UnwindError>
where
    F: FnMut(usize, EquirectFrame) -> Result<(), UnwindError>,
{
    let m = &dataset.manifest;
    let qs = frame_orientations(m, orientations)?;
    let grid = EquirectGrid::new(m.width, m.height)?;
    for (k, q) in qs.into_iter().enumerate() {
        let frame = dataset.load_frame(k)?;
        sink(k, unwind_frame(&grid, &frame, q))?;
    }
    Ok(())
}

/// Image-space unwinding of one frame captured at camera orientation `q_estimate`.
pub fn unwind_frame(grid: &EquirectGrid, frame: &EquirectFrame, q_estimate: UnitQuat) -> EquirectFrame {
    // output(d) = input(q̂⁻¹ d)
    grid.rotate(frame, q_estimate, Execution::Parallel)
}

/// Head orientation over time: a single pose is held constant, longer
/// sequences are interpolated.
#[derive(Debug, Clone)]
pub enum HeadMotion {
    Static(UnitQuat),
    Trace(OrientationTrace),
}

impl HeadMotion {
    pub fn from_poses(poses: &[ViewerPose]) -> Result<Self, UnwindError> {
        match poses {
            [] => Err(UnwindError::EmptyHeadTrace),
            [p] => Ok(HeadMotion::Static(p.q_head)),
            _ => Ok(HeadMotion::Trace(OrientationTrace::from_pairs(
                poses.iter().map(|p| (p.timestamp, p.q_head)),
            )?)),
        }
    }

    fn at(&self, frame: usize, t: f64) -> Result<UnitQuat, UnwindError> {
        match self {
            HeadMotion::Static(q) => Ok(*q),
            HeadMotion::Trace(tr) => tr
                .orientation_at(t)
                .map_err(|_| UnwindError::HeadCoverage { frame, t }),
        }
    }
}

/// Renders one viewport per frame in the chosen mode. `orientations` may be
/// omitted in coupled mode.
pub fn render_session<F>(
    dataset: &Dataset,
    orientations: Option<&OrientationTrace>,
    head: &HeadMotion,
    spec: &ViewportSpec,
    mode: ViewMode,
    mut sink: F,
) -> Result<(), UnwindError>
where
    F: FnMut(usize, image::RgbImage) -> Result<(), UnwindError>,
{
    let m = &dataset.manifest;
    let cams = match (mode, orientations) {
        (_, Some(tr)) => frame_orientations(m, tr)?,
        (ViewMode::Coupled, None) => vec![UnitQuat::IDENTITY; m.frame_count()],
        (ViewMode::Unwound, None) => return Err(UnwindError::MissingOrientations),
    };
    let heads = (0..m.frame_count())
        .map(|k| head.at(k, m.frame_time(k)))
        .collect::<Result<Vec<_>, _>>()?;
    let renderer = ViewportRenderer::new(*spec)?;
    for k in 0..m.frame_count() {
        let frame = dataset.load_frame(k)?;
        sink(k, renderer.render(&frame, heads[k], mode, cams[k], Execution::Parallel))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    pub t: f64,
    /// Radians.
    pub error: f64,
}

/// Geodesic error of an orientation estimate against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub mean: f64,
    pub max: f64,
    #[serde(rename = "final")]
    pub final_error: f64,
    pub series: Vec<DriftPoint>,
}

impl DriftReport {
    pub fn summary(&self) -> String {
        let span = match (self.series.first(), self.series.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        };
        format!(
            "drift over {:.2} s ({} samples): mean {:.4} rad, max {:.4} rad, final {:.4} rad",
            span,
            self.series.len(),
            self.mean,
            self.max,
            self.final_error
        )
    }
}

pub fn compute_drift(estimated: &OrientationTrace, truth: &OrientationTrace) -> Result<DriftReport, UnwindError> {
    let series = estimated
        .entries()
        .iter()
        .map(|e| {
            let q = truth
                .orientation_at(e.t)
                .map_err(|_| UnwindError::TruthCoverage { t: e.t })?;
            Ok(DriftPoint {
                t: e.t,
                error: e.q.geodesic_distance(q),
            })
        })
        .collect::<Result<Vec<_>, UnwindError>>()?;
    let n = series.len() as f64;
    Ok(DriftReport {
        mean: series.iter().map(|p| p.error).sum::<f64>() / n,
        max: series.iter().map(|p| p.error).fold(0.0, f64::max),
        final_error: series.last().map(|p| p.error).unwrap_or(0.0),
        series,
    })
}
