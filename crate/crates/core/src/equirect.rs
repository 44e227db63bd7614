//! Equirectangular panoramas: the pixel/direction convention, bilinear
//! sampling, whole-frame rotation and pinhole viewport extraction.
//!
//! Pixel `(u, v)` (column, row; integer values at pixel centers) maps to
//!
//! ```text
//! longitude λ = 2π·(u + 0.5)/W − π
//! latitude  φ = π/2 − π·(v + 0.5)/H
//! d = (cos φ·cos λ, cos φ·sin λ, sin φ)
//! ```
//!
//! in the frame that recorded the image, so the image center looks along +X
//! and row 0 touches the +Z pole.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quat::{UnitQuat, Vec3};

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("equirectangular frame must be 2:1, got {width}x{height}")]
    AspectRatio { width: u32, height: u32 },
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("cannot map a zero-length direction to a pixel")]
    ZeroDirection,
    #[error("invalid viewport: {0}")]
    Viewport(String),
}

/// How per-row work is scheduled. Both variants produce identical bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// A panoramic RGB8 image in the camera frame that recorded it.
#[derive(Clone, PartialEq)]
pub struct EquirectFrame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    pub timestamp: f64,
}

impl std::fmt::Debug for EquirectFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EquirectFrame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("timestamp", &self.timestamp)
            .finish_non_exhaustive()
    }
}

impl EquirectFrame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, timestamp: f64) -> Result<Self, GeometryError> {
        check_dimensions(width, height)?;
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(GeometryError::BufferSize {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            timestamp,
        })
    }

    pub fn filled(width: u32, height: u32, color: Rgb) -> Result<Self, GeometryError> {
        check_dimensions(width, height)?;
        let n = width as usize * height as usize;
        let pixels = color.iter().copied().cycle().take(n * 3).collect();
        Self::new(width, height, pixels, 0.0)
    }

    /// Builds a frame by evaluating `f(column, row)` at every pixel.
    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> Rgb + Sync) -> Result<Self, GeometryError> {
        check_dimensions(width, height)?;
        let mut pixels = vec![0u8; width as usize * height as usize * 3];
        pixels
            .par_chunks_mut(width as usize * 3)
            .enumerate()
            .for_each(|(v, row)| {
                for (u, px) in row.chunks_exact_mut(3).enumerate() {
                    px.copy_from_slice(&f(u as u32, v as u32));
                }
            });
        Self::new(width, height, pixels, 0.0)
    }

    pub fn from_image(img: RgbImage, timestamp: f64) -> Result<Self, GeometryError> {
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw(), timestamp)
    }

    pub fn to_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width, self.height, self.pixels.clone()).expect("validated buffer")
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major RGB8 bytes.
    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn pixel(&self, u: u32, v: u32) -> Rgb {
        let i = (v as usize * self.width as usize + u as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Mean channel value over the sphere, in `[0, 255]`. Rows are weighted
    /// by their solid angle so the value does not change under rotation.
    pub fn mean_intensity(&self) -> f64 {
        let row_len = self.width as usize * 3;
        let (mut sum, mut weight) = (0.0, 0.0);
        for (v, row) in self.pixels.chunks_exact(row_len).enumerate() {
            let lat = FRAC_PI_2 - PI * (v as f64 + 0.5) / self.height as f64;
            let w = lat.cos();
            sum += w * row.iter().map(|&p| p as f64).sum::<f64>();
            weight += w * row_len as f64;
        }
        sum / weight
    }
}

fn check_dimensions(width: u32, height: u32) -> Result<(), GeometryError> {
    if height == 0 || width != 2 * height {
        return Err(GeometryError::AspectRatio { width, height });
    }
    Ok(())
}

/// Unit direction of the (possibly fractional) pixel position `(u, v)`.
pub fn pixel_to_direction(u: f64, v: f64, width: u32, height: u32) -> Vec3 {
    let lon = TAU * (u + 0.5) / width as f64 - PI;
    let lat = FRAC_PI_2 - PI * (v + 0.5) / height as f64;
    let (sl, cl) = lon.sin_cos();
    let (sp, cp) = lat.sin_cos();
    Vec3::new(cp * cl, cp * sl, sp)
}

/// Pixel position of direction `d`: `u ∈ [−0.5, W − 0.5)`, `v ∈ [−0.5, H − 0.5]`.
pub fn direction_to_pixel(d: Vec3, width: u32, height: u32) -> Result<(f64, f64), GeometryError> {
    let d = d.normalized().ok_or(GeometryError::ZeroDirection)?;
    Ok(unit_direction_to_pixel(d, width as f64, height as f64))
}

#[inline]
fn unit_direction_to_pixel(d: Vec3, w: f64, h: f64) -> (f64, f64) {
    let lon = d.y.atan2(d.x);
    let lat = d.z.clamp(-1.0, 1.0).asin();
    let mut u = (lon + PI) * w / TAU - 0.5;
    if u >= w - 0.5 {
        u -= w;
    }
    let v = (FRAC_PI_2 - lat) * h / PI - 0.5;
    (u, v.clamp(-0.5, h - 0.5))
}

/// Bilinear sample with horizontal wrap-around and vertical clamping.
pub fn sample_bilinear(frame: &EquirectFrame, u: f64, v: f64) -> Rgb {
    let mut out = [0u8; 3];
    sample_into(frame, u, v, &mut out);
    out
}

#[inline]
fn sample_into(frame: &EquirectFrame, u: f64, v: f64, out: &mut [u8]) {
    let w = frame.width as usize;
    let h = frame.height as usize;
    let x0f = u.floor();
    let fx = u - x0f;
    let xi = x0f as i64;
    let x0 = if (0..w as i64).contains(&xi) {
        xi as usize
    } else if xi == -1 {
        w - 1
    } else {
        xi.rem_euclid(w as i64) as usize
    };
    let x1 = if x0 + 1 == w { 0 } else { x0 + 1 };

    let vc = v.clamp(0.0, (h - 1) as f64);
    let y0f = vc.floor();
    let fy = vc - y0f;
    let y0 = y0f as usize;
    let y1 = (y0 + 1).min(h - 1);

    let px = &frame.pixels;
    let (r0, r1) = (y0 * w * 3, y1 * w * 3);
    let (i00, i01, i10, i11) = (r0 + x0 * 3, r0 + x1 * 3, r1 + x0 * 3, r1 + x1 * 3);
    for c in 0..3 {
        let top = px[i00 + c] as f64 * (1.0 - fx) + px[i01 + c] as f64 * fx;
        let bottom = px[i10 + c] as f64 * (1.0 - fx) + px[i11 + c] as f64 * fx;
        let value = top * (1.0 - fy) + bottom * fy;
        // saturating cast; the argument is non-negative so this rounds half up
        out[c] = (value + 0.5) as u8;
    }
}

/// Per-resolution trigonometry table: the sine/cosine of every row latitude
/// and column longitude. Pixel directions are products of one row and one
/// column entry.
#[derive(Debug, Clone)]
pub struct EquirectGrid {
    width: u32,
    height: u32,
    rows: Vec<(f64, f64)>,
    cols: Vec<(f64, f64)>,
}

impl EquirectGrid {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        check_dimensions(width, height)?;
        let rows = (0..height)
            .map(|v| (FRAC_PI_2 - PI * (v as f64 + 0.5) / height as f64).sin_cos())
            .collect();
        let cols = (0..width)
            .map(|u| (TAU * (u as f64 + 0.5) / width as f64 - PI).sin_cos())
            .collect();
        Ok(Self {
            width,
            height,
            rows,
            cols,
        })
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn direction(&self, u: u32, v: u32) -> Vec3 {
        let (sp, cp) = self.rows[v as usize];
        let (sl, cl) = self.cols[u as usize];
        Vec3::new(cp * cl, cp * sl, sp)
    }

    /// Rotates panorama content by `q`: the output pixel looking along `d`
    /// shows what the input showed along `q⁻¹·d`.
    ///
    /// With `q` the camera-to-world orientation of the recording camera this
    /// produces a world-aligned panorama.
    pub fn rotate(&self, frame: &EquirectFrame, q: UnitQuat, exec: Execution) -> EquirectFrame {
        assert_eq!(
            (frame.width, frame.height),
            (self.width, self.height),
            "grid resolution does not match frame"
        );
        let inv = q.inverse();
        // columns of the rotation matrix of q⁻¹
        let (ex, ey, ez) = (inv.rotate(Vec3::X), inv.rotate(Vec3::Y), inv.rotate(Vec3::Z));
        let (w, h) = (frame.width as f64, frame.height as f64);
        let row_len = self.width as usize * 3;
        let mut pixels = vec![0u8; frame.pixels.len()];
        let render_row = |(v, row): (usize, &mut [u8])| {
            let (sp, cp) = self.rows[v];
            let (a, b, c) = (ex * cp, ey * cp, ez * sp);
            for (px, &(sl, cl)) in row.chunks_exact_mut(3).zip(&self.cols) {
                let d = a * cl + b * sl + c;
                let (su, sv) = unit_direction_to_pixel(d, w, h);
                sample_into(frame, su, sv, px);
            }
        };
        match exec {
            Execution::Sequential => pixels.chunks_mut(row_len).enumerate().for_each(render_row),
            Execution::Parallel => pixels.par_chunks_mut(row_len).enumerate().for_each(render_row),
        }
        EquirectFrame {
            width: frame.width,
            height: frame.height,
            pixels,
            timestamp: frame.timestamp,
        }
    }
}

/// See [`EquirectGrid::rotate`]. Builds a throwaway grid; reuse an
/// [`EquirectGrid`] when rotating many frames of one resolution.
pub fn rotate_frame(frame: &EquirectFrame, q: UnitQuat) -> EquirectFrame {
    EquirectGrid::new(frame.width, frame.height)
        .expect("frame dimensions already validated")
        .rotate(frame, q, Execution::Parallel)
}

/// Pinhole viewport geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewportSpec {
    pub width: u32,
    pub height: u32,
    /// Radians, in `(0, π)`.
    pub horizontal_fov: f64,
}

impl ViewportSpec {
    pub const DEFAULT_FOV: f64 = FRAC_PI_2;

    pub fn new(width: u32, height: u32, horizontal_fov: f64) -> Result<Self, GeometryError> {
        let spec = Self {
            width,
            height,
            horizontal_fov,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::Viewport("dimensions must be positive".into()));
        }
        if !(self.horizontal_fov > 0.0 && self.horizontal_fov < PI) {
            return Err(GeometryError::Viewport(format!(
                "horizontal fov {} outside (0, π)",
                self.horizontal_fov
            )));
        }
        Ok(())
    }

    pub fn vertical_fov(&self) -> f64 {
        2.0 * ((0.5 * self.horizontal_fov).tan() * self.height as f64 / self.width as f64).atan()
    }
}

impl Default for ViewportSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            horizontal_fov: Self::DEFAULT_FOV,
        }
    }
}

/// Viewer head orientation relative to its seat frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewerPose {
    pub q_head: UnitQuat,
    pub timestamp: f64,
}

impl ViewerPose {
    pub fn new(q_head: UnitQuat, timestamp: f64) -> Self {
        Self { q_head, timestamp }
    }
}

/// Coupled rotations show the raw camera frame; unwound rotations cancel the
/// camera orientation so only head motion rotates the view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewMode {
    #[serde(rename = "cr")]
    Coupled,
    #[serde(rename = "ur")]
    Unwound,
}

impl std::str::FromStr for ViewMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "cr" | "coupled" => Ok(ViewMode::Coupled),
            "ur" | "unwound" => Ok(ViewMode::Unwound),
            other => Err(format!("unknown view mode `{other}` (expected cr or ur)")),
        }
    }
}

/// Viewport renderer with the per-pixel canonical view directions cached
/// for one [`ViewportSpec`]. Canonical view: forward +X, up +Z, right −Y.
#[derive(Debug, Clone)]
pub struct ViewportRenderer {
    spec: ViewportSpec,
    directions: Vec<Vec3>,
}

impl ViewportRenderer {
    pub fn new(spec: ViewportSpec) -> Result<Self, GeometryError> {
        spec.validate()?;
        let (w, h) = (spec.width as f64, spec.height as f64);
        let focal = 0.5 * w / (0.5 * spec.horizontal_fov).tan();
        let mut directions = Vec::with_capacity(spec.width as usize * spec.height as usize);
        for j in 0..spec.height {
            let up = 0.5 * h - (j as f64 + 0.5);
            for i in 0..spec.width {
                let right = i as f64 + 0.5 - 0.5 * w;
                let d = Vec3::new(focal, -right, up);
                directions.push(d.normalized().expect("focal > 0"));
            }
        }
        Ok(Self { spec, directions })
    }

    pub fn spec(&self) -> ViewportSpec {
        self.spec
    }

    /// Canonical (head-relative) direction of viewport pixel `(i, j)`.
    pub fn view_direction(&self, i: u32, j: u32) -> Vec3 {
        self.directions[j as usize * self.spec.width as usize + i as usize]
    }

    pub fn render(
        &self,
        frame: &EquirectFrame,
        q_head: UnitQuat,
        mode: ViewMode,
        q_cam: UnitQuat,
        exec: Execution,
    ) -> RgbImage {
        let (fw, fh) = (frame.width as f64, frame.height as f64);
        let cam_inv = q_cam.inverse();
        let row_len = self.spec.width as usize * 3;
        let mut out = vec![0u8; row_len * self.spec.height as usize];
        let render_row = |(j, row): (usize, &mut [u8])| {
            let dirs = &self.directions[j * self.spec.width as usize..][..self.spec.width as usize];
            for (px, &d) in row.chunks_exact_mut(3).zip(dirs) {
                let world = q_head.rotate(d);
                let sample = match mode {
                    ViewMode::Coupled => world,
                    ViewMode::Unwound => cam_inv.rotate(world),
                };
                let (u, v) = unit_direction_to_pixel(sample, fw, fh);
                sample_into(frame, u, v, px);
            }
        };
        match exec {
            Execution::Sequential => out.chunks_mut(row_len).enumerate().for_each(render_row),
            Execution::Parallel => out.par_chunks_mut(row_len).enumerate().for_each(render_row),
        }
        RgbImage::from_raw(self.spec.width, self.spec.height, out).expect("sized buffer")
    }
}

/// One-shot viewport extraction; see [`ViewportRenderer::render`].
pub fn extract_viewport(
    frame: &EquirectFrame,
    pose: &ViewerPose,
    spec: &ViewportSpec,
    mode: ViewMode,
    q_cam: UnitQuat,
) -> Result<RgbImage, GeometryError> {
    Ok(ViewportRenderer::new(*spec)?.render(frame, pose.q_head, mode, q_cam, Execution::Parallel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cardinal_directions_land_on_expected_pixels() {
        let (w, h) = (64, 32);
        let (u, v) = direction_to_pixel(Vec3::X, w, h).unwrap();
        assert_abs_diff_eq!(u, 31.5, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 15.5, epsilon = 1e-12);
        let (_, v) = direction_to_pixel(Vec3::Z, w, h).unwrap();
        assert_abs_diff_eq!(v, -0.5, epsilon = 1e-12);
        let (u, v) = direction_to_pixel(Vec3::Y, w, h).unwrap();
        assert_abs_diff_eq!(u, 3.0 * 64.0 / 4.0 - 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 15.5, epsilon = 1e-12);
        assert_eq!(direction_to_pixel(Vec3::ZERO, w, h), Err(GeometryError::ZeroDirection));
    }

    #[test]
    fn longitude_wraps_into_half_open_range() {
        // λ = π lands on the seam and must wrap to the left edge
        let (u, _) = direction_to_pixel(Vec3::new(-1.0, 0.0, 0.0), 64, 32).unwrap();
        assert_abs_diff_eq!(u, -0.5, epsilon = 1e-12);
        let (u, _) = direction_to_pixel(Vec3::new(-1.0, -1e-9, 0.0), 64, 32).unwrap();
        assert!((-0.5..63.5).contains(&u));
    }

    #[test]
    fn bilinear_exact_at_centers() {
        let f = EquirectFrame::from_fn(8, 4, |u, v| [u as u8 * 10, v as u8 * 20, 7]).unwrap();
        assert_eq!(sample_bilinear(&f, 3.0, 2.0), [30, 40, 7]);
        assert_eq!(sample_bilinear(&f, 3.5, 2.0), [35, 40, 7]);
    }

    #[test]
    fn bilinear_wraps_across_seam() {
        let f = EquirectFrame::from_fn(8, 4, |u, _| match u {
            0 => [255, 0, 0],
            7 => [0, 0, 255],
            _ => [0, 0, 0],
        })
        .unwrap();
        // 0.75 of column 0 and 0.25 of column 7
        assert_eq!(sample_bilinear(&f, -0.25, 1.0), [191, 0, 64]);
    }

    #[test]
    fn bilinear_constant_frame() {
        let f = EquirectFrame::filled(16, 8, [12, 200, 99]).unwrap();
        for &(u, v) in &[(0.3, 0.2), (-0.5, -0.5), (15.49, 7.5), (7.77, 3.1)] {
            assert_eq!(sample_bilinear(&f, u, v), [12, 200, 99]);
        }
    }

    #[test]
    fn frame_validation() {
        assert!(matches!(EquirectFrame::filled(10, 4, [0; 3]), Err(GeometryError::AspectRatio { .. })));
        assert!(matches!(
            EquirectFrame::new(4, 2, vec![0; 5], 0.0),
            Err(GeometryError::BufferSize { .. })
        ));
        assert!(ViewportSpec::new(10, 10, PI).is_err());
        assert!(ViewportSpec::new(10, 10, 0.0).is_err());
    }

    #[test]
    fn grid_matches_pixel_to_direction() {
        let g = EquirectGrid::new(32, 16).unwrap();
        for v in 0..16 {
            for u in 0..32 {
                let a = g.direction(u, v);
                let b = pixel_to_direction(u as f64, v as f64, 32, 16);
                assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn vertical_fov_follows_aspect() {
        let s = ViewportSpec::new(200, 100, FRAC_PI_2).unwrap();
        assert_abs_diff_eq!(s.vertical_fov(), 2.0 * 0.5f64.atan(), epsilon = 1e-15);
    }

    #[test]
    fn view_mode_parses() {
        assert_eq!("UR".parse::<ViewMode>().unwrap(), ViewMode::Unwound);
        assert_eq!("cr".parse::<ViewMode>().unwrap(), ViewMode::Coupled);
        assert!("xr".parse::<ViewMode>().is_err());
        assert_eq!(serde_json::to_string(&ViewMode::Unwound).unwrap(), "\"ur\"");
    }
}
