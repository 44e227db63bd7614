//! Rotation unwinding for 360° video recorded from a moving camera.
//!
//! The camera orientation is estimated from gyroscope and accelerometer data
//! with a complementary filter, then cancelled from the presented view so a
//! viewer only experiences rotations they cause themselves. Translation of
//! the camera stays visible.
//!
//! * [`quat`]: unit quaternion algebra (Hamilton, scalar-first, active).
//! * [`equirect`]: panorama geometry, rotation and viewport extraction.
//! * [`imu_io`]: trace types and dataset file formats.
//! * [`filter`]: complementary attitude filter.
//! * [`unwind`]: the unwinding update, frame/viewport rendering, drift reports.
//! * [`sim`]: synthetic trajectories, IMU traces, scenes and datasets.

pub mod equirect;
pub mod filter;
pub mod imu_io;
pub mod quat;
pub mod sim;
pub mod unwind;

pub use equirect::{EquirectFrame, ViewMode, ViewerPose, ViewportSpec};
pub use filter::{FilterConfig, FilterState};
pub use imu_io::{Dataset, FrameManifest, ImuSample, ImuTrace, OrientationTrace};
pub use quat::{UnitQuat, Vec3};
pub use unwind::{DriftReport, UnwindState};
