use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use log::info;

use unwind::equirect::{EquirectGrid, ViewMode, ViewerPose, ViewportSpec};
use unwind::filter::{self, FilterConfig};
use unwind::imu_io::{self, Dataset, FrameManifest, OrientationTrace};
use unwind::sim::{self, DatasetConfig, NoiseModel, TrajectorySpec};
use unwind::unwind::{compute_drift, frame_orientations, render_session, unwind_frame, HeadMotion};
use unwind::{UnitQuat, Vec3};

use crate::Common;

/// Default length of `--static` datasets, seconds.
const STATIC_DURATION: f64 = 10.0;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Dataset length in seconds (default: the whole trajectory).
    #[arg(long)]
    pub duration: Option<f64>,
    /// Fixed camera pose.
    #[arg(long = "static", conflicts_with = "pure_rotation")]
    pub stationary: bool,
    /// Rotation-only camera path at a fixed position.
    #[arg(long)]
    pub pure_rotation: bool,
    /// Noise-free IMU trace.
    #[arg(long)]
    pub no_noise: bool,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
    #[arg(long)]
    pub fps: Option<f64>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Dataset directory or manifest file.
    pub dataset: PathBuf,
}

#[derive(Debug, Args)]
pub struct OrientationSource {
    /// Orientation trace (JSONL); defaults to the manifest's `orientations`.
    #[arg(long, conflicts_with = "truth")]
    pub orientations: Option<PathBuf>,
    /// Use the dataset's ground-truth trace.
    #[arg(long)]
    pub truth: bool,
}

#[derive(Debug, Args)]
pub struct UnwindArgs {
    /// Dataset directory or manifest file.
    pub dataset: PathBuf,
    #[command(flatten)]
    pub source: OrientationSource,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ViewArgs {
    /// Dataset directory or manifest file.
    pub dataset: PathBuf,
    #[command(flatten)]
    pub source: OrientationSource,
    /// `cr` (coupled rotations) or `ur` (unwound rotations).
    #[arg(long, default_value = "ur")]
    pub mode: ViewMode,
    /// Head orientation trace (JSONL). Overrides --yaw/--pitch.
    #[arg(long)]
    pub head: Option<PathBuf>,
    /// Static head yaw, degrees (left positive).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub yaw: f64,
    /// Static head pitch, degrees (up positive).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub pitch: f64,
    #[arg(long, default_value_t = 640)]
    pub width: u32,
    #[arg(long, default_value_t = 480)]
    pub height: u32,
    /// Horizontal field of view, degrees.
    #[arg(long, default_value_t = 90.0)]
    pub fov: f64,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct DriftArgs {
    /// Estimated orientation trace (JSONL).
    pub estimated: PathBuf,
    /// Ground-truth orientation trace (JSONL).
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Dataset directory.
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn require_out(common: &Common) -> Result<&Path> {
    common.out.as_deref().context("--out is required for this command")
}

/// Creates `dir`, refusing to mix output with existing files unless forced.
fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        ensure!(dir.is_dir(), "{} is not a directory", dir.display());
        let occupied = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .next()
            .is_some();
        if occupied && !force {
            bail!("output directory {} is not empty (pass --force to write anyway)", dir.display());
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn warn_unused(common: &Common, command: &str, config: bool, seed: bool) {
    if common.config.is_some() && !config {
        log::warn!("--config has no effect on `{command}`");
    }
    if common.seed.is_some() && !seed {
        log::warn!("--seed has no effect on `{command}`");
    }
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_orientations(ds: &Dataset, source: &OrientationSource) -> Result<OrientationTrace> {
    if let Some(p) = &source.orientations {
        OrientationTrace::load(p).with_context(|| format!("loading {}", p.display()))
    } else if source.truth {
        ds.ground_truth().context("loading ground truth")
    } else {
        ds.orientations()
            .context("no orientation trace: run `unwind filter` first or pass --orientations / --truth")
    }
}

pub fn simulate(common: &Common, args: &SimulateArgs) -> Result<()> {
    let out = require_out(common)?;
    let mut config: DatasetConfig = match &common.config {
        Some(p) => read_json(p)?,
        None => DatasetConfig::default(),
    };
    if args.stationary {
        config.trajectory = TrajectorySpec::stationary();
        config.duration = Some(STATIC_DURATION);
    }
    if args.pure_rotation {
        config.trajectory = TrajectorySpec::pure_rotation();
    }
    if args.no_noise {
        config.noise = NoiseModel::none();
    }
    if let Some(seed) = common.seed {
        config.noise.seed = seed;
    }
    if let Some(d) = args.duration {
        ensure!(d >= 0.0 && d.is_finite(), "--duration must be a non-negative number");
        config.duration = Some(d);
    }
    config.width = args.width.unwrap_or(config.width);
    config.height = args.height.unwrap_or(config.height);
    config.fps = args.fps.unwrap_or(config.fps);

    prepare_out_dir(out, args.force)?;
    let start = Instant::now();
    let ds = sim::generate_dataset(&config, out).context("generating dataset")?;
    let m = &ds.manifest;
    info!("stage simulate: {} frames in {:.2} s", m.frame_count(), start.elapsed().as_secs_f64());
    println!(
        "dataset {}: {} frames, {:.2} s, {}x{} at {} fps",
        out.display(),
        m.frame_count(),
        m.frame_time(m.frame_count() - 1) - m.t0,
        m.width,
        m.height,
        m.fps
    );
    Ok(())
}

pub fn filter(common: &Common, args: &FilterArgs) -> Result<()> {
    warn_unused(common, "filter", true, false);
    let mut ds = load_dataset(&args.dataset)?;
    let config = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            FilterConfig::from_json(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => FilterConfig::default(),
    };
    let imu = ds.imu().context("loading IMU trace")?;
    let start = Instant::now();
    let est = filter::run(&imu, &config)?;
    info!("stage filter: {} samples in {:.3} s", imu.len(), start.elapsed().as_secs_f64());

    match &common.out {
        Some(path) => est.save(path).with_context(|| format!("writing {}", path.display()))?,
        None => {
            let name = "orientations.jsonl";
            est.save(&ds.resolve(name))?;
            ds.manifest.orientations = Some(name.to_string());
            ds.save_manifest()?;
        }
    }
    if let Ok(truth) = ds.ground_truth() {
        if let Ok(report) = compute_drift(&est, &truth) {
            info!("against ground truth: {}", report.summary());
        }
    }
    println!("{} orientations written", est.len());
    Ok(())
}

pub fn unwind(common: &Common, args: &UnwindArgs) -> Result<()> {
    warn_unused(common, "unwind", false, false);
    let out = require_out(common)?;
    let ds = load_dataset(&args.dataset)?;
    let trace = load_orientations(&ds, &args.source)?;
    let m = &ds.manifest;
    // check coverage before touching the output directory
    let qs = frame_orientations(m, &trace)?;
    prepare_out_dir(out, args.force)?;
    let frames_dir = out.join("frames");
    fs::create_dir_all(&frames_dir).with_context(|| format!("creating {}", frames_dir.display()))?;
    let grid = EquirectGrid::new(m.width, m.height)?;
    let start = Instant::now();
    let mut names = Vec::with_capacity(qs.len());
    for (k, q) in qs.into_iter().enumerate() {
        let frame = ds.load_frame(k)?;
        let unwound = unwind_frame(&grid, &frame, q);
        let name = format!("frames/{}", imu_io::frame_file_name(k));
        imu_io::save_frame(&unwound, &out.join(&name))?;
        names.push(name);
    }
    let elapsed = start.elapsed().as_secs_f64();
    info!(
        "stage unwind: {} frames in {:.2} s ({:.1} ms per frame)",
        names.len(),
        elapsed,
        1e3 * elapsed / names.len() as f64
    );
    let manifest = FrameManifest::new(m.width, m.height, m.fps, m.t0, names);
    let n = manifest.frame_count();
    Dataset::new(manifest, out).save_manifest()?;
    println!("{n} unwound frames written to {}", out.display());
    Ok(())
}

/// Head orientation from yaw about world Z and pitch towards +Z.
fn head_from_angles(yaw_deg: f64, pitch_deg: f64) -> UnitQuat {
    let pitch = UnitQuat::from_axis_angle(Vec3::Y, -pitch_deg.to_radians()).expect("unit axis");
    UnitQuat::yaw(yaw_deg.to_radians()) * pitch
}

pub fn view(common: &Common, args: &ViewArgs) -> Result<()> {
    warn_unused(common, "view", false, false);
    let out = require_out(common)?;
    let ds = load_dataset(&args.dataset)?;
    let trace = match (args.mode, load_orientations(&ds, &args.source)) {
        (_, Ok(t)) => Some(t),
        (ViewMode::Coupled, Err(_)) if args.source.orientations.is_none() && !args.source.truth => None,
        (_, Err(e)) => return Err(e),
    };
    let head = match &args.head {
        Some(p) => HeadMotion::Trace(OrientationTrace::load(p).with_context(|| format!("loading {}", p.display()))?),
        None => HeadMotion::from_poses(&[ViewerPose::new(head_from_angles(args.yaw, args.pitch), 0.0)])?,
    };
    let spec = ViewportSpec::new(args.width, args.height, args.fov.to_radians())?;
    prepare_out_dir(out, args.force)?;
    let start = Instant::now();
    let mut count = 0;
    render_session(&ds, trace.as_ref(), &head, &spec, args.mode, |k, img| {
        let path = out.join(format!("view_{k:06}.png"));
        imu_io::save_rgb_png(img.width(), img.height(), img.as_raw(), &path)?;
        count += 1;
        Ok(())
    })?;
    info!("stage view: {count} viewports in {:.2} s", start.elapsed().as_secs_f64());
    println!("{count} {:?} viewports written to {}", args.mode, out.display());
    Ok(())
}

pub fn drift(common: &Common, args: &DriftArgs) -> Result<()> {
    warn_unused(common, "drift", false, false);
    let load = |p: &Path| OrientationTrace::load(p).with_context(|| format!("loading {}", p.display()));
    let (est, truth) = (load(&args.estimated)?, load(&args.truth)?);
    let report = compute_drift(&est, &truth)?;
    let json = serde_json::to_string_pretty(&report)?;
    match &common.out {
        Some(p) => fs::write(p, &json).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{json}")?;
        }
    }
    eprintln!("{}", report.summary());
    Ok(())
}
