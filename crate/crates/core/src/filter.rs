//! Passive complementary (Mahony) attitude filter.
//!
//! Gyroscope rates are integrated with the exact exponential map; the
//! accelerometer, when its magnitude is close to `g`, supplies a gravity
//! reference that corrects roll and pitch through a proportional-integral
//! term. Yaw is unobservable without a magnetometer and drifts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imu_io::{DataError, ImuSample, ImuTrace, OrientationSample, OrientationTrace, MAX_GAP_PERIODS};
use crate::quat::{UnitQuat, Vec3};

pub const STANDARD_GRAVITY: f64 = 9.80665;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("sample time {t} does not advance past {t_last}")]
    NonIncreasing { t: f64, t_last: f64 },
    #[error("gap of {dt} s before t = {t} exceeds limit {limit} s")]
    Gap { t: f64, dt: f64, limit: f64 },
    #[error("invalid filter config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Gains and gating. Deserializes from JSON with every field optional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Proportional gain, 1/s.
    pub kp: f64,
    /// Integral gain, 1/s².
    pub ki: f64,
    /// Accelerometer is trusted only when `|‖a‖ − g| ≤ accel_gate · g`.
    pub accel_gate: f64,
    pub g: f64,
    pub q0: UnitQuat,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            kp: 1.0,
            ki: 0.1,
            accel_gate: 0.2,
            g: STANDARD_GRAVITY,
            q0: UnitQuat::IDENTITY,
        }
    }
}

impl FilterConfig {
    /// Pure gyro integration.
    pub fn gyro_only() -> Self {
        Self {
            kp: 0.0,
            ki: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |m: &str| Err(FilterError::Config(m.to_string()));
        if !(self.kp >= 0.0 && self.kp.is_finite()) {
            return bad("kp must be a finite value >= 0");
        }
        if !(self.ki >= 0.0 && self.ki.is_finite()) {
            return bad("ki must be a finite value >= 0");
        }
        if !(0.0..=1.0).contains(&self.accel_gate) {
            return bad("accel_gate must lie in [0, 1]");
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            return bad("g must be positive");
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self, FilterError> {
        let cfg: Self = serde_json::from_str(json).map_err(|e| FilterError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    /// Camera-to-world estimate.
    pub q_hat: UnitQuat,
    /// Gyro bias estimate, rad/s.
    pub bias: Vec3,
    pub t_last: f64,
}

impl FilterState {
    pub fn new(config: &FilterConfig, t0: f64) -> Self {
        Self {
            q_hat: config.q0,
            bias: Vec3::ZERO,
            t_last: t0,
        }
    }
}

/// Gravity-alignment innovation `â × v̂`, or zero when the accelerometer is
/// gated out. `v̂` is where the estimate expects the at-rest reading.
fn innovation(q_hat: UnitQuat, accel: Vec3, config: &FilterConfig) -> Vec3 {
    let norm = accel.norm();
    if norm.is_nan() || norm <= 0.0 || (norm - config.g).abs() > config.accel_gate * config.g {
        return Vec3::ZERO;
    }
    let expected = q_hat.inverse().rotate(Vec3::Z);
    (accel * (1.0 / norm)).cross(expected)
}

/// Advances the filter by one sample.
///
/// `max_dt` bounds the allowed spacing to the previous sample.
pub fn step(
    state: &FilterState,
    sample: &ImuSample,
    config: &FilterConfig,
    max_dt: Option<f64>,
) -> Result<FilterState, FilterError> {
    let dt = sample.t - state.t_last;
    if dt.is_nan() || dt <= 0.0 {
        return Err(FilterError::NonIncreasing {
            t: sample.t,
            t_last: state.t_last,
        });
    }
    if let Some(limit) = max_dt {
        if dt > limit {
            return Err(FilterError::Gap { t: sample.t, dt, limit });
        }
    }
    let e = innovation(state.q_hat, sample.accel, config);
    // integral action: the estimate absorbs the persistent part of e
    let bias = state.bias - e * (config.ki * dt);
    let rate = sample.gyro - bias + e * config.kp;
    let q_hat = state.q_hat * UnitQuat::from_rotation_vector(rate * dt);
    Ok(FilterState {
        q_hat,
        bias,
        t_last: sample.t,
    })
}

/// Runs the filter over a whole trace, one output entry per IMU sample.
/// The first entry is `config.q0` at the first sample time.
pub fn run(trace: &ImuTrace, config: &FilterConfig) -> Result<OrientationTrace, FilterError> {
    config.validate()?;
    let samples = trace.samples();
    let max_dt = Some(MAX_GAP_PERIODS * trace.nominal_period());
    let mut state = FilterState::new(config, samples[0].t);
    let mut out = Vec::with_capacity(samples.len());
    out.push(OrientationSample {
        t: state.t_last,
        q: state.q_hat,
    });
    for s in &samples[1..] {
        state = step(&state, s, config, max_dt)?;
        out.push(OrientationSample {
            t: s.t,
            q: state.q_hat,
        });
    }
    Ok(OrientationTrace::new(out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn sample(t: f64, gyro: Vec3, accel: Vec3) -> ImuSample {
        ImuSample { t, gyro, accel }
    }

    fn stationary(n: usize, rate: f64) -> ImuTrace {
        let s = (0..n)
            .map(|i| sample(i as f64 / rate, Vec3::ZERO, Vec3::new(0.0, 0.0, STANDARD_GRAVITY)))
            .collect();
        ImuTrace::new(s, Some(rate)).unwrap()
    }

    #[test]
    fn stationary_is_a_fixed_point() {
        let out = run(&stationary(500, 100.0), &FilterConfig::default()).unwrap();
        for e in out.entries() {
            assert!(e.q.geodesic_distance(UnitQuat::IDENTITY) <= 1e-9);
        }
    }

    #[test]
    fn gyro_only_quarter_turn() {
        let s = (0..=100)
            .map(|i| sample(i as f64 * 0.01, Vec3::new(0.0, 0.0, FRAC_PI_2), Vec3::new(0.0, 0.0, 9.8)))
            .collect();
        let out = run(&ImuTrace::new(s, None).unwrap(), &FilterConfig::gyro_only()).unwrap();
        let last = out.entries().last().unwrap().q;
        assert!(last.geodesic_distance(UnitQuat::yaw(FRAC_PI_2)) < 1e-3);
    }

    #[test]
    fn tilt_decays_monotonically() {
        // proportional only; the integral term may overshoot
        let config = FilterConfig {
            q0: UnitQuat::from_axis_angle(Vec3::X, 10f64.to_radians()).unwrap(),
            ki: 0.0,
            ..FilterConfig::default()
        };
        let out = run(&stationary(1000, 100.0), &config).unwrap();
        // the truth is level, so the whole error here is tilt
        let errs: Vec<f64> = out
            .entries()
            .iter()
            .map(|e| e.q.geodesic_distance(UnitQuat::IDENTITY))
            .collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(errs[errs.len() - 1] < 0.1 * errs[0]);
    }

    #[test]
    fn tilt_converges_with_integral_action() {
        let config = FilterConfig {
            q0: UnitQuat::from_axis_angle(Vec3::new(1.0, -1.0, 0.0), 15f64.to_radians()).unwrap(),
            ..FilterConfig::default()
        };
        let out = run(&stationary(3000, 100.0), &config).unwrap();
        let last = out.entries().last().unwrap().q;
        assert!(last.geodesic_distance(UnitQuat::IDENTITY) < 5e-3);
    }

    #[test]
    fn bias_estimate_converges_to_gyro_offset() {
        let bias = Vec3::new(0.01, -0.02, 0.0);
        let s = (0..6000)
            .map(|i| sample(i as f64 * 0.01, bias, Vec3::new(0.0, 0.0, STANDARD_GRAVITY)))
            .collect();
        let trace = ImuTrace::new(s, None).unwrap();
        let config = FilterConfig::default();
        let mut state = FilterState::new(&config, 0.0);
        for smp in &trace.samples()[1..] {
            state = step(&state, smp, &config, None).unwrap();
        }
        assert!((state.bias - bias).norm() < 1e-3, "{:?}", state.bias);
    }

    #[test]
    fn out_of_gate_accel_is_ignored() {
        let config = FilterConfig {
            q0: UnitQuat::from_axis_angle(Vec3::Y, 0.2).unwrap(),
            ..FilterConfig::default()
        };
        let st = FilterState::new(&config, 0.0);
        let a = step(&st, &sample(0.01, Vec3::ZERO, Vec3::new(0.0, 0.0, 20.0)), &config, None).unwrap();
        let b = step(&st, &sample(0.01, Vec3::ZERO, Vec3::new(5.0, 0.0, 0.0)), &config, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.q_hat, config.q0);
    }

    #[test]
    fn timing_errors() {
        let config = FilterConfig::default();
        let st = FilterState::new(&config, 1.0);
        let s = sample(1.0, Vec3::ZERO, Vec3::Z);
        assert!(matches!(step(&st, &s, &config, None), Err(FilterError::NonIncreasing { .. })));
        let s = sample(2.0, Vec3::ZERO, Vec3::Z);
        assert!(matches!(step(&st, &s, &config, Some(0.1)), Err(FilterError::Gap { .. })));

        let mut samples: Vec<_> = stationary(10, 100.0).samples().to_vec();
        samples.push(sample(5.0, Vec3::ZERO, Vec3::Z * STANDARD_GRAVITY));
        let trace = ImuTrace::new(samples, Some(100.0)).unwrap();
        assert!(matches!(run(&trace, &config), Err(FilterError::Gap { .. })));
    }

    #[test]
    fn config_json_defaults_and_validation() {
        assert_eq!(FilterConfig::from_json("{}").unwrap(), FilterConfig::default());
        let c = FilterConfig::from_json(r#"{"kp": 2.5, "q0": [0, 0, 0, 1]}"#).unwrap();
        assert_eq!(c.kp, 2.5);
        assert_eq!(c.ki, 0.1);
        assert!(FilterConfig::from_json(r#"{"kp": -1}"#).is_err());
        assert!(FilterConfig::from_json(r#"{"accel_gate": 1.5}"#).is_err());
        assert!(FilterConfig::from_json(r#"{"gain": 1}"#).is_err());
    }
}
