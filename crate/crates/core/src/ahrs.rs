//! Gradient-descent attitude fusion (Madgwick) and elevation extraction.
//!
//! Orientations are unit quaternions rotating sensor-frame vectors into
//! the world frame, world `+z` up. The accelerometer reports specific
//! force, so a level sensor at rest reads `(0, 0, +g)`.
//!
//! Elevation `theta_i` is positive when the boresight points above the
//! horizontal plane. With the right-handed sensor y-axis pointing left,
//! pitching up is a negative rotation about `+y`, so a positive nose-up
//! rate shows up as a negative `gyro.y`.

use std::sync::{Arc, RwLock};

use crate::array::Vec3;
use crate::error::{Error, Result};

pub const DEFAULT_BETA: f64 = 0.1;
pub const DEFAULT_IMU_RATE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    /// Rotation by `angle` degrees about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let a = axis.normalized();
        let (s, c) = (angle.to_radians() / 2.0).sin_cos();
        Quaternion::new(c, a.x * s, a.y * s, a.z * s)
    }

    /// Shortest-arc rotation taking direction `from` onto direction `to`.
    pub fn between(from: Vec3, to: Vec3) -> Self {
        let (f, t) = (from.normalized(), to.normalized());
        let d = f.dot(t);
        if d < -1.0 + 1e-12 {
            // antiparallel: any perpendicular axis works
            let axis = if f.x.abs() < 0.9 { Vec3::X } else { Vec3::new(0.0, 1.0, 0.0) };
            let perp = cross(f, axis);
            return Quaternion::from_axis_angle(perp, 180.0);
        }
        let c = cross(f, t);
        Quaternion::new(1.0 + d, c.x, c.y, c.z).normalized()
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Quaternion::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(&self) -> Self {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self ⊗ o`.
    pub fn mul(&self, o: &Quaternion) -> Quaternion {
        Quaternion::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let p = Quaternion::new(0.0, v.x, v.y, v.z);
        let r = self.mul(&p).mul(&self.conjugate());
        Vec3::new(r.x, r.y, r.z)
    }

    fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    Vec3::new(a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// rad/s, sensor frame.
    pub gyro: Vec3,
    /// m/s², specific force including gravity.
    pub accel: Vec3,
    pub mag: Option<Vec3>,
    pub timestamp: f64,
}

impl ImuSample {
    pub fn is_finite(&self) -> bool {
        self.gyro.is_finite()
            && self.accel.is_finite()
            && self.mag.is_none_or(|m| m.is_finite())
            && self.timestamp.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeEstimate {
    pub orientation: Quaternion,
    /// Boresight elevation, degrees.
    pub theta_i: f64,
    pub timestamp: f64,
}

impl AttitudeEstimate {
    pub fn new(orientation: Quaternion, timestamp: f64) -> Result<Self> {
        Ok(AttitudeEstimate {
            orientation,
            theta_i: elevation_from_orientation(&orientation)?,
            timestamp,
        })
    }

    pub fn identity(timestamp: f64) -> Self {
        AttitudeEstimate {
            orientation: Quaternion::IDENTITY,
            theta_i: 0.0,
            timestamp,
        }
    }

    /// Roll and pitch taken from a single accelerometer reading, yaw zero.
    /// Falls back to identity for a zero reading.
    pub fn from_gravity(accel: Vec3, timestamp: f64) -> Self {
        if accel.norm() == 0.0 {
            return AttitudeEstimate::identity(timestamp);
        }
        let q = Quaternion::between(accel, Vec3::new(0.0, 0.0, 1.0));
        AttitudeEstimate::new(q, timestamp).expect("shortest-arc quaternion is unit norm")
    }
}

/// Boresight elevation of a sensor-to-world orientation, degrees.
pub fn elevation_from_orientation(q: &Quaternion) -> Result<f64> {
    if !q.is_finite() || (q.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::domain(format!("quaternion norm {} is not unit", q.norm())));
    }
    // world z of the rotated +x axis
    let z = 2.0 * (q.x * q.z - q.w * q.y);
    Ok(z.clamp(-1.0, 1.0).asin().to_degrees())
}

/// One filter step: gyro integration plus a normalized gradient-descent
/// correction toward the measured gravity (and magnetic field when given).
pub fn ahrs_update(state: &AttitudeEstimate, sample: &ImuSample, beta: f64) -> Result<AttitudeEstimate> {
    if !sample.is_finite() {
        return Err(Error::domain(format!("non-finite IMU sample at t = {}", sample.timestamp)));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::domain(format!("filter gain must be non-negative, got {beta}")));
    }
    let dt = sample.timestamp - state.timestamp;
    if dt < 0.0 {
        return Err(Error::domain(format!(
            "IMU timestamp {} precedes state timestamp {}",
            sample.timestamp, state.timestamp
        )));
    }
    if dt == 0.0 {
        return Ok(*state);
    }

    let q = state.orientation;
    let (q0, q1, q2, q3) = (q.w, q.x, q.y, q.z);
    let (gx, gy, gz) = (sample.gyro.x, sample.gyro.y, sample.gyro.z);
    let mut dot = [
        0.5 * (-q1 * gx - q2 * gy - q3 * gz),
        0.5 * (q0 * gx + q2 * gz - q3 * gy),
        0.5 * (q0 * gy - q1 * gz + q3 * gx),
        0.5 * (q0 * gz + q1 * gy - q2 * gx),
    ];

    if sample.accel.norm() > 0.0 {
        let a = sample.accel.normalized();
        let step = match sample.mag.filter(|m| m.norm() > 0.0) {
            Some(m) => marg_gradient(&q, a, m.normalized()),
            None => imu_gradient(&q, a),
        };
        let n = (step.iter().map(|s| s * s).sum::<f64>()).sqrt();
        if n > 0.0 {
            for (d, s) in dot.iter_mut().zip(step) {
                *d -= beta * s / n;
            }
        }
    }

    let next = Quaternion::new(q0 + dot[0] * dt, q1 + dot[1] * dt, q2 + dot[2] * dt, q3 + dot[3] * dt).normalized();
    AttitudeEstimate::new(next, sample.timestamp)
}

fn imu_gradient(q: &Quaternion, a: Vec3) -> [f64; 4] {
    let (q0, q1, q2, q3) = (q.w, q.x, q.y, q.z);
    let (ax, ay, az) = (a.x, a.y, a.z);
    let (q1q1, q2q2) = (q1 * q1, q2 * q2);
    [
        4.0 * q0 * q2q2 + 2.0 * q2 * ax + 4.0 * q0 * q1q1 - 2.0 * q1 * ay,
        4.0 * q1 * q3 * q3 - 2.0 * q3 * ax + 4.0 * q0 * q0 * q1 - 2.0 * q0 * ay - 4.0 * q1
            + 8.0 * q1 * q1q1
            + 8.0 * q1 * q2q2
            + 4.0 * q1 * az,
        4.0 * q0 * q0 * q2 + 2.0 * q0 * ax + 4.0 * q2 * q3 * q3 - 2.0 * q3 * ay - 4.0 * q2
            + 8.0 * q2 * q1q1
            + 8.0 * q2 * q2q2
            + 4.0 * q2 * az,
        4.0 * q1q1 * q3 - 2.0 * q1 * ax + 4.0 * q2q2 * q3 - 2.0 * q2 * ay,
    ]
}

fn marg_gradient(q: &Quaternion, a: Vec3, m: Vec3) -> [f64; 4] {
    let (q0, q1, q2, q3) = (q.w, q.x, q.y, q.z);
    let (ax, ay, az) = (a.x, a.y, a.z);
    let (mx, my, mz) = (m.x, m.y, m.z);

    let (q0q1, q0q2, q0q3) = (q0 * q1, q0 * q2, q0 * q3);
    let (q1q1, q1q2, q1q3) = (q1 * q1, q1 * q2, q1 * q3);
    let (q2q2, q2q3, q3q3) = (q2 * q2, q2 * q3, q3 * q3);

    // reference field direction in the world frame, heading removed
    let h = q.rotate(m);
    let bx = (h.x * h.x + h.y * h.y).sqrt();
    let bz = h.z;

    // objective: predicted minus measured, gravity then magnetic field
    let f = [
        2.0 * (q1q3 - q0q2) - ax,
        2.0 * (q0q1 + q2q3) - ay,
        2.0 * (0.5 - q1q1 - q2q2) - az,
        2.0 * bx * (0.5 - q2q2 - q3q3) + 2.0 * bz * (q1q3 - q0q2) - mx,
        2.0 * bx * (q1q2 - q0q3) + 2.0 * bz * (q0q1 + q2q3) - my,
        2.0 * bx * (q0q2 + q1q3) + 2.0 * bz * (0.5 - q1q1 - q2q2) - mz,
    ];
    // Jacobian rows d f_i / d(q0, q1, q2, q3)
    let j = [
        [-2.0 * q2, 2.0 * q3, -2.0 * q0, 2.0 * q1],
        [2.0 * q1, 2.0 * q0, 2.0 * q3, 2.0 * q2],
        [0.0, -4.0 * q1, -4.0 * q2, 0.0],
        [
            -2.0 * bz * q2,
            2.0 * bz * q3,
            -4.0 * bx * q2 - 2.0 * bz * q0,
            -4.0 * bx * q3 + 2.0 * bz * q1,
        ],
        [
            -2.0 * bx * q3 + 2.0 * bz * q1,
            2.0 * bx * q2 + 2.0 * bz * q0,
            2.0 * bx * q1 + 2.0 * bz * q3,
            -2.0 * bx * q0 + 2.0 * bz * q2,
        ],
        [
            2.0 * bx * q2,
            2.0 * bx * q3 - 4.0 * bz * q1,
            2.0 * bx * q0 - 4.0 * bz * q2,
            2.0 * bx * q1,
        ],
    ];
    let mut g = [0.0; 4];
    for (row, fi) in j.iter().zip(f) {
        for (gk, jk) in g.iter_mut().zip(row) {
            *gk += jk * fi;
        }
    }
    g
}

/// Result of folding the filter over a recorded stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    /// One estimate per accepted sample.
    pub estimates: Vec<AttitudeEstimate>,
    /// Samples rejected as non-finite or out of order.
    pub rejected: usize,
}

/// Incremental filter state over a sample stream.
///
/// The first valid sample seeds roll and pitch from its accelerometer
/// reading (yaw zero); every later sample goes through [`ahrs_update`].
/// Non-finite and out-of-order samples are skipped and counted.
#[derive(Debug, Clone, PartialEq)]
pub struct AttitudeTracker {
    beta: f64,
    state: Option<AttitudeEstimate>,
    rejected: usize,
}

impl AttitudeTracker {
    pub fn new(beta: f64) -> Self {
        AttitudeTracker {
            beta,
            state: None,
            rejected: 0,
        }
    }

    /// Folds in one sample; returns the new estimate unless it was rejected.
    pub fn push(&mut self, sample: &ImuSample) -> Option<AttitudeEstimate> {
        let next = match &self.state {
            None if sample.is_finite() => Ok(AttitudeEstimate::from_gravity(sample.accel, sample.timestamp)),
            None => Err(Error::domain("non-finite sample")),
            Some(s) if sample.timestamp <= s.timestamp => Err(Error::domain("timestamp not increasing")),
            Some(s) => ahrs_update(s, sample, self.beta),
        };
        match next {
            Ok(est) => {
                self.state = Some(est);
                Some(est)
            }
            Err(_) => {
                self.rejected += 1;
                None
            }
        }
    }

    pub fn current(&self) -> Option<AttitudeEstimate> {
        self.state
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }
}

/// Runs the filter over a whole stream.
pub fn replay_imu(stream: &[ImuSample], beta: f64) -> Result<Replay> {
    if stream.is_empty() {
        return Err(Error::domain("IMU stream is empty"));
    }
    let mut tracker = AttitudeTracker::new(beta);
    let estimates: Vec<_> = stream.iter().filter_map(|s| tracker.push(s)).collect();
    if estimates.is_empty() {
        return Err(Error::domain("IMU stream has no valid samples"));
    }
    Ok(Replay {
        estimates,
        rejected: tracker.rejected(),
    })
}

/// Latest estimate at or before `t`, if any. `estimates` must be sorted by
/// timestamp.
pub fn latest_at(estimates: &[AttitudeEstimate], t: f64) -> Option<&AttitudeEstimate> {
    let idx = estimates.partition_point(|e| e.timestamp <= t);
    idx.checked_sub(1).map(|i| &estimates[i])
}

/// Single-writer, many-reader slot holding the most recent attitude.
#[derive(Debug, Clone, Default)]
pub struct AttitudeCell {
    inner: Arc<RwLock<Option<AttitudeEstimate>>>,
}

impl AttitudeCell {
    pub fn new() -> Self {
        AttitudeCell::default()
    }

    pub fn publish(&self, estimate: AttitudeEstimate) {
        *self.inner.write().expect("attitude lock poisoned") = Some(estimate);
    }

    pub fn latest(&self) -> Option<AttitudeEstimate> {
        *self.inner.read().expect("attitude lock poisoned")
    }
}
