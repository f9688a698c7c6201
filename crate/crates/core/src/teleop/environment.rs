//! Tool-tissue interaction stubs and scripted input profiles.

use nalgebra::{Unit, Vector3};
use thiserror::Error;

use crate::kinematics::ToolPose;
use crate::sensor::Wrench3;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("profile has no waypoints")]
    Empty,
    #[error("waypoint times must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("waypoint {0} has non-finite values")]
    NonFinite(usize),
}

/// Piecewise-linear function of time, held constant outside its waypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile<const N: usize> {
    points: Vec<(u64, [f64; N])>,
}

impl<const N: usize> Profile<N> {
    pub fn new(points: Vec<(u64, [f64; N])>) -> Result<Self, ProfileError> {
        if points.is_empty() {
            return Err(ProfileError::Empty);
        }
        for (i, (_, v)) in points.iter().enumerate() {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ProfileError::NonFinite(i));
            }
            if i > 0 && points[i - 1].0 >= points[i].0 {
                return Err(ProfileError::NotIncreasing(i));
            }
        }
        Ok(Profile { points })
    }

    pub fn constant(v: [f64; N]) -> Self {
        Profile { points: vec![(0, v)] }
    }

    pub fn sample(&self, t_ms: u64) -> [f64; N] {
        let pts = &self.points;
        let idx = pts.partition_point(|(t, _)| *t <= t_ms);
        if idx == 0 {
            return pts[0].1;
        }
        if idx == pts.len() {
            return pts[idx - 1].1;
        }
        let (t0, a) = pts[idx - 1];
        let (t1, b) = pts[idx];
        let s = (t_ms - t0) as f64 / (t1 - t0) as f64;
        std::array::from_fn(|i| a[i] + s * (b[i] - a[i]))
    }
}

/// Elastic wall: a half-space behind a plane that pushes back along its
/// normal in proportion to how far the tool tip has entered it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringWall {
    /// A point on the wall surface, mm.
    pub point: Vector3<f64>,
    /// Outward normal, pointing into free space.
    pub normal: Unit<Vector3<f64>>,
    /// N/mm.
    pub stiffness: f64,
    /// Distance from the sensor to the tool tip along tool z, mm.
    pub tip_offset: f64,
}

impl SpringWall {
    pub fn penetration(&self, tip: &Vector3<f64>) -> f64 {
        (-(tip - self.point).dot(&self.normal)).max(0.0)
    }

    /// Sensor-frame wrench for a tool at `pose`. The contact force acts at
    /// the tip, `tip_offset` along the tool axis, so lateral force shows up
    /// as Mx and My; the in-plane force itself is not sensed.
    pub fn wrench(&self, pose: &ToolPose) -> Wrench3 {
        let depth = self.penetration(&pose.position);
        if depth == 0.0 {
            return Wrench3::ZERO;
        }
        let world = self.normal.into_inner() * (self.stiffness * depth);
        let local = pose.orientation.inverse() * world;
        Wrench3::new(local.z, -self.tip_offset * local.y, self.tip_offset * local.x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Environment {
    /// Free space.
    None,
    /// Wrench replayed from a time profile, independent of the slave pose.
    Scripted(Profile<3>),
    Wall(SpringWall),
}

impl Environment {
    pub fn wrench(&self, t_ms: u64, slave: &ToolPose) -> Wrench3 {
        match self {
            Environment::None => Wrench3::ZERO,
            Environment::Scripted(p) => {
                let [fz, mx, my] = p.sample(t_ms);
                Wrench3::new(fz, mx, my)
            }
            Environment::Wall(w) => w.wrench(slave),
        }
    }
}
