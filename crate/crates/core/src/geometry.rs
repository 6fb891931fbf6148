//! Pose and angle primitives shared by every stage.
//!
//! Map-grid convention: `u` runs along columns, `v` along rows, and a heading
//! `theta` is measured counterclockwise in the (u, v) plane. At `theta = 0` the
//! BEV column axis (ego forward) lines up with `+u` and the BEV row axis (ego
//! left) with `+v`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::invalid(format!("angle must be finite, got {theta}")));
    }
    Ok(wrap_finite(theta))
}

pub(crate) fn wrap_finite(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let mut r = theta - TAU * ((theta - PI) / TAU).ceil();
    // ceil() can land one period off when theta sits within an ulp of a boundary.
    if r <= -PI {
        r += TAU;
    } else if r > PI {
        r -= TAU;
    }
    r
}

/// A planar pose in map-grid cells with heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPose", into = "RawPose")]
pub struct Pose {
    u: f64,
    v: f64,
    theta: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPose {
    u: f64,
    v: f64,
    theta: f64,
}

impl TryFrom<RawPose> for Pose {
    type Error = Error;

    fn try_from(raw: RawPose) -> Result<Self> {
        Pose::new(raw.u, raw.v, raw.theta)
    }
}

impl From<Pose> for RawPose {
    fn from(p: Pose) -> Self {
        RawPose {
            u: p.u,
            v: p.v,
            theta: p.theta,
        }
    }
}

impl Pose {
    pub fn new(u: f64, v: f64, theta: f64) -> Result<Self> {
        if !u.is_finite() || !v.is_finite() {
            return Err(Error::invalid(format!("pose position must be finite, got ({u}, {v})")));
        }
        Ok(Pose {
            u,
            v,
            theta: wrap_angle(theta)?,
        })
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Same heading, position multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Pose::new(self.u * factor, self.v * factor, self.theta)
    }
}

/// Maps a BEV point, given as `(column, row)` offsets from the BEV grid
/// center, into map-grid `(u, v)` coordinates.
pub fn apply_pose(p: (f64, f64), pose: &Pose) -> (f64, f64) {
    let (s, c) = pose.theta.sin_cos();
    (c * p.0 - s * p.1 + pose.u, s * p.0 + c * p.1 + pose.v)
}

/// Location error in meters (L2) and heading error in degrees (absolute,
/// shortest arc).
pub fn pose_error(pred: &Pose, gt: &Pose, cell_size: f64) -> Result<(f64, f64)> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(Error::invalid(format!("cell size must be positive, got {cell_size}")));
    }
    let loc = cell_size * (pred.u - gt.u).hypot(pred.v - gt.v);
    let ori = wrap_finite(pred.theta - gt.theta).abs().to_degrees();
    Ok((loc, ori))
}
