//! Noise-free yaw-only problems in aligned coordinates, used by tests and
//! the oracle checks of the benchmarks.

use rand::Rng;

use crate::geometry::{PointTriplet, Vec3, YawPose};

#[derive(Debug, Clone)]
pub struct YawProblem {
    pub p2: YawPose,
    pub p3: YawPose,
    /// 3D points in the aligned frame of view 1.
    pub points: Vec<Vec3>,
    pub triplets: Vec<PointTriplet>,
}

/// Observes `x` from a camera; `None` when it lies too close or behind.
pub fn observe(pose: &YawPose, x: &Vec3) -> Option<Vec3> {
    let c = pose.rotation() * (x - pose.t);
    (c.z > 0.5).then(|| c / c.z)
}

pub fn triplet_of(p2: &YawPose, p3: &YawPose, x: &Vec3) -> Option<PointTriplet> {
    Some(PointTriplet::new(
        observe(&YawPose::identity(), x)?,
        observe(p2, x)?,
        observe(p3, x)?,
    ))
}

/// A random pose pair with yaw in +-0.6 rad, centres in the unit box and
/// `n` points at depth 3..8 visible in all three views.
pub fn yaw_problem<R: Rng + ?Sized>(rng: &mut R, n: usize) -> YawProblem {
    let unit = |rng: &mut R| {
        Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
    };
    let p2 = YawPose::new(rng.random_range(-0.6..0.6), unit(rng));
    let p3 = YawPose::new(rng.random_range(-0.6..0.6), unit(rng));
    let mut points = Vec::with_capacity(n);
    let mut triplets = Vec::with_capacity(n);
    while points.len() < n {
        let z: f64 = rng.random_range(3.0..8.0);
        let x = Vec3::new(
            rng.random_range(-0.5..0.5) * z,
            rng.random_range(-0.4..0.4) * z,
            z,
        );
        if let Some(t) = triplet_of(&p2, &p3, &x) {
            points.push(x);
            triplets.push(t);
        }
    }
    YawProblem {
        p2,
        p3,
        points,
        triplets,
    }
}
