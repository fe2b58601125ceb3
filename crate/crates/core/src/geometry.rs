//! Camera model, gravity alignment and the yaw-only three-view geometry.
//!
//! Conventions used throughout the crate:
//!
//! * Image coordinates are K-normalized and then rotated by the alignment
//!   rotation of their view, so that the camera y axis is parallel to gravity
//!   (y points down, along gravity).
//! * View `k` of a triplet observes a point `X` (expressed in the aligned frame
//!   of view 1) as `x_k ~ R_k (X - t_k)`, i.e. `P_k = [R_k | -R_k t_k]` where
//!   `R_k` is a rotation about the y axis and `t_k` is the camera centre.

use nalgebra::{Matrix3, Matrix3x4, SVector, Vector2, Vector3};

use crate::error::{Error, Result};

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

/// Number of free tensor entries of the yaw-only trifocal tensor.
pub const Q_LEN: usize = 17;

/// The entries Q1..Q17 (stored zero-based).
pub type QEntries = SVector<f64, Q_LEN>;

/// Where each Q entry lands in the three tensor slices:
/// `(slice, row, col, q index, sign)`.
pub const Q_PLACEMENTS: [(usize, usize, usize, usize, f64); 21] = [
    // T1
    (0, 0, 0, 0, 1.0),
    (0, 0, 1, 1, 1.0),
    (0, 0, 2, 2, 1.0),
    (0, 1, 0, 3, 1.0),
    (0, 1, 2, 4, 1.0),
    (0, 2, 0, 5, 1.0),
    (0, 2, 1, 6, 1.0),
    (0, 2, 2, 7, 1.0),
    // T2
    (1, 0, 1, 8, 1.0),
    (1, 1, 0, 9, 1.0),
    (1, 1, 1, 10, 1.0),
    (1, 1, 2, 11, 1.0),
    (1, 2, 1, 12, 1.0),
    // T3
    (2, 0, 0, 13, 1.0),
    (2, 0, 1, 6, -1.0),
    (2, 0, 2, 14, 1.0),
    (2, 1, 0, 4, -1.0),
    (2, 1, 2, 3, 1.0),
    (2, 2, 0, 15, 1.0),
    (2, 2, 1, 1, 1.0),
    (2, 2, 2, 16, 1.0),
];

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !cx.is_finite() || !cy.is_finite() {
            return Err(Error::InvalidIntrinsics(format!(
                "fx={fx}, fy={fy}, cx={cx}, cy={cy}"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// `K^-1 (u, v, 1)^T`.
    pub fn normalize(&self, pixel: &Vector2<f64>) -> Vec3 {
        Vec3::new(
            (pixel.x - self.cx) / self.fx,
            (pixel.y - self.cy) / self.fy,
            1.0,
        )
    }

    /// Pixel coordinates of a camera-frame point.
    pub fn project(&self, p: &Vec3) -> Vector2<f64> {
        Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

pub fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation taking camera coordinates into the gravity-aligned frame of the
/// same view.
///
/// The camera frame relates to the aligned frame through
/// `X_cam = rot_x(pitch) * rot_z(roll) * X_aligned`, so the stored matrix is
/// `rot_z(-roll) * rot_x(-pitch)`. It sends the "up" direction measured by an
/// accelerometer at rest onto the camera `-y` axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentRotation {
    pub pitch: f64,
    pub roll: f64,
    pub matrix: Mat3,
}

impl AlignmentRotation {
    pub fn new(pitch: f64, roll: f64) -> Self {
        Self {
            pitch,
            roll,
            matrix: rot_z(-roll) * rot_x(-pitch),
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0)
    }

    /// Recovers pitch and roll from a camera-from-world rotation whose world
    /// y axis points along gravity. Yaw about the gravity axis is factored out.
    pub fn from_camera_rotation(r_cam_world: &Mat3) -> Result<Self> {
        // gravity (world +y) seen from the camera: rot_x(p) * rot_z(r) * e_y
        let g = r_cam_world.column(1);
        let roll = (-g.x).clamp(-1.0, 1.0).asin();
        let pitch = g.z.atan2(g.y);
        let limit = 89f64.to_radians();
        if pitch.abs() > limit || roll.abs() > limit {
            return Err(Error::GimbalLock { pitch, roll });
        }
        Ok(Self::new(pitch, roll))
    }
}

/// A K-normalized, gravity-aligned homogeneous image point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedObservation {
    pub point: Vec3,
    /// 1, 2 or 3.
    pub view: u8,
}

/// Returns `R_imu * K^-1 * (u, v, 1)^T`, rescaled so that `z = 1`.
pub fn normalize_and_align(
    pixel: &Vector2<f64>,
    k: &CameraIntrinsics,
    alignment: &AlignmentRotation,
    view: u8,
) -> Result<AlignedObservation> {
    let p = alignment.matrix * k.normalize(pixel);
    if p.z.abs() < 1e-12 {
        return Err(Error::PointAtInfinity);
    }
    Ok(AlignedObservation {
        point: p / p.z,
        view,
    })
}

/// Aligned observations of one 3D point in views 1, 2 and 3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointTriplet {
    pub x1: Vec3,
    pub x2: Vec3,
    pub x3: Vec3,
}

impl PointTriplet {
    pub fn new(x1: Vec3, x2: Vec3, x3: Vec3) -> Self {
        Self { x1, x2, x3 }
    }

    pub fn from_observations(
        o1: &AlignedObservation,
        o2: &AlignedObservation,
        o3: &AlignedObservation,
    ) -> Result<Self> {
        if (o1.view, o2.view, o3.view) != (1, 2, 3) {
            return Err(Error::DegenerateSample(format!(
                "view indices ({}, {}, {}) are not (1, 2, 3)",
                o1.view, o2.view, o3.view
            )));
        }
        Ok(Self::new(o1.point, o2.point, o3.point))
    }

    pub fn view(&self, k: usize) -> &Vec3 {
        match k {
            0 => &self.x1,
            1 => &self.x2,
            _ => &self.x3,
        }
    }
}

/// Motion of view `k` relative to view 1 in the aligned frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YawPose {
    /// Yaw in radians, wrapped to (-pi, pi].
    pub theta: f64,
    /// Camera centre in the aligned frame of view 1.
    pub t: Vec3,
}

impl YawPose {
    pub fn new(theta: f64, t: Vec3) -> Self {
        Self {
            theta: wrap_angle(theta),
            t,
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, Vec3::zeros())
    }

    pub fn rotation(&self) -> Mat3 {
        yaw_rotation(self.theta)
    }

    /// Cayley scalar `tan(theta / 2)`.
    pub fn cayley(&self) -> f64 {
        (self.theta / 2.0).tan()
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = a.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

/// Rotation of view `k` relative to view 1 in unaligned camera coordinates
/// together with the centre of camera `k` expressed in camera-1 coordinates,
/// so that `P_k = [R | -R t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullPose {
    pub rotation: Mat3,
    pub t: Vec3,
}

impl FullPose {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            t: Vec3::zeros(),
        }
    }

    /// Translation in the `X_k = R X_1 + tau` convention.
    pub fn translation(&self) -> Vec3 {
        -(self.rotation * self.t)
    }
}

pub fn yaw_rotation(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn cayley_rotation(s: f64) -> Mat3 {
    let s2 = s * s;
    let d = 1.0 / (1.0 + s2);
    Mat3::new(
        (1.0 - s2) * d,
        0.0,
        2.0 * s * d,
        0.0,
        1.0,
        0.0,
        -2.0 * s * d,
        0.0,
        (1.0 - s2) * d,
    )
}

pub fn projection_matrix(p: &YawPose) -> Matrix3x4<f64> {
    let (s, c) = p.theta.sin_cos();
    let t = &p.t;
    Matrix3x4::new(
        c,
        0.0,
        s,
        -c * t.x - s * t.z,
        0.0,
        1.0,
        0.0,
        -t.y,
        -s,
        0.0,
        c,
        s * t.x - c * t.z,
    )
}

/// Three 3x3 slices, optionally carrying the Q1..Q17 parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct TrifocalTensor {
    pub slices: [Mat3; 3],
    pub q: Option<QEntries>,
}

impl TrifocalTensor {
    pub fn zeros() -> Self {
        Self {
            slices: [Mat3::zeros(); 3],
            q: None,
        }
    }

    /// Places the Q entries into the slices.
    pub fn from_q(q: &QEntries) -> Self {
        let mut slices = [Mat3::zeros(); 3];
        for &(s, r, c, m, sign) in Q_PLACEMENTS.iter() {
            slices[s][(r, c)] = sign * q[m];
        }
        Self {
            slices,
            q: Some(*q),
        }
    }

    /// Reads Q entries back from their first placement.
    pub fn read_q(&self) -> QEntries {
        let mut q = QEntries::zeros();
        let mut seen = [false; Q_LEN];
        for &(s, r, c, m, sign) in Q_PLACEMENTS.iter() {
            if !seen[m] {
                q[m] = sign * self.slices[s][(r, c)];
                seen[m] = true;
            }
        }
        q
    }

    /// `sum_i w_i T_i`.
    pub fn contract(&self, w: &Vec3) -> Mat3 {
        self.slices[0] * w.x + self.slices[1] * w.y + self.slices[2] * w.z
    }

    pub fn max_abs_diff(&self, other: &TrifocalTensor) -> f64 {
        (0..3)
            .map(|i| (self.slices[i] - other.slices[i]).amax())
            .fold(0.0, f64::max)
    }
}

/// Q1..Q17 of the yaw-only tensor for the given pose pair.
pub fn q_from_poses(p2: &YawPose, p3: &YawPose) -> QEntries {
    let (s2, c2) = p2.theta.sin_cos();
    let (s3, c3) = p3.theta.sin_cos();
    let (t2, t3) = (&p2.t, &p3.t);
    let q9 = c2 * t2.x + s2 * t2.z;
    let q10 = -c3 * t3.x - s3 * t3.z;
    let q12 = s3 * t3.x - c3 * t3.z;
    let q13 = c2 * t2.z - s2 * t2.x;
    let mut q = QEntries::zeros();
    q[0] = c3 * q9 + c2 * q10;
    q[1] = -c2 * t3.y;
    q[2] = c2 * q12 - s3 * q9;
    q[3] = c3 * t2.y;
    q[4] = -s3 * t2.y;
    q[5] = -s2 * q10 + c3 * q13;
    q[6] = s2 * t3.y;
    q[7] = -s2 * q12 - s3 * q13;
    q[8] = q9;
    q[9] = q10;
    q[10] = t2.y - t3.y;
    q[11] = q12;
    q[12] = q13;
    q[13] = s3 * q9 + s2 * q10;
    q[14] = s2 * q12 + c3 * q9;
    q[15] = s3 * q13 + c2 * q10;
    q[16] = c2 * q12 + c3 * q13;
    q
}

/// `T_i = a_i b_4^T - a_4 b_i^T` from the columns of two camera matrices
/// (the first camera being `[I | 0]`).
pub fn tensor_from_cameras(p2: &Matrix3x4<f64>, p3: &Matrix3x4<f64>) -> [Mat3; 3] {
    let a4 = p2.column(3).into_owned();
    let b4 = p3.column(3).into_owned();
    std::array::from_fn(|i| p2.column(i) * b4.transpose() - a4 * p3.column(i).transpose())
}

pub fn trifocal_from_poses(p2: &YawPose, p3: &YawPose) -> Result<TrifocalTensor> {
    if p2.t.norm() == 0.0 && p3.t.norm() == 0.0 {
        return Err(Error::CoincidentCenters);
    }
    let slices = tensor_from_cameras(&projection_matrix(p2), &projection_matrix(p3));
    Ok(TrifocalTensor {
        slices,
        q: Some(q_from_poses(p2, p3)),
    })
}

/// `[x2]_x (sum_i x1_i T_i) [x3]_x`; zero for a consistent triplet.
pub fn triplet_residual(trip: &PointTriplet, t: &TrifocalTensor) -> Mat3 {
    skew(&trip.x2) * t.contract(&trip.x1) * skew(&trip.x3)
}

/// Undoes the gravity alignment of a yaw-only motion.
///
/// `a_first` aligns view 1 and `a_k` aligns view `k`.
pub fn recover_unaligned_pose(
    p: &YawPose,
    a_first: &AlignmentRotation,
    a_k: &AlignmentRotation,
) -> FullPose {
    FullPose {
        rotation: a_k.matrix.transpose() * p.rotation() * a_first.matrix,
        t: a_first.matrix.transpose() * p.t,
    }
}

/// Inverse of [`recover_unaligned_pose`]. The yaw is read from the aligned
/// rotation, which is exactly a y-axis rotation when the alignments are
/// consistent with the pose.
pub fn align_full_pose(
    pose: &FullPose,
    a_first: &AlignmentRotation,
    a_k: &AlignmentRotation,
) -> YawPose {
    let r = a_k.matrix * pose.rotation * a_first.matrix.transpose();
    let theta = (r[(0, 2)] - r[(2, 0)]).atan2(r[(0, 0)] + r[(2, 2)]);
    YawPose::new(theta, a_first.matrix * pose.t)
}

/// Relative motion from view `i` to view `j` given both relative to view 1.
pub fn relative_full(from: &FullPose, to: &FullPose) -> FullPose {
    FullPose {
        rotation: to.rotation * from.rotation.transpose(),
        t: from.rotation * (to.t - from.t),
    }
}

/// Linear triangulation of a triplet with `P1 = [I | 0]`.
pub fn triangulate(p2: &YawPose, p3: &YawPose, trip: &PointTriplet) -> Option<Vec3> {
    let cams = [
        Matrix3x4::identity(),
        projection_matrix(p2),
        projection_matrix(p3),
    ];
    let mut a = nalgebra::SMatrix::<f64, 6, 4>::zeros();
    for (k, cam) in cams.iter().enumerate() {
        let x = trip.view(k);
        a.set_row(2 * k, &(cam.row(0) * x.z - cam.row(2) * x.x));
        a.set_row(2 * k + 1, &(cam.row(1) * x.z - cam.row(2) * x.y));
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (imin, _) = svd.singular_values.argmin();
    let h = v_t.row(imin);
    if h[3].abs() < 1e-12 * h.norm() {
        return None;
    }
    Some(Vec3::new(h[0], h[1], h[2]) / h[3])
}

/// Points in front of all three cameras minus points behind all of them.
pub fn cheirality_score(p2: &YawPose, p3: &YawPose, sample: &[PointTriplet]) -> i64 {
    let mut score = 0;
    for trip in sample {
        let Some(x) = triangulate(p2, p3, trip) else {
            continue;
        };
        let depths = [
            x.z,
            (p2.rotation() * (x - p2.t)).z,
            (p3.rotation() * (x - p3.t)).z,
        ];
        if depths.iter().all(|&d| d > 0.0) {
            score += 1;
        } else if depths.iter().all(|&d| d < 0.0) {
            score -= 1;
        }
    }
    score
}

/// Negates both translations when that puts more sample points in front of
/// the cameras.
pub fn fix_translation_sign(
    p2: YawPose,
    p3: YawPose,
    sample: &[PointTriplet],
) -> (YawPose, YawPose) {
    let flipped = (YawPose { t: -p2.t, ..p2 }, YawPose { t: -p3.t, ..p3 });
    if cheirality_score(&flipped.0, &flipped.1, sample) > cheirality_score(&p2, &p3, sample) {
        flipped
    } else {
        (p2, p3)
    }
}
