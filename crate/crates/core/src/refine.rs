//! Constraint enforcement: projects an unconstrained tensor estimate onto
//! tensors that are generated by a pair of yaw-structured camera matrices.
//!
//! The epipoles are read from the null vectors of the three slices. With the
//! epipoles fixed, the tensor is linear in the six remaining camera entries
//! `a`, so `q = E a` and the algebraic error `|A E a|` is minimized over
//! `a` by one small SVD.

use nalgebra::{DMatrix, Matrix3x4, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::{tensor_from_cameras, Mat3, QEntries, TrifocalTensor, Vec3, Q_LEN};
use crate::linear::{smallest_right_singular, LinearSystem};

/// Left (`u_i^T T_i = 0`) and right (`T_i v_i = 0`) null vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullVectors {
    pub left: [Vec3; 3],
    pub right: [Vec3; 3],
}

/// Epipoles of view 1 in views 2 and 3, unit norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epipoles {
    pub e2: Vec3,
    pub e3: Vec3,
}

/// Free entries `(a1..a6)` of the two structured camera matrices.
pub type AParam = SVector<f64, 6>;

pub type EMatrix = SMatrix<f64, Q_LEN, 6>;

fn smallest_singular_vectors(m: &Mat3) -> (Vec3, Vec3, nalgebra::Vector3<f64>) {
    let svd = m.svd(true, true);
    let (i, _) = svd.singular_values.argmin();
    let u = svd.u.expect("u").column(i).into_owned();
    let v = svd.v_t.expect("v_t").row(i).transpose();
    (u, v, svd.singular_values)
}

pub fn null_vectors(t: &TrifocalTensor) -> Result<NullVectors> {
    let scale = t.slices.iter().map(|s| s.amax()).fold(0.0, f64::max);
    let mut left = [Vec3::zeros(); 3];
    let mut right = [Vec3::zeros(); 3];
    for (i, slice) in t.slices.iter().enumerate() {
        let (u, v, sv) = smallest_singular_vectors(slice);
        if !(sv.max() > 1e-12 * scale) {
            return Err(Error::SliceRankCollapse { slice: i + 1 });
        }
        left[i] = u;
        right[i] = v;
    }
    Ok(NullVectors { left, right })
}

fn first_nonzero_positive(v: Vec3) -> Vec3 {
    match v.iter().find(|c| c.abs() > 1e-9) {
        Some(&c) if c < 0.0 => -v,
        _ => v,
    }
}

fn common_perpendicular(vs: &[Vec3; 3]) -> Result<Vec3> {
    let m = Mat3::from_rows(&[vs[0].transpose(), vs[1].transpose(), vs[2].transpose()]);
    let svd = m.svd(false, true);
    let mut sv: Vec<(usize, f64)> = svd.singular_values.iter().copied().enumerate().collect();
    sv.sort_by(|a, b| b.1.total_cmp(&a.1));
    if !(sv[1].1 > 1e-10 * sv[0].1) {
        return Err(Error::EpipoleIndeterminate);
    }
    let e = svd.v_t.expect("v_t").row(sv[2].0).transpose();
    Ok(first_nonzero_positive(e.normalize()))
}

pub fn epipoles(t: &TrifocalTensor) -> Result<Epipoles> {
    let nv = null_vectors(t)?;
    Ok(Epipoles {
        e2: common_perpendicular(&nv.left)?,
        e3: common_perpendicular(&nv.right)?,
    })
}

/// Camera matrices of views 2 and 3 for given `a` and epipoles.
pub fn structured_cameras(a: &AParam, ep: &Epipoles) -> (Matrix3x4<f64>, Matrix3x4<f64>) {
    let cam = |c: f64, s: f64, y: f64, e: &Vec3| {
        Matrix3x4::new(c, 0.0, s, e.x, 0.0, y, 0.0, e.y, -s, 0.0, c, e.z)
    };
    (cam(a[0], a[1], a[2], &ep.e2), cam(a[3], a[4], a[5], &ep.e3))
}

pub fn tensor_from_a(a: &AParam, ep: &Epipoles) -> TrifocalTensor {
    let (p2, p3) = structured_cameras(a, ep);
    let mut t = TrifocalTensor {
        slices: tensor_from_cameras(&p2, &p3),
        q: None,
    };
    t.q = Some(t.read_q());
    t
}

/// The linear map `a -> q` for fixed epipoles.
pub fn e_matrix(ep: &Epipoles) -> EMatrix {
    let mut e = EMatrix::zeros();
    for j in 0..6 {
        let a = AParam::from_fn(|i, _| if i == j { 1.0 } else { 0.0 });
        e.set_column(j, &tensor_from_a(&a, ep).read_q());
    }
    e
}

#[derive(Debug, Clone)]
pub struct Enforced {
    pub q: QEntries,
    pub tensor: TrifocalTensor,
    pub a: AParam,
    pub epipoles: Epipoles,
}

/// Minimizes `|A E a|` over unit `a`, then rescales so that `|E a| = 1`.
/// The sign of the result follows `q_est`.
pub fn enforce(q_est: &QEntries, sys: &LinearSystem) -> Result<Enforced> {
    let ep = epipoles(&TrifocalTensor::from_q(q_est))?;
    let e = e_matrix(&ep);
    let esv = e.singular_values();
    if !(esv.min() > 1e-10 * esv.max()) {
        return Err(Error::EnforcementDegenerate);
    }
    let e_dyn = DMatrix::from_fn(Q_LEN, 6, |i, j| e[(i, j)]);
    let ae = &sys.a * e_dyn;
    let (_, v) = smallest_right_singular(&ae);
    let mut a = AParam::from_iterator(v.iter().copied());
    let mut q = e * a;
    let n = q.norm();
    if !(n > 0.0) {
        return Err(Error::EnforcementDegenerate);
    }
    let sign = if q.dot(q_est) < 0.0 { -1.0 } else { 1.0 };
    a *= sign / n;
    q *= sign / n;
    let tensor = tensor_from_a(&a, &ep);
    Ok(Enforced {
        q,
        tensor,
        a,
        epipoles: ep,
    })
}
