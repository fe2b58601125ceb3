//! Linear closed-form solver from four point triplets.
//!
//! Every entry of the incidence residual `[x2]_x (sum x1_i T_i) [x3]_x` is
//! linear in the 17 tensor parameters, so four triplets give a 16x17
//! homogeneous system whose null vector is the tensor. Yaw angles and
//! translations are then read off the Q entries.

use nalgebra::{DMatrix, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::{
    skew, trifocal_from_poses, PointTriplet, QEntries, YawPose, Q_LEN, Q_PLACEMENTS,
};
use crate::refine;
use crate::solver::TripletModel;

/// Residual positions (row-major index into the 3x3 residual) kept per
/// triplet: (1,1), (1,2), (2,1), (2,2).
pub const DEFAULT_ROWS: [usize; 4] = [0, 1, 3, 4];

/// Below this ratio of the smallest to the largest singular value a
/// four-row block is treated as rank deficient.
const ROW_RANK_TOL: f64 = 1e-9;

/// Below this `sigma_16 / sigma_1` the null space is not one-dimensional.
const RANK_TOL: f64 = 1e-10;

/// `sin` of the angle between the horizontal translation components below
/// which the closed-form yaw of view 2 is replaced by the joint fit.
const EXTRACTION_SIN_TOL: f64 = 0.1;

/// Coefficients of all nine residual entries with respect to Q1..Q17.
pub fn triplet_equations(trip: &PointTriplet) -> SMatrix<f64, 9, Q_LEN> {
    let x2 = skew(&trip.x2);
    let x3 = skew(&trip.x3);
    let mut out = SMatrix::<f64, 9, Q_LEN>::zeros();
    for j in 0..3 {
        for k in 0..3 {
            let row = 3 * j + k;
            for &(s, r, c, m, sign) in Q_PLACEMENTS.iter() {
                out[(row, m)] += sign * trip.x1[s] * x2[(j, r)] * x3[(c, k)];
            }
        }
    }
    out
}

/// Picks four independent equations of one triplet, preferring
/// [`DEFAULT_ROWS`].
fn independent_rows(eqs: &SMatrix<f64, 9, Q_LEN>) -> [usize; 4] {
    let block = |idx: &[usize]| DMatrix::from_fn(idx.len(), Q_LEN, |i, j| eqs[(idx[i], j)]);
    let sv = block(&DEFAULT_ROWS).singular_values();
    let (max, min) = sv
        .iter()
        .fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    if max > 0.0 && min > ROW_RANK_TOL * max {
        return DEFAULT_ROWS;
    }
    // greedy pivoted selection: Gram-Schmidt on the nine rows
    let mut chosen: Vec<usize> = Vec::with_capacity(4);
    let mut basis: Vec<SVector<f64, Q_LEN>> = Vec::new();
    for _ in 0..4 {
        let mut best = None;
        let mut best_norm = -1.0;
        for r in 0..9 {
            if chosen.contains(&r) {
                continue;
            }
            let mut v: SVector<f64, Q_LEN> = eqs.row(r).transpose();
            for b in &basis {
                v -= b * b.dot(&v);
            }
            let n = v.norm();
            if n > best_norm {
                best_norm = n;
                best = Some((r, v));
            }
        }
        let (r, v) = best.expect("nine rows");
        chosen.push(r);
        if best_norm > 0.0 {
            basis.push(v / best_norm);
        }
    }
    chosen.sort_unstable();
    [chosen[0], chosen[1], chosen[2], chosen[3]]
}

/// Stacked equations `A q = 0` over a set of triplets.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    /// (triplet index, residual entry index) for every row.
    pub rows: Vec<(usize, usize)>,
}

fn check_distinct(trips: &[PointTriplet]) -> Result<()> {
    for i in 0..trips.len() {
        for j in (i + 1)..trips.len() {
            let d = (0..3)
                .map(|k| (trips[i].view(k) - trips[j].view(k)).amax())
                .fold(0.0, f64::max);
            if d < 1e-12 {
                return Err(Error::DegenerateSample(format!(
                    "triplets {i} and {j} are identical"
                )));
            }
        }
    }
    Ok(())
}

/// Four independent equations per triplet for any number of distinct
/// triplets.
pub fn build_rows(trips: &[PointTriplet]) -> Result<LinearSystem> {
    check_distinct(trips)?;
    let mut a = DMatrix::zeros(4 * trips.len(), Q_LEN);
    let mut rows = Vec::with_capacity(4 * trips.len());
    for (ti, trip) in trips.iter().enumerate() {
        let eqs = triplet_equations(trip);
        for (k, &r) in independent_rows(&eqs).iter().enumerate() {
            a.row_mut(4 * ti + k).copy_from(&eqs.row(r));
            rows.push((ti, r));
        }
    }
    Ok(LinearSystem { a, rows })
}

/// The 16x17 system of four triplets.
pub fn build_system(trips: &[PointTriplet]) -> Result<LinearSystem> {
    if trips.len() != 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: trips.len(),
        });
    }
    build_rows(trips)
}

/// Unit null vector of a linear system.
#[derive(Debug, Clone)]
pub struct NullVector {
    pub q: QEntries,
    /// All 17 singular values in descending order (zero-padded when the
    /// system has fewer than 17 rows).
    pub singular_values: Vec<f64>,
}

impl NullVector {
    /// `sigma_16 / sigma_15`.
    pub fn conditioning(&self) -> f64 {
        self.singular_values[15] / self.singular_values[14]
    }

    pub fn sigma_min(&self) -> f64 {
        self.singular_values[16]
    }
}

/// Right singular vector `v` and sorted singular values of a matrix with
/// `cols` columns, padding rows so the full right basis is available.
pub(crate) fn smallest_right_singular(a: &DMatrix<f64>) -> (Vec<f64>, nalgebra::DVector<f64>) {
    let cols = a.ncols();
    let padded = if a.nrows() < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.rows_mut(0, a.nrows()).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let last = *order.last().expect("non-empty");
    (sv, v_t.row(last).transpose())
}

pub fn solve_nullvector(sys: &LinearSystem) -> Result<NullVector> {
    let (sv, v) = smallest_right_singular(&sys.a);
    let s1 = sv[0];
    let s16 = sv[Q_LEN - 2];
    if !(s1 > 0.0) || s16 < RANK_TOL * s1 {
        return Err(Error::RankDeficient {
            ratio: if s1 > 0.0 { s16 / s1 } else { 0.0 },
        });
    }
    let q = QEntries::from_iterator(v.iter().copied());
    Ok(NullVector {
        q: q / q.norm(),
        singular_values: sv,
    })
}

/// Yaw sines and cosines `(S2, C2, S3, C3)` from the Q entries, without
/// unit-circle normalization.
fn yaw_sin_cos(q: &QEntries) -> Result<[f64; 4]> {
    let qq = |m: usize| q[m - 1];
    let d = qq(10) * qq(13) - qq(9) * qq(12);
    let u = qq(9).hypot(qq(13));
    let w = qq(10).hypot(qq(12));
    if d.abs() > EXTRACTION_SIN_TOL * u * w && d.abs() > 1e-12 * q.norm_squared() {
        let s2 = (qq(8) * qq(9) + qq(13) * qq(14)) / d;
        let c2 = (qq(1) * qq(13) - qq(9) * qq(17)) / d;
        let n = s2.hypot(c2);
        let (s2, c2) = (s2 / n, c2 / n);
        // least-squares form of the view-3 ratios, exact on consistent data
        let den = u * u;
        let s3 = (qq(9) * (qq(14) - s2 * qq(10)) - qq(13) * (qq(8) + s2 * qq(12))) / den;
        let c3 = (qq(9) * (qq(1) - c2 * qq(10)) + qq(13) * (qq(17) - c2 * qq(12))) / den;
        return Ok([s2, c2, s3, c3]);
    }
    joint_sin_cos(q)
}

/// Fits `z = (C2, S2, C3, S3)` to every Q relation that is linear in `z`.
fn joint_sin_cos(q: &QEntries) -> Result<[f64; 4]> {
    let qq = |m: usize| q[m - 1];
    #[rustfmt::skip]
    let m = SMatrix::<f64, 10, 4>::from_row_slice(&[
        qq(10), 0.0, qq(9), 0.0,
        qq(12), 0.0, 0.0, -qq(9),
        0.0, -qq(10), qq(13), 0.0,
        0.0, -qq(12), 0.0, -qq(13),
        0.0, qq(10), 0.0, qq(9),
        0.0, qq(12), qq(9), 0.0,
        qq(10), 0.0, 0.0, qq(13),
        qq(12), 0.0, qq(13), 0.0,
        qq(7), qq(2), 0.0, 0.0,
        0.0, 0.0, qq(5), qq(4),
    ]);
    let b = SVector::<f64, 10>::from_column_slice(&[
        qq(1),
        qq(3),
        qq(6),
        qq(8),
        qq(14),
        qq(15),
        qq(16),
        qq(17),
        0.0,
        0.0,
    ]);
    let svd = m.svd(true, true);
    let sv = svd.singular_values;
    let (max, min) = sv
        .iter()
        .fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    if !(max > 0.0) || min < 1e-9 * max {
        return Err(Error::ExtractionSingular);
    }
    let z = svd.solve(&b, 0.0).map_err(|_| Error::ExtractionSingular)?;
    Ok([z[1], z[0], z[3], z[2]])
}

/// Poses encoded by `q`, with the overall sign of the translations as given
/// by `q` itself.
pub fn extract_motion_unsigned(q: &QEntries) -> Result<(YawPose, YawPose)> {
    let [s2, c2, s3, c3] = yaw_sin_cos(q)?;
    let n2 = s2.hypot(c2);
    let n3 = s3.hypot(c3);
    if !(n2 > 0.0 && n3 > 0.0) || !n2.is_finite() || !n3.is_finite() {
        return Err(Error::ExtractionSingular);
    }
    let (s2, c2, s3, c3) = (s2 / n2, c2 / n2, s3 / n3, c3 / n3);
    let qq = |m: usize| q[m - 1];
    let t2 = crate::geometry::Vec3::new(
        c2 * qq(9) - s2 * qq(13),
        c3 * qq(4) - s3 * qq(5),
        s2 * qq(9) + c2 * qq(13),
    );
    let t3 = crate::geometry::Vec3::new(
        s3 * qq(12) - c3 * qq(10),
        s2 * qq(7) - c2 * qq(2),
        -s3 * qq(10) - c3 * qq(12),
    );
    Ok((
        YawPose::new(s2.atan2(c2), t2),
        YawPose::new(s3.atan2(c3), t3),
    ))
}

/// Poses encoded by `q`; the common sign of the translations is chosen so
/// that the sample points triangulate in front of all three cameras.
pub fn extract_motion(q: &QEntries, sample: &[PointTriplet]) -> Result<(YawPose, YawPose)> {
    let (p2, p3) = extract_motion_unsigned(q)?;
    Ok(crate::geometry::fix_translation_sign(p2, p3, sample))
}

/// Build, solve and decode; optionally enforce the tensor constraints first.
pub fn solve_4pt(trips: &[PointTriplet], refine: bool) -> Result<Vec<TripletModel>> {
    let sys = if trips.len() == 4 {
        build_system(trips)?
    } else if trips.len() > 4 {
        build_rows(trips)?
    } else {
        return Err(Error::InsufficientData {
            needed: 4,
            got: trips.len(),
        });
    };
    let null = solve_nullvector(&sys)?;
    let mut q = null.q;
    if refine {
        match refine::enforce(&q, &sys) {
            Ok(enforced) => q = enforced.q,
            Err(Error::EnforcementDegenerate)
            | Err(Error::EpipoleIndeterminate)
            | Err(Error::SliceRankCollapse { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let (p2, p3) = extract_motion(&q, trips)?;
    let tensor = trifocal_from_poses(&p2, &p3)?;
    Ok(vec![TripletModel::new(p2, p3, tensor)])
}
