//! Minimal solver from three point triplets.
//!
//! With the yaw rotations written in Cayley form, every incidence equation
//! is linear in the six translation entries with polynomial coefficients of
//! bidegree (2, 2) in `(s2, s3)`. Keeping three equations per triplet gives
//! a 9x6 matrix `F(s2, s3)` that must drop rank. Two 6x6 minors give two
//! bivariate polynomials; their common real roots are the yaw candidates and
//! the translation is the null vector of `F` at each root.

use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix3x4, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::{
    cayley_rotation, fix_translation_sign, tensor_from_cameras, trifocal_from_poses,
    triplet_residual, Mat3, PointTriplet, QEntries, TrifocalTensor, Vec3, YawPose,
};
use crate::linear::{build_rows, extract_motion};
use crate::poly::{exact_divide, exact_quotient, resultant_roots, BivariatePoly, ChebyshevGrid};
use crate::refine;
use crate::solver::{max_residual, TripletModel};

/// Residual positions (row-major) kept per triplet: (1,1), (1,2), (2,1).
pub const KEPT_RESIDUALS: [usize; 3] = [0, 1, 3];

/// `tan(89.5 deg)`: larger Cayley scalars mean yaw too close to 180 deg.
pub const MAX_CAYLEY: f64 = 114.588_650_129_309_2;

/// `F(s2, s3)` with each entry a polynomial of bidegree at most (2, 2).
#[derive(Debug, Clone)]
pub struct FMatrixSymbolic {
    pub entries: Vec<[BivariatePoly; 6]>,
    /// `(triplet index, residual position)` of each row.
    pub rows: Vec<(usize, usize)>,
}

impl FMatrixSymbolic {
    pub fn eval(&self, s2: f64, s3: f64) -> SMatrix<f64, 9, 6> {
        SMatrix::from_fn(|i, j| self.entries[i][j].eval(s2, s3))
    }
}

/// `(1 + s^2) R(s)` split by powers of `s`.
fn cayley_parts() -> [Mat3; 3] {
    [
        Mat3::identity(),
        Mat3::new(0.0, 0.0, 2.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0),
        Mat3::from_diagonal(&Vec3::new(-1.0, 1.0, -1.0)),
    ]
}

fn camera(r: &Mat3, t: &Vec3) -> Matrix3x4<f64> {
    let mut p = Matrix3x4::zeros();
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    p.set_column(3, &(-r * t));
    p
}

fn translation_basis(k: usize) -> (Vec3, Vec3) {
    let mut t = [Vec3::zeros(), Vec3::zeros()];
    t[k / 3][k % 3] = 1.0;
    (t[0], t[1])
}

fn check_distinct(trips: &[PointTriplet]) -> Result<()> {
    for i in 0..trips.len() {
        for j in 0..i {
            if trips[i] == trips[j] {
                return Err(Error::DegenerateSample(format!(
                    "triplets {j} and {i} are identical"
                )));
            }
        }
    }
    Ok(())
}

/// Builds the symbolic matrix from the two cameras contributing to column
/// `k` at powers `(a, b)` of `(s2, s3)`; `None` marks a zero contribution.
fn assemble(
    trips: &[PointTriplet],
    cameras: impl Fn(usize, usize, usize) -> Option<(Matrix3x4<f64>, Matrix3x4<f64>)>,
) -> FMatrixSymbolic {
    // per row and column: coefficient grid over (power of s2, power of s3)
    let mut grids = vec![std::array::from_fn::<DMatrix<f64>, 6, _>(|_| DMatrix::zeros(3, 3)); 9];
    for k in 0..6 {
        for a in 0..3 {
            for b in 0..3 {
                let Some((p2, p3)) = cameras(k, a, b) else {
                    continue;
                };
                let tensor = TrifocalTensor {
                    slices: tensor_from_cameras(&p2, &p3),
                    q: None,
                };
                for (n, trip) in trips.iter().enumerate() {
                    let res = triplet_residual(trip, &tensor);
                    for (m, &pos) in KEPT_RESIDUALS.iter().enumerate() {
                        grids[3 * n + m][k][(a, b)] = res[(pos / 3, pos % 3)];
                    }
                }
            }
        }
    }
    let entries = grids
        .into_iter()
        .map(|row| row.map(BivariatePoly::new))
        .collect();
    let rows = (0..3)
        .flat_map(|n| KEPT_RESIDUALS.iter().map(move |&p| (n, p)))
        .collect();
    FMatrixSymbolic { entries, rows }
}

fn validate(trips: &[PointTriplet]) -> Result<()> {
    if trips.len() != 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: trips.len(),
        });
    }
    check_distinct(trips)
}

/// `F(s2, s3)` scaled by `(1 + s2^2)(1 + s3^2)`, so that `F t` is the
/// kept incidence residual of the poses `(s2, t2)` and `(s3, t3)`.
pub fn build_f(trips: &[PointTriplet]) -> Result<FMatrixSymbolic> {
    validate(trips)?;
    let parts = cayley_parts();
    Ok(assemble(trips, |k, a, b| {
        let (t2, t3) = translation_basis(k);
        Some((camera(&parts[a], &t2), camera(&parts[b], &t3)))
    }))
}

/// `F` with the rotations factored out of the columns:
/// `F = G diag(R2(s2), R3(s3))` up to the Cayley scale. The first three
/// columns of `G` depend on `s3` only and the last three on `s2` only, so
/// every 6x6 minor of `G` is the corresponding minor of `F` divided by
/// `(1 + s2^2)^3 (1 + s3^2)^3`.
pub fn build_reduced_f(trips: &[PointTriplet]) -> Result<FMatrixSymbolic> {
    validate(trips)?;
    let parts = cayley_parts();
    let epipole_only = |k: usize| {
        let mut p = Matrix3x4::zeros();
        p[(k, 3)] = -1.0;
        p
    };
    let rotation_only = |r: &Mat3| camera(r, &Vec3::zeros());
    Ok(assemble(trips, |k, a, b| match k {
        0..3 if a == 0 => Some((epipole_only(k), rotation_only(&parts[b]))),
        3.. if b == 0 => Some((rotation_only(&parts[a]), epipole_only(k - 3))),
        _ => None,
    }))
}

fn full_grid() -> &'static ChebyshevGrid {
    static GRID: OnceLock<ChebyshevGrid> = OnceLock::new();
    GRID.get_or_init(|| {
        ChebyshevGrid::new(12, 12).expect("13-node Chebyshev grid is well conditioned")
    })
}

fn minors_at(f: &FMatrixSymbolic, s2: f64, s3: f64) -> (f64, f64) {
    let m = f.eval(s2, s3);
    (
        m.fixed_rows::<6>(0).into_owned().determinant(),
        m.fixed_rows::<6>(3).into_owned().determinant(),
    )
}

/// Determinant of six rows of `F` as a polynomial, by Laplace expansion
/// over column subsets (64 partial minors).
fn minor_expansion(f: &FMatrixSymbolic, first_row: usize) -> BivariatePoly {
    let mut minors: Vec<Option<BivariatePoly>> = vec![None; 64];
    minors[0] = Some(BivariatePoly::constant(1.0));
    for mask in 1usize..64 {
        let k = mask.count_ones() as usize;
        let row = &f.entries[first_row + k - 1];
        let mut acc = BivariatePoly::zero();
        for (idx, col) in (0..6).filter(|c| mask & (1 << c) != 0).enumerate() {
            let sub = minors[mask & !(1 << col)]
                .as_ref()
                .expect("smaller subsets come first");
            let sign = if (k - 1 + idx).is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            acc = acc.add(&row[col].mul(sub).scale(sign));
        }
        minors[mask] = Some(acc);
    }
    minors[63].take().expect("full minor")
}

/// Determinants of rows 1-6 and rows 4-9, of bidegree at most (12, 12).
pub fn minor_determinants(f: &FMatrixSymbolic) -> (BivariatePoly, BivariatePoly) {
    (minor_expansion(f, 0), minor_expansion(f, 3))
}

/// Determinants of rows 1-6 and rows 4-9 fitted on a 13x13 Chebyshev grid.
/// Agrees with [`minor_determinants`] up to the conditioning of the
/// degree-12 monomial basis.
pub fn minor_determinants_fitted(f: &FMatrixSymbolic) -> (BivariatePoly, BivariatePoly) {
    let grid = full_grid();
    let n = grid.nodes2.len();
    let mut v1 = DMatrix::zeros(n, n);
    let mut v2 = DMatrix::zeros(n, n);
    for (a, &s2) in grid.nodes2.iter().enumerate() {
        for (b, &s3) in grid.nodes3.iter().enumerate() {
            (v1[(a, b)], v2[(a, b)]) = minors_at(f, s2, s3);
        }
    }
    (grid.fit(&v1), grid.fit(&v2))
}

/// The two minors divided by `(1 + s2^2)^3 (1 + s3^2)^3`.
///
/// The coefficients are the minors of the reduced matrix `g`, which needs
/// no division. Divisibility of the full minors of `f` is still verified by
/// synthetic division; repeated division by `1 + x^2` loses accuracy
/// relative to the small values the quotient takes near its roots, so the
/// divided coefficients themselves are not used.
pub fn minor_polys(
    f: &FMatrixSymbolic,
    g: &FMatrixSymbolic,
) -> Result<(BivariatePoly, BivariatePoly)> {
    let (d1, d2) = minor_determinants(f);
    exact_quotient(&d1, 3, 3)?;
    exact_quotient(&d2, 3, 3)?;
    Ok(minor_determinants(g))
}

/// Factors of every minor that involves triplet `n`, independent of the
/// motion: `(w(s3), z(s2))`.
///
/// Within one triplet the kept rows of the reduced matrix have the form
/// `[w0 c0 | z0 d0]`, `[w1 c0 | z0 d1]`, `[w0 c1 | z1 d0]` with constant
/// `c`, `d`. If `w0(s3) = 0` the first and third rows are parallel, and if
/// `z0(s2) = 0` the first two are. Both quadratics therefore divide any
/// minor containing the three rows.
pub fn triplet_factors(g: &FMatrixSymbolic, n: usize) -> Result<(BivariatePoly, BivariatePoly)> {
    let row = &g.entries[3 * n];
    let pick = |range: std::ops::Range<usize>| {
        range
            .map(|k| &row[k])
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .cloned()
            .expect("three columns")
    };
    let (w, z) = (pick(0..3), pick(3..6));
    if w.is_zero() || z.is_zero() {
        return Err(Error::DegenerateSample(format!(
            "triplet {n} has a vanishing equation"
        )));
    }
    Ok((w.scale(1.0 / w.norm()), z.scale(1.0 / z.norm())))
}

/// The two quotient minors with the motion-independent factors of their
/// triplets removed, leaving polynomials of bidegree at most (2, 2) whose
/// common roots hold the solutions.
pub fn reduced_minor_polys(
    f: &FMatrixSymbolic,
    g: &FMatrixSymbolic,
) -> Result<(BivariatePoly, BivariatePoly)> {
    let (p, r) = minor_polys(f, g)?;
    let factors: Vec<_> = (0..3)
        .map(|n| triplet_factors(g, n))
        .collect::<Result<_>>()?;
    let strip = |mut poly: BivariatePoly, triplets: [usize; 2]| -> Result<BivariatePoly> {
        for n in triplets {
            poly = exact_divide(&poly, &factors[n].0)?;
            poly = exact_divide(&poly, &factors[n].1)?;
        }
        Ok(poly)
    };
    Ok((strip(p, [0, 1])?, strip(r, [1, 2])?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidatePose {
    pub s2: f64,
    pub s3: f64,
    /// `(t2, t3)`, unit norm.
    pub t: SVector<f64, 6>,
    pub residual: f64,
}

impl CandidatePose {
    pub fn poses(&self) -> (YawPose, YawPose) {
        (
            YawPose::new(2.0 * self.s2.atan(), self.t.fixed_rows::<3>(0).into_owned()),
            YawPose::new(2.0 * self.s3.atan(), self.t.fixed_rows::<3>(3).into_owned()),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimalOptions {
    /// Largest accepted `sigma_6 / sigma_1` of `F` at a root. Exact data
    /// gives about 1e-9 at true roots; image noise of one pixel pushes that
    /// to a few 1e-3, so the default only removes clear outliers.
    pub rank_tol: f64,
    /// The reduced pair of minors has up to eight common roots but the
    /// three-view problem has at most six solutions. Roots are ranked by
    /// the rank ratio and the best ones kept.
    pub max_candidates: usize,
}

impl Default for MinimalOptions {
    fn default() -> Self {
        Self {
            rank_tol: 0.1,
            max_candidates: 6,
        }
    }
}

/// `(sigma_6 / sigma_1, unit null vector)` of `F(s2, s3)`.
fn f_null(f: &FMatrixSymbolic, s2: f64, s3: f64) -> (f64, SVector<f64, 6>) {
    let svd = f.eval(s2, s3).svd(false, true);
    let (imin, smin) = svd.singular_values.argmin();
    let smax = svd.singular_values.max();
    let v = svd.v_t.expect("v_t requested").row(imin).transpose();
    let ratio = if smax > 0.0 {
        smin / smax
    } else {
        f64::INFINITY
    };
    (ratio, v.normalize())
}

pub fn solve_3pt(trips: &[PointTriplet]) -> Result<Vec<CandidatePose>> {
    solve_3pt_with(trips, &MinimalOptions::default())
}

pub fn solve_3pt_with(
    trips: &[PointTriplet],
    options: &MinimalOptions,
) -> Result<Vec<CandidatePose>> {
    let f = build_f(trips)?;
    let g = build_reduced_f(trips)?;
    let (p, r) = reduced_minor_polys(&f, &g)?;
    let roots = resultant_roots(&p, &r)?;
    let mut ranked: Vec<(f64, f64, f64, SVector<f64, 6>)> = roots
        .into_iter()
        .filter(|(s2, s3)| s2.abs() <= MAX_CAYLEY && s3.abs() <= MAX_CAYLEY)
        .map(|(s2, s3)| {
            let (ratio, t) = f_null(&f, s2, s3);
            (ratio, s2, s3, t)
        })
        .filter(|c| c.0 <= options.rank_tol)
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    ranked.truncate(options.max_candidates);
    let mut out = Vec::new();
    for (_, s2, s3, t) in ranked {
        let mut cand = CandidatePose {
            s2,
            s3,
            t,
            residual: 0.0,
        };
        let (p2, p3) = cand.poses();
        let (p2, p3) = fix_translation_sign(p2, p3, trips);
        if p2.t.dot(&cand.t.fixed_rows::<3>(0)) + p3.t.dot(&cand.t.fixed_rows::<3>(3)) < 0.0 {
            cand.t = -cand.t;
        }
        cand.residual = candidate_residual(&cand, trips);
        out.push(cand);
    }
    out.sort_by(|a, b| a.residual.total_cmp(&b.residual));
    Ok(out)
}

/// Largest incidence residual of the candidate over `trips`.
pub fn candidate_residual(c: &CandidatePose, trips: &[PointTriplet]) -> f64 {
    let (p2, p3) = c.poses();
    let tensor = TrifocalTensor {
        slices: tensor_from_cameras(
            &camera(&cayley_rotation(c.s2), &p2.t),
            &camera(&cayley_rotation(c.s3), &p3.t),
        ),
        q: None,
    };
    max_residual(&tensor, trips)
}

/// Turns a candidate into a model; with `refine` the tensor is re-fitted
/// under the constraints and decoded again.
pub fn candidate_model(
    c: &CandidatePose,
    sample: &[PointTriplet],
    refine: bool,
) -> Result<TripletModel> {
    let (mut p2, mut p3) = c.poses();
    if refine {
        let sys = build_rows(sample)?;
        let q: QEntries = crate::geometry::q_from_poses(&p2, &p3);
        if let Ok(enforced) = refine::enforce(&q.normalize(), &sys) {
            if let Ok((a, b)) = extract_motion(&enforced.q, sample) {
                let scale = c.t.norm() / a.t.norm().hypot(b.t.norm());
                p2 = YawPose {
                    t: a.t * scale,
                    ..a
                };
                p3 = YawPose {
                    t: b.t * scale,
                    ..b
                };
            }
        }
    }
    let tensor = trifocal_from_poses(&p2, &p3)?;
    Ok(TripletModel::new(p2, p3, tensor))
}
