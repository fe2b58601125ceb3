//! Synthetic experiments: noise-free stability runs and noise sweeps over
//! randomly generated three-view scenes.

use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::format::sig17;
use crate::geometry::{
    normalize_and_align, recover_unaligned_pose, relative_full, yaw_rotation, AlignmentRotation,
    CameraIntrinsics, FullPose, Mat3, PointTriplet, Vec3, YawPose,
};
use crate::solver::TripletSolver;

/// Rejections in a row after which a scene counts as infeasible.
pub const MAX_REJECTIONS: usize = 1000;

/// Closest a point may come to any camera along its optical axis.
const MIN_DEPTH: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub width: f64,
    pub height: f64,
    pub cx: f64,
    pub cy: f64,
    pub focal: f64,
    /// Half-widths of the uniform angle ranges, degrees.
    pub yaw_range: f64,
    pub pitch_range: f64,
    pub roll_range: f64,
    /// Half-width of the uniform range of each centre coordinate, meters.
    pub translation_range: f64,
    /// Depth range along the optical axis of view 1, meters.
    pub depth_min: f64,
    pub depth_max: f64,
    pub n_points: usize,
    pub pixel_noise_sigma: f64,
    /// Degrees.
    pub imu_pitch_noise_sigma: f64,
    pub imu_roll_noise_sigma: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 640.0,
            height: 480.0,
            cx: 320.0,
            cy: 240.0,
            focal: 800.0,
            yaw_range: 10.0,
            pitch_range: 10.0,
            roll_range: 10.0,
            translation_range: 10.0,
            depth_min: 5.0,
            depth_max: 50.0,
            n_points: 4,
            pixel_noise_sigma: 0.0,
            imu_pitch_noise_sigma: 0.0,
            imu_roll_noise_sigma: 0.0,
            trials: 1000,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.focal, self.focal, self.cx, self.cy)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.width,
            self.height,
            self.yaw_range,
            self.pitch_range,
            self.roll_range,
            self.translation_range,
            self.depth_min,
            self.depth_max,
            self.pixel_noise_sigma,
            self.imu_pitch_noise_sigma,
            self.imu_roll_noise_sigma,
        ];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig(
                "scene ranges must be finite and non-negative".into(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be positive".into()));
        }
        if !(self.depth_min > 0.0 && self.depth_min <= self.depth_max) {
            return Err(Error::InvalidConfig(
                "depth range must satisfy 0 < min <= max".into(),
            ));
        }
        self.intrinsics().map(|_| ())
    }
}

/// One camera in the gravity-aligned frame of view 1 (y along gravity).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneCamera {
    pub yaw: f64,
    pub alignment: AlignmentRotation,
    pub centre: Vec3,
}

impl SceneCamera {
    /// Camera-from-world rotation.
    pub fn rotation(&self) -> Mat3 {
        self.alignment.matrix.transpose() * yaw_rotation(self.yaw)
    }

    pub fn to_camera(&self, x: &Vec3) -> Vec3 {
        self.rotation() * (x - self.centre)
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub cameras: [SceneCamera; 3],
    pub points: Vec<Vec3>,
    /// Observed pixels per point, noise included.
    pub pixels: Vec<[Vector2<f64>; 3]>,
    /// Alignment rotations as reported to the solver, noise included.
    pub measured_alignments: [AlignmentRotation; 3],
    /// Observations normalized and aligned with the measured alignments.
    pub triplets: Vec<PointTriplet>,
    pub truth: (YawPose, YawPose),
}

impl Scene {
    pub fn clean_alignments(&self) -> [AlignmentRotation; 3] {
        self.cameras.map(|c| c.alignment)
    }

    /// Ground-truth motions of views 2 and 3 relative to view 1 in camera
    /// coordinates.
    pub fn truth_full(&self) -> (FullPose, FullPose) {
        let a = self.clean_alignments();
        (
            recover_unaligned_pose(&self.truth.0, &a[0], &a[1]),
            recover_unaligned_pose(&self.truth.1, &a[0], &a[2]),
        )
    }

    /// Undoes the measured alignment of an estimate.
    pub fn estimate_full(&self, p2: &YawPose, p3: &YawPose) -> (FullPose, FullPose) {
        let a = &self.measured_alignments;
        (
            recover_unaligned_pose(p2, &a[0], &a[1]),
            recover_unaligned_pose(p3, &a[0], &a[2]),
        )
    }
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * sigma
}

/// Draws a scene: view 1 sits at the origin with zero yaw, views 2 and 3
/// get uniform yaw and centre coordinates, and all three get uniform pitch
/// and roll. Points are drawn through random pixels of view 1 at uniform
/// depth and kept when the other two views see them inside the image.
///
/// Noise draws always happen, scaled by the configured sigmas, so scenes
/// generated from the same seed differ only in noise magnitude.
pub fn generate_scene<R: Rng + ?Sized>(cfg: &SceneConfig, rng: &mut R) -> Result<Scene> {
    cfg.validate()?;
    let k = cfg.intrinsics()?;
    let deg = f64::to_radians;
    let mut cameras = [SceneCamera {
        yaw: 0.0,
        alignment: AlignmentRotation::identity(),
        centre: Vec3::zeros(),
    }; 3];
    for (i, cam) in cameras.iter_mut().enumerate() {
        if i > 0 {
            cam.yaw = deg(symmetric(rng, cfg.yaw_range));
            cam.centre = Vec3::new(
                symmetric(rng, cfg.translation_range),
                symmetric(rng, cfg.translation_range),
                symmetric(rng, cfg.translation_range),
            );
        }
        let pitch = deg(symmetric(rng, cfg.pitch_range));
        let roll = deg(symmetric(rng, cfg.roll_range));
        cam.alignment = AlignmentRotation::new(pitch, roll);
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        if (cameras[i].centre - cameras[j].centre).norm() < 1e-9 {
            return Err(Error::CoincidentCenters);
        }
    }
    let measured_alignments = cameras.map(|c| {
        let p = c.alignment.pitch + deg(gaussian(rng, 1.0) * cfg.imu_pitch_noise_sigma);
        let r = c.alignment.roll + deg(gaussian(rng, 1.0) * cfg.imu_roll_noise_sigma);
        AlignmentRotation::new(p, r)
    });

    let inside =
        |p: &Vector2<f64>| p.x >= 0.0 && p.x <= cfg.width && p.y >= 0.0 && p.y <= cfg.height;
    let mut points = Vec::with_capacity(cfg.n_points);
    let mut pixels = Vec::with_capacity(cfg.n_points);
    let mut triplets = Vec::with_capacity(cfg.n_points);
    while points.len() < cfg.n_points {
        let mut accepted = None;
        for _ in 0..MAX_REJECTIONS {
            let px = Vector2::new(
                rng.random_range(0.0..=cfg.width),
                rng.random_range(0.0..=cfg.height),
            );
            let depth = rng.random_range(cfg.depth_min..=cfg.depth_max);
            let x_cam = k.normalize(&px) * depth;
            let x = cameras[0].rotation().transpose() * x_cam + cameras[0].centre;
            let obs: Vec<Vec3> = cameras.iter().map(|c| c.to_camera(&x)).collect();
            if obs.iter().any(|o| o.z < MIN_DEPTH) {
                continue;
            }
            let proj = [k.project(&obs[0]), k.project(&obs[1]), k.project(&obs[2])];
            if proj.iter().all(inside) {
                accepted = Some((x, proj));
                break;
            }
        }
        let Some((x, clean)) = accepted else {
            return Err(Error::InfeasibleScene(format!(
                "no point visible in all views after {MAX_REJECTIONS} samples"
            )));
        };
        let noisy = clean.map(|p| {
            Vector2::new(
                p.x + gaussian(rng, cfg.pixel_noise_sigma),
                p.y + gaussian(rng, cfg.pixel_noise_sigma),
            )
        });
        let mut views = [Vec3::zeros(); 3];
        for v in 0..3 {
            views[v] =
                normalize_and_align(&noisy[v], &k, &measured_alignments[v], v as u8 + 1)?.point;
        }
        points.push(x);
        pixels.push(noisy);
        triplets.push(PointTriplet::new(views[0], views[1], views[2]));
    }
    let truth = (
        YawPose::new(cameras[1].yaw, cameras[1].centre),
        YawPose::new(cameras[2].yaw, cameras[2].centre),
    );
    Ok(Scene {
        cameras,
        points,
        pixels,
        measured_alignments,
        triplets,
        truth,
    })
}

/// Scene for trial `trial`, redrawn when the geometry is infeasible. The
/// generator depends only on `(seed, trial)`.
pub fn trial_scene(cfg: &SceneConfig, trial: u64) -> Result<Scene> {
    let mut rng = trial_rng(cfg.seed, trial);
    let mut last = Error::InfeasibleScene("no attempt".into());
    for _ in 0..100 {
        match generate_scene(cfg, &mut rng) {
            Ok(s) => return Ok(s),
            Err(e @ (Error::InfeasibleScene(_) | Error::CoincidentCenters)) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Replaces the view-2 and view-3 observations of a random `fraction` of
/// the points with uniform pixels; returns the corrupted indices.
pub fn add_outliers<R: Rng + ?Sized>(
    scene: &mut Scene,
    cfg: &SceneConfig,
    fraction: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let k = cfg.intrinsics()?;
    let n = scene.triplets.len();
    let count = (fraction * n as f64).round() as usize;
    let mut idx = rand::seq::index::sample(rng, n, count.min(n)).into_vec();
    idx.sort_unstable();
    for &i in &idx {
        for v in 1..3 {
            let px = Vector2::new(
                rng.random_range(0.0..=cfg.width),
                rng.random_range(0.0..=cfg.height),
            );
            scene.pixels[i][v] = px;
            let p = normalize_and_align(&px, &k, &scene.measured_alignments[v], v as u8 + 1)?.point;
            if v == 1 {
                scene.triplets[i].x2 = p;
            } else {
                scene.triplets[i].x3 = p;
            }
        }
    }
    Ok(idx)
}

/// Rotation angle of `a b^T`, in degrees.
pub fn rotation_error_deg(a: &Mat3, b: &Mat3) -> f64 {
    let d = a * b.transpose();
    let axis = Vec3::new(
        d[(2, 1)] - d[(1, 2)],
        d[(0, 2)] - d[(2, 0)],
        d[(1, 0)] - d[(0, 1)],
    );
    let sin = 0.5 * axis.norm();
    let cos = 0.5 * (d.trace() - 1.0);
    sin.atan2(cos).to_degrees()
}

/// Angle between two directions in degrees; 180 when either is zero.
pub fn translation_error_deg(gt: &Vec3, est: &Vec3) -> f64 {
    if gt.norm() == 0.0 || est.norm() == 0.0 || !est.iter().all(|v| v.is_finite()) {
        return 180.0;
    }
    gt.cross(est).norm().atan2(gt.dot(est)).to_degrees()
}

/// `(eps_R, eps_t)` for the motions 1->2, 1->3 and 2->3.
pub fn pairwise_errors(
    gt2: &FullPose,
    gt3: &FullPose,
    est2: &FullPose,
    est3: &FullPose,
) -> [(f64, f64); 3] {
    let gt23 = relative_full(gt2, gt3);
    let est23 = relative_full(est2, est3);
    [(gt2, est2), (gt3, est3), (&gt23, &est23)].map(|(g, e)| {
        (
            rotation_error_deg(&g.rotation, &e.rotation),
            translation_error_deg(&g.t, &e.t),
        )
    })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median over the three pairwise motions of the rotation and translation
/// errors, in degrees.
pub fn pose_errors(gt2: &FullPose, gt3: &FullPose, est2: &FullPose, est3: &FullPose) -> (f64, f64) {
    let e = pairwise_errors(gt2, gt3, est2, est3);
    (median(&e.map(|p| p.0)), median(&e.map(|p| p.1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseAxis {
    None,
    Pixel,
    ImuPitch,
    ImuRoll,
}

impl NoiseAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Pixel => "pixel",
            Self::ImuPitch => "imu_pitch",
            Self::ImuRoll => "imu_roll",
        }
    }

    /// Scene configuration for one sweep level; image noise stays at one
    /// pixel while the IMU angles are swept.
    pub fn apply(self, base: &SceneConfig, level: f64) -> SceneConfig {
        let mut cfg = base.clone();
        match self {
            Self::None => {
                cfg.pixel_noise_sigma = 0.0;
                cfg.imu_pitch_noise_sigma = 0.0;
                cfg.imu_roll_noise_sigma = 0.0;
            }
            Self::Pixel => {
                cfg.pixel_noise_sigma = level;
                cfg.imu_pitch_noise_sigma = 0.0;
                cfg.imu_roll_noise_sigma = 0.0;
            }
            Self::ImuPitch => {
                cfg.pixel_noise_sigma = 1.0;
                cfg.imu_pitch_noise_sigma = level;
                cfg.imu_roll_noise_sigma = 0.0;
            }
            Self::ImuRoll => {
                cfg.pixel_noise_sigma = 1.0;
                cfg.imu_pitch_noise_sigma = 0.0;
                cfg.imu_roll_noise_sigma = level;
            }
        }
        cfg
    }
}

impl FromStr for NoiseAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "pixel" => Ok(Self::Pixel),
            "imu_pitch" => Ok(Self::ImuPitch),
            "imu_roll" => Ok(Self::ImuRoll),
            other => Err(Error::InvalidConfig(format!(
                "unknown noise axis '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub solver: String,
    pub noise_axis: NoiseAxis,
    pub noise_level: f64,
    /// Degrees; 180 when the solver produced nothing.
    pub eps_r: f64,
    pub eps_t: f64,
    pub time_s: f64,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.eps_r >= 180.0
    }
}

/// Solves one scene and scores the hypothesis closest to the ground truth.
pub fn evaluate_scene(scene: &Scene, solver: &dyn TripletSolver) -> ((f64, f64), f64) {
    let start = Instant::now();
    let models = solver.solve(&scene.triplets, false);
    let time = start.elapsed().as_secs_f64();
    let (gt2, gt3) = scene.truth_full();
    let best = models
        .unwrap_or_default()
        .iter()
        .map(|m| {
            let (e2, e3) = scene.estimate_full(&m.p2, &m.p3);
            pose_errors(&gt2, &gt3, &e2, &e3)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .unwrap_or((180.0, 180.0));
    (best, time)
}

/// Trial `trial` at the configured noise; points default to the sample
/// size of the solver.
pub fn run_trial(
    cfg: &SceneConfig,
    solver: &dyn TripletSolver,
    trial: u64,
    axis: NoiseAxis,
    level: f64,
) -> TrialRecord {
    let cfg = SceneConfig {
        n_points: cfg.n_points.max(solver.sample_size()),
        ..axis.apply(cfg, level)
    };
    let ((eps_r, eps_t), time_s) = match trial_scene(&cfg, trial) {
        Ok(scene) => evaluate_scene(&scene, solver),
        Err(_) => ((180.0, 180.0), 0.0),
    };
    TrialRecord {
        trial,
        solver: solver.name().to_string(),
        noise_axis: axis,
        noise_level: level,
        eps_r,
        eps_t,
        time_s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Histogram of `log10(values)` over `[lo, hi)` with bin spacing
/// `width`; values outside the range are counted in the end bins and zeros
/// in the first one.
pub fn log10_histogram(values: &[f64], lo: f64, hi: f64, width: f64) -> Vec<HistogramBin> {
    let n = ((hi - lo) / width).ceil().max(1.0) as usize;
    let mut bins: Vec<HistogramBin> = (0..n)
        .map(|i| HistogramBin {
            lo: lo + i as f64 * width,
            hi: lo + (i + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in values {
        let l = if v.is_nan() || v > 0.0 {
            v.log10()
        } else {
            f64::NEG_INFINITY
        };
        let i = if l.is_nan() {
            n - 1
        } else {
            (((l - lo) / width).floor().max(0.0) as usize).min(n - 1)
        };
        bins[i].count += 1;
    }
    bins
}

#[derive(Debug, Clone)]
pub struct StabilityRun {
    pub records: Vec<TrialRecord>,
    pub histogram: Vec<HistogramBin>,
}

/// Noise-free trials with a histogram of `log10(eps_R)` in half-decade bins
/// from 1e-18 to 1e2 degrees.
pub fn run_stability(cfg: &SceneConfig, solver: &dyn TripletSolver) -> StabilityRun {
    let records: Vec<TrialRecord> = (0..cfg.trials as u64)
        .map(|t| run_trial(cfg, solver, t, NoiseAxis::None, 0.0))
        .collect();
    let errors: Vec<f64> = records.iter().map(|r| r.eps_r).collect();
    StabilityRun {
        histogram: log10_histogram(&errors, -18.0, 2.0, 0.5),
        records,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub solver: String,
    pub noise_axis: NoiseAxis,
    pub noise_level: f64,
    pub trials: usize,
    pub failures: usize,
    pub median_eps_r: f64,
    pub median_eps_t: f64,
}

/// Median errors per noise level. Trial `i` uses the same scene geometry
/// and the same standard-normal noise draws at every level.
pub fn run_noise_sweep(
    cfg: &SceneConfig,
    axis: NoiseAxis,
    levels: &[f64],
    solver: &dyn TripletSolver,
) -> Result<(Vec<SweepRow>, Vec<TrialRecord>)> {
    if levels.is_empty() {
        return Err(Error::InvalidConfig("no noise levels".into()));
    }
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for &level in levels {
        let records: Vec<TrialRecord> = (0..cfg.trials as u64)
            .map(|t| run_trial(cfg, solver, t, axis, level))
            .collect();
        let er: Vec<f64> = records.iter().map(|r| r.eps_r).collect();
        let et: Vec<f64> = records.iter().map(|r| r.eps_t).collect();
        rows.push(SweepRow {
            solver: solver.name().to_string(),
            noise_axis: axis,
            noise_level: level,
            trials: records.len(),
            failures: records.iter().filter(|r| r.failed()).count(),
            median_eps_r: median(&er),
            median_eps_t: median(&et),
        });
        all.extend(records);
    }
    Ok((rows, all))
}

/// Spearman rank correlation, average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_trials_csv<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record([
        "trial",
        "solver",
        "noise_axis",
        "noise_level",
        "eps_R_deg",
        "eps_t_deg",
        "time_s",
    ])
    .map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.solver.clone(),
            r.noise_axis.name().to_string(),
            sig17(r.noise_level),
            sig17(r.eps_r),
            sig17(r.eps_t),
            sig17(r.time_s),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(out: W, bins: &[HistogramBin]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["bin_lo", "bin_hi", "count"])
        .map_err(csv_err)?;
    for b in bins {
        w.write_record([sig17(b.lo), sig17(b.hi), b.count.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record([
        "solver",
        "noise_axis",
        "noise_level",
        "trials",
        "failures",
        "median_eps_R_deg",
        "median_eps_t_deg",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.solver.clone(),
            r.noise_axis.name().to_string(),
            sig17(r.noise_level),
            r.trials.to_string(),
            r.failures.to_string(),
            sig17(r.median_eps_r),
            sig17(r.median_eps_t),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rot_x, rot_z};
    use crate::solver::SolverRegistry;

    #[test]
    fn zero_ranges_rejected() {
        let cfg = SceneConfig {
            yaw_range: 0.0,
            pitch_range: 0.0,
            roll_range: 0.0,
            translation_range: 0.0,
            ..Default::default()
        };
        let mut rng = trial_rng(0, 0);
        assert_eq!(
            generate_scene(&cfg, &mut rng).unwrap_err(),
            Error::CoincidentCenters
        );
    }

    #[test]
    fn noise_free_points_reproject_exactly() {
        let cfg = SceneConfig {
            n_points: 50,
            ..Default::default()
        };
        let k = cfg.intrinsics().unwrap();
        for t in 0..20 {
            let scene = trial_scene(&cfg, t).unwrap();
            for (x, px) in scene.points.iter().zip(&scene.pixels) {
                for v in 0..3 {
                    let cam = &scene.cameras[v];
                    let p = k.project(&cam.to_camera(x));
                    assert!((p - px[v]).norm() < 1e-9);
                    assert!(p.x >= 0.0 && p.x <= 640.0 && p.y >= 0.0 && p.y <= 480.0);
                }
            }
            // aligned triplets are consistent with the yaw-only truth
            let model = crate::ransac::SampsonModel::new(&scene.truth.0, &scene.truth.1);
            for trip in &scene.triplets {
                assert!(model.error(trip) < 1e-10);
            }
        }
    }

    #[test]
    fn camera_rotation_matches_alignment_convention() {
        let cam = SceneCamera {
            yaw: 0.3,
            alignment: AlignmentRotation::new(0.1, -0.2),
            centre: Vec3::zeros(),
        };
        let expected = rot_x(0.1) * rot_z(-0.2) * yaw_rotation(0.3);
        assert!((cam.rotation() - expected).amax() < 1e-15);
    }

    #[test]
    fn pixel_noise_statistics() {
        let cfg = SceneConfig {
            n_points: 1000,
            pixel_noise_sigma: 1.0,
            ..Default::default()
        };
        let k = cfg.intrinsics().unwrap();
        let mut sum2 = 0.0;
        let mut n = 0usize;
        let mut t = 0;
        while n < 100_000 {
            let scene = trial_scene(&cfg, t).unwrap();
            t += 1;
            for (x, px) in scene.points.iter().zip(&scene.pixels) {
                let clean = k.project(&scene.cameras[0].to_camera(x));
                let d = px[0] - clean;
                sum2 += d.norm_squared();
                n += 2;
            }
        }
        let std = (sum2 / n as f64).sqrt();
        assert!((std - 1.0).abs() < 0.05, "{std}");
    }

    #[test]
    fn error_metrics() {
        let id = FullPose::identity();
        let p = FullPose {
            rotation: yaw_rotation(0.4),
            t: Vec3::new(1.0, 2.0, 3.0),
        };
        assert_eq!(pose_errors(&p, &p, &p, &p), (0.0, 0.0));
        let r = rotation_error_deg(&yaw_rotation(10f64.to_radians()), &Mat3::identity());
        assert!((r - 10.0).abs() < 1e-12);
        assert!((translation_error_deg(&Vec3::x(), &Vec3::y()) - 90.0).abs() < 1e-12);
        assert_eq!(translation_error_deg(&Vec3::x(), &Vec3::zeros()), 180.0);
        // positive rescaling leaves the direction error unchanged; flipping
        // the sign gives the supplement
        let (a, b) = (Vec3::new(0.3, -1.0, 2.0), Vec3::new(0.5, -0.7, 2.2));
        let e = translation_error_deg(&a, &b);
        assert!((translation_error_deg(&a, &(b * 7.5)) - e).abs() < 1e-12);
        assert!((translation_error_deg(&a, &-b) - (180.0 - e)).abs() < 1e-12);
        let _ = id;
    }

    #[test]
    fn histogram_counts_everything() {
        let v = [0.0, 1e-20, 1e-13, 3e-9, 0.5, 1e5, f64::NAN];
        let h = log10_histogram(&v, -18.0, 2.0, 0.5);
        assert_eq!(h.len(), 40);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), v.len());
        assert_eq!(h[0].count, 2);
        assert_eq!(h[39].count, 2);
    }

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        let r = spearman(&[0.0, 0.5, 1.0, 1.5, 2.0], &[1.0, 3.0, 2.0, 4.0, 5.0]);
        assert!((r - 0.9).abs() < 1e-12);
    }

    #[test]
    fn trials_are_reproducible() {
        let cfg = SceneConfig {
            trials: 5,
            seed: 42,
            ..Default::default()
        };
        let solver = SolverRegistry::with_builtin().get("4pt").unwrap();
        let a = run_trial(&cfg, solver.as_ref(), 3, NoiseAxis::Pixel, 1.0);
        let b = run_trial(&cfg, solver.as_ref(), 3, NoiseAxis::Pixel, 1.0);
        assert_eq!((a.eps_r, a.eps_t), (b.eps_r, b.eps_t));
    }

    #[test]
    fn stability_small_run() {
        let cfg = SceneConfig {
            trials: 20,
            seed: 1,
            ..Default::default()
        };
        let reg = SolverRegistry::with_builtin();
        for name in ["3pt", "4pt"] {
            let run = run_stability(&cfg, reg.get(name).unwrap().as_ref());
            assert_eq!(run.histogram.iter().map(|b| b.count).sum::<usize>(), 20);
            let errs: Vec<f64> = run.records.iter().map(|r| r.eps_r).collect();
            assert!(median(&errs) < 1e-8, "{name} {}", median(&errs));
        }
    }

    #[test]
    fn csv_layout() {
        let rec = TrialRecord {
            trial: 0,
            solver: "4pt".into(),
            noise_axis: NoiseAxis::Pixel,
            noise_level: 0.5,
            eps_r: 0.25,
            eps_t: 1.0,
            time_s: 1e-4,
        };
        let mut buf = Vec::new();
        write_trials_csv(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "trial,solver,noise_axis,noise_level,eps_R_deg,eps_t_deg,time_s\n\
             0,4pt,pixel,5.0000000000000000e-1,2.5000000000000000e-1,1.0000000000000000e0,1.0000000000000000e-4\n"
        );
    }
}
