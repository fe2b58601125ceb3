//! Sliding-window evaluation of an image sequence against ground truth.

use std::path::Path;

use nalgebra::{Matrix3x4, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bench::{median, pairwise_errors};
use crate::dataset::{self, ImuTable, TrackTable};
use crate::error::{Error, Result};
use crate::format::Json;
use crate::geometry::{
    normalize_and_align, recover_unaligned_pose, rot_x, rot_z, yaw_rotation, AlignmentRotation,
    CameraIntrinsics, FullPose, Mat3, PointTriplet, Vec3,
};
use crate::ransac::{ransac, RansacConfig};

#[derive(Debug, Clone)]
pub struct SequenceData {
    /// Camera-to-world pose per frame; frames are numbered from 0.
    pub gt_poses: Vec<Matrix3x4<f64>>,
    pub calib: CameraIntrinsics,
    pub tracks: TrackTable,
    /// Measured pitch and roll per frame. Missing frames fall back to the
    /// ground-truth pose.
    pub imu: Option<ImuTable>,
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

impl SequenceData {
    pub fn load(poses: &Path, tracks: &Path, calib: &Path, imu: Option<&Path>) -> Result<Self> {
        let data = Self {
            gt_poses: dataset::parse_poses(open(poses)?)?,
            calib: dataset::parse_calib(open(calib)?)?,
            tracks: dataset::parse_tracks(open(tracks)?)?,
            imu: imu.map(|p| dataset::parse_imu(open(p)?)).transpose()?,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn frame_count(&self) -> usize {
        self.gt_poses.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (id, track) in &self.tracks {
            if let Some((f, _)) = track.iter().find(|(f, _)| *f >= self.frame_count()) {
                return Err(Error::InvalidConfig(format!(
                    "track {id} observes frame {f} but only {} poses are given",
                    self.frame_count()
                )));
            }
        }
        Ok(())
    }

    pub fn rotation(&self, frame: usize) -> Mat3 {
        self.gt_poses[frame].fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn centre(&self, frame: usize) -> Vec3 {
        self.gt_poses[frame].column(3).into_owned()
    }

    /// Alignment used by the solver for `frame`.
    pub fn alignment(&self, frame: usize) -> Result<AlignmentRotation> {
        match self.imu.as_ref().and_then(|t| t.get(&frame)) {
            Some(&(pitch, roll)) => Ok(AlignmentRotation::new(pitch, roll)),
            None => derive_alignment(&self.gt_poses[frame]),
        }
    }

    /// Ground-truth motion from `from` to `to` in camera coordinates.
    pub fn relative_gt(&self, from: usize, to: usize) -> FullPose {
        let (ra, rb) = (self.rotation(from), self.rotation(to));
        FullPose {
            rotation: rb.transpose() * ra,
            t: ra.transpose() * (self.centre(to) - self.centre(from)),
        }
    }
}

/// Pitch and roll of a camera-to-world pose whose world y axis points along
/// gravity.
pub fn derive_alignment(pose: &Matrix3x4<f64>) -> Result<AlignmentRotation> {
    let r: Mat3 = pose.fixed_view::<3, 3>(0, 0).into_owned();
    AlignmentRotation::from_camera_rotation(&r.transpose())
}

/// Pitch and roll per frame from the ground truth with Gaussian noise of
/// `sigma_deg` on both angles.
pub fn imu_from_poses(poses: &[Matrix3x4<f64>], sigma_deg: f64, seed: u64) -> Result<ImuTable> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = ImuTable::new();
    for (i, p) in poses.iter().enumerate() {
        let a = derive_alignment(p)?;
        let np: f64 = StandardNormal.sample(&mut rng);
        let nr: f64 = StandardNormal.sample(&mut rng);
        let s = sigma_deg.to_radians();
        table.insert(i, (a.pitch + np * s, a.roll + nr * s));
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub start: usize,
    pub triplets: usize,
    pub inliers: usize,
    /// Estimated motions of views 2 and 3 relative to view 1.
    pub estimate: Option<(FullPose, FullPose)>,
    /// `(eps_R, eps_t)` in degrees for 1->2, 1->3 and 2->3.
    pub errors: Option<[(f64, f64); 3]>,
    /// Why the window produced no estimate.
    pub gap: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSummary {
    pub pair_12: f64,
    pub pair_13: f64,
    pub pair_23: f64,
    /// Median over windows of the per-window median of the three pairs.
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub windows: Vec<WindowResult>,
    /// Frames on the estimated trajectory, in order.
    pub frames: Vec<usize>,
    pub positions: Vec<Vec3>,
    pub gt_positions: Vec<Vec3>,
    pub ate: Vec<f64>,
    pub eps_r: PairSummary,
    pub eps_t: PairSummary,
}

impl TrajectoryResult {
    pub fn gaps(&self) -> impl Iterator<Item = &WindowResult> {
        self.windows.iter().filter(|w| w.gap.is_some())
    }

    pub fn ate_rmse(&self) -> f64 {
        (self.ate.iter().map(|e| e * e).sum::<f64>() / self.ate.len().max(1) as f64).sqrt()
    }

    pub fn ate_max(&self) -> f64 {
        self.ate.iter().copied().fold(0.0, f64::max)
    }
}

/// Window start frames: every `stride`-th frame that still has two frames
/// after it.
pub fn window_starts(frames: usize, stride: usize) -> Vec<usize> {
    (0..frames.saturating_sub(2))
        .step_by(stride.max(1))
        .collect()
}

fn summarize(windows: &[WindowResult], pick: impl Fn(&(f64, f64)) -> f64) -> PairSummary {
    let errs: Vec<[(f64, f64); 3]> = windows.iter().filter_map(|w| w.errors).collect();
    let col = |k: usize| median(&errs.iter().map(|e| pick(&e[k])).collect::<Vec<_>>());
    let per_window: Vec<f64> = errs
        .iter()
        .map(|e| median(&[pick(&e[0]), pick(&e[1]), pick(&e[2])]))
        .collect();
    PairSummary {
        pair_12: col(0),
        pair_13: col(1),
        pair_23: col(2),
        median: median(&per_window),
    }
}

fn evaluate_window(
    data: &SequenceData,
    cfg: &RansacConfig,
    start: usize,
    index: usize,
) -> Result<WindowResult> {
    let frames = [start, start + 1, start + 2];
    let align = [
        data.alignment(frames[0])?,
        data.alignment(frames[1])?,
        data.alignment(frames[2])?,
    ];
    let obs = dataset::window_observations(&data.tracks, start);
    let mut trips = Vec::with_capacity(obs.len());
    for (_, px) in &obs {
        let mut v = [Vec3::zeros(); 3];
        for k in 0..3 {
            v[k] = normalize_and_align(&px[k], &data.calib, &align[k], k as u8 + 1)?.point;
        }
        trips.push(PointTriplet::new(v[0], v[1], v[2]));
    }
    let mut result = WindowResult {
        start,
        triplets: trips.len(),
        inliers: 0,
        estimate: None,
        errors: None,
        gap: None,
    };
    let wcfg = RansacConfig {
        seed: cfg.seed.wrapping_add(index as u64),
        ..cfg.clone()
    };
    match ransac(&trips, &wcfg) {
        Ok(model) => {
            let est = (
                recover_unaligned_pose(&model.p2, &align[0], &align[1]),
                recover_unaligned_pose(&model.p3, &align[0], &align[2]),
            );
            let gt = (
                data.relative_gt(start, start + 1),
                data.relative_gt(start, start + 2),
            );
            result.errors = Some(pairwise_errors(&gt.0, &gt.1, &est.0, &est.1));
            result.estimate = Some(est);
            result.inliers = model.score;
        }
        Err(e @ (Error::InsufficientData { .. } | Error::NoModel(_))) => {
            result.gap = Some(e.to_string())
        }
        Err(e) => return Err(e),
    }
    Ok(result)
}

/// Runs RANSAC on every window of three consecutive frames starting at
/// multiples of `stride` (1 or 2) and chains the motion to the next
/// window start into a trajectory with ground-truth step lengths. Windows
/// without an estimate repeat the previous step.
pub fn eval_sequence(
    data: &SequenceData,
    cfg: &RansacConfig,
    stride: usize,
) -> Result<TrajectoryResult> {
    if data.frame_count() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: data.frame_count(),
        });
    }
    if !(1..=2).contains(&stride) {
        return Err(Error::InvalidConfig(format!(
            "stride {stride} not in 1..=2"
        )));
    }
    data.validate()?;
    let starts = window_starts(data.frame_count(), stride);
    let windows = starts
        .iter()
        .enumerate()
        .map(|(i, &s)| evaluate_window(data, cfg, s, i))
        .collect::<Result<Vec<_>>>()?;

    let mut frames = vec![0];
    let mut rot = data.rotation(0);
    let mut pos = data.centre(0);
    let mut positions = vec![pos];
    let mut last_step: Option<FullPose> = None;
    for w in &windows {
        let next = w.start + stride;
        let step = match &w.estimate {
            Some((e2, e3)) => Some(if stride == 1 { *e2 } else { *e3 }),
            None => last_step,
        };
        let scale = (data.centre(next) - data.centre(w.start)).norm();
        if let Some(step) = step {
            let dir = step.t.norm();
            if dir > 0.0 {
                pos += rot * (step.t * (scale / dir));
            }
            rot *= step.rotation.transpose();
            last_step = Some(step);
        }
        frames.push(next);
        positions.push(pos);
    }
    let gt_positions: Vec<Vec3> = frames.iter().map(|&f| data.centre(f)).collect();
    let ate = positions
        .iter()
        .zip(&gt_positions)
        .map(|(a, b)| (a - b).norm())
        .collect();
    Ok(TrajectoryResult {
        eps_r: summarize(&windows, |e| e.0),
        eps_t: summarize(&windows, |e| e.1),
        windows,
        frames,
        positions,
        gt_positions,
        ate,
    })
}

pub fn write_trajectory_csv<W: std::io::Write>(out: W, traj: &TrajectoryResult) -> Result<()> {
    use crate::format::sig17;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["frame", "x", "y", "z", "gt_x", "gt_y", "gt_z", "ate_m"])
        .map_err(io)?;
    for i in 0..traj.frames.len() {
        let (p, g) = (&traj.positions[i], &traj.gt_positions[i]);
        let mut row = vec![traj.frames[i].to_string()];
        row.extend([p.x, p.y, p.z, g.x, g.y, g.z, traj.ate[i]].map(sig17));
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Summary document written by the `eval` command.
pub fn summary_json(traj: &TrajectoryResult, solver: &str, stride: usize) -> Json {
    let pairs = |s: &PairSummary| {
        Json::obj([
            ("pair_12", Json::Num(s.pair_12)),
            ("pair_13", Json::Num(s.pair_13)),
            ("pair_23", Json::Num(s.pair_23)),
            ("median", Json::Num(s.median)),
        ])
    };
    let windows = traj
        .windows
        .iter()
        .map(|w| {
            let mut fields = vec![
                ("start_frame", Json::Int(w.start as i64)),
                ("triplets", Json::Int(w.triplets as i64)),
                ("inliers", Json::Int(w.inliers as i64)),
            ];
            match (&w.errors, &w.gap) {
                (Some(e), _) => {
                    fields.push(("eps_R_deg", Json::nums(&e.map(|p| p.0))));
                    fields.push(("eps_t_deg", Json::nums(&e.map(|p| p.1))));
                }
                (None, gap) => fields.push(("gap", Json::Str(gap.clone().unwrap_or_default()))),
            }
            Json::obj(fields)
        })
        .collect();
    Json::obj([
        ("solver", Json::Str(solver.into())),
        ("stride", Json::Int(stride as i64)),
        ("windows", Json::Int(traj.windows.len() as i64)),
        ("gaps", Json::Int(traj.gaps().count() as i64)),
        ("median_eps_R_deg", pairs(&traj.eps_r)),
        ("median_eps_t_deg", pairs(&traj.eps_t)),
        ("ate_rmse_m", Json::Num(traj.ate_rmse())),
        ("ate_max_m", Json::Num(traj.ate_max())),
        ("per_window", Json::Arr(windows)),
    ])
}

/// Parameters of a synthetic driving-like sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub frames: usize,
    pub points: usize,
    pub seed: u64,
    /// Forward motion per frame, meters.
    pub step: f64,
    /// Largest yaw change per frame, radians.
    pub yaw_rate: f64,
    /// Largest pitch and roll, radians.
    pub tilt: f64,
    pub calib: CameraIntrinsics,
    pub width: f64,
    pub height: f64,
    /// Keep only points seen in every frame.
    pub require_all_frames: bool,
}

impl Default for SyntheticSequence {
    fn default() -> Self {
        Self {
            frames: 10,
            points: 300,
            seed: 0,
            step: 1.0,
            yaw_rate: 0.03,
            tilt: 0.03,
            calib: CameraIntrinsics {
                fx: 718.856,
                fy: 718.856,
                cx: 607.1928,
                cy: 185.2157,
            },
            width: 1241.0,
            height: 376.0,
            require_all_frames: false,
        }
    }
}

/// Builds noise-free poses and tracks. The first camera is level, so its
/// frame is gravity aligned and serves as the world frame.
pub fn synthetic_sequence(params: &SyntheticSequence) -> Result<SequenceData> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut poses = Vec::with_capacity(params.frames);
    let mut yaw = 0.0f64;
    let mut centre = Vec3::zeros();
    for i in 0..params.frames {
        let (pitch, roll) = if i == 0 {
            (0.0, 0.0)
        } else {
            (
                rng.random_range(-params.tilt..=params.tilt),
                rng.random_range(-params.tilt..=params.tilt),
            )
        };
        // camera-from-world is rot_x(pitch) rot_z(roll) R_y(yaw)
        let r_cw = rot_x(pitch) * rot_z(roll) * yaw_rotation(yaw);
        let mut p = Matrix3x4::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&r_cw.transpose());
        p.set_column(3, &centre);
        poses.push(p);
        let heading = yaw_rotation(yaw).transpose() * Vec3::z();
        centre += heading * params.step + Vec3::new(0.0, rng.random_range(-0.02..=0.02), 0.0);
        yaw += rng.random_range(-params.yaw_rate..=params.yaw_rate);
    }
    let k = params.calib;
    let project = |pose: &Matrix3x4<f64>, x: &Vec3| -> Option<Vector2<f64>> {
        let r: Mat3 = pose.fixed_view::<3, 3>(0, 0).into_owned();
        let c = r.transpose() * (x - pose.column(3));
        if c.z < 1.0 {
            return None;
        }
        let px = k.project(&c);
        (px.x >= 0.0 && px.x <= params.width && px.y >= 0.0 && px.y <= params.height).then_some(px)
    };
    let mut tracks = TrackTable::new();
    let mut attempts = 0usize;
    let mut id = 0u64;
    while tracks.len() < params.points {
        attempts += 1;
        if attempts > 1000 * params.points.max(1) {
            return Err(Error::InfeasibleScene(
                "too few points visible in the sequence".into(),
            ));
        }
        let x = Vec3::new(
            rng.random_range(-20.0..=20.0),
            rng.random_range(-4.0..=1.5),
            rng.random_range(8.0..=60.0),
        );
        let obs: Vec<(usize, Vector2<f64>)> = poses
            .iter()
            .enumerate()
            .filter_map(|(f, p)| project(p, &x).map(|px| (f, px)))
            .collect();
        let enough = if params.require_all_frames {
            obs.len() == params.frames
        } else {
            obs.len() >= 3
        };
        if enough {
            tracks.insert(id, obs);
            id += 1;
        }
    }
    Ok(SequenceData {
        gt_poses: poses,
        calib: params.calib,
        tracks,
        imu: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_of_level_and_yawed_poses() {
        let id = Matrix3x4::identity();
        let a = derive_alignment(&id).unwrap();
        assert_eq!((a.pitch, a.roll), (0.0, 0.0));
        let mut p = Matrix3x4::zeros();
        p.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&yaw_rotation(1.1).transpose());
        let a = derive_alignment(&p).unwrap();
        assert!(a.pitch.abs() < 1e-15 && a.roll.abs() < 1e-15);
    }

    #[test]
    fn alignment_factorization() {
        let r_cw = rot_x(0.1) * rot_z(-0.05) * yaw_rotation(0.7);
        let mut p = Matrix3x4::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&r_cw.transpose());
        let a = derive_alignment(&p).unwrap();
        assert!((a.pitch - 0.1).abs() < 1e-12);
        assert!((a.roll + 0.05).abs() < 1e-12);
    }

    #[test]
    fn gimbal_adjacent_pose_rejected() {
        let r_cw = rot_x(89.5f64.to_radians());
        let mut p = Matrix3x4::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&r_cw.transpose());
        assert!(matches!(
            derive_alignment(&p),
            Err(Error::GimbalLock { .. })
        ));
    }

    #[test]
    fn window_counts() {
        assert_eq!(window_starts(10, 1).len(), 8);
        assert_eq!(window_starts(10, 2), vec![0, 2, 4, 6]);
        assert_eq!(window_starts(11, 2), vec![0, 2, 4, 6, 8]);
        assert!(window_starts(2, 1).is_empty());
    }

    fn small_sequence() -> SequenceData {
        synthetic_sequence(&SyntheticSequence {
            frames: 6,
            points: 120,
            seed: 3,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn noise_free_sequence_is_exact() {
        let data = small_sequence();
        for solver in ["4pt", "3pt"] {
            let cfg = RansacConfig {
                solver: solver.into(),
                threshold: 1.0 / data.calib.fx,
                seed: 5,
                ..Default::default()
            };
            let traj = eval_sequence(&data, &cfg, 1).unwrap();
            assert_eq!(traj.windows.len(), 4);
            assert_eq!(traj.positions.len(), 5);
            assert!(traj.eps_r.median < 1e-6, "{solver} {:?}", traj.eps_r);
            assert!(traj.ate_max() < 1e-6, "{solver} {}", traj.ate_max());
            let again = eval_sequence(&data, &cfg, 1).unwrap();
            assert_eq!(traj, again);
        }
    }

    #[test]
    fn stride_two_chains_one_to_three() {
        let data = small_sequence();
        let cfg = RansacConfig {
            threshold: 1.0 / data.calib.fx,
            ..Default::default()
        };
        let traj = eval_sequence(&data, &cfg, 2).unwrap();
        assert_eq!(traj.frames, vec![0, 2, 4]);
        assert!(traj.ate_max() < 1e-6);
        assert!(eval_sequence(&data, &cfg, 3).is_err());
    }

    #[test]
    fn windows_without_tracks_are_gaps() {
        let mut data = small_sequence();
        for track in data.tracks.values_mut() {
            track.retain(|(f, _)| *f != 3);
        }
        let cfg = RansacConfig {
            threshold: 1.0 / data.calib.fx,
            ..Default::default()
        };
        let traj = eval_sequence(&data, &cfg, 1).unwrap();
        let gaps: Vec<usize> = traj.gaps().map(|w| w.start).collect();
        assert_eq!(gaps, vec![1, 2, 3]);
        assert_eq!(traj.positions.len(), 5);
    }

    #[test]
    fn ground_truth_trajectory_has_zero_ate() {
        let data = small_sequence();
        let frames: Vec<usize> = (0..data.frame_count()).collect();
        let traj = TrajectoryResult {
            windows: vec![],
            positions: frames.iter().map(|&f| data.centre(f)).collect(),
            gt_positions: frames.iter().map(|&f| data.centre(f)).collect(),
            ate: vec![0.0; frames.len()],
            frames,
            eps_r: summarize(&[], |e| e.0),
            eps_t: summarize(&[], |e| e.1),
        };
        assert_eq!(traj.ate_rmse(), 0.0);
        let a: Vec<f64> = traj
            .positions
            .iter()
            .zip(&traj.gt_positions)
            .map(|(a, b)| (a - b).norm())
            .collect();
        assert!(a.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn noisy_imu_table() {
        let data = small_sequence();
        let clean = imu_from_poses(&data.gt_poses, 0.0, 1).unwrap();
        for (f, (p, r)) in &clean {
            let a = derive_alignment(&data.gt_poses[*f]).unwrap();
            assert_eq!((*p, *r), (a.pitch, a.roll));
        }
        let noisy = imu_from_poses(&data.gt_poses, 0.5, 1).unwrap();
        assert_ne!(noisy, clean);
    }
}
