use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use trifocal::bench::{self, NoiseAxis, SceneConfig};
use trifocal::dataset;
use trifocal::format::Json;
use trifocal::ransac::{EnforceMode, RansacConfig};
use trifocal::sequence::{self, SequenceData};
use trifocal::solver::SolverRegistry;

#[derive(Parser)]
#[command(
    name = "trifocal",
    version,
    about = "Three-view relative pose for gravity-aligned cameras"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    #[value(name = "3pt")]
    ThreePoint,
    #[value(name = "4pt")]
    FourPoint,
}

impl SolverArg {
    fn name(self) -> &'static str {
        match self {
            Self::ThreePoint => "3pt",
            Self::FourPoint => "4pt",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EnforceArg {
    Never,
    Final,
    Always,
}

impl From<EnforceArg> for EnforceMode {
    fn from(e: EnforceArg) -> Self {
        match e {
            EnforceArg::Never => EnforceMode::Never,
            EnforceArg::Final => EnforceMode::Final,
            EnforceArg::Always => EnforceMode::Always,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Pixel,
    #[value(name = "imu_pitch")]
    ImuPitch,
    #[value(name = "imu_roll")]
    ImuRoll,
}

impl From<AxisArg> for NoiseAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Pixel => NoiseAxis::Pixel,
            AxisArg::ImuPitch => NoiseAxis::ImuPitch,
            AxisArg::ImuRoll => NoiseAxis::ImuRoll,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one set of aligned triplets (CSV x1,y1,x2,y2,x3,y3).
    Solve {
        #[arg(long, value_enum)]
        solver: SolverArg,
        #[arg(long)]
        triplets: PathBuf,
        #[arg(long, value_enum, default_value = "final")]
        enforce: EnforceArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Noise-free trials; writes one CSV row per trial.
    Stability {
        #[arg(long, value_enum)]
        solver: SolverArg,
        #[arg(long, default_value_t = 5000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Optional histogram of log10 rotation errors.
        #[arg(long)]
        hist: Option<PathBuf>,
    },
    /// Median errors per noise level for one or both solvers.
    Sweep {
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Restrict to one solver; both run by default.
        #[arg(long, value_enum)]
        solver: Option<SolverArg>,
        /// Optional per-trial CSV.
        #[arg(long)]
        trials_out: Option<PathBuf>,
    },
    /// Evaluate a sequence in KITTI pose format against its ground truth.
    Eval {
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        imu: Option<PathBuf>,
        #[arg(long, value_enum)]
        solver: SolverArg,
        #[arg(long = "threshold-px", default_value_t = 1.0)]
        threshold_px: f64,
        #[arg(long, default_value_t = 0.99)]
        confidence: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "out-traj")]
        out_traj: PathBuf,
        #[arg(long = "out-summary")]
        out_summary: PathBuf,
        #[arg(long, value_enum, default_value = "final")]
        enforce: EnforceArg,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long = "max-iters", default_value_t = 1000)]
        max_iters: usize,
        /// Gaussian noise in degrees added to pitch and roll derived from
        /// the ground truth; ignored when --imu is given.
        #[arg(long = "imu-noise-deg", default_value_t = 0.0)]
        imu_noise_deg: f64,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn solve(solver: SolverArg, triplets: &Path, enforce: EnforceArg, out: &Path) -> Result<()> {
    let trips = dataset::parse_triplets(open(triplets)?)
        .with_context(|| format!("reading {}", triplets.display()))?;
    let solver = SolverRegistry::with_builtin().get(solver.name())?;
    let refine = !matches!(enforce, EnforceArg::Never);
    let models = solver.solve(&trips, refine)?;
    let Some(best) = models.first() else {
        bail!("solver returned no model");
    };
    let doc = Json::obj([
        ("theta2_rad", Json::Num(best.p2.theta)),
        ("t2", Json::nums(best.p2.t.as_slice())),
        ("theta3_rad", Json::Num(best.p3.theta)),
        ("t3", Json::nums(best.p3.t.as_slice())),
        ("residual", Json::Num(best.residual)),
    ]);
    let mut w = create(out)?;
    w.write_all(doc.to_pretty().as_bytes())?;
    w.flush()?;
    Ok(())
}

fn stability(
    solver: SolverArg,
    trials: usize,
    seed: u64,
    out: &Path,
    hist: Option<&Path>,
) -> Result<()> {
    let solver = SolverRegistry::with_builtin().get(solver.name())?;
    let cfg = SceneConfig {
        trials,
        seed,
        ..Default::default()
    };
    cfg.validate()?;
    let run = bench::run_stability(&cfg, solver.as_ref());
    bench::write_trials_csv(create(out)?, &run.records)?;
    if let Some(h) = hist {
        bench::write_histogram_csv(create(h)?, &run.histogram)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    axis: AxisArg,
    levels: &[f64],
    trials: usize,
    seed: u64,
    out: &Path,
    solver: Option<SolverArg>,
    trials_out: Option<&Path>,
) -> Result<()> {
    let registry = SolverRegistry::with_builtin();
    let names: Vec<&str> = match solver {
        Some(s) => vec![s.name()],
        None => vec!["3pt", "4pt"],
    };
    let cfg = SceneConfig {
        trials,
        seed,
        ..Default::default()
    };
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for name in names {
        let (r, t) =
            bench::run_noise_sweep(&cfg, axis.into(), levels, registry.get(name)?.as_ref())?;
        rows.extend(r);
        records.extend(t);
    }
    bench::write_sweep_csv(create(out)?, &rows)?;
    if let Some(p) = trials_out {
        bench::write_trials_csv(create(p)?, &records)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve {
            solver,
            triplets,
            enforce,
            out,
        } => solve(solver, &triplets, enforce, &out),
        Command::Stability {
            solver,
            trials,
            seed,
            out,
            hist,
        } => stability(solver, trials, seed, &out, hist.as_deref()),
        Command::Sweep {
            axis,
            levels,
            trials,
            seed,
            out,
            solver,
            trials_out,
        } => sweep(
            axis,
            &levels,
            trials,
            seed,
            &out,
            solver,
            trials_out.as_deref(),
        ),
        Command::Eval {
            poses,
            tracks,
            calib,
            imu,
            solver,
            threshold_px,
            confidence,
            seed,
            out_traj,
            out_summary,
            enforce,
            stride,
            max_iters,
            imu_noise_deg,
        } => {
            let mut data = SequenceData::load(&poses, &tracks, &calib, imu.as_deref())?;
            if data.imu.is_none() && imu_noise_deg > 0.0 {
                data.imu = Some(sequence::imu_from_poses(
                    &data.gt_poses,
                    imu_noise_deg,
                    seed,
                )?);
            }
            let cfg = RansacConfig {
                threshold: threshold_px / data.calib.fx,
                confidence,
                max_iters,
                min_iters: RansacConfig::default().min_iters.min(max_iters),
                seed,
                solver: solver.name().into(),
                enforce: enforce.into(),
            };
            let traj = sequence::eval_sequence(&data, &cfg, stride)?;
            sequence::write_trajectory_csv(create(&out_traj)?, &traj)?;
            let mut w = create(&out_summary)?;
            w.write_all(
                sequence::summary_json(&traj, solver.name(), stride)
                    .to_pretty()
                    .as_bytes(),
            )?;
            w.flush()?;
            Ok(())
        }
    }
}
