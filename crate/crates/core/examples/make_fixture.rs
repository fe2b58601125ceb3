//! Writes the bundled synthetic sequences used by the integration tests.
//!
//! ```text
//! cargo run -p trifocal --example make_fixture -- crates/core/tests/fixtures
//! ```

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use trifocal::dataset;
use trifocal::sequence::{imu_from_poses, synthetic_sequence, SequenceData, SyntheticSequence};

/// The ten-frame sequence.
pub fn seq10() -> SyntheticSequence {
    SyntheticSequence {
        frames: 10,
        points: 400,
        seed: 2024,
        ..Default::default()
    }
}

/// Three frames with 376 tracks seen in all of them.
pub fn tracks376() -> SyntheticSequence {
    SyntheticSequence {
        frames: 3,
        points: 376,
        seed: 56,
        require_all_frames: true,
        ..Default::default()
    }
}

fn write(dir: &Path, data: &SequenceData, with_imu: bool) -> trifocal::Result<()> {
    fs::create_dir_all(dir)?;
    let file = |name: &str| File::create(dir.join(name)).map(BufWriter::new);
    dataset::write_poses(file("poses.txt")?, &data.gt_poses)?;
    dataset::write_tracks(file("tracks.csv")?, &data.tracks)?;
    dataset::write_calib(file("calib.txt")?, &data.calib)?;
    if with_imu {
        dataset::write_imu(file("imu.csv")?, &imu_from_poses(&data.gt_poses, 0.0, 0)?)?;
    }
    Ok(())
}

fn main() -> trifocal::Result<()> {
    let root = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "crates/core/tests/fixtures".into());
    let root = Path::new(&root);
    write(&root.join("seq10"), &synthetic_sequence(&seq10())?, true)?;
    write(
        &root.join("tracks376"),
        &synthetic_sequence(&tracks376())?,
        false,
    )?;
    println!("fixtures written to {}", root.display());
    Ok(())
}
