//! Readers and writers for the sequence file formats.
//!
//! * poses: one camera-to-world 3x4 matrix per line, 12 numbers, row-major
//! * tracks: CSV `track_id,frame,u,v`, one observation per row
//! * calibration: a single line `fx fy cx cy`
//! * IMU: CSV `frame,pitch_rad,roll_rad`
//! * triplets: CSV `x1,y1,x2,y2,x3,y3` of aligned normalized coordinates
//!
//! Writers emit floats with 17 significant digits so that every accepted
//! file survives a write/read cycle unchanged.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use nalgebra::{Matrix3x4, Vector2};

use crate::error::{Error, Result};
use crate::format::sig17;
use crate::geometry::{CameraIntrinsics, Mat3, PointTriplet, Vec3};

/// Largest deviation from orthonormality that is silently repaired.
pub const ORTHONORMAL_TOL: f64 = 1e-3;

/// Deviations at or below this are rounding noise; such blocks are kept as
/// written so that re-reading a written file is exact.
pub const ORTHONORMAL_KEEP: f64 = 1e-12;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(token: &str, line: usize) -> Result<f64> {
    token
        .trim()
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("invalid number '{}'", token.trim())))
}

/// Nearest rotation in the Frobenius sense.
pub fn orthonormalize(r: &Mat3) -> Mat3 {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut out = u * v_t;
    if out.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        out = u * v_t;
    }
    out
}

pub fn parse_poses<R: BufRead>(input: R) -> Result<Vec<Matrix3x4<f64>>> {
    let mut poses = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let n = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 12 {
            return Err(parse_err(
                n,
                format!("expected 12 numbers, found {}", tokens.len()),
            ));
        }
        let mut vals = [0.0; 12];
        for (v, t) in vals.iter_mut().zip(&tokens) {
            *v = parse_f64(t, n)?;
        }
        let mut pose = Matrix3x4::from_row_slice(&vals);
        let r: Mat3 = pose.fixed_view::<3, 3>(0, 0).into_owned();
        let dev = (r.transpose() * r - Mat3::identity()).amax();
        if !(dev <= ORTHONORMAL_TOL) || r.determinant() <= 0.0 {
            return Err(parse_err(
                n,
                format!("rotation block is not orthonormal (deviation {dev:.3e})"),
            ));
        }
        if dev > ORTHONORMAL_KEEP {
            pose.fixed_view_mut::<3, 3>(0, 0)
                .copy_from(&orthonormalize(&r));
        }
        poses.push(pose);
    }
    Ok(poses)
}

pub fn write_poses<W: Write>(mut out: W, poses: &[Matrix3x4<f64>]) -> Result<()> {
    for p in poses {
        let row: Vec<String> = (0..12).map(|i| sig17(p[(i / 4, i % 4)])).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Observations of one track, sorted by frame.
pub type Track = Vec<(usize, Vector2<f64>)>;

/// Tracks keyed by id.
pub type TrackTable = BTreeMap<u64, Track>;

pub const TRACKS_HEADER: &str = "track_id,frame,u,v";
pub const IMU_HEADER: &str = "frame,pitch_rad,roll_rad";

/// Reads a headed CSV; `row` receives the fields and the file line number.
fn read_csv<R: Read>(
    input: R,
    header: &str,
    mut row: impl FnMut(&[&str], usize) -> Result<()>,
) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut seen_header = false;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<&str> = rec.iter().collect();
        if !seen_header {
            if fields.join(",") != header {
                return Err(parse_err(line, format!("expected header '{header}'")));
            }
            seen_header = true;
            continue;
        }
        if fields.len() == 1 && fields[0].is_empty() {
            continue;
        }
        row(&fields, line)?;
    }
    if !seen_header {
        return Err(parse_err(1, format!("missing header '{header}'")));
    }
    Ok(())
}

fn parse_index<T: std::str::FromStr>(token: &str, line: usize, what: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {what} '{token}'")))
}

pub fn parse_tracks<R: Read>(input: R) -> Result<TrackTable> {
    let mut table = TrackTable::new();
    read_csv(input, TRACKS_HEADER, |f, line| {
        if f.len() != 4 {
            return Err(parse_err(
                line,
                format!("expected 4 fields, found {}", f.len()),
            ));
        }
        let id: u64 = parse_index(f[0], line, "track id")?;
        let frame: usize = parse_index(f[1], line, "frame")?;
        let uv = Vector2::new(parse_f64(f[2], line)?, parse_f64(f[3], line)?);
        let track = table.entry(id).or_default();
        if track.iter().any(|(fr, _)| *fr == frame) {
            return Err(parse_err(
                line,
                format!("track {id} observed twice in frame {frame}"),
            ));
        }
        track.push((frame, uv));
        Ok(())
    })?;
    for track in table.values_mut() {
        track.sort_by_key(|(f, _)| *f);
    }
    Ok(table)
}

pub fn write_tracks<W: Write>(mut out: W, tracks: &TrackTable) -> Result<()> {
    writeln!(out, "{TRACKS_HEADER}")?;
    for (id, track) in tracks {
        for (frame, uv) in track {
            writeln!(out, "{id},{frame},{},{}", sig17(uv.x), sig17(uv.y))?;
        }
    }
    Ok(())
}

/// Pixels of tracks observed in exactly the frames `start..start + 3`.
pub fn window_observations(tracks: &TrackTable, start: usize) -> Vec<(u64, [Vector2<f64>; 3])> {
    tracks
        .iter()
        .filter_map(|(id, track)| {
            let at = |f: usize| track.iter().find(|(fr, _)| *fr == f).map(|(_, uv)| *uv);
            Some((*id, [at(start)?, at(start + 1)?, at(start + 2)?]))
        })
        .collect()
}

pub fn parse_calib<R: Read>(mut input: R) -> Result<CameraIntrinsics> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let [(i, line)] = lines.as_slice() else {
        return Err(parse_err(
            1,
            format!("expected one line, found {}", lines.len()),
        ));
    };
    let n = i + 1;
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 4 {
        return Err(parse_err(
            n,
            format!("expected 4 numbers, found {}", tokens.len()),
        ));
    }
    let v: Vec<f64> = tokens
        .iter()
        .map(|t| parse_f64(t, n))
        .collect::<Result<_>>()?;
    CameraIntrinsics::new(v[0], v[1], v[2], v[3])
}

pub fn write_calib<W: Write>(mut out: W, k: &CameraIntrinsics) -> Result<()> {
    writeln!(
        out,
        "{} {} {} {}",
        sig17(k.fx),
        sig17(k.fy),
        sig17(k.cx),
        sig17(k.cy)
    )?;
    Ok(())
}

/// Pitch and roll in radians per frame.
pub type ImuTable = BTreeMap<usize, (f64, f64)>;

pub fn parse_imu<R: Read>(input: R) -> Result<ImuTable> {
    let mut table = ImuTable::new();
    read_csv(input, IMU_HEADER, |f, line| {
        if f.len() != 3 {
            return Err(parse_err(
                line,
                format!("expected 3 fields, found {}", f.len()),
            ));
        }
        let frame: usize = parse_index(f[0], line, "frame")?;
        let angles = (parse_f64(f[1], line)?, parse_f64(f[2], line)?);
        if table.insert(frame, angles).is_some() {
            return Err(parse_err(line, format!("frame {frame} listed twice")));
        }
        Ok(())
    })?;
    Ok(table)
}

pub fn write_imu<W: Write>(mut out: W, imu: &ImuTable) -> Result<()> {
    writeln!(out, "{IMU_HEADER}")?;
    for (frame, (p, r)) in imu {
        writeln!(out, "{frame},{},{}", sig17(*p), sig17(*r))?;
    }
    Ok(())
}

pub const TRIPLETS_HEADER: &str = "x1,y1,x2,y2,x3,y3";

pub fn parse_triplets<R: Read>(input: R) -> Result<Vec<PointTriplet>> {
    let mut out = Vec::new();
    read_csv(input, TRIPLETS_HEADER, |f, line| {
        if f.len() != 6 {
            return Err(parse_err(
                line,
                format!("expected 6 fields, found {}", f.len()),
            ));
        }
        let v: Vec<f64> = f
            .iter()
            .map(|t| parse_f64(t, line))
            .collect::<Result<_>>()?;
        out.push(PointTriplet::new(
            Vec3::new(v[0], v[1], 1.0),
            Vec3::new(v[2], v[3], 1.0),
            Vec3::new(v[4], v[5], 1.0),
        ));
        Ok(())
    })?;
    Ok(out)
}

pub fn write_triplets<W: Write>(mut out: W, trips: &[PointTriplet]) -> Result<()> {
    writeln!(out, "{TRIPLETS_HEADER}")?;
    for t in trips {
        let v = [t.x1 / t.x1.z, t.x2 / t.x2.z, t.x3 / t.x3.z];
        let row: Vec<String> = v.iter().flat_map(|p| [sig17(p.x), sig17(p.y)]).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
