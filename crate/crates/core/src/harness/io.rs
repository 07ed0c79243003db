//! Cube files and CSV tables.
//!
//! Every writer goes through [`write_atomic`], so a failed run never leaves a
//! partial file behind.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix2, Vector2, Vector4};
use num_complex::Complex64;

use crate::detector::Measurement;
use crate::error::{Error, Result};
use crate::signal::{BasebandCube, RadarParams, TruthTarget};
use crate::tracker::{Track, TrackStatus};

pub const CUBE_MAGIC: &[u8; 4] = b"MMWC";
pub const CUBE_VERSION: u32 = 1;
/// Magic, five u32 fields and five f64 fields.
pub const CUBE_HEADER_LEN: usize = 4 + 5 * 4 + 5 * 8;

pub const TRUTH_HEADER: &str = "frame,target_id,px,py,vx,vy";
pub const MEASUREMENTS_HEADER: &str = "frame,px,py,vr,r,theta,R00,R01,R11,var_v,snr_db";
pub const TRACKS_HEADER: &str = "frame,track_id,status,px,py,vx,vy,var_px,var_py,cov_pxpy";
pub const REPORT_HEADER: &str = "frame,ospa,n_truth,n_tracks";

/// Writes through a temporary file in the destination directory and renames
/// it into place once `body` succeeds.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    builder.prefix(".mmtrack-");
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(fs::Permissions::from_mode(0o644));
    }
    let mut tmp = builder.tempfile_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Fixed part of a cube file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeHeader {
    pub version: u32,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub frames: usize,
    pub f_c: f64,
    pub mu: f64,
    pub t_s: f64,
    pub t_r: f64,
    pub t_frame: f64,
}

impl CubeHeader {
    pub fn from_params(p: &RadarParams, frames: usize) -> Self {
        Self {
            version: CUBE_VERSION,
            n: p.n,
            m: p.m,
            l: p.l,
            frames,
            f_c: p.f_c,
            mu: p.mu,
            t_s: p.t_s,
            t_r: p.t_r,
            t_frame: p.t_frame,
        }
    }

    /// Fails when the file was recorded with a different waveform.
    pub fn check_params(&self, p: &RadarParams) -> Result<()> {
        if (self.n, self.m, self.l) != (p.n, p.m, p.l) {
            return Err(Error::Config(format!(
                "cube is {}x{}x{} but the radar config is {}x{}x{}",
                self.n, self.m, self.l, p.n, p.m, p.l
            )));
        }
        let pairs = [
            ("f_c", self.f_c, p.f_c),
            ("mu", self.mu, p.mu),
            ("t_s", self.t_s, p.t_s),
            ("t_r", self.t_r, p.t_r),
            ("t_frame", self.t_frame, p.t_frame),
        ];
        for (name, a, b) in pairs {
            if (a - b).abs() > 1e-9 * b.abs() {
                return Err(Error::Config(format!(
                    "cube {name} = {a} differs from config {b}"
                )));
            }
        }
        Ok(())
    }

    fn payload_len(&self) -> Result<u64> {
        [self.frames, self.n, self.m, self.l, 8]
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| {
                Error::DimensionOverflow(format!(
                    "{} frames of {}x{}x{}",
                    self.frames, self.n, self.m, self.l
                ))
            })
    }
}

/// Serializes a cube file into memory.
pub fn encode_cubes(header: &CubeHeader, cubes: &[BasebandCube]) -> Result<Vec<u8>> {
    if cubes.len() != header.frames {
        return Err(Error::invalid("frame count differs from header"));
    }
    let len = header.payload_len()?;
    let mut out = Vec::with_capacity(CUBE_HEADER_LEN + len as usize);
    out.extend_from_slice(CUBE_MAGIC);
    for v in [
        header.version as usize,
        header.n,
        header.m,
        header.l,
        header.frames,
    ] {
        let v = u32::try_from(v)
            .map_err(|_| Error::DimensionOverflow(format!("{v} does not fit in u32")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [
        header.f_c,
        header.mu,
        header.t_s,
        header.t_r,
        header.t_frame,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for cube in cubes {
        if (cube.n, cube.m, cube.l) != (header.n, header.m, header.l) {
            return Err(Error::invalid("cube dimensions differ from header"));
        }
        for z in &cube.data {
            out.extend_from_slice(&(z.re as f32).to_le_bytes());
            out.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
    }
    Ok(out)
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

fn f32_at(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Parses a cube file held in memory; `path` only labels errors.
pub fn decode_cubes(bytes: &[u8], path: &Path) -> Result<(CubeHeader, Vec<BasebandCube>)> {
    if bytes.len() < 4 || &bytes[..4] != CUBE_MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    if bytes.len() < CUBE_HEADER_LEN {
        return Err(Error::Truncated {
            expected: CUBE_HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let version = u32_at(bytes, 4);
    if version != CUBE_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let header = CubeHeader {
        version,
        n: u32_at(bytes, 8) as usize,
        m: u32_at(bytes, 12) as usize,
        l: u32_at(bytes, 16) as usize,
        frames: u32_at(bytes, 20) as usize,
        f_c: f64_at(bytes, 24),
        mu: f64_at(bytes, 32),
        t_s: f64_at(bytes, 40),
        t_r: f64_at(bytes, 48),
        t_frame: f64_at(bytes, 56),
    };
    if header.n == 0 || header.m == 0 || header.l == 0 {
        return Err(Error::invalid("cube file has a zero dimension"));
    }
    let expected = header.payload_len()?;
    let found = (bytes.len() - CUBE_HEADER_LEN) as u64;
    if found < expected {
        return Err(Error::Truncated { expected, found });
    }
    if found > expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("{} trailing bytes after payload", found - expected),
        });
    }
    let per_cube = header.n * header.m * header.l;
    let mut cubes = Vec::with_capacity(header.frames);
    for f in 0..header.frames {
        let base = CUBE_HEADER_LEN + f * per_cube * 8;
        let data: Vec<Complex64> = (0..per_cube)
            .map(|i| {
                let at = base + 8 * i;
                Complex64::new(f32_at(bytes, at) as f64, f32_at(bytes, at + 4) as f64)
            })
            .collect();
        cubes.push(BasebandCube::from_data(header.n, header.m, header.l, data)?);
    }
    Ok((header, cubes))
}

pub fn write_cube_file(path: &Path, header: &CubeHeader, cubes: &[BasebandCube]) -> Result<()> {
    let bytes = encode_cubes(header, cubes)?;
    write_atomic(path, |w| Ok(w.write_all(&bytes)?))
}

pub fn read_cube_file(path: &Path) -> Result<(CubeHeader, Vec<BasebandCube>)> {
    let bytes = fs::read(path)?;
    decode_cubes(&bytes, path)
}

/// True when the file starts with the cube magic.
pub fn is_cube_file(path: &Path) -> Result<bool> {
    use std::io::Read;
    let mut head = [0u8; 4];
    let mut f = fs::File::open(path)?;
    let mut got = 0;
    while got < 4 {
        let k = f.read(&mut head[got..])?;
        if k == 0 {
            return Ok(false);
        }
        got += k;
    }
    Ok(&head == CUBE_MAGIC)
}

/// Data rows of a CSV file with the expected header, split on commas.
/// Blank lines are skipped.
fn read_csv(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((_, h)) => {
            return Err(parse_err(
                1,
                format!("expected header '{header}', found '{h}'"),
            ))
        }
        None => return Err(parse_err(1, "empty file".into())),
    }
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if fields.len() != width {
            return Err(parse_err(
                i + 1,
                format!("expected {width} fields, found {}", fields.len()),
            ));
        }
        rows.push((i + 1, fields));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, fields: &[String], i: usize) -> Result<T> {
    fields[i].parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("cannot parse '{}'", fields[i]),
    })
}

/// One truth row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthRow {
    pub frame: usize,
    pub label: u64,
    /// `[px, vx, py, vy]`.
    pub x: Vector4<f64>,
}

pub fn write_truth(path: &Path, truth: &[Vec<TruthTarget>]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{TRUTH_HEADER}")?;
        for (frame, targets) in truth.iter().enumerate() {
            for t in targets {
                writeln!(
                    w,
                    "{frame},{},{:e},{:e},{:e},{:e}",
                    t.label, t.x[0], t.x[2], t.x[1], t.x[3]
                )?;
            }
        }
        Ok(())
    })
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRow>> {
    read_csv(path, TRUTH_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            let g = |i| field::<f64>(path, line, &f, i);
            Ok(TruthRow {
                frame: field(path, line, &f, 0)?,
                label: field(path, line, &f, 1)?,
                x: Vector4::new(g(2)?, g(4)?, g(3)?, g(5)?),
            })
        })
        .collect()
}

/// Measurements are written with shortest round-trip formatting, so a
/// `track` run from the CSV sees exactly what `detect` produced.
pub fn write_measurements(path: &Path, meas: &[Measurement]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{MEASUREMENTS_HEADER}")?;
        for m in meas {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                m.frame,
                m.z[0],
                m.z[1],
                m.v_r,
                m.r,
                m.theta,
                m.r_cov[(0, 0)],
                m.r_cov[(0, 1)],
                m.r_cov[(1, 1)],
                m.var_v,
                m.snr_db
            )?;
        }
        Ok(())
    })
}

pub fn read_measurements(path: &Path) -> Result<Vec<Measurement>> {
    read_csv(path, MEASUREMENTS_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            let g = |i| field::<f64>(path, line, &f, i);
            let off = g(7)?;
            Ok(Measurement {
                frame: field(path, line, &f, 0)?,
                z: Vector2::new(g(1)?, g(2)?),
                r_cov: Matrix2::new(g(6)?, off, off, g(8)?),
                v_r: g(3)?,
                var_v: g(9)?,
                r: g(4)?,
                theta: g(5)?,
                snr_db: g(10)?,
                clamped: false,
            })
        })
        .collect()
}

/// One row of a tracks file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRow {
    pub frame: usize,
    pub track_id: u64,
    pub status: TrackStatus,
    /// `[px, vx, py, vy]`.
    pub x: Vector4<f64>,
    pub var_px: f64,
    pub var_py: f64,
    pub cov_pxpy: f64,
}

impl TrackRow {
    pub fn from_track(frame: usize, t: &Track) -> Self {
        Self {
            frame,
            track_id: t.label,
            status: t.status,
            x: t.x,
            var_px: t.sigma[(0, 0)],
            var_py: t.sigma[(2, 2)],
            cov_pxpy: t.sigma[(0, 2)],
        }
    }
}

fn sig12(v: f64) -> String {
    format!("{v:.11e}")
}

/// One row per live track per frame, ordered by frame then label, with 12
/// significant digits.
pub fn write_tracks(path: &Path, snapshots: &[(usize, Vec<Track>)]) -> Result<()> {
    let mut rows: Vec<TrackRow> = snapshots
        .iter()
        .flat_map(|(frame, tracks)| tracks.iter().map(move |t| TrackRow::from_track(*frame, t)))
        .collect();
    rows.sort_by_key(|r| (r.frame, r.track_id));
    write_atomic(path, |w| {
        writeln!(w, "{TRACKS_HEADER}")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.frame,
                r.track_id,
                r.status.as_str(),
                sig12(r.x[0]),
                sig12(r.x[2]),
                sig12(r.x[1]),
                sig12(r.x[3]),
                sig12(r.var_px),
                sig12(r.var_py),
                sig12(r.cov_pxpy)
            )?;
        }
        Ok(())
    })
}

pub fn read_tracks(path: &Path) -> Result<Vec<TrackRow>> {
    read_csv(path, TRACKS_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            let g = |i| field::<f64>(path, line, &f, i);
            Ok(TrackRow {
                frame: field(path, line, &f, 0)?,
                track_id: field(path, line, &f, 1)?,
                status: field(path, line, &f, 2)?,
                x: Vector4::new(g(3)?, g(5)?, g(4)?, g(6)?),
                var_px: g(7)?,
                var_py: g(8)?,
                cov_pxpy: g(9)?,
            })
        })
        .collect()
}

/// Per-frame OSPA with the cardinalities of both sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub frame: usize,
    pub ospa: f64,
    pub n_truth: usize,
    pub n_tracks: usize,
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{REPORT_HEADER}")?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{}",
                r.frame,
                sig12(r.ospa),
                r.n_truth,
                r.n_tracks
            )?;
        }
        Ok(())
    })
}
