//! Binary persistence for wind field series.
//!
//! Layout (little-endian): magic `TWN1`, u32 version, u32 nx, u32 ny,
//! u32 n_frames, f64 domain size, f64 dt_frame, f64 viscosity,
//! f64 speed bound, u64 seed, then per frame the u, v, p grids as
//! `nx * ny` f32 values each, row-major with y-major rows.
//!
//! Grids are quantized to f32 on write, so loading recovers the stored
//! fields only to single precision; frame times and the Reynolds diagnostic
//! are recomputed from the header and the loaded grids. Writing a loaded
//! series back produces a byte-identical file.

use super::series::{reynolds_diagnostic, WindFieldSeries, WindFrame};
use super::solver::GridSpec;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"TWN1";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 8 * 4 + 8;

#[derive(Debug, Error)]
pub enum WindFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes {found:02x?}, expected \"TWN1\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("implausible header: {reason}")]
    BadHeader { reason: String },
}

pub fn write_series(series: &WindFieldSeries, path: &Path) -> Result<(), WindFileError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(series.spec.nx as u32).to_le_bytes())?;
    w.write_all(&(series.spec.ny as u32).to_le_bytes())?;
    w.write_all(&(series.frames.len() as u32).to_le_bytes())?;
    w.write_all(&series.spec.domain_size.to_le_bytes())?;
    w.write_all(&series.dt_frame.to_le_bytes())?;
    w.write_all(&series.spec.viscosity.to_le_bytes())?;
    w.write_all(&series.speed_bound.to_le_bytes())?;
    w.write_all(&series.seed.to_le_bytes())?;
    for frame in &series.frames {
        for grid in [&frame.u, &frame.v, &frame.p] {
            for &x in grid.iter() {
                w.write_all(&(x as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_series(path: &Path) -> Result<WindFieldSeries, WindFileError> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut r = BufReader::new(file);

    if file_len < HEADER_LEN as u64 {
        return Err(WindFileError::Truncated {
            expected: HEADER_LEN as u64,
            actual: file_len,
        });
    }
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(WindFileError::BadMagic { found: magic });
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(WindFileError::UnsupportedVersion(version));
    }
    let nx = read_u32(&mut r)? as usize;
    let ny = read_u32(&mut r)? as usize;
    let n_frames = read_u32(&mut r)? as usize;
    let domain_size = read_f64(&mut r)?;
    let dt_frame = read_f64(&mut r)?;
    let viscosity = read_f64(&mut r)?;
    let speed_bound = read_f64(&mut r)?;
    let seed = read_u64(&mut r)?;

    if nx == 0 || ny == 0 || nx > 1 << 14 || ny > 1 << 14 {
        return Err(WindFileError::BadHeader {
            reason: format!("grid {nx}x{ny}"),
        });
    }
    if !(dt_frame > 0.0) || !(domain_size > 0.0) || !(viscosity > 0.0) {
        return Err(WindFileError::BadHeader {
            reason: format!(
                "domain_size {domain_size}, dt_frame {dt_frame}, viscosity {viscosity}"
            ),
        });
    }
    let cells = nx * ny;
    let expected = HEADER_LEN as u64 + n_frames as u64 * 3 * cells as u64 * 4;
    if file_len != expected {
        return Err(WindFileError::Truncated {
            expected,
            actual: file_len,
        });
    }

    let spec = GridSpec {
        nx,
        ny,
        domain_size,
        viscosity,
        ..GridSpec::default()
    };
    let mut frames = Vec::with_capacity(n_frames);
    let mut buf = vec![0u8; cells * 4];
    for k in 0..n_frames {
        let mut read_grid = |r: &mut BufReader<File>| -> Result<Vec<f64>, WindFileError> {
            r.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect())
        };
        let u = read_grid(&mut r)?;
        let v = read_grid(&mut r)?;
        let p = read_grid(&mut r)?;
        let mut frame = WindFrame {
            t: k as f64 * dt_frame,
            u,
            v,
            p,
            re_diag: 0.0,
        };
        frame.re_diag = reynolds_diagnostic(&frame, &spec);
        frames.push(frame);
    }

    Ok(WindFieldSeries {
        spec,
        frames,
        dt_frame,
        seed,
        speed_bound,
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32, WindFileError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, WindFileError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64, WindFileError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
