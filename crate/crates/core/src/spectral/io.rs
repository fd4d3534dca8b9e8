//! CRML binary field files.
//!
//! Layout (all little-endian): magic `CRML`, one version byte, `N₁ N₂ N₃ n`
//! as `u32`, `L₁ L₂ L₃ ε` as `f64`, then the samples as `f64` with `x₁`
//! slowest and the channel fastest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{SpectralError, SpectralGrid, VectorField};

pub const CRML_MAGIC: &[u8; 4] = b"CRML";
pub const CRML_VERSION: u8 = 1;

pub fn write_crml<W: Write>(mut w: W, field: &VectorField) -> Result<(), SpectralError> {
    let g = field.grid();
    w.write_all(CRML_MAGIC)?;
    w.write_all(&[CRML_VERSION])?;
    for n in g.counts().into_iter().chain([field.channels()]) {
        let n = u32::try_from(n)
            .map_err(|_| SpectralError::Format(format!("dimension {n} exceeds u32")))?;
        w.write_all(&n.to_le_bytes())?;
    }
    for v in g.lengths().into_iter().chain([g.eps()]) {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in field.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_crml<R: Read>(mut r: R) -> Result<VectorField, SpectralError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CRML_MAGIC {
        return Err(SpectralError::Format(format!("bad magic {magic:?}")));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != CRML_VERSION {
        return Err(SpectralError::Format(format!(
            "unsupported version {}",
            version[0]
        )));
    }
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let mut reals = [0f64; 4];
    for v in reals.iter_mut() {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    let grid = SpectralGrid::new(
        [dims[0], dims[1], dims[2]],
        [reals[0], reals[1], reals[2]],
        reals[3],
    )?;
    let channels = dims[3];
    if channels == 0 {
        return Err(SpectralError::Format("zero channels".into()));
    }
    let count = grid.len() * channels;
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(SpectralError::Format("trailing bytes after samples".into()));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    VectorField::from_vec(grid, channels, data)
}

pub fn write_crml_file(path: impl AsRef<Path>, field: &VectorField) -> Result<(), SpectralError> {
    write_crml(BufWriter::new(File::create(path)?), field)
}

pub fn read_crml_file(path: impl AsRef<Path>) -> Result<VectorField, SpectralError> {
    read_crml(BufReader::new(File::open(path)?))
}
