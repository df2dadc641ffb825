//! VOLF binary volume format.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `VOLF`                            |
//! | 4      | 2    | version, u16 = 1                        |
//! | 6      | 12   | nx, ny, nz as u32                       |
//! | 18     | 12   | spacing x, y, z as f32 (micrometers)    |
//! | 30     | 4·N  | N = nx·ny·nz amplitudes as f32, x-fastest |
//!
//! Amplitudes are held as `f64` in memory and narrowed to `f32` on write.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::volume::{Dims, Spacing, Volume};

pub const MAGIC: &[u8; 4] = b"VOLF";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 30;

pub fn write_to<W: Write>(vol: &Volume, mut w: W) -> Result<()> {
    let dims = vol.dims();
    let spacing = vol.spacing();
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    for n in dims.as_array() {
        let n = u32::try_from(n).map_err(|_| Error::Format(format!("axis length {n} exceeds u32")))?;
        w.write_u32::<LittleEndian>(n)?;
    }
    for s in [spacing.x, spacing.y, spacing.z] {
        w.write_f32::<LittleEndian>(s as f32)?;
    }
    for &v in vol.as_slice() {
        w.write_f32::<LittleEndian>(v as f32)?;
    }
    Ok(())
}

pub fn read_from<R: Read>(mut r: R) -> Result<Volume> {
    let truncated = |what: &str| Error::Format(format!("truncated {what}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| truncated("magic"))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = r.read_u16::<LittleEndian>().map_err(|_| truncated("version"))?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let mut d = [0usize; 3];
    for n in &mut d {
        *n = r.read_u32::<LittleEndian>().map_err(|_| truncated("dimensions"))? as usize;
    }
    let mut s = [0f64; 3];
    for v in &mut s {
        *v = r.read_f32::<LittleEndian>().map_err(|_| truncated("spacing"))? as f64;
    }
    let dims = Dims::from(d);
    let len = d[0]
        .checked_mul(d[1])
        .and_then(|n| n.checked_mul(d[2]))
        .ok_or_else(|| Error::Format("dimension product overflows".into()))?;
    let mut raw = Vec::new();
    r.take(4 * len as u64).read_to_end(&mut raw)?;
    if raw.len() != 4 * len {
        return Err(truncated("payload"));
    }
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Volume::new(dims, Spacing::new(s[0], s[1], s[2]), data)
}

pub fn write(vol: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_to(vol, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<Volume> {
    read_from(BufReader::new(File::open(path)?))
}
