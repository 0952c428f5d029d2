//! `GDICT1` dictionary persistence.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"GDICT1"
//! m: u64, p: u64, G: u64
//! G x group size: u64
//! G x (label byte length: u32, label UTF-8 bytes)
//! m*p x f64, column-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ShapeBuilder};

use crate::error::{Error, Result};
use crate::model::{GroupPartition, GroupedDictionary};

pub const MAGIC: &[u8; 6] = b"GDICT1";

// Guards against absurd allocations from corrupt headers.
const MAX_ENTRIES: u64 = 1 << 32;

pub fn write_dictionary<W: Write>(dict: &GroupedDictionary, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(dict.dim() as u64).to_le_bytes())?;
    w.write_all(&(dict.n_atoms() as u64).to_le_bytes())?;
    w.write_all(&(dict.n_groups() as u64).to_le_bytes())?;
    for &size in dict.groups().sizes() {
        w.write_all(&(size as u64).to_le_bytes())?;
    }
    for label in dict.labels() {
        let bytes = label.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
    }
    for col in dict.atoms().columns() {
        for v in col {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<R, 8>(r)?))
}

pub fn read_dictionary<R: Read>(mut r: R) -> Result<GroupedDictionary> {
    let magic = read_exact::<R, 6>(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, expected GDICT1".into()));
    }
    let m = read_u64(&mut r)?;
    let p = read_u64(&mut r)?;
    let g = read_u64(&mut r)?;
    if m == 0 || p == 0 || g == 0 || g > p || m.saturating_mul(p) > MAX_ENTRIES {
        return Err(Error::Format(format!(
            "implausible header m={m} p={p} G={g}"
        )));
    }
    let sizes = (0..g)
        .map(|_| read_u64(&mut r).map(|s| s as usize))
        .collect::<Result<Vec<_>>>()?;
    let groups = GroupPartition::from_sizes(&sizes)?;
    if groups.total() as u64 != p {
        return Err(Error::Format(format!(
            "group sizes sum to {}, header says p={p}",
            groups.total()
        )));
    }
    let mut labels = Vec::with_capacity(g as usize);
    for _ in 0..g {
        let len = u32::from_le_bytes(read_exact::<R, 4>(&mut r)?) as usize;
        let mut bytes = vec![0u8; len];
        r.read_exact(&mut bytes)
            .map_err(|e| Error::Format(format!("truncated label: {e}")))?;
        labels.push(String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))?);
    }
    let (m, p) = (m as usize, p as usize);
    let mut data = Vec::with_capacity(m * p);
    for _ in 0..m * p {
        data.push(f64::from_le_bytes(read_exact::<R, 8>(&mut r)?));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)
        .map_err(|e| Error::Format(e.to_string()))?
        != 0
    {
        return Err(Error::Format("trailing bytes after atom data".into()));
    }
    let atoms =
        Array2::from_shape_vec((m, p).f(), data).map_err(|e| Error::Format(e.to_string()))?;
    GroupedDictionary::new(atoms, groups, labels)
}

pub fn save(dict: &GroupedDictionary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dictionary(dict, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<GroupedDictionary> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dictionary(BufReader::new(file))
}
