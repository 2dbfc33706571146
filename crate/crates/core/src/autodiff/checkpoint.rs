//! Binary checkpoint files for named parameter tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  b"TNCK"
//! u32    format version (1)
//! u32    entry count
//! entry* u32 name length, name bytes (utf-8),
//!        u32 rows, u32 cols,
//!        u64 byte offset of the tensor inside the data section
//! u64    data section length in bytes
//! data   raw f64 little-endian values, row-major per tensor
//! ```

use super::tensor::Tensor;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"TNCK";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated: expected {expected} data bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("tensor {name:?} has offset {offset} outside the data section of {len} bytes")]
    BadOffset { name: String, offset: u64, len: u64 },
    #[error("checkpoint is missing tensors: {names:?}")]
    MissingTensors { names: Vec<String> },
    #[error("checkpoint has unexpected tensors: {names:?}")]
    ExtraTensors { names: Vec<String> },
    #[error("tensor {name:?}: expected shape {expected:?}, checkpoint holds {found:?}")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid tensor name in checkpoint (not utf-8)")]
    BadName,
}

/// Write `entries` in the given order.
pub fn save_checkpoint<P: AsRef<Path>>(
    path: P,
    entries: &[(String, &Tensor)],
) -> Result<(), CheckpointError> {
    let mut manifest = Vec::new();
    let mut data: Vec<u8> = Vec::new();
    for (name, tensor) in entries {
        let offset = data.len() as u64;
        manifest.extend_from_slice(&(name.len() as u32).to_le_bytes());
        manifest.extend_from_slice(name.as_bytes());
        manifest.extend_from_slice(&(tensor.rows() as u32).to_le_bytes());
        manifest.extend_from_slice(&(tensor.cols() as u32).to_le_bytes());
        manifest.extend_from_slice(&offset.to_le_bytes());
        for v in tensor.data() {
            data.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(entries.len() as u32).to_le_bytes())?;
    out.write_all(&manifest)?;
    out.write_all(&(data.len() as u64).to_le_bytes())?;
    out.write_all(&data)?;
    out.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Read all tensors, preserving file order.
pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<Vec<(String, Tensor)>, CheckpointError> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = read_u32(&mut r)? as usize;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| CheckpointError::BadName)?;
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let offset = read_u64(&mut r)?;
        manifest.push((name, rows, cols, offset));
    }
    let data_len = read_u64(&mut r)?;
    let mut data = Vec::with_capacity(data_len as usize);
    let actual = r.read_to_end(&mut data)? as u64;
    if actual < data_len {
        return Err(CheckpointError::Truncated {
            expected: data_len,
            actual,
        });
    }

    let mut out = Vec::with_capacity(count);
    for (name, rows, cols, offset) in manifest {
        let bytes = (rows * cols * 8) as u64;
        if offset + bytes > data_len {
            return Err(CheckpointError::BadOffset {
                name,
                offset,
                len: data_len,
            });
        }
        let start = offset as usize;
        let values = data[start..start + bytes as usize]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, Tensor::from_vec(rows, cols, values)));
    }
    Ok(out)
}

/// Match loaded tensors against an expected name/shape set, reporting every
/// missing and extra name rather than failing on the first.
pub fn take_exact(
    loaded: Vec<(String, Tensor)>,
    expected: &[(String, (usize, usize))],
) -> Result<BTreeMap<String, Tensor>, CheckpointError> {
    let by_name: BTreeMap<String, Tensor> = loaded.into_iter().collect();
    let missing: Vec<String> = expected
        .iter()
        .filter(|(n, _)| !by_name.contains_key(n))
        .map(|(n, _)| n.clone())
        .collect();
    if !missing.is_empty() {
        return Err(CheckpointError::MissingTensors { names: missing });
    }
    let expected_names: std::collections::BTreeSet<&str> =
        expected.iter().map(|(n, _)| n.as_str()).collect();
    let extra: Vec<String> = by_name
        .keys()
        .filter(|n| !expected_names.contains(n.as_str()))
        .cloned()
        .collect();
    if !extra.is_empty() {
        return Err(CheckpointError::ExtraTensors { names: extra });
    }
    for (name, shape) in expected {
        let found = by_name[name].shape();
        if found != *shape {
            return Err(CheckpointError::ShapeMismatch {
                name: name.clone(),
                expected: *shape,
                found,
            });
        }
    }
    Ok(by_name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_names_shapes_and_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.tnck");
        let a = Tensor::from_vec(2, 3, vec![1.5, -2.25, 0.0, f64::MIN_POSITIVE, 1e300, -0.125]);
        let b = Tensor::scalar(42.0);
        save_checkpoint(
            &path,
            &[("layer.w".to_string(), &a), ("layer.b".to_string(), &b)],
        )
        .unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].0, "layer.w");
        assert_eq!(loaded[0].1, a);
        assert_eq!(loaded[1].1, b);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.tnck");
        std::fs::write(&path, b"NOPExxxxxxxxxxxxxxx").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn missing_and_extra_tensors_are_listed_by_name() {
        let t = Tensor::scalar(1.0);
        let loaded = vec![("have".to_string(), t.clone())];
        let err = take_exact(
            loaded,
            &[("want".to_string(), (1, 1))],
        )
        .unwrap_err();
        match err {
            CheckpointError::MissingTensors { names } => assert_eq!(names, vec!["want"]),
            other => panic!("unexpected error {other:?}"),
        }

        let loaded = vec![
            ("want".to_string(), t.clone()),
            ("surplus".to_string(), t.clone()),
        ];
        let err = take_exact(loaded, &[("want".to_string(), (1, 1))]).unwrap_err();
        match err {
            CheckpointError::ExtraTensors { names } => assert_eq!(names, vec!["surplus"]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_data_section_reports_byte_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.tnck");
        let t = Tensor::row(vec![1.0, 2.0, 3.0]);
        save_checkpoint(&path, &[("w".to_string(), &t)]).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 10]).unwrap();
        match load_checkpoint(&path) {
            Err(CheckpointError::Truncated { expected, actual }) => {
                assert_eq!(expected, 24);
                assert_eq!(actual, 14);
            }
            other => panic!("unexpected result {other:?}"),
        }
    }
}
