//! Checkpoint persistence: named tensors serialized as
//! `(UTF-8 name, shape, little-endian f32 payload)` records under the magic
//! `IDGC`, version 1, with a trailing file-level CRC-32.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::ArrayD;

use super::Scalar;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"IDGC";
const VERSION: u8 = 1;

/// Write `(name, tensor)` records to `path`.
pub fn save_named_tensors<T: Scalar>(path: &Path, tensors: &[(String, &ArrayD<T>)]) -> Result<()> {
    let mut body: Vec<u8> = Vec::new();
    body.write_u32::<LittleEndian>(tensors.len() as u32)?;
    for (name, tensor) in tensors {
        let bytes = name.as_bytes();
        body.write_u32::<LittleEndian>(bytes.len() as u32)?;
        body.write_all(bytes)?;
        body.write_u32::<LittleEndian>(tensor.ndim() as u32)?;
        for &d in tensor.shape() {
            body.write_u32::<LittleEndian>(d as u32)?;
        }
        for v in tensor.iter() {
            body.write_f32::<LittleEndian>(Scalar::to_f64(*v) as f32)?;
        }
    }
    let crc = crc32fast::hash(&body);

    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(MAGIC)?;
    file.write_u8(VERSION)?;
    file.write_all(&body)?;
    file.write_u32::<LittleEndian>(crc)?;
    file.flush()?;
    Ok(())
}

/// Read all `(name, tensor)` records from `path`, verifying the checksum.
pub fn load_named_tensors<T: Scalar>(path: &Path) -> Result<Vec<(String, ArrayD<T>)>> {
    let raw = std::fs::read(path)?;
    if raw.len() < 9 {
        return Err(Error::format("header", "file too short for a checkpoint"));
    }
    if &raw[..4] != MAGIC {
        return Err(Error::format("magic", "not an IDGC checkpoint"));
    }
    if raw[4] != VERSION {
        return Err(Error::format("version", format!("unsupported version {}", raw[4])));
    }
    let body = &raw[5..raw.len() - 4];
    let stored_crc = u32::from_le_bytes(raw[raw.len() - 4..].try_into().unwrap());
    if crc32fast::hash(body) != stored_crc {
        return Err(Error::format("checksum", "CRC-32 mismatch"));
    }

    let mut cursor = std::io::Cursor::new(body);
    let count = cursor
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::format("record count", "truncated"))?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = cursor
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::format("record header", "truncated"))? as usize;
        let mut name_bytes = vec![0u8; name_len];
        cursor
            .read_exact(&mut name_bytes)
            .map_err(|_| Error::format("record name", "truncated"))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::format("record name", "invalid UTF-8"))?;
        let ndim = cursor
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::format("record shape", "truncated"))? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(
                cursor
                    .read_u32::<LittleEndian>()
                    .map_err(|_| Error::format("record shape", "truncated"))? as usize,
            );
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(T::from_f64(
                cursor
                    .read_f32::<LittleEndian>()
                    .map_err(|_| Error::format("record payload", "truncated"))? as f64,
            ));
        }
        let tensor = ArrayD::from_shape_vec(shape, data)
            .map_err(|e| Error::format("record payload", e.to_string()))?;
        out.push((name, tensor));
    }
    Ok(out)
}
