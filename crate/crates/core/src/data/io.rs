//! Dataset persistence: magic `IDGN`, version 1, little-endian, with a
//! trailing CRC-32 over everything after the magic and version bytes.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Array4};

use super::{DatasetHandle, FactorSpace, VariantConfig, VariantKind};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"IDGN";
const VERSION: u8 = 1;

fn kind_byte(kind: VariantKind) -> u8 {
    match kind {
        VariantKind::Plain => 0,
        VariantKind::Color => 1,
        VariantKind::Noisy => 2,
        VariantKind::ScreamLike => 3,
    }
}

fn byte_kind(b: u8) -> Result<VariantKind> {
    match b {
        0 => Ok(VariantKind::Plain),
        1 => Ok(VariantKind::Color),
        2 => Ok(VariantKind::Noisy),
        3 => Ok(VariantKind::ScreamLike),
        _ => Err(Error::format("variant", format!("unknown variant kind {b}"))),
    }
}

pub fn save_dataset(d: &DatasetHandle, path: &Path) -> Result<()> {
    let mut body: Vec<u8> = Vec::new();
    body.write_u8(kind_byte(d.variant.kind))?;
    body.write_u64::<LittleEndian>(d.variant.noise_seed)?;
    body.write_u32::<LittleEndian>(d.variant.color_levels)?;

    match &d.factor_space {
        Some(space) => {
            body.write_u32::<LittleEndian>(space.num_factors() as u32)?;
            for ((name, &card), grid) in space
                .names()
                .iter()
                .zip(space.cardinalities())
                .zip(space.grids())
            {
                let bytes = name.as_bytes();
                body.write_u32::<LittleEndian>(bytes.len() as u32)?;
                body.write_all(bytes)?;
                body.write_u32::<LittleEndian>(card as u32)?;
                for &g in grid {
                    body.write_f64::<LittleEndian>(g)?;
                }
            }
        }
        None => body.write_u32::<LittleEndian>(0)?,
    }

    body.write_u8(u8::from(d.factor_table.is_some()))?;
    let (n, h, w, c) = {
        let s = d.images.shape();
        (s[0], s[1], s[2], s[3])
    };
    for dim in [n, h, w, c] {
        body.write_u32::<LittleEndian>(dim as u32)?;
    }
    body.extend_from_slice(
        d.images
            .as_slice()
            .ok_or_else(|| Error::InvalidState("dataset images are not contiguous".into()))?,
    );
    if let Some(table) = &d.factor_table {
        for &v in table.iter() {
            body.write_u16::<LittleEndian>(v)?;
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

pub fn load_dataset(path: &Path) -> Result<DatasetHandle> {
    let raw = std::fs::read(path)?;
    if raw.len() < 9 {
        return Err(Error::format("header", "file too short for a dataset"));
    }
    if &raw[..4] != MAGIC {
        return Err(Error::format("magic", "not an IDGN dataset"));
    }
    if raw[4] != VERSION {
        return Err(Error::format("version", format!("unsupported version {}", raw[4])));
    }
    let body = &raw[5..raw.len() - 4];
    let stored_crc = u32::from_le_bytes(raw[raw.len() - 4..].try_into().unwrap());
    if crc32fast::hash(body) != stored_crc {
        return Err(Error::format("checksum", "CRC-32 mismatch"));
    }

    let mut cur = std::io::Cursor::new(body);
    let trunc = |section: &'static str| move |_| Error::format(section, "truncated");

    let kind = byte_kind(cur.read_u8().map_err(trunc("variant"))?)?;
    let noise_seed = cur.read_u64::<LittleEndian>().map_err(trunc("variant"))?;
    let color_levels = cur.read_u32::<LittleEndian>().map_err(trunc("variant"))?;
    let variant = VariantConfig {
        kind,
        noise_seed,
        color_levels,
    };

    let n_factors = cur.read_u32::<LittleEndian>().map_err(trunc("factor descriptor"))? as usize;
    let factor_space = if n_factors > 0 {
        let mut names = Vec::with_capacity(n_factors);
        let mut cards = Vec::with_capacity(n_factors);
        let mut grids = Vec::with_capacity(n_factors);
        for _ in 0..n_factors {
            let len = cur
                .read_u32::<LittleEndian>()
                .map_err(trunc("factor descriptor"))? as usize;
            let mut buf = vec![0u8; len];
            cur.read_exact(&mut buf).map_err(trunc("factor descriptor"))?;
            names.push(
                String::from_utf8(buf)
                    .map_err(|_| Error::format("factor descriptor", "invalid UTF-8 name"))?,
            );
            let card = cur
                .read_u32::<LittleEndian>()
                .map_err(trunc("factor descriptor"))? as usize;
            let mut grid = Vec::with_capacity(card);
            for _ in 0..card {
                grid.push(
                    cur.read_f64::<LittleEndian>()
                        .map_err(trunc("factor descriptor"))?,
                );
            }
            cards.push(card);
            grids.push(grid);
        }
        Some(
            FactorSpace::new(names, cards, grids)
                .map_err(|e| Error::format("factor descriptor", e.to_string()))?,
        )
    } else {
        None
    };

    let has_table = cur.read_u8().map_err(trunc("header"))? != 0;
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = cur.read_u32::<LittleEndian>().map_err(trunc("header"))? as usize;
    }
    let [n, h, w, c] = dims;
    if c != 1 && c != 3 {
        return Err(Error::format("header", format!("channel count {c} not in {{1,3}}")));
    }

    let mut pixels = vec![0u8; n * h * w * c];
    cur.read_exact(&mut pixels).map_err(trunc("image payload"))?;
    let images = Array4::from_shape_vec((n, h, w, c), pixels)
        .map_err(|e| Error::format("image payload", e.to_string()))?;

    let factor_table = if has_table {
        let space = factor_space
            .as_ref()
            .ok_or_else(|| Error::format("factor table", "table present without a factor space"))?;
        let k = space.num_factors();
        let mut table = Vec::with_capacity(n * k);
        for _ in 0..n * k {
            table.push(cur.read_u16::<LittleEndian>().map_err(trunc("factor table"))?);
        }
        Some(
            Array2::from_shape_vec((n, k), table)
                .map_err(|e| Error::format("factor table", e.to_string()))?,
        )
    } else {
        None
    };

    if cur.position() as usize != body.len() {
        return Err(Error::format("trailer", "unexpected bytes after the factor table"));
    }

    Ok(DatasetHandle {
        factor_space,
        images,
        factor_table,
        variant,
    })
}

/// Ingest a directory of PNG/JPEG images: center-cropped to square, resized
/// to `resolution`, ordered by filename. Returns the handle and the number of
/// files skipped because they could not be decoded.
pub fn ingest_image_folder(path: &Path, resolution: usize) -> Result<(DatasetHandle, usize)> {
    if resolution == 0 {
        return Err(Error::InvalidConfig("resolution must be positive".into()));
    }
    let mut files: Vec<_> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();

    let mut decoded: Vec<image::RgbImage> = Vec::new();
    let mut skipped = 0usize;
    for file in &files {
        match image::open(file) {
            Ok(img) => {
                let rgb = img.to_rgb8();
                let (w, h) = rgb.dimensions();
                let side = w.min(h);
                let cropped = image::imageops::crop_imm(&rgb, (w - side) / 2, (h - side) / 2, side, side)
                    .to_image();
                decoded.push(image::imageops::resize(
                    &cropped,
                    resolution as u32,
                    resolution as u32,
                    image::imageops::FilterType::Triangle,
                ));
            }
            Err(err) => {
                eprintln!("warning: skipping {}: {err}", file.display());
                skipped += 1;
            }
        }
    }
    if decoded.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no decodable images in {}",
            path.display()
        )));
    }

    let n = decoded.len();
    let mut pixels = vec![0u8; n * resolution * resolution * 3];
    for (i, img) in decoded.iter().enumerate() {
        let base = i * resolution * resolution * 3;
        pixels[base..base + resolution * resolution * 3].copy_from_slice(img.as_raw());
    }
    let images = Array4::from_shape_vec((n, resolution, resolution, 3), pixels)
        .expect("buffer matches shape");
    Ok((
        DatasetHandle {
            factor_space: None,
            images,
            factor_table: None,
            variant: VariantConfig::plain(),
        },
        skipped,
    ))
}
