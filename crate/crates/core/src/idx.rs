//! IDX image and label files, the container used by MNIST.
//!
//! Images: magic `0x00000803`, then big-endian `u32` count, rows and columns,
//! then one unsigned byte per pixel. Labels: magic `0x00000801`, a `u32`
//! count, then one byte per label. Pixels are scaled by 1/255 on load and
//! rounded to the nearest byte on save.

use std::fs;
use std::path::Path;

use crate::dataset::AssuranceSet;
use crate::distortion::Image;
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        let b = self.bytes.get(self.pos..end).ok_or_else(|| {
            Error::format(self.pos as u64, format!("truncated while reading {what}"))
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(
                    self.bytes.len() as u64,
                    format!(
                        "truncated {what}: expected {n} bytes from offset {}",
                        self.pos
                    ),
                )
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn expect_magic(&mut self, magic: u32) -> Result<()> {
        let got = self.u32("magic number")?;
        if got != magic {
            return Err(Error::format(
                0,
                format!("magic {got:#010x}, expected {magic:#010x}"),
            ));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(self.pos as u64, "trailing bytes"));
        }
        Ok(())
    }
}

pub fn parse_images(bytes: &[u8]) -> Result<Vec<Image>> {
    let mut cur = Cursor { bytes, pos: 0 };
    cur.expect_magic(IMAGE_MAGIC)?;
    let count = cur.u32("image count")? as usize;
    let rows = cur.u32("row count")? as usize;
    let cols = cur.u32("column count")? as usize;
    if count > 0 && (rows == 0 || cols == 0) {
        return Err(Error::format(8, "zero image dimension"));
    }
    let data = cur.take(count * rows * cols, "pixel data")?;
    cur.finish()?;
    if count == 0 {
        return Ok(Vec::new());
    }
    data.chunks_exact(rows * cols)
        .map(|c| Image::new(cols, rows, c.iter().map(|&b| b as f64 / 255.0).collect()))
        .collect()
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut cur = Cursor { bytes, pos: 0 };
    cur.expect_magic(LABEL_MAGIC)?;
    let count = cur.u32("label count")? as usize;
    let data = cur.take(count, "label data")?;
    cur.finish()?;
    Ok(data.iter().map(|&b| b as usize).collect())
}

/// Encodes images; `dims` (rows, cols) is only consulted for an empty list.
pub fn encode_images(images: &[Image], dims: (usize, usize)) -> Result<Vec<u8>> {
    let (rows, cols) = images.first().map_or(dims, |i| (i.height(), i.width()));
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        if (img.height(), img.width()) != (rows, cols) {
            return Err(Error::input("IDX images must share one size"));
        }
        out.extend(img.pixels().iter().map(|p| (p * 255.0).round() as u8));
    }
    Ok(out)
}

pub fn encode_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        out.push(
            u8::try_from(l).map_err(|_| Error::input(format!("label {l} does not fit a byte")))?,
        );
    }
    Ok(out)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_images(path: &Path) -> Result<Vec<Image>> {
    parse_images(&read(path)?)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    parse_labels(&read(path)?)
}

pub fn read_set(images: &Path, labels: &Path) -> Result<AssuranceSet> {
    let imgs = read_images(images)?;
    let labs = read_labels(labels)?;
    if imgs.len() != labs.len() {
        return Err(Error::format(
            4,
            format!(
                "{} images in {} but {} labels in {}",
                imgs.len(),
                images.display(),
                labs.len(),
                labels.display()
            ),
        ));
    }
    AssuranceSet::new(imgs, labs)
}

pub fn write_set(
    set: &AssuranceSet,
    images: &Path,
    labels: &Path,
    dims: (usize, usize),
) -> Result<()> {
    write(images, &encode_images(set.images(), dims)?)?;
    write(labels, &encode_labels(set.labels())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let img = Image::new(3, 2, vec![0.0, 1.0, 0.5, 0.2, 0.0, 1.0]).unwrap();
        let bytes = encode_images(&[img], (0, 0)).unwrap();
        assert_eq!(
            &bytes[..16],
            &[0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 3]
        );
        assert_eq!(&bytes[16..], &[0, 255, 128, 51, 0, 255]);
        assert_eq!(
            encode_labels(&[7, 2]).unwrap(),
            vec![0, 0, 8, 1, 0, 0, 0, 2, 7, 2]
        );
    }

    #[test]
    fn byte_pixels_round_trip_exactly() {
        let px: Vec<f64> = (0..=255u32).map(|b| b as f64 / 255.0).collect();
        let img = Image::new(16, 16, px).unwrap();
        let back =
            parse_images(&encode_images(std::slice::from_ref(&img), (0, 0)).unwrap()).unwrap();
        assert_eq!(back, vec![img]);
    }

    #[test]
    fn empty_files_are_valid() {
        assert!(parse_images(&encode_images(&[], (28, 28)).unwrap())
            .unwrap()
            .is_empty());
        assert!(parse_labels(&encode_labels(&[]).unwrap())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn malformed_input() {
        let good = encode_images(&[Image::filled(2, 2, 0.5).unwrap()], (0, 0)).unwrap();
        let err = parse_images(&good[..good.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        let err = parse_images(&good[..10]).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 8, .. }), "{err}");
        let mut bad_magic = good.clone();
        bad_magic[3] = 1;
        assert!(matches!(
            parse_images(&bad_magic),
            Err(Error::Format { offset: 0, .. })
        ));
        assert!(parse_labels(&good).is_err());
    }
}
