//! Row-major single-channel images and their file formats.
//!
//! Gray images are binary PGM (`P5`). Depth maps are either CSV of meters
//! (one image row per line, `nan` for no return) or 16-bit PGM holding depth
//! in fixed point, 1/256 m per level, with level 0 meaning invalid.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};

use crate::error::{Error, Result};

/// Depth levels per meter in 16-bit depth PGMs.
pub const DEPTH_LEVELS_PER_M: f64 = 256.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(
                "raster",
                format!("{} values for {width}x{height}", data.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    pub fn same_dims<U>(&self, other: &Raster<U>) -> Result<()> {
        if self.dims() == other.dims() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            })
        }
    }
}

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn open_pnm(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| image_err(path, e))
}

pub fn read_pgm8(path: impl AsRef<Path>) -> Result<Raster<u8>> {
    let path = path.as_ref();
    let img = match open_pnm(path)? {
        DynamicImage::ImageLuma8(img) => img,
        other => return Err(image_err(path, format!("expected 8-bit gray, got {:?}", other.color()))),
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    Raster::from_vec(w, h, img.into_raw())
}

pub fn read_pgm16(path: impl AsRef<Path>) -> Result<Raster<u16>> {
    let path = path.as_ref();
    let img = match open_pnm(path)? {
        DynamicImage::ImageLuma16(img) => img,
        other => return Err(image_err(path, format!("expected 16-bit gray, got {:?}", other.color()))),
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    Raster::from_vec(w, h, img.into_raw())
}

fn write_gray(path: &Path, bytes: &[u8], w: usize, h: usize) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(bytes, w as u32, h as u32, ExtendedColorType::L8)
        .map_err(|e| image_err(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_pgm8(path: impl AsRef<Path>, img: &Raster<u8>) -> Result<()> {
    write_gray(path.as_ref(), img.data(), img.width, img.height)
}

/// The pnm encoder only handles 8-bit samples, so 16-bit files are written
/// directly: `P5` header, maxval 65535, big-endian samples.
pub fn write_pgm16(path: impl AsRef<Path>, img: &Raster<u16>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(out, "P5\n{} {}\n65535\n", img.width, img.height).map_err(io)?;
    for v in img.data() {
        out.write_all(&v.to_be_bytes()).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Fixed-point depth level; non-finite or non-positive depth maps to 0.
pub fn depth_to_level(depth_m: f64) -> u16 {
    if !(depth_m.is_finite() && depth_m > 0.0) {
        return 0;
    }
    (depth_m * DEPTH_LEVELS_PER_M).round().clamp(1.0, u16::MAX as f64) as u16
}

pub fn level_to_depth(level: u16) -> f64 {
    if level == 0 {
        f64::NAN
    } else {
        level as f64 / DEPTH_LEVELS_PER_M
    }
}

pub fn write_depth_pgm16(path: impl AsRef<Path>, depth: &Raster<f64>) -> Result<()> {
    let levels = Raster::from_vec(
        depth.width,
        depth.height,
        depth.data().iter().map(|&d| depth_to_level(d)).collect(),
    )?;
    write_pgm16(path, &levels)
}

pub fn read_depth_pgm16(path: impl AsRef<Path>) -> Result<Raster<f64>> {
    let levels = read_pgm16(path)?;
    let (w, h) = levels.dims();
    Raster::from_vec(w, h, levels.into_data().into_iter().map(level_to_depth).collect())
}

pub fn write_depth_csv(path: impl AsRef<Path>, depth: &Raster<f64>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    for row in depth.data().chunks(depth.width.max(1)) {
        let line: Vec<String> = row
            .iter()
            .map(|d| if d.is_finite() { d.to_string() } else { "nan".into() })
            .collect();
        writeln!(out, "{}", line.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_depth_csv(path: impl AsRef<Path>) -> Result<Raster<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut data = vec![];
    let mut width = None;
    let mut height = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            reason,
        };
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| parse_err(format!("`{v}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_err(format!("expected {w} columns, got {}", row.len())))
            }
            _ => {}
        }
        data.extend(row);
        height += 1;
    }
    let width = width.ok_or(Error::Empty("depth csv"))?;
    Raster::from_vec(width, height, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm8_roundtrip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        let img = Raster::from_fn(5, 3, |x, y| (x * 40 + y) as u8);
        write_pgm8(&p, &img).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5"));
        assert_eq!(read_pgm8(&p).unwrap(), img);
        assert!(read_pgm16(&p).is_err());
    }

    #[test]
    fn pgm16_is_big_endian() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pgm");
        let img = Raster::from_vec(2, 1, vec![0x0102u16, 0xfffe]).unwrap();
        write_pgm16(&p, &img).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[bytes.len() - 4..], &[0x01, 0x02, 0xff, 0xfe]);
        assert_eq!(read_pgm16(&p).unwrap(), img);
    }

    #[test]
    fn depth_fixed_point() {
        assert_eq!(depth_to_level(f64::NAN), 0);
        assert_eq!(depth_to_level(-1.0), 0);
        assert_eq!(depth_to_level(50.0), 12800);
        assert_eq!(depth_to_level(1e9), u16::MAX);
        assert_eq!(level_to_depth(12800), 50.0);
        assert!(level_to_depth(0).is_nan());
    }

    #[test]
    fn depth_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let img = Raster::from_vec(3, 2, vec![1.5, f64::NAN, 3.0, 4.0, 5.25, 6.0]).unwrap();
        write_depth_csv(&p, &img).unwrap();
        let back = read_depth_csv(&p).unwrap();
        assert_eq!(back.dims(), (3, 2));
        assert!(back.data()[1].is_nan());
        assert_eq!(back.data()[4], 5.25);
    }

    #[test]
    fn missing_file_is_io_error() {
        let e = read_pgm8("/nonexistent/x.pgm").unwrap_err();
        assert!(e.is_io());
    }
}
