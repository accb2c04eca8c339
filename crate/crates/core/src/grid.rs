//! Raster and series carriers plus their file formats.
//!
//! `Image2D` is row-major: `x(n, m)` lives at `n * cols + m`, with `n`
//! indexing rows and `m` indexing columns everywhere in the crate.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::{Add, Sub};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{Error, Result};

/// Image axis. `Row` is the direction of increasing row index `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Axis {
    #[default]
    Row,
    Col,
}

impl Axis {
    pub fn other(self) -> Axis {
        match self {
            Axis::Row => Axis::Col,
            Axis::Col => Axis::Row,
        }
    }
}

/// Dense real raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Image2D {
    /// Builds an image from row-major values. Rejects empty shapes and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "image shape {rows}x{cols} must be at least 1x1"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at pixel ({}, {})",
                i / cols,
                i % cols
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "image shape must be at least 1x1");
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    /// Evaluates `f(n, m)` on every pixel. Panics if `f` yields a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "image shape must be at least 1x1");
        let mut values = Vec::with_capacity(rows * cols);
        for n in 0..rows {
            for m in 0..cols {
                let v = f(n, m);
                assert!(v.is_finite(), "non-finite value at pixel ({n}, {m})");
                values.push(v);
            }
        }
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.values[n * self.cols + m]
    }

    #[inline]
    pub fn set(&mut self, n: usize, m: usize, v: f64) {
        assert!(v.is_finite(), "non-finite value at pixel ({n}, {m})");
        self.values[n * self.cols + m] = v;
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.cols..(n + 1) * self.cols]
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        (0..self.rows).map(|n| self.get(n, m)).collect()
    }

    /// Extent along an axis.
    pub fn extent(&self, axis: Axis) -> usize {
        match axis {
            Axis::Row => self.rows,
            Axis::Col => self.cols,
        }
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Image2D {
        Image2D::new(self.rows, self.cols, self.values.iter().map(|&v| f(v)).collect())
            .expect("mapped image contains non-finite values")
    }

    pub fn transpose(&self) -> Image2D {
        Image2D::from_fn(self.cols, self.rows, |n, m| self.get(m, n))
    }

    pub fn scale(&self, factor: f64) -> Image2D {
        self.map(|v| v * factor)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Largest absolute pixel difference to an image of the same shape.
    pub fn max_abs_diff(&self, other: &Image2D) -> f64 {
        assert_eq!(self.dims(), other.dims(), "image shapes differ");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// Pearson correlation over all pixels. Returns 0 when either image is constant.
    pub fn correlation(&self, other: &Image2D) -> f64 {
        assert_eq!(self.dims(), other.dims(), "image shapes differ");
        let (ma, mb) = (self.mean(), other.mean());
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (a, b) in self.values.iter().zip(&other.values) {
            let (da, db) = (a - ma, b - mb);
            sab += da * db;
            saa += da * da;
            sbb += db * db;
        }
        if saa == 0.0 || sbb == 0.0 {
            0.0
        } else {
            sab / (saa * sbb).sqrt()
        }
    }
}

impl Add for &Image2D {
    type Output = Image2D;

    fn add(self, rhs: &Image2D) -> Image2D {
        assert_eq!(self.dims(), rhs.dims(), "image shapes differ");
        let values = self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect();
        Image2D::new(self.rows, self.cols, values).expect("sum overflowed")
    }
}

impl Sub for &Image2D {
    type Output = Image2D;

    fn sub(self, rhs: &Image2D) -> Image2D {
        assert_eq!(self.dims(), rhs.dims(), "image shapes differ");
        let values = self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect();
        Image2D::new(self.rows, self.cols, values).expect("difference overflowed")
    }
}

/// Real series of length at least 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Series1D {
    values: Vec<f64>,
}

impl Series1D {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "series length {} must be at least 2",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("series contains non-finite values".into()));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The series as an `N x 1` image, so row index `n` is the series index.
    pub fn to_column_image(&self) -> Image2D {
        Image2D::new(self.values.len(), 1, self.values.clone()).expect("series values are finite")
    }
}

/// On-disk raster formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png8,
    Png16,
    Csv,
}

impl ImageFormat {
    /// Guesses the format from a file extension; png defaults to 16 bit.
    pub fn from_path(path: &Path) -> Option<ImageFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(ImageFormat::Csv),
            "png" => Some(ImageFormat::Png16),
            _ => None,
        }
    }
}

/// Loads a grayscale image. PNG codes are divided by the maximum code of
/// the declared bit depth; csv values are taken verbatim.
pub fn load_image(path: &Path, format: ImageFormat) -> Result<Image2D> {
    match format {
        ImageFormat::Csv => load_csv(path),
        ImageFormat::Png8 | ImageFormat::Png16 => load_png(path, format),
    }
}

fn load_png(path: &Path, format: ImageFormat) -> Result<Image2D> {
    let decoded = image::open(path).map_err(|source| Error::Image {
        path: path.to_owned(),
        source,
    })?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let values: Vec<f64> = match (format, decoded) {
        (ImageFormat::Png8, DynamicImage::ImageLuma8(buf)) => {
            buf.into_raw().into_iter().map(|c| c as f64 / 255.0).collect()
        }
        (ImageFormat::Png16, DynamicImage::ImageLuma16(buf)) => {
            buf.into_raw().into_iter().map(|c| c as f64 / 65535.0).collect()
        }
        (_, other) => {
            return Err(Error::InvalidInput(format!(
                "{}: unsupported pixel layout {:?} for {:?}",
                path.display(),
                other.color(),
                format
            )))
        }
    };
    Image2D::new(height, width, values)
}

fn load_csv(path: &Path) -> Result<Image2D> {
    let csv_err = |source| Error::Csv {
        path: path.to_owned(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Parse {
                    what: "csv matrix",
                    line: line + 1,
                    reason: format!("expected {c} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                what: "csv matrix",
                line: line + 1,
                reason: format!("not a number: {field:?}"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::InvalidInput(format!("{}: empty csv", path.display())))?;
    Image2D::new(rows, cols, values)
}

/// Writes an image. csv is lossless; png16 applies `(v - min) / (max - min)`
/// and quantizes to the full 16-bit range, with a constant image mapping to 0.
pub fn save_image(img: &Image2D, path: &Path, format: ImageFormat) -> Result<()> {
    match format {
        ImageFormat::Csv => save_csv(img, path),
        ImageFormat::Png16 => {
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(
                img.cols() as u32,
                img.rows() as u32,
                png16_codes(img),
            )
            .expect("buffer length matches image shape");
            buf.save_with_format(path, image::ImageFormat::Png)
                .map_err(|source| Error::Image {
                    path: path.to_owned(),
                    source,
                })
        }
        ImageFormat::Png8 => Err(Error::InvalidInput(
            "png8 export is not supported, use png16 or csv".into(),
        )),
    }
}

/// Quantized png16 codes after the per-image affine rescale.
pub fn png16_codes(img: &Image2D) -> Vec<u16> {
    let (lo, hi) = img.min_max();
    let range = if hi > lo { hi - lo } else { 1.0 };
    img.values()
        .iter()
        .map(|&v| (((v - lo) / range) * 65535.0).round().clamp(0.0, 65535.0) as u16)
        .collect()
}

fn save_csv(img: &Image2D, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_owned(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    out.write_all(format_csv(img).as_bytes()).map_err(io_err)?;
    out.flush().map_err(io_err)
}

/// csv text of an image: ',' separated, '\n' terminated rows, shortest
/// round-trip float formatting.
pub fn format_csv(img: &Image2D) -> String {
    let mut s = String::with_capacity(img.len() * 20);
    for n in 0..img.rows() {
        for (m, v) in img.row(n).iter().enumerate() {
            if m > 0 {
                s.push(',');
            }
            s.push_str(&format!("{v:?}"));
        }
        s.push('\n');
    }
    s
}

/// Elementwise `ln(max(x, floor))`.
pub fn log_transform(img: &Image2D, floor: f64) -> Result<Image2D> {
    if !(floor > 0.0) || !floor.is_finite() {
        return Err(Error::InvalidInput(format!("log floor {floor} must be positive")));
    }
    Ok(img.map(|v| v.max(floor).ln()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn csv_parse_small() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "1,2\n3,4").unwrap();
        let img = load_image(&p, ImageFormat::Csv).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.get(0, 1), 2.0);
        assert_eq!(img.get(1, 0), 3.0);
    }

    #[test]
    fn csv_ragged_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(load_image(&p, ImageFormat::Csv).is_err());
    }

    #[test]
    fn missing_file_is_an_error() {
        let p = Path::new("/nonexistent/elssa/x.csv");
        assert!(load_image(p, ImageFormat::Csv).is_err());
        assert!(load_image(p, ImageFormat::Png16).is_err());
    }

    #[test]
    fn png16_full_code_is_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.png");
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(3, 2, vec![65535; 6]).unwrap();
        buf.save(&p).unwrap();
        let img = load_image(&p, ImageFormat::Png16).unwrap();
        assert_eq!(img.dims(), (2, 3));
        assert!(img.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn png8_checkerboard_maps_linearly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        let raw: Vec<u8> = (0..16).map(|i| if (i / 4 + i % 4) % 2 == 0 { 0 } else { 255 }).collect();
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(4, 4, raw).unwrap();
        buf.save(&p).unwrap();
        let img = load_image(&p, ImageFormat::Png8).unwrap();
        for n in 0..4 {
            for m in 0..4 {
                let expected = if (n + m) % 2 == 0 { 0.0 } else { 1.0 };
                assert_eq!(img.get(n, m), expected);
            }
        }
        // declared depth must match the file
        assert!(load_image(&p, ImageFormat::Png16).is_err());
    }

    #[test]
    fn rgb_png_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        let buf: ImageBuffer<image::Rgb<u8>, Vec<u8>> =
            ImageBuffer::from_raw(2, 2, vec![10; 12]).unwrap();
        buf.save(&p).unwrap();
        assert!(load_image(&p, ImageFormat::Png8).is_err());
    }

    #[test]
    fn png16_constant_maps_to_zero() {
        let img = Image2D::from_fn(3, 4, |_, _| 0.7);
        assert!(png16_codes(&img).iter().all(|&c| c == 0));
    }

    #[test]
    fn png16_ramp_codes() {
        let img = Image2D::from_fn(3, 3, |n, m| (3 * n + m) as f64);
        let codes = png16_codes(&img);
        // i * 65535 / 8 rounded by hand
        let expected = [0u16, 8192, 16384, 24576, 32768, 40959, 49151, 57343, 65535];
        for (c, e) in codes.iter().zip(expected) {
            assert!((*c as i32 - e as i32).abs() <= 1, "{c} vs {e}");
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ramp.png");
        save_image(&img, &p, ImageFormat::Png16).unwrap();
        let back = load_image(&p, ImageFormat::Png16).unwrap();
        for (b, v) in back.values().iter().zip(img.values()) {
            assert!((b - v / 8.0).abs() <= 1.0 / 65535.0);
        }
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let img = Image2D::zeros(2, 2);
        assert!(save_image(&img, Path::new("/nonexistent/dir/x.csv"), ImageFormat::Csv).is_err());
    }

    #[test]
    fn log_transform_examples() {
        let img = Image2D::from_fn(2, 2, |_, _| E * E);
        let out = log_transform(&img, 1e-6).unwrap();
        assert!(out.values().iter().all(|v| (v - 2.0).abs() < 1e-15));

        let zero = Image2D::zeros(1, 1);
        let out = log_transform(&zero, 1e-6).unwrap();
        assert!((out.get(0, 0) + 13.815510557964274).abs() < 1e-12);

        let ramp = Image2D::new(1, 3, vec![1.0, E, E * E]).unwrap();
        let out = log_transform(&ramp, 1e-6).unwrap();
        for (v, e) in out.values().iter().zip([0.0, 1.0, 2.0]) {
            assert!((v - e).abs() < 1e-15);
        }

        assert!(log_transform(&ramp, 0.0).is_err());
        assert!(log_transform(&ramp, -1.0).is_err());
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(Image2D::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Image2D::new(0, 2, vec![]).is_err());
        assert!(Series1D::new(vec![1.0]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn csv_round_trip_is_exact(
                rows in 1usize..6,
                cols in 1usize..6,
                seed in proptest::collection::vec(-1e12f64..1e12, 36),
            ) {
                let img = Image2D::from_fn(rows, cols, |n, m| seed[n * 6 + m] / 7.0);
                let dir = tempfile::tempdir().unwrap();
                let p = dir.path().join("r.csv");
                save_image(&img, &p, ImageFormat::Csv).unwrap();
                let back = load_image(&p, ImageFormat::Csv).unwrap();
                prop_assert_eq!(back, img);
            }

            #[test]
            fn log_transform_is_monotone(a in 1e-9f64..1e9, b in 1e-9f64..1e9) {
                let img = Image2D::new(1, 2, vec![a.min(b), a.max(b)]).unwrap();
                let out = log_transform(&img, 1e-12).unwrap();
                prop_assert!(out.get(0, 0) <= out.get(0, 1));
            }
        }
    }
}
