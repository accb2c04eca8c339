//! Outputs are collected in memory and only written once a command has
//! finished computing, so a failing run leaves no partial results behind.

use std::fs;
use std::path::{Path, PathBuf};

use elssa::grid::format_csv;
use elssa::{load_image, save_image, Error, Image2D, ImageFormat, Result};

use crate::args::FormatArg;

enum Payload {
    Text(String),
    Image(Image2D, ImageFormat),
}

#[derive(Default)]
pub struct Staged {
    files: Vec<(PathBuf, Payload)>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

impl Staged {
    pub fn text(&mut self, path: PathBuf, body: String) {
        self.files.push((path, Payload::Text(body)));
    }

    pub fn image(&mut self, path: PathBuf, img: Image2D, format: ImageFormat) {
        self.files.push((path, Payload::Image(img, format)));
    }

    /// Image named `stem` in `dir` with the extension of `format`.
    pub fn image_in(&mut self, dir: &Path, stem: &str, img: Image2D, format: FormatArg) {
        let (ext, fmt) = match format {
            FormatArg::Csv => ("csv", ImageFormat::Csv),
            FormatArg::Png16 => ("png", ImageFormat::Png16),
        };
        self.image(dir.join(format!("{stem}.{ext}")), img, fmt);
    }

    /// Writes every file next to its target first, then renames them all.
    pub fn commit(self) -> Result<()> {
        let mut written: Vec<(PathBuf, PathBuf)> = Vec::new();
        let result = (|| {
            for (path, payload) in &self.files {
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent).map_err(io_err(parent))?;
                }
                let tmp = partial_path(path);
                match payload {
                    Payload::Text(body) => fs::write(&tmp, body).map_err(io_err(&tmp))?,
                    Payload::Image(img, ImageFormat::Csv) => {
                        fs::write(&tmp, format_csv(img)).map_err(io_err(&tmp))?
                    }
                    Payload::Image(img, fmt) => save_image(img, &tmp, *fmt)?,
                }
                written.push((tmp, path.clone()));
            }
            Ok(())
        })();
        if let Err(e) = result {
            for (tmp, _) in &written {
                let _ = fs::remove_file(tmp);
            }
            return Err(e);
        }
        for (tmp, path) in &written {
            fs::rename(tmp, path).map_err(io_err(path))?;
        }
        Ok(())
    }
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Format of an input image from its extension.
pub fn input_format(path: &Path) -> Result<ImageFormat> {
    ImageFormat::from_path(path).ok_or_else(|| {
        Error::InvalidInput(format!(
            "cannot tell the format of {} (expected .csv or .png)",
            path.display()
        ))
    })
}

/// Loads a csv or png image; png inputs may be 16 or 8 bit.
pub fn load_input(path: &Path) -> Result<Image2D> {
    match input_format(path)? {
        ImageFormat::Csv => load_image(path, ImageFormat::Csv),
        _ => match load_image(path, ImageFormat::Png16) {
            Err(Error::InvalidInput(_)) => load_image(path, ImageFormat::Png8),
            other => other,
        },
    }
}
