use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{synth_corpus, Family, Image};
use crate::error::{Error, Result};
use crate::nn::seeded_rng;

pub const TRAIN_FRACTION: f64 = 0.7;
pub const VAL_FRACTION: f64 = 0.15;

/// One corpus image.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    /// File path, or `synthetic/<family>/<index>` for generated images.
    pub path: String,
    pub family: Option<Family>,
    pub image: Image,
}

/// Where a corpus comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    Directory(PathBuf),
    Synthetic { n: usize },
}

/// Indices into [`Corpus::samples`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Seeded 70/15/15 assignment; every index lands in exactly one part.
    pub fn assign(n: usize, seed: u64) -> Split {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut seeded_rng(seed, 0x5911_7));
        let n_train = (n as f64 * TRAIN_FRACTION).round() as usize;
        let n_val = ((n as f64 * VAL_FRACTION).round() as usize).min(n - n_train);
        let mut train = idx[..n_train].to_vec();
        let mut val = idx[n_train..n_train + n_val].to_vec();
        let mut test = idx[n_train + n_val..].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        Split { train, val, test }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub samples: Vec<SampleRecord>,
    pub source: CorpusSource,
    pub image_size: (usize, usize),
    pub split: Split,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.samples.iter().position(|s| s.id == id)
    }

    pub fn images(&self, indices: &[usize]) -> Vec<&Image> {
        indices.iter().map(|&i| &self.samples[i].image).collect()
    }
}

/// Loads a corpus from a directory, or generates one when `source` is
/// synthetic.
pub fn load_corpus(source: &CorpusSource, size: (usize, usize), seed: u64) -> Result<Corpus> {
    match source {
        CorpusSource::Directory(dir) => load_directory(dir, size, seed),
        CorpusSource::Synthetic { n } => synth_corpus(*n, size, seed),
    }
}

fn is_supported(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm" | "pgm" | "pnm"))
        .unwrap_or(false)
}

/// Decodes every PNG/PPM file in `dir` (sorted by name), converts to RGB in
/// `[0, 1]` and bilinearly resizes to `size` (height, width).
pub fn load_directory(dir: &Path, size: (usize, usize), seed: u64) -> Result<Corpus> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_supported(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!(
            "{}: no PNG or PPM images found",
            dir.display()
        )));
    }
    let samples = paths
        .iter()
        .map(|p| load_image(p, size).map(|image| (p, image)))
        .map(|r| {
            r.map(|(p, image)| SampleRecord {
                id: p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                path: p.display().to_string(),
                family: None,
                image,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let split = Split::assign(samples.len(), seed);
    Ok(Corpus {
        samples,
        source: CorpusSource::Directory(dir.to_path_buf()),
        image_size: size,
        split,
    })
}

pub(crate) fn load_image(path: &Path, (h, w): (usize, usize)) -> Result<Image> {
    let decoded = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    let mut rgb = decoded.to_rgb32f();
    if (rgb.height() as usize, rgb.width() as usize) != (h, w) {
        rgb = image::imageops::resize(&rgb, w as u32, h as u32, FilterType::Triangle);
    }
    let hw = h * w;
    let mut data = vec![0.0f32; 3 * hw];
    for (i, px) in rgb.pixels().enumerate() {
        for c in 0..3 {
            data[c * hw + i] = px.0[c].clamp(0.0, 1.0);
        }
    }
    Image::new(3, h, w, data)
}

/// Writes an image as 8-bit RGB PNG.
pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    let hw = img.height * img.width;
    let mut buf = image::RgbImage::new(img.width as u32, img.height as u32);
    for (i, px) in buf.pixels_mut().enumerate() {
        for c in 0..3 {
            let plane = if img.channels == 3 { c } else { 0 };
            px.0[c] = (img.data[plane * hw + i].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_for_200() {
        let s = Split::assign(200, 3);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (140, 30, 30));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_seeded() {
        assert_eq!(Split::assign(50, 9), Split::assign(50, 9));
        assert_ne!(Split::assign(50, 9), Split::assign(50, 10));
    }
}
