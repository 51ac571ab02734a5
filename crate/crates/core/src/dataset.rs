//! On-disk datasets: `root/rgb/<stem>.<ext>`, `root/depth/<stem>.tif` (32-bit
//! float meters, or `.png` 16-bit millimeters) and `root/priors/<stem>.csv`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{ImageBuffer, Luma, Rgb, RgbImage};
use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};

use crate::error::{CoreError, Result};
use crate::grid::Grid;
use crate::sample::DepthSample;
use crate::scalar::Scalar;
use crate::sparse::{read_prior_csv, write_prior_csv, SparsePrior};

pub const RGB_DIR: &str = "rgb";
pub const DEPTH_DIR: &str = "depth";
pub const PRIOR_DIR: &str = "priors";

const RGB_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "tif", "tiff"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DepthFormat {
    /// Single-channel 32-bit float TIFF in meters.
    #[default]
    TiffMeters,
    /// Single-channel 16-bit PNG in millimeters; zero marks a hole.
    PngMillimeters,
}

impl DepthFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DepthFormat::TiffMeters => "tif",
            DepthFormat::PngMillimeters => "png",
        }
    }
}

pub fn write_depth_tiff<T: Scalar>(path: &Path, depth: &Grid<T>) -> Result<()> {
    let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
    let data: Vec<f32> = depth
        .as_slice()
        .iter()
        .map(|v| v.to_f32().unwrap_or(f32::NAN))
        .collect();
    let mut enc = TiffEncoder::new(BufWriter::new(file)).map_err(|e| CoreError::image(path, e))?;
    enc.write_image::<colortype::Gray32Float>(depth.width() as u32, depth.height() as u32, &data)
        .map_err(|e| CoreError::image(path, e))
}

pub fn read_depth_tiff<T: Scalar>(path: &Path) -> Result<Grid<T>> {
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut dec = Decoder::new(BufReader::new(file)).map_err(|e| CoreError::image(path, e))?;
    let (w, h) = dec.dimensions().map_err(|e| CoreError::image(path, e))?;
    let data: Vec<T> = match dec.read_image().map_err(|e| CoreError::image(path, e))? {
        DecodingResult::F32(v) => v.into_iter().map(|x| T::lit(x as f64)).collect(),
        DecodingResult::F64(v) => v.into_iter().map(T::lit).collect(),
        DecodingResult::U16(v) => v.into_iter().map(|x| T::lit(x as f64)).collect(),
        DecodingResult::U8(v) => v.into_iter().map(|x| T::lit(x as f64)).collect(),
        _ => return Err(CoreError::image(path, "unsupported depth sample type")),
    };
    Grid::from_vec(w as usize, h as usize, data)
        .map_err(|_| CoreError::image(path, "depth raster must have one channel"))
}

pub fn write_depth_png_mm<T: Scalar>(path: &Path, depth: &Grid<T>) -> Result<()> {
    let data: Vec<u16> = depth
        .as_slice()
        .iter()
        .map(|d| {
            let mm = d.to_f64_lossy() * 1000.0;
            if mm.is_finite() && mm > 0.0 {
                mm.round().min(u16::MAX as f64) as u16
            } else {
                0
            }
        })
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, data).expect("sized");
    img.save(path).map_err(|e| CoreError::image(path, e))
}

pub fn read_depth_png_mm<T: Scalar>(path: &Path) -> Result<Grid<T>> {
    let img = image::open(path).map_err(|e| CoreError::image(path, e))?.into_luma16();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| T::lit(v as f64 / 1000.0)).collect();
    Grid::from_vec(w as usize, h as usize, data)
}

pub fn read_depth<T: Scalar>(path: &Path, format: DepthFormat) -> Result<Grid<T>> {
    match format {
        DepthFormat::TiffMeters => read_depth_tiff(path),
        DepthFormat::PngMillimeters => read_depth_png_mm(path),
    }
}

pub fn write_depth<T: Scalar>(path: &Path, depth: &Grid<T>, format: DepthFormat) -> Result<()> {
    match format {
        DepthFormat::TiffMeters => write_depth_tiff(path, depth),
        DepthFormat::PngMillimeters => write_depth_png_mm(path, depth),
    }
}

/// Pixels holding a finite, strictly positive depth.
pub fn validity_of<T: Scalar>(depth: &Grid<T>) -> Grid<bool> {
    depth.map(|d| d.is_finite() && *d > T::zero())
}

/// Loads an RGB image as channel-major values in `[0, 1]`, optionally resized.
pub fn read_rgb<T: Scalar>(path: &Path, size: Option<(usize, usize)>) -> Result<(usize, usize, Vec<T>)> {
    let mut img = image::open(path).map_err(|e| CoreError::image(path, e))?.into_rgb8();
    if let Some((w, h)) = size {
        if img.dimensions() != (w as u32, h as u32) {
            img = image::imageops::resize(&img, w as u32, h as u32, FilterType::Triangle);
        }
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    let n = w * h;
    let mut out = vec![T::zero(); 3 * n];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            out[c * n + i] = T::lit(px.0[c] as f64 / 255.0);
        }
    }
    Ok((w, h, out))
}

pub fn rgb_to_image<T: Scalar>(width: usize, height: usize, chw: &[T]) -> RgbImage {
    let n = width * height;
    let q = |v: T| (v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8;
    ImageBuffer::from_fn(width as u32, height as u32, |x, y| {
        let i = y as usize * width + x as usize;
        Rgb([q(chw[i]), q(chw[n + i]), q(chw[2 * n + i])])
    })
}

pub fn write_rgb<T: Scalar>(path: &Path, width: usize, height: usize, chw: &[T]) -> Result<()> {
    rgb_to_image(width, height, chw)
        .save(path)
        .map_err(|e| CoreError::image(path, e))
}

/// Nearest-neighbour resampling, which never blends valid and invalid depth.
pub fn resize_nearest<V: Clone>(grid: &Grid<V>, width: usize, height: usize) -> Grid<V> {
    if grid.width() == width && grid.height() == height {
        return grid.clone();
    }
    let (sw, sh) = (grid.width(), grid.height());
    Grid::from_fn(width, height, |x, y| {
        let sx = (((x as f64 + 0.5) * sw as f64 / width as f64) as usize).min(sw - 1);
        let sy = (((y as f64 + 0.5) * sh as f64 / height as f64) as usize).min(sh - 1);
        grid.get(sx, sy).clone()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoadOptions {
    /// Working resolution; `None` keeps the stored size.
    pub size: Option<(usize, usize)>,
    pub depth_format: DepthFormat,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            size: Some((320, 240)),
            depth_format: DepthFormat::TiffMeters,
        }
    }
}

/// A sample found on disk; pixel data is read by [`SampleDescriptor::load`].
#[derive(Clone, Debug, PartialEq)]
pub struct SampleDescriptor {
    pub id: String,
    pub rgb_path: PathBuf,
    pub depth_path: PathBuf,
    /// Prior in the stored depth raster's pixel coordinates.
    pub prior: SparsePrior<f64>,
    pub options: LoadOptions,
}

impl SampleDescriptor {
    pub fn load<T: Scalar>(&self) -> Result<DepthSample<T>> {
        let stored: Grid<T> = read_depth(&self.depth_path, self.options.depth_format)?;
        let (sw, sh) = (stored.width(), stored.height());
        let (w, h) = self.options.size.unwrap_or((sw, sh));
        let (_, _, image) = read_rgb(&self.rgb_path, Some((w, h)))?;
        let gt = resize_nearest(&stored, w, h);
        let validity = validity_of(&gt);
        let gt = gt.map(|d| if d.is_finite() && *d > T::zero() { *d } else { T::zero() });
        let scaled = self.prior.rescale_coords((sw, sh), (w, h));
        let prior = SparsePrior::new(
            self.id.clone(),
            scaled
                .points
                .iter()
                .map(|p| crate::sparse::PriorPoint {
                    x: T::lit(p.x),
                    y: T::lit(p.y),
                    depth: T::lit(p.depth),
                })
                .collect(),
        );
        DepthSample::new(self.id.clone(), image, gt, validity, prior)
    }
}

fn list_stems(dir: &Path, extensions: &[&str]) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CoreError::io(dir, e))? {
        let path = entry.map_err(|e| CoreError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        match (path.file_stem().and_then(|s| s.to_str()), ext) {
            (Some(stem), Some(ext)) if extensions.contains(&ext.as_str()) => out.push((stem.to_string(), path.clone())),
            _ => {}
        }
    }
    out.sort();
    out.dedup_by(|a, b| a.0 == b.0);
    Ok(out)
}

/// Image stems of `dir` in sorted order with their paths.
pub fn list_images(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    list_stems(dir, &RGB_EXTENSIONS)
}

/// Stems of `root/rgb` in sorted order with their image paths.
pub fn list_rgb(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    list_images(&root.join(RGB_DIR))
}

/// Scans a dataset root. Stems without depth are skipped with a warning; a
/// missing prior file yields an empty prior. Prior files are parsed eagerly so
/// malformed lines surface here.
pub fn load_dataset(root: &Path, options: LoadOptions) -> Result<Vec<SampleDescriptor>> {
    let mut out = Vec::new();
    for (stem, rgb_path) in list_rgb(root)? {
        let depth_path = root
            .join(DEPTH_DIR)
            .join(format!("{stem}.{}", options.depth_format.extension()));
        if !depth_path.is_file() {
            log::warn!("skipping {stem}: no depth at {}", depth_path.display());
            continue;
        }
        let prior_path = root.join(PRIOR_DIR).join(format!("{stem}.csv"));
        let prior = if prior_path.is_file() {
            read_prior_csv(&prior_path, &stem)?
        } else {
            SparsePrior::empty(stem.clone())
        };
        out.push(SampleDescriptor {
            id: stem,
            rgb_path,
            depth_path,
            prior,
            options,
        });
    }
    if out.is_empty() {
        return Err(CoreError::EmptyDataset(root.to_path_buf()));
    }
    Ok(out)
}

pub fn load_all<T: Scalar>(descriptors: &[SampleDescriptor]) -> Result<Vec<DepthSample<T>>> {
    descriptors.iter().map(SampleDescriptor::load).collect()
}

pub fn create_layout(root: &Path) -> Result<()> {
    for dir in [RGB_DIR, DEPTH_DIR, PRIOR_DIR] {
        let d = root.join(dir);
        fs::create_dir_all(&d).map_err(|e| CoreError::io(&d, e))?;
    }
    Ok(())
}

/// Writes one sample; holes are stored as zero depth.
pub fn write_sample<T: Scalar>(root: &Path, sample: &DepthSample<T>, format: DepthFormat) -> Result<()> {
    let (w, h) = (sample.width(), sample.height());
    write_rgb(
        &root.join(RGB_DIR).join(format!("{}.png", sample.id)),
        w,
        h,
        &sample.image,
    )?;
    let depth = Grid::from_fn(w, h, |x, y| {
        if *sample.validity.get(x, y) {
            *sample.gt_depth.get(x, y)
        } else {
            T::zero()
        }
    });
    write_depth(
        &root
            .join(DEPTH_DIR)
            .join(format!("{}.{}", sample.id, format.extension())),
        &depth,
        format,
    )?;
    write_prior_csv(&root.join(PRIOR_DIR).join(format!("{}.csv", sample.id)), &sample.prior)
}

pub fn write_dataset<T: Scalar>(root: &Path, samples: &[DepthSample<T>], format: DepthFormat) -> Result<()> {
    create_layout(root)?;
    samples.iter().try_for_each(|s| write_sample(root, s, format))
}
