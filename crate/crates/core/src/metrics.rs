//! The eight per-image measures, on the whole frame and on a 3x3 region grid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{self, convolve3x3, GrayPlane, Kernel3x3, Rect, RgbImage};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{width}x{height} is smaller than the 3x3 minimum")]
    TooSmall { width: usize, height: usize },
}

/// 0 is the whole image, 1..=9 the grid cells in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionId(u8);

impl RegionId {
    pub const WHOLE: RegionId = RegionId(0);

    pub fn new(id: u8) -> Option<Self> {
        (id <= 9).then_some(Self(id))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = RegionId> {
        (0..=9).map(RegionId)
    }

    pub fn grid() -> impl Iterator<Item = RegionId> {
        (1..=9).map(RegionId)
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One of the eight measures, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Brightness,
    Sharpness,
    Luminosity,
    RedMean,
    GreenMean,
    BlueMean,
    Contrast,
    Detail,
}

impl Property {
    pub const ALL: [Property; 8] = [
        Property::Brightness,
        Property::Sharpness,
        Property::Luminosity,
        Property::RedMean,
        Property::GreenMean,
        Property::BlueMean,
        Property::Contrast,
        Property::Detail,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::Brightness => "brightness",
            Property::Sharpness => "sharpness",
            Property::Luminosity => "luminosity",
            Property::RedMean => "red_mean",
            Property::GreenMean => "green_mean",
            Property::BlueMean => "blue_mean",
            Property::Contrast => "contrast",
            Property::Detail => "detail",
        }
    }

    /// Measures that are plain pixel means and so aggregate exactly over a tiling.
    pub fn is_linear(self) -> bool {
        matches!(
            self,
            Property::Brightness
                | Property::Luminosity
                | Property::RedMean
                | Property::GreenMean
                | Property::BlueMean
        )
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Property::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown property {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyVector {
    pub brightness: f64,
    pub sharpness: f64,
    pub luminosity: f64,
    pub red_mean: f64,
    pub green_mean: f64,
    pub blue_mean: f64,
    pub contrast: f64,
    pub detail: f64,
}

impl PropertyVector {
    pub fn get(&self, p: Property) -> f64 {
        match p {
            Property::Brightness => self.brightness,
            Property::Sharpness => self.sharpness,
            Property::Luminosity => self.luminosity,
            Property::RedMean => self.red_mean,
            Property::GreenMean => self.green_mean,
            Property::BlueMean => self.blue_mean,
            Property::Contrast => self.contrast,
            Property::Detail => self.detail,
        }
    }

    pub fn from_values(v: [f64; 8]) -> Self {
        Self {
            brightness: v[0],
            sharpness: v[1],
            luminosity: v[2],
            red_mean: v[3],
            green_mean: v[4],
            blue_mean: v[5],
            contrast: v[6],
            detail: v[7],
        }
    }

    pub fn values(&self) -> [f64; 8] {
        Property::ALL.map(|p| self.get(p))
    }
}

fn check_min_size(width: usize, height: usize) -> Result<(), MetricsError> {
    if width < 3 || height < 3 {
        return Err(MetricsError::TooSmall { width, height });
    }
    Ok(())
}

/// 3x3 grid over a `width` x `height` frame; the last row/column absorbs the remainder.
pub fn region_rects(width: usize, height: usize) -> Result<[Rect; 9], MetricsError> {
    check_min_size(width, height)?;
    let split = |n: usize| {
        let s = n / 3;
        [(0, s), (s, s), (2 * s, n - 2 * s)]
    };
    let (cols, rows) = (split(width), split(height));
    Ok(std::array::from_fn(|i| {
        let (x0, w) = cols[i % 3];
        let (y0, h) = rows[i / 3];
        Rect::new(x0, y0, w, h)
    }))
}

/// Mean taken relative to the first sample; constant input returns that sample exactly.
fn mean(v: &[f64]) -> f64 {
    let Some(&origin) = v.first() else { return 0.0 };
    origin + v.iter().map(|x| x - origin).sum::<f64>() / v.len() as f64
}

/// Two-pass population variance, shifted by the first sample so that
/// constant input gives exactly zero.
fn variance(v: &[f64]) -> f64 {
    let Some(&origin) = v.first() else { return 0.0 };
    let m = v.iter().map(|x| x - origin).sum::<f64>() / v.len() as f64;
    v.iter()
        .map(|x| (x - origin - m) * (x - origin - m))
        .sum::<f64>()
        / v.len() as f64
}

pub fn brightness(gray: &GrayPlane) -> f64 {
    mean(gray.data())
}

/// Variance of the 4-neighbour Laplacian response.
pub fn sharpness(gray: &GrayPlane) -> Result<f64, MetricsError> {
    check_min_size(gray.width(), gray.height())?;
    Ok(laplacian_variance(gray))
}

fn laplacian_variance(gray: &GrayPlane) -> f64 {
    variance(convolve3x3(gray, &Kernel3x3::LAPLACIAN).data())
}

pub fn luminosity(l_plane: &GrayPlane) -> f64 {
    mean(l_plane.data())
}

pub fn channel_means(img: &RgbImage) -> (f64, f64, f64) {
    let mut sums = [0u64; 3];
    for p in img.pixels() {
        for c in 0..3 {
            sums[c] += u64::from(p[c]);
        }
    }
    let n = (img.width() * img.height()) as f64;
    (sums[0] as f64 / n, sums[1] as f64 / n, sums[2] as f64 / n)
}

/// Population standard deviation of gray intensity.
pub fn contrast(gray: &GrayPlane) -> f64 {
    variance(gray.data()).sqrt()
}

/// Mean Sobel gradient magnitude.
pub fn detail(gray: &GrayPlane) -> Result<f64, MetricsError> {
    check_min_size(gray.width(), gray.height())?;
    Ok(mean_sobel_magnitude(gray))
}

fn mean_sobel_magnitude(gray: &GrayPlane) -> f64 {
    let gx = convolve3x3(gray, &Kernel3x3::SOBEL_X);
    let gy = convolve3x3(gray, &Kernel3x3::SOBEL_Y);
    let mags: Vec<f64> = gx
        .data()
        .iter()
        .zip(gy.data())
        .map(|(a, b)| a.hypot(*b))
        .collect();
    mean(&mags)
}

// Region crops of small images may be narrower than 3 pixels; reflect-101
// still defines the kernels there, so no size check at this level.
fn vector_from_planes(img: &RgbImage, gray: &GrayPlane, l_plane: &GrayPlane) -> PropertyVector {
    let (red_mean, green_mean, blue_mean) = channel_means(img);
    PropertyVector {
        brightness: brightness(gray),
        sharpness: laplacian_variance(gray),
        luminosity: luminosity(l_plane),
        red_mean,
        green_mean,
        blue_mean,
        contrast: contrast(gray),
        detail: mean_sobel_magnitude(gray),
    }
}

/// All eight measures over the whole image.
pub fn property_vector(img: &RgbImage) -> Result<PropertyVector, MetricsError> {
    check_min_size(img.width(), img.height())?;
    Ok(vector_from_planes(
        img,
        &raster::to_grayscale(img),
        &raster::rgb_to_lab_l(img),
    ))
}

/// Measures for grid regions 1..=9, each computed on its own crop.
pub fn region_property_vectors(img: &RgbImage) -> Result<[PropertyVector; 9], MetricsError> {
    Ok(image_property_vectors(img)?.1)
}

/// Whole-image vector plus the nine region vectors, sharing the gray and L* planes.
pub fn image_property_vectors(
    img: &RgbImage,
) -> Result<(PropertyVector, [PropertyVector; 9]), MetricsError> {
    let rects = region_rects(img.width(), img.height())?;
    let gray = raster::to_grayscale(img);
    let l_plane = raster::rgb_to_lab_l(img);
    let whole = vector_from_planes(img, &gray, &l_plane);
    let mut regions = [whole; 9];
    for (slot, r) in regions.iter_mut().zip(rects) {
        // Rects come from region_rects, so the crops cannot fail.
        let crop_err = |_| MetricsError::TooSmall {
            width: r.w,
            height: r.h,
        };
        *slot = vector_from_planes(
            &img.crop(r).map_err(crop_err)?,
            &gray.crop(r).map_err(crop_err)?,
            &l_plane.crop(r).map_err(crop_err)?,
        );
    }
    Ok((whole, regions))
}
