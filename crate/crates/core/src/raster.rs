//! Pixel rasters, color conversion and the small set of spatial operations
//! (3x3 convolution, cropping, bilinear resizing) the measures are built on.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("failed to decode image: {0}")]
    Decode(String),
    #[error("rect {rect:?} is not contained in a {width}x{height} image")]
    OutOfBounds {
        rect: Rect,
        width: usize,
        height: usize,
    },
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("buffer length {len} does not match {width}x{height}x{channels}")]
    BufferLength {
        len: usize,
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("non-finite sample in plane")]
    NonFinite,
}

/// Axis-aligned pixel rectangle. `x0`/`y0` are inclusive offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Self { x0, y0, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    /// True when the rect is non-empty and lies inside a `width` x `height` frame.
    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w >= 1
            && self.h >= 1
            && self.x0.checked_add(self.w).is_some_and(|x1| x1 <= width)
            && self.y0.checked_add(self.h).is_some_and(|y1| y1 <= height)
    }
}

/// Row-major 8-bit sRGB raster, no alpha.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidDimensions { width, height });
        }
        if data.len() != 3 * width * height {
            return Err(RasterError::BufferLength {
                len: data.len(),
                width,
                height,
                channels: 3,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image filled with a single color.
    pub fn uniform(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, RasterError> {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(3 * width * height)
            .collect();
        Self::from_raw(width, height, data)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self, RasterError> {
        let mut data = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::from_raw(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn crop(&self, r: Rect) -> Result<Self, RasterError> {
        if !r.fits(self.width, self.height) {
            return Err(RasterError::OutOfBounds {
                rect: r,
                width: self.width,
                height: self.height,
            });
        }
        let mut data = Vec::with_capacity(3 * r.area());
        for y in r.y0..r.y0 + r.h {
            let start = 3 * (y * self.width + r.x0);
            data.extend_from_slice(&self.data[start..start + 3 * r.w]);
        }
        Ok(Self {
            width: r.w,
            height: r.h,
            data,
        })
    }

    /// Encodes the image as PNG.
    pub fn encode_png(&self) -> Result<Vec<u8>, RasterError> {
        let mut out = std::io::Cursor::new(Vec::new());
        image::write_buffer_with_format(
            &mut out,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|e| RasterError::Decode(e.to_string()))?;
        Ok(out.into_inner())
    }
}

/// Row-major plane of real samples (gray intensity or L*).
#[derive(Debug, Clone, PartialEq)]
pub struct GrayPlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayPlane {
    pub fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(RasterError::BufferLength {
                len: data.len(),
                width,
                height,
                channels: 1,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(RasterError::NonFinite);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, RasterError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_raw(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn crop(&self, r: Rect) -> Result<Self, RasterError> {
        if !r.fits(self.width, self.height) {
            return Err(RasterError::OutOfBounds {
                rect: r,
                width: self.width,
                height: self.height,
            });
        }
        let mut data = Vec::with_capacity(r.area());
        for y in r.y0..r.y0 + r.h {
            let start = y * self.width + r.x0;
            data.extend_from_slice(&self.data[start..start + r.w]);
        }
        Ok(Self {
            width: r.w,
            height: r.h,
            data,
        })
    }
}

/// 3x3 convolution kernel, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel3x3(pub [[f64; 3]; 3]);

impl Kernel3x3 {
    pub const IDENTITY: Self = Self([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]);
    /// 4-neighbour Laplacian.
    pub const LAPLACIAN: Self = Self([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]]);
    pub const SOBEL_X: Self = Self([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]);
    pub const SOBEL_Y: Self = Self([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]]);

    pub fn sum(&self) -> f64 {
        self.0.iter().flatten().sum()
    }
}

/// Decodes a PNG or JPEG stream into an opaque RGB raster.
///
/// Alpha is composited over black, gray sources are replicated to all three
/// channels. 16-bit sources are reduced to 8 bits by the decoder.
pub fn decode_image(bytes: &[u8]) -> Result<RgbImage, RasterError> {
    let format = image::guess_format(bytes).map_err(|e| RasterError::Decode(e.to_string()))?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Jpeg) {
        return Err(RasterError::UnsupportedFormat(format!("{format:?}")));
    }
    let decoded = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| RasterError::Decode(e.to_string()))?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let data = if decoded.color().has_alpha() {
        let rgba = decoded.to_rgba8();
        let mut out = Vec::with_capacity(3 * width * height);
        for p in rgba.pixels() {
            let a = u32::from(p[3]);
            for c in &p.0[..3] {
                // round(c * a / 255)
                out.push(((u32::from(*c) * a + 127) / 255) as u8);
            }
        }
        out
    } else {
        decoded.to_rgb8().into_raw()
    };
    RgbImage::from_raw(width, height, data)
}

/// BT.601 luma, unrounded.
pub fn to_grayscale(img: &RgbImage) -> GrayPlane {
    let data = img
        .pixels()
        .map(|[r, g, b]| 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b))
        .collect();
    GrayPlane {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Inverse sRGB transfer function for an 8-bit code value.
fn srgb_to_linear(v: u8) -> f64 {
    let c = f64::from(v) / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

// Y row of the linear-sRGB -> XYZ (D65) matrix.
const Y_FROM_LINEAR: [f64; 3] = [0.212_672_9, 0.715_152_2, 0.072_175_0];

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// CIE L* (0..=100) per pixel, D65 white.
pub fn rgb_to_lab_l(img: &RgbImage) -> GrayPlane {
    let lut: Vec<f64> = (0..=255u8).map(srgb_to_linear).collect();
    // White's Y is the matrix row sum; normalising by it keeps L*(white) at exactly 100.
    let y_white: f64 = Y_FROM_LINEAR.iter().sum();
    let data = img
        .pixels()
        .map(|[r, g, b]| {
            let y = Y_FROM_LINEAR[0] * lut[r as usize]
                + Y_FROM_LINEAR[1] * lut[g as usize]
                + Y_FROM_LINEAR[2] * lut[b as usize];
            (116.0 * lab_f(y / y_white) - 16.0).clamp(0.0, 100.0)
        })
        .collect();
    GrayPlane {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Reflect-101 index: mirrors across the edge sample without repeating it.
#[inline]
fn reflect101(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * n - 2 - i
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

/// Same-size 3x3 convolution (correlation form) with reflect-101 borders.
///
/// Accumulates `center * sum(k) + sum(k * (p - center))`, which is the same
/// quantity but leaves flat neighbourhoods at exactly `center * sum(k)`.
pub fn convolve3x3(plane: &GrayPlane, k: &Kernel3x3) -> GrayPlane {
    let (w, h) = (plane.width, plane.height);
    let k_sum = k.sum();
    let cols: Vec<[usize; 3]> = (0..w as isize)
        .map(|x| [reflect101(x - 1, w), x as usize, reflect101(x + 1, w)])
        .collect();
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        let rows = [reflect101(y - 1, h), y as usize, reflect101(y + 1, h)];
        for c in &cols {
            let center = plane.data[rows[1] * w + c[1]];
            let mut acc = 0.0;
            for (j, &ry) in rows.iter().enumerate() {
                let row = &plane.data[ry * w..(ry + 1) * w];
                for (i, &cx) in c.iter().enumerate() {
                    acc += k.0[j][i] * (row[cx] - center);
                }
            }
            data.push(center * k_sum + acc);
        }
    }
    GrayPlane {
        width: w,
        height: h,
        data,
    }
}

/// Bilinear resize with half-pixel-centred sampling; output rounded and clamped.
pub fn bilinear_resize(img: &RgbImage, w: usize, h: usize) -> Result<RgbImage, RasterError> {
    if w == 0 || h == 0 {
        return Err(RasterError::InvalidDimensions {
            width: w,
            height: h,
        });
    }
    if w == img.width && h == img.height {
        return Ok(img.clone());
    }
    let taps = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let scale = src_len as f64 / dst_len as f64;
        let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, s - i0 as f64)
    };
    let xs: Vec<_> = (0..w).map(|x| taps(x, img.width, w)).collect();
    let mut data = Vec::with_capacity(3 * w * h);
    for y in 0..h {
        let (y0, y1, fy) = taps(y, img.height, h);
        for &(x0, x1, fx) in &xs {
            let p00 = img.pixel(x0, y0);
            let p10 = img.pixel(x1, y0);
            let p01 = img.pixel(x0, y1);
            let p11 = img.pixel(x1, y1);
            for c in 0..3 {
                let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
                let bottom = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RgbImage::from_raw(w, h, data)
}
