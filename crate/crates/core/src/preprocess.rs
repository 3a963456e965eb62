//! Dataset preparation: frontal-pose filtering from eye/nose landmarks, square
//! face extraction, and reproducible per-class train/val/test sampling.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class::ClassLabel;
use crate::raster::{bilinear_resize, RasterError, Rect, RgbImage};

pub const DEFAULT_FRONTAL_LO: f64 = 0.9;
pub const DEFAULT_FRONTAL_HI: f64 = 1.1;
pub const DEFAULT_FACE_SIZE: usize = 256;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("degenerate landmarks for {0}: right eye coincides with nose")]
    DegenerateLandmarks(String),
    #[error("face box {0:?} does not intersect the image")]
    EmptyIntersection(FaceBox),
    #[error(
        "class {class} has {available} candidates, {required} required (short by {shortfall})"
    )]
    InsufficientImages {
        class: ClassLabel,
        available: usize,
        required: usize,
        shortfall: usize,
    },
    #[error("landmark file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Face bounding box in source pixels; may extend past the image edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceBox {
    pub x0: i64,
    pub y0: i64,
    pub w: i64,
    pub h: i64,
}

/// One line of the landmark file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkRecord {
    pub image_path: String,
    /// Defaults to the first component of `image_path`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassLabel>,
    pub left_eye: [f64; 2],
    pub right_eye: [f64; 2],
    pub nose: [f64; 2],
    pub face_box: FaceBox,
}

impl LandmarkRecord {
    pub fn class(&self) -> Option<ClassLabel> {
        self.class.or_else(|| {
            Path::new(&self.image_path)
                .components()
                .next()
                .and_then(|c| c.as_os_str().to_str())
                .and_then(|s| s.parse().ok())
        })
    }
}

/// Parses the line-delimited landmark file. Blank lines and `#` comments are skipped.
pub fn parse_landmarks(text: &str) -> Result<Vec<LandmarkRecord>, PreprocessError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rec: LandmarkRecord =
            serde_json::from_str(line).map_err(|e| PreprocessError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        let finite = rec
            .left_eye
            .iter()
            .chain(&rec.right_eye)
            .chain(&rec.nose)
            .all(|v| v.is_finite());
        if !finite {
            return Err(PreprocessError::Parse {
                line: i + 1,
                message: "non-finite landmark".into(),
            });
        }
        if rec.face_box.w < 1 || rec.face_box.h < 1 {
            return Err(PreprocessError::Parse {
                line: i + 1,
                message: "empty face box".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Left-eye-to-nose distance over right-eye-to-nose distance.
pub fn frontal_ratio(rec: &LandmarkRecord) -> Result<f64, PreprocessError> {
    let denom = dist(rec.right_eye, rec.nose);
    if denom == 0.0 {
        return Err(PreprocessError::DegenerateLandmarks(rec.image_path.clone()));
    }
    Ok(dist(rec.left_eye, rec.nose) / denom)
}

/// Inclusive at both bounds.
pub fn is_frontal(ratio: f64, lo: f64, hi: f64) -> bool {
    lo <= ratio && ratio <= hi
}

/// Square crop about the face box centre, resized to `size` x `size`.
///
/// The square (side = max(w, h)) is shifted back inside the image when it
/// overhangs an edge and only truncated when it is larger than the image.
pub fn extract_face(
    img: &RgbImage,
    face: FaceBox,
    size: usize,
) -> Result<RgbImage, PreprocessError> {
    let (iw, ih) = (img.width() as i64, img.height() as i64);
    let overlaps = face.w >= 1
        && face.h >= 1
        && face.x0 < iw
        && face.y0 < ih
        && face.x0 + face.w > 0
        && face.y0 + face.h > 0;
    if !overlaps {
        return Err(PreprocessError::EmptyIntersection(face));
    }
    let side = face.w.max(face.h);
    let place = |start: i64, len: i64, limit: i64| -> (usize, usize) {
        let start = start + (len - side).div_euclid(2);
        let len = side.min(limit);
        (start.clamp(0, limit - len) as usize, len as usize)
    };
    let (x0, w) = place(face.x0, face.w, iw);
    let (y0, h) = place(face.y0, face.h, ih);
    let square = img.crop(Rect::new(x0, y0, w, h))?;
    Ok(bilinear_resize(&square, size, size)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            train: 10_000,
            val: 2_000,
            test: 10_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub counts: SplitCounts,
    pub classes: BTreeMap<ClassLabel, ClassSplit>,
}

/// SplitMix64 stream. Fixed algorithm so manifests reproduce on every platform.
#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    /// Stream for one class: the seed XOR-ed with an FNV-1a hash of the class name.
    pub fn for_class(seed: u64, class: ClassLabel) -> Self {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in class.name().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        Self(seed ^ h)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Unbiased integer in `0..n` (multiply-shift with rejection).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }
}

fn shuffle<T>(items: &mut [T], rng: &mut SplitMix64) {
    for i in (1..items.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// Sorts, shuffles and partitions each class's candidates into train/val/test.
pub fn sample_split(
    candidates: &BTreeMap<ClassLabel, Vec<String>>,
    counts: SplitCounts,
    seed: u64,
) -> Result<SplitManifest, PreprocessError> {
    let mut classes = BTreeMap::new();
    for class in ClassLabel::ALL {
        let mut paths = candidates.get(&class).cloned().unwrap_or_default();
        paths.sort();
        paths.dedup();
        let required = counts.total();
        if paths.len() < required {
            return Err(PreprocessError::InsufficientImages {
                class,
                available: paths.len(),
                required,
                shortfall: required - paths.len(),
            });
        }
        shuffle(&mut paths, &mut SplitMix64::for_class(seed, class));
        let mut it = paths.into_iter();
        let split = ClassSplit {
            train: it.by_ref().take(counts.train).collect(),
            val: it.by_ref().take(counts.val).collect(),
            test: it.by_ref().take(counts.test).collect(),
        };
        classes.insert(class, split);
    }
    Ok(SplitManifest {
        seed,
        counts,
        classes,
    })
}
