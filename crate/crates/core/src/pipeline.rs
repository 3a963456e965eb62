//! Dataset scanning, parallel measurement, per-class aggregation and the
//! region x property ANOVA table.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class::ClassLabel;
use crate::metrics::{image_property_vectors, MetricsError, Property, PropertyVector, RegionId};
use crate::raster::{decode_image, RasterError, RgbImage};
use crate::stats::{one_way_anova, AnovaResult, StatsError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dataset root {} has no {class}/ directory", root.display())]
    MissingClassDir { root: PathBuf, class: ClassLabel },
    #[error("class {0} contains no .png/.jpg/.jpeg files")]
    EmptyClass(ClassLabel),
    #[error("no image of class {0} could be measured")]
    NoMeasuredImages(ClassLabel),
    #[error("region {region}, {property}: each class needs at least 2 samples")]
    InsufficientSamples {
        region: RegionId,
        property: Property,
    },
    #[error("failed to build worker pool: {0}")]
    WorkerPool(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Per-image problem that does not abort a run.
#[derive(Debug, Error)]
pub enum ImageError {
    #[error("read failed: {0}")]
    Read(#[from] std::io::Error),
    #[error(transparent)]
    Decode(#[from] RasterError),
    #[error(transparent)]
    Measure(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    /// Paths relative to `root`, `/`-separated, sorted.
    pub classes: BTreeMap<ClassLabel, Vec<String>>,
}

impl DatasetManifest {
    pub fn image_count(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

fn relative_slash_path(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Finds every PNG/JPEG under `root/{fake,real,synthetic}`.
pub fn scan_dataset(root: &Path) -> Result<DatasetManifest, PipelineError> {
    let mut classes = BTreeMap::new();
    for class in ClassLabel::ALL {
        let dir = root.join(class.name());
        if !dir.is_dir() {
            return Err(PipelineError::MissingClassDir {
                root: root.to_path_buf(),
                class,
            });
        }
        let mut paths = Vec::new();
        for entry in walkdir::WalkDir::new(&dir).follow_links(true) {
            let entry = entry.map_err(|e| PipelineError::Io {
                path: e.path().map_or_else(|| dir.clone(), Path::to_path_buf),
                source: e.into(),
            })?;
            if entry.file_type().is_file() && is_image(entry.path()) {
                paths.push(relative_slash_path(root, entry.path()));
            }
        }
        if paths.is_empty() {
            return Err(PipelineError::EmptyClass(class));
        }
        paths.sort();
        classes.insert(class, paths);
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        classes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyRecord {
    pub image_path: String,
    pub class: ClassLabel,
    pub region: RegionId,
    pub props: PropertyVector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageFailure {
    pub image_path: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    /// Ordered by (class, path, region).
    pub records: Vec<PropertyRecord>,
    pub failures: Vec<ImageFailure>,
    /// Successfully measured images per class.
    pub image_counts: BTreeMap<ClassLabel, usize>,
}

/// Whole-image vector followed by regions 1..=9.
pub fn measure_image(img: &RgbImage) -> Result<[PropertyVector; 10], MetricsError> {
    let (whole, regions) = image_property_vectors(img)?;
    let mut out = [whole; 10];
    out[1..].copy_from_slice(&regions);
    Ok(out)
}

fn measure_file(path: &Path) -> Result<[PropertyVector; 10], ImageError> {
    let bytes = std::fs::read(path)?;
    Ok(measure_image(&decode_image(&bytes)?)?)
}

/// Runs `f` on a pool with `workers` threads (0 = rayon default).
pub fn with_workers<T: Send>(
    workers: usize,
    f: impl FnOnce() -> T + Send,
) -> Result<T, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::WorkerPool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Measures every image of the manifest. Output order does not depend on scheduling.
pub fn analyze_dataset(
    manifest: &DatasetManifest,
    workers: usize,
) -> Result<Analysis, PipelineError> {
    let jobs: Vec<(ClassLabel, &String)> = manifest
        .classes
        .iter()
        .flat_map(|(c, paths)| paths.iter().map(move |p| (*c, p)))
        .collect();
    let results: Vec<_> = with_workers(workers, || {
        jobs.par_iter()
            .map(|(class, rel)| (*class, *rel, measure_file(&manifest.root.join(rel))))
            .collect()
    })?;
    collect_analysis(
        results
            .into_iter()
            .map(|(c, p, r)| (c, p.clone(), r.map_err(|e| e.to_string()))),
    )
}

/// Same as [`analyze_dataset`] for images already in memory.
pub fn analyze_images(
    images: &[(ClassLabel, String, RgbImage)],
) -> Result<Analysis, PipelineError> {
    let results: Vec<_> = images
        .par_iter()
        .map(|(c, p, img)| (*c, p.clone(), measure_image(img).map_err(|e| e.to_string())))
        .collect();
    collect_analysis(results)
}

fn collect_analysis(
    results: impl IntoIterator<Item = (ClassLabel, String, Result<[PropertyVector; 10], String>)>,
) -> Result<Analysis, PipelineError> {
    let mut sorted: Vec<_> = results.into_iter().collect();
    sorted.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut image_counts: BTreeMap<ClassLabel, usize> =
        ClassLabel::ALL.iter().map(|c| (*c, 0)).collect();
    for (class, image_path, result) in sorted {
        match result {
            Ok(vectors) => {
                *image_counts.entry(class).or_default() += 1;
                for (region, props) in RegionId::all().zip(vectors) {
                    records.push(PropertyRecord {
                        image_path: image_path.clone(),
                        class,
                        region,
                        props,
                    });
                }
            }
            Err(error) => failures.push(ImageFailure { image_path, error }),
        }
    }
    if let Some((class, _)) = image_counts.iter().find(|(_, n)| **n == 0) {
        return Err(PipelineError::NoMeasuredImages(*class));
    }
    Ok(Analysis {
        records,
        failures,
        image_counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            count: values.len(),
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRegionAggregate {
    pub class: ClassLabel,
    pub region: RegionId,
    /// One entry per property, in `Property::ALL` order.
    pub stats: Vec<(Property, Summary)>,
}

impl ClassRegionAggregate {
    pub fn get(&self, p: Property) -> Option<Summary> {
        self.stats.iter().find(|(q, _)| *q == p).map(|(_, s)| *s)
    }
}

/// Values of one property grouped by (region, class), in record order.
fn group_values(
    records: &[PropertyRecord],
) -> BTreeMap<(RegionId, ClassLabel), Vec<PropertyVector>> {
    let mut groups: BTreeMap<_, Vec<_>> = BTreeMap::new();
    for r in records {
        groups.entry((r.region, r.class)).or_default().push(r.props);
    }
    groups
}

/// Per (region, class): count, mean and population std of every property.
pub fn aggregate(records: &[PropertyRecord]) -> Vec<ClassRegionAggregate> {
    group_values(records)
        .into_iter()
        .map(|((region, class), vectors)| {
            let stats = Property::ALL
                .iter()
                .map(|&p| {
                    let vals: Vec<f64> = vectors.iter().map(|v| v.get(p)).collect();
                    (p, Summary::of(&vals).expect("groups are nonempty"))
                })
                .collect();
            ClassRegionAggregate {
                class,
                region,
                stats,
            }
        })
        .collect()
}

pub type AnovaTable = BTreeMap<(RegionId, Property), AnovaResult>;

/// One-way ANOVA across the three classes for every requested region and property.
pub fn anova_table(
    records: &[PropertyRecord],
    regions: &[RegionId],
    cap: f64,
) -> Result<AnovaTable, PipelineError> {
    let groups = group_values(records);
    let mut table = BTreeMap::new();
    for &region in regions {
        for property in Property::ALL {
            let per_class: Vec<Vec<f64>> = ClassLabel::ALL
                .iter()
                .map(|c| {
                    groups
                        .get(&(region, *c))
                        .map(|v| v.iter().map(|p| p.get(property)).collect())
                        .unwrap_or_default()
                })
                .collect();
            if per_class.iter().any(|g| g.len() < 2) {
                return Err(PipelineError::InsufficientSamples { region, property });
            }
            table.insert((region, property), one_way_anova(&per_class, cap)?);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::DEFAULT_NEG_LOG10_CAP;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn write_png(path: &Path, img: &RgbImage) {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, img.encode_png().unwrap()).unwrap();
    }

    fn record(path: &str, class: ClassLabel, region: u8, v: f64) -> PropertyRecord {
        PropertyRecord {
            image_path: path.into(),
            class,
            region: RegionId::new(region).unwrap(),
            props: PropertyVector::from_values([v; 8]),
        }
    }

    #[test]
    fn scan_finds_nested_sorted_images() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::uniform(4, 4, [1, 2, 3]).unwrap();
        for c in ClassLabel::ALL {
            write_png(&dir.path().join(c.name()).join("b.png"), &img);
            write_png(&dir.path().join(c.name()).join("a.PNG"), &img);
        }
        write_png(&dir.path().join("real/nested/deeper/c.png"), &img);
        std::fs::write(dir.path().join("real/notes.txt"), "x").unwrap();
        let m = scan_dataset(dir.path()).unwrap();
        assert_eq!(
            m.classes[&ClassLabel::Fake],
            vec!["fake/a.PNG", "fake/b.png"]
        );
        assert_eq!(
            m.classes[&ClassLabel::Real],
            vec!["real/a.PNG", "real/b.png", "real/nested/deeper/c.png"]
        );
    }

    #[test]
    fn scan_reports_missing_and_empty_classes() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::uniform(4, 4, [1, 2, 3]).unwrap();
        write_png(&dir.path().join("fake/a.png"), &img);
        write_png(&dir.path().join("real/a.png"), &img);
        match scan_dataset(dir.path()) {
            Err(PipelineError::MissingClassDir { class, .. }) => {
                assert_eq!(class, ClassLabel::Synthetic)
            }
            other => panic!("{other:?}"),
        }
        std::fs::create_dir(dir.path().join("synthetic")).unwrap();
        assert!(matches!(
            scan_dataset(dir.path()),
            Err(PipelineError::EmptyClass(ClassLabel::Synthetic))
        ));
    }

    #[test]
    fn analyze_uniform_images_and_failures() {
        let dir = tempfile::tempdir().unwrap();
        for (i, c) in ClassLabel::ALL.iter().enumerate() {
            write_png(
                &dir.path().join(c.name()).join("u.png"),
                &RgbImage::uniform(9, 12, [i as u8 * 80; 3]).unwrap(),
            );
        }
        std::fs::write(dir.path().join("real/broken.png"), b"\x89PNG garbage").unwrap();
        let m = scan_dataset(dir.path()).unwrap();
        let a = analyze_dataset(&m, 2).unwrap();
        assert_eq!(a.records.len(), 30);
        assert!(a
            .records
            .iter()
            .all(|r| r.props.sharpness == 0.0 && r.props.contrast == 0.0 && r.props.detail == 0.0));
        assert_eq!(a.failures.len(), 1);
        assert_eq!(a.failures[0].image_path, "real/broken.png");
        assert_eq!(a.image_counts[&ClassLabel::Real], 1);
        let again = analyze_dataset(&m, 1).unwrap();
        assert_eq!(a, again);
        // Ordering: (class, path, region).
        let keys: Vec<_> = a
            .records
            .iter()
            .map(|r| (r.class, r.image_path.clone(), r.region))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn analyze_fails_when_a_class_has_no_usable_image() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::uniform(5, 5, [9; 3]).unwrap();
        write_png(&dir.path().join("fake/a.png"), &img);
        write_png(&dir.path().join("real/a.png"), &img);
        write_png(
            &dir.path().join("synthetic/tiny.png"),
            &RgbImage::uniform(2, 2, [9; 3]).unwrap(),
        );
        let m = scan_dataset(dir.path()).unwrap();
        assert!(matches!(
            analyze_dataset(&m, 1),
            Err(PipelineError::NoMeasuredImages(ClassLabel::Synthetic))
        ));
    }

    #[test]
    fn record_count_per_decoded_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut images = Vec::new();
        for i in 0..12 {
            let class = ClassLabel::from_index(i % 3).unwrap();
            let (w, h) = if i % 5 == 4 {
                (2, 8)
            } else {
                (rng.random_range(3..20), rng.random_range(3..20))
            };
            images.push((
                class,
                format!("{i:02}.png"),
                RgbImage::from_fn(w, h, |_, _| rng.random()).unwrap(),
            ));
        }
        let a = analyze_images(&images).unwrap();
        let failed = images.iter().filter(|(_, _, img)| img.width() < 3).count();
        assert_eq!(a.failures.len(), failed);
        assert_eq!(a.records.len(), 10 * (images.len() - failed));
    }

    #[test]
    fn aggregate_cases() {
        let agg = aggregate(&[record("a", ClassLabel::Fake, 0, 4.0)]);
        assert_eq!(agg.len(), 1);
        assert_eq!(
            agg[0].get(Property::Detail),
            Some(Summary {
                count: 1,
                mean: 4.0,
                std: 0.0
            })
        );
        let agg = aggregate(&[
            record("a", ClassLabel::Real, 3, 0.0),
            record("b", ClassLabel::Real, 3, 2.0),
        ]);
        assert_eq!(
            agg[0].get(Property::Brightness),
            Some(Summary {
                count: 2,
                mean: 1.0,
                std: 1.0
            })
        );
    }

    #[test]
    fn aggregate_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let records: Vec<_> = (0..90)
            .map(|i| {
                let class = ClassLabel::from_index(i % 3).unwrap();
                PropertyRecord {
                    image_path: format!("{i}"),
                    class,
                    region: RegionId::new((i / 3 % 10) as u8).unwrap(),
                    props: PropertyVector::from_values(std::array::from_fn(|_| {
                        rng.random_range(0.0..255.0)
                    })),
                }
            })
            .collect();
        for agg in aggregate(&records) {
            for p in Property::ALL {
                let vals: Vec<f64> = records
                    .iter()
                    .filter(|r| r.class == agg.class && r.region == agg.region)
                    .map(|r| r.props.get(p))
                    .collect();
                let mut sum = 0.0;
                for v in &vals {
                    sum += v;
                }
                let s = agg.get(p).unwrap();
                assert_eq!(s.count, vals.len());
                assert!((s.mean - sum / vals.len() as f64).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn anova_table_shapes_and_values() {
        let mut records = Vec::new();
        for region in 0..10u8 {
            for c in ClassLabel::ALL {
                for (i, v) in [1.0, 2.0, 3.0].iter().enumerate() {
                    records.push(record(&format!("{i}"), c, region, *v));
                }
            }
        }
        let regions: Vec<_> = RegionId::all().collect();
        let t = anova_table(&records, &regions, DEFAULT_NEG_LOG10_CAP).unwrap();
        assert_eq!(t.len(), 80);
        assert!(t.values().all(|r| r.p_value == 1.0));
        let t = anova_table(&records, &[RegionId::WHOLE], DEFAULT_NEG_LOG10_CAP).unwrap();
        assert_eq!(t.len(), 8);
        let short: Vec<_> = records
            .iter()
            .filter(|r| !(r.class == ClassLabel::Real && r.image_path != "0"))
            .cloned()
            .collect();
        assert!(matches!(
            anova_table(&short, &regions, DEFAULT_NEG_LOG10_CAP),
            Err(PipelineError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn anova_table_detects_brightness_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let noise = Normal::new(0.0, 5.0).unwrap();
        let mut records = Vec::new();
        for (c, offset) in ClassLabel::ALL.iter().zip([0.0, 30.0, 60.0]) {
            for i in 0..50 {
                for region in 0..10u8 {
                    let mut r = record(
                        &format!("{i:03}"),
                        *c,
                        region,
                        100.0 + offset + noise.sample(&mut rng),
                    );
                    r.props.sharpness = noise.sample(&mut rng);
                    records.push(r);
                }
            }
        }
        let regions: Vec<_> = RegionId::all().collect();
        let t = anova_table(&records, &regions, DEFAULT_NEG_LOG10_CAP).unwrap();
        for region in RegionId::all() {
            let cell = t[&(region, Property::Brightness)];
            assert!(cell.p_value < 1e-6, "region {region}: {}", cell.p_value);
            // Matches a direct call on the hand-grouped values.
            let groups: Vec<Vec<f64>> = ClassLabel::ALL
                .iter()
                .map(|c| {
                    records
                        .iter()
                        .filter(|r| r.class == *c && r.region == region)
                        .map(|r| r.props.brightness)
                        .collect()
                })
                .collect();
            assert_eq!(one_way_anova(&groups, DEFAULT_NEG_LOG10_CAP).unwrap(), cell);
        }
    }
}
