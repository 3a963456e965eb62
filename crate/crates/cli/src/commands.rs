use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Component, Path, PathBuf};

use anyhow::{anyhow, Context};
use facetrace_core::eval::{evaluate, parse_predictions};
use facetrace_core::metrics::RegionId;
use facetrace_core::pipeline::{
    aggregate, analyze_dataset, anova_table, scan_dataset, PipelineError,
};
use facetrace_core::preprocess::{
    extract_face, frontal_ratio, is_frontal, parse_landmarks, sample_split, LandmarkRecord,
};
use facetrace_core::raster::decode_image;
use facetrace_core::render::render_report_plots;
use facetrace_core::report::{
    read_report_json, write_error_sidecar, write_property_csv, write_report_json, AnalysisReport,
};
use facetrace_core::ClassLabel;

use crate::config::{Config, SettingsFile};
use crate::{AnalyzeArgs, Classify, EvalArgs, Failure, PlotArgs, PreprocessArgs};

type CmdResult = Result<(), Failure>;

fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::WorkerPool(_) => Failure::Internal(e.into()),
        _ => Failure::Input(e.into()),
    }
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .internal()
}

fn create_file(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .internal()
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .input()
}

/// Destination of an extracted face: `<class>/<split>/<path>.png`, with a
/// leading class directory dropped from the source path.
fn face_output_path(rec_path: &str, class: ClassLabel, split: &str) -> anyhow::Result<PathBuf> {
    let rel = Path::new(rec_path);
    let mut parts = Vec::new();
    for c in rel.components() {
        match c {
            Component::Normal(s) => parts.push(s),
            Component::CurDir => {}
            _ => {
                return Err(anyhow!(
                    "image path {rec_path:?} must be relative and stay below --root"
                ))
            }
        }
    }
    if parts.len() > 1 && parts[0] == class.name() {
        parts.remove(0);
    }
    let mut out: PathBuf = [class.name(), split].iter().collect();
    out.extend(parts);
    out.set_extension("png");
    Ok(out)
}

pub fn preprocess(args: PreprocessArgs) -> CmdResult {
    let settings = SettingsFile::load(args.config.config.as_deref()).input()?;
    let root: PathBuf = settings.require(args.root, "root").input()?;
    let landmarks: PathBuf = settings.require(args.landmarks, "landmarks").input()?;
    let out: PathBuf = settings.require(args.out, "out").input()?;
    let mut cfg = Config::from_settings(&settings).input()?;
    cfg.lo = args.lo.unwrap_or(cfg.lo);
    cfg.hi = args.hi.unwrap_or(cfg.hi);
    cfg.size = args.size.unwrap_or(cfg.size);
    cfg.counts.train = args.train.unwrap_or(cfg.counts.train);
    cfg.counts.val = args.val.unwrap_or(cfg.counts.val);
    cfg.counts.test = args.test.unwrap_or(cfg.counts.test);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.validate().input()?;

    let records = parse_landmarks(&read_text(&landmarks)?)
        .with_context(|| format!("parsing {}", landmarks.display()))
        .input()?;
    let mut kept: BTreeMap<ClassLabel, usize> = ClassLabel::ALL.iter().map(|c| (*c, 0)).collect();
    let mut rejected = kept.clone();
    let mut candidates: BTreeMap<ClassLabel, Vec<String>> = BTreeMap::new();
    let mut by_path: BTreeMap<&str, &LandmarkRecord> = BTreeMap::new();
    for rec in &records {
        let class = rec
            .class()
            .ok_or_else(|| {
                anyhow!(
                    "{}: no class field and no class directory in the path",
                    rec.image_path
                )
            })
            .input()?;
        let frontal = frontal_ratio(rec).is_ok_and(|r| is_frontal(r, cfg.lo, cfg.hi));
        if frontal && !by_path.contains_key(rec.image_path.as_str()) {
            *kept.get_mut(&class).unwrap() += 1;
            candidates
                .entry(class)
                .or_default()
                .push(rec.image_path.clone());
            by_path.insert(&rec.image_path, rec);
        } else if !frontal {
            *rejected.get_mut(&class).unwrap() += 1;
        }
    }
    for class in ClassLabel::ALL {
        println!(
            "{class}: kept {}, rejected {}",
            kept[&class], rejected[&class]
        );
    }

    let manifest = sample_split(&candidates, cfg.counts, cfg.seed).input()?;
    for (class, split) in &manifest.classes {
        for (name, paths) in [
            ("train", &split.train),
            ("val", &split.val),
            ("test", &split.test),
        ] {
            for path in paths {
                let rec = by_path[path.as_str()];
                let src = root.join(path);
                let bytes = fs::read(&src)
                    .with_context(|| format!("reading {}", src.display()))
                    .input()?;
                let img = decode_image(&bytes)
                    .with_context(|| format!("decoding {}", src.display()))
                    .input()?;
                let face = extract_face(&img, rec.face_box, cfg.size)
                    .with_context(|| format!("extracting face from {}", src.display()))
                    .input()?;
                let dest = out.join(face_output_path(path, *class, name).input()?);
                create_dir(dest.parent().expect("joined path has a parent"))?;
                let png = face.encode_png().internal()?;
                fs::write(&dest, png)
                    .with_context(|| format!("writing {}", dest.display()))
                    .internal()?;
            }
        }
    }
    create_dir(&out)?;
    let manifest_path = out.join("split_manifest.json");
    let mut json = serde_json::to_string_pretty(&manifest).internal()?;
    json.push('\n');
    fs::write(&manifest_path, json)
        .with_context(|| format!("writing {}", manifest_path.display()))
        .internal()?;
    println!(
        "wrote {} faces per class (train {}, val {}, test {}) to {}",
        cfg.counts.total(),
        cfg.counts.train,
        cfg.counts.val,
        cfg.counts.test,
        out.display()
    );
    Ok(())
}

pub fn analyze(args: AnalyzeArgs) -> CmdResult {
    let settings = SettingsFile::load(args.config.config.as_deref()).input()?;
    let root: PathBuf = settings.require(args.root, "root").input()?;
    let out: PathBuf = settings.require(args.out, "out").input()?;
    let whole_only = settings
        .switch(args.whole_image_only, "whole-image-only")
        .input()?;
    let mut cfg = Config::from_settings(&settings).input()?;
    cfg.cap = args.cap.unwrap_or(cfg.cap);
    cfg.workers = args.workers.unwrap_or(cfg.workers);
    cfg.validate().input()?;

    let manifest = scan_dataset(&root).map_err(pipeline_failure)?;
    let mut analysis = analyze_dataset(&manifest, cfg.workers).map_err(pipeline_failure)?;
    let regions: Vec<RegionId> = if whole_only {
        analysis.records.retain(|r| r.region == RegionId::WHOLE);
        vec![RegionId::WHOLE]
    } else {
        RegionId::all().collect()
    };

    create_dir(&out)?;
    let csv_path = out.join("properties.csv");
    write_property_csv(&analysis.records, create_file(&csv_path)?)
        .with_context(|| format!("writing {}", csv_path.display()))
        .internal()?;
    let sidecar = out.join("errors.tsv");
    write_error_sidecar(&analysis.failures, create_file(&sidecar)?)
        .with_context(|| format!("writing {}", sidecar.display()))
        .internal()?;
    for (class, n) in &analysis.image_counts {
        println!("{class}: {n} images");
    }
    if !analysis.failures.is_empty() {
        println!(
            "{} unreadable images listed in {}",
            analysis.failures.len(),
            sidecar.display()
        );
    }

    let table = anova_table(&analysis.records, &regions, cfg.cap).map_err(pipeline_failure)?;
    let report = AnalysisReport::new(
        &aggregate(&analysis.records),
        &table,
        analysis.image_counts.clone(),
        analysis.failures.len(),
        cfg.cap,
    );
    let report_path = out.join("report.json");
    write_report_json(&report, create_file(&report_path)?)
        .with_context(|| format!("writing {}", report_path.display()))
        .internal()?;
    println!("anova cells: {}", table.len());
    Ok(())
}

pub fn eval(args: EvalArgs) -> CmdResult {
    let settings = SettingsFile::load(args.config.config.as_deref()).input()?;
    let predictions: PathBuf = settings.require(args.predictions, "predictions").input()?;
    let out: Option<PathBuf> = settings.pick(args.out, "out").input()?;

    let preds = parse_predictions(&read_text(&predictions)?)
        .with_context(|| format!("parsing {}", predictions.display()))
        .input()?;
    let report = evaluate(&preds).input()?;
    print!("{}", report.to_table());
    if let Some(out) = out {
        create_dir(&out)?;
        let csv = out.join("eval.csv");
        fs::write(&csv, report.to_csv())
            .with_context(|| format!("writing {}", csv.display()))
            .internal()?;
        let json = out.join("eval.json");
        let mut text = serde_json::to_string_pretty(&report).internal()?;
        text.push('\n');
        fs::write(&json, text)
            .with_context(|| format!("writing {}", json.display()))
            .internal()?;
    }
    Ok(())
}

pub fn plot(args: PlotArgs) -> CmdResult {
    let settings = SettingsFile::load(args.config.config.as_deref()).input()?;
    let report_path: PathBuf = settings.require(args.report, "report").input()?;
    let out: PathBuf = settings.require(args.out, "out").input()?;

    let file = File::open(&report_path)
        .with_context(|| format!("opening {}", report_path.display()))
        .input()?;
    let report = read_report_json(std::io::BufReader::new(file))
        .with_context(|| format!("reading {}", report_path.display()))
        .input()?;
    let plots = render_report_plots(&report).input()?;
    create_dir(&out)?;
    for (name, svg) in &plots {
        let path = out.join(name);
        fs::write(&path, svg)
            .with_context(|| format!("writing {}", path.display()))
            .internal()?;
    }
    println!("wrote {} plots to {}", plots.len(), out.display());
    Ok(())
}
