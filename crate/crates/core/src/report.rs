//! On-disk formats of an analysis run: the per-record property CSV, the
//! grouped JSON report and the failed-image sidecar.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class::ClassLabel;
use crate::metrics::{Property, PropertyVector, RegionId};
use crate::pipeline::{AnovaTable, ClassRegionAggregate, ImageFailure, PropertyRecord};
use crate::stats::AnovaResult;

pub const PROPERTY_CSV_HEADER: [&str; 11] = [
    "image_path",
    "class",
    "region",
    "brightness",
    "sharpness",
    "luminosity",
    "red_mean",
    "green_mean",
    "blue_mean",
    "contrast",
    "detail",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("property CSV row {row}: {message}")]
    Malformed { row: usize, message: String },
}

/// 17 significant digits, enough to round-trip any f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_property_csv<W: Write>(records: &[PropertyRecord], out: W) -> Result<(), ReportError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(PROPERTY_CSV_HEADER)?;
    for r in records {
        let mut row = vec![
            r.image_path.clone(),
            r.class.name().to_string(),
            r.region.to_string(),
        ];
        row.extend(r.props.values().iter().map(|v| format_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_property_csv<R: io::Read>(input: R) -> Result<Vec<PropertyRecord>, ReportError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(PROPERTY_CSV_HEADER) {
        return Err(ReportError::Malformed {
            row: 0,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |message: String| ReportError::Malformed {
            row: i + 1,
            message,
        };
        let class: ClassLabel = row[1]
            .parse()
            .map_err(|e: crate::class::UnknownClass| bad(e.to_string()))?;
        let region = row[2]
            .parse::<u8>()
            .ok()
            .and_then(RegionId::new)
            .ok_or_else(|| bad(format!("invalid region {:?}", &row[2])))?;
        let mut values = [0.0; 8];
        for (slot, field) in values.iter_mut().zip(row.iter().skip(3)) {
            *slot = field
                .parse()
                .map_err(|_| bad(format!("invalid number {field:?}")))?;
        }
        out.push(PropertyRecord {
            image_path: row[0].to_string(),
            class,
            region,
            props: PropertyVector::from_values(values),
        });
    }
    Ok(out)
}

/// One `path<TAB>error` line per image that could not be measured.
pub fn write_error_sidecar<W: Write>(failures: &[ImageFailure], mut out: W) -> io::Result<()> {
    for f in failures {
        let error = f.error.replace(['\n', '\t'], " ");
        writeln!(out, "{}\t{}", f.image_path, error)?;
    }
    out.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: ClassLabel,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

/// JSON form of an [`AnovaResult`]; `f_stat` is null when infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaCell {
    pub f_stat: Option<f64>,
    pub f_infinite: bool,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
    pub neg_log10_p: f64,
    pub capped: bool,
}

impl From<AnovaResult> for AnovaCell {
    fn from(r: AnovaResult) -> Self {
        Self {
            f_stat: r.f_stat.is_finite().then_some(r.f_stat),
            f_infinite: r.f_stat.is_infinite(),
            df_between: r.df_between,
            df_within: r.df_within,
            p_value: r.p_value,
            neg_log10_p: r.neg_log10_p,
            capped: r.capped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: Property,
    pub classes: Vec<ClassSummary>,
    pub anova: AnovaCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub region: RegionId,
    pub properties: Vec<PropertyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub neg_log10_cap: f64,
    pub image_counts: BTreeMap<ClassLabel, usize>,
    pub failed_images: usize,
    pub anova_cells: usize,
    pub regions: Vec<RegionReport>,
}

impl AnalysisReport {
    /// Groups aggregates and ANOVA cells by region, then property. Only the
    /// regions present in `table` are reported.
    pub fn new(
        aggregates: &[ClassRegionAggregate],
        table: &AnovaTable,
        image_counts: BTreeMap<ClassLabel, usize>,
        failed_images: usize,
        neg_log10_cap: f64,
    ) -> Self {
        let mut regions: BTreeMap<RegionId, Vec<PropertyReport>> = BTreeMap::new();
        for (&(region, property), result) in table {
            let classes = aggregates
                .iter()
                .filter(|a| a.region == region)
                .filter_map(|a| {
                    a.get(property).map(|s| ClassSummary {
                        class: a.class,
                        count: s.count,
                        mean: s.mean,
                        std: s.std,
                    })
                })
                .collect();
            regions.entry(region).or_default().push(PropertyReport {
                property,
                classes,
                anova: (*result).into(),
            });
        }
        Self {
            neg_log10_cap,
            image_counts,
            failed_images,
            anova_cells: table.len(),
            regions: regions
                .into_iter()
                .map(|(region, properties)| RegionReport { region, properties })
                .collect(),
        }
    }

    pub fn region(&self, id: RegionId) -> Option<&RegionReport> {
        self.regions.iter().find(|r| r.region == id)
    }
}

impl RegionReport {
    pub fn property(&self, p: Property) -> Option<&PropertyReport> {
        self.properties.iter().find(|r| r.property == p)
    }
}

impl PropertyReport {
    pub fn class_mean(&self, c: ClassLabel) -> Option<f64> {
        self.classes.iter().find(|s| s.class == c).map(|s| s.mean)
    }
}

pub fn write_report_json<W: Write>(report: &AnalysisReport, mut out: W) -> Result<(), ReportError> {
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_report_json<R: io::Read>(input: R) -> Result<AnalysisReport, ReportError> {
    Ok(serde_json::from_reader(input)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{aggregate, anova_table};
    use crate::stats::DEFAULT_NEG_LOG10_CAP;
    use proptest::prelude::*;

    fn records() -> Vec<PropertyRecord> {
        let mut out = Vec::new();
        for (ci, c) in ClassLabel::ALL.iter().enumerate() {
            for i in 0..3 {
                for region in RegionId::all() {
                    let base = (ci * 10 + i) as f64 + f64::from(region.get()) / 7.0;
                    out.push(PropertyRecord {
                        image_path: format!("{c}/img, \"{i}\".png"),
                        class: *c,
                        region,
                        props: PropertyVector::from_values(std::array::from_fn(|k| {
                            base * (k + 1) as f64 / 3.0
                        })),
                    });
                }
            }
        }
        out
    }

    #[test]
    fn empty_csv_is_header_only() {
        let mut buf = Vec::new();
        write_property_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "image_path,class,region,brightness,sharpness,luminosity,red_mean,green_mean,blue_mean,contrast,detail\n"
        );
    }

    #[test]
    fn csv_round_trip_and_format() {
        let recs = records();
        let mut buf = Vec::new();
        write_property_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let second = text.lines().nth(1).unwrap();
        assert!(
            second.starts_with("\"fake/img, \"\"0\"\".png\",fake,0,0.0000000000000000e0,"),
            "{second}"
        );
        assert_eq!(read_property_csv(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let bad = "image_path,class,region,brightness,sharpness,luminosity,red_mean,green_mean,blue_mean,contrast,detail\na,fake,10,1,1,1,1,1,1,1,1\n";
        assert!(matches!(
            read_property_csv(bad.as_bytes()),
            Err(ReportError::Malformed { row: 1, .. })
        ));
        assert!(read_property_csv("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn sidecar_lines() {
        let mut buf = Vec::new();
        let failures = vec![ImageFailure {
            image_path: "real/x.png".into(),
            error: "bad\nthing".into(),
        }];
        write_error_sidecar(&failures, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "real/x.png\tbad thing\n");
    }

    #[test]
    fn report_json_groups_and_round_trips() {
        let recs = records();
        let regions: Vec<_> = RegionId::all().collect();
        let table = anova_table(&recs, &regions, DEFAULT_NEG_LOG10_CAP).unwrap();
        let counts = ClassLabel::ALL.iter().map(|c| (*c, 3)).collect();
        let report =
            AnalysisReport::new(&aggregate(&recs), &table, counts, 0, DEFAULT_NEG_LOG10_CAP);
        assert_eq!(report.regions.len(), 10);
        assert_eq!(report.anova_cells, 80);
        let cell = report
            .region(RegionId::WHOLE)
            .unwrap()
            .property(Property::Detail)
            .unwrap();
        assert_eq!(cell.classes.len(), 3);
        assert_eq!(cell.anova.df_within, 6);
        let mut buf = Vec::new();
        write_report_json(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"neg_log10_p\""));
        assert!(text.contains("\"property\": \"red_mean\""));
        assert_eq!(read_report_json(buf.as_slice()).unwrap(), report);
    }

    #[test]
    fn infinite_f_serializes_as_flag() {
        let r = AnovaResult {
            f_stat: f64::INFINITY,
            df_between: 2,
            df_within: 3,
            p_value: 0.0,
            neg_log10_p: 350.0,
            capped: true,
        };
        let cell: AnovaCell = r.into();
        let json = serde_json::to_string(&cell).unwrap();
        assert!(json.contains("\"f_stat\":null") && json.contains("\"f_infinite\":true"));
        assert_eq!(serde_json::from_str::<AnovaCell>(&json).unwrap(), cell);
    }

    proptest! {
        #[test]
        fn float_format_round_trips(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let s = format_f64(v);
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
