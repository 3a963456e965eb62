//! One-way ANOVA across image classes and the F-distribution tail it needs.

mod special;

pub use special::{ln_beta, ln_gamma, reg_inc_beta};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ceiling for -log10(p); a little above -log10 of the smallest positive double (~323.3).
pub const DEFAULT_NEG_LOG10_CAP: f64 = 350.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("continued fraction did not converge for a={a}, b={b}, x={x}")]
    NonConvergence { a: f64, b: f64, x: f64 },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

/// Measurements of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGroup {
    pub label: String,
    pub values: Vec<f64>,
}

impl SampleGroup {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            values,
        }
    }
}

impl AsRef<[f64]> for SampleGroup {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    /// `f64::INFINITY` when within-group variance is zero but the means differ.
    pub f_stat: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
    pub neg_log10_p: f64,
    pub capped: bool,
}

impl AnovaResult {
    pub fn f_is_infinite(&self) -> bool {
        self.f_stat.is_infinite()
    }
}

/// Unbalanced one-way ANOVA. Sums of squares use a two-pass mean/deviation scheme.
pub fn one_way_anova<G: AsRef<[f64]>>(groups: &[G], cap: f64) -> Result<AnovaResult, StatsError> {
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::DegenerateInput(format!(
            "need at least 2 groups, got {k}"
        )));
    }
    if let Some(i) = groups.iter().position(|g| g.as_ref().is_empty()) {
        return Err(StatsError::DegenerateInput(format!("group {i} is empty")));
    }
    if groups
        .iter()
        .flat_map(|g| g.as_ref())
        .any(|v| !v.is_finite())
    {
        return Err(StatsError::DegenerateInput("non-finite sample".into()));
    }
    let n: usize = groups.iter().map(|g| g.as_ref().len()).sum();
    if n <= k {
        return Err(StatsError::DegenerateInput(format!(
            "{n} samples for {k} groups"
        )));
    }
    if cap.is_nan() || cap <= 0.0 {
        return Err(StatsError::Domain(format!(
            "cap must be positive, got {cap}"
        )));
    }

    let grand_mean = groups.iter().flat_map(|g| g.as_ref()).sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let g = g.as_ref();
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (m - grand_mean) * (m - grand_mean);
        ss_within += g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    }
    let df_between = k - 1;
    let df_within = n - k;

    let f_stat = if ss_within == 0.0 {
        if ss_between == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (ss_between / df_between as f64) / (ss_within / df_within as f64)
    };
    let p_value = f_survival(f_stat, df_between, df_within)?;
    let (neg_log10_p, capped) = neg_log10_capped(p_value, cap)?;
    Ok(AnovaResult {
        f_stat,
        df_between,
        df_within,
        p_value,
        neg_log10_p,
        capped,
    })
}

/// P(F > f) for an F(d1, d2) variate.
pub fn f_survival(f: f64, d1: usize, d2: usize) -> Result<f64, StatsError> {
    if f.is_nan() || f < 0.0 {
        return Err(StatsError::Domain(format!(
            "F statistic must be >= 0, got {f}"
        )));
    }
    if d1 == 0 || d2 == 0 {
        return Err(StatsError::Domain(format!(
            "degrees of freedom must be >= 1, got ({d1}, {d2})"
        )));
    }
    if f == 0.0 {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    let (d1, d2) = (d1 as f64, d2 as f64);
    let x = d2 / (d2 + d1 * f);
    reg_inc_beta(x, d2 / 2.0, d1 / 2.0)
}

/// `-log10(p)` limited to `cap`; the flag reports whether the cap was applied.
pub fn neg_log10_capped(p: f64, cap: f64) -> Result<(f64, bool), StatsError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(StatsError::Domain(format!("p must be in [0,1], got {p}")));
    }
    if cap.is_nan() || cap <= 0.0 {
        return Err(StatsError::Domain(format!(
            "cap must be positive, got {cap}"
        )));
    }
    if p == 0.0 {
        return Ok((cap, true));
    }
    let v = (-p.log10()).max(0.0);
    if v > cap {
        Ok((cap, true))
    } else {
        Ok((v, false))
    }
}
