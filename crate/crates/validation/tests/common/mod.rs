//! Independent reference implementations for integration tests. Nothing here
//! calls into the library's numeric code.

#![allow(dead_code)]

use std::f64::consts::{LN_2, PI};

/// ln(1 - tanh v) for v >= 0, accurate for large v.
fn ln_one_minus_tanh(v: f64) -> f64 {
    LN_2 - (2.0 * v + (-2.0 * v).exp().ln_1p())
}

/// ln(1 + tanh v) for v >= 0.
fn ln_one_plus_tanh(v: f64) -> f64 {
    LN_2 - (-2.0 * v).exp().ln_1p()
}

fn ln_cosh(v: f64) -> f64 {
    let v = v.abs();
    v + (-2.0 * v).exp().ln_1p() - LN_2
}

/// Log-domain tanh-sinh nodes on `[lo, hi]` for the integrand
/// t^(a-1) (1-t)^(b-1). Returns ln(weight * integrand) per node so the caller
/// can normalise with a shared maximum.
fn tanh_sinh_terms(a: f64, b: f64, lo: f64, hi: f64, out: &mut Vec<f64>) {
    const H: f64 = 1.0 / 256.0;
    const U_MAX: f64 = 5.0;
    let half = 0.5 * (hi - lo);
    let ln_half = half.ln();
    let n = (U_MAX / H) as i64;
    for k in -n..=n {
        let u = k as f64 * H;
        let v = 0.5 * PI * u.sinh();
        // distances of the node from each end, computed without cancellation
        let (ln_from_lo, ln_from_hi) = if v >= 0.0 {
            (
                ln_half + ln_one_plus_tanh(v),
                ln_half + ln_one_minus_tanh(v),
            )
        } else {
            (
                ln_half + ln_one_minus_tanh(-v),
                ln_half + ln_one_plus_tanh(-v),
            )
        };
        let ln_t = if lo == 0.0 {
            ln_from_lo
        } else {
            (lo + ln_from_lo.exp()).ln()
        };
        let ln_1mt = if hi == 1.0 {
            ln_from_hi
        } else {
            ((1.0 - hi) + ln_from_hi.exp()).ln()
        };
        let ln_w = (H * 0.5 * PI).ln() + ln_half + ln_cosh(u) - 2.0 * ln_cosh(v);
        let term = ln_w + (a - 1.0) * ln_t + (b - 1.0) * ln_1mt;
        if term.is_finite() {
            out.push(term);
        }
    }
}

fn log_sum_exp(terms: &[f64], max: f64) -> f64 {
    terms.iter().map(|t| (t - max).exp()).sum()
}

/// Upper tail 1 - I_x(a, b), as the ratio of the integral over [x, 1] to the
/// integral over [0, 1]. No gamma or beta function is involved.
pub fn beta_upper_tail(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x >= 1.0 {
        return 0.0;
    }
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    tanh_sinh_terms(a, b, 0.0, x, &mut lower);
    tanh_sinh_terms(a, b, x, 1.0, &mut upper);
    let max = lower
        .iter()
        .chain(&upper)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let l = log_sum_exp(&lower, max);
    let u = log_sum_exp(&upper, max);
    u / (l + u)
}

/// Regularised incomplete beta I_x(a, b) by quadrature.
pub fn beta_cdf(a: f64, b: f64, x: f64) -> f64 {
    1.0 - beta_upper_tail(a, b, x)
}

/// P(F > f) for F(d1, d2): the upper tail of Beta(d1/2, d2/2) at
/// d1 f / (d1 f + d2).
pub fn f_sf_oracle(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    let x = d1 * f / (d1 * f + d2);
    beta_upper_tail(d1 / 2.0, d2 / 2.0, x)
}

/// Textbook one-way ANOVA: (F, df_between, df_within).
pub fn naive_anova(groups: &[Vec<f64>]) -> (f64, f64, f64) {
    let n: usize = groups.iter().map(Vec::len).sum();
    let k = groups.len();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand).powi(2);
        ssw += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let d1 = (k - 1) as f64;
    let d2 = (n - k) as f64;
    ((ssb / d1) / (ssw / d2), d1, d2)
}

/// Reflect-101 index into `0..n` (`-1 -> 1`, `n -> n - 2`).
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let mut i = i;
    while i < 0 || i >= n {
        i = if i < 0 { -i } else { 2 * (n - 1) - i };
    }
    i as usize
}

/// Plane stored row-major, padded explicitly and correlated with `k`.
pub fn brute_convolve(data: &[f64], w: usize, h: usize, k: [[f64; 3]; 3]) -> Vec<f64> {
    let pw = w + 2;
    let mut padded = vec![0.0; pw * (h + 2)];
    for py in 0..h + 2 {
        for px in 0..pw {
            let sx = reflect(px as isize - 1, w);
            let sy = reflect(py as isize - 1, h);
            padded[py * pw + px] = data[sy * w + sx];
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (dy, row) in k.iter().enumerate() {
                for (dx, kv) in row.iter().enumerate() {
                    acc += kv * padded[(y + dy) * pw + (x + dx)];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

pub const LAPLACIAN: [[f64; 3]; 3] = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];
pub const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
pub const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Two-pass population variance.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}
