//! Small numerical helpers shared by the simulation and inference code.

use crate::error::{invalid, Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

pub fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    compensated_sum(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() as f64 - 1.0)
}

/// Ordinary least-squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("linear fit needs at least two paired points"));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx = compensated_sum(x.iter().map(|v| (v - mx) * (v - mx)));
    if sxx == 0.0 {
        return Err(Error::Degenerate("linear fit with constant abscissa".into()));
    }
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let slope = sxy / sxx;
    Ok(LinearFit {
        intercept: my - slope * mx,
        slope,
    })
}

/// `1 − SS_res/SS_tot` of `predicted` against `observed`.
pub fn r_squared(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() || observed.is_empty() {
        return Err(invalid("r_squared needs equal-length, non-empty inputs"));
    }
    let m = mean(observed);
    let ss_tot = compensated_sum(observed.iter().map(|v| (v - m) * (v - m)));
    if ss_tot == 0.0 {
        return Err(Error::Domain("r_squared undefined for zero-variance data".into()));
    }
    let ss_res = compensated_sum(observed.iter().zip(predicted).map(|(o, p)| (o - p) * (o - p)));
    Ok(1.0 - ss_res / ss_tot)
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Uniform binning of `[lo, hi]` with the Freedman–Diaconis width, capped at
/// `max_bins` bins. Returns the bin edges.
pub fn freedman_diaconis_edges(data: &[f64], max_bins: usize) -> Result<Vec<f64>> {
    if data.len() < 2 {
        return Err(invalid("binning needs at least two values"));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    if hi <= lo {
        return Err(Error::Degenerate("all values are equal".into()));
    }
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let width = 2.0 * iqr / (sorted.len() as f64).cbrt();
    let bins = if width > 0.0 {
        (((hi - lo) / width).ceil() as usize).clamp(1, max_bins)
    } else {
        max_bins.min(sorted.len())
    };
    Ok(uniform_edges(lo, hi, bins))
}

pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let w = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|k| lo + w * k as f64).collect();
    edges[bins] = hi;
    edges
}

/// Index of the bin containing `x`; the last bin is closed on the right.
pub fn bin_index(edges: &[f64], x: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if !(x >= edges[0] && x <= edges[n]) {
        return None;
    }
    let k = edges.partition_point(|&e| e <= x);
    Some(k.saturating_sub(1).min(n - 1))
}

pub fn histogram_counts(edges: &[f64], data: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; edges.len() - 1];
    for &x in data {
        if let Some(k) = bin_index(edges, x) {
            counts[k] += 1;
        }
    }
    counts
}

/// Two-sample-free Kolmogorov–Smirnov distance of a sample against a CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut xs = vec![1.0e16];
        xs.extend(std::iter::repeat(1.0).take(1000));
        xs.push(-1.0e16);
        assert_eq!(compensated_sum(xs.iter().copied()), 1000.0);
    }

    #[test]
    fn linear_fit_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y).unwrap();
        assert_relative_eq!(f.slope, 2.0, max_relative = 1e-14);
        assert_relative_eq!(f.intercept, 1.0, max_relative = 1e-14);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn r_squared_reference_points() {
        let y = [1.0, 2.0, 4.0, 8.0];
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        let m = mean(&y);
        assert_relative_eq!(r_squared(&y, &[m; 4]).unwrap(), 0.0, epsilon = 1e-15);
        assert!(r_squared(&y, &[100.0; 4]).unwrap() < 0.0);
        assert!(r_squared(&[2.0; 4], &y).is_err());
    }

    #[test]
    fn binning_edges_cover_data() {
        let data: Vec<f64> = (0..1000).map(|k| (k as f64 * 0.37).sin()).collect();
        let edges = freedman_diaconis_edges(&data, 100).unwrap();
        let counts = histogram_counts(&edges, &data);
        assert_eq!(counts.iter().sum::<u64>(), 1000);
        assert!(freedman_diaconis_edges(&[1.0; 10], 10).is_err());
    }
}
