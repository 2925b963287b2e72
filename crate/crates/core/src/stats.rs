//! Small summary-statistics helpers: running mean/variance, quantiles,
//! fixed-edge histograms and a two-peak test.

use serde::{Deserialize, Serialize};

/// Welford running mean and variance.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample (n - 1) standard deviation; zero for fewer than two values.
    pub fn std_dev(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::default();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// Linear-interpolation quantile of already sorted data, `q` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn quantiles(values: &[f64], qs: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    qs.iter().map(|&q| quantile_sorted(&sorted, q)).collect()
}

/// Equal-width histogram on `[lo, hi]`; the last bin is closed on the right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        assert!(bins > 0 && hi > lo, "invalid histogram range");
        Histogram {
            lo,
            hi,
            counts: vec![0; bins],
        }
    }

    pub fn from_values(lo: f64, hi: f64, bins: usize, values: &[f64]) -> Self {
        let mut h = Histogram::new(lo, hi, bins);
        for &v in values {
            h.add(v);
        }
        h
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    /// Values outside the range are folded into the edge bins.
    pub fn add(&mut self, v: f64) {
        let raw = ((v - self.lo) / self.width()).floor();
        let idx = if raw.is_nan() || raw < 0.0 {
            0
        } else {
            (raw as usize).min(self.bins() - 1)
        };
        self.counts[idx] += 1;
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let w = self.width();
        (self.lo + w * bin as f64, self.lo + w * (bin + 1) as f64)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Two-peak test on a histogram.
///
/// Counts are smoothed with a 3-bin moving average. Local maxima whose 3-bin
/// window holds at least `min_peak_frac` of the total mass are candidate
/// modes; the histogram is bimodal when two candidates are separated by a
/// trough below half of the smaller one.
pub fn is_bimodal(hist: &Histogram, min_peak_frac: f64) -> bool {
    let n = hist.bins();
    let c: Vec<f64> = hist.counts.iter().map(|&v| v as f64).collect();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            c[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let floor = min_peak_frac * hist.total() as f64 / 3.0;
    let peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = if i == 0 { f64::NEG_INFINITY } else { smooth[i - 1] };
            let right = if i + 1 == n {
                f64::NEG_INFINITY
            } else {
                smooth[i + 1]
            };
            smooth[i] >= left && smooth[i] > right && smooth[i] >= floor
        })
        .collect();
    for (k, &i) in peaks.iter().enumerate() {
        for &j in &peaks[k + 1..] {
            let trough = smooth[i..=j].iter().cloned().fold(f64::INFINITY, f64::min);
            if trough < 0.5 * smooth[i].min(smooth[j]) {
                return true;
            }
        }
    }
    false
}
