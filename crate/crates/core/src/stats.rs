//! Descriptive statistics and histograms shared by the style and simulation
//! modules.

use serde::{Deserialize, Serialize};

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation (divides by `n`); 0 for fewer than two values.
pub fn std_pop(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Quantile of sorted data by linear interpolation at rank `p·(n+1)`,
/// clamped to the first and last value (Hyndman–Fan type 6).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    let h = p * (n as f64 + 1.0);
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor();
    let frac = h - lo;
    let i = lo as usize - 1;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

pub fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SeriesStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl SeriesStats {
    pub fn of(x: &[f64]) -> Self {
        if x.is_empty() {
            return Self::default();
        }
        let s = sorted(x);
        Self {
            n: x.len(),
            mean: mean(x),
            std: std_pop(x),
            min: s[0],
            q1: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            q3: quantile_sorted(&s, 0.75),
            max: s[s.len() - 1],
        }
    }
}

/// Counts over equal-width bins. The last bin is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// `bins` equal-width bins spanning `[lo, hi]`. A degenerate range is
    /// widened by 0.5 on both sides.
    pub fn edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
        let bins = bins.max(1);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let w = (hi - lo) / bins as f64;
        (0..=bins)
            .map(|i| if i == bins { hi } else { lo + i as f64 * w })
            .collect()
    }

    pub fn with_edges(x: &[f64], edges: Vec<f64>) -> Self {
        let bins = edges.len() - 1;
        let (lo, hi) = (edges[0], edges[bins]);
        let w = (hi - lo) / bins as f64;
        let mut counts = vec![0; bins];
        for &v in x {
            if !(v >= lo && v <= hi) {
                continue;
            }
            let mut i = (((v - lo) / w) as usize).min(bins - 1);
            // guard against rounding at interior edges
            while i > 0 && v < edges[i] {
                i -= 1;
            }
            while i + 1 < bins && v >= edges[i + 1] {
                i += 1;
            }
            counts[i] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn fractions(&self) -> Vec<f64> {
        let t = self.total().max(1) as f64;
        self.counts.iter().map(|c| *c as f64 / t).collect()
    }
}

/// Histograms of two series over shared edges spanning their pooled range.
pub fn shared_histograms(a: &[f64], b: &[f64], bins: usize) -> (Histogram, Histogram) {
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    let edges = if lo.is_finite() {
        Histogram::edges(lo, hi, bins)
    } else {
        Histogram::edges(0.0, 1.0, bins)
    };
    (
        Histogram::with_edges(a, edges.clone()),
        Histogram::with_edges(b, edges),
    )
}

/// Total-variation distance `½·Σ|p_i − q_i|` between two histograms with the
/// same edges, in `[0, 1]`.
pub fn tv_distance(a: &Histogram, b: &Histogram) -> f64 {
    debug_assert_eq!(a.edges, b.edges);
    let (p, q) = (a.fractions(), b.fractions());
    0.5 * p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
