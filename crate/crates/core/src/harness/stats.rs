use serde::{Deserialize, Serialize};

/// Median and interquartile range of times-to-event where some runs never
/// reached the event. All runs share the same censoring time (the iteration
/// budget), so every censored run ranks after every observed one and the
/// Kaplan–Meier quantiles reduce to order statistics with censored values
/// placed at +∞. A quantile that lands on a censored run is reported as
/// `None`, meaning "beyond the budget".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensoredSummary {
    pub runs: usize,
    pub censored: usize,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub iqr: Option<f64>,
}

fn order_statistic(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    let (a, b) = (sorted[lo], sorted[hi]);
    if lo == hi {
        return a.is_finite().then_some(a);
    }
    (a.is_finite() && b.is_finite()).then_some(a + (pos - lo as f64) * (b - a))
}

pub fn censored_summary(times: &[Option<f64>]) -> CensoredSummary {
    let mut v: Vec<f64> = times.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect();
    v.sort_by(f64::total_cmp);
    let q1 = order_statistic(&v, 0.25);
    let q3 = order_statistic(&v, 0.75);
    CensoredSummary {
        runs: v.len(),
        censored: times.iter().filter(|t| t.is_none()).count(),
        median: order_statistic(&v, 0.5),
        q1,
        q3,
        iqr: q1.zip(q3).map(|(a, b)| b - a),
    }
}

/// Pearson correlation; `None` when either side is constant.
pub fn correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx).powi(2);
        syy += (y[i] - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

/// Counts of `values` in `bins` equal-width bins over `[lo, hi]`; values
/// outside are clamped into the end bins.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins.max(1)];
    let last = counts.len() - 1;
    let width = (hi - lo) / counts.len() as f64;
    for v in values {
        let k = if width > 0.0 { ((v - lo) / width).floor() } else { 0.0 };
        counts[(k.max(0.0) as usize).min(last)] += 1;
    }
    counts
}
