use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::artifacts::MetricsRow;
use crate::config::ReportSection;
use crate::{HarnessError, Result};

/// Savitzky-Golay smoothing: each point is replaced by the value at that
/// point of a least-squares polynomial of degree `order` fitted over a
/// window of `window` samples. Near the ends the window is shifted inward
/// rather than truncated.
pub fn savitzky_golay(y: &[f64], window: usize, order: usize) -> Vec<f64> {
    let n = y.len();
    let window = window.min(n);
    if window == 0 {
        return Vec::new();
    }
    let order = order.min(window - 1);
    let half = window / 2;
    let scale = half.max(1) as f64;
    // Fitted value at offset k within the window is a fixed linear
    // combination of the window samples: row 0 of the pseudo-inverse.
    let weights: Vec<Vec<f64>> = (0..window)
        .map(|k| {
            let design = DMatrix::from_fn(window, order + 1, |r, c| ((r as f64 - k as f64) / scale).powi(c as i32));
            let pinv = design.pseudo_inverse(1e-12).expect("pseudo-inverse of a Vandermonde block");
            pinv.row(0).iter().copied().collect()
        })
        .collect();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half).min(n - window);
            weights[i - lo].iter().zip(&y[lo..lo + window]).map(|(w, v)| w * v).sum()
        })
        .collect()
}

/// One-sided Wilcoxon rank-sum test that `a` tends to be smaller than `b`,
/// by the normal approximation with tie and continuity corrections.
pub fn rank_sum_less(a: &[f64], b: &[f64]) -> f64 {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let mut all: Vec<(f64, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut rank_a = 0.0;
    let mut ties = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        rank_a += rank * all[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let u = rank_a - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;
    let total = n1 + n2;
    let var = n1 * n2 / 12.0 * (total + 1.0 - ties / (total * (total - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = (u - mean + 0.5) / var.sqrt();
    Normal::new(0.0, 1.0).expect("standard normal").cdf(z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub runs: usize,
    pub mean: f64,
    pub sd: f64,
    /// One-sided rank-sum p-value that the best method beats this one;
    /// absent on the best row.
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Sorted ascending by mean terminal cost.
    pub rows: Vec<ReportRow>,
    /// The best method, when it is strictly cheaper than and significantly
    /// better than every other method.
    pub winner: Option<String>,
}

impl Report {
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<20} {:>5} {:>12} {:>12} {:>10}\n", "method", "runs", "mean", "sd", "p");
        for r in &self.rows {
            let p = r.p_value.map_or("-".to_string(), |p| format!("{p:.3e}"));
            s += &format!("{:<20} {:>5} {:>12.4} {:>12.4} {:>10}\n", r.method, r.runs, r.mean, r.sd, p);
        }
        s += &format!("winner: {}\n", self.winner.as_deref().unwrap_or("none"));
        s
    }
}

/// Terminal smoothed cost of one cost curve.
pub fn terminal_cost(costs: &[f64], settings: &ReportSection) -> f64 {
    let smooth = savitzky_golay(costs, settings.smoothing_window, settings.smoothing_order);
    let k = settings.terminal_window.min(smooth.len()).max(1);
    smooth[smooth.len().saturating_sub(k)..].iter().sum::<f64>() / k as f64
}

/// Compares methods by the mean and spread of per-run terminal smoothed
/// costs. Every run must have the same episode budget.
pub fn compare_report(metrics: &[MetricsRow], settings: &ReportSection) -> Result<Report> {
    let mut curves: BTreeMap<(String, u64), Vec<(usize, f64)>> = BTreeMap::new();
    for r in metrics {
        curves.entry((r.method.clone(), r.seed)).or_default().push((r.episode, r.total_cost));
    }
    let mut budget = None;
    let mut per_method: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ((method, _), mut curve) in curves {
        curve.sort_by_key(|c| c.0);
        if *budget.get_or_insert(curve.len()) != curve.len() {
            return Err(HarnessError::usage("runs have different episode budgets"));
        }
        let costs: Vec<f64> = curve.iter().map(|c| c.1).collect();
        per_method.entry(method).or_default().push(terminal_cost(&costs, settings));
    }
    if per_method.len() < 2 {
        return Err(HarnessError::usage("a comparison needs at least two methods"));
    }
    let mut rows: Vec<ReportRow> = per_method
        .iter()
        .map(|(method, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
            ReportRow { method: method.clone(), runs: v.len(), mean, sd, p_value: None }
        })
        .collect();
    rows.sort_by(|a, b| a.mean.total_cmp(&b.mean).then(a.method.cmp(&b.method)));
    let best = &per_method[&rows[0].method];
    for row in rows.iter_mut().skip(1) {
        row.p_value = Some(rank_sum_less(best, &per_method[&row.method]));
    }
    let strictly_best = rows[1..].iter().all(|r| r.mean > rows[0].mean);
    let significant = rows[1..].iter().all(|r| r.p_value.is_some_and(|p| p < settings.alpha));
    let winner = (strictly_best && significant).then(|| rows[0].method.clone());
    Ok(Report { rows, winner })
}

/// Mean smoothed cost per episode for each method, in method order.
pub fn mean_curves(metrics: &[MetricsRow], settings: &ReportSection) -> Vec<(String, Vec<f64>)> {
    let mut curves: BTreeMap<String, BTreeMap<u64, Vec<(usize, f64)>>> = BTreeMap::new();
    for r in metrics {
        curves.entry(r.method.clone()).or_default().entry(r.seed).or_default().push((r.episode, r.total_cost));
    }
    curves
        .into_iter()
        .map(|(method, seeds)| {
            let mut sum: Vec<f64> = Vec::new();
            let runs = seeds.len() as f64;
            for (_, mut curve) in seeds {
                curve.sort_by_key(|c| c.0);
                let costs: Vec<f64> = curve.iter().map(|c| c.1).collect();
                let smooth = savitzky_golay(&costs, settings.smoothing_window, settings.smoothing_order);
                if sum.len() < smooth.len() {
                    sum.resize(smooth.len(), 0.0);
                }
                for (s, v) in sum.iter_mut().zip(smooth) {
                    *s += v;
                }
            }
            (method, sum.into_iter().map(|s| s / runs).collect())
        })
        .collect()
}
