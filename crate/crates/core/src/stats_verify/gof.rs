//! One- and two-sample goodness-of-fit tests.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// Minimal expected count per chi-square cell.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub statistic: f64,
    pub p_value: f64,
    pub sample_size: usize,
    /// Chi-square cells after merging, or the number of KS points.
    pub cells_or_points: usize,
}

impl GofReport {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value > level
    }
}

/// Per-test level for `tests` simultaneous tests at family level `alpha`.
pub fn bonferroni_level(alpha: f64, tests: usize) -> f64 {
    alpha / tests.max(1) as f64
}

/// Upper tail of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_sf(statistic: f64, df: usize) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    if !statistic.is_finite() {
        return 0.0;
    }
    gamma_ur(df as f64 / 2.0, statistic / 2.0).clamp(0.0, 1.0)
}

/// Asymptotic Kolmogorov distribution tail `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Kolmogorov-Smirnov statistic against a continuous cdf, with the
/// asymptotic p-value (Stephens' small-sample correction).
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<GofReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max(f - k as f64 / n).max((k + 1) as f64 / n - f);
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    Ok(GofReport {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
        sample_size: x.len(),
        cells_or_points: x.len(),
    })
}

/// Pearson test of observed counts against cell probabilities. Cells with
/// expected count below 5, unlisted outcomes and the missing probability mass
/// are pooled into one tail cell.
pub fn chi_square_table<K: Hash + Eq + Ord + Clone>(
    observed: &HashMap<K, u64>,
    expected: &HashMap<K, f64>,
    n: u64,
) -> Result<GofReport> {
    let nf = n as f64;
    let mut keys: Vec<&K> = expected.keys().collect();
    keys.sort();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut kept_p, mut kept_obs) = (0.0, 0u64);
    for k in keys {
        let p = expected[k];
        if nf * p >= MIN_EXPECTED {
            let o = observed.get(k).copied().unwrap_or(0);
            cells.push((o as f64, nf * p));
            kept_p += p;
            kept_obs += o;
        }
    }
    let tail_obs = n.saturating_sub(kept_obs) as f64;
    let tail_exp = (nf * (1.0 - kept_p)).max(0.0);
    if tail_exp >= MIN_EXPECTED {
        cells.push((tail_obs, tail_exp));
    } else if tail_obs > 0.0 || tail_exp > 0.0 {
        match cells.iter_mut().min_by(|a, b| a.1.total_cmp(&b.1)) {
            Some(c) => {
                c.0 += tail_obs;
                c.1 += tail_exp;
            }
            None => return Err(Error::DegenerateTable),
        }
    }
    if cells.len() < 2 {
        return Err(Error::DegenerateTable);
    }
    let statistic: f64 = cells.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    Ok(GofReport {
        statistic,
        p_value: chi_square_sf(statistic, cells.len() - 1),
        sample_size: n as usize,
        cells_or_points: cells.len(),
    })
}

/// Homogeneity test between two samples of a discrete outcome.
pub fn chi_square_two_sample<K: Hash + Eq + Ord + Clone>(a: &HashMap<K, u64>, b: &HashMap<K, u64>) -> Result<GofReport> {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    if na == 0 || nb == 0 {
        return Err(Error::DegenerateTable);
    }
    let total = (na + nb) as f64;
    let (fa, fb) = (na as f64 / total, nb as f64 / total);
    let mut keys: Vec<&K> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut cells: Vec<(u64, u64)> = Vec::new();
    let mut tail = (0u64, 0u64);
    for k in keys {
        let ca = a.get(k).copied().unwrap_or(0);
        let cb = b.get(k).copied().unwrap_or(0);
        let pooled = (ca + cb) as f64;
        if pooled * fa.min(fb) >= MIN_EXPECTED {
            cells.push((ca, cb));
        } else {
            tail.0 += ca;
            tail.1 += cb;
        }
    }
    if ((tail.0 + tail.1) as f64) * fa.min(fb) >= MIN_EXPECTED {
        cells.push(tail);
    } else if tail.0 + tail.1 > 0 {
        match cells.iter_mut().min_by_key(|c| c.0 + c.1) {
            Some(c) => {
                c.0 += tail.0;
                c.1 += tail.1;
            }
            None => return Err(Error::DegenerateTable),
        }
    }
    if cells.len() < 2 {
        return Err(Error::DegenerateTable);
    }
    let mut statistic = 0.0;
    for &(ca, cb) in &cells {
        let pooled = (ca + cb) as f64;
        let (ea, eb) = (pooled * fa, pooled * fb);
        statistic += (ca as f64 - ea).powi(2) / ea + (cb as f64 - eb).powi(2) / eb;
    }
    Ok(GofReport {
        statistic,
        p_value: chi_square_sf(statistic, cells.len() - 1),
        sample_size: (na + nb) as usize,
        cells_or_points: cells.len(),
    })
}

/// Independence test for paired discrete observations. Categories holding
/// less than 2% of the sample are pooled per margin.
pub fn chi_square_independence<A, B>(pairs: &[(A, B)]) -> Result<GofReport>
where
    A: Hash + Eq + Ord + Clone,
    B: Hash + Eq + Ord + Clone,
{
    let n = pairs.len();
    let rows = pooled_categories(pairs.iter().map(|p| &p.0), n);
    let cols = pooled_categories(pairs.iter().map(|p| &p.1), n);
    let (nr, nc) = (rows.values().max().map_or(0, |&m| m + 1), cols.values().max().map_or(0, |&m| m + 1));
    if nr < 2 || nc < 2 {
        return Err(Error::DegenerateTable);
    }
    let mut table = vec![vec![0u64; nc]; nr];
    for (x, y) in pairs {
        table[rows[x]][cols[y]] += 1;
    }
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> = (0..nc).map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64).collect();
    let nf = n as f64;
    let mut statistic = 0.0;
    for i in 0..nr {
        for j in 0..nc {
            let e = row_sums[i] * col_sums[j] / nf;
            statistic += (table[i][j] as f64 - e).powi(2) / e;
        }
    }
    Ok(GofReport {
        statistic,
        p_value: chi_square_sf(statistic, (nr - 1) * (nc - 1)),
        sample_size: n,
        cells_or_points: nr * nc,
    })
}

/// Category -> cell index, pooling rare categories into a shared last cell.
fn pooled_categories<'a, K: Hash + Eq + Ord + Clone + 'a>(
    values: impl Iterator<Item = &'a K>,
    n: usize,
) -> HashMap<K, usize> {
    let mut counts: HashMap<&K, usize> = HashMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let threshold = (0.02 * n as f64).max(MIN_EXPECTED);
    let mut sorted: Vec<(&K, usize)> = counts.into_iter().collect();
    sorted.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let kept = sorted.iter().take_while(|&&(_, c)| c as f64 >= threshold).count().min(10);
    let rare: usize = sorted[kept..].iter().map(|&(_, c)| c).sum();
    let pool = if kept == 0 {
        0
    } else if rare as f64 >= threshold || kept == 1 {
        kept
    } else {
        kept - 1
    };
    sorted
        .iter()
        .enumerate()
        .map(|(idx, &(k, _))| (k.clone(), if idx < kept { idx.min(pool) } else { pool }))
        .collect()
}

/// Equal-width histogram over `[min, max]` of the data: `(bin centre, count)`.
pub fn histogram(x: &[f64], bins: usize) -> Vec<(f64, u64)> {
    if x.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0u64; bins];
    for &v in x {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts.into_iter().enumerate().map(|(k, c)| (lo + (k as f64 + 0.5) * width, c)).collect()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn standard_error(x: &[f64]) -> f64 {
    (variance(x) / x.len() as f64).sqrt()
}

/// Pearson correlation coefficient.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
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
