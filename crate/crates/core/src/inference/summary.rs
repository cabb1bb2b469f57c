use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub parameters: Vec<ParamSummary>,
    /// Pearson correlation; rows/columns with zero spread get 0 off the
    /// diagonal.
    pub correlation: Vec<Vec<f64>>,
}

impl PosteriorSummary {
    pub fn means(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.mean).collect()
    }
}

fn column(samples: &[Vec<f64>], dim: usize) -> Vec<f64> {
    samples.iter().map(|s| s[dim]).collect()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn posterior_summary(samples: &[Vec<f64>], names: &[String]) -> Result<PosteriorSummary> {
    if samples.len() < 2 {
        return Err(Error::Domain(format!("need >= 2 samples for a summary, got {}", samples.len())));
    }
    let d = names.len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(Error::LengthMismatch {
            expected: d,
            got: samples[0].len(),
        });
    }
    let n = samples.len() as f64;
    let cols: Vec<Vec<f64>> = (0..d).map(|k| column(samples, k)).collect();
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let centred: Vec<Vec<f64>> = cols
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|v| v - m).collect())
        .collect();
    let cov = |i: usize, j: usize| centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum::<f64>() / (n - 1.0);
    let sds: Vec<f64> = (0..d).map(|k| cov(k, k).sqrt()).collect();

    let parameters = (0..d)
        .map(|k| {
            let mut sorted = cols[k].clone();
            sorted.sort_by(f64::total_cmp);
            ParamSummary {
                name: names[k].clone(),
                mean: means[k],
                sd: sds[k],
                q05: quantile(&sorted, 0.05),
                q50: quantile(&sorted, 0.5),
                q95: quantile(&sorted, 0.95),
            }
        })
        .collect();
    let correlation = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    if i == j {
                        1.0
                    } else if sds[i] > 0.0 && sds[j] > 0.0 {
                        (cov(i, j) / (sds[i] * sds[j])).clamp(-1.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(PosteriorSummary { parameters, correlation })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub dim: usize,
    pub edges: Vec<f64>,
    /// Normalized so that `Σ density·width = 1`.
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub dims: [usize; 2],
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// `density[i][j]` for x-bin `i`, y-bin `j`.
    pub density: Vec<Vec<f64>>,
}

/// Equal-width edges spanning the data; a degenerate range is widened to a
/// unit-width window around the value.
fn edges(values: &[f64], n_bins: usize) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        let half = 0.5 * lo.abs().max(1.0);
        (lo - half, lo + half)
    };
    (0..=n_bins).map(|k| lo + (hi - lo) * k as f64 / n_bins as f64).collect()
}

fn bin_of(v: f64, edges: &[f64]) -> usize {
    let n = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[n]);
    (((v - lo) / (hi - lo) * n as f64) as usize).min(n - 1)
}

fn check_hist_args(samples: &[Vec<f64>], dims: &[usize], n_bins: usize) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Domain("histogram of an empty chain".into()));
    }
    if n_bins < 2 {
        return Err(Error::config("n_bins", "must be >= 2"));
    }
    for &d in dims {
        if d >= samples[0].len() {
            return Err(Error::config("dim", format!("{d} out of range")));
        }
    }
    Ok(())
}

pub fn marginal_density(samples: &[Vec<f64>], dim: usize, n_bins: usize) -> Result<Histogram> {
    check_hist_args(samples, &[dim], n_bins)?;
    let values = column(samples, dim);
    let edges = edges(&values, n_bins);
    let mut counts = vec![0usize; n_bins];
    for v in &values {
        counts[bin_of(*v, &edges)] += 1;
    }
    let n = values.len() as f64;
    let density = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, w)| c as f64 / (n * (w[1] - w[0])))
        .collect();
    Ok(Histogram { dim, edges, density })
}

pub fn marginal_density_2d(samples: &[Vec<f64>], dim_i: usize, dim_j: usize, n_bins: usize) -> Result<Histogram2d> {
    check_hist_args(samples, &[dim_i, dim_j], n_bins)?;
    let (xs, ys) = (column(samples, dim_i), column(samples, dim_j));
    let (x_edges, y_edges) = (edges(&xs, n_bins), edges(&ys, n_bins));
    let mut counts = vec![vec![0usize; n_bins]; n_bins];
    for (x, y) in xs.iter().zip(&ys) {
        counts[bin_of(*x, &x_edges)][bin_of(*y, &y_edges)] += 1;
    }
    let n = xs.len() as f64;
    let density = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &c)| {
                    let area = (x_edges[i + 1] - x_edges[i]) * (y_edges[j + 1] - y_edges[j]);
                    c as f64 / (n * area)
                })
                .collect()
        })
        .collect();
    Ok(Histogram2d {
        dims: [dim_i, dim_j],
        x_edges,
        y_edges,
        density,
    })
}

/// Effective sample size of one series by Geyer's initial positive sequence,
/// capped at the series length.
pub fn effective_sample_size_of(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return n as f64;
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let c: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let var = c.iter().map(|v| v * v).sum::<f64>() / nf;
    if !(var > 0.0) {
        return 1.0;
    }
    let rho = |lag: usize| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / (nf * var);

    // Γ_k = ρ_{2k} + ρ_{2k+1}, summed while positive and forced monotone
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let gamma = rho(2 * k) + rho(2 * k + 1);
        if gamma <= 0.0 {
            break;
        }
        let gamma = gamma.min(prev);
        sum += gamma;
        prev = gamma;
        k += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / nf);
    (nf / tau).min(nf)
}

pub fn effective_sample_size(samples: &[Vec<f64>], dim: usize) -> Result<f64> {
    if samples.len() < 10 {
        return Err(Error::Domain(format!("need >= 10 samples for an ESS, got {}", samples.len())));
    }
    Ok(effective_sample_size_of(&column(samples, dim)))
}
