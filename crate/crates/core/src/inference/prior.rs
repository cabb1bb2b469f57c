use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surrogate::{gauss_legendre_rule, Bounds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    #[default]
    Uniform,
    /// Normal density truncated to `[lo, hi]`.
    Gaussian,
}

/// Prior for one parameter. `mean` and `sd` are used by the Gaussian form
/// only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorEntry {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub dist: Distribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
}

impl PriorEntry {
    pub fn uniform(name: &str, lo: f64, hi: f64) -> Self {
        PriorEntry {
            name: name.to_string(),
            lo,
            hi,
            dist: Distribution::Uniform,
            mean: None,
            sd: None,
        }
    }

    pub fn gaussian(name: &str, lo: f64, hi: f64, mean: f64, sd: f64) -> Self {
        PriorEntry {
            name: name.to_string(),
            lo,
            hi,
            dist: Distribution::Gaussian,
            mean: Some(mean),
            sd: Some(sd),
        }
    }

    fn gaussian_params(&self) -> (f64, f64) {
        (self.mean.unwrap_or(0.0), self.sd.unwrap_or(1.0))
    }
}

/// Independent per-parameter priors; the product of the entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PriorEntry>", into = "Vec<PriorEntry>")]
pub struct PriorSpec {
    entries: Vec<PriorEntry>,
    bounds: Bounds,
}

impl TryFrom<Vec<PriorEntry>> for PriorSpec {
    type Error = Error;

    fn try_from(entries: Vec<PriorEntry>) -> Result<Self> {
        PriorSpec::new(entries)
    }
}

impl From<PriorSpec> for Vec<PriorEntry> {
    fn from(p: PriorSpec) -> Self {
        p.entries
    }
}

impl PriorSpec {
    pub fn new(entries: Vec<PriorEntry>) -> Result<Self> {
        for (k, e) in entries.iter().enumerate() {
            let path = |f: &str| format!("prior[{k}].{f}");
            if !(e.lo.is_finite() && e.hi.is_finite() && e.lo < e.hi) {
                return Err(Error::config(path("lo"), format!("need finite lo < hi, got [{}, {}]", e.lo, e.hi)));
            }
            if entries[..k].iter().any(|o| o.name == e.name) {
                return Err(Error::config(path("name"), format!("duplicate parameter `{}`", e.name)));
            }
            match e.dist {
                Distribution::Uniform => {
                    if e.mean.is_some() || e.sd.is_some() {
                        return Err(Error::config(path("dist"), "uniform prior takes no mean or sd"));
                    }
                }
                Distribution::Gaussian => {
                    let mean = e.mean.ok_or_else(|| Error::config(path("mean"), "required for a gaussian prior"))?;
                    let sd = e.sd.ok_or_else(|| Error::config(path("sd"), "required for a gaussian prior"))?;
                    if !mean.is_finite() {
                        return Err(Error::config(path("mean"), "must be finite"));
                    }
                    if !(sd.is_finite() && sd > 0.0) {
                        return Err(Error::config(path("sd"), "must be > 0"));
                    }
                }
            }
        }
        let bounds = Bounds::new(
            entries.iter().map(|e| e.lo).collect(),
            entries.iter().map(|e| e.hi).collect(),
        )
        .map_err(|_| Error::config("prior", "needs at least one parameter"))?;
        Ok(PriorSpec { entries, bounds })
    }

    pub fn entries(&self) -> &[PriorEntry] {
        &self.entries
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Mean of each (truncated) marginal, used as the default chain start.
    pub fn mean(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| match e.dist {
                Distribution::Uniform => 0.5 * (e.lo + e.hi),
                Distribution::Gaussian => {
                    let (mu, sd) = e.gaussian_params();
                    let (x, w) = gauss_legendre_rule(64).expect("n >= 1");
                    let half = 0.5 * (e.hi - e.lo);
                    let mid = 0.5 * (e.hi + e.lo);
                    let (mut num, mut den) = (0.0, 0.0);
                    for (xi, wi) in x.iter().zip(&w) {
                        let m = mid + half * xi;
                        let z = (m - mu) / sd;
                        let dens = (-0.5 * z * z).exp();
                        num += wi * m * dens;
                        den += wi * dens;
                    }
                    if den > 0.0 {
                        (num / den).clamp(e.lo, e.hi)
                    } else {
                        // box far in a tail: mass piles up at the nearer edge
                        if mu < e.lo {
                            e.lo
                        } else {
                            e.hi
                        }
                    }
                }
            })
            .collect()
    }
}

/// Log prior density up to a constant; `-inf` outside the box.
pub fn log_prior(prior: &PriorSpec, m: &[f64]) -> f64 {
    if m.len() != prior.dim() || !prior.bounds.contains(m) {
        return f64::NEG_INFINITY;
    }
    prior
        .entries
        .iter()
        .zip(m)
        .map(|(e, &v)| match e.dist {
            Distribution::Uniform => 0.0,
            Distribution::Gaussian => {
                let (mu, sd) = e.gaussian_params();
                let z = (v - mu) / sd;
                -0.5 * z * z
            }
        })
        .sum()
}

/// Gradient of [`log_prior`] inside the box.
pub fn grad_log_prior(prior: &PriorSpec, m: &[f64]) -> Vec<f64> {
    prior
        .entries
        .iter()
        .zip(m)
        .map(|(e, &v)| match e.dist {
            Distribution::Uniform => 0.0,
            Distribution::Gaussian => {
                let (mu, sd) = e.gaussian_params();
                -(v - mu) / (sd * sd)
            }
        })
        .collect()
}
