use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::posterior::Target;
use crate::error::{Error, Result};
use crate::surrogate::{affine_from_reference, affine_to_reference, Bounds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Proposal {
    /// Langevin drift plus Gaussian noise.
    #[default]
    Mala,
    RandomWalk,
}

impl Proposal {
    /// Acceptance rate the burn-in tuner aims for.
    pub fn target_acceptance(self) -> f64 {
        match self {
            Proposal::Mala => 0.574,
            Proposal::RandomWalk => 0.234,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    /// Total steps per chain, burn-in included.
    pub n_steps: usize,
    /// Defaults to `n_steps / 5`.
    pub burn_in: Option<usize>,
    /// Step length in reference coordinates.
    pub epsilon: f64,
    pub proposal: Proposal,
    pub thinning: usize,
    pub seed: u64,
    /// Start point in physical units; the prior mean when absent.
    pub init: Option<Vec<f64>>,
    /// Tune `epsilon` during burn-in, then freeze it.
    pub adapt_epsilon: bool,
    /// Drop the Langevin proposal-density ratio from the acceptance test.
    pub paper_exact: bool,
    pub n_chains: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_steps: 100_000,
            burn_in: None,
            epsilon: 0.05,
            proposal: Proposal::Mala,
            thinning: 1,
            seed: 0,
            init: None,
            adapt_epsilon: true,
            paper_exact: false,
            n_chains: 1,
        }
    }
}

impl ChainConfig {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.n_steps / 5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::config("chain.n_steps", "must be >= 1"));
        }
        if self.burn_in() >= self.n_steps {
            return Err(Error::config("chain.burn_in", "must be smaller than n_steps"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::config("chain.epsilon", "must be > 0"));
        }
        if self.thinning == 0 {
            return Err(Error::config("chain.thinning", "must be >= 1"));
        }
        if self.n_chains == 0 {
            return Err(Error::config("chain.n_chains", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainResult {
    /// Retained samples in physical units, chains concatenated.
    pub samples: Vec<Vec<f64>>,
    pub log_post_trace: Vec<f64>,
    /// Whether the step that produced each retained sample was accepted.
    pub accepted: Vec<bool>,
    /// Post-burn-in acceptance fraction over all chains.
    pub acceptance_rate: f64,
    /// Frozen step length of each chain.
    pub epsilon: Vec<f64>,
    pub seed: u64,
    pub config: ChainConfig,
}

/// Candidate in reference coordinates.
///
/// MALA: `x + (ε²/2)·g + ε·ξ`; random walk: `x + ε·ξ`.
pub fn propose<R: Rng>(x: &[f64], grad: Option<&[f64]>, epsilon: f64, proposal: Proposal, rng: &mut R) -> Vec<f64> {
    let drift = match (proposal, grad) {
        (Proposal::Mala, Some(g)) => g.iter().map(|g| 0.5 * epsilon * epsilon * g).collect(),
        _ => vec![0.0; x.len()],
    };
    x.iter()
        .zip(drift)
        .map(|(x, d)| {
            let xi: f64 = rng.sample(StandardNormal);
            x + d + epsilon * xi
        })
        .collect()
}

/// Metropolis–Hastings test: accept iff `u < min(1, exp(Δ + correction))`.
pub fn accept<R: Rng>(logpost_k: f64, logpost_cand: f64, correction: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    u < acceptance_probability(logpost_k, logpost_cand, correction)
}

fn acceptance_probability(logpost_k: f64, logpost_cand: f64, correction: f64) -> f64 {
    let log_alpha = logpost_cand - logpost_k + correction;
    if log_alpha.is_nan() {
        0.0
    } else {
        log_alpha.min(0.0).exp()
    }
}

/// `log q(from | to) − log q(to | from)` for the Langevin proposal.
fn langevin_correction(x: &[f64], gx: &[f64], y: &[f64], gy: &[f64], epsilon: f64) -> f64 {
    let h = 0.5 * epsilon * epsilon;
    let log_q = |to: &[f64], from: &[f64], g: &[f64]| -> f64 {
        -to.iter()
            .zip(from.iter().zip(g))
            .map(|(t, (f, g))| (t - f - h * g).powi(2))
            .sum::<f64>()
            / (2.0 * epsilon * epsilon)
    };
    log_q(x, y, gy) - log_q(y, x, gx)
}

struct Walker<'a, T: Target> {
    target: &'a T,
    bounds: &'a Bounds,
    scale: Vec<f64>,
    need_grad: bool,
}

impl<'a, T: Target> Walker<'a, T> {
    /// Log density and reference-coordinate gradient at reference point `x`.
    fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let m = affine_from_reference(self.bounds, x);
        if self.need_grad {
            let (lp, g) = self.target.log_density_and_grad(&m)?;
            // dm/dx = (hi − lo)/2 = 1/scale
            Ok((lp, g.iter().zip(&self.scale).map(|(g, s)| g / s).collect()))
        } else {
            Ok((self.target.log_density(&m)?, Vec::new()))
        }
    }
}

struct Single {
    samples: Vec<Vec<f64>>,
    trace: Vec<f64>,
    accepted: Vec<bool>,
    n_accepted: usize,
    n_counted: usize,
    epsilon: f64,
}

fn run_single<T: Target>(target: &T, cfg: &ChainConfig, stream: u64) -> Result<Single> {
    let bounds = target.bounds();
    let need_grad = cfg.proposal == Proposal::Mala;
    if need_grad && !target.has_gradient() {
        return Err(Error::UnsupportedGradient);
    }
    let walker = Walker {
        target,
        bounds,
        scale: bounds.scale(),
        need_grad,
    };
    let init = cfg.init.clone().unwrap_or_else(|| target.init());
    if init.len() != bounds.dim() {
        return Err(Error::config(
            "chain.init",
            format!("expected {} values, got {}", bounds.dim(), init.len()),
        ));
    }
    let mut x = affine_to_reference(bounds, &init).map_err(|e| Error::config("chain.init", e.to_string()))?;
    if need_grad && !bounds.contains_strictly(&init) {
        return Err(Error::config("chain.init", "MALA needs a start strictly inside the prior box"));
    }
    let (mut lp, mut g) = walker.eval(&x)?;
    if !lp.is_finite() {
        return Err(Error::config("chain.init", format!("log posterior at the start is {lp}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let burn_in = cfg.burn_in();
    let target_rate = cfg.proposal.target_acceptance();
    let mut log_eps = cfg.epsilon.ln();
    let retained = (cfg.n_steps - burn_in).div_ceil(cfg.thinning);
    let mut out = Single {
        samples: Vec::with_capacity(retained),
        trace: Vec::with_capacity(retained),
        accepted: Vec::with_capacity(retained),
        n_accepted: 0,
        n_counted: 0,
        epsilon: cfg.epsilon,
    };

    for k in 0..cfg.n_steps {
        let eps = log_eps.exp();
        let cand = propose(&x, need_grad.then_some(g.as_slice()), eps, cfg.proposal, &mut rng);
        let inside = if need_grad {
            cand.iter().all(|c| c.abs() < 1.0)
        } else {
            cand.iter().all(|c| c.abs() <= 1.0)
        };
        // the uniform draw is consumed either way so the random stream does
        // not depend on where candidates land
        let u: f64 = rng.random();
        let (alpha, next) = if inside {
            let (lp_c, g_c) = walker.eval(&cand)?;
            let corr = if need_grad && !cfg.paper_exact && lp_c.is_finite() {
                langevin_correction(&x, &g, &cand, &g_c, eps)
            } else {
                0.0
            };
            (acceptance_probability(lp, lp_c, corr), Some((lp_c, g_c)))
        } else {
            (0.0, None)
        };
        let took = u < alpha;
        if took {
            let (lp_c, g_c) = next.expect("accepted candidates were evaluated");
            x = cand;
            lp = lp_c;
            g = g_c;
        }

        if k < burn_in {
            if cfg.adapt_epsilon {
                let gain = 1.0 / ((k + 1) as f64).powf(0.6);
                log_eps = (log_eps + gain * (alpha - target_rate)).clamp(1e-6f64.ln(), 4.0f64.ln());
            }
            continue;
        }
        out.n_counted += 1;
        out.n_accepted += took as usize;
        if (k - burn_in) % cfg.thinning == 0 {
            out.samples.push(affine_from_reference(bounds, &x));
            out.trace.push(lp);
            out.accepted.push(took);
        }
    }
    out.epsilon = log_eps.exp();
    Ok(out)
}

/// Runs `cfg.n_chains` chains (stream `c` for chain `c`, concurrently when
/// more than one) and concatenates their post-burn-in samples in chain order.
pub fn run_chain<T: Target>(target: &T, cfg: &ChainConfig) -> Result<ChainResult> {
    cfg.validate()?;
    let runs: Vec<Single> = if cfg.n_chains == 1 {
        vec![run_single(target, cfg, 0)?]
    } else {
        (0..cfg.n_chains as u64)
            .into_par_iter()
            .map(|c| run_single(target, cfg, c))
            .collect::<Result<_>>()?
    };
    let mut res = ChainResult {
        samples: Vec::new(),
        log_post_trace: Vec::new(),
        accepted: Vec::new(),
        acceptance_rate: 0.0,
        epsilon: Vec::new(),
        seed: cfg.seed,
        config: cfg.clone(),
    };
    let (mut acc, mut total) = (0usize, 0usize);
    for r in runs {
        res.samples.extend(r.samples);
        res.log_post_trace.extend(r.trace);
        res.accepted.extend(r.accepted);
        res.epsilon.push(r.epsilon);
        acc += r.n_accepted;
        total += r.n_counted;
    }
    res.acceptance_rate = if total > 0 { acc as f64 / total as f64 } else { 0.0 };
    Ok(res)
}
