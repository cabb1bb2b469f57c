use std::sync::Arc;

use super::prior::{grad_log_prior, log_prior, PriorSpec};
use crate::error::{Error, Result};
use crate::surrogate::{eval_surrogate, surrogate_vjp, Bounds, SurrogateModel};

pub type ForwardFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// Parameter-to-observable map used by the likelihood.
#[derive(Clone)]
pub enum Forward {
    Surrogate(Arc<SurrogateModel>),
    /// Direct simulation; no gradient is available.
    Direct { eval: ForwardFn, n_outputs: usize },
}

impl Forward {
    pub fn eval(&self, m: &[f64]) -> Result<Vec<f64>> {
        match self {
            Forward::Surrogate(s) => eval_surrogate(s, m),
            Forward::Direct { eval, .. } => eval(m),
        }
    }

    pub fn n_outputs(&self) -> usize {
        match self {
            Forward::Surrogate(s) => s.n_outputs(),
            Forward::Direct { n_outputs, .. } => *n_outputs,
        }
    }

    pub fn has_gradient(&self) -> bool {
        matches!(self, Forward::Surrogate(_))
    }
}

impl std::fmt::Debug for Forward {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Forward::Surrogate(s) => write!(f, "Surrogate({} outputs)", s.n_outputs()),
            Forward::Direct { n_outputs, .. } => write!(f, "Direct({n_outputs} outputs)"),
        }
    }
}

/// `-½ Σ ((d_i − f_i)/σ_i)²`.
pub fn log_likelihood(response: &[f64], data: &[f64], sigma: &[f64]) -> Result<f64> {
    if response.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: data.len(),
            got: response.len(),
        });
    }
    if sigma.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: data.len(),
            got: sigma.len(),
        });
    }
    Ok(-0.5
        * response
            .iter()
            .zip(data.iter().zip(sigma))
            .map(|(f, (d, s))| {
                let z = (d - f) / s;
                z * z
            })
            .sum::<f64>())
}

#[derive(Debug, Clone)]
pub struct PosteriorProblem {
    forward: Forward,
    data: Vec<f64>,
    sigma: Vec<f64>,
    prior: PriorSpec,
}

impl PosteriorProblem {
    pub fn new(forward: Forward, data: Vec<f64>, sigma: Vec<f64>, prior: PriorSpec) -> Result<Self> {
        if forward.n_outputs() != data.len() {
            return Err(Error::LengthMismatch {
                expected: data.len(),
                got: forward.n_outputs(),
            });
        }
        if sigma.len() != data.len() {
            return Err(Error::LengthMismatch {
                expected: data.len(),
                got: sigma.len(),
            });
        }
        if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::config("noise", format!("every sigma must be > 0, got {s}")));
        }
        if let Some(d) = data.iter().find(|d| !d.is_finite()) {
            return Err(Error::data(None, format!("non-finite observation {d}")));
        }
        if let Forward::Surrogate(s) = &forward {
            if s.dimension() != prior.dim() {
                return Err(Error::config(
                    "prior",
                    format!("{} parameters but the surrogate has {}", prior.dim(), s.dimension()),
                ));
            }
            let (sb, pb) = (s.bounds(), prior.bounds());
            for k in 0..pb.dim() {
                if pb.lo()[k] < sb.lo()[k] || pb.hi()[k] > sb.hi()[k] {
                    return Err(Error::config(
                        format!("prior[{k}]"),
                        format!(
                            "box [{}, {}] exceeds the surrogate domain [{}, {}]",
                            pb.lo()[k],
                            pb.hi()[k],
                            sb.lo()[k],
                            sb.hi()[k]
                        ),
                    ));
                }
            }
        }
        Ok(PosteriorProblem {
            forward,
            data,
            sigma,
            prior,
        })
    }

    pub fn forward(&self) -> &Forward {
        &self.forward
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }
}

/// Log posterior up to a constant. Points outside the prior box return
/// `-inf` without touching the forward model.
pub fn log_posterior(prob: &PosteriorProblem, m: &[f64]) -> Result<f64> {
    let lp = log_prior(&prob.prior, m);
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    let f = prob.forward.eval(m)?;
    Ok(log_likelihood(&f, &prob.data, &prob.sigma)? + lp)
}

/// Log posterior and its gradient at an interior point.
pub fn log_posterior_and_grad(prob: &PosteriorProblem, m: &[f64]) -> Result<(f64, Vec<f64>)> {
    let Forward::Surrogate(model) = &prob.forward else {
        return Err(Error::UnsupportedGradient);
    };
    let lp = log_prior(&prob.prior, m);
    if lp == f64::NEG_INFINITY {
        return Err(Error::Domain(format!(
            "gradient requested outside the prior box (dimension {}) at {m:?}",
            out_of_box_dim(prob.prior.bounds(), m)
        )));
    }
    let f = eval_surrogate(model, m)?;
    let w: Vec<f64> = f
        .iter()
        .zip(prob.data.iter().zip(&prob.sigma))
        .map(|(f, (d, s))| (d - f) / (s * s))
        .collect();
    let mut grad = surrogate_vjp(model, m, &w)?;
    for (g, p) in grad.iter_mut().zip(grad_log_prior(&prob.prior, m)) {
        *g += p;
    }
    Ok((log_likelihood(&f, &prob.data, &prob.sigma)? + lp, grad))
}

/// `Jᵀ (d − f)/σ² + ∇ log prior`.
pub fn grad_log_posterior(prob: &PosteriorProblem, m: &[f64]) -> Result<Vec<f64>> {
    log_posterior_and_grad(prob, m).map(|(_, g)| g)
}

fn out_of_box_dim(b: &Bounds, m: &[f64]) -> usize {
    m.iter()
        .zip(b.lo().iter().zip(b.hi()))
        .position(|(v, (l, h))| !(v >= l && v <= h))
        .unwrap_or(0)
}

/// A log density the sampler can walk on, in physical coordinates.
pub trait Target: Sync {
    fn bounds(&self) -> &Bounds;

    /// Default chain start.
    fn init(&self) -> Vec<f64> {
        self.bounds().midpoint()
    }

    fn log_density(&self, m: &[f64]) -> Result<f64>;

    fn log_density_and_grad(&self, m: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn has_gradient(&self) -> bool;
}

impl Target for PosteriorProblem {
    fn bounds(&self) -> &Bounds {
        self.prior.bounds()
    }

    fn init(&self) -> Vec<f64> {
        self.prior.mean()
    }

    fn log_density(&self, m: &[f64]) -> Result<f64> {
        log_posterior(self, m)
    }

    fn log_density_and_grad(&self, m: &[f64]) -> Result<(f64, Vec<f64>)> {
        log_posterior_and_grad(self, m)
    }

    fn has_gradient(&self) -> bool {
        self.forward.has_gradient()
    }
}

/// A target given by closures; `-inf` outside `bounds` is applied here.
pub struct AnalyticTarget<F, G> {
    pub bounds: Bounds,
    pub log_density: F,
    pub grad: G,
}

impl<F, G> Target for AnalyticTarget<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn log_density(&self, m: &[f64]) -> Result<f64> {
        if self.bounds.contains(m) {
            Ok((self.log_density)(m))
        } else {
            Ok(f64::NEG_INFINITY)
        }
    }

    fn log_density_and_grad(&self, m: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.log_density(m)?, (self.grad)(m)))
    }

    fn has_gradient(&self) -> bool {
        true
    }
}
