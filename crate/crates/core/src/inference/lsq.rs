use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::posterior::{Forward, PosteriorProblem};
use crate::error::{Error, Result};
use crate::surrogate::{affine_from_reference, affine_to_reference, grad_surrogate, Bounds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LsConfig {
    pub max_iter: usize,
    /// Stop when an accepted step lowers the cost by less than this
    /// fraction.
    pub rel_tol: f64,
}

impl Default for LsConfig {
    fn default() -> Self {
        LsConfig {
            max_iter: 500,
            rel_tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsResult {
    pub params: Vec<f64>,
    /// `sqrt(mean((d − f)²))`.
    pub rmse: f64,
    pub iterations: usize,
    pub converged: bool,
}

// interior margin in reference coordinates; gradients are undefined on the
// faces of the box
const MARGIN: f64 = 1e-9;

fn clamp_interior(x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = v.clamp(-1.0 + MARGIN, 1.0 - MARGIN);
    }
}

/// Residuals `d − f(m)` and the Jacobian of `f` with respect to reference
/// coordinates.
fn linearize(prob: &PosteriorProblem, bounds: &Bounds, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let m = affine_from_reference(bounds, x);
    let f = prob.forward().eval(&m)?;
    let r = DVector::from_iterator(f.len(), prob.data().iter().zip(&f).map(|(d, f)| d - f));
    let dm_dx: Vec<f64> = bounds.scale().iter().map(|s| 1.0 / s).collect();
    let jac = match prob.forward() {
        Forward::Surrogate(model) => {
            let mut j = grad_surrogate(model, &m)?;
            for (c, s) in dm_dx.iter().enumerate() {
                j.column_mut(c).scale_mut(*s);
            }
            j
        }
        Forward::Direct { .. } => {
            // central differences in reference coordinates, one-sided at
            // the margin
            let h = 1e-6;
            let mut j = DMatrix::zeros(f.len(), x.len());
            for c in 0..x.len() {
                let (mut up, mut dn) = (x.to_vec(), x.to_vec());
                up[c] = (x[c] + h).min(1.0);
                dn[c] = (x[c] - h).max(-1.0);
                let fu = prob.forward().eval(&affine_from_reference(bounds, &up))?;
                let fd = prob.forward().eval(&affine_from_reference(bounds, &dn))?;
                let width = up[c] - dn[c];
                for o in 0..f.len() {
                    j[(o, c)] = (fu[o] - fd[o]) / width;
                }
            }
            j
        }
    };
    Ok((r, jac))
}

fn cost_at(prob: &PosteriorProblem, bounds: &Bounds, x: &[f64]) -> Result<f64> {
    let f = prob.forward().eval(&affine_from_reference(bounds, x))?;
    Ok(prob.data().iter().zip(&f).map(|(d, f)| (d - f).powi(2)).sum())
}

/// Box-constrained Levenberg–Marquardt on `Σ (d_i − f_i(m))²` over the prior
/// box. Steps are projected back into the box. When `max_iter` runs out the
/// best point so far is returned with `converged = false`.
pub fn least_squares_fit(prob: &PosteriorProblem, init: &[f64], cfg: &LsConfig) -> Result<LsResult> {
    let bounds = prob.prior().bounds();
    let mut x = affine_to_reference(bounds, init).map_err(|e| Error::config("ls.init", e.to_string()))?;
    clamp_interior(&mut x);
    let n_obs = prob.data().len() as f64;
    let (mut r, mut jac) = linearize(prob, bounds, &x)?;
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = cost == 0.0;
    let mut iterations = 0;

    while !converged && iterations < cfg.max_iter {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        // coordinates pinned at a face with the descent direction pointing
        // out of the box stay fixed for this step
        let free: Vec<usize> = (0..x.len())
            .filter(|&k| !((x[k] >= 1.0 - MARGIN && jtr[k] > 0.0) || (x[k] <= -1.0 + MARGIN && jtr[k] < 0.0)))
            .collect();
        if free.is_empty() {
            converged = true;
            break;
        }
        let nf = free.len();
        let sub = DMatrix::from_fn(nf, nf, |i, j| jtj[(free[i], free[j])]);
        let rhs = DVector::from_fn(nf, |i, _| jtr[free[i]]);
        let diag_floor = sub.diagonal().max() * 1e-12;
        let mut a = sub.clone();
        for k in 0..nf {
            a[(k, k)] += lambda * sub[(k, k)].max(diag_floor);
        }
        let Some(step) = a.cholesky().map(|ch| ch.solve(&rhs)) else {
            lambda *= 10.0;
            continue;
        };
        let mut trial = x.clone();
        for (i, &k) in free.iter().enumerate() {
            trial[k] += step[i];
        }
        clamp_interior(&mut trial);
        let moved = trial.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let trial_cost = cost_at(prob, bounds, &trial)?;
        if trial_cost < cost {
            let drop = (cost - trial_cost) / cost;
            x = trial;
            (r, jac) = linearize(prob, bounds, &x)?;
            cost = r.norm_squared();
            lambda = (lambda / 3.0).max(1e-12);
            if drop < cfg.rel_tol || cost == 0.0 || moved < 1e-14 {
                converged = true;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e16 || moved < 1e-14 {
                // no descent left at machine precision
                converged = true;
            }
        }
    }
    Ok(LsResult {
        params: affine_from_reference(bounds, &x),
        rmse: (cost / n_obs).sqrt(),
        iterations,
        converged,
    })
}
