use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::legendre_into;
use super::grid::{sparse_grid_nodes, total_degree_indices, GridSpec};
use crate::error::{Error, Result};

/// Forward map from a physical parameter vector to a vector of outputs.
pub type Evaluator<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a;

/// Per-dimension box `[lo, hi]` in physical units. Serialized as a list of
/// `[lo, hi]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<Vec<[f64; 2]>> for Bounds {
    type Error = Error;

    fn try_from(pairs: Vec<[f64; 2]>) -> Result<Self> {
        Bounds::new(
            pairs.iter().map(|p| p[0]).collect(),
            pairs.iter().map(|p| p[1]).collect(),
        )
    }
}

impl From<Bounds> for Vec<[f64; 2]> {
    fn from(b: Bounds) -> Self {
        b.lo.iter().zip(&b.hi).map(|(&l, &h)| [l, h]).collect()
    }
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::LengthMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::config("bounds", "need at least one dimension"));
        }
        for (k, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::config(format!("bounds[{k}]"), format!("need finite lo < hi, got [{l}, {h}]")));
            }
        }
        Ok(Bounds { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    /// `dx/dm` for each dimension.
    pub fn scale(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 2.0 / (h - l)).collect()
    }

    pub fn contains(&self, m: &[f64]) -> bool {
        m.len() == self.dim() && m.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| v >= l && v <= h)
    }

    pub fn contains_strictly(&self, m: &[f64]) -> bool {
        m.len() == self.dim() && m.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| v > l && v < h)
    }

    fn check(&self, m: &[f64]) -> Result<()> {
        if m.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: m.len(),
            });
        }
        for (dim, (&value, (&lo, &hi))) in m.iter().zip(self.lo.iter().zip(&self.hi)).enumerate() {
            if !(value >= lo && value <= hi) {
                return Err(Error::OutOfBounds { dim, value, lo, hi });
            }
        }
        Ok(())
    }
}

/// Maps `m` into the reference cube `[-1, 1]^d`.
pub fn affine_to_reference(bounds: &Bounds, m: &[f64]) -> Result<Vec<f64>> {
    bounds.check(m)?;
    Ok(m.iter()
        .zip(bounds.lo.iter().zip(&bounds.hi))
        .map(|(v, (l, h))| (2.0 * (v - l) / (h - l) - 1.0).clamp(-1.0, 1.0))
        .collect())
}

/// Inverse of [`affine_to_reference`]; the result is clamped into the box.
pub fn affine_from_reference(bounds: &Bounds, x: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(bounds.lo.iter().zip(&bounds.hi))
        .map(|(x, (l, h))| (l + (x + 1.0) * 0.5 * (h - l)).clamp(*l, *h))
        .collect()
}

/// Legendre expansion `f*(m) = Σ c_i Ψ_i(x(m))` with vector-valued `c_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct SurrogateModel {
    dimension: usize,
    bounds: Bounds,
    output_labels: Vec<String>,
    indices: Vec<Vec<u32>>,
    /// Row-major `[n_basis × n_outputs]`.
    coefficients: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    dimension: usize,
    bounds: Bounds,
    output_labels: Vec<String>,
    indices: Vec<Vec<u32>>,
    coefficients: Vec<f64>,
}

impl TryFrom<RawModel> for SurrogateModel {
    type Error = Error;

    fn try_from(r: RawModel) -> Result<Self> {
        SurrogateModel::new(r.bounds, r.output_labels, r.indices, r.coefficients).and_then(|m| {
            if m.dimension == r.dimension {
                Ok(m)
            } else {
                Err(Error::config("dimension", format!("{} disagrees with bounds ({})", r.dimension, m.dimension)))
            }
        })
    }
}

impl SurrogateModel {
    pub fn new(
        bounds: Bounds,
        output_labels: Vec<String>,
        indices: Vec<Vec<u32>>,
        coefficients: Vec<f64>,
    ) -> Result<Self> {
        let d = bounds.dim();
        if indices.iter().any(|a| a.len() != d) {
            return Err(Error::config("indices", format!("every multi-index needs {d} entries")));
        }
        let mut sorted = indices.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != indices.len() {
            return Err(Error::config("indices", "multi-indices must be unique"));
        }
        if coefficients.len() != indices.len() * output_labels.len() {
            return Err(Error::config(
                "coefficients",
                format!(
                    "expected {} × {} entries, got {}",
                    indices.len(),
                    output_labels.len(),
                    coefficients.len()
                ),
            ));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("coefficients", "must be finite"));
        }
        Ok(SurrogateModel {
            dimension: d,
            bounds,
            output_labels,
            indices,
            coefficients,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn output_labels(&self) -> &[String] {
        &self.output_labels
    }

    pub fn indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    pub fn n_outputs(&self) -> usize {
        self.output_labels.len()
    }

    /// Coefficient vector of basis term `b`.
    pub fn coefficient_row(&self, b: usize) -> &[f64] {
        let n = self.n_outputs();
        &self.coefficients[b * n..(b + 1) * n]
    }

    fn max_degree(&self) -> usize {
        self.indices.iter().flatten().copied().max().unwrap_or(0) as usize
    }

    /// Per-dimension Legendre tables at reference point `x`.
    fn tables(&self, x: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let n = self.max_degree() + 1;
        let mut p = vec![vec![0.0; n]; x.len()];
        let mut dp = vec![vec![0.0; n]; x.len()];
        for k in 0..x.len() {
            legendre_into(x[k], &mut p[k], &mut dp[k])?;
        }
        Ok((p, dp))
    }
}

/// Outcome of a single-level build.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildReport {
    pub level: usize,
    pub n_nodes: usize,
    pub n_basis: usize,
    /// Largest absolute residual of the collocation fit at the nodes.
    pub max_node_residual: f64,
}

/// Fits a total-degree Legendre expansion of order `spec.level` to
/// `evaluator` on the Smolyak nodes of the same level.
///
/// Node evaluations run in parallel; their assembly order is fixed, so the
/// result does not depend on scheduling.
pub fn build_surrogate(
    evaluator: &Evaluator,
    bounds: &Bounds,
    spec: GridSpec,
    output_labels: Vec<String>,
) -> Result<(SurrogateModel, BuildReport)> {
    let d = bounds.dim();
    let nodes = sparse_grid_nodes(d, spec);
    let indices = total_degree_indices(d, spec.level);
    let physical: Vec<Vec<f64>> = nodes.iter().map(|x| affine_from_reference(bounds, x)).collect();
    let responses: Vec<Vec<f64>> = physical
        .par_iter()
        .map(|m| {
            evaluator(m).map_err(|e| Error::Evaluator {
                point: m.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let n_out = output_labels.len();
    for (m, r) in physical.iter().zip(&responses) {
        if r.len() != n_out {
            return Err(Error::Evaluator {
                point: m.clone(),
                source: Box::new(Error::LengthMismatch {
                    expected: n_out,
                    got: r.len(),
                }),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluator {
                point: m.clone(),
                source: Box::new(Error::Domain("non-finite output".into())),
            });
        }
    }

    let (n_nodes, n_basis) = (nodes.len(), indices.len());
    let max_deg = spec.level + 1;
    let mut design = DMatrix::<f64>::zeros(n_nodes, n_basis);
    let mut p = vec![vec![0.0; max_deg]; d];
    let mut dp = vec![vec![0.0; max_deg]; d];
    for (row, x) in nodes.iter().enumerate() {
        for k in 0..d {
            legendre_into(x[k], &mut p[k], &mut dp[k])?;
        }
        for (col, alpha) in indices.iter().enumerate() {
            design[(row, col)] = alpha.iter().enumerate().map(|(k, &a)| p[k][a as usize]).product();
        }
    }
    let rhs = DMatrix::from_fn(n_nodes, n_out, |i, j| responses[i][j]);

    let coef = least_squares(&design, &rhs)?;
    let resid = &design * &coef - &rhs;
    let max_node_residual = resid.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut coefficients = Vec::with_capacity(n_basis * n_out);
    for b in 0..n_basis {
        for j in 0..n_out {
            coefficients.push(coef[(b, j)]);
        }
    }
    let model = SurrogateModel::new(bounds.clone(), output_labels, indices, coefficients)?;
    Ok((
        model,
        BuildReport {
            level: spec.level,
            n_nodes,
            n_basis,
            max_node_residual,
        },
    ))
}

/// Least-squares solution of `A X = B` by Householder QR, with a rank check
/// on the triangular factor.
fn least_squares(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.ncols();
    if a.nrows() < n {
        return Err(Error::RankDeficient {
            rank: a.nrows(),
            basis: n,
        });
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let diag_max = (0..n).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
    let rank = (0..n).filter(|&i| r[(i, i)].abs() > 1e-10 * diag_max).count();
    if rank < n {
        return Err(Error::RankDeficient { rank, basis: n });
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient { rank, basis: n })
}

/// Surrogate outputs at physical point `m`.
pub fn eval_surrogate(model: &SurrogateModel, m: &[f64]) -> Result<Vec<f64>> {
    let x = affine_to_reference(&model.bounds, m)?;
    let (p, _) = model.tables(&x)?;
    let mut out = vec![0.0; model.n_outputs()];
    for (b, alpha) in model.indices.iter().enumerate() {
        let phi: f64 = alpha.iter().enumerate().map(|(k, &a)| p[k][a as usize]).product();
        if phi != 0.0 {
            for (o, c) in out.iter_mut().zip(model.coefficient_row(b)) {
                *o += phi * c;
            }
        }
    }
    Ok(out)
}

/// Basis gradients `∇_m Ψ_b` at `m` (physical coordinates), one row per term.
fn basis_gradients(model: &SurrogateModel, m: &[f64]) -> Result<Vec<Vec<f64>>> {
    if !model.bounds.contains_strictly(m) {
        model.bounds.check(m)?;
        let dim = m
            .iter()
            .zip(model.bounds.lo.iter().zip(&model.bounds.hi))
            .position(|(v, (l, h))| v <= l || v >= h)
            .unwrap_or(0);
        return Err(Error::Domain(format!(
            "gradient requested on the boundary of dimension {dim} at {m:?}"
        )));
    }
    let x = affine_to_reference(&model.bounds, m)?;
    let (p, dp) = model.tables(&x)?;
    let scale = model.bounds.scale();
    let d = model.dimension;
    Ok(model
        .indices
        .iter()
        .map(|alpha| {
            (0..d)
                .map(|j| {
                    let mut v = scale[j];
                    for (k, &a) in alpha.iter().enumerate() {
                        v *= if k == j { dp[k][a as usize] } else { p[k][a as usize] };
                    }
                    v
                })
                .collect()
        })
        .collect())
}

/// Jacobian `[n_outputs × d]` of the surrogate at an interior point.
pub fn grad_surrogate(model: &SurrogateModel, m: &[f64]) -> Result<DMatrix<f64>> {
    let grads = basis_gradients(model, m)?;
    let mut jac = DMatrix::zeros(model.n_outputs(), model.dimension);
    for (b, g) in grads.iter().enumerate() {
        let row = model.coefficient_row(b);
        for (j, gj) in g.iter().enumerate() {
            if *gj != 0.0 {
                for (o, c) in row.iter().enumerate() {
                    jac[(o, j)] += c * gj;
                }
            }
        }
    }
    Ok(jac)
}

/// Gradient of `Σ_o w_o f*_o(m)`, i.e. `Jᵀ w`, without forming `J`.
pub fn surrogate_vjp(model: &SurrogateModel, m: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != model.n_outputs() {
        return Err(Error::LengthMismatch {
            expected: model.n_outputs(),
            got: w.len(),
        });
    }
    let grads = basis_gradients(model, m)?;
    let mut out = vec![0.0; model.dimension];
    for (b, g) in grads.iter().enumerate() {
        let cw: f64 = model.coefficient_row(b).iter().zip(w).map(|(c, w)| c * w).sum();
        for (o, gj) in out.iter_mut().zip(g) {
            *o += cw * gj;
        }
    }
    Ok(out)
}

/// Accuracy of a surrogate against its evaluator on random draws.
///
/// The error at one point is `max_k |f*_k − f_k| / max_k |f_k|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n_test: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    pub worst_point: Vec<f64>,
}

pub fn validate_surrogate(
    model: &SurrogateModel,
    evaluator: &Evaluator,
    n_test: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if n_test == 0 {
        return Err(Error::config("surrogate.n_validation", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = &model.bounds;
    let points: Vec<Vec<f64>> = (0..n_test)
        .map(|_| (0..b.dim()).map(|k| rng.random_range(b.lo[k]..b.hi[k])).collect())
        .collect();
    let errors: Vec<f64> = points
        .par_iter()
        .map(|m| {
            let truth = evaluator(m).map_err(|e| Error::Evaluator {
                point: m.clone(),
                source: Box::new(e),
            })?;
            let approx = eval_surrogate(model, m)?;
            if truth.len() != approx.len() {
                return Err(Error::LengthMismatch {
                    expected: approx.len(),
                    got: truth.len(),
                });
            }
            let scale = truth.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            let diff = truth.iter().zip(&approx).fold(0.0f64, |s, (t, a)| s.max((t - a).abs()));
            Ok(if scale > 0.0 { diff / scale } else { diff })
        })
        .collect::<Result<_>>()?;
    let (worst, max) = errors
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, &e)| if e > acc.1 { (k, e) } else { acc });
    Ok(ValidationReport {
        n_test,
        max_rel_error: max,
        mean_rel_error: errors.iter().sum::<f64>() / n_test as f64,
        worst_point: points[worst].clone(),
    })
}

/// Level-escalation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub start_level: usize,
    pub max_level: usize,
    /// Largest acceptable validation error.
    pub target: f64,
    pub n_validation: usize,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            start_level: 1,
            max_level: 5,
            target: 1e-2,
            n_validation: 100,
            seed: 0,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.start_level > self.max_level {
            return Err(Error::config("surrogate.start_level", "must not exceed max_level"));
        }
        if !(self.target > 0.0) {
            return Err(Error::config("surrogate.target", "must be > 0"));
        }
        if self.n_validation == 0 {
            return Err(Error::config("surrogate.n_validation", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    pub model: SurrogateModel,
    pub build: BuildReport,
    pub validation: ValidationReport,
    /// `(level, max_rel_error)` for every level tried.
    pub history: Vec<(usize, f64)>,
    pub target_met: bool,
}

/// Builds at increasing levels until validation meets `cfg.target` or
/// `cfg.max_level` is reached. Returns the last model built either way.
pub fn build_adaptive(
    evaluator: &Evaluator,
    bounds: &Bounds,
    output_labels: Vec<String>,
    cfg: &SurrogateConfig,
) -> Result<AdaptiveOutcome> {
    cfg.validate()?;
    let mut history = Vec::new();
    let mut level = cfg.start_level;
    loop {
        let (model, build) = build_surrogate(evaluator, bounds, GridSpec { level }, output_labels.clone())?;
        let validation = validate_surrogate(&model, evaluator, cfg.n_validation, cfg.seed)?;
        history.push((level, validation.max_rel_error));
        let met = validation.max_rel_error <= cfg.target;
        if met || level >= cfg.max_level {
            return Ok(AdaptiveOutcome {
                model,
                build,
                validation,
                history,
                target_met: met,
            });
        }
        level += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(d: usize) -> Bounds {
        Bounds::new(vec![-1.0; d], vec![1.0; d]).unwrap()
    }

    fn random_points(b: &Bounds, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..b.dim()).map(|k| rng.random_range(b.lo()[k]..b.hi()[k])).collect())
            .collect()
    }

    #[test]
    fn affine_map_round_trip() {
        let b = Bounds::new(vec![2.0e5, 0.06, -3.0], vec![3.8e5, 0.11, 5.0]).unwrap();
        assert_eq!(affine_to_reference(&b, b.lo()).unwrap(), vec![-1.0; 3]);
        assert!(affine_to_reference(&b, &b.midpoint()).unwrap().iter().all(|x| x.abs() < 1e-15));
        for m in random_points(&b, 200, 3) {
            let back = affine_from_reference(&b, &affine_to_reference(&b, &m).unwrap());
            for (x, y) in m.iter().zip(&back) {
                assert!(((x - y) / x.abs().max(1e-300)).abs() <= 1e-14);
            }
        }
        match affine_to_reference(&b, &[2.0e5, 0.2, 0.0]) {
            Err(Error::OutOfBounds { dim: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_evaluator() {
        let b = Bounds::new(vec![0.0, 10.0], vec![1.0, 20.0]).unwrap();
        let f = |_m: &[f64]| Ok(vec![4.5, -1.0]);
        let (model, report) = build_surrogate(&f, &b, GridSpec { level: 2 }, vec!["a".into(), "b".into()]).unwrap();
        assert!(report.max_node_residual < 1e-12);
        assert!((model.coefficient_row(0)[0] - 4.5).abs() < 1e-12);
        for k in 1..model.indices().len() {
            assert!(model.coefficient_row(k).iter().all(|c| c.abs() < 1e-12));
        }
        let m = [0.3, 17.0];
        assert!(grad_surrogate(&model, &m).unwrap().iter().all(|g| g.abs() < 1e-12));
        let v = eval_surrogate(&model, &m).unwrap();
        assert!((v[0] - 4.5).abs() < 1e-12 && (v[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_reproduction_and_gradient() {
        let b = unit_box(2);
        let f = |m: &[f64]| Ok(vec![m[0] * m[0] + 2.0 * m[1]]);
        for level in 2..=4 {
            let (model, _) = build_surrogate(&f, &b, GridSpec { level }, vec!["y".into()]).unwrap();
            for m in random_points(&b, 100, level as u64) {
                let v = eval_surrogate(&model, &m).unwrap()[0];
                assert!((v - f(&m).unwrap()[0]).abs() <= 1e-10);
                let j = grad_surrogate(&model, &m).unwrap();
                assert!((j[(0, 0)] - 2.0 * m[0]).abs() <= 1e-9);
                assert!((j[(0, 1)] - 2.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn polynomial_in_physical_box() {
        let b = Bounds::new(vec![1.0, -2.0, 100.0], vec![3.0, 5.0, 300.0]).unwrap();
        let f = |m: &[f64]| Ok(vec![m[0] * m[1] * m[2] - m[2] * m[2] / 100.0 + 7.0, m[0].powi(3)]);
        let (model, _) = build_surrogate(&f, &b, GridSpec { level: 3 }, vec!["a".into(), "b".into()]).unwrap();
        for m in random_points(&b, 100, 9) {
            let (v, want) = (eval_surrogate(&model, &m).unwrap(), f(&m).unwrap());
            for (x, y) in v.iter().zip(&want) {
                assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0), "{x} vs {y}");
            }
        }
        let report = validate_surrogate(&model, &f, 50, 1).unwrap();
        assert!(report.max_rel_error <= 1e-10);
        let own = |m: &[f64]| eval_surrogate(&model, m);
        assert_eq!(validate_surrogate(&model, &own, 20, 2).unwrap().max_rel_error, 0.0);
    }

    #[test]
    fn square_system_interpolates() {
        let b = Bounds::new(vec![0.0], vec![2.0]).unwrap();
        let f = |m: &[f64]| Ok(vec![m[0].exp()]);
        let (model, report) = build_surrogate(&f, &b, GridSpec { level: 4 }, vec!["e".into()]).unwrap();
        assert_eq!(report.n_nodes, report.n_basis);
        for x in sparse_grid_nodes(1, GridSpec { level: 4 }) {
            let m = affine_from_reference(&b, &x);
            assert!((eval_surrogate(&model, &m).unwrap()[0] - m[0].exp()).abs() <= 1e-9);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let b = Bounds::new(vec![0.5, 1.0, -1.0], vec![1.5, 4.0, 2.0]).unwrap();
        let f = |m: &[f64]| Ok(vec![(m[0] * m[1]).sin() + m[2].exp(), m[1].ln() * m[2]]);
        let (model, _) = build_surrogate(&f, &b, GridSpec { level: 4 }, vec!["a".into(), "b".into()]).unwrap();
        for m in random_points(&b, 20, 5) {
            let jac = grad_surrogate(&model, &m).unwrap();
            for j in 0..3 {
                let h = 1e-5 * (b.hi()[j] - b.lo()[j]);
                let (mut up, mut dn) = (m.clone(), m.clone());
                up[j] += h;
                dn[j] -= h;
                let (fu, fd) = (eval_surrogate(&model, &up).unwrap(), eval_surrogate(&model, &dn).unwrap());
                for o in 0..2 {
                    let fd_grad = (fu[o] - fd[o]) / (2.0 * h);
                    let scale = fd_grad.abs().max(1e-3);
                    assert!(((jac[(o, j)] - fd_grad) / scale).abs() <= 1e-6, "{} vs {fd_grad}", jac[(o, j)]);
                }
            }
            let w = [0.3, -2.0];
            let vjp = surrogate_vjp(&model, &m, &w).unwrap();
            for j in 0..3 {
                let want = w[0] * jac[(0, j)] + w[1] * jac[(1, j)];
                assert!((vjp[j] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn boundary_rules() {
        let b = unit_box(2);
        let f = |m: &[f64]| Ok(vec![m[0] + m[1]]);
        let (model, _) = build_surrogate(&f, &b, GridSpec { level: 1 }, vec!["s".into()]).unwrap();
        assert!(eval_surrogate(&model, &[1.0, -1.0]).is_ok());
        assert!(grad_surrogate(&model, &[1.0, 0.0]).is_err());
        assert!(matches!(eval_surrogate(&model, &[1.5, 0.0]), Err(Error::OutOfBounds { dim: 0, .. })));
    }

    #[test]
    fn evaluator_failure_names_point() {
        let b = unit_box(2);
        let f = |m: &[f64]| {
            if m[0] > 0.5 {
                Err(Error::Domain("boom".into()))
            } else {
                Ok(vec![1.0])
            }
        };
        match build_surrogate(&f, &b, GridSpec { level: 2 }, vec!["x".into()]) {
            Err(Error::Evaluator { point, .. }) => assert!(point[0] > 0.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let bm = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(matches!(least_squares(&a, &bm), Err(Error::RankDeficient { rank: 1, basis: 2 })));
    }

    #[test]
    fn json_round_trip() {
        let b = Bounds::new(vec![0.1, -5.0], vec![0.7, 3.0]).unwrap();
        let f = |m: &[f64]| Ok(vec![(m[0] * 3.0).cos() * m[1], m[0] / 3.0]);
        let (model, _) = build_surrogate(&f, &b, GridSpec { level: 3 }, vec!["u".into(), "v".into()]).unwrap();
        let text = serde_json::to_string(&model).unwrap();
        let back: SurrogateModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, model);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["dimension", "bounds", "output_labels", "indices", "coefficients"] {
            assert!(value.get(key).is_some(), "{key}");
        }
        let broken = text.replace("\"dimension\":2", "\"dimension\":3");
        assert!(serde_json::from_str::<SurrogateModel>(&broken).is_err());
    }

    #[test]
    fn escalation_stops_at_target_or_cap() {
        let b = Bounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let f = |m: &[f64]| Ok(vec![(m[0] + 2.0 * m[1]).exp()]);
        let cfg = SurrogateConfig {
            target: 1e-2,
            ..Default::default()
        };
        let out = build_adaptive(&f, &b, vec!["y".into()], &cfg).unwrap();
        assert!(out.target_met, "{:?}", out.history);
        assert!(out.validation.max_rel_error <= 1e-2);
        assert!(out.history.windows(2).all(|w| w[1].1 < w[0].1));
        assert!(out.history.windows(2).all(|w| w[1].0 == w[0].0 + 1));
        let strict = SurrogateConfig {
            target: 1e-14,
            max_level: 3,
            ..Default::default()
        };
        let out = build_adaptive(&f, &b, vec!["y".into()], &strict).unwrap();
        assert!(!out.target_met);
        assert_eq!(out.build.level, 3);
    }
}
