//! Explicit Runge–Kutta integration for the plant models.
//!
//! Two methods are available: classic fixed-step RK4 and the embedded
//! Dormand–Prince 5(4) pair with its continuous extension for dense output.
//! Integration restarts at every breakpoint so that piecewise inputs never
//! straddle a step; the right-hand side receives the start time of the piece
//! being integrated, which lets it resolve one-sided limits at a breakpoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed,
    #[default]
    Rk45Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// First trial step for the adaptive method, the step size for RK4.
    /// `None` picks one automatically.
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Rk45Adaptive,
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            initial_step: None,
            max_steps: 1_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk4Fixed,
            initial_step: Some(step),
            ..Default::default()
        }
    }

    pub fn adaptive(rel_tol: f64, abs_tol: f64) -> Self {
        IntegratorConfig {
            rel_tol,
            abs_tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::config("integrator", "tolerances must be > 0"));
        }
        if self.max_steps == 0 {
            return Err(Error::config("integrator.max_steps", "must be >= 1"));
        }
        if let Some(h) = self.initial_step {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::config("integrator.initial_step", "must be > 0"));
            }
        }
        Ok(())
    }
}

/// An initial-value problem `y' = f(t, y)` on `t_span`.
///
/// The right-hand side is called as `rhs(t, y, dy, piece_start)`.
pub struct OdeProblem<F> {
    pub rhs: F,
    pub t_span: (f64, f64),
    pub y0: Vec<f64>,
    /// Interior times at which the right-hand side may jump.
    pub breakpoints: Vec<f64>,
}

impl<F> OdeProblem<F>
where
    F: Fn(f64, &[f64], &mut [f64], f64),
{
    pub fn new(rhs: F, t_span: (f64, f64), y0: Vec<f64>) -> Self {
        OdeProblem {
            rhs,
            t_span,
            y0,
            breakpoints: Vec::new(),
        }
    }

    pub fn with_breakpoints(mut self, breakpoints: Vec<f64>) -> Self {
        self.breakpoints = breakpoints;
        self
    }

    pub fn dimension(&self) -> usize {
        self.y0.len()
    }
}

/// Integrates `problem` and returns the state at each time of `output_grid`
/// (one row per grid point).
pub fn integrate<F>(
    problem: &OdeProblem<F>,
    cfg: &IntegratorConfig,
    output_grid: &[f64],
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(f64, &[f64], &mut [f64], f64),
{
    cfg.validate()?;
    let (t0, t_end) = problem.t_span;
    if problem.y0.is_empty() {
        return Err(Error::config("ode.y0", "dimension must be >= 1"));
    }
    if !(t_end > t0) {
        return Err(Error::config("ode.t_span", "t_end must exceed t0"));
    }
    for w in output_grid.windows(2) {
        if w[1] < w[0] {
            return Err(Error::config("ode.output_grid", "must be sorted"));
        }
    }
    if let (Some(&first), Some(&last)) = (output_grid.first(), output_grid.last()) {
        if first < t0 || last > t_end {
            return Err(Error::config("ode.output_grid", "must lie within t_span"));
        }
    }
    if let Some(bad) = problem.y0.iter().find(|v| !v.is_finite()) {
        return Err(Error::Integrator {
            t: t0,
            reason: format!("non-finite initial state {bad}"),
        });
    }

    let mut pieces = vec![t0];
    let mut bps: Vec<f64> = problem
        .breakpoints
        .iter()
        .copied()
        .filter(|&b| b > t0 && b < t_end)
        .collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    pieces.extend(bps);
    pieces.push(t_end);

    let mut out = Vec::with_capacity(output_grid.len());
    let mut next_out = 0;
    let mut y = problem.y0.clone();
    let mut steps = 0usize;
    let mut h_hint = cfg.initial_step;

    for w in pieces.windows(2) {
        let (a, b) = (w[0], w[1]);
        // grid points at the piece start take the state there
        while next_out < output_grid.len() && output_grid[next_out] <= a {
            out.push(y.clone());
            next_out += 1;
        }
        let mut sink = |t: f64, state: &dyn Fn(f64) -> Vec<f64>| {
            while next_out < output_grid.len() && output_grid[next_out] <= t {
                out.push(state(output_grid[next_out]));
                next_out += 1;
            }
        };
        let f = |t: f64, y: &[f64], dy: &mut [f64]| (problem.rhs)(t, y, dy, a);
        y = match cfg.method {
            Method::Rk4Fixed => rk4_piece(&f, a, b, y, cfg, &mut steps, &mut sink)?,
            Method::Rk45Adaptive => {
                dopri_piece(&f, a, b, y, cfg, &mut steps, &mut h_hint, &mut sink)?
            }
        };
    }
    while next_out < output_grid.len() {
        out.push(y.clone());
        next_out += 1;
    }
    Ok(out)
}

fn check_finite(t: f64, dy: &[f64]) -> Result<()> {
    if let Some(v) = dy.iter().find(|v| !v.is_finite()) {
        return Err(Error::Integrator {
            t,
            reason: format!("non-finite derivative {v}"),
        });
    }
    Ok(())
}

fn rk4_piece<F, S>(
    f: &F,
    a: f64,
    b: f64,
    mut y: Vec<f64>,
    cfg: &IntegratorConfig,
    steps: &mut usize,
    sink: &mut S,
) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]),
    S: FnMut(f64, &dyn Fn(f64) -> Vec<f64>),
{
    let n = y.len();
    let target = cfg.initial_step.unwrap_or((b - a) / 1000.0);
    let n_steps = ((b - a) / target).ceil().max(1.0) as usize;
    let h = (b - a) / n_steps as f64;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    f(a, &y, &mut k1);
    check_finite(a, &k1)?;
    for i in 0..n_steps {
        *steps += 1;
        if *steps > cfg.max_steps {
            return Err(Error::Integrator {
                t: a + i as f64 * h,
                reason: "maximum step count exceeded".into(),
            });
        }
        let t = a + i as f64 * h;
        let t_next = if i + 1 == n_steps { b } else { a + (i + 1) as f64 * h };
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * h * k1[j];
        }
        f(t + 0.5 * h, &tmp, &mut k2);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * h * k2[j];
        }
        f(t + 0.5 * h, &tmp, &mut k3);
        for j in 0..n {
            tmp[j] = y[j] + h * k3[j];
        }
        f(t_next, &tmp, &mut k4);
        let y_new: Vec<f64> = (0..n)
            .map(|j| y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
            .collect();
        let mut f_new = vec![0.0; n];
        f(t_next, &y_new, &mut f_new);
        check_finite(t_next, &f_new)?;
        {
            let (y0, y1, f0, f1) = (&y, &y_new, &k1, &f_new);
            let dt = t_next - t;
            let dense = move |tq: f64| -> Vec<f64> {
                if tq >= t_next {
                    return y1.clone();
                }
                let s = (tq - t) / dt;
                let h10 = s * (1.0 - s) * (1.0 - s);
                let h01 = s * s * (3.0 - 2.0 * s);
                let h11 = s * s * (s - 1.0);
                (0..y0.len())
                    .map(|j| y0[j] + h01 * (y1[j] - y0[j]) + dt * (h10 * f0[j] + h11 * f1[j]))
                    .collect()
            };
            sink(t_next, &dense);
        }
        y = y_new;
        k1 = f_new;
    }
    Ok(y)
}

// Dormand–Prince 5(4) tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

fn error_norm(e: &[f64], y0: &[f64], y1: &[f64], cfg: &IntegratorConfig) -> f64 {
    let n = e.len() as f64;
    let sum: f64 = e
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(ei, (a, b))| {
            let sc = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
            (ei / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step<F>(f: &F, t: f64, y: &[f64], f0: &[f64], span: f64, cfg: &IntegratorConfig) -> f64
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| cfg.abs_tol + cfg.rel_tol * v.abs()).collect();
    let norm = |v: &[f64]| {
        (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1: Vec<f64> = (0..n).map(|j| y[j] + h0 * f0[j]).collect();
    let mut f1 = vec![0.0; n];
    f(t + h0, &y1, &mut f1);
    let diff: Vec<f64> = (0..n).map(|j| f1[j] - f0[j]).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(span)
}

#[allow(clippy::too_many_arguments)]
fn dopri_piece<F, S>(
    f: &F,
    a: f64,
    b: f64,
    mut y: Vec<f64>,
    cfg: &IntegratorConfig,
    steps: &mut usize,
    h_hint: &mut Option<f64>,
    sink: &mut S,
) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]),
    S: FnMut(f64, &dyn Fn(f64) -> Vec<f64>),
{
    let n = y.len();
    let span = b - a;
    let mut k1 = vec![0.0; n];
    f(a, &y, &mut k1);
    check_finite(a, &k1)?;
    let mut h = match *h_hint {
        Some(h) => h.min(span),
        None => initial_step(f, a, &y, &k1, span, cfg),
    };
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut t = a;
    let mut last_rejected = false;

    while t < b {
        *steps += 1;
        if *steps > cfg.max_steps {
            return Err(Error::Integrator {
                t,
                reason: "maximum step count exceeded".into(),
            });
        }
        if h < 1e-12 * t.abs().max(span).max(1.0) {
            return Err(Error::Integrator {
                t,
                reason: format!("step size underflow (h = {h:e})"),
            });
        }
        let last = t + h >= b - 1e-12 * span.max(1.0);
        if last {
            h = b - t;
        }
        let t_next = if last { b } else { t + h };

        for j in 0..n {
            tmp[j] = y[j] + h * A21 * k1[j];
        }
        f(t + C2 * h, &tmp, &mut k2);
        for j in 0..n {
            tmp[j] = y[j] + h * (A31 * k1[j] + A32 * k2[j]);
        }
        f(t + C3 * h, &tmp, &mut k3);
        for j in 0..n {
            tmp[j] = y[j] + h * (A41 * k1[j] + A42 * k2[j] + A43 * k3[j]);
        }
        f(t + C4 * h, &tmp, &mut k4);
        for j in 0..n {
            tmp[j] = y[j] + h * (A51 * k1[j] + A52 * k2[j] + A53 * k3[j] + A54 * k4[j]);
        }
        f(t + C5 * h, &tmp, &mut k5);
        for j in 0..n {
            tmp[j] = y[j]
                + h * (A61 * k1[j] + A62 * k2[j] + A63 * k3[j] + A64 * k4[j] + A65 * k5[j]);
        }
        f(t_next, &tmp, &mut k6);
        for j in 0..n {
            y_new[j] = y[j]
                + h * (A71 * k1[j] + A73 * k3[j] + A74 * k4[j] + A75 * k5[j] + A76 * k6[j]);
        }
        f(t_next, &y_new, &mut k7);
        for j in 0..n {
            err[j] = h
                * (E1 * k1[j] + E3 * k3[j] + E4 * k4[j] + E5 * k5[j] + E6 * k6[j] + E7 * k7[j]);
        }
        let en = error_norm(&err, &y, &y_new, cfg);
        if !en.is_finite() {
            // non-finite trial: shrink and retry
            last_rejected = true;
            h *= FAC_MIN;
            continue;
        }
        if en <= 1.0 {
            check_finite(t_next, &k7)?;
            {
                let ydiff: Vec<f64> = (0..n).map(|j| y_new[j] - y[j]).collect();
                let bspl: Vec<f64> = (0..n).map(|j| h * k1[j] - ydiff[j]).collect();
                let r4: Vec<f64> = (0..n).map(|j| ydiff[j] - h * k7[j] - bspl[j]).collect();
                let r5: Vec<f64> = (0..n)
                    .map(|j| {
                        h * (D1 * k1[j]
                            + D3 * k3[j]
                            + D4 * k4[j]
                            + D5 * k5[j]
                            + D6 * k6[j]
                            + D7 * k7[j])
                    })
                    .collect();
                let (y0, y1, t_old) = (&y, &y_new, t);
                let dense = |tq: f64| -> Vec<f64> {
                    if tq >= t_next {
                        return y1.clone();
                    }
                    let th = (tq - t_old) / h;
                    let th1 = 1.0 - th;
                    (0..n)
                        .map(|j| {
                            y0[j] + th * (ydiff[j] + th1 * (bspl[j] + th * (r4[j] + th1 * r5[j])))
                        })
                        .collect()
                };
                sink(t_next, &dense);
            }
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            t = t_next;
            let mut fac = (SAFETY * en.max(1e-10).powf(-0.2)).clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            if !last {
                h *= fac;
                *h_hint = Some(h);
            } else {
                *h_hint = Some((h * fac).max(h_hint.unwrap_or(0.0)));
            }
        } else {
            last_rejected = true;
            h *= (SAFETY * en.powf(-0.2)).clamp(FAC_MIN, 1.0);
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> OdeProblem<impl Fn(f64, &[f64], &mut [f64], f64)> {
        OdeProblem::new(|_t, y: &[f64], dy: &mut [f64], _| dy[0] = -y[0], (0.0, 1.0), vec![1.0])
    }

    #[test]
    fn exponential_decay_adaptive() {
        let p = decay();
        let out = integrate(&p, &IntegratorConfig::default(), &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(out[0][0], 1.0);
        assert!((out[1][0] - (-0.5f64).exp()).abs() < 1e-6);
        assert!((out[2][0] - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn zero_rhs_is_exactly_constant() {
        let p = OdeProblem::new(
            |_t, _y: &[f64], dy: &mut [f64], _| dy.fill(0.0),
            (0.0, 10.0),
            vec![3.25, -1.5],
        );
        let grid: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        for cfg in [IntegratorConfig::default(), IntegratorConfig::rk4(0.3)] {
            let out = integrate(&p, &cfg, &grid).unwrap();
            for row in out {
                assert_eq!(row, vec![3.25, -1.5]);
            }
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let p = decay();
        let exact = (-1.0f64).exp();
        let e1 = (integrate(&p, &IntegratorConfig::rk4(0.1), &[1.0]).unwrap()[0][0] - exact).abs();
        let e2 = (integrate(&p, &IntegratorConfig::rk4(0.05), &[1.0]).unwrap()[0][0] - exact).abs();
        let ratio = e1 / e2;
        assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn errors_are_reported() {
        let p = OdeProblem::new(
            |t, _y: &[f64], dy: &mut [f64], _| dy[0] = if t > 0.5 { f64::NAN } else { 1.0 },
            (0.0, 1.0),
            vec![0.0],
        );
        let err = integrate(&p, &IntegratorConfig::rk4(0.1), &[1.0]).unwrap_err();
        assert!(matches!(err, Error::Integrator { t, .. } if t > 0.3 && t < 0.61));

        let cfg = IntegratorConfig {
            max_steps: 3,
            ..IntegratorConfig::adaptive(1e-10, 1e-12)
        };
        assert!(matches!(
            integrate(&decay(), &cfg, &[1.0]),
            Err(Error::Integrator { .. })
        ));
        assert!(integrate(&decay(), &IntegratorConfig::default(), &[1.5]).is_err());
    }

    #[test]
    fn breakpoints_give_one_sided_inputs() {
        // y' = 1 before t = 1, y' = -1 after; the piece start tells them apart
        let p = OdeProblem::new(
            |_t, _y: &[f64], dy: &mut [f64], start: f64| dy[0] = if start < 1.0 { 1.0 } else { -1.0 },
            (0.0, 2.0),
            vec![0.0],
        )
        .with_breakpoints(vec![1.0]);
        let out = integrate(&p, &IntegratorConfig::default(), &[0.5, 1.0, 1.5, 2.0]).unwrap();
        let want = [0.5, 1.0, 0.5, 0.0];
        for (row, w) in out.iter().zip(want) {
            assert!((row[0] - w).abs() < 1e-12, "{row:?} vs {w}");
        }
    }
    fn oscillator(y0: Vec<f64>, t_end: f64) -> OdeProblem<impl Fn(f64, &[f64], &mut [f64], f64)> {
        OdeProblem::new(
            |_t, y: &[f64], dy: &mut [f64], _| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            (0.0, t_end),
            y0,
        )
    }

    #[test]
    fn harmonic_oscillator_period_and_energy() {
        let period = 2.0 * std::f64::consts::PI;
        let cfg = IntegratorConfig::adaptive(1e-8, 1e-10);
        let one = integrate(&oscillator(vec![1.0, 0.0], period), &cfg, &[period]).unwrap();
        assert!((one[0][0] - 1.0).abs() < 1e-5 && one[0][1].abs() < 1e-5, "{:?}", one[0]);

        let grid: Vec<f64> = (0..=100).map(|k| k as f64 * period / 10.0).collect();
        let out = integrate(&oscillator(vec![1.0, 0.0], 10.0 * period), &cfg, &grid).unwrap();
        for (row, &t) in out.iter().zip(&grid) {
            let energy = row[0] * row[0] + row[1] * row[1];
            assert!((energy - 1.0).abs() <= 1e-5, "t={t} energy={energy}");
            assert!((row[0] - t.cos()).abs() < 1e-5);
        }
    }

    #[test]
    fn linear_in_initial_state() {
        let cfg = IntegratorConfig::default();
        let grid = [0.7, 2.1, 3.0];
        let a = integrate(&oscillator(vec![0.3, -0.8], 3.0), &cfg, &grid).unwrap();
        let b = integrate(&oscillator(vec![0.3 * 4.5, -0.8 * 4.5], 3.0), &cfg, &grid).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((4.5 * x - y).abs() <= 1e-6 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn initial_step_does_not_change_result() {
        let grid = [0.5, 1.0];
        let base = integrate(&decay(), &IntegratorConfig::default(), &grid).unwrap();
        for h0 in [1e-5, 1e-3, 0.1, 0.9] {
            let cfg = IntegratorConfig {
                initial_step: Some(h0),
                ..IntegratorConfig::default()
            };
            let out = integrate(&decay(), &cfg, &grid).unwrap();
            for (a, b) in base.iter().zip(&out) {
                assert!(((a[0] - b[0]) / a[0]).abs() <= 10.0 * cfg.rel_tol);
            }
        }
    }
}
