use crate::error::{Error, Result};

/// Values `P_0(x)..=P_n(x)` and derivatives `P'_0(x)..=P'_n(x)`.
pub fn legendre_eval(max_degree: usize, x: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut p = vec![0.0; max_degree + 1];
    let mut dp = vec![0.0; max_degree + 1];
    legendre_into(x, &mut p, &mut dp)?;
    Ok((p, dp))
}

/// Fills `p` and `dp` (equal length) without allocating.
pub(crate) fn legendre_into(x: f64, p: &mut [f64], dp: &mut [f64]) -> Result<()> {
    if !(x.abs() <= 1.0) {
        return Err(Error::Domain(format!("Legendre argument {x} outside [-1, 1]")));
    }
    let n = p.len();
    p[0] = 1.0;
    dp[0] = 0.0;
    if n > 1 {
        p[1] = x;
        dp[1] = 1.0;
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        p[k + 1] = ((2.0 * kf + 1.0) * x * p[k] - kf * p[k - 1]) / (kf + 1.0);
        // P'_{k+1} = P'_{k-1} + (2k+1) P_k
        dp[k + 1] = dp[k - 1] + (2.0 * kf + 1.0) * p[k];
    }
    Ok(())
}

/// `(P_n(x), P'_n(x))` for a single degree, used by the root finder.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `n`-point Gauss–Legendre rule on [-1, 1], nodes ascending.
///
/// Nodes are found by Newton iteration from Chebyshev-like guesses and
/// mirrored so the rule is exactly symmetric.
pub fn gauss_legendre_rule(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::config("surrogate.rule", "Gauss rule needs n >= 1"));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n / 2;
    let nf = n as f64;
    for i in 0..half {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        let (_, dp) = legendre_pair(n, 0.0);
        nodes[half] = 0.0;
        weights[half] = 2.0 / (dp * dp);
    }
    Ok((nodes, weights))
}
