use serde::Serialize;

use crate::error::{invalid, Result};
use crate::quadrature::adaptive_with_breaks;

const REL_TOL: f64 = 1e-8;
const CONTRACTION: f64 = 0.7;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LyapunovPoint {
    pub theta: f64,
    pub kv: f64,
    pub v: f64,
    /// `KV - 0.7 V - e^{2 s α} 1{|θ| <= s σ}`.
    pub violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovCheck {
    pub sigma: f64,
    pub s: f64,
    pub c: f64,
    pub alpha: f64,
    pub max_violation: f64,
    pub argmax_theta: f64,
    pub points: Vec<LyapunovPoint>,
    pub holds: bool,
}

/// `(KV)(θ)` for `V(θ) = exp((α/σ)|θ|)` under random-walk MH with proposal
/// `Unif[θ - sσ, θ + sσ]` and target `N(0, s c² σ²)`.
pub fn lyapunov_kv(sigma: f64, s: f64, c: f64, alpha: f64, theta: f64) -> Result<f64> {
    let v = |y: f64| ((alpha / sigma) * y.abs()).exp();
    if s == 0.0 {
        return Ok(v(theta));
    }
    let w = s * sigma;
    let two_var = 2.0 * s * c * c * sigma * sigma;
    let v0 = v(theta);
    let integrand = |x: f64| {
        let y = theta + x;
        let a = ((theta * theta - y * y) / two_var).exp().min(1.0);
        a * v(y) + (1.0 - a) * v0
    };
    let breaks = [-theta, 0.0, -2.0 * theta];
    let integral = adaptive_with_breaks(integrand, -w, w, &breaks, REL_TOL, 0.0)?;
    Ok(integral / (2.0 * w))
}

fn validate(sigma: f64, s: f64, c: f64, alpha: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma < alpha) {
        return invalid("need 0 < sigma < alpha");
    }
    if !(s == 0.0 || (0.5..=2.0).contains(&s)) {
        return invalid("proposal scale s must lie in [0.5, 2]");
    }
    if !(c > 0.5 && c < 2.0) {
        return invalid("target scale c must lie in (0.5, 2)");
    }
    Ok(())
}

/// Worst violation of `KV <= 0.7 V + e^{2 s α} 1{|θ| <= s σ}` over `theta_grid`.
pub fn check_lyapunov_lemma(sigma: f64, s: f64, c: f64, alpha: f64, theta_grid: &[f64]) -> Result<LyapunovCheck> {
    validate(sigma, s, c, alpha)?;
    if theta_grid.is_empty() {
        return invalid("theta grid is empty");
    }
    let mut points = Vec::with_capacity(theta_grid.len());
    for &theta in theta_grid {
        let kv = lyapunov_kv(sigma, s, c, alpha, theta)?;
        let v = ((alpha / sigma) * theta.abs()).exp();
        let indicator = if theta.abs() <= s * sigma { (2.0 * s * alpha).exp() } else { 0.0 };
        points.push(LyapunovPoint { theta, kv, v, violation: kv - CONTRACTION * v - indicator });
    }
    let worst = points
        .iter()
        .max_by(|a, b| a.violation.total_cmp(&b.violation))
        .copied()
        .expect("non-empty grid");
    Ok(LyapunovCheck {
        sigma,
        s,
        c,
        alpha,
        max_violation: worst.violation,
        argmax_theta: worst.theta,
        holds: worst.violation <= 0.0,
        points,
    })
}

/// `lo, lo + step, ..., hi` without accumulating rounding error.
pub fn theta_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::simpson;

    #[test]
    fn origin_never_violates() {
        for s in [0.5, 1.0, 2.0] {
            for c in [0.6, 1.0, 1.9] {
                let chk = check_lyapunov_lemma(0.01, s, c, 0.05, &[0.0]).unwrap();
                assert!(chk.max_violation < 0.0);
                assert!(chk.points[0].kv <= (s * 0.05f64).exp() + 1e-12);
            }
        }
    }

    #[test]
    fn kv_matches_fine_simpson() {
        let (sigma, s, c, alpha) = (0.01, 1.0, 1.0, 0.05);
        for theta in [0.003, -0.0071, 0.25, -0.8] {
            let w = s * sigma;
            let two_var = 2.0 * s * c * c * sigma * sigma;
            let v = |y: f64| ((alpha / sigma) * f64::abs(y)).exp();
            let oracle = simpson(-w, w, 200_000, |x| {
                let y = theta + x;
                let a = ((theta * theta - y * y) / two_var).exp().min(1.0);
                a * v(y) + (1.0 - a) * v(theta)
            }) / (2.0 * w);
            let kv = lyapunov_kv(sigma, s, c, alpha, theta).unwrap();
            assert!((kv - oracle).abs() < 1e-8 * oracle, "{theta}: {kv} vs {oracle}");
        }
    }

    #[test]
    fn identity_kernel_reports_violation() {
        let chk = check_lyapunov_lemma(0.01, 0.0, 1.0, 0.05, &[0.5, 1.0]).unwrap();
        let v = (5.0f64).exp();
        assert!((chk.points[1].violation - 0.3 * v).abs() < 1e-12);
        assert!(!chk.holds);
    }

    #[test]
    fn invalid_parameters() {
        assert!(check_lyapunov_lemma(0.1, 1.0, 1.0, 0.05, &[0.0]).is_err());
        assert!(check_lyapunov_lemma(0.01, 3.0, 1.0, 0.05, &[0.0]).is_err());
        assert!(check_lyapunov_lemma(0.01, 1.0, 2.5, 0.05, &[0.0]).is_err());
        assert!(check_lyapunov_lemma(0.01, 1.0, 1.0, 0.05, &[]).is_err());
    }

    #[test]
    fn grid_helper() {
        let g = theta_grid(-1.0, 1.0, 0.005);
        assert_eq!(g.len(), 401);
        assert!((g[400] - 1.0).abs() < 1e-12);
    }
}
