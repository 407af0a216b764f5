use serde::Serialize;

use super::chain::FiniteChain;
use super::gap::alpha_j;
use crate::error::{invalid, Result};
use crate::quadrature::GaussLegendre;
use crate::schedule::Schedule;
use crate::targets::Target;

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub cycle_length: usize,
    pub max_alpha: f64,
    /// `max_j α_j L / sup|β'|` over `[(j-1)/L, j/L]`; steps with flat β are skipped.
    pub max_ratio: f64,
    /// `osc(E) max_j exp(|β_j - β_{j-1}| osc(E))`.
    pub constant: f64,
    pub within_constant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    pub energy_oscillation: f64,
    pub holds: bool,
}

/// Ratio table for an unfloored cosine schedule at every `L` in `cycle_lengths`.
pub fn verify_prop1_scaling(
    target: &Target,
    interval: (f64, f64),
    n: usize,
    window: usize,
    cycle_lengths: &[usize],
    power: f64,
) -> Result<ScalingTable> {
    let schedules = cycle_lengths
        .iter()
        .map(|&l| Schedule::unfloored(l, power))
        .collect::<Result<Vec<_>>>()?;
    scaling_table(target, interval, n, window, &schedules)
}

pub fn scaling_table(
    target: &Target,
    interval: (f64, f64),
    n: usize,
    window: usize,
    schedules: &[Schedule],
) -> Result<ScalingTable> {
    if schedules.is_empty() {
        return invalid("need at least one cycle length");
    }
    let mut rows = Vec::with_capacity(schedules.len());
    let mut osc = 0.0;
    for s in schedules {
        let chain = FiniteChain::discretize(target, interval, n, window, s)?;
        let e = chain.energies();
        osc = e.iter().copied().fold(f64::NEG_INFINITY, f64::max) - e.iter().copied().fold(f64::INFINITY, f64::min);
        let l = s.cycle_length;
        let (mut max_alpha, mut max_ratio, mut max_jump) = (0.0f64, 0.0f64, 0.0f64);
        for j in 1..=l {
            let a = alpha_j(&chain, j)?;
            max_alpha = max_alpha.max(a);
            max_jump = max_jump.max((chain.beta(j) - chain.beta(j - 1)).abs());
            let sup = s.sup_abs_derivative((j - 1) as f64 / l as f64, j as f64 / l as f64);
            if sup > 0.0 {
                max_ratio = max_ratio.max(a * l as f64 / sup);
            }
        }
        let constant = osc * (max_jump * osc).exp();
        rows.push(ScalingRow {
            cycle_length: l,
            max_alpha,
            max_ratio,
            constant,
            within_constant: max_ratio <= constant,
        });
    }
    let holds = rows.iter().all(|r| r.within_constant);
    Ok(ScalingTable { rows, energy_oscillation: osc, holds })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PathSamplingCheck {
    pub step: usize,
    /// `log(Z_{j-1} / Z_j)` computed directly.
    pub direct: f64,
    /// `(β_j - β_{j-1}) ∫_0^1 E_{Π_{j,t}}[E] dt`, from `d log Z / dβ = -E_β[E]`.
    pub integral: f64,
    pub residual: f64,
}

fn tempered_mean_energy(energies: &[f64], beta: f64) -> f64 {
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut num, mut den) = (0.0, 0.0);
    for &e in energies {
        let w = (-beta * (e - min)).exp();
        num += w * e;
        den += w;
    }
    num / den
}

pub fn check_path_sampling(chain: &FiniteChain, j: usize, nodes: usize) -> Result<PathSamplingCheck> {
    chain.check_step(j)?;
    if nodes == 0 {
        return invalid("need at least one quadrature node");
    }
    let (b0, b1) = (chain.beta(j - 1), chain.beta(j));
    let direct = chain.log_normalizer(j - 1) - chain.log_normalizer(j);
    let gl = GaussLegendre::new(nodes);
    let e = chain.energies();
    let mean = gl.integrate(0.0, 1.0, |t| tempered_mean_energy(e, t * b1 + (1.0 - t) * b0));
    let integral = (b1 - b0) * mean;
    Ok(PathSamplingCheck { step: j, direct, integral, residual: (direct - integral).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::Preset;

    #[test]
    fn ratio_bounded_for_cosine() {
        let t = Target::preset(Preset::Toy1dEqual);
        let table = verify_prop1_scaling(&t, (-10.0, 10.0), 40, 3, &[16, 64, 256], 1.0).unwrap();
        assert!(table.holds, "{table:?}");
        // α shrinks roughly like 1/L.
        assert!(table.rows[2].max_alpha < table.rows[0].max_alpha / 8.0);
    }

    #[test]
    fn constant_schedule_gives_zero_alpha() {
        let t = Target::preset(Preset::Toy1dEqual);
        let s = [Schedule::constant(8).unwrap()];
        let table = scaling_table(&t, (-10.0, 10.0), 20, 2, &s).unwrap();
        assert_eq!(table.rows[0].max_alpha, 0.0);
        assert_eq!(table.rows[0].max_ratio, 0.0);
    }

    #[test]
    fn path_sampling_two_state() {
        // Z(β) = 1 + 2^{-β}, so log(Z(1)/Z(0.5)) = log(1.5 / (1 + 2^{-1/2})).
        let c = FiniteChain::from_energies(vec![0.0, 1.0], vec![0.0, 2f64.ln()], 1, &[1.0, 0.5]).unwrap();
        let closed = (1.5 / (1.0 + 0.5f64.sqrt())).ln();
        let chk = check_path_sampling(&c, 1, 32).unwrap();
        assert!((chk.direct - closed).abs() < 1e-14);
        assert!(chk.residual < 1e-10, "{chk:?}");
        let mut last = f64::INFINITY;
        for nodes in [4, 8, 16, 32, 64] {
            let r = check_path_sampling(&c, 1, nodes).unwrap().residual;
            assert!(r <= last || r < 1e-15, "{nodes}: {r} > {last}");
            last = r;
        }
    }

    #[test]
    fn path_sampling_flat_step() {
        let c = FiniteChain::from_energies(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 3.0], 1, &[0.7, 0.7]).unwrap();
        let chk = check_path_sampling(&c, 1, 8).unwrap();
        assert_eq!(chk.integral, 0.0);
        assert!(chk.direct.abs() < 1e-15);
    }

    #[test]
    fn alpha_halves_when_cycle_doubles() {
        let t = Target::preset(Preset::Toy1dEqual);
        let table = verify_prop1_scaling(&t, (-10.0, 10.0), 50, 4, &[64, 128], 1.0).unwrap();
        let ratio = table.rows[0].max_alpha / table.rows[1].max_alpha;
        assert!((1.5..=2.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn path_sampling_identity() {
        let t = Target::preset(Preset::Toy1dUnequal);
        let s = Schedule::cosine(32, 1.0).unwrap();
        let c = FiniteChain::discretize(&t, (-10.0, 10.0), 60, 3, &s).unwrap();
        for j in 1..=32 {
            let chk = check_path_sampling(&c, j, 40).unwrap();
            assert!(chk.residual < 1e-8, "{chk:?}");
        }
    }
}
