use nalgebra::DVector;
use serde::Serialize;

use super::chain::FiniteChain;
use super::gap::{spectral_profile, SpectralProfile};
use crate::error::{invalid, Result};

pub const SLACK_TOL: f64 = 1e-10;

/// Exact laws `ν^(j)` for `j = 0..=cycles*L`, with `ν^(j) = ν^(j-1) M_{((j-1) mod L)+1}`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub laws: Vec<DVector<f64>>,
    /// `Var_{Π_j}(ν^(j)/Π_j)`.
    pub variances: Vec<f64>,
    /// `sum_x |ν^(j)(x) - Π_j(x)|`.
    pub tv: Vec<f64>,
}

pub fn validate_law(chain: &FiniteChain, nu0: &[f64]) -> Result<DVector<f64>> {
    if nu0.len() != chain.len() {
        return invalid(format!("initial law has {} entries, grid has {}", nu0.len(), chain.len()));
    }
    if nu0.iter().any(|p| !(*p >= 0.0)) || (nu0.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return invalid("initial law must be a probability vector");
    }
    Ok(DVector::from_column_slice(nu0))
}

pub fn chi_square(nu: &DVector<f64>, pi: &DVector<f64>) -> f64 {
    let mass = nu.sum();
    nu.iter().zip(pi.iter()).map(|(n, p)| n * n / p).sum::<f64>() - mass * mass
}

pub fn l1_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).lp_norm(1)
}

pub fn propagate_exact(chain: &FiniteChain, nu0: &[f64], cycles: usize) -> Result<Trajectory> {
    let mut nu = validate_law(chain, nu0)?;
    let steps = cycles * chain.cycle_length();
    let mut laws = Vec::with_capacity(steps + 1);
    let mut variances = Vec::with_capacity(steps + 1);
    let mut tv = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        if j > 0 {
            nu = chain.kernel_at_step(j).tr_mul(&nu);
        }
        let pi = chain.pi_at_step(j);
        variances.push(chi_square(&nu, pi));
        tv.push(l1_distance(&nu, pi));
        laws.push(nu.clone());
    }
    Ok(Trajectory { laws, variances, tv })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub tv: f64,
    pub var: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StatedPoint {
    pub cycle: usize,
    pub tv_squared: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Theorem1Report {
    pub profile: SpectralProfile,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Smallest `(1 - λ_j + α_j) Var_{j-1} + α_j - Var_j` over all steps.
    pub recursion_slack: f64,
    /// Smallest `sqrt(Var_j) - TV_j`.
    pub cauchy_schwarz_slack: f64,
    /// Smallest unrolled bound minus `Var_j`.
    pub unrolled_slack: f64,
    /// `TV^2` at cycle ends against `Var_0 Λ_L^k`.
    pub stated_curve: Vec<StatedPoint>,
    pub stated_holds: bool,
    /// Recursion, Cauchy–Schwarz and unrolled checks all within `SLACK_TOL`.
    pub holds: bool,
}

pub fn verify_theorem1(chain: &FiniteChain, nu0: &[f64], cycles: usize) -> Result<Theorem1Report> {
    if cycles == 0 {
        return invalid("need at least one cycle");
    }
    let profile = spectral_profile(chain)?;
    let traj = propagate_exact(chain, nu0, cycles)?;
    let l = chain.cycle_length();
    let mut bound = traj.variances[0];
    let mut trajectory = vec![TrajectoryPoint { step: 0, tv: traj.tv[0], var: traj.variances[0], bound }];
    let (mut rec, mut cs, mut unrolled) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    cs = cs.min(traj.variances[0].max(0.0).sqrt() - traj.tv[0]);
    for j in 1..traj.variances.len() {
        let idx = (j - 1) % l;
        let contraction = 1.0 - profile.lambdas[idx] + profile.alphas[idx];
        let (var, prev) = (traj.variances[j], traj.variances[j - 1]);
        rec = rec.min(contraction * prev + profile.alphas[idx] - var);
        cs = cs.min(var.max(0.0).sqrt() - traj.tv[j]);
        bound = contraction * bound + profile.alphas[idx];
        unrolled = unrolled.min(bound - var);
        trajectory.push(TrajectoryPoint { step: j, tv: traj.tv[j], var, bound });
    }
    let stated_curve: Vec<StatedPoint> = (1..=cycles)
        .map(|k| StatedPoint {
            cycle: k,
            tv_squared: traj.tv[k * l].powi(2),
            bound: traj.variances[0] * profile.capital_lambda.powi(k as i32),
        })
        .collect();
    Ok(Theorem1Report {
        stated_holds: stated_curve.iter().all(|p| p.tv_squared <= p.bound + SLACK_TOL),
        holds: rec >= -SLACK_TOL && cs >= -SLACK_TOL && unrolled >= -SLACK_TOL,
        profile,
        trajectory,
        recursion_slack: rec,
        cauchy_schwarz_slack: cs,
        unrolled_slack: unrolled,
        stated_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::Schedule;
    use crate::targets::{Preset, Target};

    fn neumaier_sum(xs: impl Iterator<Item = f64>) -> f64 {
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for x in xs {
            let t = s + x;
            c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
            s = t;
        }
        s + c
    }

    #[test]
    fn mass_conserved_over_long_runs() {
        let t = Target::preset(Preset::Toy1dEqual);
        let s = Schedule::cosine(100, 1.0).unwrap();
        let c = FiniteChain::discretize(&t, (-10.0, 10.0), 50, 4, &s).unwrap();
        let nu0 = vec![1.0 / 50.0; 50];
        let tr = propagate_exact(&c, &nu0, 100).unwrap();
        assert_eq!(tr.laws.len(), 10_001);
        for law in &tr.laws {
            assert!(law.iter().all(|p| *p >= 0.0));
            let mass = neumaier_sum(law.iter().copied());
            assert!((mass - 1.0).abs() < 1e-12, "{mass}");
        }
    }

    #[test]
    fn theorem1_on_toy_chain() {
        let t = Target::preset(Preset::Toy1dEqual);
        let s = Schedule::cosine(64, 2.0).unwrap();
        let c = FiniteChain::discretize(&t, (-10.0, 10.0), 50, 4, &s).unwrap();
        let mut nu0 = vec![0.0; 50];
        nu0[10] = 1.0;
        let rep = verify_theorem1(&c, &nu0, 3).unwrap();
        assert!(rep.holds, "{} {} {}", rep.recursion_slack, rep.cauchy_schwarz_slack, rep.unrolled_slack);
        assert_eq!(rep.trajectory.len(), 3 * 64 + 1);
        for lam in &rep.profile.lambdas {
            assert!(*lam >= -1e-12);
        }
    }

    #[test]
    fn stationary_start_stays_put_when_constant() {
        let t = Target::preset(Preset::Toy1dUnequal);
        let s = Schedule::constant(10).unwrap();
        let c = FiniteChain::discretize(&t, (-8.0, 8.0), 30, 2, &s).unwrap();
        let nu0: Vec<f64> = c.pi(0).iter().copied().collect();
        let tr = propagate_exact(&c, &nu0, 2).unwrap();
        assert!(tr.tv.iter().all(|v| *v < 1e-12));
        assert!(tr.variances.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_initial_law() {
        let t = Target::preset(Preset::Toy1dEqual);
        let s = Schedule::constant(2).unwrap();
        let c = FiniteChain::discretize(&t, (-8.0, 8.0), 5, 1, &s).unwrap();
        assert!(propagate_exact(&c, &[0.5; 5], 1).is_err());
        assert!(propagate_exact(&c, &[1.0; 4], 1).is_err());
        assert!(verify_theorem1(&c, &[0.2; 5], 0).is_err());
    }
}
