use nalgebra::DVector;
use serde::Serialize;

use super::chain::FiniteChain;
use super::propagate::{l1_distance, propagate_exact, SLACK_TOL};
use crate::error::{invalid, Result};
use crate::kernels::ModeRegion;

/// Mode sets `Θ_j` and inner sets `I_j ⊆ Θ_j` as grid indices.
#[derive(Debug, Clone, Serialize)]
pub struct GridRegions {
    pub regions: Vec<Vec<usize>>,
    pub inner: Vec<Vec<usize>>,
}

impl GridRegions {
    pub fn new(regions: Vec<Vec<usize>>, inner: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        if regions.is_empty() || regions.len() != inner.len() {
            return invalid("need one inner set per mode region, and at least one region");
        }
        let mut owner = vec![None; n];
        for (j, set) in regions.iter().enumerate() {
            if set.is_empty() {
                return invalid(format!("mode region {j} contains no grid point"));
            }
            for &x in set {
                if x >= n {
                    return invalid(format!("grid index {x} out of range"));
                }
                if let Some(k) = owner[x] {
                    return invalid(format!("mode regions {k} and {j} overlap at grid index {x}"));
                }
                owner[x] = Some(j);
            }
        }
        for (j, set) in inner.iter().enumerate() {
            if set.is_empty() {
                return invalid(format!("inner set {j} contains no grid point"));
            }
            if set.iter().any(|&x| x >= n || owner[x] != Some(j)) {
                return invalid(format!("inner set {j} is not contained in its mode region"));
            }
        }
        Ok(Self { regions, inner })
    }

    /// Grid points falling inside each box of a one-dimensional `ModeRegion`.
    pub fn from_modes(chain: &FiniteChain, modes: &ModeRegion) -> Result<Self> {
        if modes.boxes.iter().chain(&modes.inner_sets).any(|b| b.dimension() != 1) {
            return invalid("mode regions must be one-dimensional");
        }
        let pick = |d: &crate::targets::Domain| -> Vec<usize> {
            (0..chain.len()).filter(|&i| d.contains(&[chain.grid()[i]])).collect()
        };
        Self::new(
            modes.boxes.iter().map(pick).collect(),
            modes.inner_sets.iter().map(pick).collect(),
            chain.len(),
        )
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    fn mask(&self, j: usize, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &x in &self.regions[j] {
            m[x] = true;
        }
        m
    }
}

/// Probability that the chain started at `start` after step `start_step`
/// leaves `region` during steps `start_step+1..=L` (the complement is absorbing).
pub fn exact_escape_probability(chain: &FiniteChain, region: &[usize], start: usize, start_step: usize) -> Result<f64> {
    let n = chain.len();
    if !region.contains(&start) {
        return invalid("start point lies outside the region");
    }
    if start_step > chain.cycle_length() {
        return invalid("start step exceeds the cycle length");
    }
    let mut inside = vec![false; n];
    for &x in region {
        inside[x] = true;
    }
    let mut p = DVector::zeros(n);
    p[start] = 1.0;
    let mut escaped = 0.0;
    for i in start_step + 1..=chain.cycle_length() {
        p = chain.kernel(i).tr_mul(&p);
        for x in 0..n {
            if !inside[x] {
                escaped += p[x];
                p[x] = 0.0;
            }
        }
    }
    Ok(escaped.min(1.0))
}

/// Law at step `L` of the chain restricted to `inside` (moves leaving it are rejected).
pub fn restricted_law(chain: &FiniteChain, inside: &[bool], start: usize, start_step: usize) -> DVector<f64> {
    let n = chain.len();
    let mut p = DVector::zeros(n);
    p[start] = 1.0;
    for i in start_step + 1..=chain.cycle_length() {
        let m = chain.kernel(i);
        let mut next = DVector::zeros(n);
        for x in (0..n).filter(|&x| inside[x] && p[x] > 0.0) {
            let mut stay = m[(x, x)];
            for y in (0..n).filter(|&y| y != x) {
                if inside[y] {
                    next[y] += p[x] * m[(x, y)];
                } else {
                    stay += m[(x, y)];
                }
            }
            next[x] += p[x] * stay;
        }
        p = next;
    }
    p
}

/// `Π^(j) ∝ Π · 1_{Θ_j}`.
pub fn restricted_stationary(chain: &FiniteChain, inside: &[bool]) -> DVector<f64> {
    let pi = chain.pi(chain.cycle_length());
    let v = DVector::from_fn(chain.len(), |x, _| if inside[x] { pi[x] } else { 0.0 });
    let s = v.sum();
    v / s
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionReport {
    pub region: usize,
    pub escape: f64,
    pub mixing: f64,
    pub inner_mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Theorem2Report {
    pub start_step: usize,
    pub regions: Vec<RegionReport>,
    pub delta1: f64,
    pub delta2: f64,
    pub remainder: f64,
    pub lhs: f64,
    /// `δ_1 + δ_2 + remainder`.
    pub bound: f64,
    pub slack: f64,
    /// `2 δ_1 + δ_2 + remainder`: the coupling bound when distances are full L1 norms.
    pub coupling_bound: f64,
    pub holds: bool,
}

pub fn verify_theorem2(chain: &FiniteChain, regions: &GridRegions, start_step: usize, nu0: &[f64]) -> Result<Theorem2Report> {
    let l = chain.cycle_length();
    if start_step > l {
        return invalid(format!("L2 = {start_step} exceeds L = {l}"));
    }
    GridRegions::new(regions.regions.clone(), regions.inner.clone(), chain.len())?;
    let traj = propagate_exact(chain, nu0, 1)?;
    let (mid, end) = (&traj.laws[start_step], &traj.laws[l]);
    let n = chain.len();
    let mut mixture = DVector::zeros(n);
    let mut reports = Vec::with_capacity(regions.len());
    for j in 0..regions.len() {
        let inside = regions.mask(j, n);
        let target = restricted_stationary(chain, &inside);
        let (mut escape, mut mixing) = (0.0f64, 0.0f64);
        for &x in &regions.inner[j] {
            escape = escape.max(exact_escape_probability(chain, &regions.regions[j], x, start_step)?);
            mixing = mixing.max(l1_distance(&restricted_law(chain, &inside, x, start_step), &target));
        }
        let inner_mass: f64 = regions.inner[j].iter().map(|&x| mid[x]).sum();
        mixture += &target * inner_mass;
        reports.push(RegionReport { region: j, escape, mixing, inner_mass });
    }
    let delta1 = reports.iter().map(|r| r.escape).fold(0.0, f64::max);
    let delta2 = reports.iter().map(|r| r.mixing).fold(0.0, f64::max);
    let remainder = (1.0 - reports.iter().map(|r| r.inner_mass).sum::<f64>()).max(0.0);
    let lhs = l1_distance(end, &mixture);
    let bound = delta1 + delta2 + remainder;
    Ok(Theorem2Report {
        start_step,
        regions: reports,
        delta1,
        delta2,
        remainder,
        lhs,
        bound,
        slack: bound - lhs,
        coupling_bound: 2.0 * delta1 + delta2 + remainder,
        holds: bound - lhs >= -SLACK_TOL,
    })
}

/// `(steps β e^{-m} / α, e^{-m} (β/α + ev_start))`.
pub fn drift_union_bound(alpha: f64, beta: f64, m: f64, steps: usize, ev_start: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return invalid("drift rate must lie in (0, 1]");
    }
    if !(beta >= 0.0) || !(m > 0.0) || !(ev_start >= 0.0) {
        return invalid("need beta >= 0, m > 0 and ev_start >= 0");
    }
    let tail = (-m).exp();
    Ok((steps as f64 * beta * tail / alpha, tail * (beta / alpha + ev_start)))
}

/// Drift constants for `V(θ) = exp(κ|θ - c_j|)` on one mode region.
///
/// `β` is taken at least `α max_{I_j} V` so that `E V` stays below `β/α`
/// along the whole run from any start in `I_j`.
#[derive(Debug, Clone, Serialize)]
pub struct DriftFit {
    pub region: usize,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
    pub m: f64,
    pub steps: usize,
    pub delta1_bound: f64,
    pub exact_escape: f64,
    pub holds: bool,
}

const DRIFT_RATES: [f64; 10] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.7, 0.9];

pub fn fit_drift(chain: &FiniteChain, regions: &GridRegions, region: usize, start_step: usize) -> Result<DriftFit> {
    if region >= regions.len() {
        return invalid(format!("region index {region} out of range"));
    }
    let l = chain.cycle_length();
    if start_step >= l {
        return invalid("need at least one step after L2");
    }
    let n = chain.len();
    let grid = chain.grid();
    let set = &regions.regions[region];
    let inside = regions.mask(region, n);
    let center = 0.5 * (grid[set[0]] + grid[*set.last().unwrap_or(&set[0])]);
    let exact_escape = regions.inner[region]
        .iter()
        .map(|&x| exact_escape_probability(chain, set, x, start_step))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let steps = l - start_step;
    let gap = (0..n)
        .filter(|&x| !inside[x])
        .map(|x| (grid[x] - center).abs())
        .fold(f64::INFINITY, f64::min);
    let reach = grid.iter().map(|x| (x - center).abs()).fold(0.0, f64::max);
    if gap.is_infinite() {
        return Ok(DriftFit {
            region,
            kappa: 0.0,
            alpha: 1.0,
            beta: 0.0,
            m: f64::INFINITY,
            steps,
            delta1_bound: 0.0,
            exact_escape,
            holds: exact_escape <= SLACK_TOL,
        });
    }
    let kappa_max = 600.0 / reach;
    let mut best: Option<DriftFit> = None;
    for step in 0..=80 {
        let kappa = kappa_max * 10f64.powf(-4.0 + 4.0 * step as f64 / 80.0);
        let v = DVector::from_fn(n, |x, _| (kappa * (grid[x] - center).abs()).exp());
        let mv: Vec<DVector<f64>> = (start_step + 1..=l).map(|i| chain.kernel(i) * &v).collect();
        let inner_max = regions.inner[region].iter().map(|&x| v[x]).fold(0.0, f64::max);
        let m = kappa * gap;
        for &alpha in &DRIFT_RATES {
            let mut beta = alpha * inner_max;
            for w in &mv {
                for &x in set {
                    beta = beta.max(w[x] - (1.0 - alpha) * v[x]);
                }
            }
            let (bound, _) = drift_union_bound(alpha, beta, m, steps, 0.0)?;
            if best.as_ref().is_none_or(|b| bound < b.delta1_bound) {
                best = Some(DriftFit {
                    region,
                    kappa,
                    alpha,
                    beta,
                    m,
                    steps,
                    delta1_bound: bound,
                    exact_escape,
                    holds: exact_escape <= bound + SLACK_TOL,
                });
            }
        }
    }
    best.ok_or_else(|| crate::Error::NumericalFailure("drift scan produced no candidate".into()))
}
