//! Temperature-indexed random-walk Metropolis–Hastings kernels and their
//! restrictions to mode regions.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::Stream;
use crate::targets::{Domain, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalFamily {
    /// `N(x, base_variance * beta^-q * I)`.
    GaussianIsotropic,
    /// Per-axis `Unif([x - w, x + w])` with half-width `w = base_variance * beta^-q`.
    UniformWindow,
    /// Per-axis uniform jump of `k * base_variance`, `k ∈ {-m..m} \ {0}` with
    /// `m = neighbors`. Keeps states on a lattice; used to mirror finite chains.
    Lattice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSpec {
    pub family: ProposalFamily,
    /// Variance (Gaussian), half-width (uniform) or lattice spacing.
    pub base_variance: f64,
    #[serde(rename = "q", default)]
    pub temperature_exponent: f64,
    /// Lattice window `m`; ignored by the other families.
    #[serde(default = "default_neighbors")]
    pub neighbors: usize,
    /// Raw per-step variance / half-width that bypasses the temperature scaling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_override: Option<f64>,
}

fn default_neighbors() -> usize {
    1
}

impl ProposalSpec {
    pub fn gaussian(base_variance: f64, temperature_exponent: f64) -> Self {
        Self {
            family: ProposalFamily::GaussianIsotropic,
            base_variance,
            temperature_exponent,
            neighbors: 1,
            scale_override: None,
        }
    }

    pub fn uniform(half_width: f64, temperature_exponent: f64) -> Self {
        Self {
            family: ProposalFamily::UniformWindow,
            base_variance: half_width,
            temperature_exponent,
            neighbors: 1,
            scale_override: None,
        }
    }

    pub fn lattice(spacing: f64, neighbors: usize) -> Self {
        Self {
            family: ProposalFamily::Lattice,
            base_variance: spacing,
            temperature_exponent: 0.0,
            neighbors,
            scale_override: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_variance > 0.0 && self.base_variance.is_finite()) {
            return invalid(format!("base_variance {} must be positive", self.base_variance));
        }
        if !(self.temperature_exponent >= 0.0) {
            return invalid(format!("q = {} must be >= 0", self.temperature_exponent));
        }
        if self.family == ProposalFamily::Lattice && self.neighbors == 0 {
            return invalid("lattice proposals need at least one neighbor");
        }
        if let Some(s) = self.scale_override {
            if !(s >= 0.0 && s.is_finite()) {
                return invalid(format!("scale_override {s} must be non-negative"));
            }
        }
        Ok(())
    }

    /// Per-step variance (Gaussian) or half-width (uniform) at temperature `beta`.
    pub fn step_scale(&self, beta: f64) -> f64 {
        if let Some(s) = self.scale_override {
            return s;
        }
        match self.family {
            ProposalFamily::Lattice => self.base_variance,
            _ => self.base_variance * beta.powf(-self.temperature_exponent),
        }
    }

    /// Standard deviation of the per-axis Gaussian increment.
    pub fn gaussian_sd(&self, beta: f64) -> f64 {
        self.step_scale(beta).sqrt()
    }

    fn propose(&self, rng: &mut Stream, beta: f64, current: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match self.family {
            ProposalFamily::GaussianIsotropic => {
                let sd = self.gaussian_sd(beta);
                out.extend(current.iter().map(|&x| x + sd * rng.standard_normal()));
            }
            ProposalFamily::UniformWindow => {
                let w = self.step_scale(beta);
                out.extend(current.iter().map(|&x| x + w * (2.0 * rng.uniform() - 1.0)));
            }
            ProposalFamily::Lattice => {
                let m = self.neighbors as u64;
                let h = self.base_variance;
                out.extend(current.iter().map(|&x| {
                    let k = rng.below(2 * m) as i64;
                    let offset = if k < m as i64 { k - m as i64 } else { k - m as i64 + 1 };
                    x + h * offset as f64
                }));
            }
        }
    }
}

/// A chain position together with its cached energy.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub point: Vec<f64>,
    pub energy: f64,
}

impl ChainState {
    pub fn new(target: &Target, point: Vec<f64>) -> Result<Self> {
        let energy = target.energy(&point)?;
        Ok(Self { point, energy })
    }
}

/// Disjoint mode boxes `Θ_1..Θ_d` with inner sets `I_j ⊂ Θ_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRegion {
    pub boxes: Vec<Domain>,
    pub inner_sets: Vec<Domain>,
}

impl ModeRegion {
    pub fn new(boxes: Vec<Domain>, inner_sets: Vec<Domain>) -> Result<Self> {
        if boxes.is_empty() || boxes.len() != inner_sets.len() {
            return invalid("mode regions need one inner set per box and at least one box");
        }
        let dim = boxes[0].dimension();
        if boxes.iter().chain(&inner_sets).any(|b| b.dimension() != dim) {
            return invalid("mode boxes have inconsistent dimensions");
        }
        for (i, a) in boxes.iter().enumerate() {
            for (j, b) in boxes.iter().enumerate().skip(i + 1) {
                if interiors_overlap(a, b) {
                    return invalid(format!("mode boxes {i} and {j} overlap"));
                }
            }
        }
        for (j, (outer, inner)) in boxes.iter().zip(&inner_sets).enumerate() {
            let inside = inner
                .lower
                .iter()
                .zip(&inner.upper)
                .zip(outer.lower.iter().zip(&outer.upper))
                .all(|((il, iu), (ol, ou))| ol <= il && iu <= ou);
            if !inside {
                return invalid(format!("inner set {j} is not contained in its mode box"));
            }
        }
        Ok(Self { boxes, inner_sets })
    }

    /// Boxes `[mu - half_width, mu + half_width]^d` around every component mean.
    pub fn around_means(target: &Target, half_width: f64, inner_half_width: f64) -> Result<Self> {
        let cube = |m: &[f64], h: f64| Domain {
            lower: m.iter().map(|x| x - h).collect(),
            upper: m.iter().map(|x| x + h).collect(),
        };
        let boxes = target.components().iter().map(|c| cube(&c.mean, half_width)).collect();
        let inner = target
            .components()
            .iter()
            .map(|c| cube(&c.mean, inner_half_width))
            .collect();
        Self::new(boxes, inner)
    }

    /// `Θ_1 = [2, 8]` around +5 and `Θ_2 = [-8, -2]` around -5.
    pub fn toy1d() -> Self {
        Self::new(
            vec![Domain::cube(1, 2.0, 8.0), Domain::cube(1, -8.0, -2.0)],
            vec![Domain::cube(1, 4.0, 6.0), Domain::cube(1, -6.0, -4.0)],
        )
        .expect("static regions are valid")
    }

    /// Unit-radius boxes around the 25 grid means, in component order.
    pub fn grid2d() -> Self {
        let coords = [-4.0, -2.0, 0.0, 2.0, 4.0];
        let (boxes, inner) = (0..25)
            .map(|k| {
                let (x, y) = (coords[k % 5], coords[k / 5]);
                (
                    Domain::new(vec![x - 1.0, y - 1.0], vec![x + 1.0, y + 1.0]).unwrap(),
                    Domain::new(vec![x - 0.5, y - 0.5], vec![x + 0.5, y + 0.5]).unwrap(),
                )
            })
            .unzip();
        Self::new(boxes, inner).expect("static regions are valid")
    }

    /// `Θ_1 = [-1.5, -0.5]`, `Θ_2 = [0.5, 1.5]` for the rescaled two-mode target.
    pub fn two_mode() -> Self {
        Self::new(
            vec![Domain::cube(1, -1.5, -0.5), Domain::cube(1, 0.5, 1.5)],
            vec![Domain::cube(1, -1.1, -0.9), Domain::cube(1, 0.9, 1.1)],
        )
        .expect("static regions are valid")
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn region(&self, index: usize) -> Result<&Domain> {
        self.boxes.get(index).map_or_else(
            || invalid(format!("region index {index} out of range ({} regions)", self.len())),
            Ok,
        )
    }

    pub fn inner(&self, index: usize) -> Result<&Domain> {
        self.inner_sets.get(index).map_or_else(
            || invalid(format!("region index {index} out of range ({} regions)", self.len())),
            Ok,
        )
    }

    /// Index of the first box containing `point`.
    pub fn locate(&self, point: &[f64]) -> Option<usize> {
        self.boxes.iter().position(|b| b.contains(point))
    }

    pub fn center(&self, index: usize) -> Vec<f64> {
        let b = &self.boxes[index];
        b.lower.iter().zip(&b.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }
}

fn interiors_overlap(a: &Domain, b: &Domain) -> bool {
    a.lower
        .iter()
        .zip(&a.upper)
        .zip(b.lower.iter().zip(&b.upper))
        .all(|((al, au), (bl, bu))| al < bu && bl < au)
}

/// Metropolis acceptance `min(1, exp(-beta (E(proposal) - E(current))))`;
/// zero outside the target domain.
pub fn accept_probability(target: &Target, beta: f64, current: &[f64], proposal: &[f64]) -> Result<f64> {
    if !target.in_domain(proposal) {
        return Ok(0.0);
    }
    let delta = target.energy(proposal)? - target.energy(current)?;
    Ok(acceptance_from_delta(beta, delta))
}

fn acceptance_from_delta(beta: f64, delta: f64) -> f64 {
    if delta <= 0.0 {
        1.0
    } else {
        (-beta * delta).exp()
    }
}

/// Reusable MH transition; holds a proposal buffer so stepping does not allocate.
#[derive(Debug, Clone)]
pub struct MhKernel<'a> {
    target: &'a Target,
    spec: &'a ProposalSpec,
    buffer: Vec<f64>,
}

impl<'a> MhKernel<'a> {
    pub fn new(target: &'a Target, spec: &'a ProposalSpec) -> Self {
        Self {
            target,
            spec,
            buffer: Vec::with_capacity(target.dimension()),
        }
    }

    /// One step of `M_beta`; returns whether the proposal was accepted.
    pub fn step(&mut self, rng: &mut Stream, beta: f64, state: &mut ChainState) -> bool {
        self.step_within(rng, beta, state, None)
    }

    /// One step of the kernel restricted to `region`: proposals leaving the
    /// region are rejected.
    pub fn step_within(
        &mut self,
        rng: &mut Stream,
        beta: f64,
        state: &mut ChainState,
        region: Option<&Domain>,
    ) -> bool {
        self.spec.propose(rng, beta, &state.point, &mut self.buffer);
        if !self.target.in_domain(&self.buffer) || region.is_some_and(|r| !r.contains(&self.buffer)) {
            return false;
        }
        let energy = self.target.energy_unchecked(&self.buffer);
        let delta = energy - state.energy;
        let accept = delta <= 0.0 || rng.uniform() < (-beta * delta).exp();
        if accept {
            std::mem::swap(&mut state.point, &mut self.buffer);
            state.energy = energy;
        }
        accept
    }
}

/// One MH step from `current` at temperature `beta`.
pub fn mh_step(
    rng: &mut Stream,
    target: &Target,
    beta: f64,
    spec: &ProposalSpec,
    current: &[f64],
) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta <= 1.0) {
        return invalid(format!("beta {beta} not in (0, 1]"));
    }
    let mut state = ChainState::new(target, current.to_vec())?;
    MhKernel::new(target, spec).step(rng, beta, &mut state);
    Ok(state.point)
}

/// One step of the restriction of `M_beta` to mode box `region_index`.
pub fn restricted_mh_step(
    rng: &mut Stream,
    target: &Target,
    beta: f64,
    spec: &ProposalSpec,
    region_index: usize,
    regions: &ModeRegion,
    current: &[f64],
) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta <= 1.0) {
        return invalid(format!("beta {beta} not in (0, 1]"));
    }
    let region = regions.region(region_index)?;
    if !region.contains(current) {
        return invalid(format!("current state lies outside mode region {region_index}"));
    }
    let mut state = ChainState::new(target, current.to_vec())?;
    MhKernel::new(target, spec).step_within(rng, beta, &mut state, Some(region));
    Ok(state.point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{MixtureComponent, Preset};
    use proptest::prelude::*;

    fn two_point_target() -> Target {
        Target::preset(Preset::Toy1dEqual)
    }

    #[test]
    fn acceptance_examples() {
        assert_eq!(acceptance_from_delta(1.0, 0.0), 1.0);
        assert!((acceptance_from_delta(1.0, 2f64.ln()) - 0.5).abs() < 1e-15);
        assert!((acceptance_from_delta(0.5, 2.0 * 2f64.ln()) - 0.5).abs() < 1e-15);
        let t = two_point_target();
        assert_eq!(accept_probability(&t, 1.0, &[0.0], &[0.0]).unwrap(), 1.0);
        assert_eq!(accept_probability(&t, 1.0, &[0.0], &[25.0]).unwrap(), 0.0);
    }

    #[test]
    fn downhill_moves_always_accepted() {
        let t = two_point_target();
        let mut rng = Stream::new(9);
        // Every proposal from a far tail point towards the nearest mode is downhill
        // with overwhelming probability; with a point mass proposal it is certain.
        let spec = ProposalSpec {
            scale_override: Some(0.0),
            ..ProposalSpec::uniform(1.0, 0.0)
        };
        let out = mh_step(&mut rng, &t, 1.0, &spec, &[3.0]).unwrap();
        assert_eq!(out, vec![3.0]);
        let spec = ProposalSpec::lattice(1.0, 1);
        let mut moved_down = 0;
        for _ in 0..100 {
            let next = mh_step(&mut rng, &t, 1.0, &spec, &[12.0]).unwrap();
            if next[0] == 11.0 {
                moved_down += 1;
            } else {
                assert!(next[0] == 12.0);
            }
        }
        assert!(moved_down > 30);
    }

    #[test]
    fn proposal_scale_examples() {
        let spec = ProposalSpec::gaussian(0.25, 1.0);
        assert!((spec.gaussian_sd(0.25) - 1.0).abs() < 1e-15);
        let spec2 = ProposalSpec::gaussian(0.01, 0.5);
        assert!((spec2.step_scale(0.25) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn one_step_acceptance_matches_monte_carlo_oracle() {
        // Oracle: average of min(1, pi(x') / pi(x)) over 10^6 proposal draws from
        // an independent stream, versus the empirical acceptance of the kernel.
        let t = two_point_target();
        let spec = ProposalSpec::gaussian(0.25, 1.0);
        let n = 1_000_000;
        let mut oracle_rng = Stream::new(1001);
        let e0 = t.energy(&[5.0]).unwrap();
        let oracle: f64 = (0..n)
            .map(|_| {
                let y = 5.0 + 0.5 * oracle_rng.standard_normal();
                acceptance_from_delta(1.0, t.energy(&[y]).unwrap() - e0)
            })
            .sum::<f64>()
            / n as f64;
        let mut rng = Stream::new(77);
        let mut kernel = MhKernel::new(&t, &spec);
        let mut accepted = 0usize;
        for _ in 0..n {
            let mut s = ChainState::new(&t, vec![5.0]).unwrap();
            if kernel.step(&mut rng, 1.0, &mut s) {
                accepted += 1;
            }
        }
        let rate = accepted as f64 / n as f64;
        let se = (oracle * (1.0 - oracle) / n as f64).sqrt();
        assert!((rate - oracle).abs() < 3.0 * se * 2f64.sqrt(), "{rate} vs {oracle}");
    }

    #[test]
    fn restricted_step_stays_inside() {
        let t = two_point_target();
        let regions = ModeRegion::toy1d();
        let spec = ProposalSpec::gaussian(4.0, 0.0);
        let mut rng = Stream::new(3);
        let mut x = vec![7.9];
        for _ in 0..2000 {
            x = restricted_mh_step(&mut rng, &t, 1.0, &spec, 0, &regions, &x).unwrap();
            assert!((2.0..=8.0).contains(&x[0]));
        }
        assert!(restricted_mh_step(&mut rng, &t, 1.0, &spec, 0, &regions, &[0.0]).is_err());
        assert!(restricted_mh_step(&mut rng, &t, 1.0, &spec, 5, &regions, &[5.0]).is_err());
    }

    #[test]
    fn restriction_to_whole_domain_is_unrestricted() {
        let t = two_point_target();
        let whole = ModeRegion::new(
            vec![Domain::cube(1, -20.0, 20.0)],
            vec![Domain::cube(1, -20.0, 20.0)],
        )
        .unwrap();
        let spec = ProposalSpec::gaussian(0.25, 1.0);
        let (mut a, mut b) = (Stream::new(5), Stream::new(5));
        let (mut x, mut y) = (vec![0.3], vec![0.3]);
        for i in 0..1000 {
            let beta = 0.001 + (i as f64 / 1000.0) * 0.999;
            x = mh_step(&mut a, &t, beta, &spec, &x).unwrap();
            y = restricted_mh_step(&mut b, &t, beta, &spec, 0, &whole, &y).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn restricted_run_matches_truncated_mean() {
        // Rescaled toy target: N(1, 0.3^2) truncated to [0.5, 1.5] plus a far mode.
        let t = Target::new(
            vec![
                MixtureComponent { weight: 0.5, mean: vec![-1.0], variance: 0.09 },
                MixtureComponent { weight: 0.5, mean: vec![1.0], variance: 0.09 },
            ],
            Some(Domain::cube(1, -3.0, 3.0)),
        )
        .unwrap();
        let regions = ModeRegion::two_mode();
        let spec = ProposalSpec::gaussian(0.04, 0.0);
        // Quadrature oracle for the truncated mean.
        let dens = |x: f64| t.density(&[x]).unwrap();
        let z = crate::quadrature::simpson(0.5, 1.5, 2000, dens);
        let m1 = crate::quadrature::simpson(0.5, 1.5, 2000, |x| x * dens(x)) / z;
        let m2 = crate::quadrature::simpson(0.5, 1.5, 2000, |x| x * x * dens(x)) / z;
        let var = m2 - m1 * m1;
        let mut rng = Stream::new(11);
        let mut kernel = MhKernel::new(&t, &spec);
        let mut s = ChainState::new(&t, vec![1.0]).unwrap();
        let (burn, n, thin) = (1000, 400_000, 20);
        let mut sum = 0.0;
        let mut count = 0;
        for i in 0..burn + n {
            kernel.step_within(&mut rng, 1.0, &mut s, Some(&regions.boxes[1]));
            if i >= burn && i % thin == 0 {
                sum += s.point[0];
                count += 1;
            }
        }
        let mean = sum / count as f64;
        let se = (var / count as f64).sqrt();
        assert!((mean - m1).abs() < 3.0 * se, "{mean} vs {m1} (se {se})");
    }

    #[test]
    fn region_validation() {
        assert!(ModeRegion::new(
            vec![Domain::cube(1, 0.0, 2.0), Domain::cube(1, 1.0, 3.0)],
            vec![Domain::cube(1, 0.5, 1.0), Domain::cube(1, 2.0, 2.5)],
        )
        .is_err());
        assert!(ModeRegion::new(vec![Domain::cube(1, 0.0, 2.0)], vec![Domain::cube(1, 1.0, 3.0)]).is_err());
        assert_eq!(ModeRegion::grid2d().len(), 25);
        assert_eq!(ModeRegion::grid2d().center(24), vec![4.0, 4.0]);
    }

    proptest! {
        #[test]
        fn acceptance_ignores_energy_offset(e0 in -50.0f64..50.0, e1 in -50.0f64..50.0, c in -100.0f64..100.0, beta in 0.001f64..1.0) {
            let a = acceptance_from_delta(beta, e1 - e0);
            let b = acceptance_from_delta(beta, (e1 + c) - (e0 + c));
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn scale_non_increasing_in_beta(b1 in 0.001f64..1.0, b2 in 0.001f64..1.0, q in 0.0f64..2.0) {
            let spec = ProposalSpec::gaussian(0.3, q);
            let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
            prop_assert!(spec.step_scale(lo) >= spec.step_scale(hi));
        }
    }
}
