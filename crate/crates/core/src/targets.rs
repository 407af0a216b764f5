//! Isotropic Gaussian mixture targets and their energies.
//!
//! Energies carry the full Gaussian normalizing constants, so `exp(-energy)`
//! is the mixture density itself and the normalizer of every preset is 1.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::Stream;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Per-axis variance; components are isotropic.
    pub variance: f64,
}

/// Axis-aligned box, `lower[i] <= x[i] <= upper[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return invalid("domain bounds must be non-empty and of equal length");
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return invalid("domain lower bounds must be below upper bounds");
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(dim: usize, lower: f64, upper: f64) -> Self {
        Self {
            lower: vec![lower; dim],
            upper: vec![upper; dim],
        }
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }
}

/// Named presets reproducing the toy and grid experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Toy1dEqual,
    Toy1dUnequal,
    Grid2dEqual,
    Grid2dUnequal,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Toy1dEqual,
        Preset::Toy1dUnequal,
        Preset::Grid2dEqual,
        Preset::Grid2dUnequal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Toy1dEqual => "toy1d-equal",
            Preset::Toy1dUnequal => "toy1d-unequal",
            Preset::Grid2dEqual => "grid2d-equal",
            Preset::Grid2dUnequal => "grid2d-unequal",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| {
                let valid: Vec<_> = Self::ALL.iter().map(|p| p.name()).collect();
                crate::Error::InvalidArgument(format!(
                    "unknown preset '{name}'; valid presets: {}",
                    valid.join(", ")
                ))
            })
    }

    pub fn dimension(self) -> usize {
        match self {
            Preset::Toy1dEqual | Preset::Toy1dUnequal => 1,
            Preset::Grid2dEqual | Preset::Grid2dUnequal => 2,
        }
    }
}

/// Mixture `sum_i w_i N(mu_i, sigma_i^2 I)` with an optional bounding box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Target {
    dimension: usize,
    components: Vec<MixtureComponent>,
    domain: Option<Domain>,
    #[serde(skip)]
    log_norms: Vec<f64>,
}

impl Target {
    pub fn new(components: Vec<MixtureComponent>, domain: Option<Domain>) -> Result<Self> {
        let Some(first) = components.first() else {
            return invalid("a target needs at least one component");
        };
        let dimension = first.mean.len();
        if dimension == 0 {
            return invalid("component means must have positive dimension");
        }
        for (i, c) in components.iter().enumerate() {
            if c.mean.len() != dimension {
                return invalid(format!(
                    "component {i} has dimension {} but component 0 has {dimension}",
                    c.mean.len()
                ));
            }
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return invalid(format!("component {i} weight {} not in (0, 1]", c.weight));
            }
            if !(c.variance > 0.0 && c.variance.is_finite()) {
                return invalid(format!("component {i} variance {} must be positive", c.variance));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return invalid(format!("component {i} mean is not finite"));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return invalid(format!("component weights sum to {total}, expected 1"));
        }
        if let Some(d) = &domain {
            if d.dimension() != dimension {
                return invalid("domain dimension does not match target dimension");
            }
            for (i, c) in components.iter().enumerate() {
                if !d.contains(&c.mean) {
                    return invalid(format!("component {i} mean lies outside the domain"));
                }
            }
        }
        let d = dimension as f64;
        let log_norms = components
            .iter()
            .map(|c| c.weight.ln() - 0.5 * d * (LN_2PI + c.variance.ln()))
            .collect();
        Ok(Self {
            dimension,
            components,
            domain,
            log_norms,
        })
    }

    /// Custom mixture from parallel arrays, as accepted in config files.
    pub fn from_arrays(
        weights: &[f64],
        means: &[Vec<f64>],
        variances: &[f64],
        domain: Option<Domain>,
    ) -> Result<Self> {
        if weights.len() != means.len() || weights.len() != variances.len() {
            return invalid("weights, means and variances must have the same length");
        }
        let components = weights
            .iter()
            .zip(means)
            .zip(variances)
            .map(|((&weight, mean), &variance)| MixtureComponent {
                weight,
                mean: mean.clone(),
                variance,
            })
            .collect();
        Self::new(components, domain)
    }

    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Toy1dEqual => toy1d(1.0),
            Preset::Toy1dUnequal => toy1d(0.1),
            Preset::Grid2dEqual => grid2d(|_| 0.2),
            Preset::Grid2dUnequal => grid2d(|i| 0.2 / i as f64),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn domain(&self) -> Option<&Domain> {
        self.domain.as_ref()
    }

    pub fn in_domain(&self, point: &[f64]) -> bool {
        self.domain.as_ref().is_none_or(|d| d.contains(point))
    }

    /// `-log sum_i w_i f_i(point)`, evaluated with log-sum-exp.
    pub fn energy(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dimension {
            return invalid(format!(
                "point has dimension {} but target has dimension {}",
                point.len(),
                self.dimension
            ));
        }
        Ok(self.energy_unchecked(point))
    }

    pub(crate) fn energy_unchecked(&self, point: &[f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        // Small mixtures: two passes over a stack buffer are cheaper than allocating.
        let mut terms = [0.0f64; 64];
        let use_stack = self.components.len() <= terms.len();
        let mut heap = Vec::new();
        if !use_stack {
            heap.resize(self.components.len(), 0.0);
        }
        let buf: &mut [f64] = if use_stack {
            &mut terms[..self.components.len()]
        } else {
            &mut heap
        };
        for ((c, ln), slot) in self.components.iter().zip(&self.log_norms).zip(buf.iter_mut()) {
            let sq: f64 = c
                .mean
                .iter()
                .zip(point)
                .map(|(m, x)| (x - m) * (x - m))
                .sum();
            let t = ln - 0.5 * sq / c.variance;
            *slot = t;
            if t > max {
                max = t;
            }
        }
        let s: f64 = buf.iter().map(|t| (t - max).exp()).sum();
        -(max + s.ln())
    }

    pub fn density(&self, point: &[f64]) -> Result<f64> {
        Ok((-self.energy(point)?).exp())
    }

    /// Unnormalized tempered log density `-beta * energy(point)`.
    pub fn tempered_log_density(&self, beta: f64, point: &[f64]) -> Result<f64> {
        if !(beta > 0.0 && beta <= 1.0) {
            return invalid(format!("beta {beta} not in (0, 1]"));
        }
        Ok(-beta * self.energy(point)?)
    }

    /// Direct draw from the (untruncated) mixture.
    pub fn sample(&self, rng: &mut Stream) -> Vec<f64> {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut chosen = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                chosen = i;
                break;
            }
        }
        let c = &self.components[chosen];
        let sd = c.variance.sqrt();
        c.mean.iter().map(|&m| rng.normal(m, sd)).collect()
    }

    /// Direct draw restricted to the domain, by rejection.
    pub fn sample_in_domain(&self, rng: &mut Stream) -> Vec<f64> {
        loop {
            let x = self.sample(rng);
            if self.in_domain(&x) {
                return x;
            }
        }
    }
}

fn toy1d(c: f64) -> Target {
    Target::new(
        vec![
            MixtureComponent {
                weight: 0.5,
                mean: vec![5.0],
                variance: 1.0,
            },
            MixtureComponent {
                weight: 0.5,
                mean: vec![-5.0],
                variance: c * c,
            },
        ],
        Some(Domain::cube(1, -20.0, 20.0)),
    )
    .expect("toy preset is valid")
}

/// Means over {-4,-2,0,2,4}^2 in row-major order with x varying fastest, so
/// component 25 (index 24) sits at (4, 4).
fn grid2d(variance: impl Fn(usize) -> f64) -> Target {
    let coords = [-4.0, -2.0, 0.0, 2.0, 4.0];
    let components = (0..25)
        .map(|k| MixtureComponent {
            weight: 1.0 / 25.0,
            mean: vec![coords[k % 5], coords[k / 5]],
            variance: variance(k + 1),
        })
        .collect();
    Target::new(components, Some(Domain::cube(2, -8.0, 8.0))).expect("grid preset is valid")
}
