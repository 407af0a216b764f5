//! Cyclical tempering schedule `beta(t) = (1 + cos(2 pi t^r)) / 2`, extended
//! with period 1 and clamped below by a floor.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const DEFAULT_FLOOR: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    #[default]
    Cosine,
    /// `beta == 1` everywhere; used for stationarity checks and degenerate cases.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(rename = "L")]
    pub cycle_length: usize,
    #[serde(rename = "r", default = "default_power")]
    pub power: f64,
    /// Lower clamp on beta. Zero disables flooring.
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default)]
    pub profile: Profile,
}

fn default_power() -> f64 {
    1.0
}

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

/// Derivative of the unfloored schedule, flagged when the floor is active at `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub value: f64,
    pub floored: bool,
}

impl Schedule {
    pub fn new(cycle_length: usize, power: f64, floor: f64) -> Result<Self> {
        let s = Self {
            cycle_length,
            power,
            floor,
            profile: Profile::Cosine,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn cosine(cycle_length: usize, power: f64) -> Result<Self> {
        Self::new(cycle_length, power, DEFAULT_FLOOR)
    }

    pub fn unfloored(cycle_length: usize, power: f64) -> Result<Self> {
        Self::new(cycle_length, power, 0.0)
    }

    pub fn constant(cycle_length: usize) -> Result<Self> {
        let s = Self {
            cycle_length,
            power: 1.0,
            floor: 0.0,
            profile: Profile::Constant,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycle_length == 0 {
            return invalid("cycle length L must be at least 1");
        }
        if !(self.power >= 1.0 && self.power.is_finite()) {
            return invalid(format!("power r = {} must be >= 1", self.power));
        }
        if !(0.0..1.0).contains(&self.floor) {
            return invalid(format!("floor {} must lie in [0, 1)", self.floor));
        }
        Ok(())
    }

    fn raw(&self, frac: f64) -> f64 {
        match self.profile {
            Profile::Cosine => 0.5 * (1.0 + (2.0 * PI * frac.powf(self.power)).cos()),
            Profile::Constant => 1.0,
        }
    }

    /// Schedule value at continuous time `t >= 0`.
    pub fn beta_at(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        let frac = t - t.floor();
        if frac == 0.0 {
            return 1.0;
        }
        self.raw(frac).max(self.floor)
    }

    /// `beta_j = beta(j / L)`. Integer arithmetic keeps cycle ends at exactly 1.
    pub fn beta_step(&self, j: usize) -> f64 {
        let l = self.cycle_length;
        let rem = j % l;
        if rem == 0 {
            return 1.0;
        }
        self.raw(rem as f64 / l as f64).max(self.floor)
    }

    /// `beta_0, ..., beta_L` for one cycle.
    pub fn cycle_betas(&self) -> Vec<f64> {
        (0..=self.cycle_length).map(|j| self.beta_step(j)).collect()
    }

    /// Analytic derivative of the unfloored schedule on (0, 1).
    pub fn beta_derivative(&self, t: f64) -> Result<Derivative> {
        if !(t > 0.0 && t < 1.0) {
            return invalid(format!("derivative requested at t = {t}, outside (0, 1)"));
        }
        let value = self.raw_derivative(t);
        Ok(Derivative {
            value,
            floored: self.raw(t) <= self.floor,
        })
    }

    fn raw_derivative(&self, t: f64) -> f64 {
        match self.profile {
            Profile::Cosine => {
                let r = self.power;
                -PI * r * t.powf(r - 1.0) * (2.0 * PI * t.powf(r)).sin()
            }
            Profile::Constant => 0.0,
        }
    }

    /// Supremum of `|beta'|` (unfloored) over `[a, b] ⊂ [0, 1]`, by dense
    /// sampling refined with golden-section search around the best sample.
    pub fn sup_abs_derivative(&self, a: f64, b: f64) -> f64 {
        const SAMPLES: usize = 256;
        let g = |t: f64| self.raw_derivative(t.clamp(0.0, 1.0)).abs();
        let h = (b - a) / SAMPLES as f64;
        let (mut best_t, mut best) = (a, g(a));
        for i in 1..=SAMPLES {
            let t = a + h * i as f64;
            let v = g(t);
            if v > best {
                best = v;
                best_t = t;
            }
        }
        let (mut lo, mut hi) = ((best_t - h).max(a), (best_t + h).min(b));
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let x1 = hi - phi * (hi - lo);
            let x2 = lo + phi * (hi - lo);
            if g(x1) >= g(x2) {
                hi = x2;
            } else {
                lo = x1;
            }
        }
        best.max(g(0.5 * (lo + hi)))
    }
}
