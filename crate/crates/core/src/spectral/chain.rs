use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::schedule::Schedule;
use crate::targets::Target;

/// Finite-state version of one tempering cycle.
///
/// Holds `Π_0..Π_L` (with `Π_j ∝ exp(-β_j E)` on the grid) and the MH matrices
/// `M_1..M_L`. Proposals are uniform over the grid neighbors within `window`
/// steps; near the ends fewer neighbors exist, and the acceptance ratio
/// carries the Hastings factor `n_x / n_y` so every `M_j` stays reversible.
#[derive(Debug, Clone)]
pub struct FiniteChain {
    grid: Vec<f64>,
    energies: Vec<f64>,
    window: usize,
    betas: Vec<f64>,
    pis: Vec<DVector<f64>>,
    log_normalizers: Vec<f64>,
    kernels: Vec<DMatrix<f64>>,
    warning: Option<String>,
}

pub(crate) fn boltzmann(energies: &[f64], beta: f64) -> (DVector<f64>, f64) {
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-beta * (e - min)).exp()).collect();
    let s: f64 = w.iter().sum();
    let log_z = s.ln() - beta * min;
    (DVector::from_iterator(w.len(), w.into_iter().map(|x| x / s)), log_z)
}

/// Metropolis–Hastings matrix at temperature `beta` with a uniform proposal
/// over the `window` nearest neighbors on each side.
pub fn grid_kernel(energies: &[f64], beta: f64, window: usize) -> DMatrix<f64> {
    let n = energies.len();
    let neighbors = |i: usize| -> (usize, usize) { (i.saturating_sub(window), (i + window).min(n - 1)) };
    let count = |i: usize| {
        let (lo, hi) = neighbors(i);
        (hi - lo) as f64
    };
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let (lo, hi) = neighbors(i);
        let ni = count(i);
        let mut moved = 0.0;
        for k in (lo..=hi).filter(|&k| k != i) {
            let ratio = (-beta * (energies[k] - energies[i])).exp() * ni / count(k);
            let p = ratio.min(1.0) / ni;
            m[(i, k)] = p;
            moved += p;
        }
        m[(i, i)] = 1.0 - moved;
    }
    m
}

impl FiniteChain {
    /// Grid of `n` equally spaced points on `interval`, tempered by one cycle of `schedule`.
    pub fn discretize(
        target: &Target,
        interval: (f64, f64),
        n: usize,
        window: usize,
        schedule: &Schedule,
    ) -> Result<Self> {
        if target.dimension() != 1 {
            return invalid("the spectral lab discretizes one-dimensional targets only");
        }
        if n < 2 {
            return invalid("a finite chain needs at least two grid points");
        }
        let (a, b) = interval;
        if !(a < b) {
            return invalid("interval lower bound must be below its upper bound");
        }
        schedule.validate()?;
        let grid: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
        let energies = grid.iter().map(|&x| target.energy(&[x])).collect::<Result<Vec<_>>>()?;
        let mut chain = Self::from_energies(grid, energies, window, &schedule.cycle_betas())?;
        if !target.components().iter().any(|c| a <= c.mean[0] && c.mean[0] <= b) {
            chain.warning = Some(format!("interval [{a}, {b}] contains no component mean"));
        }
        Ok(chain)
    }

    /// Chain from explicit grid energies and temperatures `β_0..β_L`.
    pub fn from_energies(grid: Vec<f64>, energies: Vec<f64>, window: usize, betas: &[f64]) -> Result<Self> {
        let n = grid.len();
        if n < 2 || energies.len() != n {
            return invalid("grid and energies must have equal length >= 2");
        }
        if window == 0 || window > n - 1 {
            return invalid(format!("neighbor window {window} must lie in [1, {}]", n - 1));
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return invalid("grid energies must be finite");
        }
        if betas.len() < 2 {
            return invalid("need temperatures beta_0..beta_L with L >= 1");
        }
        if betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return invalid("temperatures must lie in [0, 1]");
        }
        let (pis, log_normalizers): (Vec<_>, Vec<_>) = betas.iter().map(|&b| boltzmann(&energies, b)).unzip();
        let kernels = betas[1..].iter().map(|&b| grid_kernel(&energies, b, window)).collect();
        Ok(Self {
            grid,
            energies,
            window,
            betas: betas.to_vec(),
            pis,
            log_normalizers,
            kernels,
            warning: None,
        })
    }

    /// Replaces `M_1..M_L` by caller-supplied row-stochastic matrices.
    pub fn with_kernels(mut self, kernels: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = self.len();
        if kernels.len() != self.cycle_length() {
            return invalid(format!("expected {} kernels, got {}", self.cycle_length(), kernels.len()));
        }
        for (j, k) in kernels.iter().enumerate() {
            if k.shape() != (n, n) {
                return invalid(format!("kernel {} has shape {:?}", j + 1, k.shape()));
            }
            for i in 0..n {
                let row = k.row(i);
                if row.iter().any(|&p| p < 0.0) || (row.sum() - 1.0).abs() > 1e-12 {
                    return invalid(format!("kernel {} row {i} is not a probability vector", j + 1));
                }
            }
        }
        self.kernels = kernels;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn cycle_length(&self) -> usize {
        self.kernels.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    /// `β_j` for `0 <= j <= L`.
    pub fn beta(&self, j: usize) -> f64 {
        self.betas[j]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// `Π_j` for `0 <= j <= L`.
    pub fn pi(&self, j: usize) -> &DVector<f64> {
        &self.pis[j]
    }

    /// `log Z_j` with `Z_j = sum_x exp(-β_j E(x))`.
    pub fn log_normalizer(&self, j: usize) -> f64 {
        self.log_normalizers[j]
    }

    /// `M_j` for `1 <= j <= L`.
    pub fn kernel(&self, j: usize) -> &DMatrix<f64> {
        &self.kernels[j - 1]
    }

    /// Kernel used at overall step `j >= 1` when cycles repeat.
    pub fn kernel_at_step(&self, j: usize) -> &DMatrix<f64> {
        &self.kernels[(j - 1) % self.cycle_length()]
    }

    /// Target at overall step `j` when cycles repeat (`Π_{kL} = Π_0`).
    pub fn pi_at_step(&self, j: usize) -> &DVector<f64> {
        &self.pis[j % self.cycle_length()]
    }

    /// `Π_{j-1} / Π_j`, elementwise.
    pub fn density_ratio(&self, j: usize) -> Result<DVector<f64>> {
        self.check_step(j)?;
        let (prev, cur) = (&self.pis[j - 1], &self.pis[j]);
        if cur.iter().any(|&p| p <= 0.0) || prev.iter().any(|&p| p <= 0.0) {
            return Err(crate::Error::NumericalFailure(format!(
                "Π_{} or Π_{j} underflows on the grid; density ratio is undefined",
                j - 1
            )));
        }
        Ok(prev.component_div(cur))
    }

    pub(crate) fn check_step(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.cycle_length() {
            return invalid(format!("step index {j} outside 1..={}", self.cycle_length()));
        }
        Ok(())
    }

    /// Largest `|Π_j(x) M_j(x,y) - Π_j(y) M_j(y,x)|` over all `j, x, y`.
    pub fn detailed_balance_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 1..=self.cycle_length() {
            let (pi, m) = (&self.pis[j], self.kernel(j));
            for x in 0..self.len() {
                for y in 0..self.len() {
                    worst = worst.max((pi[x] * m[(x, y)] - pi[y] * m[(y, x)]).abs());
                }
            }
        }
        worst
    }

    /// Largest `|sum_y M_j(x, y) - 1|`.
    pub fn row_sum_defect(&self) -> f64 {
        self.kernels
            .iter()
            .flat_map(|m| m.row_iter().map(|r| (r.sum() - 1.0).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    /// Largest `|(Π_j M_j)(y) - Π_j(y)|`.
    pub fn invariance_defect(&self) -> f64 {
        (1..=self.cycle_length())
            .map(|j| {
                let pi = &self.pis[j];
                let moved = self.kernel(j).tr_mul(pi);
                (moved - pi).amax()
            })
            .fold(0.0, f64::max)
    }

    /// CSV rows `index, x, energy, pi_0..pi_L`.
    pub fn pi_table(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| {
                let mut row = vec![i as f64, self.grid[i], self.energies[i]];
                row.extend(self.pis.iter().map(|p| p[i]));
                row
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainSummary {
    pub n: usize,
    pub cycle_length: usize,
    pub window: usize,
    pub interval: (f64, f64),
    pub warning: Option<String>,
}

impl From<&FiniteChain> for ChainSummary {
    fn from(c: &FiniteChain) -> Self {
        Self {
            n: c.len(),
            cycle_length: c.cycle_length(),
            window: c.window,
            interval: (c.grid[0], c.grid[c.len() - 1]),
            warning: c.warning.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::Preset;

    #[test]
    fn two_state_hand_enumeration() {
        // E = (0, ln 2), beta = 1: Π = (2/3, 1/3); from state 1 the single
        // neighbor is accepted with probability 1/2, from state 2 always.
        let c = FiniteChain::from_energies(vec![0.0, 1.0], vec![0.0, 2f64.ln()], 1, &[1.0, 1.0]).unwrap();
        let m = c.kernel(1);
        assert!((m[(0, 1)] - 0.5).abs() < 1e-15);
        assert!((m[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((m[(1, 0)] - 1.0).abs() < 1e-15);
        assert!(m[(1, 1)].abs() < 1e-15);
        assert!((c.pi(1)[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn discretized_chain_invariants() {
        let t = Target::preset(Preset::Toy1dEqual);
        for (n, w) in [(10, 1), (37, 3), (50, 4), (80, 7)] {
            let s = Schedule::cosine(24, 2.0).unwrap();
            let c = FiniteChain::discretize(&t, (-10.0, 10.0), n, w, &s).unwrap();
            assert!(c.row_sum_defect() < 1e-12);
            assert!(c.detailed_balance_defect() < 1e-12);
            assert!(c.invariance_defect() < 1e-12);
            for j in 0..=24 {
                assert!((c.pi(j).sum() - 1.0).abs() < 1e-12);
            }
            assert_eq!(c.pi(0), c.pi(24));
            for j in 1..=24 {
                assert!(c.density_ratio(j).unwrap().amax().is_finite());
            }
            assert!(c.warning().is_none());
        }
    }

    #[test]
    fn warns_when_interval_misses_modes() {
        let t = Target::preset(Preset::Toy1dEqual);
        let s = Schedule::cosine(4, 1.0).unwrap();
        let c = FiniteChain::discretize(&t, (-1.0, 1.0), 10, 1, &s).unwrap();
        assert!(c.warning().is_some());
    }

    #[test]
    fn argument_validation() {
        let t = Target::preset(Preset::Toy1dEqual);
        let s = Schedule::cosine(4, 1.0).unwrap();
        assert!(FiniteChain::discretize(&t, (-1.0, 1.0), 1, 1, &s).is_err());
        assert!(FiniteChain::discretize(&t, (-1.0, 1.0), 5, 5, &s).is_err());
        assert!(FiniteChain::discretize(&t, (1.0, -1.0), 5, 1, &s).is_err());
        let g = Target::preset(Preset::Grid2dEqual);
        assert!(FiniteChain::discretize(&g, (-1.0, 1.0), 5, 1, &s).is_err());
    }
}
