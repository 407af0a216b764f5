use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use super::chain::FiniteChain;
use crate::error::{Error, Result};
use crate::rng::Stream;

const EIGEN_RESIDUAL_TOL: f64 = 1e-10;

/// `α_j = max_x sum_z M_j^2(x, z) |Π_{j-1}(z)/Π_j(z) - 1|`.
pub fn alpha_j(chain: &FiniteChain, j: usize) -> Result<f64> {
    Ok(alpha_profile(chain, j)?.amax())
}

fn alpha_profile(chain: &FiniteChain, j: usize) -> Result<DVector<f64>> {
    let r = chain.density_ratio(j)?;
    let m = chain.kernel(j);
    let dev = r.map(|v| (v - 1.0).abs());
    Ok(m * (m * dev))
}

/// Lower bound on `α_j` from random test functions `f` with `Π_{j-1}(f^2) = 1`.
pub fn alpha_lower_bound_search(chain: &FiniteChain, j: usize, trials: usize, rng: &mut Stream) -> Result<f64> {
    let g = alpha_profile(chain, j)?;
    let prev = chain.pi(j - 1);
    let mut best: f64 = 0.0;
    for _ in 0..trials {
        let f: Vec<f64> = (0..chain.len()).map(|_| rng.standard_normal()).collect();
        let norm: f64 = f.iter().zip(prev.iter()).map(|(f, p)| p * f * f).sum();
        let delta: f64 = f.iter().zip(prev.iter()).zip(g.iter()).map(|((f, p), g)| p * f * f * g).sum();
        best = best.max(delta / norm);
    }
    Ok(best)
}

/// `Q_j(x, z) = sum_y M_j(x, y) M_j(y, z) Π_{j-1}(z) / Π_j(z)`.
pub fn q_matrix(chain: &FiniteChain, j: usize) -> Result<DMatrix<f64>> {
    let r = chain.density_ratio(j)?;
    let m = chain.kernel(j);
    let mut q = m * m;
    for (mut col, rz) in q.column_iter_mut().zip(r.iter()) {
        col *= *rz;
    }
    Ok(q)
}

/// `W_j = diag(Π_{j-1}) Q_j`.
pub fn w_matrix(chain: &FiniteChain, j: usize) -> Result<DMatrix<f64>> {
    let q = q_matrix(chain, j)?;
    let prev = chain.pi(j - 1);
    Ok(DMatrix::from_fn(q.nrows(), q.ncols(), |x, z| prev[x] * q[(x, z)]))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectralGap {
    pub value: f64,
    pub residual: f64,
}

/// Symmetric form `S^{-1/2} (D - W) S^{-1/2}` with `S = diag(Π_{j-1})`,
/// built as `-sqrt(Q(x,z) Q(z,x))` off the diagonal so tiny masses never divide.
fn normalized_laplacian(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    DMatrix::from_fn(n, n, |x, z| {
        if x == z {
            (0..n).filter(|&y| y != x).map(|y| q[(x, y)]).sum()
        } else {
            -(q[(x, z)] * q[(z, x)]).sqrt()
        }
    })
}

/// Householder reflector mapping unit `u` to `∓e_1`.
fn reflector(u: &DVector<f64>) -> DMatrix<f64> {
    let n = u.len();
    let mut v = u.clone();
    v[0] += if u[0] >= 0.0 { 1.0 } else { -1.0 };
    let vv = v.norm_squared();
    DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / vv)
}

/// `λ_j`: smallest Rayleigh quotient of `D - W` against `Var_{Π_{j-1}}`.
pub fn lambda_j(chain: &FiniteChain, j: usize) -> Result<SpectralGap> {
    let q = q_matrix(chain, j)?;
    let c = normalized_laplacian(&q);
    let u = chain.pi(j - 1).map(f64::sqrt).normalize();
    let h = reflector(&u);
    let b = &h * &c * &h;
    let n = chain.len();
    let reduced = b.view((1, 1), (n - 1, n - 1)).into_owned();
    let eig = SymmetricEigen::new(reduced);
    let (idx, value) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::NumericalFailure("empty spectrum".into()))?;
    let mut lifted = DVector::zeros(n);
    lifted.rows_mut(1, n - 1).copy_from(&eig.eigenvectors.column(idx));
    let z = &h * lifted;
    let scale = eig.eigenvalues.amax().max(1.0);
    let residual = (&c * &z - &z * value).norm() / scale;
    if !value.is_finite() || residual > EIGEN_RESIDUAL_TOL {
        return Err(Error::NumericalFailure(format!(
            "eigen-solve for λ_{j} did not converge (residual {residual:.3e})"
        )));
    }
    Ok(SpectralGap { value, residual })
}

/// `Λ_L = sum_i α_i prod_{l > i} (1 - λ_l + α_l)`, with inputs indexed `1..=L`.
pub fn capital_lambda(alphas: &[f64], lambdas: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, l) in alphas.iter().zip(lambdas) {
        acc = acc * (1.0 - l + a) + a;
    }
    acc
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralProfile {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub max_residual: f64,
    pub capital_lambda: f64,
}

/// `α_j` and `λ_j` for every step of the cycle.
pub fn spectral_profile(chain: &FiniteChain) -> Result<SpectralProfile> {
    let per_step: Vec<(f64, SpectralGap)> = (1..=chain.cycle_length())
        .into_par_iter()
        .map(|j| Ok((alpha_j(chain, j)?, lambda_j(chain, j)?)))
        .collect::<Result<_>>()?;
    let alphas: Vec<f64> = per_step.iter().map(|p| p.0).collect();
    let lambdas: Vec<f64> = per_step.iter().map(|p| p.1.value).collect();
    let max_residual = per_step.iter().map(|p| p.1.residual).fold(0.0, f64::max);
    Ok(SpectralProfile {
        capital_lambda: capital_lambda(&alphas, &lambdas),
        alphas,
        lambdas,
        max_residual,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    /// `|<M̄ f, g>_{Π_j} - <f, M g>_{Π_{j-1}}|` over random pairs.
    pub adjoint: f64,
    /// Most negative eigenvalue of the symmetrized `Q_j` (clipped at 0).
    pub q_negativity: f64,
    /// `max |W(x,z) - W(z,x)|`.
    pub w_asymmetry: f64,
    /// `max_x |Q(x,·) sum - (1 + sum_y M(x,y) sum_z M(y,z)(r(z) - 1))|`.
    pub q_row_sum: f64,
}

impl IdentityReport {
    pub fn worst(&self) -> f64 {
        self.adjoint.max(self.q_negativity).max(self.w_asymmetry).max(self.q_row_sum)
    }
}

/// Operator identities behind the variance recursion, checked for step `j`.
pub fn check_identities(chain: &FiniteChain, j: usize, pairs: usize, rng: &mut Stream) -> Result<IdentityReport> {
    let m = chain.kernel(j);
    let r = chain.density_ratio(j)?;
    let (prev, cur) = (chain.pi(j - 1), chain.pi(j));
    let n = chain.len();

    let mut adjoint: f64 = 0.0;
    for _ in 0..pairs {
        let f = DVector::from_fn(n, |_, _| rng.standard_normal());
        let g = DVector::from_fn(n, |_, _| rng.standard_normal());
        let m_bar_f = m * r.component_mul(&f);
        let lhs = cur.component_mul(&m_bar_f).dot(&g);
        let rhs = prev.component_mul(&f).dot(&(m * &g));
        adjoint = adjoint.max((lhs - rhs).abs());
    }

    let q = q_matrix(chain, j)?;
    let sym = DMatrix::from_fn(n, n, |x, z| if x == z { q[(x, x)] } else { (q[(x, z)] * q[(z, x)]).sqrt() });
    let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
    let w = w_matrix(chain, j)?;
    let w_asymmetry = (&w - w.transpose()).amax();
    let expected = m * (m * r.map(|v| v - 1.0)) + DVector::from_element(n, 1.0);
    let sums = DVector::from_iterator(n, q.row_iter().map(|row| row.sum()));
    Ok(IdentityReport {
        adjoint,
        q_negativity: (-min_eig).max(0.0),
        w_asymmetry,
        q_row_sum: (sums - expected).amax(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::Schedule;
    use crate::targets::{Preset, Target};

    fn two_state(beta_prev: f64, beta: f64) -> FiniteChain {
        FiniteChain::from_energies(vec![0.0, 1.0], vec![0.0, 2f64.ln()], 1, &[beta_prev, beta]).unwrap()
    }

    #[test]
    fn two_state_equal_temperature() {
        let c = two_state(1.0, 1.0);
        assert_eq!(alpha_j(&c, 1).unwrap(), 0.0);
        // Q = M^2 = [[3/4, 1/4], [1/2, 1/2]]; Dirichlet form over variance is 3/4.
        let lam = lambda_j(&c, 1).unwrap();
        assert!((lam.value - 0.75).abs() < 1e-12, "{lam:?}");
    }

    #[test]
    fn two_state_alpha_hand_value() {
        // β from 1 to 1/2: Π_0 = (2, 1)/3, Π_1 = (√2, 1)/(√2+1), and M_1 accepts
        // the uphill move with probability 2^{-1/2}.
        let c = two_state(1.0, 0.5);
        let s2 = 2f64.sqrt();
        let p0 = [2.0 / 3.0, 1.0 / 3.0];
        let p1 = [s2 / (s2 + 1.0), 1.0 / (s2 + 1.0)];
        let dev = [(p0[0] / p1[0] - 1.0).abs(), (p0[1] / p1[1] - 1.0).abs()];
        let a = 1.0 / s2;
        let m = [[1.0 - a, a], [1.0, 0.0]];
        let m2 = |x: usize, z: usize| m[x][0] * m[0][z] + m[x][1] * m[1][z];
        let oracle = (m2(0, 0) * dev[0] + m2(0, 1) * dev[1]).max(m2(1, 0) * dev[0] + m2(1, 1) * dev[1]);
        assert!((alpha_j(&c, 1).unwrap() - oracle).abs() < 1e-14);
        assert!((oracle - 0.1786).abs() < 1e-4, "{oracle}");
    }

    #[test]
    fn two_state_lambda_brute_force() {
        // On two states every non-constant f gives the same quotient; use f = (1, 0).
        let c = two_state(1.0, 0.5);
        let s2 = 2f64.sqrt();
        let p0 = [2.0 / 3.0, 1.0 / 3.0];
        let p1 = [s2 / (s2 + 1.0), 1.0 / (s2 + 1.0)];
        let r = [p0[0] / p1[0], p0[1] / p1[1]];
        let a = 1.0 / s2;
        let m = [[1.0 - a, a], [1.0, 0.0]];
        let m2 = |x: usize, z: usize| m[x][0] * m[0][z] + m[x][1] * m[1][z];
        let w = |x: usize, z: usize| p0[x] * m2(x, z) * r[z];
        // f^T (D - W) f with f = (1, 0) is W(0, 1); Var(f) = p0 (1 - p0).
        let oracle = w(0, 1) / (p0[0] * p0[1]);
        assert!((lambda_j(&c, 1).unwrap().value - oracle).abs() < 1e-9);
    }

    #[test]
    fn independence_kernel_has_unit_gap() {
        let t = Target::preset(Preset::Toy1dEqual);
        let s = Schedule::constant(3).unwrap();
        let c = FiniteChain::discretize(&t, (-8.0, 8.0), 12, 1, &s).unwrap();
        let pi = c.pi(1).clone();
        let k = DMatrix::from_fn(12, 12, |_, y| pi[y]);
        let c = c.with_kernels(vec![k.clone(), k.clone(), k]).unwrap();
        for j in 1..=3 {
            assert!(alpha_j(&c, j).unwrap() < 1e-14);
            assert!((lambda_j(&c, j).unwrap().value - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn lambda_matches_generalized_problem() {
        // No random test function may beat the reported minimum quotient.
        let t = Target::preset(Preset::Toy1dUnequal);
        let s = Schedule::cosine(6, 1.0).unwrap();
        let c = FiniteChain::discretize(&t, (-7.0, 7.0), 9, 2, &s).unwrap();
        let mut rng = Stream::new(4);
        for j in 1..=6 {
            let lam = lambda_j(&c, j).unwrap().value;
            let w = w_matrix(&c, j).unwrap();
            let prev = c.pi(j - 1);
            let d = DVector::from_iterator(9, w.row_iter().map(|r| r.sum()));
            let quotient = |f: &DVector<f64>| {
                let form = f.dot(&(DMatrix::from_diagonal(&d) * f - &w * f));
                let mean = prev.dot(f);
                let var = prev.dot(&f.component_mul(f)) - mean * mean;
                form / var
            };
            for _ in 0..2000 {
                let f = DVector::from_fn(9, |_, _| rng.standard_normal());
                assert!(quotient(&f) >= lam - 1e-9);
            }
        }
    }

    #[test]
    fn capital_lambda_recursion() {
        let a = [0.1, 0.2, 0.0];
        let l = [0.5, 0.3, 0.9];
        let direct = 0.1 * (1.0 - 0.3 + 0.2) * (1.0 - 0.9) + 0.2 * (1.0 - 0.9) + 0.0;
        assert!((capital_lambda(&a, &l) - direct).abs() < 1e-15);
    }

    #[test]
    fn alpha_search_never_exceeds_alpha() {
        let t = Target::preset(Preset::Toy1dEqual);
        let s = Schedule::cosine(8, 1.0).unwrap();
        let c = FiniteChain::discretize(&t, (-10.0, 10.0), 30, 3, &s).unwrap();
        let mut rng = Stream::new(1);
        for j in 1..=8 {
            let lb = alpha_lower_bound_search(&c, j, 200, &mut rng).unwrap();
            assert!(lb <= alpha_j(&c, j).unwrap() + 1e-12);
        }
    }

    #[test]
    fn identities_hold() {
        let t = Target::preset(Preset::Toy1dEqual);
        let s = Schedule::cosine(16, 2.0).unwrap();
        let c = FiniteChain::discretize(&t, (-10.0, 10.0), 40, 3, &s).unwrap();
        let mut rng = Stream::new(9);
        for j in 1..=16 {
            let rep = check_identities(&c, j, 20, &mut rng).unwrap();
            assert!(rep.worst() < 1e-10, "{j}: {rep:?}");
        }
    }
}
