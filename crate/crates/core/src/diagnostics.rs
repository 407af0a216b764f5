//! Weight recovery, per-mode marginal density errors and discrete total
//! variation.
//!
//! Total variation follows the `sup_{|f| <= 1} |mu(f) - nu(f)|` convention, so
//! it equals the full L1 distance and ranges over [0, 2].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernels::ModeRegion;
use crate::quadrature::GaussLegendre;
use crate::targets::Target;

pub const DEFAULT_BINS: usize = 40;
pub const MIN_MODE_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assignment {
    /// Count a sample only if it lies in a mode box.
    StrictBox,
    /// Assign every sample to the closest box center.
    NearestCenter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub counts: Vec<usize>,
    pub weights: Vec<f64>,
    pub unassigned: f64,
    pub total: usize,
}

pub fn estimate_weights(samples: &[Vec<f64>], regions: &ModeRegion, assignment: Assignment) -> Result<WeightReport> {
    if samples.is_empty() {
        return invalid("cannot estimate weights from an empty sample");
    }
    let centers: Vec<Vec<f64>> = (0..regions.len()).map(|i| regions.center(i)).collect();
    let mut counts = vec![0usize; regions.len()];
    for s in samples {
        let slot = match assignment {
            Assignment::StrictBox => regions.locate(s),
            Assignment::NearestCenter => nearest(&centers, s),
        };
        if let Some(k) = slot {
            counts[k] += 1;
        }
    }
    let total = samples.len();
    let assigned: usize = counts.iter().sum();
    Ok(WeightReport {
        weights: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        unassigned: (total - assigned) as f64 / total as f64,
        counts,
        total,
    })
}

fn nearest(centers: &[Vec<f64>], x: &[f64]) -> Option<usize> {
    centers
        .iter()
        .map(|c| c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

impl BinSpec {
    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.count as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.count).map(|b| self.lower + (b as f64 + 0.5) * self.width()).collect()
    }

    fn index(&self, x: f64) -> Option<usize> {
        if x < self.lower || x > self.upper {
            return None;
        }
        Some((((x - self.lower) / self.width()) as usize).min(self.count - 1))
    }
}

/// Histogram of one axis of the in-mode samples against the exact conditional
/// marginal of the target on the mode box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalError {
    pub mode_index: usize,
    pub axis: usize,
    pub bins: BinSpec,
    pub sample_count: usize,
    /// Fewer than [`MIN_MODE_SAMPLES`] samples fell in the mode box.
    pub low_count: bool,
    /// `sum_b |p_hat_b - p_b|` over bin masses; `None` when the mode is empty.
    pub l1_error: Option<f64>,
    pub estimated_mass: Vec<f64>,
    pub truth_mass: Vec<f64>,
}

impl MarginalError {
    /// Rows `(bin_center, estimated_density, true_density)` for plotting.
    pub fn curve(&self) -> Vec<(f64, f64, f64)> {
        let w = self.bins.width();
        self.bins
            .centers()
            .into_iter()
            .zip(self.estimated_mass.iter().zip(&self.truth_mass))
            .map(|(c, (e, t))| (c, e / w, t / w))
            .collect()
    }
}

pub fn mode_marginal_error(
    samples: &[Vec<f64>],
    regions: &ModeRegion,
    target: &Target,
    mode_index: usize,
    axis: usize,
    bins: usize,
) -> Result<MarginalError> {
    if axis >= target.dimension() {
        return invalid(format!("axis {axis} out of range for dimension {}", target.dimension()));
    }
    if bins == 0 {
        return invalid("bin count must be positive");
    }
    let region = regions.region(mode_index)?;
    let spec = BinSpec {
        lower: region.lower[axis],
        upper: region.upper[axis],
        count: bins,
    };
    let mut counts = vec![0usize; bins];
    for s in samples.iter().filter(|s| region.contains(s)) {
        if let Some(b) = spec.index(s[axis]) {
            counts[b] += 1;
        }
    }
    let n: usize = counts.iter().sum();
    let truth = conditional_bin_masses(target, region, axis, &spec)?;
    let estimated: Vec<f64> = if n > 0 {
        counts.iter().map(|&c| c as f64 / n as f64).collect()
    } else {
        vec![0.0; bins]
    };
    let l1_error = (n > 0).then(|| l1(&estimated, &truth));
    Ok(MarginalError {
        mode_index,
        axis,
        bins: spec,
        sample_count: n,
        low_count: n < MIN_MODE_SAMPLES,
        l1_error,
        estimated_mass: estimated,
        truth_mass: truth,
    })
}

fn l1(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

/// Mass of each bin under the target conditioned on `region`, by composite
/// Gauss–Legendre quadrature with panels narrower than the thinnest component.
fn conditional_bin_masses(
    target: &Target,
    region: &crate::targets::Domain,
    axis: usize,
    bins: &BinSpec,
) -> Result<Vec<f64>> {
    let dim = target.dimension();
    if dim > 2 {
        return invalid("marginal errors are implemented for one- and two-dimensional targets");
    }
    let min_sd = target
        .components()
        .iter()
        .map(|c| c.variance.sqrt())
        .fold(f64::INFINITY, f64::min);
    let rule = GaussLegendre::new(10);
    let panel = 0.5 * min_sd;
    let composite = |a: f64, b: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        let pieces = ((b - a) / panel).ceil().max(1.0) as usize;
        let h = (b - a) / pieces as f64;
        (0..pieces)
            .map(|k| {
                let lo = a + h * k as f64;
                rule.integrate(lo, lo + h, f)
            })
            .sum()
    };
    let marginal = |x: f64| -> f64 {
        if dim == 1 {
            return (-target.energy_unchecked(&[x])).exp();
        }
        let other = 1 - axis;
        composite(region.lower[other], region.upper[other], &|y| {
            let mut p = [0.0; 2];
            p[axis] = x;
            p[other] = y;
            (-target.energy_unchecked(&p)).exp()
        })
    };
    let w = bins.width();
    let masses: Vec<f64> = (0..bins.count)
        .map(|b| {
            let lo = bins.lower + w * b as f64;
            composite(lo, lo + w, &marginal)
        })
        .collect();
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return Err(crate::Error::NumericalFailure(
            "target has no mass on the mode box".to_string(),
        ));
    }
    Ok(masses.into_iter().map(|m| m / total).collect())
}

/// Total variation `sum_i |p_i - q_i|` between probability vectors.
pub fn tv_discrete(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return invalid(format!("length mismatch: {} vs {}", p.len(), q.len()));
    }
    for (name, v) in [("p", p), ("q", q)] {
        if v.iter().any(|&x| !(x >= 0.0)) {
            return invalid(format!("{name} has negative or non-finite entries"));
        }
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return invalid(format!("{name} sums to {s}, not 1"));
        }
    }
    Ok(l1(p, q))
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return invalid("spearman needs two equally long series of length >= 2");
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use crate::targets::Preset;
    use proptest::prelude::*;

    #[test]
    fn all_in_first_mode() {
        let s = vec![vec![5.0], vec![4.2], vec![7.9]];
        let r = estimate_weights(&s, &ModeRegion::toy1d(), Assignment::StrictBox).unwrap();
        assert_eq!(r.weights, vec![1.0, 0.0]);
        assert_eq!(r.unassigned, 0.0);
    }

    #[test]
    fn strict_box_leaves_unassigned_mass() {
        let s = vec![vec![5.0], vec![0.0], vec![-5.0], vec![-15.0]];
        let r = estimate_weights(&s, &ModeRegion::toy1d(), Assignment::StrictBox).unwrap();
        assert_eq!(r.counts, vec![1, 1]);
        assert_eq!(r.unassigned, 0.5);
        let r = estimate_weights(&s, &ModeRegion::toy1d(), Assignment::NearestCenter).unwrap();
        assert_eq!(r.counts, vec![2, 2]);
        assert!((r.weights.iter().sum::<f64>() + r.unassigned - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_samples_rejected() {
        assert!(estimate_weights(&[], &ModeRegion::toy1d(), Assignment::StrictBox).is_err());
    }

    #[test]
    fn nearest_center_recovers_labels() {
        // Draws labelled by component; keep only draws nearer their own mean,
        // so bookkeeping of the labels is the exact oracle.
        let t = Target::preset(Preset::Grid2dEqual);
        let regions = ModeRegion::grid2d();
        let mut rng = Stream::new(2);
        let mut samples = Vec::new();
        let mut labels = vec![0usize; 25];
        for _ in 0..5000 {
            let k = rng.below(25) as usize;
            let c = &t.components()[k];
            let x: Vec<f64> = c.mean.iter().map(|&m| rng.normal(m, c.variance.sqrt())).collect();
            if x.iter().zip(&c.mean).all(|(a, m)| (a - m).abs() < 1.0) {
                labels[k] += 1;
                samples.push(x);
            }
        }
        let r = estimate_weights(&samples, &regions, Assignment::NearestCenter).unwrap();
        assert_eq!(r.counts, labels);
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_discrete(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_discrete(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert!((tv_discrete(&[0.75, 0.25], &[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(tv_discrete(&[1.0], &[0.5, 0.5]).is_err());
        assert!(tv_discrete(&[0.9, 0.2], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn identical_histogram_has_zero_error() {
        let truth = vec![0.1, 0.4, 0.5];
        assert_eq!(l1(&truth, &truth), 0.0);
    }

    #[test]
    fn direct_draws_from_component_25_recover_marginal() {
        for preset in [Preset::Grid2dEqual, Preset::Grid2dUnequal] {
            let t = Target::preset(preset);
            let c = &t.components()[24];
            let mut rng = Stream::new(25);
            let sd = c.variance.sqrt();
            let samples: Vec<Vec<f64>> = (0..10_000)
                .map(|_| c.mean.iter().map(|&m| rng.normal(m, sd)).collect())
                .collect();
            let e = mode_marginal_error(&samples, &ModeRegion::grid2d(), &t, 24, 0, 40).unwrap();
            assert!(!e.low_count);
            assert!(e.l1_error.unwrap() < 0.1, "{preset:?}: {:?}", e.l1_error);
            assert!((e.truth_mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_component_gives_error_near_two() {
        let t = Target::preset(Preset::Toy1dEqual);
        let mut rng = Stream::new(6);
        // Draws piled up at the edge of the -5 mode box, far from the component.
        let samples: Vec<Vec<f64>> = (0..5000).map(|_| vec![rng.normal(-2.3, 0.1)]).collect();
        let e = mode_marginal_error(&samples, &ModeRegion::toy1d(), &t, 1, 0, 40).unwrap();
        assert!(e.l1_error.unwrap() > 1.8);
    }

    #[test]
    fn marginal_argument_errors() {
        let t = Target::preset(Preset::Toy1dEqual);
        let s = vec![vec![5.0]];
        assert!(mode_marginal_error(&s, &ModeRegion::toy1d(), &t, 0, 1, 40).is_err());
        let e = mode_marginal_error(&s, &ModeRegion::toy1d(), &t, 0, 0, 40).unwrap();
        assert!(e.low_count);
        assert_eq!(e.curve().len(), 40);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    fn prob_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.01f64..1.0, len).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn tv_metric_properties(p in prob_vec(6), q in prob_vec(6), r in prob_vec(6), rot in 0usize..6) {
            let pq = tv_discrete(&p, &q).unwrap();
            prop_assert!((pq - tv_discrete(&q, &p).unwrap()).abs() < 1e-15);
            prop_assert!(pq <= tv_discrete(&p, &r).unwrap() + tv_discrete(&r, &q).unwrap() + 1e-12);
            let (mut pp, mut qq) = (p.clone(), q.clone());
            pp.rotate_left(rot);
            qq.rotate_left(rot);
            prop_assert!((tv_discrete(&pp, &qq).unwrap() - pq).abs() < 1e-12);
            prop_assert!((0.0..=2.0 + 1e-12).contains(&pq));
        }

        #[test]
        fn weights_invariant_to_sample_order(xs in proptest::collection::vec(-10.0f64..10.0, 1..60), rot in 0usize..60) {
            let samples: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
            let mut shuffled = samples.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            for a in [Assignment::StrictBox, Assignment::NearestCenter] {
                let r1 = estimate_weights(&samples, &ModeRegion::toy1d(), a).unwrap();
                let r2 = estimate_weights(&shuffled, &ModeRegion::toy1d(), a).unwrap();
                prop_assert_eq!(r1, r2);
            }
        }
    }
}
