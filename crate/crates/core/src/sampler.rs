//! Nonhomogeneous cyclical chain driver, within-mode runs and escape
//! probability estimation.
//!
//! Step `j` (counted from 1 over the whole run, never reset) uses the kernel
//! at temperature `beta(j / L)`. The states at `j = kL` are the output.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernels::{ChainState, MhKernel, ModeRegion, ProposalSpec};
use crate::rng::{Stream, GAUSSIAN_TRANSFORM, RNG_ALGORITHM};
use crate::schedule::Schedule;
use crate::targets::Target;

/// Distribution of `θ^(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialDistribution {
    PointMass { point: Vec<f64> },
    /// Independent `N(mean_i, variance)` per axis.
    Gaussian { mean: Vec<f64>, variance: f64 },
    /// Uniform on an axis-aligned box.
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
    /// Exact draw from the target mixture (restricted to its domain).
    Target,
}

impl InitialDistribution {
    fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            Self::PointMass { point } => point.len() == dim,
            Self::Gaussian { mean, variance } => mean.len() == dim && *variance > 0.0,
            Self::Uniform { lower, upper } => {
                lower.len() == dim && upper.len() == dim && lower.iter().zip(upper).all(|(l, u)| l < u)
            }
            Self::Target => true,
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("initial distribution {self:?} is invalid for dimension {dim}"))
        }
    }

    /// Draws until the point lies in the target domain.
    pub fn draw(&self, rng: &mut Stream, target: &Target) -> Vec<f64> {
        loop {
            let x = match self {
                Self::PointMass { point } => return point.clone(),
                Self::Gaussian { mean, variance } => {
                    let sd = variance.sqrt();
                    mean.iter().map(|&m| rng.normal(m, sd)).collect()
                }
                Self::Uniform { lower, upper } => {
                    lower.iter().zip(upper).map(|(&l, &u)| rng.uniform_in(l, u)).collect()
                }
                Self::Target => target.sample(rng),
            };
            if target.in_domain(&x) {
                return x;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(rename = "K")]
    pub cycles: usize,
    pub schedule: Schedule,
    pub proposal: ProposalSpec,
    pub init: InitialDistribution,
    #[serde(default)]
    pub seed: u64,
    /// Keep every `thinning`-th state in the trace. `None` keeps no trace;
    /// `Some(0)` selects the default of `L / 100`.
    #[serde(default)]
    pub thinning: Option<usize>,
}

impl RunConfig {
    pub fn validate(&self, target: &Target) -> Result<()> {
        if self.cycles == 0 {
            return invalid("K must be at least 1");
        }
        self.schedule.validate()?;
        self.proposal.validate()?;
        self.init.validate(target.dimension())
    }

    fn thin_every(&self) -> Option<usize> {
        self.thinning.map(|t| {
            if t == 0 {
                (self.schedule.cycle_length / 100).max(1)
            } else {
                t
            }
        })
    }
}

/// Acceptance counts for one decile of beta.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseAcceptance {
    pub beta_low: f64,
    pub beta_high: f64,
    pub proposals: u64,
    pub accepted: u64,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: u64,
    pub beta: f64,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub preset: Option<String>,
    pub rng_algorithm: String,
    pub gaussian_transform: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub cycle_end_samples: Vec<Vec<f64>>,
    pub acceptance_by_phase: Vec<PhaseAcceptance>,
    pub thinned_trace: Option<Vec<TracePoint>>,
    pub metadata: RunMetadata,
}

fn unix_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

#[derive(Debug, Clone, Default)]
struct PhaseCounter {
    proposals: [u64; 10],
    accepted: [u64; 10],
}

impl PhaseCounter {
    fn record(&mut self, beta: f64, accepted: bool) {
        let k = ((beta * 10.0) as usize).min(9);
        self.proposals[k] += 1;
        self.accepted[k] += accepted as u64;
    }

    fn report(&self) -> Vec<PhaseAcceptance> {
        (0..10)
            .map(|k| PhaseAcceptance {
                beta_low: k as f64 / 10.0,
                beta_high: (k + 1) as f64 / 10.0,
                proposals: self.proposals[k],
                accepted: self.accepted[k],
                rate: (self.proposals[k] > 0)
                    .then(|| self.accepted[k] as f64 / self.proposals[k] as f64),
            })
            .collect()
    }
}

/// A cyclical chain that can be advanced one step or one cycle at a time.
#[derive(Debug, Clone)]
pub struct CyclicalChain<'a> {
    kernel: MhKernel<'a>,
    schedule: Schedule,
    state: ChainState,
    step: u64,
    phases: PhaseCounter,
}

impl<'a> CyclicalChain<'a> {
    pub fn new(target: &'a Target, schedule: Schedule, proposal: &'a ProposalSpec, start: Vec<f64>) -> Result<Self> {
        Ok(Self {
            kernel: MhKernel::new(target, proposal),
            schedule,
            state: ChainState::new(target, start)?,
            step: 0,
            phases: PhaseCounter::default(),
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.state.point
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Advances to `θ^(j+1)`; returns the temperature used.
    pub fn step(&mut self, rng: &mut Stream) -> f64 {
        self.step += 1;
        let l = self.schedule.cycle_length as u64;
        let beta = self.schedule.beta_step((self.step % l) as usize);
        let accepted = self.kernel.step(rng, beta, &mut self.state);
        self.phases.record(beta, accepted);
        beta
    }

    /// Runs the remaining steps of the current cycle.
    pub fn run_cycle(&mut self, rng: &mut Stream) -> &[f64] {
        let l = self.schedule.cycle_length as u64;
        loop {
            self.step(rng);
            if self.step.is_multiple_of(l) {
                return &self.state.point;
            }
        }
    }
}

/// Cyclical MCMC: draws `θ^(0) ~ ν^(0)`, runs `K L` steps and returns the
/// cycle-end states.
pub fn run_cyclical(config: &RunConfig, target: &Target) -> Result<RunOutput> {
    run_cyclical_replica(config, target, 0)
}

/// Same as [`run_cyclical`] on replica substream `replica`.
pub fn run_cyclical_replica(config: &RunConfig, target: &Target, replica: u64) -> Result<RunOutput> {
    config.validate(target)?;
    let started = unix_ms();
    let mut rng = Stream::substream(config.seed, replica);
    let start = config.init.draw(&mut rng, target);
    let mut chain = CyclicalChain::new(target, config.schedule, &config.proposal, start)?;
    let thin = config.thin_every();
    let mut trace = thin.map(|_| Vec::new());
    let mut samples = Vec::with_capacity(config.cycles);
    let l = config.schedule.cycle_length as u64;
    let total = l * config.cycles as u64;
    while chain.steps_taken() < total {
        let beta = chain.step(&mut rng);
        let j = chain.steps_taken();
        if let (Some(every), Some(tr)) = (thin, trace.as_mut()) {
            if j % every as u64 == 0 {
                tr.push(TracePoint {
                    step: j,
                    beta,
                    point: chain.state().to_vec(),
                });
            }
        }
        if j % l == 0 {
            samples.push(chain.state().to_vec());
        }
    }
    Ok(RunOutput {
        cycle_end_samples: samples,
        acceptance_by_phase: chain.phases.report(),
        thinned_trace: trace,
        metadata: RunMetadata {
            seed: config.seed,
            preset: None,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            gaussian_transform: GAUSSIAN_TRANSFORM.to_string(),
            started_unix_ms: started,
            finished_unix_ms: unix_ms(),
        },
    })
}

/// Runs `f(i, stream_i)` for `i in 0..replicas` in parallel, each on its own
/// substream of `seed`. Results come back in replica order.
pub fn replica_map<T, F>(seed: u64, replicas: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut Stream) -> T + Sync,
{
    (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = Stream::substream(seed, i);
            f(i, &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WithinModeRun {
    pub final_state: Vec<f64>,
    /// States `θ^(L2+1) .. θ^(L)`.
    pub trace: Vec<Vec<f64>>,
    pub accepted: usize,
}

fn check_mode_start(
    config: &RunConfig,
    target: &Target,
    regions: &ModeRegion,
    region_index: usize,
    start: &[f64],
    start_step: usize,
) -> Result<()> {
    config.validate(target)?;
    if start.len() != target.dimension() {
        return invalid("start point dimension does not match the target");
    }
    if !regions.inner(region_index)?.contains(start) {
        return invalid(format!("start point lies outside inner set I_{region_index}"));
    }
    if start_step >= config.schedule.cycle_length {
        return invalid(format!(
            "start step {start_step} must be below the cycle length {}",
            config.schedule.cycle_length
        ));
    }
    Ok(())
}

/// Restricted chain `θ^(L2) = start`, `θ^(i) ~ M_i^(j)(θ^(i-1), ·)` for
/// `L2 < i <= L`.
pub fn run_within_mode(
    config: &RunConfig,
    target: &Target,
    regions: &ModeRegion,
    region_index: usize,
    start: &[f64],
    start_step: usize,
    rng: &mut Stream,
) -> Result<WithinModeRun> {
    check_mode_start(config, target, regions, region_index, start, start_step)?;
    let region = regions.region(region_index)?;
    let mut kernel = MhKernel::new(target, &config.proposal);
    let mut state = ChainState::new(target, start.to_vec())?;
    let l = config.schedule.cycle_length;
    let mut trace = Vec::with_capacity(l - start_step);
    let mut accepted = 0;
    for i in start_step + 1..=l {
        let beta = config.schedule.beta_step(i);
        accepted += kernel.step_within(rng, beta, &mut state, Some(region)) as usize;
        trace.push(state.point.clone());
    }
    Ok(WithinModeRun {
        final_state: state.point,
        trace,
        accepted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EscapeEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub escapes: usize,
    pub replicas: usize,
}

/// Fraction of unrestricted continuations from `start` at step `L2` that
/// leave `Θ_j` at some step in `(L2, L]`, with its binomial standard error.
/// Replica `i` uses substream `i` of `config.seed`.
pub fn estimate_escape_probability(
    config: &RunConfig,
    target: &Target,
    regions: &ModeRegion,
    region_index: usize,
    start: &[f64],
    start_step: usize,
    replicas: usize,
) -> Result<EscapeEstimate> {
    if replicas < 1 {
        return invalid("at least one replica is required");
    }
    check_mode_start(config, target, regions, region_index, start, start_step)?;
    let region = regions.region(region_index)?;
    let l = config.schedule.cycle_length;
    let escaped = replica_map(config.seed, replicas, |_, rng| {
        let mut kernel = MhKernel::new(target, &config.proposal);
        let mut state = ChainState::new(target, start.to_vec()).expect("validated start");
        for i in start_step + 1..=l {
            kernel.step(rng, config.schedule.beta_step(i), &mut state);
            if !region.contains(&state.point) {
                return true;
            }
        }
        false
    });
    let escapes = escaped.iter().filter(|&&e| e).count();
    let p = escapes as f64 / replicas as f64;
    Ok(EscapeEstimate {
        probability: p,
        std_error: (p * (1.0 - p) / replicas as f64).sqrt(),
        escapes,
        replicas,
    })
}
