//! Experiment configuration (JSON).

use std::path::{Path, PathBuf};

use cyclical_core::diagnostics::{Assignment, DEFAULT_BINS};
use cyclical_core::kernels::{ModeRegion, ProposalSpec};
use cyclical_core::sampler::{InitialDistribution, RunConfig};
use cyclical_core::schedule::{Schedule, DEFAULT_FLOOR};
use cyclical_core::targets::{Domain, MixtureComponent, Preset, Target};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Run,
    Spectral,
    Theorem2,
    Lyapunov,
    Reproduce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReproduceName {
    Toy1dEqual,
    Toy1dUnequal,
    Grid2dEqual,
    Grid2dUnequal,
    SpectralThm1,
    Theorem2Demo,
    LyapunovDemo,
}

impl ReproduceName {
    pub const ALL: [ReproduceName; 7] = [
        ReproduceName::Toy1dEqual,
        ReproduceName::Toy1dUnequal,
        ReproduceName::Grid2dEqual,
        ReproduceName::Grid2dUnequal,
        ReproduceName::SpectralThm1,
        ReproduceName::Theorem2Demo,
        ReproduceName::LyapunovDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReproduceName::Toy1dEqual => "toy1d-equal",
            ReproduceName::Toy1dUnequal => "toy1d-unequal",
            ReproduceName::Grid2dEqual => "grid2d-equal",
            ReproduceName::Grid2dUnequal => "grid2d-unequal",
            ReproduceName::SpectralThm1 => "spectral-thm1",
            ReproduceName::Theorem2Demo => "theorem2-demo",
            ReproduceName::LyapunovDemo => "lyapunov-demo",
        }
    }

    pub fn from_name(name: &str) -> CliResult<Self> {
        Self::ALL.into_iter().find(|r| r.name() == name).ok_or_else(|| {
            let valid: Vec<_> = Self::ALL.iter().map(|r| r.name()).collect();
            CliError::Validation(format!("unknown preset '{name}'; valid names: {}", valid.join(", ")))
        })
    }
}

/// Either a preset name or explicit mixture components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<MixtureComponent>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
}

impl TargetSpec {
    pub fn preset(p: Preset) -> Self {
        Self { preset: Some(p), components: None, domain: None }
    }

    pub fn build(&self) -> CliResult<Target> {
        match (&self.preset, &self.components) {
            (Some(p), None) => {
                if self.domain.is_some() {
                    return invalid("target.domain cannot be combined with target.preset");
                }
                Ok(Target::preset(*p))
            }
            (None, Some(c)) => Ok(Target::new(c.clone(), self.domain.clone())?),
            _ => invalid("target needs exactly one of `preset` or `components`"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalRequest {
    pub mode: usize,
    #[serde(default)]
    pub axis: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Mode boxes; preset targets fall back to their standard boxes.
    #[serde(default)]
    pub regions: Option<ModeRegion>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_assignment")]
    pub assignment: Assignment,
    /// Marginal histograms to compare; empty means axis 0 of every mode.
    #[serde(default)]
    pub marginals: Vec<MarginalRequest>,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self { regions: None, bins: DEFAULT_BINS, assignment: Assignment::StrictBox, marginals: Vec::new() }
    }
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

fn default_assignment() -> Assignment {
    Assignment::StrictBox
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(rename = "K")]
    pub cycles: usize,
    pub schedule: Schedule,
    pub proposal: ProposalSpec,
    pub init: InitialDistribution,
    #[serde(default)]
    pub thinning: Option<usize>,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
}

impl RunSection {
    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            cycles: self.cycles,
            schedule: self.schedule,
            proposal: self.proposal.clone(),
            init: self.init.clone(),
            seed,
            thinning: self.thinning,
        }
    }
}

/// Initial law on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StartLaw {
    #[default]
    Uniform,
    PointMass {
        index: usize,
    },
    Weights {
        values: Vec<f64>,
    },
}

impl StartLaw {
    pub fn law(&self, n: usize) -> CliResult<Vec<f64>> {
        match self {
            StartLaw::Uniform => Ok(vec![1.0 / n as f64; n]),
            StartLaw::PointMass { index } => {
                if *index >= n {
                    return invalid(format!("start index {index} outside the {n}-point grid"));
                }
                let mut v = vec![0.0; n];
                v[*index] = 1.0;
                Ok(v)
            }
            StartLaw::Weights { values } => Ok(values.clone()),
        }
    }
}

/// Grid and schedule shared by the spectral and theorem2 modes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub n: usize,
    pub m: usize,
    pub interval: (f64, f64),
    pub cycle_length: usize,
    pub power: f64,
    pub floor: f64,
}

fn default_power() -> f64 {
    1.0
}

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

impl GridSection {
    pub fn schedule(&self) -> CliResult<Schedule> {
        Ok(Schedule::new(self.cycle_length, self.power, self.floor)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    #[serde(rename = "N")]
    pub n: usize,
    pub m: usize,
    pub interval: (f64, f64),
    #[serde(rename = "L")]
    pub cycle_length: usize,
    #[serde(rename = "r", default = "default_power")]
    pub power: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default = "default_cycles")]
    pub cycles: usize,
    #[serde(default)]
    pub start: StartLaw,
    /// Cycle lengths for the `α_j` scaling table; empty skips it.
    #[serde(rename = "L_list", default)]
    pub cycle_lengths: Vec<usize>,
    #[serde(default = "default_nodes")]
    pub path_nodes: usize,
    /// Number of randomized chains for the recursion check; 0 skips it.
    #[serde(default)]
    pub random_chains: usize,
    #[serde(default)]
    pub dump_kernels: bool,
}

macro_rules! grid_of {
    ($t:ty) => {
        impl $t {
            pub fn grid(&self) -> GridSection {
                GridSection {
                    n: self.n,
                    m: self.m,
                    interval: self.interval,
                    cycle_length: self.cycle_length,
                    power: self.power,
                    floor: self.floor,
                }
            }
        }
    };
}

grid_of!(SpectralSection);
grid_of!(Theorem2Section);

fn default_cycles() -> usize {
    5
}

fn default_nodes() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem2Section {
    #[serde(rename = "N")]
    pub n: usize,
    pub m: usize,
    pub interval: (f64, f64),
    #[serde(rename = "L")]
    pub cycle_length: usize,
    #[serde(rename = "r", default = "default_power")]
    pub power: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    /// Defaults to `L / 2`.
    #[serde(rename = "L2", default)]
    pub start_step: Option<usize>,
    #[serde(default)]
    pub regions: Option<ModeRegion>,
    #[serde(default)]
    pub start: StartLaw,
    /// Extra `L2` values at which drift constants are fitted.
    #[serde(default)]
    pub drift_steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovSection {
    pub sigma: f64,
    pub alpha: f64,
    pub s: Vec<f64>,
    pub c: Vec<f64>,
    pub theta_min: f64,
    pub theta_max: f64,
    pub theta_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral: Option<SpectralSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem2: Option<Theorem2Section>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reproduce: Option<ReproduceName>,
    #[serde(default)]
    pub paper_scale: bool,
    /// Monte-Carlo replicas for the escape cross-check in theorem2 mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn reproduce(name: ReproduceName) -> Self {
        Self {
            mode: Mode::Reproduce,
            seed: 0,
            out: default_out(),
            target: None,
            run: None,
            spectral: None,
            theorem2: None,
            lyapunov: None,
            reproduce: Some(name),
            paper_scale: false,
            replicas: None,
        }
    }

    pub fn from_json(text: &str, origin: &Path) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text, path)
    }

    /// Checks that the section matching `mode` is present and the others are not.
    pub fn validate(&self) -> CliResult<()> {
        let present = [
            ("run", self.run.is_some(), Mode::Run),
            ("spectral", self.spectral.is_some(), Mode::Spectral),
            ("theorem2", self.theorem2.is_some(), Mode::Theorem2),
            ("lyapunov", self.lyapunov.is_some(), Mode::Lyapunov),
            ("reproduce", self.reproduce.is_some(), Mode::Reproduce),
        ];
        for (name, is_set, mode) in present {
            if is_set && mode != self.mode {
                return invalid(format!("section `{name}` does not belong to mode {:?}", self.mode));
            }
            if !is_set && mode == self.mode {
                return invalid(format!("mode {:?} requires a `{name}` section", self.mode));
            }
        }
        let needs_target = matches!(self.mode, Mode::Run | Mode::Spectral | Mode::Theorem2);
        if needs_target && self.target.is_none() {
            return invalid("this mode requires a `target`");
        }
        if !needs_target && self.target.is_some() {
            return invalid("`target` is not used by this mode");
        }
        if self.replicas.is_some() && self.mode != Mode::Theorem2 && self.mode != Mode::Reproduce {
            return invalid("`replicas` applies to theorem2 mode only");
        }
        if self.replicas == Some(0) {
            return invalid("`replicas` must be at least 1");
        }
        Ok(())
    }
}
