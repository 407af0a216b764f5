//! One executor per mode. Each writes its CSV artifacts and returns the JSON results block.

use cyclical_core::diagnostics::{estimate_weights, mode_marginal_error, spearman};
use cyclical_core::kernels::{ModeRegion, ProposalSpec};
use cyclical_core::rng::Stream;
use cyclical_core::sampler::{estimate_escape_probability, run_cyclical, InitialDistribution, RunConfig};
use cyclical_core::schedule::Schedule;
use cyclical_core::spectral::{
    check_identities, check_lyapunov_lemma, check_path_sampling, fit_drift, theta_grid, verify_prop1_scaling,
    verify_theorem1, verify_theorem2, ChainSummary, FiniteChain, GridRegions, SLACK_TOL,
};
use cyclical_core::targets::{Domain, Preset, Target};
use serde_json::{json, Value};

use crate::config::{LyapunovSection, RunSection, SpectralSection, Theorem2Section};
use crate::error::{invalid, CliResult};
use crate::output::{OutDir, Table};

const DENSITY_BINS: usize = 200;

pub fn preset_regions(p: Preset) -> ModeRegion {
    match p {
        Preset::Toy1dEqual | Preset::Toy1dUnequal => ModeRegion::toy1d(),
        Preset::Grid2dEqual | Preset::Grid2dUnequal => ModeRegion::grid2d(),
    }
}

fn dims_header(d: usize, first: &[&str]) -> Vec<String> {
    first.iter().map(|s| s.to_string()).chain((0..d).map(|i| format!("dim_{i}"))).collect()
}

/// Component weights when mode `j` is exactly the box around component `j`.
fn matching_truth(target: &Target, regions: &ModeRegion) -> Option<Vec<f64>> {
    let comps = target.components();
    (comps.len() == regions.len() && comps.iter().zip(&regions.boxes).all(|(c, b)| b.contains(&c.mean)))
        .then(|| comps.iter().map(|c| c.weight).collect())
}

pub fn run(sec: &RunSection, seed: u64, target: &Target, preset: Option<Preset>, out: &mut OutDir) -> CliResult<Value> {
    let config: RunConfig = sec.run_config(seed);
    let output = run_cyclical(&config, target)?;
    let d = target.dimension();
    let samples = &output.cycle_end_samples;

    let mut table = Table::new(&dims_header(d, &["cycle"]));
    for (k, s) in samples.iter().enumerate() {
        let mut row = vec![(k + 1).to_string()];
        row.extend(s.iter().map(|x| x.to_string()));
        table.push(row);
    }
    out.write_csv("samples.csv", &table)?;

    let mut acc = Table::new(&["beta_low", "beta_high", "proposals", "accepted", "rate"]);
    for p in &output.acceptance_by_phase {
        acc.push(vec![
            p.beta_low.to_string(),
            p.beta_high.to_string(),
            p.proposals.to_string(),
            p.accepted.to_string(),
            p.rate.map_or(String::new(), |r| r.to_string()),
        ]);
    }
    out.write_csv("acceptance.csv", &acc)?;

    if let Some(trace) = &output.thinned_trace {
        let mut t = Table::new(&dims_header(d, &["step", "beta"]));
        for p in trace {
            let mut row = vec![p.step.to_string(), p.beta.to_string()];
            row.extend(p.point.iter().map(|x| x.to_string()));
            t.push(row);
        }
        out.write_csv("trace.csv", &t)?;
    }

    if d == 1 {
        out.write_csv("density.csv", &density_curve(samples, target))?;
    }

    let mut results = json!({
        "cycles": samples.len(),
        "acceptance_by_phase": output.acceptance_by_phase,
    });

    let diag = &sec.diagnostics;
    let Some(regions) = diag.regions.clone().or_else(|| preset.map(preset_regions)) else {
        return Ok(results);
    };
    let weights = estimate_weights(samples, &regions, diag.assignment)?;
    let truth = matching_truth(target, &regions);
    let mut wt = Table::new(&["component", "count", "estimate", "truth"]);
    for (j, (c, w)) in weights.counts.iter().zip(&weights.weights).enumerate() {
        let t = truth.as_ref().map_or(String::new(), |t| t[j].to_string());
        wt.push(vec![(j + 1).to_string(), c.to_string(), w.to_string(), t]);
    }
    out.write_csv("weights.csv", &wt)?;
    results["weights"] = json!({
        "estimates": weights.weights,
        "counts": weights.counts,
        "unassigned": weights.unassigned,
        "total": weights.total,
        "truth": truth,
    });
    if truth.is_some() && regions.len() > 1 {
        let variances: Vec<f64> = target.components().iter().map(|c| c.variance).collect();
        results["weight_variance_spearman"] = json!(spearman(&weights.weights, &variances).ok());
    }

    let requests: Vec<(usize, usize)> = if diag.marginals.is_empty() {
        (0..regions.len()).map(|j| (j, 0)).collect()
    } else {
        diag.marginals.iter().map(|m| (m.mode, m.axis)).collect()
    };
    let mut marginals = Vec::new();
    for (mode, axis) in requests {
        let m = mode_marginal_error(samples, &regions, target, mode, axis, diag.bins)?;
        let mut t = Table::new(&["bin_center", "estimated", "truth"]);
        for (c, e, tr) in m.curve() {
            t.push_numbers(&[c, e, tr]);
        }
        out.write_csv(&format!("marginal_mode{}_axis{axis}.csv", mode + 1), &t)?;
        marginals.push(json!({
            "mode": mode + 1,
            "axis": axis,
            "bins": m.bins,
            "sample_count": m.sample_count,
            "low_count": m.low_count,
            "l1_error": m.l1_error,
        }));
    }
    results["marginals"] = Value::Array(marginals);
    Ok(results)
}

/// Histogram of all cycle-end samples against the target density, on the
/// target domain or the sample range.
fn density_curve(samples: &[Vec<f64>], target: &Target) -> Table {
    let (lo, hi) = match target.domain() {
        Some(d) => (d.lower[0], d.upper[0]),
        None => samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s[0]), b.max(s[0]))),
    };
    let mut t = Table::new(&["x", "estimated", "truth"]);
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return t;
    }
    let w = (hi - lo) / DENSITY_BINS as f64;
    let mut counts = vec![0usize; DENSITY_BINS];
    for s in samples {
        if s[0] >= lo && s[0] <= hi {
            counts[(((s[0] - lo) / w) as usize).min(DENSITY_BINS - 1)] += 1;
        }
    }
    let n = samples.len().max(1) as f64;
    for (b, c) in counts.iter().enumerate() {
        let x = lo + (b as f64 + 0.5) * w;
        let truth = target.density(&[x]).unwrap_or(0.0);
        t.push_numbers(&[x, *c as f64 / (n * w), truth]);
    }
    t
}

fn one_dimensional(target: &Target) -> CliResult<()> {
    if target.dimension() != 1 {
        return invalid("spectral and theorem2 modes need a one-dimensional target");
    }
    Ok(())
}

/// Recursion checks on `chains` random discretizations of `target`.
fn random_suite(target: &Target, interval: (f64, f64), chains: usize, seed: u64) -> CliResult<Value> {
    let mut rng = Stream::new(seed);
    let mut rows = Vec::with_capacity(chains);
    let mut all_ok = true;
    for _ in 0..chains {
        let n = 10 + rng.below(71) as usize;
        let l = 16 + rng.below(113) as usize;
        let r = if rng.uniform() < 0.5 { 1.0 } else { 2.0 };
        let window = 1 + rng.below(3) as usize;
        let chain = FiniteChain::discretize(target, interval, n, window, &Schedule::cosine(l, r)?)?;
        let raw: Vec<f64> = (0..n).map(|_| -rng.uniform().max(f64::MIN_POSITIVE).ln()).collect();
        let total: f64 = raw.iter().sum();
        let nu0: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let rep = verify_theorem1(&chain, &nu0, 2)?;
        let ok = rep.recursion_slack >= -SLACK_TOL && rep.cauchy_schwarz_slack >= -SLACK_TOL;
        all_ok &= ok;
        rows.push(json!({
            "N": n, "L": l, "r": r, "m": window,
            "recursion_slack": rep.recursion_slack,
            "cauchy_schwarz_slack": rep.cauchy_schwarz_slack,
            "ok": ok,
        }));
    }
    Ok(json!({ "chains": rows, "all_ok": all_ok }))
}

pub fn spectral(sec: &SpectralSection, seed: u64, target: &Target, out: &mut OutDir) -> CliResult<Value> {
    one_dimensional(target)?;
    let g = sec.grid();
    let chain = FiniteChain::discretize(target, g.interval, g.n, g.m, &g.schedule()?)?;
    let nu0 = sec.start.law(g.n)?;
    let rep = verify_theorem1(&chain, &nu0, sec.cycles)?;
    let l = chain.cycle_length();

    let mut rng = Stream::new(seed);
    let (mut adjoint, mut q_neg, mut w_asym, mut q_rows) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut path_residual = 0.0f64;
    for j in 1..=l {
        let id = check_identities(&chain, j, 100, &mut rng)?;
        adjoint = adjoint.max(id.adjoint);
        q_neg = q_neg.max(id.q_negativity);
        w_asym = w_asym.max(id.w_asymmetry);
        q_rows = q_rows.max(id.q_row_sum);
        path_residual = path_residual.max(check_path_sampling(&chain, j, sec.path_nodes)?.residual);
    }
    let lambda_within_bound =
        rep.profile.alphas.iter().zip(&rep.profile.lambdas).all(|(a, lam)| *lam <= 1.0 + a + SLACK_TOL);
    let cycle_tv: Vec<f64> = (1..=sec.cycles).map(|k| rep.trajectory[k * l].tv).collect();
    let tv_non_increasing = cycle_tv.windows(2).all(|w| w[1] <= w[0] + SLACK_TOL);

    let mut traj = Table::new(&["step", "tv", "var", "bound"]);
    for p in &rep.trajectory {
        traj.push(vec![p.step.to_string(), p.tv.to_string(), p.var.to_string(), p.bound.to_string()]);
    }
    out.write_csv("trajectory.csv", &traj)?;
    let mut prof = Table::new(&["j", "beta", "alpha", "lambda"]);
    for j in 1..=l {
        prof.push_numbers(&[j as f64, chain.beta(j), rep.profile.alphas[j - 1], rep.profile.lambdas[j - 1]]);
    }
    out.write_csv("spectral_profile.csv", &prof)?;
    let pi_header: Vec<String> =
        ["index", "x", "energy"].iter().map(|s| s.to_string()).chain((0..=l).map(|j| format!("pi_{j}"))).collect();
    let mut pis = Table::new(&pi_header);
    for row in chain.pi_table() {
        pis.push_numbers(&row);
    }
    out.write_csv("chain_pi.csv", &pis)?;
    if sec.dump_kernels {
        let mut k = Table::new(&["j", "from", "to", "p"]);
        for j in 1..=l {
            let m = chain.kernel(j);
            for x in 0..g.n {
                for y in 0..g.n {
                    if m[(x, y)] != 0.0 {
                        k.push(vec![j.to_string(), x.to_string(), y.to_string(), m[(x, y)].to_string()]);
                    }
                }
            }
        }
        out.write_csv("kernels.csv", &k)?;
    }

    let mut results = json!({
        "chain": ChainSummary::from(&chain),
        "alpha": rep.profile.alphas,
        "lambda": rep.profile.lambdas,
        "capital_lambda": rep.profile.capital_lambda,
        "eigen_residual": rep.profile.max_residual,
        "recursion_ok": rep.recursion_slack >= -SLACK_TOL,
        "cauchy_schwarz_ok": rep.cauchy_schwarz_slack >= -SLACK_TOL,
        "unrolled_ok": rep.unrolled_slack >= -SLACK_TOL,
        "recursion_slack": rep.recursion_slack,
        "cauchy_schwarz_slack": rep.cauchy_schwarz_slack,
        "unrolled_slack": rep.unrolled_slack,
        "stated_curve": rep.stated_curve,
        "stated_holds": rep.stated_holds,
        "cycle_end_tv": cycle_tv,
        "cycle_tv_non_increasing": tv_non_increasing,
        "lambda_within_bound": lambda_within_bound,
        "identities": {
            "adjoint": adjoint,
            "q_negativity": q_neg,
            "w_asymmetry": w_asym,
            "q_row_sum": q_rows,
        },
        "path_sampling": { "nodes": sec.path_nodes, "max_residual": path_residual },
    });
    if !sec.cycle_lengths.is_empty() {
        let table = verify_prop1_scaling(target, g.interval, g.n, g.m, &sec.cycle_lengths, g.power)?;
        let mut t = Table::new(&["L", "max_alpha", "max_ratio", "constant"]);
        for r in &table.rows {
            t.push_numbers(&[r.cycle_length as f64, r.max_alpha, r.max_ratio, r.constant]);
        }
        out.write_csv("prop1_scaling.csv", &t)?;
        results["prop1"] = serde_json::to_value(&table).expect("serializable");
    }
    if sec.random_chains > 0 {
        results["random_suite"] = random_suite(target, g.interval, sec.random_chains, seed)?;
    }
    Ok(results)
}

pub fn theorem2(
    sec: &Theorem2Section,
    seed: u64,
    replicas: Option<usize>,
    target: &Target,
    out: &mut OutDir,
) -> CliResult<Value> {
    one_dimensional(target)?;
    let g = sec.grid();
    let schedule = g.schedule()?;
    let chain = FiniteChain::discretize(target, g.interval, g.n, g.m, &schedule)?;
    let modes = sec.regions.clone().unwrap_or_else(ModeRegion::two_mode);
    let regions = GridRegions::from_modes(&chain, &modes)?;
    let l2 = sec.start_step.unwrap_or(g.cycle_length / 2);
    let nu0 = sec.start.law(g.n)?;
    let rep = verify_theorem2(&chain, &regions, l2, &nu0)?;

    let mut steps = vec![l2];
    steps.extend(sec.drift_steps.iter().copied().filter(|&s| s != l2));
    let mut drift = Table::new(&["L2", "region", "kappa", "alpha", "beta", "m", "delta1_bound", "exact_escape"]);
    let mut fits = Vec::new();
    let mut drift_ok = true;
    for &s in &steps {
        if s >= g.cycle_length {
            continue;
        }
        for j in 0..regions.len() {
            let f = fit_drift(&chain, &regions, j, s)?;
            if s == l2 {
                drift_ok &= f.holds;
            }
            drift.push_numbers(&[s as f64, (j + 1) as f64, f.kappa, f.alpha, f.beta, f.m, f.delta1_bound, f.exact_escape]);
            fits.push(json!({ "L2": s, "fit": f }));
        }
    }
    out.write_csv("drift.csv", &drift)?;
    let mut reg = Table::new(&["region", "escape", "mixing", "inner_mass"]);
    for r in &rep.regions {
        reg.push_numbers(&[(r.region + 1) as f64, r.escape, r.mixing, r.inner_mass]);
    }
    out.write_csv("theorem2_regions.csv", &reg)?;

    let mut results = json!({
        "chain": ChainSummary::from(&chain),
        "L2": l2,
        "report": rep,
        "drift": fits,
        "drift_bounds_delta1": drift_ok,
    });

    if let Some(replicas) = replicas {
        let (a, b) = g.interval;
        let bounded = Target::new(target.components().to_vec(), Some(Domain::new(vec![a], vec![b])?))?;
        let config = RunConfig {
            cycles: 1,
            schedule,
            proposal: ProposalSpec::lattice((b - a) / (g.n - 1) as f64, g.m),
            init: InitialDistribution::Target,
            seed,
            thinning: None,
        };
        let mut checks = Vec::new();
        for j in 0..regions.len() {
            let inner = &regions.inner[j];
            let idx = inner[inner.len() / 2];
            let start = [chain.grid()[idx]];
            let est = estimate_escape_probability(&config, &bounded, &modes, j, &start, l2, replicas)?;
            let exact = cyclical_core::spectral::exact_escape_probability(&chain, &regions.regions[j], idx, l2)?;
            checks.push(json!({
                "region": j + 1,
                "start": start[0],
                "monte_carlo": est,
                "exact": exact,
                "z_score": if est.std_error > 0.0 { Some((est.probability - exact) / est.std_error) } else { None },
            }));
        }
        results["escape_monte_carlo"] = Value::Array(checks);
    }
    Ok(results)
}

pub fn lyapunov(sec: &LyapunovSection, out: &mut OutDir) -> CliResult<Value> {
    if !(sec.theta_step > 0.0 && sec.theta_min <= sec.theta_max) {
        return invalid("theta grid needs theta_min <= theta_max and theta_step > 0");
    }
    if sec.s.is_empty() || sec.c.is_empty() {
        return invalid("lyapunov mode needs at least one s and one c");
    }
    let grid = theta_grid(sec.theta_min, sec.theta_max, sec.theta_step);
    let mut table = Table::new(&["s", "c", "theta", "kv", "v", "violation"]);
    let mut cases = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for &s in &sec.s {
        for &c in &sec.c {
            let chk = check_lyapunov_lemma(sec.sigma, s, c, sec.alpha, &grid)?;
            for p in &chk.points {
                table.push_numbers(&[s, c, p.theta, p.kv, p.v, p.violation]);
            }
            worst = worst.max(chk.max_violation);
            cases.push(json!({
                "s": s,
                "c": c,
                "max_violation": chk.max_violation,
                "argmax_theta": chk.argmax_theta,
                "holds": chk.holds,
            }));
        }
    }
    out.write_csv("lyapunov.csv", &table)?;
    Ok(json!({
        "sigma": sec.sigma,
        "alpha": sec.alpha,
        "grid_points": grid.len(),
        "cases": cases,
        "max_violation": worst,
        "holds": worst <= 0.0,
    }))
}
