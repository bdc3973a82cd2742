use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use collusion_core::analysis::{fit_distances, set_deviations, DeviationMethod, DeviationShares, FitTable, OutcomeVar};
use collusion_core::bargaining::{
    benchmark_suite, benchmark_suite_with, frontier_samples, minmax_disagreement, minmax_disagreement_on_grid,
};
use collusion_core::experiment::{
    builtin_param_sets, run_experiment, Exploration, ExperimentSpec, Family, ParamSet, Technology,
    DEFAULT_RUNS,
};
use collusion_core::io::{csv_bytes, fmt_num, load_simulation, write_atomic, write_experiment, LoadedSimulation};
use collusion_core::market::nash_quantities;
use collusion_core::qlearning::default_grid;
use collusion_core::{BenchmarkPoint, Firm, MarketParams, Outcome};

use crate::args::{required, MinmaxMode, AnalyzeArgs, BenchmarksArgs, DeviateArgs, FrontierArgs, SimulateArgs};
use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SAMPLES: usize = 101;

pub const BENCHMARKS_CSV: &str = "benchmarks.csv";
pub const PARAMETERS_CSV: &str = "parameters.csv";

pub const OUTCOME_HEADER: [&str; 9] = ["q_L", "q_H", "Q", "p", "pi_L", "pi_H", "PS", "CS", "TS"];

pub fn outcome_cells(o: &Outcome) -> Vec<String> {
    o.fields().iter().map(|&v| fmt_num(v)).collect()
}

fn header<'a>(lead: &[&'a str], rest: &[&'a str]) -> Vec<&'a str> {
    lead.iter().chain(rest).copied().collect()
}

/// Writes `bytes` to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            write_atomic(p, bytes)?;
        }
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

pub fn suites(sets: &[ParamSet]) -> CliResult<Vec<(String, Vec<BenchmarkPoint>)>> {
    sets.iter()
        .map(|s| Ok((s.name.clone(), benchmark_suite(&s.params)?)))
        .collect()
}

fn suite_with_mode(params: &MarketParams, mode: MinmaxMode) -> CliResult<Vec<BenchmarkPoint>> {
    let minmax = match mode {
        MinmaxMode::Continuous => minmax_disagreement(params),
        MinmaxMode::Grid => minmax_disagreement_on_grid(params, &default_grid()),
    };
    Ok(benchmark_suite_with(params, &minmax)?)
}

pub fn benchmarks(args: BenchmarksArgs) -> CliResult<()> {
    let sets = builtin_param_sets(args.family.unwrap_or(Family::Main));
    let mode = args.minmax.unwrap_or_default();
    let suites = sets
        .iter()
        .map(|s| Ok((s.name.clone(), suite_with_mode(&s.params, mode)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let rows = suites.iter().flat_map(|(name, points)| {
        points.iter().map(move |b| {
            let mut row = vec![name.clone(), b.label.as_str().to_string()];
            row.extend(outcome_cells(&b.outcome));
            row
        })
    });
    let table = csv_bytes(&header(&["set", "benchmark"], &OUTCOME_HEADER), rows)?;

    let Some(dir) = args.out else {
        return emit(None, &table);
    };
    let mut params = Vec::with_capacity(sets.len());
    for s in &sets {
        let p = &s.params;
        let (q_l, q_h) = nash_quantities(p)?;
        let mut row = vec![s.name.clone()];
        row.extend(
            [p.a, p.b, p.c_l, p.c_h, q_l, q_h, q_l + q_h, p.monopoly_quantity(Firm::L)].map(fmt_num),
        );
        params.push(row);
    }
    let params = csv_bytes(&["set", "a", "b", "c_L", "c_H", "q_L_NE", "q_H_NE", "Q_NE", "Q_M"], params)?;
    fs::create_dir_all(&dir)?;
    write_atomic(&dir.join(BENCHMARKS_CSV), &table)?;
    write_atomic(&dir.join(PARAMETERS_CSV), &params)?;
    Ok(())
}

pub fn frontier(args: FrontierArgs) -> CliResult<()> {
    let name = required(args.spec, "spec")?;
    let family = args.family.unwrap_or(Family::Main);
    let set = builtin_param_sets(family)
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| CliError::Usage(format!("unknown parameter set `{name}`")))?;
    let params = set.params;

    let samples = frontier_samples(&params, args.samples.unwrap_or(DEFAULT_SAMPLES))?;
    let mut rows: Vec<Vec<String>> = samples
        .iter()
        .map(|pt| {
            let mut row = vec!["frontier".to_string(), String::new()];
            row.extend([pt.pi_l, pt.pi_h, pt.p, pt.q_l, pt.q_h].map(fmt_num));
            row
        })
        .collect();
    for b in suite_with_mode(&params, args.minmax.unwrap_or_default())? {
        let o = b.outcome;
        let mut row = vec!["benchmark".to_string(), b.label.as_str().to_string()];
        row.extend([o.pi_l, o.pi_h, o.p, o.q_l, o.q_h].map(fmt_num));
        rows.push(row);
    }
    let bytes = csv_bytes(&["kind", "label", "pi_L", "pi_H", "p", "q_L", "q_H"], rows)?;
    emit(args.out.as_deref(), &bytes)
}

fn simulation_spec(args: &SimulateArgs) -> CliResult<ExperimentSpec> {
    let exploration = match (args.nu, args.beta) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either nu or beta, not both".into())),
        (None, Some(beta)) => Exploration::Beta(beta),
        (Some(nu), None) => Exploration::Nu(nu),
        (None, None) => Technology::default().exploration,
    };
    let defaults = Technology::default();
    let technology = Technology {
        alpha: args.alpha.unwrap_or(defaults.alpha),
        exploration,
        k: args.k.unwrap_or(defaults.k),
        delta: args.delta.unwrap_or(defaults.delta),
    };
    let family = args.family.unwrap_or(Family::Main);
    let mut spec = ExperimentSpec::new(
        family,
        technology,
        args.runs.unwrap_or(DEFAULT_RUNS),
        args.seed.unwrap_or(DEFAULT_SEED),
    );
    if let Some(only) = &args.only {
        if let Some(bad) = only.iter().find(|n| !spec.param_sets.iter().any(|s| &s.name == *n)) {
            return Err(CliError::Usage(format!("unknown parameter set `{bad}`")));
        }
        spec.param_sets.retain(|s| only.contains(&s.name));
    }
    if let Some(v) = args.max_periods {
        spec.max_periods = v;
    }
    if let Some(v) = args.convergence_window {
        spec.convergence_window = v;
    }
    if let Some(v) = args.post_rounds {
        spec.post_rounds = v;
    }
    if let Some(v) = args.keep_q {
        spec.keep_q = v;
    }
    spec.validate()?;
    Ok(spec)
}

pub fn simulate(args: SimulateArgs) -> CliResult<()> {
    let out = required(args.out.clone(), "out")?;
    let spec = simulation_spec(&args)?;
    let summary = run_experiment(&spec)?;
    let manifest = write_experiment(&out, &spec, &summary)?;

    eprintln!("beta = {:e}", manifest.beta);
    for s in &summary.sets {
        let mean = |f: fn(&Outcome) -> f64| s.mean.as_ref().map(f).map(fmt_num).unwrap_or_else(|| "-".into());
        eprintln!(
            "{:<6} converged {}/{}  Q {}  PS {}",
            s.name,
            s.converged,
            s.runs,
            mean(|o| o.q),
            mean(|o| o.ps)
        );
    }
    let failed: Vec<&str> = summary.sets.iter().filter(|s| !s.valid()).map(|s| s.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(CliError::NotConverged(format!(
            "no run converged within {} periods for: {}",
            spec.max_periods,
            failed.join(", ")
        )));
    }
    Ok(())
}

pub fn load(dir: &Path) -> CliResult<LoadedSimulation> {
    Ok(load_simulation(dir)?)
}

pub fn fit_table(sim: &LoadedSimulation) -> CliResult<FitTable> {
    let benches: BTreeMap<String, Vec<BenchmarkPoint>> =
        suites(&sim.manifest.spec.param_sets)?.into_iter().collect();
    Ok(fit_distances(&sim.summary, &benches)?)
}

fn normalized_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    out.with_file_name(format!("{stem}_normalized.{ext}"))
}

pub fn fit_csvs(table: &FitTable) -> CliResult<(Vec<u8>, Vec<u8>)> {
    let columns: Vec<&str> = OutcomeVar::ALL.iter().map(|v| v.column()).collect();
    let head = header(&["benchmark"], &columns);
    let rows = |pick: fn(&collusion_core::analysis::FitRow) -> [f64; 4]| {
        table
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![r.label.as_str().to_string()];
                row.extend(pick(r).map(fmt_num));
                row
            })
            .collect::<Vec<_>>()
    };
    Ok((csv_bytes(&head, rows(|r| r.distance))?, csv_bytes(&head, rows(|r| r.normalized))?))
}

pub fn analyze(args: AnalyzeArgs) -> CliResult<()> {
    let sim = load(&required(args.sim, "sim")?)?;
    let out = required(args.out, "out")?;
    let (raw, normalized) = fit_csvs(&fit_table(&sim)?)?;
    emit(Some(&out), &raw)?;
    emit(Some(&normalized_path(&out)), &normalized)
}

pub struct SetVerdicts {
    pub set: String,
    pub shares: DeviationShares,
    pub rows: Vec<Vec<String>>,
    pub split: collusion_core::analysis::SubsampleSplit,
}

/// Runs the deviation test on every converged run of a loaded simulation
/// whose Q-matrices have been attached.
pub fn verdicts(sim: &LoadedSimulation, method: DeviationMethod) -> CliResult<Vec<SetVerdicts>> {
    let cfg = sim.manifest.spec.technology.learner_config()?;
    sim.summary
        .sets
        .iter()
        .map(|set| {
            let verdicts = set_deviations(set, &cfg, method)?;
            let shares = DeviationShares::from_classes(verdicts.iter().map(|(_, v)| v.class));
            let rows = verdicts
                .iter()
                .map(|(r, v)| {
                    let mut row = vec![r.set.clone(), r.run.to_string(), v.anchor_state.to_string(), v.class.as_str().to_string()];
                    for a in &v.agents {
                        row.extend([
                            a.prescribed_action.to_string(),
                            a.deviation_action.to_string(),
                            fmt_num(a.deviation_payoff),
                            fmt_num(a.baseline_payoff),
                            a.profitable.to_string(),
                        ]);
                    }
                    row
                })
                .collect();
            let split = collusion_core::analysis::subsample_split(&set.name, verdicts.iter().map(|(r, v)| (*r, v)));
            Ok(SetVerdicts { set: set.name.clone(), shares, rows, split })
        })
        .collect()
}

pub const SHARES_HEADER: [&str; 7] = ["set", "method", "runs", "neither", "only_L", "only_H", "both"];

pub const VERDICT_HEADER: [&str; 14] = [
    "set", "run", "anchor_state", "class", "L_prescribed", "L_deviation", "L_deviation_payoff",
    "L_baseline_payoff", "L_profitable", "H_prescribed", "H_deviation", "H_deviation_payoff",
    "H_baseline_payoff", "H_profitable",
];

pub fn share_row(set: &str, method: DeviationMethod, s: &DeviationShares) -> Vec<String> {
    let mut row = vec![set.to_string(), method.as_str().to_string(), s.runs.to_string()];
    row.extend([s.neither, s.only_l, s.only_h, s.both].map(fmt_num));
    row
}

pub fn with_q(dir: &Path) -> CliResult<LoadedSimulation> {
    let mut sim = load(dir)?;
    sim.attach_q_matrices().map_err(|e| {
        CliError::Input(format!("{e} in {} (was the simulation run with --keep-q false?)", dir.display()))
    })?;
    Ok(sim)
}

pub fn deviate(args: DeviateArgs) -> CliResult<()> {
    let sim = with_q(&required(args.sim, "sim")?)?;
    let out = required(args.out, "out")?;
    let method = args.method.unwrap_or(DeviationMethod::BestResponse);
    let results = verdicts(&sim, method)?;

    let shares = csv_bytes(&SHARES_HEADER, results.iter().map(|r| share_row(&r.set, method, &r.shares)))?;
    let per_run = match &args.runs_out {
        Some(_) => Some(csv_bytes(&VERDICT_HEADER, results.iter().flat_map(|r| r.rows.iter().cloned()))?),
        None => None,
    };
    emit(Some(&out), &shares)?;
    if let (Some(path), Some(bytes)) = (&args.runs_out, per_run) {
        emit(Some(path), &bytes)?;
    }
    for r in &results {
        eprintln!("{:<6} neither {:.3}  only_L {:.3}  only_H {:.3}  both {:.3}", r.set, r.shares.neither, r.shares.only_l, r.shares.only_h, r.shares.both);
    }
    Ok(())
}
