//! Plot-ready CSV data for the figure panels of a finished simulation.
//!
//! Every panel is built in memory first. If any panel lacks its inputs the
//! command reports each failing panel and writes nothing.

use std::fs;
use std::path::Path;

use collusion_core::analysis::{DeviationMethod, SYMMETRIC_SET};
use collusion_core::bargaining::{frontier_samples, minmax_disagreement};
use collusion_core::io::{csv_bytes, fmt_num, fmt_opt, write_atomic, LoadedSimulation};
use collusion_core::{BenchmarkLabel, Outcome};

use crate::args::{required, FiguresArgs};
use crate::commands::{self, outcome_cells, share_row, suites, OUTCOME_HEADER, SHARES_HEADER};
use crate::error::{CliError, CliResult};

pub const LEVELS_CSV: &str = "levels.csv";
pub const NORMALIZED_CSV: &str = "normalized.csv";
pub const PARETO_CSV: &str = "pareto.csv";
pub const DEVIATION_CSV: &str = "deviation.csv";
pub const SUBSAMPLE_CSV: &str = "subsample.csv";

const SIMULATION: &str = "simulation";

/// Per set, the simulated mean followed by every benchmark outcome.
type Series = Vec<(String, Vec<(String, Outcome)>)>;

fn series(sim: &LoadedSimulation) -> CliResult<Series> {
    let suites = suites(&sim.manifest.spec.param_sets)?;
    sim.summary
        .sets
        .iter()
        .zip(suites)
        .map(|(set, (_, points))| {
            let mean = set
                .mean
                .ok_or_else(|| CliError::Input(format!("no converged runs for {}", set.name)))?;
            let mut sources = vec![(SIMULATION.to_string(), mean)];
            sources.extend(points.iter().map(|b| (b.label.as_str().to_string(), b.outcome)));
            Ok((set.name.clone(), sources))
        })
        .collect()
}

fn levels(series: &Series) -> CliResult<Vec<u8>> {
    let head: Vec<&str> = ["set", "source"].into_iter().chain(OUTCOME_HEADER).collect();
    let rows = series.iter().flat_map(|(set, sources)| {
        sources.iter().map(move |(source, o)| {
            let mut row = vec![set.clone(), source.clone()];
            row.extend(outcome_cells(o));
            row
        })
    });
    Ok(csv_bytes(&head, rows)?)
}

/// Each source's series divided by its own symmetric-set value. A zero
/// reference leaves the cell empty.
fn normalized(series: &Series) -> CliResult<Vec<u8>> {
    let reference = series
        .iter()
        .find(|(set, _)| set == SYMMETRIC_SET)
        .map(|(_, sources)| sources)
        .ok_or_else(|| CliError::Input(format!("symmetric set `{SYMMETRIC_SET}` missing")))?;
    let head: Vec<&str> = ["set", "source"].into_iter().chain(OUTCOME_HEADER).collect();
    let rows = series.iter().flat_map(|(set, sources)| {
        sources.iter().zip(reference).map(move |((source, o), (_, r))| {
            let mut row = vec![set.clone(), source.clone()];
            row.extend(
                o.fields()
                    .iter()
                    .zip(r.fields())
                    .map(|(&v, r0)| fmt_opt((r0 != 0.0).then(|| v / r0))),
            );
            row
        })
    });
    Ok(csv_bytes(&head, rows)?)
}

fn pareto(sim: &LoadedSimulation, series: &Series, samples: usize) -> CliResult<Vec<u8>> {
    let mut rows = Vec::new();
    let mut push = |set: &str, kind: &str, pi_l: f64, pi_h: f64| {
        rows.push(vec![set.to_string(), kind.to_string(), fmt_num(pi_l), fmt_num(pi_h)]);
    };
    for ((set, sources), ps) in series.iter().zip(&sim.manifest.spec.param_sets) {
        let pick = |name: &str| sources.iter().find(|(s, _)| s == name).map(|(_, o)| *o).expect("source");
        let s = pick(SIMULATION);
        push(set, SIMULATION, s.pi_l, s.pi_h);
        for label in [BenchmarkLabel::Erg, BenchmarkLabel::Nash] {
            let o = pick(label.as_str());
            push(set, label.as_str(), o.pi_l, o.pi_h);
        }
        let d = minmax_disagreement(&ps.params);
        push(set, "minmax", d.d_l, d.d_h);
    }
    for ps in &sim.manifest.spec.param_sets {
        for pt in frontier_samples(&ps.params, samples)? {
            push(&ps.name, "frontier", pt.pi_l, pt.pi_h);
        }
    }
    Ok(csv_bytes(&["set", "kind", "pi_L", "pi_H"], rows)?)
}

fn deviation_panels(sim: &LoadedSimulation) -> CliResult<(Vec<u8>, Vec<u8>)> {
    let mut shares = Vec::new();
    let mut splits = Vec::new();
    for method in [DeviationMethod::BestResponse, DeviationMethod::QValue] {
        for v in commands::verdicts(sim, method)? {
            shares.push(share_row(&v.set, method, &v.shares));
            let s = v.split;
            splits.push(vec![
                s.set,
                method.as_str().to_string(),
                fmt_opt(s.overall),
                fmt_opt(s.incentive_compatible),
                s.n_incentive_compatible.to_string(),
                fmt_opt(s.deviating),
                s.n_deviating.to_string(),
            ]);
        }
    }
    let split_head = [
        "set", "method", "mean_Q", "mean_Q_no_deviation", "runs_no_deviation", "mean_Q_deviation",
        "runs_deviation",
    ];
    Ok((csv_bytes(&SHARES_HEADER, shares)?, csv_bytes(&split_head, splits)?))
}

pub fn figures(args: FiguresArgs) -> CliResult<()> {
    let dir = required(args.sim, "sim")?;
    let out = required(args.out, "out")?;
    let samples = args.samples.unwrap_or(commands::DEFAULT_SAMPLES);

    let mut sim = commands::load(&dir)?;
    let mut files: Vec<(&str, Vec<u8>)> = Vec::new();
    let mut failures: Vec<(&str, CliError)> = Vec::new();

    match series(&sim) {
        Ok(s) => {
            let panels = [
                (LEVELS_CSV, levels(&s)),
                (NORMALIZED_CSV, normalized(&s)),
                (PARETO_CSV, pareto(&sim, &s, samples)),
            ];
            for (name, result) in panels {
                match result {
                    Ok(bytes) => files.push((name, bytes)),
                    Err(e) => failures.push((name, e)),
                }
            }
        }
        Err(e) => {
            let msg = e.to_string();
            failures.push((LEVELS_CSV, e));
            failures.extend([NORMALIZED_CSV, PARETO_CSV].map(|n| (n, CliError::Input(msg.clone()))));
        }
    }

    let deviation = sim
        .attach_q_matrices()
        .map_err(|e| CliError::Input(format!("{e} (was the simulation run with --keep-q false?)")))
        .and_then(|_| deviation_panels(&sim));
    match deviation {
        Ok((shares, split)) => files.extend([(DEVIATION_CSV, shares), (SUBSAMPLE_CSV, split)]),
        Err(e) => {
            let msg = e.to_string();
            failures.push((DEVIATION_CSV, e));
            failures.push((SUBSAMPLE_CSV, CliError::Input(msg)));
        }
    }

    if let Some((_, first)) = failures.first() {
        let lines: Vec<String> = failures.iter().map(|(n, e)| format!("{n}: {e}")).collect();
        return Err(CliError::Reported {
            code: first.exit_code(),
            message: format!("cannot build figure data:\n  {}", lines.join("\n  ")),
        });
    }
    fs::create_dir_all(&out)?;
    for (name, bytes) in &files {
        write_atomic(&Path::new(&out).join(name), bytes)?;
    }
    Ok(())
}
