//! On-disk formats of a simulation directory.
//!
//! ```text
//! DIR/manifest.json     resolved spec, derived beta, version, file inventory
//! DIR/summary.csv       one row per parameter set
//! DIR/runs.csv          one row per run
//! DIR/episodes.csv      per run: end state, greedy cycle, mean q_L / q_H / p
//! DIR/qdump/*.bin       final Q-matrices, one file per run
//! ```
//!
//! CSV files are comma separated with a header row, LF line endings and
//! numbers rounded to 12 significant digits.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{summarize_set, ExperimentSpec, ExperimentSummary, RunRecord};
use crate::market::{MarketParams, Outcome};
use crate::qlearning::{JointAction, QMatrix, N_AGENTS};

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const RUNS_CSV: &str = "runs.csv";
pub const EPISODES_CSV: &str = "episodes.csv";
pub const QDUMP_DIR: &str = "qdump";

pub const SUMMARY_HEADER: [&str; 12] = [
    "set", "runs", "converged", "mean_Q", "sd_Q", "mean_p", "mean_pi_L", "mean_pi_H", "mean_PS",
    "mean_CS", "mean_TS", "mean_periods_to_convergence",
];
pub const RUNS_HEADER: [&str; 11] =
    ["set", "run", "seed", "converged", "periods", "Q", "pi_L", "pi_H", "PS", "CS", "TS"];
pub const EPISODES_HEADER: [&str; 9] = [
    "set", "run", "end_state", "cycle_state", "cycle_length", "cycle", "q_L", "q_H", "p",
];

/// Formats `x` rounded to 12 significant digits, shortest representation.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// Serializes `rows` under `header` in the crate's CSV dialect.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes `rows` under `header` to `path` via a temporary sibling file.
pub fn write_csv<P, I, R>(path: P, header: &[&str], rows: I) -> Result<()>
where
    P: AsRef<Path>,
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    write_atomic(path.as_ref(), &csv_bytes(header, rows)?)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp~");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Seconds since the Unix epoch; taken from `SOURCE_DATE_EPOCH` when set.
    pub timestamp: u64,
    pub master_seed: u64,
    pub beta: f64,
    pub spec: ExperimentSpec,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(spec: &ExperimentSpec, beta: f64, files: Vec<String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: build_timestamp(),
            master_seed: spec.master_seed,
            beta,
            spec: spec.clone(),
            files,
        }
    }
}

fn build_timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| {
            SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
        })
}

fn summary_rows(summary: &ExperimentSummary) -> Vec<Vec<String>> {
    summary
        .sets
        .iter()
        .map(|s| {
            let m = s.mean;
            vec![
                s.name.clone(),
                s.runs.to_string(),
                s.converged.to_string(),
                fmt_opt(m.map(|o| o.q)),
                fmt_opt(s.sd.map(|o| o.q)),
                fmt_opt(m.map(|o| o.p)),
                fmt_opt(m.map(|o| o.pi_l)),
                fmt_opt(m.map(|o| o.pi_h)),
                fmt_opt(m.map(|o| o.ps)),
                fmt_opt(m.map(|o| o.cs)),
                fmt_opt(m.map(|o| o.ts)),
                fmt_opt(s.mean_periods),
            ]
        })
        .collect()
}

fn cycle_string(cycle: &[JointAction]) -> String {
    cycle.iter().map(|a| format!("{}:{}", a.l, a.h)).collect::<Vec<_>>().join(";")
}

fn parse_cycle(s: &str) -> Result<Vec<JointAction>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|pair| {
            let (l, h) = pair
                .split_once(':')
                .ok_or_else(|| Error::Malformed(format!("cycle entry `{pair}`")))?;
            let parse = |v: &str| v.parse::<usize>().map_err(|e| Error::Malformed(e.to_string()));
            Ok(JointAction { l: parse(l)?, h: parse(h)? })
        })
        .collect()
}

pub fn qdump_name(set: &str, run: usize) -> String {
    format!("{QDUMP_DIR}/{set}_{run:04}.bin")
}

/// One block per agent: header `m, n, k, agent` as little-endian `u64`,
/// then the `|S| x m` values row-major as little-endian `f64`.
pub fn write_qdump<W: Write>(mut w: W, q: &[QMatrix; N_AGENTS], k: usize) -> Result<()> {
    for (agent, matrix) in q.iter().enumerate() {
        for v in [matrix.n_actions(), N_AGENTS, k, agent] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for v in matrix.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

const MAX_QDUMP_CELLS: usize = 1 << 28;

pub fn read_qdump<R: Read>(mut r: R) -> Result<[QMatrix; N_AGENTS]> {
    let read_u64 = |r: &mut R| -> Result<u64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    };
    let mut blocks = Vec::with_capacity(N_AGENTS);
    for expected_agent in 0..N_AGENTS {
        let m = read_u64(&mut r)? as usize;
        let n = read_u64(&mut r)? as usize;
        let k = read_u64(&mut r)? as usize;
        let agent = read_u64(&mut r)? as usize;
        let cells = u32::try_from(n * k)
            .ok()
            .and_then(|e| m.checked_pow(e))
            .and_then(|states| states.checked_mul(m).map(|c| (states, c)))
            .filter(|&(_, c)| c <= MAX_QDUMP_CELLS);
        let Some((states, _)) = cells.filter(|_| n == N_AGENTS && agent == expected_agent && m > 0) else {
            return Err(Error::Malformed(format!(
                "Q dump header m={m} n={n} k={k} agent={agent}"
            )));
        };
        let mut bytes = vec![0u8; states * m * 8];
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        blocks.push(QMatrix::from_values(states, m, values)?);
    }
    let h = blocks.pop().expect("two blocks");
    let l = blocks.pop().expect("two blocks");
    Ok([l, h])
}

/// Persists a finished experiment into `dir` and returns its manifest.
pub fn write_experiment(dir: &Path, spec: &ExperimentSpec, summary: &ExperimentSummary) -> Result<RunManifest> {
    fs::create_dir_all(dir)?;
    let mut files = vec![SUMMARY_CSV.to_string(), RUNS_CSV.to_string(), EPISODES_CSV.to_string()];
    let k = spec.technology.k;

    write_csv(dir.join(SUMMARY_CSV), &SUMMARY_HEADER, summary_rows(summary))?;

    let records = || summary.sets.iter().flat_map(|s| s.records.iter());
    write_csv(
        dir.join(RUNS_CSV),
        &RUNS_HEADER,
        records().map(|r| {
            let o = r.post_play;
            vec![
                r.set.clone(),
                r.run.to_string(),
                r.seed.to_string(),
                r.converged.to_string(),
                r.periods.to_string(),
                fmt_opt(o.map(|o| o.q)),
                fmt_opt(o.map(|o| o.pi_l)),
                fmt_opt(o.map(|o| o.pi_h)),
                fmt_opt(o.map(|o| o.ps)),
                fmt_opt(o.map(|o| o.cs)),
                fmt_opt(o.map(|o| o.ts)),
            ]
        }),
    )?;
    write_csv(
        dir.join(EPISODES_CSV),
        &EPISODES_HEADER,
        records().map(|r| {
            let o = r.post_play;
            vec![
                r.set.clone(),
                r.run.to_string(),
                r.end_state.to_string(),
                r.cycle_state.to_string(),
                r.cycle.len().to_string(),
                cycle_string(&r.cycle),
                fmt_opt(o.map(|o| o.q_l)),
                fmt_opt(o.map(|o| o.q_h)),
                fmt_opt(o.map(|o| o.p)),
            ]
        }),
    )?;

    if records().any(|r| r.q.is_some()) {
        fs::create_dir_all(dir.join(QDUMP_DIR))?;
    }
    for r in records() {
        if let Some(q) = &r.q {
            let name = qdump_name(&r.set, r.run);
            let mut w = BufWriter::new(File::create(dir.join(&name))?);
            write_qdump(&mut w, q, k)?;
            files.push(name);
        }
    }

    let cfg = spec.technology.learner_config()?;
    files.push(MANIFEST.to_string());
    let manifest = RunManifest::new(spec, cfg.beta, files);
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_atomic(&dir.join(MANIFEST), &json)?;
    Ok(manifest)
}

#[derive(Debug, Deserialize)]
struct RunRow {
    set: String,
    run: usize,
    seed: u64,
    converged: bool,
    periods: u64,
    #[serde(rename = "Q")]
    q: Option<f64>,
    #[serde(rename = "pi_L")]
    pi_l: Option<f64>,
    #[serde(rename = "pi_H")]
    pi_h: Option<f64>,
    #[serde(rename = "PS")]
    ps: Option<f64>,
    #[serde(rename = "CS")]
    cs: Option<f64>,
    #[serde(rename = "TS")]
    ts: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct EpisodeRow {
    set: String,
    run: usize,
    end_state: usize,
    cycle_state: usize,
    cycle: String,
    #[serde(rename = "q_L")]
    q_l: Option<f64>,
    #[serde(rename = "q_H")]
    q_h: Option<f64>,
    p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSimulation {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub summary: ExperimentSummary,
}

impl LoadedSimulation {
    pub fn params(&self, set: &str) -> Option<MarketParams> {
        self.manifest.spec.param_sets.iter().find(|s| s.name == set).map(|s| s.params)
    }

    /// Loads the Q-matrices of one run from the dump directory.
    pub fn load_q(&self, set: &str, run: usize) -> Result<[QMatrix; N_AGENTS]> {
        let path = self.dir.join(qdump_name(set, run));
        if !path.exists() {
            return Err(Error::QMatricesUnavailable(run));
        }
        read_qdump(BufReader::new(File::open(path)?))
    }

    /// Loads the Q-matrices of every converged run into its record.
    pub fn attach_q_matrices(&mut self) -> Result<()> {
        for set in &mut self.summary.sets {
            for record in set.records.iter_mut().filter(|r| r.converged) {
                let path = self.dir.join(qdump_name(&record.set, record.run));
                if !path.exists() {
                    return Err(Error::QMatricesUnavailable(record.run));
                }
                record.q = Some(read_qdump(BufReader::new(File::open(path)?))?);
            }
        }
        Ok(())
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Reads a simulation directory back. Per-run outcomes are reassembled from
/// `runs.csv` and `episodes.csv`; Q-matrices are loaded lazily.
pub fn load_simulation(dir: &Path) -> Result<LoadedSimulation> {
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.exists() {
        return Err(Error::MissingInput(format!("{} (not a simulation directory)", manifest_path.display())));
    }
    let manifest: RunManifest = serde_json::from_reader(BufReader::new(File::open(&manifest_path)?))?;
    let runs: Vec<RunRow> = read_rows(&dir.join(RUNS_CSV))?;
    let episodes: Vec<EpisodeRow> = read_rows(&dir.join(EPISODES_CSV))?;
    if runs.len() != episodes.len() {
        return Err(Error::Malformed("runs.csv and episodes.csv disagree in length".into()));
    }

    let mut sets = Vec::new();
    for set in &manifest.spec.param_sets {
        let mut records = Vec::new();
        for (row, ep) in runs.iter().zip(&episodes).filter(|(r, _)| r.set == set.name) {
            if ep.set != row.set || ep.run != row.run {
                return Err(Error::Malformed(format!("episode row mismatch at {} {}", row.set, row.run)));
            }
            let post_play = match (row.converged, row.q) {
                (true, Some(q)) => Some(Outcome {
                    q_l: ep.q_l.unwrap_or(f64::NAN),
                    q_h: ep.q_h.unwrap_or(f64::NAN),
                    q,
                    p: ep.p.unwrap_or(f64::NAN),
                    pi_l: row.pi_l.unwrap_or(f64::NAN),
                    pi_h: row.pi_h.unwrap_or(f64::NAN),
                    ps: row.ps.unwrap_or(f64::NAN),
                    cs: row.cs.unwrap_or(f64::NAN),
                    ts: row.ts.unwrap_or(f64::NAN),
                }),
                _ => None,
            };
            records.push(RunRecord {
                set: row.set.clone(),
                run: row.run,
                seed: row.seed,
                converged: row.converged,
                periods: row.periods,
                post_play,
                end_state: ep.end_state,
                cycle_state: ep.cycle_state,
                cycle: parse_cycle(&ep.cycle)?,
                q: None,
            });
        }
        sets.push(summarize_set(&set.name, set.params, records));
    }
    if sets.iter().all(|s| s.records.is_empty()) {
        return Err(Error::MissingInput(format!("no runs recorded in {}", dir.display())));
    }
    Ok(LoadedSimulation { dir: dir.to_path_buf(), manifest, summary: ExperimentSummary { sets } })
}
