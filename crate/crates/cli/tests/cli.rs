use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_collusion"));
    cmd.env_remove("COLLUSION_THREADS").env("SOURCE_DATE_EPOCH", "1700000000");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn collusion")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_csv(path: &Path) -> Vec<HashMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| header.iter().map(String::from).zip(r.unwrap().iter().map(String::from)).collect())
        .collect()
}

fn num(row: &HashMap<String, String>, col: &str) -> f64 {
    row[col].parse().unwrap_or_else(|_| panic!("{col} = {:?}", row[col]))
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A quick experiment: fast exploration decay and a short convergence window.
fn simulate(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate", "--set", "main", "--k", "1", "--beta", "2e-4", "--convergence-window", "2000",
        "--runs", "3", "--seed", "7", "--out", s(dir),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn benchmarks_main_table() {
    let dir = TempDir::new().unwrap();
    let out = run(&["benchmarks", "--set", "main", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&path(&dir, "benchmarks.csv"));
    assert_eq!(rows.len(), 56);
    let mono = rows.iter().find(|r| r["set"] == "sym" && r["benchmark"] == "monopoly").unwrap();
    assert_eq!((num(mono, "Q"), num(mono, "PS")), (36.0, 1296.0));

    let params = read_csv(&path(&dir, "parameters.csv"));
    let asym4 = params.iter().find(|r| r["set"] == "asym4").unwrap();
    assert_eq!((num(asym4, "c_L"), num(asym4, "c_H")), (7.0, 31.0));
}

#[test]
fn benchmarks_alt_monopoly_output_is_constant() {
    let out = run(&["benchmarks", "--set", "alt"]);
    assert_eq!(code(&out), 0);
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let header = rdr.headers().unwrap().clone();
    let q = header.iter().position(|h| h == "Q").unwrap();
    let mut seen = 0;
    for r in rdr.records().map(Result::unwrap).filter(|r| &r[1] == "monopoly") {
        assert_eq!(r[q].parse::<f64>().unwrap(), 36.0);
        seen += 1;
    }
    assert_eq!(seen, 7);
}

#[test]
fn grid_minmax_moves_only_the_bargaining_rows() {
    let dir = TempDir::new().unwrap();
    let table = |mode: &str| {
        let out_dir = dir.path().join(mode);
        let out = run(&["benchmarks", "--minmax", mode, "--out", s(&out_dir)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        read_csv(&out_dir.join("benchmarks.csv"))
    };
    let (cont, grid) = (table("continuous"), table("grid"));
    assert_eq!(cont.len(), grid.len());
    let mut moved = 0;
    for (c, g) in cont.iter().zip(&grid) {
        if c != g {
            assert!(["ks", "erg"].contains(&c["benchmark"].as_str()), "{} {}", c["set"], c["benchmark"]);
            moved += 1;
        }
    }
    assert!(moved > 0);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["benchmarks", "--set", "both"])), 2);
    assert_eq!(code(&run(&["frontier", "--samples", "3"])), 2);
    assert_eq!(code(&run(&["frontier", "--spec", "asym9"])), 2);
    assert_eq!(code(&run(&["simulate", "--nu", "21", "--beta", "1e-6", "--out", "x"])), 2);
    assert_eq!(code(&run(&["simulate", "--alpha", "0", "--out", "x"])), 2);
    assert_eq!(code(&run(&["deviate", "--sim", "x", "--method", "random", "--out", "y"])), 2);
    assert_eq!(code(&run(&["bogus"])), 2);
    assert_eq!(code(&run(&["--threads", "0", "benchmarks"])), 2);
    let out = bin().env("COLLUSION_THREADS", "many").args(["benchmarks"]).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn thread_count_from_environment() {
    let out = bin().env("COLLUSION_THREADS", "2").args(["benchmarks"]).output().unwrap();
    assert_eq!(code(&out), 0);
}

#[test]
fn frontier_samples_and_solutions() {
    let out = run(&["frontier", "--spec", "asym3", "--samples", "11"]);
    assert_eq!(code(&out), 0);
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.iter().filter(|r| &r[0] == "frontier").count(), 11);
    assert_eq!(rows.iter().filter(|r| &r[0] == "benchmark").count(), 8);
    let last = rows.iter().filter(|r| &r[0] == "frontier").last().unwrap();
    assert_eq!(last[2].parse::<f64>().unwrap(), 1640.25);
}

#[test]
fn missing_simulation_exits_3() {
    let dir = TempDir::new().unwrap();
    let empty = path(&dir, "empty");
    fs::create_dir(&empty).unwrap();
    let out_dir = path(&dir, "figs");
    assert_eq!(code(&run(&["figures", "--sim", s(&empty), "--out", s(&out_dir)])), 3);
    assert!(!out_dir.exists());
    let fit = path(&dir, "fit.csv");
    assert_eq!(code(&run(&["analyze", "--sim", s(&empty), "--out", s(&fit)])), 3);
    assert!(!fit.exists());
    let dev = path(&dir, "dev.csv");
    assert_eq!(code(&run(&["deviate", "--sim", s(&empty), "--out", s(&dev)])), 3);
}

#[test]
fn non_convergence_exits_5() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "simulate", "--beta", "1e-12", "--convergence-window", "500", "--max-periods", "500",
        "--runs", "1", "--only", "sym", "--out", s(dir.path()),
    ]);
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_csv(&dir.path().join("summary.csv"));
    assert_eq!(summary[0]["converged"], "0");
    assert_eq!(summary[0]["mean_Q"], "");
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let config = path(&dir, "grid.toml");
    let sim = path(&dir, "sim");
    fs::write(
        &config,
        format!(
            "threads = 1\n[simulate]\nset = \"alt\"\nk = 0\nnu = 21\nruns = 4\nonly = [\"sym\", \"asym2\"]\nout = {:?}\n",
            s(&sim)
        ),
    )
    .unwrap();
    let out = run(&["--config", s(&config), "simulate", "--runs", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sim.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["spec"]["runs"], 2);
    assert_eq!(manifest["spec"]["family"], "alt");
    assert_eq!(manifest["spec"]["technology"]["k"], 0);
    let summary = read_csv(&sim.join("summary.csv"));
    assert_eq!(summary.iter().map(|r| r["set"].as_str()).collect::<Vec<_>>(), ["sym", "asym2"]);

    fs::write(&config, "[simulate]\nrunz = 3\n").unwrap();
    assert_eq!(code(&run(&["--config", s(&config), "simulate", "--out", s(&sim)])), 2);
    assert_eq!(code(&run(&["--config", s(&path(&dir, "absent.toml")), "benchmarks"])), 3);
}

#[test]
fn full_pipeline() {
    let dir = TempDir::new().unwrap();
    let sim = path(&dir, "sim");
    let out = simulate(&sim, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let summary = read_csv(&sim.join("summary.csv"));
    assert_eq!(summary.len(), 7);
    let runs = read_csv(&sim.join("runs.csv"));
    assert_eq!(runs.len(), 21);
    assert_eq!(
        fs::read_to_string(sim.join("runs.csv")).unwrap().lines().next().unwrap(),
        "set,run,seed,converged,periods,Q,pi_L,pi_H,PS,CS,TS"
    );

    let fit = path(&dir, "fit.csv");
    assert_eq!(code(&run(&["analyze", "--sim", s(&sim), "--out", s(&fit)])), 0);
    for table in [read_csv(&fit), read_csv(&path(&dir, "fit_normalized.csv"))] {
        assert_eq!(table.len(), 8);
        assert!(table.iter().all(|r| ["Q", "CS", "PI", "W"].iter().all(|c| num(r, c) >= 0.0)));
    }

    let dev = path(&dir, "dev.csv");
    let out = run(&["deviate", "--sim", s(&sim), "--method", "best_response", "--out", s(&dev)]);
    assert_eq!(code(&out), 0);
    for r in read_csv(&dev) {
        let total: f64 = ["neither", "only_L", "only_H", "both"].iter().map(|c| num(&r, c)).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    let figs = path(&dir, "figs");
    assert_eq!(code(&run(&["figures", "--sim", s(&sim), "--out", s(&figs)])), 0);
    let pareto = read_csv(&figs.join("pareto.csv"));
    for kind in ["simulation", "erg", "nash", "minmax"] {
        assert_eq!(pareto.iter().filter(|r| r["kind"] == kind).count(), 7, "{kind}");
    }
    let normalized = read_csv(&figs.join("normalized.csv"));
    for r in normalized.iter().filter(|r| r["set"] == "sym") {
        for col in ["q_L", "Q", "p", "pi_L", "PS", "CS", "TS"] {
            assert_eq!(num(r, col), 1.0, "{} {col}", r["source"]);
        }
    }
    let shares = read_csv(&figs.join("deviation.csv"));
    assert_eq!(shares.len(), 14);
    assert_eq!(read_csv(&figs.join("levels.csv")).len(), 63);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a"), path(&dir, "b"));
    assert_eq!(code(&simulate(&a, &["--threads", "1"])), 0);
    assert_eq!(code(&simulate(&b, &[])), 0);
    let files = |d: &Path| {
        let mut v: Vec<PathBuf> = walk(d);
        v.sort();
        v
    };
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), fb.len());
    assert!(fa.len() > 20);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(&a).unwrap(), y.strip_prefix(&b).unwrap());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }

    for d in [&a, &b] {
        let out = path(&dir, "figs");
        assert_eq!(code(&run(&["figures", "--sim", s(d), "--out", s(&out)])), 0);
        let copy = path(&dir, &format!("figs_{}", d.file_name().unwrap().to_str().unwrap()));
        fs::rename(&out, &copy).unwrap();
    }
    for name in ["levels.csv", "normalized.csv", "pareto.csv", "deviation.csv", "subsample.csv"] {
        assert_eq!(
            fs::read(path(&dir, "figs_a").join(name)).unwrap(),
            fs::read(path(&dir, "figs_b").join(name)).unwrap()
        );
    }
}

#[test]
fn figures_without_q_dumps_write_nothing() {
    let dir = TempDir::new().unwrap();
    let sim = path(&dir, "sim");
    assert_eq!(code(&simulate(&sim, &["--keep-q", "false"])), 0);
    assert!(!sim.join("qdump").exists());
    let figs = path(&dir, "figs");
    let out = run(&["figures", "--sim", s(&sim), "--out", s(&figs)]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("deviation.csv") && err.contains("subsample.csv"), "{err}");
    assert!(!figs.exists());
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}
