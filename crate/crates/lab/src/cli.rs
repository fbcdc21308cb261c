//! The `ldp_lab` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use flowldp_core::arratia::{dyadic_free_times, empirical_measure, simulate_arratia};
use flowldp_core::flow_sim::{FlowPath, SmoothSimulator};
use flowldp_core::kernels::KernelSpec;
use flowldp_core::metrics::prokhorov;
use flowldp_core::pathmaps::{ForestSkeleton, HittingSet};
use flowldp_core::rates::{
    rate_dyadic, rate_fixed_time, rate_flow, rate_gaussian_field, rate_npoint, rate_stopped, RateValue,
};
use flowldp_core::rng::replica_rng;
use flowldp_core::stats::mean_stderr;
use flowldp_core::varmin::{minimize_rate, Tolerances, VariationalProblem};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, GammaConfig, SimulationConfig};
use crate::experiment::run_experiment;
use crate::io::{read_field, read_measure, read_path, read_profile, write_path};
use crate::sweep::worker_pool;

#[derive(Debug, Parser)]
#[command(name = "ldp_lab", version, about = "Large-deviation laboratory for Brownian flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RateFunctional {
    Gaussian,
    FixedTime,
    Flow,
    Stopped,
    Npoint,
    Dyadic,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the n-point motion of the smooth flow; CSV replica,particle,t,x.
    SimulateSmooth {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate coalescing Brownian motions; writes merges, measures and gamma CSVs.
    SimulateArratia {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write the (large) paths CSV.
        #[arg(long)]
        paths: bool,
    },
    /// Evaluate a rate functional on a CSV input; prints {value, reason}.
    RateEval {
        #[arg(long, value_enum)]
        functional: RateFunctional,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Solve a variational problem; prints {value, path_csv, grad_check}.
    VarMin {
        #[arg(long)]
        problem: PathBuf,
        /// Where to write the optimal path (default: next to the problem).
        #[arg(long)]
        path_out: Option<PathBuf>,
    },
    /// Monte Carlo ε-sweep with rate fit and report.
    LdpSweep {
        #[arg(long)]
        config: PathBuf,
        /// Worker count (overrides FLOWLDP_THREADS).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Lévy–Prokhorov distance between two measure CSVs (position, mass).
    LpDistance {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Σ τ along dyadic levels over simulated records.
    GammaEstimate {
        #[arg(long)]
        config: PathBuf,
        /// CSV of replica,level,sum_tau (omitted when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    let value = match cli.command {
        Command::SimulateSmooth { config, out } => simulate_smooth(&config, out.as_deref())?,
        Command::SimulateArratia { config, out_dir, paths } => simulate_arratia_cmd(&config, &out_dir, paths)?,
        Command::RateEval {
            functional,
            input,
            config,
        } => rate_eval(functional, &input, config.as_deref())?,
        Command::VarMin { problem, path_out } => var_min(&problem, path_out.as_deref())?,
        Command::LdpSweep { config, threads } => ldp_sweep(&config, threads)?,
        Command::LpDistance { a, b, tol } => {
            let d = prokhorov(&read_measure(&a)?, &read_measure(&b)?, tol)?;
            Some(json!({ "distance": d, "tol": tol }))
        }
        Command::GammaEstimate { config, out } => gamma_estimate(&config, out.as_deref())?,
    };
    if let Some(v) = value {
        println!("{}", serde_json::to_string_pretty(&v)?);
    }
    Ok(())
}

fn csv_writer(out: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn write_paths<W: Write>(w: &mut csv::Writer<W>, replica: usize, path: &FlowPath<f64>) -> Result<()> {
    for i in 0..path.particles() {
        for (j, t) in path.times().iter().enumerate() {
            w.write_record([replica.to_string(), i.to_string(), t.to_string(), path.at(i, j).to_string()])?;
        }
    }
    Ok(())
}

fn simulate_smooth(config: &Path, out: Option<&Path>) -> Result<Option<Value>> {
    let cfg = SimulationConfig::from_file(config)?;
    let kernel = cfg.kernel.build::<f64>()?;
    let pool = worker_pool(None)?;
    let runs = pool.install(|| {
        (0..cfg.replicas)
            .into_par_iter()
            .map_init(
                || SmoothSimulator::new(&kernel, cfg.starts.len(), cfg.epsilon, cfg.steps, cfg.mode),
                |sim, r| {
                    let sim = sim.as_mut().map_err(|e| e.clone())?;
                    Ok(sim.run(&cfg.starts, &mut replica_rng(cfg.seed, 0, r as u64))?)
                },
            )
            .collect::<Result<Vec<_>>>()
    })?;
    let mut w = csv_writer(out)?;
    w.write_record(["replica", "particle", "t", "x"])?;
    let mut violations = 0;
    let mut steps = 0;
    for (r, (path, diag)) in runs.iter().enumerate() {
        write_paths(&mut w, r, path)?;
        violations += diag.order_violations;
        steps += diag.steps;
    }
    w.flush()?;
    // keep stdout pure CSV when it carries the data
    Ok(out.map(|p| {
        json!({
            "paths_csv": p,
            "replicas": cfg.replicas,
            "order_violation_fraction": violations as f64 / steps.max(1) as f64,
        })
    }))
}

fn simulate_arratia_cmd(config: &Path, out_dir: &Path, with_paths: bool) -> Result<Option<Value>> {
    let cfg = SimulationConfig::from_file(config)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let pool = worker_pool(None)?;
    let runs = pool.install(|| {
        (0..cfg.replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = replica_rng(cfg.seed, 0, r as u64);
                Ok(simulate_arratia(&cfg.starts, cfg.steps, cfg.crossing_mode, cfg.epsilon, &mut rng)?)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let n = cfg.starts.len();
    let dyadic = n >= 2 && n.is_power_of_two();
    let spans_unit = cfg.starts[0] >= 0.0 && cfg.starts[n - 1] <= 1.0;

    let mut files = Vec::new();
    let merges_path = out_dir.join("merges.csv");
    let mut merges = csv::Writer::from_path(&merges_path)?;
    merges.write_record(["replica", "time", "left", "right"])?;
    for (r, (_, rec)) in runs.iter().enumerate() {
        for e in rec.merge_events() {
            merges.write_record([r.to_string(), e.time.to_string(), e.left.to_string(), e.right.to_string()])?;
        }
    }
    merges.flush()?;
    files.push(merges_path);

    if spans_unit {
        let measures_path = out_dir.join("measures.csv");
        let mut measures = csv::Writer::from_path(&measures_path)?;
        measures.write_record(["replica", "t", "position", "mass"])?;
        for (r, (path, rec)) in runs.iter().enumerate() {
            for &t in &cfg.measure_times {
                let mu = empirical_measure(path, rec, t)?;
                for (x, m) in mu.positions().iter().zip(mu.masses()) {
                    measures.write_record([r.to_string(), t.to_string(), x.to_string(), m.to_string()])?;
                }
            }
        }
        measures.flush()?;
        files.push(measures_path);
    }

    if dyadic {
        let gamma_path = out_dir.join("gamma.csv");
        let mut gamma = csv::Writer::from_path(&gamma_path)?;
        gamma.write_record(["replica", "level", "sum_tau"])?;
        for (r, (_, rec)) in runs.iter().enumerate() {
            for (l, g) in dyadic_free_times(rec)?.iter().enumerate() {
                gamma.write_record([r.to_string(), (l + 1).to_string(), g.to_string()])?;
            }
        }
        gamma.flush()?;
        files.push(gamma_path);
    }

    if with_paths {
        let paths_path = out_dir.join("paths.csv");
        let mut w = csv::Writer::from_path(&paths_path)?;
        w.write_record(["replica", "particle", "t", "x"])?;
        for (r, (path, _)) in runs.iter().enumerate() {
            write_paths(&mut w, r, path)?;
        }
        w.flush()?;
        files.push(paths_path);
    }
    Ok(Some(json!({ "replicas": cfg.replicas, "files": files })))
}

/// Extra inputs for `rate-eval`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateEvalConfig {
    #[serde(default)]
    kernel: KernelSpec,
    /// Time of a fixed-time profile.
    t: Option<f64>,
    /// Target set of the stopped functional.
    set: Option<HittingSet<f64>>,
    /// Required starting point; defaults to the input's first row.
    start: Option<Vec<f64>>,
    n_max: Option<u32>,
}

fn rate_json(r: &RateValue<f64>) -> Value {
    match r {
        RateValue::Finite(v) => json!({ "value": v, "reason": null }),
        RateValue::Infinite(why) => json!({ "value": null, "reason": why }),
    }
}

fn rate_eval(functional: RateFunctional, input: &Path, config: Option<&Path>) -> Result<Option<Value>> {
    let cfg: RateEvalConfig = match config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => RateEvalConfig::default(),
    };
    let out = match functional {
        RateFunctional::Gaussian => rate_json(&rate_gaussian_field(&cfg.kernel.build()?, &read_field(input)?)?),
        RateFunctional::Flow => rate_json(&rate_flow(&cfg.kernel.build()?, &read_field(input)?)?),
        RateFunctional::FixedTime => {
            let t = cfg.t.context("fixed-time needs `t` in the config")?;
            let (u, h) = read_profile(input)?;
            rate_json(&rate_fixed_time(&cfg.kernel.build()?, &u, &h, t)?)
        }
        RateFunctional::Stopped => {
            let set = cfg.set.context("stopped needs `set` in the config")?;
            let g = read_path(input)?;
            let start = cfg.start.unwrap_or_else(|| g.point(0).to_vec());
            rate_json(&rate_stopped(&g, &set, &start)?)
        }
        RateFunctional::Npoint => {
            let f = read_path(input)?;
            let start = cfg.start.unwrap_or_else(|| f.point(0).to_vec());
            rate_json(&rate_npoint(&f, &start)?)
        }
        RateFunctional::Dyadic => {
            let f = read_path(input)?;
            let points = f.dim();
            ensure!(
                points >= 3 && (points - 1).is_power_of_two(),
                "dyadic input needs 2^n + 1 coordinate columns, got {points}"
            );
            let level = (points - 1).trailing_zeros();
            let values = (0..points).flat_map(|k| f.coordinate(k)).collect();
            let skeleton = ForestSkeleton::new(level, f.times().to_vec(), values)?;
            let d = rate_dyadic(&skeleton, cfg.n_max.unwrap_or(level))?;
            let mut out = rate_json(&d.sup());
            out["levels"] = d.levels.iter().map(rate_json).collect();
            out["nondecreasing"] = json!(d.nondecreasing);
            out
        }
    };
    Ok(Some(out))
}

fn var_min(problem: &Path, path_out: Option<&Path>) -> Result<Option<Value>> {
    let text = std::fs::read_to_string(problem).with_context(|| format!("reading {}", problem.display()))?;
    let p: VariationalProblem<f64> = serde_json::from_str(&text).with_context(|| format!("parsing {}", problem.display()))?;
    let sol = minimize_rate(&p, &Tolerances::default())?;
    let csv_path = match path_out {
        Some(p) => p.to_path_buf(),
        None => problem.with_extension("path.csv"),
    };
    write_path(&csv_path, &sol.path)?;
    Ok(Some(json!({
        "value": sol.value,
        "path_csv": csv_path,
        "grad_check": sol.gradient_check,
        "gradient_norm": sol.gradient_norm,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "merge_order": sol.merge_order,
    })))
}

fn ldp_sweep(config: &Path, threads: Option<usize>) -> Result<Option<Value>> {
    let cfg = ExperimentConfig::from_file(config)?;
    let out = run_experiment(&cfg, threads)?;
    match &out.report {
        Ok(rep) => Ok(Some(json!({ "report": rep, "manifest": out.manifest, "files": out.files }))),
        Err(e) => {
            println!("{}", serde_json::to_string_pretty(&json!({ "rows": out.rows, "files": out.files }))?);
            bail!("report: {e}")
        }
    }
}

fn gamma_estimate(config: &Path, out: Option<&Path>) -> Result<Option<Value>> {
    let cfg = GammaConfig::from_file(config)?;
    let starts = cfg.starts();
    let pool = worker_pool(None)?;
    let sums = pool.install(|| {
        (0..cfg.replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = replica_rng(cfg.seed, 0, r as u64);
                let (_, rec) = simulate_arratia(&starts, cfg.steps, cfg.crossing_mode, cfg.epsilon, &mut rng)?;
                Ok(dyadic_free_times(&rec)?)
            })
            .collect::<Result<Vec<Vec<f64>>>>()
    })?;
    if let Some(p) = out {
        let mut w = csv::Writer::from_path(p).with_context(|| format!("creating {}", p.display()))?;
        w.write_record(["replica", "level", "sum_tau"])?;
        for (r, g) in sums.iter().enumerate() {
            for (l, v) in g.iter().enumerate() {
                w.write_record([r.to_string(), (l + 1).to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
    }
    let violations = sums.iter().filter(|g| g.windows(2).any(|w| w[1] < w[0])).count();
    let levels: Vec<Value> = (0..cfg.level as usize)
        .map(|l| {
            let xs: Vec<f64> = sums.iter().map(|g| g[l]).collect();
            let (mean, se) = if xs.len() > 1 { mean_stderr(&xs) } else { (xs[0], f64::NAN) };
            json!({ "level": l + 1, "mean": mean, "stderr": if se.is_finite() { json!(se) } else { Value::Null } })
        })
        .collect();
    Ok(Some(json!({ "replicas": cfg.replicas, "levels": levels, "monotonicity_violations": violations })))
}
