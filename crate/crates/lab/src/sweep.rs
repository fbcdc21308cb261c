//! Monte Carlo ε-sweeps of rare events.
//!
//! Replica `r` at the `k`-th ε draws from `replica_rng(seed, k, r)` and
//! hit counts are integer sums, so results are bit-identical for any
//! number of worker threads.

use anyhow::{Context, Result};
use flowldp_core::arratia::{simulate_arratia, CoalescenceRecord};
use flowldp_core::flow_sim::{FlowPath, SmoothSimulator};
use flowldp_core::kernels::Kernel;
use flowldp_core::metrics::WeightedNorm;
use flowldp_core::pathmaps::{hitting_time, PiecewiseLinearPath};
use flowldp_core::real::unit_grid;
use flowldp_core::rng::{replica_rng, standard_normal};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{BallNorm, Event, ExperimentConfig, Simulator};
use crate::prediction::{predict, Prediction};
use crate::report::SweepRow;

/// Worker pool of `threads` workers; `None` reads `FLOWLDP_THREADS` and
/// falls back to the available parallelism.
pub fn worker_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = match threads {
        Some(n) => n,
        None => match std::env::var("FLOWLDP_THREADS") {
            Ok(v) => v.trim().parse().with_context(|| format!("FLOWLDP_THREADS={v:?} is not a count"))?,
            Err(_) => 0,
        },
    };
    Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?)
}

/// Per-experiment state shared by all replicas.
struct EventCheck<'a> {
    cfg: &'a ExperimentConfig,
    centre: Option<PiecewiseLinearPath<f64>>,
    norm: Option<WeightedNorm<f64>>,
}

impl<'a> EventCheck<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        let (centre, norm) = match &cfg.event {
            Event::BallAroundPath { h, norm, .. } => (
                Some(h.to_path()?),
                match norm {
                    BallNorm::Weighted => Some(WeightedNorm::new(cfg.starts.len())?),
                    BallNorm::Sup => None,
                },
            ),
            _ => (None, None),
        };
        Ok(Self { cfg, centre, norm })
    }

    fn hit(&self, path: &FlowPath<f64>, record: Option<&CoalescenceRecord<f64>>) -> Result<bool> {
        let n = path.particles();
        Ok(match &self.cfg.event {
            Event::EndpointAtLeast(c) => path.at(0, path.steps()) >= *c,
            Event::CoalesceBy(t_c) => {
                let rec = record.context("coalesce_by needs a coalescence record")?;
                rec.merge_events().iter().filter(|e| e.time <= *t_c).count() + 1 == n
            }
            Event::HitSetBy { set, t_c } => {
                let f = as_path(path)?;
                let tau = hitting_time(&f, set)?;
                tau < *t_c || (tau <= *t_c && set.contains(&f.eval(tau)))
            }
            Event::BallAroundPath { delta, .. } => {
                let centre = self.centre.as_ref().expect("ball centre");
                let dist = match &self.norm {
                    None => as_path(path)?.sup_distance(centre)?,
                    Some(norm) => {
                        let times = path.times();
                        let mut field = Vec::with_capacity(n * times.len());
                        for i in 0..n {
                            for (j, &t) in times.iter().enumerate() {
                                field.push(path.at(i, j) - centre.eval(t)[i]);
                            }
                        }
                        norm.sup_norm(&field, times.len())?
                    }
                };
                dist <= *delta
            }
        })
    }
}

fn as_path(path: &FlowPath<f64>) -> Result<PiecewiseLinearPath<f64>> {
    let rows: Vec<Vec<f64>> = (0..path.particles()).map(|i| path.particle(i).to_vec()).collect();
    Ok(PiecewiseLinearPath::from_rows(path.times().to_vec(), &rows)?)
}

/// `d` independent Brownian coordinates with variance `ε t`.
fn simulate_independent(starts: &[f64], steps: usize, eps: f64, rng: &mut ChaCha8Rng) -> Result<FlowPath<f64>> {
    let n = starts.len();
    let len = steps + 1;
    let sd = (eps / steps as f64).sqrt();
    let mut values = vec![0.0; n * len];
    let mut x = starts.to_vec();
    for (i, &u) in starts.iter().enumerate() {
        values[i * len] = u;
    }
    for j in 1..len {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += sd * standard_normal::<f64, _>(rng);
            values[i * len + j] = *xi;
        }
    }
    Ok(FlowPath::new(starts.to_vec(), unit_grid(steps), values, eps)?)
}

fn count_hits(cfg: &ExperimentConfig, kernel: Option<&Kernel<f64>>, check: &EventCheck, k: usize, eps: f64) -> Result<u64> {
    let replica = |sim: Option<&mut SmoothSimulator<f64>>, r: usize| -> Result<u64> {
        let mut rng = replica_rng(cfg.seed, k as u64, r as u64);
        let hit = match (cfg.simulator, sim) {
            (Simulator::Smooth, Some(sim)) => {
                let (path, _) = sim.run(&cfg.starts, &mut rng)?;
                check.hit(&path, None)?
            }
            (Simulator::Arratia, _) => {
                let (path, rec) = simulate_arratia(&cfg.starts, cfg.steps, cfg.crossing_mode, eps, &mut rng)?;
                check.hit(&path, Some(&rec))?
            }
            (Simulator::Stopped, _) => check.hit(&simulate_independent(&cfg.starts, cfg.steps, eps, &mut rng)?, None)?,
            (Simulator::Smooth, None) => unreachable!("smooth runs carry a simulator"),
        };
        Ok(u64::from(hit))
    };
    (0..cfg.replicas)
        .into_par_iter()
        .map_init(
            || {
                kernel
                    .map(|kern| SmoothSimulator::new(kern, cfg.starts.len(), eps, cfg.steps, cfg.mode))
                    .transpose()
            },
            |sim, r| match sim {
                Ok(s) => replica(s.as_mut(), r),
                Err(e) => Err(e.clone().into()),
            },
        )
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

/// `mc_rare_event` on the current rayon pool, with an explicit prediction.
pub fn sweep_with(cfg: &ExperimentConfig, prediction: &Prediction) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let kernel = match cfg.simulator {
        Simulator::Smooth => Some(cfg.kernel.build::<f64>()?),
        _ => None,
    };
    let check = EventCheck::new(cfg)?;
    cfg.epsilon_list
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            let hits = count_hits(cfg, kernel.as_ref(), &check, k, eps)?;
            Ok(SweepRow::new(eps, hits, cfg.replicas as u64, prediction.rate))
        })
        .collect()
}

/// Simulates `replicas` paths per ε and counts event hits.
pub fn mc_rare_event(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    sweep_with(cfg, &predict(cfg)?)
}
