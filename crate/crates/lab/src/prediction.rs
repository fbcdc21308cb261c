//! Rate predictions `inf_A I` for the events of an experiment.

use anyhow::Result;
use flowldp_core::rates::{dirichlet_energy, rate_npoint};
use flowldp_core::varmin::{
    minimize_rate, Constraint, Functional, Tolerances, VariationalProblem, MAX_COALESCING_PARTICLES,
};
use serde::{Deserialize, Serialize};

use crate::config::{Event, ExperimentConfig, Simulator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// `None` when no rate is shipped for this simulator/event pair.
    pub rate: Option<f64>,
    pub source: String,
}

impl Prediction {
    fn none(why: &str) -> Self {
        Self {
            rate: None,
            source: format!("unavailable: {why}"),
        }
    }
}

fn varmin(functional: Functional, constraint: Constraint<f64>, cfg: &ExperimentConfig) -> Result<Prediction> {
    let problem = VariationalProblem {
        functional,
        constraint,
        steps: cfg.prediction_steps,
        starts: cfg.starts.clone(),
    };
    let sol = minimize_rate(&problem, &Tolerances::default())?;
    let name = serde_json::to_value(functional)?;
    Ok(Prediction {
        rate: Some(sol.value),
        source: format!("varmin:{}", name.as_str().unwrap_or("?")),
    })
}

/// The one-point motion of every simulator is a Brownian motion, so
/// single-particle events share the Schilder functional. Coalescing
/// events use the n-point rate; correlated n-point events of the smooth
/// flow have no shipped prediction.
pub fn predict(cfg: &ExperimentConfig) -> Result<Prediction> {
    let n = cfg.starts.len();
    let independent = n == 1 || cfg.simulator == Simulator::Stopped;
    match &cfg.event {
        Event::EndpointAtLeast(c) => varmin(Functional::Schilder1d, Constraint::EndpointAtLeast(*c), cfg),
        Event::CoalesceBy(t_c) => {
            if n > MAX_COALESCING_PARTICLES {
                return Ok(Prediction::none("merge orders are enumerated for at most 4 particles"));
            }
            varmin(Functional::NpointCoalescing, Constraint::CoalesceBy(*t_c), cfg)
        }
        Event::HitSetBy { set, t_c } => {
            if !independent {
                return Ok(Prediction::none("interacting particles"));
            }
            varmin(
                Functional::Stopped,
                Constraint::HitSetBy {
                    set: set.clone(),
                    t_c: *t_c,
                },
                cfg,
            )
        }
        Event::BallAroundPath { h, .. } => {
            let path = h.to_path()?;
            // I(h) bounds the infimum over the ball from above
            let rate = match cfg.simulator {
                Simulator::Arratia => rate_npoint(&path, &cfg.starts)?.value(),
                _ if independent => {
                    if path.point(0).iter().zip(&cfg.starts).any(|(a, b)| (a - b).abs() > 1e-12) {
                        f64::INFINITY
                    } else {
                        (0..n).map(|c| dirichlet_energy(path.times(), &path.coordinate(c))).sum()
                    }
                }
                _ => return Ok(Prediction::none("interacting particles")),
            };
            Ok(Prediction {
                rate: Some(rate),
                source: "rate_of_centre".into(),
            })
        }
    }
}
