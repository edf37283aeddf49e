//! Seeded trials of one network round over a topology.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelState, NoiseModel};
use crate::error::{Error, Result};
use crate::network::{run_admot_general, Duplex, GeneralRound, NodeOutcome, Topology, TopologyFile};
use crate::probe::{Alphabet, ProbeMatrix};
use crate::rng::{self, pair_index, Domain};
use crate::round::{estimation_error, SigmaPolicy};
use crate::solver::SolverOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralConfig {
    pub topology: TopologyFile,
    pub m: usize,
    pub trials: usize,
    /// Channels changed per node view.
    #[serde(default = "one")]
    pub varied: usize,
    /// Each part of a change is a nonzero integer in `[−magnitude, magnitude]`.
    #[serde(default = "default_magnitude")]
    pub magnitude: i64,
    #[serde(default)]
    pub noise: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sigma: SigmaPolicy,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Required fraction of node estimates within `1e-6` relative error.
    #[serde(default)]
    pub min_recovery_rate: Option<f64>,
}

fn one() -> usize {
    1
}

fn default_magnitude() -> i64 {
    3
}

impl GeneralConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if c.m == 0 || c.trials == 0 || c.magnitude < 1 {
            return Err(Error::Config("m, trials and magnitude must be positive".into()));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn alphabet(&self) -> Alphabet {
        match self.topology.duplex {
            Duplex::Half => Alphabet::Ternary,
            Duplex::Full => Alphabet::Rademacher,
        }
    }
}

/// One node of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralTrial {
    pub trial: usize,
    pub node: String,
    pub m_beta: usize,
    pub relative_error: Option<f64>,
    /// `|Δ*|` at the relay's own coordinate.
    pub self_channel: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeneralReport {
    pub rows: Vec<GeneralTrial>,
}

impl GeneralReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(["trial", "node", "m_beta", "relative_error", "self_channel", "status"])?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.relative_error.is_none()).count()
    }

    /// Fraction of node estimates within `tol` relative error.
    pub fn recovery_rate(&self, tol: f64) -> f64 {
        let ok = self.rows.iter().filter(|r| r.relative_error.is_some_and(|e| e <= tol)).count();
        ok as f64 / self.rows.len().max(1) as f64
    }

    pub fn self_channels_zero(&self) -> bool {
        self.rows.iter().all(|r| r.self_channel.is_none_or(|v| v == 0.0))
    }
}

/// Probe matrix, true states and outcomes of trial `t`.
pub struct TrialRun {
    pub phi: ProbeMatrix,
    pub truth: Vec<ChannelState>,
    pub outcomes: Vec<NodeOutcome>,
}

pub fn run_general_trial(config: &GeneralConfig, topology: &Topology, t: usize) -> Result<TrialRun> {
    let width = topology.width();
    let phi = ProbeMatrix::generate(config.seed ^ (t as u64).rotate_left(29), config.m, width, config.alphabet())?;
    let mut rng = rng::stream(config.seed, Domain::Trial, t as u64);
    let truth = topology
        .listeners()
        .into_iter()
        .zip(&topology.priors)
        .map(|(node, prior)| {
            let free: Vec<usize> = (0..width).filter(|&i| Some(i) != topology.self_column(node)).collect();
            let mut delta = vec![Complex64::new(0.0, 0.0); width];
            let mut pool = free;
            for _ in 0..config.varied.min(pool.len()) {
                let i = pool.swap_remove(rng.random_range(0..pool.len()));
                let mut part = || {
                    let v = rng.random_range(1..=config.magnitude) as f64;
                    if rng.random::<bool>() {
                        v
                    } else {
                        -v
                    }
                };
                delta[i] = Complex64::new(part(), part());
            }
            prior.add(&delta)
        })
        .collect::<Result<Vec<_>>>()?;
    let round = GeneralRound {
        m: config.m,
        round: t as u64,
        noise: NoiseModel::new(config.noise, config.seed.wrapping_add(pair_index(1, 0))),
        sigma_policy: config.sigma,
        solver: config.solver,
    };
    let outcomes = run_admot_general(topology, &phi, &truth, &round)?;
    Ok(TrialRun { phi, truth, outcomes })
}

/// All trials; the per-node CSV of trial 0 is written to `first` when given.
pub fn run_general_experiment(config: &GeneralConfig, base: &Path, first: Option<&mut dyn Write>) -> Result<GeneralReport> {
    let topology = config.topology.to_topology(base)?;
    let runs: Vec<(usize, TrialRun)> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_general_trial(config, &topology, t).map(|r| (t, r)))
        .collect::<Result<_>>()?;
    if let (Some(out), Some((_, run))) = (first, runs.first()) {
        crate::network::write_node_csv(out, &run.outcomes, &topology.priors, Some(&run.truth))?;
    }
    let mut rows = Vec::new();
    for (t, run) in &runs {
        for (o, h) in run.outcomes.iter().zip(&run.truth) {
            let (err, self_channel, status) = match &o.result {
                Ok(r) => (
                    Some(estimation_error(&r.h_star, h)? / h.norm().max(f64::MIN_POSITIVE)),
                    topology.self_column(o.node()).map(|c| r.delta_star[c].norm()),
                    "ok".to_string(),
                ),
                Err(e) => (None, None, format!("error: {e}")),
            };
            rows.push(GeneralTrial {
                trial: *t,
                node: o.node().to_string(),
                m_beta: o.view.m_beta(),
                relative_error: err,
                self_channel,
                status,
            });
        }
    }
    Ok(GeneralReport { rows })
}
