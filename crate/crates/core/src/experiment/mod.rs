//! Configuration-driven experiments: the multi-round monitoring loop, Monte
//! Carlo checks of the noise and hold-out bounds, the scaling sweep and the
//! relay-network runner.

pub mod checks;
mod general;
mod montecarlo;
mod plots;
mod sweep;

pub use general::{run_general_experiment, run_general_trial, GeneralConfig, GeneralReport, GeneralTrial, TrialRun};
pub use montecarlo::{validate_lemma3, validate_theorem2, Lemma3Config, Lemma3Result, Theorem2Config, Theorem2Row};
pub use plots::{emit_plot_data, write_rounds_csv, PlotKind};
pub use sweep::{sweep_scaling, SweepConfig, SweepPoint};

use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::{scan_and_update, AdaptationOutcome, AdaptationPolicy, RoundData};
use crate::channel::{self, ChannelState, NoiseModel, VariationModel};
use crate::error::{Error, Result};
use crate::probe::{Alphabet, ProbeMatrix};
use crate::round::{admot_round, estimation_error, RoundConfig, SigmaPolicy, SimulatedMedium};
use crate::solver::SolverOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub probe: u64,
    pub channel: u64,
    pub noise: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            probe: 1,
            channel: 2,
            noise: 3,
        }
    }
}

/// Index window and round for the per-channel detail plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetailConfig {
    /// Round to capture (1-based); `0` means the last round.
    #[serde(default)]
    pub round: usize,
    pub stability: f64,
    /// First and last channel (1-based, inclusive).
    pub start: usize,
    pub end: usize,
}

fn default_true() -> bool {
    true
}

fn default_small() -> (f64, f64) {
    (-10.0, 10.0)
}

fn default_large() -> (f64, f64) {
    (-250.0, 250.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    /// Slot capacity `N`; `0` means `n`.
    #[serde(default)]
    pub capacity: usize,
    pub rounds: usize,
    pub stabilities: Vec<f64>,
    pub snr_db: f64,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "default_true")]
    pub noise: bool,
    /// Slots in round 1; `0` means `n`.
    #[serde(default)]
    pub initial_m: usize,
    #[serde(default = "default_small")]
    pub small_range: (f64, f64),
    #[serde(default = "default_large")]
    pub large_range: (f64, f64),
    /// Range of each part of the initial state; defaults to the large range.
    /// Also fixes the SNR scale.
    #[serde(default)]
    pub initial_range: Option<(f64, f64)>,
    #[serde(default)]
    pub sigma: SigmaPolicy,
    #[serde(default)]
    pub adaptation: AdaptationPolicy,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub detail: Option<DetailConfig>,
    #[serde(default)]
    pub reference: Option<Reference>,
}

/// Published per-round averages to compare against, one per stability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub averages: Vec<f64>,
    /// Allowed relative deviation.
    pub tolerance: f64,
}

impl ExperimentConfig {
    /// Desk-scale defaults: `n = 100`, `N = 2n`, 50 rounds, stabilities
    /// 80/90/98, target error 5% of the estimate's norm.
    pub fn desk() -> Self {
        Self {
            n: 100,
            capacity: 200,
            rounds: 50,
            stabilities: vec![80.0, 90.0, 98.0],
            snr_db: 20.0,
            seeds: Seeds::default(),
            noise: true,
            initial_m: 0,
            small_range: default_small(),
            large_range: default_large(),
            initial_range: None,
            sigma: SigmaPolicy::default(),
            adaptation: AdaptationPolicy {
                phi_tol_relative: Some(0.05),
                ..Default::default()
            },
            solver: SolverOptions::default(),
            detail: None,
            reference: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn capacity(&self) -> usize {
        if self.capacity == 0 {
            self.n
        } else {
            self.capacity
        }
    }

    pub fn initial_m(&self) -> usize {
        if self.initial_m == 0 {
            self.n.min(self.capacity())
        } else {
            self.initial_m
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.rounds == 0 {
            return Err(Error::Config("n and rounds must be positive".into()));
        }
        if self.initial_m() > self.capacity() {
            return Err(Error::Config(format!(
                "initial m {} exceeds capacity {}",
                self.initial_m(),
                self.capacity()
            )));
        }
        if !self.snr_db.is_finite() || !(self.noise_std() > 0.0) {
            return Err(Error::Config("snr_db must be finite and the initial range nonzero".into()));
        }
        for &s in &self.stabilities {
            VariationModel::new(s, 0).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.variation(50.0).validate().map_err(|e| Error::Config(e.to_string()))?;
        self.adaptation.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(r) = &self.reference {
            if r.averages.len() != self.stabilities.len() || !(r.tolerance >= 0.0) {
                return Err(Error::Config("reference needs one average per stability".into()));
            }
        }
        if let Some(d) = &self.detail {
            if d.start == 0 || d.start > d.end || d.end > self.n || d.round > self.rounds {
                return Err(Error::Config("detail window out of range".into()));
            }
        }
        Ok(())
    }

    fn variation(&self, stability: f64) -> VariationModel {
        VariationModel {
            stability_percent: stability,
            small_range: self.small_range,
            large_range: self.large_range,
            seed: self.seeds.channel,
        }
    }

    pub fn initial_range(&self) -> (f64, f64) {
        self.initial_range.unwrap_or(self.large_range)
    }

    /// Noise standard deviation in raw gain units giving the configured
    /// average SNR for the initial state.
    pub fn noise_std(&self) -> f64 {
        let (a, b) = self.initial_range();
        let mean_sq = 2.0 * (a * a + a * b + b * b) / 3.0;
        (mean_sq / 10f64.powf(self.snr_db / 10.0)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub m: usize,
    pub cumulative_slots: usize,
    /// `None` when the round failed.
    pub relative_error: Option<f64>,
    pub verdict: String,
    pub scan_steps: usize,
    pub next_m: usize,
    pub iterations: usize,
    pub status: String,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub round: usize,
    pub truth: ChannelState,
    pub estimate: ChannelState,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundLog {
    pub stability: f64,
    pub n: usize,
    pub records: Vec<RoundRecord>,
    pub adaptation: Vec<(usize, AdaptationOutcome)>,
    pub snapshot: Option<Snapshot>,
}

impl RoundLog {
    pub fn total_slots(&self) -> usize {
        self.records.iter().map(|r| r.m).sum()
    }

    /// Mean slots per round over all rounds.
    pub fn average_slots(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.total_slots() as f64 / self.records.len() as f64
    }

    /// Mean slots per round excluding round 1.
    pub fn average_slots_after_first(&self) -> f64 {
        let rest = &self.records[1.min(self.records.len())..];
        if rest.is_empty() {
            return 0.0;
        }
        rest.iter().map(|r| r.m).sum::<usize>() as f64 / rest.len() as f64
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.relative_error.is_none()).count()
    }
}

/// The monitoring loop at one stability level. The receiver starts from a
/// zero prior and carries each round's estimate into the next.
pub fn run_monitoring_experiment(config: &ExperimentConfig, stability: f64) -> Result<RoundLog> {
    config.validate()?;
    let n = config.n;
    let capacity = config.capacity();
    let phi = ProbeMatrix::generate(config.seeds.probe, capacity, n, Alphabet::Rademacher)?;
    let model = config.variation(stability);
    model.validate()?;
    let noise_std = config.noise_std();
    let noise = NoiseModel::new(config.noise, config.seeds.noise);

    let mut g = channel::initial_state(n, config.initial_range(), config.seeds.channel);
    let mut prior = ChannelState::zeros(n);
    let mut m = config.initial_m();
    let mut cumulative = 0;
    let detail_round = config
        .detail
        .filter(|d| d.stability == stability)
        .map(|d| if d.round == 0 { config.rounds } else { d.round });
    let mut log = RoundLog {
        stability,
        n,
        ..Default::default()
    };

    for r in 1..=config.rounds {
        let started = Instant::now();
        g = channel::evolve_state(&g, &model, r as u64);
        let h = channel::renormalize(&g, 1.0, noise_std)?;
        let medium = SimulatedMedium::new(h.clone(), noise);
        let round_cfg = RoundConfig {
            m,
            sigma_policy: config.sigma,
            round: r as u64,
            solver: config.solver,
        };
        cumulative += m;
        let record = match admot_round(&prior, &phi, &round_cfg, &medium) {
            Ok(res) => {
                let phi_m = phi.row_slice(m)?;
                let data = RoundData {
                    prior: &prior,
                    phi_m: &phi_m,
                    y: &res.observation,
                    sigma_policy: config.sigma,
                    solver: &config.solver,
                    capacity,
                };
                let outcome = scan_and_update(&data, &config.adaptation)?;
                let err = estimation_error(&res.h_star, &h)? / h.norm();
                if detail_round == Some(r) {
                    log.snapshot = Some(Snapshot {
                        round: r,
                        truth: h.clone(),
                        estimate: res.h_star.clone(),
                    });
                }
                let rec = RoundRecord {
                    round: r,
                    m,
                    cumulative_slots: cumulative,
                    relative_error: Some(err),
                    verdict: outcome.first_verdict().map(|v| v.to_string()).unwrap_or_default(),
                    scan_steps: outcome.steps.len(),
                    next_m: outcome.next_m,
                    iterations: res.iterations(),
                    status: "ok".into(),
                    wall_time: started.elapsed(),
                };
                prior = res.h_star;
                log.adaptation.push((r, outcome));
                rec
            }
            Err(e) => {
                log::warn!("stability {stability}: round {r} failed: {e}");
                let next_m = config.adaptation.clamp(m.saturating_mul(2), capacity);
                RoundRecord {
                    round: r,
                    m,
                    cumulative_slots: cumulative,
                    relative_error: None,
                    verdict: String::new(),
                    scan_steps: 0,
                    next_m,
                    iterations: 0,
                    status: format!("error: {e}"),
                    wall_time: started.elapsed(),
                }
            }
        };
        log::debug!(
            "stability {stability} round {r}: m={} err={:?} next={} ({:?})",
            record.m,
            record.relative_error,
            record.next_m,
            record.wall_time
        );
        m = record.next_m;
        log.records.push(record);
    }
    Ok(log)
}

/// Every configured stability, in parallel; logs come back in config order.
pub fn run_all_stabilities(config: &ExperimentConfig) -> Result<Vec<RoundLog>> {
    config
        .stabilities
        .par_iter()
        .map(|&s| run_monitoring_experiment(config, s))
        .collect()
}
