//! Smallest probe length that recovers a k-sparse state.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelState, NoiseModel};
use crate::error::{Error, Result};
use crate::probe::{Alphabet, ProbeMatrix};
use crate::rng::{self, pair_index, Domain};
use crate::round::{admot_round, estimation_error, RoundConfig, SigmaPolicy, SimulatedMedium};
use crate::solver::SolverOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n: usize,
    pub ks: Vec<usize>,
    pub trials: usize,
    /// Fraction of trials that must succeed.
    #[serde(default = "default_success")]
    pub success_fraction: f64,
    /// `None` for the noiseless setting.
    #[serde(default)]
    pub snr_db: Option<f64>,
    /// Largest `m` considered; `0` means `n`.
    #[serde(default)]
    pub capacity: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: Option<SolverOptions>,
}

fn default_success() -> f64 {
    0.9
}

impl SweepConfig {
    pub fn capacity(&self) -> usize {
        if self.capacity == 0 {
            self.n
        } else {
            self.capacity
        }
    }

    fn tolerance(&self) -> f64 {
        if self.snr_db.is_some() {
            0.05
        } else {
            1e-3
        }
    }

    fn sigma(&self) -> SigmaPolicy {
        if self.snr_db.is_some() {
            SigmaPolicy::TwoM
        } else {
            SigmaPolicy::Fixed(0.0)
        }
    }

    fn solver(&self) -> SolverOptions {
        self.solver.unwrap_or(SolverOptions {
            optimality_tol: 1e-6,
            ..Default::default()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub k: usize,
    /// `None` when even the capacity does not reach the target.
    pub m_min: Option<usize>,
    /// `m_min / (k·log₂((n+1)/k))`.
    pub ratio: Option<f64>,
}

struct Trial {
    phi: ProbeMatrix,
    truth: ChannelState,
}

fn make_trial(config: &SweepConfig, k: usize, t: usize) -> Result<Trial> {
    let n = config.n;
    let key = pair_index(k as u64, t as u64);
    let phi = ProbeMatrix::generate(config.seed ^ key.rotate_left(17), config.capacity(), n, Alphabet::Rademacher)?;
    let mut rng = rng::stream(config.seed, Domain::Trial, key);
    let amp = config.snr_db.map_or(1.0, |db| 10f64.powf(db / 20.0) / 2f64.sqrt());
    let mut support: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        support.swap(i, j);
    }
    let mut gains = vec![Complex64::new(0.0, 0.0); n];
    for &i in &support[..k] {
        let mut part = || {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign * amp * rng.random_range(1.0..2.0)
        };
        gains[i] = Complex64::new(part(), part());
    }
    Ok(Trial {
        phi,
        truth: ChannelState::new(gains)?,
    })
}

fn succeeds(config: &SweepConfig, trial: &Trial, m: usize, t: usize) -> bool {
    let noise = NoiseModel::new(config.snr_db.is_some(), config.seed.wrapping_add(1));
    let medium = SimulatedMedium::new(trial.truth.clone(), noise);
    let cfg = RoundConfig {
        m,
        sigma_policy: config.sigma(),
        round: t as u64,
        solver: config.solver(),
    };
    let prior = ChannelState::zeros(config.n);
    match admot_round(&prior, &trial.phi, &cfg, &medium) {
        Ok(res) => {
            let err = estimation_error(&res.h_star, &trial.truth).unwrap_or(f64::INFINITY);
            err <= config.tolerance() * trial.truth.norm()
        }
        Err(_) => false,
    }
}

fn success_count(config: &SweepConfig, trials: &[Trial], m: usize) -> usize {
    trials
        .par_iter()
        .enumerate()
        .filter(|(t, trial)| succeeds(config, trial, m, *t))
        .count()
}

/// Bisects each `k` for the smallest `m` meeting the success target.
pub fn sweep_scaling(config: &SweepConfig) -> Result<Vec<SweepPoint>> {
    let n = config.n;
    if n == 0 || config.trials == 0 || config.ks.iter().any(|&k| k == 0 || k > n) {
        return Err(Error::InvalidParameter("sweep needs 1 <= k <= n and trials".into()));
    }
    if !(0.0..=1.0).contains(&config.success_fraction) {
        return Err(Error::InvalidParameter("success fraction must lie in [0, 1]".into()));
    }
    let need = (config.success_fraction * config.trials as f64).ceil() as usize;
    let mut out = Vec::new();
    for &k in &config.ks {
        let trials: Vec<Trial> = (0..config.trials).map(|t| make_trial(config, k, t)).collect::<Result<_>>()?;
        let cap = config.capacity();
        let m_min = if success_count(config, &trials, cap) < need {
            log::warn!("k={k}: target not reached at capacity {cap}");
            None
        } else {
            let (mut lo, mut hi) = (0, cap);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if success_count(config, &trials, mid) >= need {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Some(hi)
        };
        let ratio = m_min.map(|m| m as f64 / (k as f64 * ((n as f64 + 1.0) / k as f64).log2()));
        log::info!("k={k}: m_min={m_min:?} ratio={ratio:?}");
        out.push(SweepPoint { k, m_min, ratio });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_state_needs_about_n_slots() {
        let cfg = SweepConfig {
            n: 24,
            ks: vec![24],
            trials: 10,
            success_fraction: 0.9,
            snr_db: None,
            capacity: 0,
            seed: 4,
            solver: None,
        };
        let p = sweep_scaling(&cfg).unwrap();
        let m = p[0].m_min.unwrap();
        assert!((20..=24).contains(&m), "{m}");
    }

    #[test]
    fn unreachable_target_is_reported() {
        let cfg = SweepConfig {
            n: 24,
            ks: vec![24],
            trials: 4,
            success_fraction: 1.0,
            snr_db: None,
            capacity: 10,
            seed: 4,
            solver: None,
        };
        assert_eq!(sweep_scaling(&cfg).unwrap()[0].m_min, None);
    }
}
