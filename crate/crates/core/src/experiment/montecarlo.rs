//! Monte Carlo checks of the noise-norm tail and the hold-out thresholds.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::{test_statistic, thresholds};
use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::rng::{self, pair_index, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Config {
    pub ms: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma3Result {
    pub m: usize,
    pub trials: usize,
    pub exceed: usize,
    pub frequency: f64,
    /// `e^{−0.15m}`.
    pub bound: f64,
}

impl Lemma3Result {
    pub fn passes(&self) -> bool {
        self.frequency <= self.bound
    }
}

/// Frequency of `||Z||² > 2m` for `Z ∈ ℝ^m` standard normal.
pub fn validate_lemma3(m: usize, trials: usize, seed: u64) -> Result<Lemma3Result> {
    if m < 2 || trials == 0 {
        return Err(Error::InvalidParameter("need m >= 2 and at least one trial".into()));
    }
    let limit = 2.0 * m as f64;
    let exceed = (0..trials as u64)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = rng::stream(seed, Domain::Trial, pair_index(m as u64, t));
            let sq: f64 = (0..m)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * z
                })
                .sum();
            sq > limit
        })
        .count();
    Ok(Lemma3Result {
        m,
        trials,
        exceed,
        frequency: exceed as f64 / trials as f64,
        bound: (-0.15 * m as f64).exp(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Config {
    pub ds: Vec<usize>,
    pub phis: Vec<f64>,
    pub trials: usize,
    /// Length of the constructed state vectors.
    #[serde(default = "default_width")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    /// Envelope multiplier on `e^{−0.15d}`.
    #[serde(default = "default_envelope")]
    pub envelope: f64,
}

fn default_width() -> usize {
    64
}

fn default_envelope() -> f64 {
    5.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem2Row {
    pub d: usize,
    pub phi: f64,
    pub trials: usize,
    pub upper_violations: usize,
    pub upper_frequency: f64,
    /// Present only when the lower threshold is defined.
    pub lower_violations: Option<usize>,
    pub lower_frequency: Option<f64>,
    pub envelope: f64,
}

impl Theorem2Row {
    pub fn passes(&self) -> bool {
        self.upper_frequency <= self.envelope && self.lower_frequency.is_none_or(|f| f <= self.envelope)
    }
}

/// For each `(d, φ)`: hold-out statistics for estimates at true error
/// exactly `φ`, against fresh `±1` hold-out rows and unit complex noise.
pub fn validate_theorem2(config: &Theorem2Config) -> Result<Vec<Theorem2Row>> {
    if config.trials == 0 || config.n == 0 || config.ds.contains(&0) || config.phis.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidParameter("theorem 2 check needs d >= 1, phi >= 0 and trials".into()));
    }
    let n = config.n;
    let mut rows = Vec::new();
    for &d in &config.ds {
        for &phi in &config.phis {
            let t = thresholds(d, phi);
            let (up, low) = (0..config.trials as u64)
                .into_par_iter()
                .map(|trial| {
                    let mut rng = rng::stream(config.seed, Domain::Trial, pair_index(d as u64, trial));
                    // error direction uniform on the sphere of radius φ
                    let mut e: Vec<Complex64> = (0..n)
                        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                        .collect();
                    let norm = e.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                    for v in e.iter_mut() {
                        *v *= phi / norm;
                    }
                    let phi2 = DMatrix::from_fn(d, n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
                    let truth = ChannelState::new(e).expect("finite");
                    let mut y2 = crate::channel::apply(&phi2, truth.gains()).expect("shapes agree");
                    for y in y2.iter_mut() {
                        *y += Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                    }
                    let s = test_statistic(&y2, &phi2, &ChannelState::zeros(n)).expect("shapes agree");
                    (usize::from(s > t.upper), usize::from(t.lower.is_some_and(|l| s < l)))
                })
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            let trials = config.trials as f64;
            rows.push(Theorem2Row {
                d,
                phi,
                trials: config.trials,
                upper_violations: up,
                upper_frequency: up as f64 / trials,
                lower_violations: t.lower.map(|_| low),
                lower_frequency: t.lower.map(|_| low as f64 / trials),
                envelope: config.envelope * (-0.15 * d as f64).exp(),
            });
        }
    }
    Ok(rows)
}
