//! Probe-length adaptation from a hold-out block.
//!
//! After a round, the receiver re-estimates from a prefix of its samples and
//! checks the estimate against slots the prefix did not use. A large
//! hold-out residual means the prefix was too short.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelState};
use crate::error::{check_len, Error, Result};
use crate::round::{estimate, SigmaPolicy};
use crate::solver::SolverOptions;

/// Rows of one round split into an estimation prefix and a hold-out block.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutSplit {
    pub d: usize,
    pub y1: Vec<Complex64>,
    pub y2: Vec<Complex64>,
    pub phi1: DMatrix<f64>,
    pub phi2: DMatrix<f64>,
}

impl HoldoutSplit {
    /// First `m − d` rows against the last `d`.
    pub fn new(y: &[Complex64], phi_m: &DMatrix<f64>, d: usize) -> Result<Self> {
        let m = y.len();
        Self::block(y, phi_m, m.saturating_sub(d), d)
    }

    /// Prefix `[0, prefix)` against the block `[prefix, prefix + d)`.
    pub fn block(y: &[Complex64], phi_m: &DMatrix<f64>, prefix: usize, d: usize) -> Result<Self> {
        check_len(phi_m.nrows(), y.len())?;
        let m = y.len();
        if d == 0 || prefix == 0 || prefix + d > m {
            return Err(Error::InvalidParameter(format!(
                "hold-out of {d} rows after a prefix of {prefix} does not fit {m} rows"
            )));
        }
        Ok(Self {
            d,
            y1: y[..prefix].to_vec(),
            y2: y[prefix..prefix + d].to_vec(),
            phi1: phi_m.rows(0, prefix).into_owned(),
            phi2: phi_m.rows(prefix, d).into_owned(),
        })
    }

    pub fn prefix_len(&self) -> usize {
        self.y1.len()
    }
}

/// `||Y₂ − Φ₂ H*_t||²` under the complex norm.
pub fn test_statistic(y2: &[Complex64], phi2: &DMatrix<f64>, h_t: &ChannelState) -> Result<f64> {
    check_len(phi2.nrows(), y2.len())?;
    let predicted = channel::apply(phi2, h_t.gains())?;
    Ok(y2.iter().zip(predicted).map(|(a, b)| (a - b).norm_sqr()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub upper: f64,
    /// Only defined for `φ > 2√2`.
    pub lower: Option<f64>,
}

/// `upper = d(φ√1.5 + 2)²`, `lower = d(φ/√2 − 2)²`.
pub fn thresholds(d: usize, phi: f64) -> Thresholds {
    let d = d as f64;
    let upper = d * (phi * 1.5f64.sqrt() + 2.0).powi(2);
    let lower = (phi > 2.0 * 2f64.sqrt()).then(|| d * (phi / 2f64.sqrt() - 2.0).powi(2));
    Thresholds { upper, lower }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Sufficient,
    Insufficient,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Sufficient => "SUFFICIENT",
            Verdict::Insufficient => "INSUFFICIENT",
        })
    }
}

pub fn classify(statistic: f64, d: usize, phi_tol: f64) -> Verdict {
    if statistic > thresholds(d, phi_tol).upper {
        Verdict::Insufficient
    } else {
        Verdict::Sufficient
    }
}

/// Which rows the shrink scan holds out at step `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HoldoutMode {
    /// The `d` rows right after the prefix.
    #[default]
    Block,
    /// Every row after the prefix, `m − prefix` of them.
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptationPolicy {
    /// Target estimation error.
    pub phi_tol: f64,
    /// When set, the target becomes `max(phi_tol, phi_tol_relative·||H*||)`.
    pub phi_tol_relative: Option<f64>,
    /// Hold-out size; `None` means `max(8, ⌈m/8⌉)`.
    pub initial_d: Option<usize>,
    /// Multiplier applied to `m` after an insufficient round.
    pub growth: f64,
    /// Margin added to the shortest sufficient prefix, as a fraction of it.
    pub slack: f64,
    pub m_min: usize,
    /// Upper bound on `m`; `0` means the slot capacity.
    pub m_max: usize,
    pub holdout: HoldoutMode,
}

impl Default for AdaptationPolicy {
    fn default() -> Self {
        Self {
            phi_tol: 4.0,
            phi_tol_relative: None,
            initial_d: None,
            growth: 2.0,
            slack: 0.25,
            m_min: 16,
            m_max: 0,
            holdout: HoldoutMode::Block,
        }
    }
}

impl AdaptationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi_tol >= 0.0) || self.phi_tol_relative.is_some_and(|r| !(r >= 0.0)) {
            return Err(Error::InvalidParameter("phi_tol must be nonnegative".into()));
        }
        if !(self.growth > 1.0) || !(self.slack >= 0.0) {
            return Err(Error::InvalidParameter("growth must exceed 1 and slack be nonnegative".into()));
        }
        if self.m_min == 0 || (self.m_max != 0 && self.m_max < self.m_min) {
            return Err(Error::InvalidParameter(format!(
                "m bounds [{}, {}] are invalid",
                self.m_min, self.m_max
            )));
        }
        Ok(())
    }

    pub fn initial_d(&self, m: usize) -> usize {
        self.initial_d.unwrap_or_else(|| 8.max(m.div_ceil(8)))
    }

    pub fn effective_phi(&self, h_star: &ChannelState) -> f64 {
        match self.phi_tol_relative {
            Some(r) => self.phi_tol.max(r * h_star.norm()),
            None => self.phi_tol,
        }
    }

    fn bounds(&self, capacity: usize) -> (usize, usize) {
        let hi = if self.m_max == 0 { capacity } else { self.m_max.min(capacity) };
        (self.m_min.min(hi), hi)
    }

    pub fn clamp(&self, m: usize, capacity: usize) -> usize {
        let (lo, hi) = self.bounds(capacity);
        m.clamp(lo, hi)
    }
}

/// What a finished round hands to the scan.
#[derive(Debug, Clone, Copy)]
pub struct RoundData<'a> {
    pub prior: &'a ChannelState,
    /// The `m` rows probed this round.
    pub phi_m: &'a DMatrix<f64>,
    pub y: &'a [Complex64],
    pub sigma_policy: SigmaPolicy,
    pub solver: &'a SolverOptions,
    /// Slot capacity `N`.
    pub capacity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanStep {
    pub p: usize,
    pub prefix: usize,
    pub holdout: usize,
    pub statistic: f64,
    pub upper: f64,
    pub phi: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationOutcome {
    pub m: usize,
    pub next_m: usize,
    pub steps: Vec<ScanStep>,
    pub warning: Option<String>,
}

impl AdaptationOutcome {
    pub fn first_verdict(&self) -> Option<Verdict> {
        self.steps.first().map(|s| s.verdict)
    }
}

fn scan_step(data: &RoundData<'_>, policy: &AdaptationPolicy, p: usize, prefix: usize, d: usize) -> Result<ScanStep> {
    let split = HoldoutSplit::block(data.y, data.phi_m, prefix, d)?;
    let sigma = data.sigma_policy.radius(prefix);
    let est = estimate(data.prior, &split.phi1, &split.y1, sigma, data.solver, None)?;
    let statistic = test_statistic(&split.y2, &split.phi2, &est.h_star)?;
    let phi = policy.effective_phi(&est.h_star);
    Ok(ScanStep {
        p,
        prefix,
        holdout: d,
        statistic,
        upper: thresholds(d, phi).upper,
        phi,
        verdict: classify(statistic, d, phi),
    })
}

/// Shrink scan: hold out the block right after a prefix of `m − p·d` rows for
/// `p = 1, 2, 4, …` until the prefix stops being sufficient or reaches the
/// floor, then set the next `m` from the shortest sufficient prefix.
pub fn scan_and_update(data: &RoundData<'_>, policy: &AdaptationPolicy) -> Result<AdaptationOutcome> {
    policy.validate()?;
    check_len(data.phi_m.nrows(), data.y.len())?;
    let m = data.y.len();
    let d = policy.initial_d(m);
    let (m_lo, _) = policy.bounds(data.capacity);
    if m <= d {
        let warning = format!("round of {m} slots is too short for a hold-out of {d}; m unchanged");
        log::warn!("{warning}");
        return Ok(AdaptationOutcome {
            m,
            next_m: m,
            steps: Vec::new(),
            warning: Some(warning),
        });
    }

    let first = scan_step(data, policy, 1, m - d, d)?;
    let mut steps = vec![first];
    if first.verdict == Verdict::Insufficient {
        let grown = (m as f64 * policy.growth).ceil() as usize;
        return Ok(AdaptationOutcome {
            m,
            next_m: policy.clamp(grown.max(m + 1), data.capacity),
            steps,
            warning: None,
        });
    }

    let mut shortest = m - d;
    let mut p = 1;
    while shortest > m_lo {
        p *= 2;
        let prefix = m.saturating_sub(p * d).max(m_lo);
        let hold = match policy.holdout {
            HoldoutMode::Block => d,
            HoldoutMode::Tail => m - prefix,
        };
        let step = scan_step(data, policy, p, prefix, hold)?;
        steps.push(step);
        if step.verdict == Verdict::Insufficient {
            break;
        }
        shortest = prefix;
    }
    let margin = (shortest as f64 * policy.slack).ceil() as usize;
    Ok(AdaptationOutcome {
        m,
        next_m: policy.clamp(shortest + margin, data.capacity),
        steps,
        warning: None,
    })
}

#[derive(Debug, Clone, Serialize)]
struct TraceRow {
    round: usize,
    m: usize,
    p: usize,
    prefix: usize,
    holdout: usize,
    statistic: f64,
    upper: f64,
    phi: f64,
    verdict: Verdict,
    next_m: usize,
}

/// Adaptation trace, one line per scan step.
pub fn write_trace_csv<W: Write>(out: W, rounds: &[(usize, &AdaptationOutcome)]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["round", "m", "p", "prefix", "holdout", "statistic", "upper", "phi", "verdict", "next_m"])?;
    for &(round, outcome) in rounds {
        for step in &outcome.steps {
            w.serialize(TraceRow {
                round,
                m: outcome.m,
                p: step.p,
                prefix: step.prefix,
                holdout: step.holdout,
                statistic: step.statistic,
                upper: step.upper,
                phi: step.phi,
                verdict: step.verdict,
                next_m: outcome.next_m,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}
