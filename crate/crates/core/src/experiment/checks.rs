//! Pass/fail checks over experiment outputs.

use std::fmt;

use super::{ExperimentConfig, GeneralReport, Lemma3Result, RoundLog, SweepPoint, Theorem2Row};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

/// Ordering of average overhead across stabilities, first-round cost, and
/// the optional reference comparison.
pub fn monitor_checks(config: &ExperimentConfig, logs: &[RoundLog]) -> Vec<Check> {
    let n = config.n as f64;
    let mut out = Vec::new();
    let mut sorted: Vec<&RoundLog> = logs.iter().collect();
    sorted.sort_by(|a, b| a.stability.total_cmp(&b.stability));
    let avgs: Vec<String> = sorted.iter().map(|l| format!("{}%: {:.1}", l.stability, l.average_slots())).collect();
    if sorted.len() > 1 {
        let ordered = sorted.windows(2).all(|w| w[0].average_slots() > w[1].average_slots());
        out.push(Check::new("overhead decreases with stability", ordered, avgs.join(", ")));
    }
    let after: Vec<f64> = sorted.iter().map(|l| l.average_slots_after_first()).collect();
    out.push(Check::new(
        "average after round 1 below n",
        after.iter().all(|&a| a < n),
        format!("{after:.1?} vs n = {n}"),
    ));
    let first: Vec<usize> = sorted.iter().filter_map(|l| l.records.first().map(|r| r.m)).collect();
    out.push(Check::new(
        "round 1 probes at least 0.9n",
        first.iter().all(|&m| m as f64 >= 0.9 * n),
        format!("{first:?}"),
    ));
    let failures: usize = logs.iter().map(|l| l.failures()).sum();
    out.push(Check::new("no failed rounds", failures == 0, format!("{failures} failed")));
    if let Some(r) = &config.reference {
        let rows: Vec<String> = logs
            .iter()
            .zip(&r.averages)
            .map(|(l, want)| format!("{}%: {:.1} vs {want}", l.stability, l.average_slots()))
            .collect();
        let ok = logs
            .iter()
            .zip(&r.averages)
            .all(|(l, want)| (l.average_slots() - want).abs() <= r.tolerance * want);
        out.push(Check::new(format!("within {:.0}% of reference", r.tolerance * 100.0), ok, rows.join(", ")));
    }
    out
}

pub fn lemma3_checks(results: &[Lemma3Result]) -> Vec<Check> {
    results
        .iter()
        .map(|r| {
            Check::new(
                format!("noise tail m={}", r.m),
                r.passes(),
                format!("{} / {} = {:.5} <= {:.5}", r.exceed, r.trials, r.frequency, r.bound),
            )
        })
        .collect()
}

pub fn theorem2_checks(rows: &[Theorem2Row]) -> Vec<Check> {
    let mut out: Vec<Check> = rows
        .iter()
        .map(|r| {
            Check::new(
                format!("hold-out thresholds d={} phi={}", r.d, r.phi),
                r.passes(),
                format!(
                    "upper {:.5}, lower {}, envelope {:.5}",
                    r.upper_frequency,
                    r.lower_frequency.map_or("-".into(), |f| format!("{f:.5}")),
                    r.envelope
                ),
            )
        })
        .collect();
    let mut phis: Vec<f64> = rows.iter().map(|r| r.phi).collect();
    phis.sort_by(f64::total_cmp);
    phis.dedup();
    for phi in phis {
        let mut series: Vec<&Theorem2Row> = rows.iter().filter(|r| r.phi == phi).collect();
        series.sort_by_key(|r| r.d);
        let mono = series.windows(2).all(|w| {
            w[1].upper_frequency <= w[0].upper_frequency
                && match (w[0].lower_frequency, w[1].lower_frequency) {
                    (Some(a), Some(b)) => b <= a,
                    _ => true,
                }
        });
        out.push(Check::new(format!("violations nonincreasing in d, phi={phi}"), mono, ""));
    }
    out
}

/// Every `k` reached, `m_min < n`, and the normalized ratio spread within
/// `spread`.
pub fn sweep_checks(points: &[SweepPoint], n: usize, spread: f64) -> Vec<Check> {
    let reached = points.iter().all(|p| p.m_min.is_some());
    let mut out = vec![Check::new(
        "minimal m found for every k",
        reached,
        points
            .iter()
            .map(|p| format!("k={}: {:?}", p.k, p.m_min))
            .collect::<Vec<_>>()
            .join(", "),
    )];
    out.push(Check::new(
        "minimal m below n",
        points.iter().all(|p| p.m_min.is_some_and(|m| m < n)),
        format!("n = {n}"),
    ));
    let ratios: Vec<f64> = points.iter().filter_map(|p| p.ratio).collect();
    if ratios.len() > 1 {
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        out.push(Check::new(
            format!("ratio spread within {spread}"),
            hi <= spread * lo,
            format!("{ratios:.3?}"),
        ));
    }
    out
}

pub fn general_checks(report: &GeneralReport, m: usize, min_recovery: Option<f64>) -> Vec<Check> {
    let mut out = vec![
        Check::new("relay self-channel stays zero", report.self_channels_zero(), ""),
        Check::new("no failed node estimates", report.failures() == 0, format!("{} failed", report.failures())),
    ];
    let relays: Vec<usize> = report.rows.iter().filter(|r| r.node.starts_with('C')).map(|r| r.m_beta).collect();
    if !relays.is_empty() {
        let low = relays.iter().filter(|&&mb| 3 * mb < m).count();
        out.push(Check::new(
            "relay listening slots",
            true,
            format!("{low} of {} relay views below m/3", relays.len()),
        ));
    }
    if let Some(rate) = min_recovery {
        let got = report.recovery_rate(1e-6);
        out.push(Check::new("exact recovery rate", got >= rate, format!("{got:.4} >= {rate}")));
    }
    out
}
