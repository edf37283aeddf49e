//! One monitoring round at a single receiver: probe `m` slots, subtract the
//! prior's predicted observation, recover the sparse change from the real
//! and imaginary parts separately, and add it back to the prior.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelState, NoiseModel};
use crate::error::{check_len, Error, Result};
use crate::probe::ProbeMatrix;
use crate::rng::pair_index;
use crate::solver::{convex_opt, solve_with_fixed_zero, SolverOptions, SolverProblem, SolverSolution};

/// Residual radius handed to the solver for `m` real samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum SigmaPolicy {
    /// `√(2m)`, the high-probability noise bound for unit-variance samples.
    #[default]
    TwoM,
    /// `c·√m`.
    PerSlot(f64),
    /// A fixed radius (0 for noiseless exact recovery).
    Fixed(f64),
}

impl SigmaPolicy {
    pub fn radius(&self, m: usize) -> f64 {
        match *self {
            SigmaPolicy::TwoM => (2.0 * m as f64).sqrt(),
            SigmaPolicy::PerSlot(c) => c * (m as f64).sqrt(),
            SigmaPolicy::Fixed(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    /// Slots probed this round.
    pub m: usize,
    pub sigma_policy: SigmaPolicy,
    /// Round index; keys the noise stream.
    pub round: u64,
    pub solver: SolverOptions,
}

impl RoundConfig {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            sigma_policy: SigmaPolicy::default(),
            round: 0,
            solver: SolverOptions::default(),
        }
    }

    pub fn with_sigma(mut self, policy: SigmaPolicy) -> Self {
        self.sigma_policy = policy;
        self
    }

    pub fn with_round(mut self, round: u64) -> Self {
        self.round = round;
        self
    }
}

/// Anything that can deliver the `m` received samples of a round.
pub trait Medium {
    fn observe(&self, phi_m: &DMatrix<f64>, round: u64) -> Result<Vec<Complex64>>;
}

/// The discrete slotted channel: one sample per slot with additive noise.
#[derive(Debug, Clone)]
pub struct SimulatedMedium {
    pub truth: ChannelState,
    pub noise: NoiseModel,
    /// Listening-node index; together with the round it selects the noise
    /// stream.
    pub node: u64,
}

impl SimulatedMedium {
    pub fn new(truth: ChannelState, noise: NoiseModel) -> Self {
        Self { truth, noise, node: 0 }
    }

    pub fn noise_stream(node: u64, round: u64) -> u64 {
        pair_index(node, round)
    }
}

impl Medium for SimulatedMedium {
    fn observe(&self, phi_m: &DMatrix<f64>, round: u64) -> Result<Vec<Complex64>> {
        channel::transmit_round(phi_m, &self.truth, &self.noise, Self::noise_stream(self.node, round))
    }
}

/// `D = Y − Φ_m Ĥ`.
pub fn differential(y: &[Complex64], phi_m: &DMatrix<f64>, prior: &ChannelState) -> Result<Vec<Complex64>> {
    check_len(phi_m.nrows(), y.len())?;
    let predicted = channel::apply(phi_m, prior.gains())?;
    Ok(y.iter().zip(predicted).map(|(a, b)| a - b).collect())
}

/// `||H* − H||₂` under the complex norm.
pub fn estimation_error(h_star: &ChannelState, h: &ChannelState) -> Result<f64> {
    Ok(h_star.sub(h)?.iter().map(|d| d.norm_sqr()).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub h_star: ChannelState,
    pub delta_star: Vec<Complex64>,
    pub re: SolverSolution,
    pub im: SolverSolution,
    pub observation: Vec<Complex64>,
    pub differential: Vec<Complex64>,
    pub sigma: f64,
}

impl EstimateResult {
    pub fn m(&self) -> usize {
        self.observation.len()
    }

    pub fn iterations(&self) -> usize {
        self.re.iterations + self.im.iterations
    }
}

/// Steps B–D on an existing observation. `fixed_zero` pins one coordinate of
/// the recovered change to zero.
pub fn estimate(
    prior: &ChannelState,
    phi_m: &DMatrix<f64>,
    y: &[Complex64],
    sigma: f64,
    solver: &SolverOptions,
    fixed_zero: Option<usize>,
) -> Result<EstimateResult> {
    check_len(phi_m.ncols(), prior.len())?;
    let d = differential(y, phi_m, prior)?;
    let m = d.len();
    let re = DVector::from_iterator(m, d.iter().map(|v| v.re));
    let im = DVector::from_iterator(m, d.iter().map(|v| v.im));
    let solve = |rhs: DVector<f64>| -> Result<SolverSolution> {
        let p = SolverProblem::with_options(phi_m.clone(), rhs, sigma, *solver)?;
        match fixed_zero {
            Some(i) => solve_with_fixed_zero(&p, i),
            None => convex_opt(&p),
        }
    };
    let (re_sol, im_sol) = rayon::join(|| solve(re), || solve(im));
    let (re_sol, im_sol) = (re_sol?, im_sol?);
    let delta_star: Vec<Complex64> = re_sol
        .x_star
        .iter()
        .zip(im_sol.x_star.iter())
        .map(|(&r, &i)| Complex64::new(r, i))
        .collect();
    let h_star = prior.add(&delta_star)?;
    Ok(EstimateResult {
        h_star,
        delta_star,
        re: re_sol,
        im: im_sol,
        observation: y.to_vec(),
        differential: d,
        sigma,
    })
}

/// A full round: probe `config.m` slots through `medium`, then Steps B–D.
pub fn admot_round(
    prior: &ChannelState,
    phi: &ProbeMatrix,
    config: &RoundConfig,
    medium: &dyn Medium,
) -> Result<EstimateResult> {
    if config.m == 0 {
        return Err(Error::InvalidParameter("a round needs m >= 1".into()));
    }
    check_len(phi.cols(), prior.len())?;
    let phi_m = phi.row_slice(config.m)?;
    let y = medium.observe(&phi_m, config.round)?;
    let sigma = config.sigma_policy.radius(config.m);
    estimate(prior, &phi_m, &y, sigma, &config.solver, None).map_err(|e| Error::Round {
        round: config.round as usize,
        source: Box::new(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::Alphabet;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn toy() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 1.0, 2.0, 3.0])
    }

    #[test]
    fn differential_examples() {
        let phi = toy();
        let y = vec![c(5.0, 0.0), c(12.0, 0.0)];
        let d = differential(&y, &phi, &ChannelState::zeros(3)).unwrap();
        assert_eq!(d, y);

        let prior = ChannelState::from_parts(&[1.0, 1.0, 1.0], &[0.0; 3]).unwrap();
        let d = differential(&y, &phi, &prior).unwrap();
        assert_eq!(d, vec![c(2.0, 0.0), c(6.0, 0.0)]);

        assert!(differential(&y[..1], &phi, &prior).is_err());
    }

    #[test]
    fn estimation_error_examples() {
        let h = ChannelState::from_parts(&[1.0, 2.0], &[0.5, -1.0]).unwrap();
        assert_eq!(estimation_error(&h, &h).unwrap(), 0.0);
        let shifted = h.add(&[c(1.0, 1.0), c(0.0, 0.0)]).unwrap();
        assert!((estimation_error(&shifted, &h).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(estimation_error(&h, &ChannelState::zeros(3)).is_err());
    }

    #[test]
    fn perfect_prior_gives_zero_change() {
        let phi = ProbeMatrix::generate(4, 20, 10, Alphabet::Rademacher).unwrap();
        let h = channel::initial_state(10, (-5.0, 5.0), 8);
        let medium = SimulatedMedium::new(h.clone(), NoiseModel::off());
        let res = admot_round(&h, &phi, &RoundConfig::new(12), &medium).unwrap();
        assert!(res.delta_star.iter().all(|d| d.norm() == 0.0));
        assert_eq!(res.h_star, h);
    }

    #[test]
    fn toy_round_recovers_moved_channel() {
        let phi = toy();
        let prior = ChannelState::from_parts(&[1.0, 1.0, 1.0], &[0.0; 3]).unwrap();
        let truth = ChannelState::from_parts(&[1.0, 1.0, 3.0], &[0.0; 3]).unwrap();
        let y = channel::transmit_round(&phi, &truth, &NoiseModel::off(), 0).unwrap();
        let res = estimate(&prior, &phi, &y, 0.0, &SolverOptions::default(), None).unwrap();
        assert!(estimation_error(&res.h_star, &truth).unwrap() < 1e-6);
    }

    #[test]
    fn round_rejects_bad_m() {
        let phi = ProbeMatrix::generate(4, 20, 10, Alphabet::Rademacher).unwrap();
        let h = ChannelState::zeros(10);
        let medium = SimulatedMedium::new(h.clone(), NoiseModel::off());
        assert!(admot_round(&h, &phi, &RoundConfig::new(0), &medium).is_err());
        assert!(admot_round(&h, &phi, &RoundConfig::new(21), &medium).is_err());
        assert!(admot_round(&ChannelState::zeros(9), &phi, &RoundConfig::new(5), &medium).is_err());
    }

    #[test]
    fn sigma_policies() {
        assert_eq!(SigmaPolicy::TwoM.radius(8), 4.0);
        assert_eq!(SigmaPolicy::PerSlot(1.5).radius(4), 3.0);
        assert_eq!(SigmaPolicy::Fixed(0.0).radius(100), 0.0);
    }
}
