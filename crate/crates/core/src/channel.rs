//! Channel state, sparsity measures, state evolution and slotted reception.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rng::{self, Domain};

/// Normalized channel gains `H`, one complex entry per transmitter, in
/// √SNR units.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    gains: Vec<Complex64>,
}

impl ChannelState {
    pub fn new(gains: Vec<Complex64>) -> Result<Self> {
        if let Some(i) = gains.iter().position(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite gain at index {i}")));
        }
        Ok(Self { gains })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            gains: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_parts(re: &[f64], im: &[f64]) -> Result<Self> {
        check_len(re.len(), im.len())?;
        Self::new(re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)).collect())
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn into_gains(self) -> Vec<Complex64> {
        self.gains
    }

    pub fn re(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.gains.iter().map(|g| g.re))
    }

    pub fn im(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.gains.iter().map(|g| g.im))
    }

    /// Complex ℓ2 norm, `sqrt(||Re||² + ||Im||²)`.
    pub fn norm(&self) -> f64 {
        self.gains.iter().map(|g| g.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &ChannelState) -> Result<Vec<Complex64>> {
        check_len(self.len(), other.len())?;
        Ok(self.gains.iter().zip(&other.gains).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, delta: &[Complex64]) -> Result<ChannelState> {
        check_len(self.len(), delta.len())?;
        Ok(ChannelState {
            gains: self.gains.iter().zip(delta).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_complex_csv(out, "index", &self.gains)
    }
}

/// `index|slot, re, im` CSV used for states and observations.
pub fn write_complex_csv<W: Write>(out: W, label: &str, values: &[Complex64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([label, "re", "im"])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), v.re.to_string(), v.im.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `||V − V^k||₁`: the ℓ1 mass left after keeping the `k` largest-magnitude
/// entries. Equal magnitudes keep the lowest index.
pub fn sparsity_distance(v: &[f64], k: usize) -> Result<f64> {
    if k > v.len() {
        return Err(Error::InvalidK { k, n: v.len() });
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    // stable: ties stay in index order
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()));
    Ok(order[k..].iter().map(|&i| v[i].abs()).sum())
}

/// Whether `H − Ĥ` is `(k, ε)`-sparse in both its real and imaginary parts.
pub fn is_sparse_variation(h: &ChannelState, prior: &ChannelState, k: usize, eps: f64) -> Result<bool> {
    let diff = h.sub(prior)?;
    let re: Vec<f64> = diff.iter().map(|d| d.re).collect();
    let im: Vec<f64> = diff.iter().map(|d| d.im).collect();
    Ok(sparsity_distance(&re, k)? <= eps && sparsity_distance(&im, k)? <= eps)
}

/// Per-round random walk of the channel state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationModel {
    /// Probability (in percent) that an entry takes a small-range step.
    pub stability_percent: f64,
    pub small_range: (f64, f64),
    pub large_range: (f64, f64),
    pub seed: u64,
}

impl VariationModel {
    pub fn new(stability_percent: f64, seed: u64) -> Result<Self> {
        let model = Self {
            stability_percent,
            small_range: (-10.0, 10.0),
            large_range: (-250.0, 250.0),
            seed,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.stability_percent) {
            return Err(Error::InvalidParameter(format!(
                "stability {} outside [0, 100]",
                self.stability_percent
            )));
        }
        for (name, (lo, hi)) in [("small", self.small_range), ("large", self.large_range)] {
            if !(lo <= hi) {
                return Err(Error::InvalidParameter(format!("{name} range [{lo}, {hi}] is not ordered")));
            }
        }
        Ok(())
    }

    /// Multiplies both ranges by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            small_range: (self.small_range.0 * factor, self.small_range.1 * factor),
            large_range: (self.large_range.0 * factor, self.large_range.1 * factor),
            ..self.clone()
        }
    }

    /// Variation of `n` entries for `round`, with the mask of entries that
    /// took a large-range step.
    pub fn draw(&self, n: usize, round: u64) -> (Vec<Complex64>, Vec<bool>) {
        let mut rng = rng::stream(self.seed, Domain::Variation, round);
        let p_small = self.stability_percent / 100.0;
        let mut delta = Vec::with_capacity(n);
        let mut large = Vec::with_capacity(n);
        for _ in 0..n {
            let is_large = rng.random::<f64>() >= p_small;
            let (lo, hi) = if is_large { self.large_range } else { self.small_range };
            let re = uniform(&mut rng, lo, hi);
            let im = uniform(&mut rng, lo, hi);
            delta.push(Complex64::new(re, im));
            large.push(is_large);
        }
        (delta, large)
    }
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// `H[r] = H[r−1] + Δ[r]`.
pub fn evolve_state(h: &ChannelState, model: &VariationModel, round: u64) -> ChannelState {
    let (delta, _) = model.draw(h.len(), round);
    ChannelState {
        gains: h.gains.iter().zip(&delta).map(|(a, b)| a + b).collect(),
    }
}

/// Initial state with no prior structure: each part uniform on `range`.
pub fn initial_state(n: usize, range: (f64, f64), seed: u64) -> ChannelState {
    let mut rng = rng::stream(seed, Domain::Initial, 0);
    let gains = (0..n)
        .map(|_| {
            let re = uniform(&mut rng, range.0, range.1);
            let im = uniform(&mut rng, range.0, range.1);
            Complex64::new(re, im)
        })
        .collect();
    ChannelState { gains }
}

/// Receiver noise: when enabled, Re and Im are i.i.d. standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub enabled: bool,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(enabled: bool, seed: u64) -> Self {
        Self { enabled, seed }
    }

    pub fn off() -> Self {
        Self { enabled: false, seed: 0 }
    }

    /// Noise for `len` slots of the stream `stream_id` (one stream per round
    /// and listening node). Slot `s` always receives the `s`-th sample.
    pub fn realization(&self, stream_id: u64, len: usize) -> Vec<Complex64> {
        if !self.enabled {
            return vec![Complex64::new(0.0, 0.0); len];
        }
        let mut rng = rng::stream(self.seed, Domain::Noise, stream_id);
        (0..len)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            })
            .collect()
    }
}

/// Real matrix times complex vector.
pub fn apply(phi: &DMatrix<f64>, v: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(phi.ncols(), v.len())?;
    let re = DVector::from_iterator(v.len(), v.iter().map(|c| c.re));
    let im = DVector::from_iterator(v.len(), v.iter().map(|c| c.im));
    let yr = phi * re;
    let yi = phi * im;
    Ok(yr.iter().zip(yi.iter()).map(|(&r, &i)| Complex64::new(r, i)).collect())
}

/// Received samples `Y(s) = Σ_i Φ(s,i)·H(i) + Z(s)` for one round.
pub fn transmit_round(
    phi_m: &DMatrix<f64>,
    h: &ChannelState,
    noise: &NoiseModel,
    stream_id: u64,
) -> Result<Vec<Complex64>> {
    let mut y = apply(phi_m, h.gains())?;
    if noise.enabled {
        for (ys, z) in y.iter_mut().zip(noise.realization(stream_id, phi_m.nrows())) {
            *ys += z;
        }
    }
    Ok(y)
}

fn check_power(p: f64, sigma: f64) -> Result<()> {
    if p > 0.0 && sigma > 0.0 && p.is_finite() && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "power {p} and noise std {sigma} must be positive"
        )))
    }
}

/// True gains to normalized units: `H = G·√P/σ`.
pub fn renormalize(g: &ChannelState, power: f64, sigma: f64) -> Result<ChannelState> {
    check_power(power, sigma)?;
    let f = power.sqrt() / sigma;
    Ok(ChannelState {
        gains: g.gains.iter().map(|x| x * f).collect(),
    })
}

/// Inverse of [`renormalize`]: `G = σ·H/√P`.
pub fn denormalize(h: &ChannelState, power: f64, sigma: f64) -> Result<ChannelState> {
    check_power(power, sigma)?;
    let f = sigma / power.sqrt();
    Ok(ChannelState {
        gains: h.gains.iter().map(|x| x * f).collect(),
    })
}
