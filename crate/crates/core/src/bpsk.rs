//! BPSK probing on a carrier and matched filtering.
//!
//! Transmitter `i` sends `Φ(s,i)` on a rectangular pulse in slot `s`, so the
//! received passband signal is
//! `y(t) = Σ_i Φ(s,i)·A_i·cos(ωt − θ_i) + z(t)`. Correlating each slot
//! against `cos ωt` and `sin ωt` yields the two real views
//! `H_cos = A cos θ` and `H_sin = A sin θ`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelState, NoiseModel};
use crate::error::{check_len, Error, Result};
use crate::rng::{self, Domain};
use crate::round::{Medium, SimulatedMedium};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CarrierConfig {
    /// Angular carrier frequency ω (rad/s).
    pub omega: f64,
    /// Slot duration T (s).
    pub slot_duration: f64,
    pub samples_per_slot: usize,
    /// Lower bound on ωT / 2π.
    pub min_cycles: f64,
}

impl Default for CarrierConfig {
    fn default() -> Self {
        Self {
            omega: 2.0 * PI * 100.0,
            slot_duration: 1.0,
            samples_per_slot: 256,
            min_cycles: 100.0,
        }
    }
}

impl CarrierConfig {
    pub fn validate(&self) -> Result<()> {
        let cycles = self.omega * self.slot_duration / (2.0 * PI);
        if !(self.slot_duration > 0.0) || !(self.omega > 0.0) {
            return Err(Error::Config("carrier frequency and slot duration must be positive".into()));
        }
        if cycles < self.min_cycles * (1.0 - 1e-12) {
            return Err(Error::Config(format!(
                "carrier completes {cycles:.3} cycles per slot, need at least {}",
                self.min_cycles
            )));
        }
        if self.samples_per_slot < 2 {
            return Err(Error::Config("need at least 2 samples per slot".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.slot_duration / self.samples_per_slot as f64
    }

    /// Midpoint of sample `k` in slot `s`.
    pub fn time(&self, slot: usize, k: usize) -> f64 {
        slot as f64 * self.slot_duration + (k as f64 + 0.5) * self.dt()
    }
}

/// Wraps into `(−π, π]`.
pub fn wrap_phase(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

/// Gains in polar form, `H(i) = A_i e^{−jθ_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarGains {
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
}

impl PolarGains {
    pub fn new(amplitudes: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        check_len(amplitudes.len(), phases.len())?;
        if amplitudes.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::InvalidParameter("amplitudes must be finite and nonnegative".into()));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("phases must be finite".into()));
        }
        let phases = phases.into_iter().map(wrap_phase).collect();
        Ok(Self { amplitudes, phases })
    }

    pub fn from_state(h: &ChannelState) -> Self {
        let (amplitudes, phases) = h
            .gains()
            .iter()
            .map(|g| {
                let (a, arg) = g.to_polar();
                if a == 0.0 {
                    (0.0, 0.0)
                } else {
                    (a, wrap_phase(-arg))
                }
            })
            .unzip();
        Self { amplitudes, phases }
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn h_cos(&self) -> Vec<f64> {
        self.amplitudes.iter().zip(&self.phases).map(|(a, t)| a * t.cos()).collect()
    }

    pub fn h_sin(&self) -> Vec<f64> {
        self.amplitudes.iter().zip(&self.phases).map(|(a, t)| a * t.sin()).collect()
    }

    pub fn to_state(&self) -> ChannelState {
        let gains = self
            .amplitudes
            .iter()
            .zip(&self.phases)
            .map(|(&a, &t)| Complex64::from_polar(a, -t))
            .collect();
        ChannelState::new(gains).expect("finite polar gains")
    }
}

/// Sampled received waveform covering `slots` whole slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub samples_per_slot: usize,
    pub dt: f64,
}

impl Waveform {
    pub fn slots(&self) -> usize {
        self.samples.len() / self.samples_per_slot
    }

    /// `time,value` lines.
    pub fn write_csv<W: Write>(&self, out: W, carrier: &CarrierConfig) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "value"])?;
        for (idx, v) in self.samples.iter().enumerate() {
            let t = carrier.time(idx / self.samples_per_slot, idx % self.samples_per_slot);
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `y(t)` on the midpoint grid of the first `Φ_m.nrows()` slots.
///
/// Noise is white at the sample rate with variance `S/2` per sample
/// (`S` samples per slot), which gives unit variance per part after
/// [`matched_filter`].
pub fn synthesize_received(
    phi_m: &DMatrix<f64>,
    gains: &PolarGains,
    carrier: &CarrierConfig,
    noise: &NoiseModel,
    stream_id: u64,
) -> Result<Waveform> {
    carrier.validate()?;
    check_len(phi_m.ncols(), gains.len())?;
    let h_cos = gains.h_cos();
    let h_sin = gains.h_sin();
    let s_per = carrier.samples_per_slot;
    let mut samples = Vec::with_capacity(phi_m.nrows() * s_per);
    for s in 0..phi_m.nrows() {
        let row = phi_m.row(s);
        let c: f64 = row.iter().zip(&h_cos).map(|(p, h)| p * h).sum();
        let d: f64 = row.iter().zip(&h_sin).map(|(p, h)| p * h).sum();
        for k in 0..s_per {
            let wt = carrier.omega * carrier.time(s, k);
            samples.push(c * wt.cos() + d * wt.sin());
        }
    }
    if noise.enabled {
        let std = (s_per as f64 / 2.0).sqrt();
        let dist = Normal::new(0.0, std).expect("positive std");
        let mut rng = rng::stream(noise.seed, Domain::Noise, stream_id);
        for v in samples.iter_mut() {
            *v += dist.sample(&mut rng);
        }
    }
    Ok(Waveform {
        samples,
        samples_per_slot: s_per,
        dt: carrier.dt(),
    })
}

/// Per-slot `(2/T)∫ y cos ωt` and `(2/T)∫ y sin ωt` over the first `m`
/// slots, midpoint rule.
pub fn matched_filter(waveform: &Waveform, carrier: &CarrierConfig, m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    carrier.validate()?;
    let s_per = carrier.samples_per_slot;
    if waveform.samples_per_slot != s_per || waveform.samples.len() < m * s_per {
        return Err(Error::InvalidDimension(format!(
            "waveform covers {} samples, need {} whole slots of {s_per}",
            waveform.samples.len(),
            m
        )));
    }
    let scale = 2.0 / carrier.slot_duration * carrier.dt();
    let mut y_cos = Vec::with_capacity(m);
    let mut y_sin = Vec::with_capacity(m);
    for s in 0..m {
        let slot = &waveform.samples[s * s_per..(s + 1) * s_per];
        let (mut c, mut d) = (0.0, 0.0);
        for (k, v) in slot.iter().enumerate() {
            let wt = carrier.omega * carrier.time(s, k);
            c += v * wt.cos();
            d += v * wt.sin();
        }
        y_cos.push(scale * c);
        y_sin.push(scale * d);
    }
    Ok((y_cos, y_sin))
}

/// Amplitude and quadrant-aware phase from the two views; `(0, 0)` maps to
/// `A = 0, θ = 0`.
pub fn recover_polar(h_cos: &[f64], h_sin: &[f64]) -> Result<PolarGains> {
    check_len(h_cos.len(), h_sin.len())?;
    let (amplitudes, phases) = h_cos
        .iter()
        .zip(h_sin)
        .map(|(&c, &s)| {
            if c == 0.0 && s == 0.0 {
                (0.0, 0.0)
            } else {
                (c.hypot(s), wrap_phase(s.atan2(c)))
            }
        })
        .unzip();
    Ok(PolarGains { amplitudes, phases })
}

/// Complex observation `Y_cos − j·Y_sin`, which equals `Φ_m H + Z` for
/// `H = A e^{−jθ}`.
pub fn combine_views(y_cos: &[f64], y_sin: &[f64]) -> Result<Vec<Complex64>> {
    check_len(y_cos.len(), y_sin.len())?;
    Ok(y_cos.iter().zip(y_sin).map(|(&c, &s)| Complex64::new(c, -s)).collect())
}

/// Medium that synthesizes the passband waveform and matched-filters it.
#[derive(Debug, Clone)]
pub struct BpskMedium {
    pub gains: PolarGains,
    pub carrier: CarrierConfig,
    pub noise: NoiseModel,
    pub node: u64,
}

impl BpskMedium {
    pub fn new(gains: PolarGains, carrier: CarrierConfig, noise: NoiseModel) -> Result<Self> {
        carrier.validate()?;
        Ok(Self {
            gains,
            carrier,
            noise,
            node: 0,
        })
    }
}

impl Medium for BpskMedium {
    fn observe(&self, phi_m: &DMatrix<f64>, round: u64) -> Result<Vec<Complex64>> {
        let stream = SimulatedMedium::noise_stream(self.node, round);
        let wave = synthesize_received(phi_m, &self.gains, &self.carrier, &self.noise, stream)?;
        let (c, s) = matched_filter(&wave, &self.carrier, phi_m.nrows())?;
        combine_views(&c, &s)
    }
}
