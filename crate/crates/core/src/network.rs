//! Monitoring a network of sources, relays and receivers.
//!
//! Every listening node (receivers and relays) keeps its own state vector of
//! length `n + n''`: the channels from each source and each relay into it.
//! Relays are half-duplex by default and transmit only where their probe
//! symbol is nonzero, listening in the other slots.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelState, NoiseModel};
use crate::error::{check_len, Error, Result};
use crate::probe::{Alphabet, ProbeMatrix};
use crate::round::{estimate, EstimateResult, SigmaPolicy, SimulatedMedium};
use crate::solver::{solve_with_fixed_zero, SolverOptions, SolverProblem, SolverSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Duplex {
    Full,
    #[default]
    Half,
}

/// A listening node, zero-based within its kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeId {
    Receiver(usize),
    Relay(usize),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Receiver(j) => write!(f, "R{}", j + 1),
            NodeId::Relay(j) => write!(f, "C{}", j + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub sources: usize,
    pub relays: usize,
    pub receivers: usize,
    pub duplex: Duplex,
    /// One prior per listening node, ordered as [`Topology::listeners`].
    pub priors: Vec<ChannelState>,
}

impl Topology {
    pub fn new(sources: usize, relays: usize, receivers: usize, duplex: Duplex, priors: Vec<ChannelState>) -> Result<Self> {
        let t = Self {
            sources,
            relays,
            receivers,
            duplex,
            priors,
        };
        t.validate()?;
        Ok(t)
    }

    /// Topology with all priors zero.
    pub fn with_zero_priors(sources: usize, relays: usize, receivers: usize, duplex: Duplex) -> Result<Self> {
        let priors = vec![ChannelState::zeros(sources + relays); receivers + relays];
        Self::new(sources, relays, receivers, duplex, priors)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources == 0 || self.receivers + self.relays == 0 {
            return Err(Error::InvalidDimension("need at least one source and one listening node".into()));
        }
        check_len(self.receivers + self.relays, self.priors.len())?;
        for (node, prior) in self.listeners().into_iter().zip(&self.priors) {
            check_len(self.width(), prior.len())?;
            self.check_self_channel(node, prior)?;
        }
        Ok(())
    }

    /// State length `n + n''`.
    pub fn width(&self) -> usize {
        self.sources + self.relays
    }

    /// Receivers first, then relays.
    pub fn listeners(&self) -> Vec<NodeId> {
        (0..self.receivers)
            .map(NodeId::Receiver)
            .chain((0..self.relays).map(NodeId::Relay))
            .collect()
    }

    /// Position in [`Topology::listeners`]; also keys the node's noise.
    pub fn node_index(&self, node: NodeId) -> usize {
        match node {
            NodeId::Receiver(j) => j,
            NodeId::Relay(j) => self.receivers + j,
        }
    }

    /// Zero-based column of a relay's own probe sequence.
    pub fn self_column(&self, node: NodeId) -> Option<usize> {
        match node {
            NodeId::Relay(j) => Some(self.sources + j),
            NodeId::Receiver(_) => None,
        }
    }

    /// A relay's channel to itself must be zero.
    pub fn check_self_channel(&self, node: NodeId, h: &ChannelState) -> Result<()> {
        if let Some(c) = self.self_column(node) {
            if h.gains()[c] != Complex64::new(0.0, 0.0) {
                return Err(Error::InvalidParameter(format!("{node} has a nonzero self-channel")));
            }
        }
        Ok(())
    }
}

/// Where a node listens and the probe rows it sees there.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeView {
    pub node: NodeId,
    /// Zero-based listening slots, increasing.
    pub slots: Vec<usize>,
    pub phi: DMatrix<f64>,
    /// `slot_to_row[s]` is the row of `phi` holding slot `s`.
    pub slot_to_row: Vec<Option<usize>>,
}

impl NodeView {
    pub fn m_beta(&self) -> usize {
        self.slots.len()
    }

    /// Listening slots numbered from 1.
    pub fn index_set(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s + 1).collect()
    }
}

/// Listening sets over the first `m` slots. A half-duplex relay listens
/// exactly where its own probe symbol is zero; everyone else listens always.
pub fn build_node_views(phi: &ProbeMatrix, m: usize, topology: &Topology) -> Result<Vec<NodeView>> {
    topology.validate()?;
    if topology.duplex == Duplex::Half && phi.alphabet() != Alphabet::Ternary {
        return Err(Error::WrongAlphabet);
    }
    check_len(topology.width(), phi.cols())?;
    if m > phi.rows() {
        return Err(Error::SliceOverflow {
            requested: m,
            capacity: phi.rows(),
        });
    }
    topology
        .listeners()
        .into_iter()
        .map(|node| {
            let slots: Vec<usize> = match (topology.duplex, topology.self_column(node)) {
                (Duplex::Half, Some(c)) => (0..m).filter(|&s| phi.get(s, c) == 0).collect(),
                _ => (0..m).collect(),
            };
            let mut slot_to_row = vec![None; m];
            for (row, &s) in slots.iter().enumerate() {
                slot_to_row[s] = Some(row);
            }
            Ok(NodeView {
                node,
                phi: phi.select_rows(&slots)?,
                slots,
                slot_to_row,
            })
        })
        .collect()
}

/// Solve with one coordinate (numbered from 1) held at zero.
pub fn self_channel_constrained_solve(problem: &SolverProblem, fixed_zero_index: usize) -> Result<SolverSolution> {
    if fixed_zero_index == 0 {
        return Err(Error::IndexOutOfRange {
            index: 0,
            len: problem.a.ncols(),
        });
    }
    solve_with_fixed_zero(problem, fixed_zero_index - 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralRound {
    pub m: usize,
    pub round: u64,
    pub noise: NoiseModel,
    pub sigma_policy: SigmaPolicy,
    pub solver: SolverOptions,
}

#[derive(Debug)]
pub struct NodeOutcome {
    pub view: NodeView,
    pub observation: Vec<Complex64>,
    pub result: Result<EstimateResult>,
}

impl NodeOutcome {
    pub fn node(&self) -> NodeId {
        self.view.node
    }
}

/// Samples heard by each listener over the first `m` slots. Slot `s` of node
/// `β` carries `Σ_i Φ(s,i)·H_β(i) + Z_β(s)`; a half-duplex relay's own term
/// vanishes in its listening slots because its symbol there is zero.
pub fn shared_medium(
    phi_m: &DMatrix<f64>,
    topology: &Topology,
    views: &[NodeView],
    truth: &[ChannelState],
    noise: &NoiseModel,
    round: u64,
) -> Result<Vec<Vec<Complex64>>> {
    check_len(views.len(), truth.len())?;
    views
        .iter()
        .zip(truth)
        .map(|(view, h)| {
            topology.check_self_channel(view.node, h)?;
            let stream = SimulatedMedium::noise_stream(topology.node_index(view.node) as u64, round);
            let all = channel::transmit_round(phi_m, h, noise, stream)?;
            Ok(view.slots.iter().map(|&s| all[s]).collect())
        })
        .collect()
}

/// One round for every listening node. Failures are reported per node.
pub fn run_admot_general(
    topology: &Topology,
    phi: &ProbeMatrix,
    truth: &[ChannelState],
    config: &GeneralRound,
) -> Result<Vec<NodeOutcome>> {
    let views = build_node_views(phi, config.m, topology)?;
    let phi_m = phi.row_slice(config.m)?;
    let observations = shared_medium(&phi_m, topology, &views, truth, &config.noise, config.round)?;
    Ok(views
        .into_par_iter()
        .zip(observations)
        .zip(topology.priors.par_iter())
        .map(|((view, y), prior)| {
            let result = if view.m_beta() == 0 {
                Err(Error::InvalidDimension(format!("{} has no listening slots", view.node)))
            } else {
                let sigma = config.sigma_policy.radius(view.m_beta());
                estimate(prior, &view.phi, &y, sigma, &config.solver, topology.self_column(view.node))
            };
            NodeOutcome {
                view,
                observation: y,
                result,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum PriorSource {
    Zero,
    /// CSV with columns `node,index,re,im` (node and index zero-based,
    /// node in listener order).
    Csv { path: PathBuf },
}

/// On-disk topology description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyFile {
    pub sources: usize,
    pub relays: usize,
    pub receivers: usize,
    #[serde(default)]
    pub duplex: Duplex,
    #[serde(default = "zero_prior")]
    pub prior: PriorSource,
}

fn zero_prior() -> PriorSource {
    PriorSource::Zero
}

#[derive(Debug, Deserialize)]
struct PriorRow {
    node: usize,
    index: usize,
    re: f64,
    im: f64,
}

impl TopologyFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Builds the topology; relative prior paths resolve against `base`.
    pub fn to_topology(&self, base: &Path) -> Result<Topology> {
        let width = self.sources + self.relays;
        let nodes = self.receivers + self.relays;
        let priors = match &self.prior {
            PriorSource::Zero => vec![ChannelState::zeros(width); nodes],
            PriorSource::Csv { path } => {
                let mut gains = vec![vec![Complex64::new(0.0, 0.0); width]; nodes];
                let mut reader = csv::Reader::from_path(base.join(path))?;
                for row in reader.deserialize() {
                    let row: PriorRow = row?;
                    if row.node >= nodes || row.index >= width {
                        return Err(Error::Config(format!(
                            "prior entry ({}, {}) outside {nodes} nodes x {width} channels",
                            row.node, row.index
                        )));
                    }
                    gains[row.node][row.index] = Complex64::new(row.re, row.im);
                }
                gains.into_iter().map(ChannelState::new).collect::<Result<_>>()?
            }
        };
        Topology::new(self.sources, self.relays, self.receivers, self.duplex, priors)
    }
}

/// One line per node and channel: prior, estimate and (when known) truth.
pub fn write_node_csv<W: Write>(out: W, outcomes: &[NodeOutcome], priors: &[ChannelState], truth: Option<&[ChannelState]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "node", "m_beta", "index", "prior_re", "prior_im", "estimate_re", "estimate_im", "truth_re", "truth_im", "status",
    ])?;
    for (k, o) in outcomes.iter().enumerate() {
        let prior = &priors[k];
        for i in 0..prior.len() {
            let p = prior.gains()[i];
            let (e, status) = match &o.result {
                Ok(r) => (Some(r.h_star.gains()[i]), "ok".to_string()),
                Err(err) => (None, format!("error: {err}")),
            };
            let t = truth.map(|t| t[k].gains()[i]);
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                o.node().to_string(),
                o.view.m_beta().to_string(),
                i.to_string(),
                p.re.to_string(),
                p.im.to_string(),
                fmt(e.map(|c| c.re)),
                fmt(e.map(|c| c.im)),
                fmt(t.map(|c| c.re)),
                fmt(t.map(|c| c.im)),
                status,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
