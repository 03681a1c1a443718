//! Slot-level discrete-event simulation of single-source broadcast.
//!
//! Every stage the source originates one message. The stage is divided into
//! `slots_per_stage` packet slots; in each slot every node that holds the
//! message, has decided to forward, still has budget and still sees an
//! uncovered target transmits once. All transmissions of a slot are resolved
//! against the coverage state at the start of the slot, then receptions and
//! ACKs are applied, newly reached nodes decide their action, and every
//! directed link takes one fading transition. When the stage ends each node
//! that handled the message folds its utility into its learner.
//!
//! Random draws, in order, from the single per-run generator:
//! 1. construction: initial bin of every directed link (source-major,
//!    neighbor-ascending);
//! 2. per slot: one uniform per (transmitter ascending, uncovered neighbor
//!    ascending); then one uniform per newly reached learning node
//!    (ascending) for its action; then one uniform per directed link for the
//!    fading transition (skipped entirely when `sigma = 0`).

use crate::baselines::{self, BaselineError, BroadcastTree};
use crate::channel::{self, expected_retransmissions, semi_reliable_quantile, FadingProfile};
use crate::equilibrium::{ce_check, EmpiricalPlay, EquilibriumError, FiniteGame, JointSpace};
use crate::regret::{Action, Estimator, LearnerParams, RegretError, RegretState, StageObservation};
use crate::topology::Topology;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Largest player ensemble tracked by the joint-play diagnostic.
pub const MAX_ENSEMBLE: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Learner(#[from] RegretError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Channel(#[from] channel::ChannelError),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Rtb,
    EnhancedRtb,
    Flooding,
    Mpr,
    GbBtc,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Rtb, Scheme::EnhancedRtb, Scheme::Flooding, Scheme::Mpr, Scheme::GbBtc];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Rtb => "rtb",
            Scheme::EnhancedRtb => "enhanced-rtb",
            Scheme::Flooding => "flooding",
            Scheme::Mpr => "mpr",
            Scheme::GbBtc => "gb-btc",
        }
    }

    pub fn is_learning(self) -> bool {
        matches!(self, Scheme::Rtb | Scheme::EnhancedRtb)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rtb" => Ok(Scheme::Rtb),
            "enhanced-rtb" | "enhanced_rtb" | "ertb" => Ok(Scheme::EnhancedRtb),
            "flooding" => Ok(Scheme::Flooding),
            "mpr" => Ok(Scheme::Mpr),
            "gb-btc" | "gbbtc" | "gb_btc" => Ok(Scheme::GbBtc),
            other => Err(format!("unknown scheme '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// Retransmit until every target is covered or the stage ends.
    Reliable,
    /// Cap attempts at the `delta`-quantile of the coverage time computed from
    /// current bins (CSI schemes) or at `fixed_cap` otherwise.
    SemiReliable { delta: f64, fixed_cap: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageConfig {
    pub slots_per_stage: u32,
    pub packet_bits: u32,
    pub alpha: f64,
    pub regime: Regime,
    pub scheme: Scheme,
}

/// How link bins are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialBins {
    Stationary,
    /// Every link starts in this bin.
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub stage: StageConfig,
    pub learner: LearnerParams,
    pub num_stages: u64,
    pub seed: u64,
    pub source: usize,
    pub initial_bins: InitialBins,
    /// Center nodes whose player ensembles get a joint-play diagnostic.
    pub ce_centers: Vec<usize>,
    /// Stage stride between CE diagnostic samples.
    pub ce_stride: u64,
}

impl SimConfig {
    pub fn new(stage: StageConfig, learner: LearnerParams, num_stages: u64, seed: u64) -> Self {
        Self {
            stage,
            learner,
            num_stages,
            seed,
            source: 0,
            initial_bins: InitialBins::Stationary,
            ce_centers: Vec::new(),
            ce_stride: 100,
        }
    }
}

/// Observables of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub stage: u64,
    pub delivery_ratio: f64,
    pub total_transmissions: u64,
    pub per_node_transmissions: Vec<u32>,
    pub reached: usize,
    /// Nodes (source included) that forwarded this stage's message.
    pub forwarders: usize,
}

/// One joint-play diagnostic sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CeSample {
    pub stage: u64,
    pub ensemble_id: usize,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub scheme: Scheme,
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    /// Transmissions per node summed over the run.
    pub load: Vec<u64>,
    pub ce_series: Vec<CeSample>,
    pub tree: Option<BroadcastTree>,
}

/// A broadcast message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BroadcastMessage {
    pub seq: u64,
    pub origin: usize,
}

/// Creates the message for stage `n`.
pub fn source_originate(stage: u64, source: usize) -> Result<BroadcastMessage> {
    if stage == 0 {
        return Err(SimError::Config("stages are numbered from 1".into()));
    }
    Ok(BroadcastMessage { seq: stage, origin: source })
}

/// Utility a node perceives for one stage: `r - α·c` after forwarding, the
/// overheard coverage `r̂` after dropping.
pub fn instantaneous_utility(action: Action, covered: usize, degree: usize, attempts: u32, alpha: f64) -> f64 {
    let r = if degree == 0 { 0.0 } else { covered as f64 / degree as f64 };
    match action {
        Action::Forward => r - alpha * attempts as f64,
        Action::Drop => r,
    }
}

/// Per-node protocol state for the current stage.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRuntime {
    /// `None` until the node handles the current message.
    pub action: Option<Action>,
    pub attempts: u32,
    pub cap: u32,
    pub covered_count: usize,
    pub received_slot: Option<u32>,
    pub first_sender: Option<usize>,
    /// `α·C̄` at reception, for the CSI estimator.
    pub scaled_expected_cost: Option<f64>,
}

impl NodeRuntime {
    fn idle() -> Self {
        Self {
            action: None,
            attempts: 0,
            cap: 0,
            covered_count: 0,
            received_slot: None,
            first_sender: None,
            scaled_expected_cost: None,
        }
    }

    pub fn handled(&self) -> bool {
        self.action.is_some()
    }
}

/// Read-only view handed to observers after every slot.
pub struct SlotView<'a> {
    pub stage: u64,
    pub slot: u32,
    sim: &'a Simulation,
}

impl SlotView<'_> {
    pub fn holds(&self, i: usize) -> bool {
        self.sim.nodes[i].handled()
    }

    pub fn is_covered(&self, i: usize, j: usize) -> bool {
        self.sim.covered[i * self.sim.n + j]
    }

    pub fn runtime(&self, i: usize) -> &NodeRuntime {
        &self.sim.nodes[i]
    }

    pub fn num_nodes(&self) -> usize {
        self.sim.n
    }

    pub fn topology(&self) -> &Topology {
        &self.sim.topology
    }

    pub fn slots_per_stage(&self) -> u32 {
        self.sim.config.stage.slots_per_stage
    }
}

struct Ensemble {
    members: Vec<usize>,
    play: EmpiricalPlay,
}

/// A single simulation run.
pub struct Simulation {
    topology: Topology,
    profile: FadingProfile,
    config: SimConfig,
    n: usize,
    rng: ChaCha8Rng,
    success_by_bin: Vec<f64>,
    /// Offset of node `i`'s outgoing links in `link_state`.
    link_offset: Vec<usize>,
    link_state: Vec<u16>,
    /// `covered[i·n + j]`: `i` knows neighbor `j` holds the message.
    covered: Vec<bool>,
    nodes: Vec<NodeRuntime>,
    learners: Vec<Option<RegretState>>,
    /// Targets each node must cover before it stops retransmitting.
    targets: Vec<Vec<usize>>,
    /// `mpr_of[sender]`: sender's relay set (MPR scheme only).
    mpr_of: Vec<Vec<usize>>,
    tree: Option<BroadcastTree>,
    ensembles: Vec<Ensemble>,
    stage: u64,
    stage_tx: Vec<u32>,
    load: Vec<u64>,
    ce_series: Vec<CeSample>,
}

impl Simulation {
    pub fn new(topology: &Topology, profile: &FadingProfile, config: SimConfig) -> Result<Self> {
        let n = topology.len();
        validate(topology, profile, &config)?;
        let mut learner_params = config.learner;
        learner_params.estimator = match config.stage.scheme {
            Scheme::EnhancedRtb => Estimator::Csi,
            _ => Estimator::Proxy,
        };
        learner_params.alpha = config.stage.alpha;
        learner_params.validate()?;

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut link_offset = Vec::with_capacity(n + 1);
        let mut total = 0;
        for i in 0..n {
            link_offset.push(total);
            total += topology.degree(i);
        }
        link_offset.push(total);
        let link_state: Vec<u16> = (0..total)
            .map(|_| match config.initial_bins {
                InitialBins::Stationary => profile.sample_stationary(&mut rng) as u16,
                InitialBins::Fixed(k) => k as u16,
            })
            .collect();
        let success_by_bin = profile.success_table(config.stage.packet_bits);

        let scheme = config.stage.scheme;
        let learners = (0..n)
            .map(|i| {
                (scheme.is_learning() && i != config.source)
                    .then(|| RegretState::new(learner_params))
                    .transpose()
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;

        let mut sim = Self {
            topology: topology.clone(),
            profile: profile.clone(),
            n,
            rng,
            success_by_bin,
            link_offset,
            link_state,
            covered: vec![false; n * n],
            nodes: vec![NodeRuntime::idle(); n],
            learners,
            targets: (0..n).map(|i| topology.neighbors(i).to_vec()).collect(),
            mpr_of: Vec::new(),
            tree: None,
            ensembles: Vec::new(),
            stage: 0,
            stage_tx: vec![0; n],
            load: vec![0; n],
            ce_series: Vec::new(),
            config,
        };

        match scheme {
            Scheme::Mpr => {
                sim.mpr_of = (0..n)
                    .map(|i| baselines::mpr_select(topology, i))
                    .collect::<std::result::Result<_, _>>()?;
            }
            Scheme::GbBtc => {
                let tree = baselines::gbbtc_construct(topology, sim.config.source, &sim.success_matrix())?;
                for v in 0..n {
                    sim.targets[v] = tree.children(v).to_vec();
                }
                sim.tree = Some(tree);
            }
            _ => {}
        }

        if scheme.is_learning() {
            for &center in &sim.config.ce_centers {
                let members = ensemble_members(topology, center, sim.config.source);
                let space = JointSpace::binary(members.len())?;
                let play = EmpiricalPlay::new(space, members.clone(), learner_params.step)?;
                sim.ensembles.push(Ensemble { members, play });
            }
        }
        Ok(sim)
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn stage(&self) -> u64 {
        self.stage
    }

    pub fn runtime(&self, i: usize) -> &NodeRuntime {
        &self.nodes[i]
    }

    pub fn learner(&self, i: usize) -> Option<&RegretState> {
        self.learners[i].as_ref()
    }

    pub fn tree(&self) -> Option<&BroadcastTree> {
        self.tree.as_ref()
    }

    pub fn is_covered(&self, i: usize, j: usize) -> bool {
        self.covered[i * self.n + j]
    }

    /// Current bin of the directed link `i → j`.
    pub fn link_bin(&self, i: usize, j: usize) -> Option<usize> {
        let pos = self.topology.neighbors(i).binary_search(&j).ok()?;
        Some(self.link_state[self.link_offset[i] + pos] as usize)
    }

    /// Success probability of `i → j` in its current bin (0 for non-links).
    pub fn link_success(&self, i: usize, j: usize) -> f64 {
        self.link_bin(i, j).map_or(0.0, |k| self.success_by_bin[k])
    }

    /// Dense `success[from][to]` matrix at the current bins.
    pub fn success_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.link_success(i, j)).collect())
            .collect()
    }

    fn neighbor_success(&self, i: usize) -> Vec<f64> {
        let start = self.link_offset[i];
        self.link_state[start..self.link_offset[i + 1]]
            .iter()
            .map(|&k| self.success_by_bin[k as usize])
            .collect()
    }

    /// Expected transmissions for `i` to reach all neighbors at current bins.
    pub fn expected_cost(&self, i: usize) -> f64 {
        expected_retransmissions(&self.neighbor_success(i)).unwrap_or(f64::INFINITY)
    }

    pub fn run(mut self) -> Result<SimulationOutput> {
        self.run_observed(&mut |_| {})
    }

    /// Runs every stage, calling `observer` after each slot.
    pub fn run_observed(&mut self, observer: &mut dyn FnMut(&SlotView<'_>)) -> Result<SimulationOutput> {
        let mut records = Vec::with_capacity(self.config.num_stages as usize);
        for _ in 0..self.config.num_stages {
            records.push(self.run_stage(observer)?);
        }
        Ok(SimulationOutput {
            scheme: self.config.stage.scheme,
            seed: self.config.seed,
            records,
            load: self.load.clone(),
            ce_series: self.ce_series.clone(),
            tree: self.tree.clone(),
        })
    }

    /// Executes one full stage.
    pub fn run_stage(&mut self, observer: &mut dyn FnMut(&SlotView<'_>)) -> Result<MetricsRecord> {
        self.begin_stage()?;
        for slot in 0..self.config.stage.slots_per_stage {
            self.step_slot(slot)?;
            observer(&SlotView {
                stage: self.stage,
                slot,
                sim: self,
            });
        }
        self.end_stage()
    }

    /// Starts the next stage: clears per-stage state and lets the source
    /// originate the new message.
    pub fn begin_stage(&mut self) -> Result<BroadcastMessage> {
        self.stage += 1;
        let message = source_originate(self.stage, self.config.source)?;
        self.covered.iter_mut().for_each(|c| *c = false);
        self.nodes.iter_mut().for_each(|r| *r = NodeRuntime::idle());
        self.stage_tx.iter_mut().for_each(|t| *t = 0);
        let source = self.config.source;
        let cap = self.attempt_cap(source, false);
        let node = &mut self.nodes[source];
        node.action = Some(Action::Forward);
        node.received_slot = Some(0);
        node.cap = cap;
        Ok(message)
    }

    fn targets_covered(&self, i: usize) -> bool {
        self.targets[i].iter().all(|&j| self.covered[i * self.n + j])
    }

    /// True when node `i` would transmit in the coming slot.
    pub fn wants_to_transmit(&self, i: usize) -> bool {
        let node = &self.nodes[i];
        if node.action != Some(Action::Forward) || node.attempts >= node.cap {
            return false;
        }
        let forced_first = self.config.stage.scheme == Scheme::Flooding && node.attempts == 0;
        forced_first || !self.targets_covered(i)
    }

    /// One broadcast by node `i`: draws a reception for every neighbor `i`
    /// does not yet know to be covered and returns those that succeeded.
    /// Coverage and ACK effects are applied by the caller.
    pub fn transmit_attempt(&mut self, i: usize) -> Result<Vec<usize>> {
        let node = &self.nodes[i];
        if node.action != Some(Action::Forward) {
            return Err(SimError::Protocol(format!("node {i} is not forwarding")));
        }
        if node.attempts >= node.cap {
            return Err(SimError::Protocol(format!("node {i} exhausted its attempt budget")));
        }
        if !self.wants_to_transmit(i) {
            return Err(SimError::Protocol(format!("node {i} has no uncovered target")));
        }
        let start = self.link_offset[i];
        let mut successes = Vec::new();
        for (pos, &j) in self.topology.neighbors(i).iter().enumerate() {
            if self.covered[i * self.n + j] {
                continue;
            }
            let p = self.success_by_bin[self.link_state[start + pos] as usize];
            let u: f64 = self.rng.random();
            if u < p {
                successes.push(j);
            }
        }
        self.nodes[i].attempts += 1;
        self.stage_tx[i] += 1;
        Ok(successes)
    }

    /// Applies the receptions of one slot. `receptions` holds
    /// `(transmitter, receiver)` pairs in transmitter order.
    fn deliver(&mut self, slot: u32, receptions: &[(usize, usize)]) -> Vec<usize> {
        let n = self.n;
        let mut fresh = Vec::new();
        for &(i, j) in receptions {
            if !self.nodes[j].handled() && self.nodes[j].received_slot.is_none() {
                self.nodes[j].received_slot = Some(slot);
                self.nodes[j].first_sender = Some(i);
                fresh.push(j);
            }
        }
        fresh.sort_unstable();
        // fresh receivers hold the message from here on; mark them so their
        // own ACKs and overhearing take effect this slot
        for &j in &fresh {
            self.nodes[j].action = Some(Action::Drop);
        }
        for &(i, j) in receptions {
            // the data packet itself shows that the transmitter holds it
            self.mark_covered(j, i);
            // j's ACK reaches every neighbor handling this message
            for idx in 0..self.topology.degree(j) {
                let k = self.topology.neighbors(j)[idx];
                if self.nodes[k].handled() {
                    self.mark_covered(k, j);
                }
            }
        }
        debug_assert!(self.covered.len() == n * n);
        fresh
    }

    fn mark_covered(&mut self, i: usize, j: usize) {
        let cell = &mut self.covered[i * self.n + j];
        if !*cell {
            *cell = true;
            self.nodes[i].covered_count += 1;
        }
    }

    fn attempt_cap(&self, i: usize, csi: bool) -> u32 {
        let slots = self.config.stage.slots_per_stage;
        match self.config.stage.regime {
            Regime::Reliable => slots,
            Regime::SemiReliable { delta, fixed_cap } => {
                if csi {
                    semi_reliable_quantile(&self.neighbor_success(i), delta)
                        .map(|c| c.min(slots as u64) as u32)
                        .unwrap_or(slots)
                } else {
                    fixed_cap.min(slots)
                }
            }
        }
    }

    /// Decides the action of a node that has just received the message.
    fn decide(&mut self, j: usize) -> Result<()> {
        let scheme = self.config.stage.scheme;
        let action = match scheme {
            Scheme::Rtb | Scheme::EnhancedRtb => {
                let learner = self.learners[j].as_ref().expect("learning nodes have learners");
                let strategy = learner.strategy();
                crate::regret::sample_action(&strategy, &mut self.rng)?
            }
            Scheme::Flooding => baselines::flooding_policy(),
            Scheme::Mpr => {
                let sender = self.nodes[j].first_sender.expect("receivers know their sender");
                if self.mpr_of[sender].binary_search(&j).is_ok() {
                    Action::Forward
                } else {
                    Action::Drop
                }
            }
            Scheme::GbBtc => {
                if self.targets[j].is_empty() {
                    Action::Drop
                } else {
                    Action::Forward
                }
            }
        };
        let csi = scheme == Scheme::EnhancedRtb;
        if csi {
            self.nodes[j].scaled_expected_cost = Some(self.config.stage.alpha * self.expected_cost(j));
        }
        self.nodes[j].cap = self.attempt_cap(j, csi);
        self.nodes[j].action = Some(action);
        if action == Action::Drop {
            self.nodes[j].cap = 0;
        }
        Ok(())
    }

    /// One packet slot: transmissions, receptions and ACKs, decisions of
    /// newly reached nodes, fading transitions.
    pub fn step_slot(&mut self, slot: u32) -> Result<()> {
        let transmitters: Vec<usize> = (0..self.n).filter(|&i| self.wants_to_transmit(i)).collect();
        let mut receptions = Vec::new();
        for i in transmitters {
            for j in self.transmit_attempt(i)? {
                receptions.push((i, j));
            }
        }
        let fresh = self.deliver(slot, &receptions);
        for j in fresh {
            self.decide(j)?;
        }
        self.advance_links();
        Ok(())
    }

    fn advance_links(&mut self) {
        let sigma = self.profile.sigma();
        if sigma == 0.0 {
            return;
        }
        let bins = self.profile.num_bins();
        for state in self.link_state.iter_mut() {
            let u: f64 = self.rng.random();
            *state = channel::next_state(*state as usize, bins, sigma, u) as u16;
        }
    }

    /// Closes the stage: records metrics, updates learners and diagnostics.
    pub fn end_stage(&mut self) -> Result<MetricsRecord> {
        let source = self.config.source;
        let reached = (0..self.n).filter(|&i| i != source && self.nodes[i].handled()).count();
        let forwarders = self.nodes.iter().filter(|r| r.action == Some(Action::Forward)).count();
        for (total, &t) in self.load.iter_mut().zip(&self.stage_tx) {
            *total += t as u64;
        }
        let record = MetricsRecord {
            stage: self.stage,
            delivery_ratio: reached as f64 / (self.n - 1) as f64,
            total_transmissions: self.stage_tx.iter().map(|&t| t as u64).sum(),
            per_node_transmissions: self.stage_tx.clone(),
            reached,
            forwarders,
        };
        for i in 0..self.n {
            self.expire_and_learn(i)?;
        }
        self.sample_diagnostics()?;
        Ok(record)
    }

    /// Learner update for node `i` when its handled message expires; a no-op
    /// for nodes that did not handle it or do not learn.
    pub fn expire_and_learn(&mut self, i: usize) -> Result<()> {
        let node = &self.nodes[i];
        let Some(action) = node.action else {
            return Ok(());
        };
        let Some(learner) = self.learners[i].as_mut() else {
            return Ok(());
        };
        let degree = self.topology.degree(i);
        let alpha = self.config.stage.alpha;
        let utility = instantaneous_utility(action, node.covered_count, degree, node.attempts, alpha);
        let reward = instantaneous_utility(Action::Drop, node.covered_count, degree, 0, alpha);
        learner.update(StageObservation {
            action,
            utility,
            reward,
            scaled_expected_cost: node.scaled_expected_cost,
        })?;
        Ok(())
    }

    fn sample_diagnostics(&mut self) -> Result<()> {
        if self.ensembles.is_empty() {
            return Ok(());
        }
        let stride = self.config.ce_stride.max(1);
        let sample = self.stage % stride == 0;
        for id in 0..self.ensembles.len() {
            let index = self.ensembles[id]
                .members
                .iter()
                .enumerate()
                .map(|(bit, &m)| usize::from(self.nodes[m].action == Some(Action::Forward)) << bit)
                .sum();
            self.ensembles[id].play.update_index(index)?;
            if sample {
                let game = self.ensemble_game(&self.ensembles[id].members)?;
                let report = ce_check(self.ensembles[id].play.distribution(), &game, 0.0)?;
                self.ce_series.push(CeSample {
                    stage: self.stage,
                    ensemble_id: id,
                    max_violation: report.max_violation,
                });
            }
        }
        Ok(())
    }

    /// Model forwarding game over an ensemble at the current bins: a
    /// forwarder covers all its neighbors at expected cost `α·C̄`; a dropper
    /// earns the fraction of its neighbors covered by forwarding members.
    pub fn ensemble_game(&self, members: &[usize]) -> Result<FiniteGame> {
        let alpha = self.config.stage.alpha;
        let costs: Vec<f64> = members
            .iter()
            .map(|&m| alpha * self.expected_cost(m).min(self.config.stage.slots_per_stage as f64))
            .collect();
        let topology = &self.topology;
        Ok(FiniteGame::from_fn(vec![2; members.len()], |profile| {
            let forwarding: Vec<usize> = members
                .iter()
                .zip(profile)
                .filter(|(_, &a)| a == 1)
                .map(|(&m, _)| m)
                .collect();
            members
                .iter()
                .zip(profile)
                .enumerate()
                .map(|(slot, (&m, &a))| {
                    if a == 1 {
                        1.0 - costs[slot]
                    } else {
                        let nbrs = topology.neighbors(m);
                        let covered = nbrs
                            .iter()
                            .filter(|&&j| forwarding.iter().any(|&f| f == j || topology.are_neighbors(f, j)))
                            .count();
                        covered as f64 / nbrs.len().max(1) as f64
                    }
                })
                .collect()
        })?)
    }
}

/// Ensemble of `center` restricted to at most [`MAX_ENSEMBLE`] non-source
/// players: the center first, then the members with the largest neighborhood
/// overlap (ties to the lowest index). Returned sorted.
pub fn ensemble_members(topology: &Topology, center: usize, source: usize) -> Vec<usize> {
    let mut others: Vec<usize> = topology
        .player_ensemble(center)
        .unwrap_or_default()
        .into_iter()
        .filter(|&k| k != center && k != source)
        .collect();
    others.sort_by_key(|&k| (std::cmp::Reverse(topology.shared_neighbors(center, k)), k));
    others.truncate(MAX_ENSEMBLE - 1);
    let mut members = vec![center];
    members.extend(others);
    members.sort_unstable();
    members
}

fn validate(topology: &Topology, profile: &FadingProfile, config: &SimConfig) -> Result<()> {
    let n = topology.len();
    let stage = &config.stage;
    if n < 2 {
        return Err(SimError::Config("need at least two nodes".into()));
    }
    if config.source >= n {
        return Err(SimError::Config(format!("source {} out of range", config.source)));
    }
    if stage.slots_per_stage == 0 {
        return Err(SimError::Config("slots_per_stage must be >= 1".into()));
    }
    if stage.packet_bits == 0 {
        return Err(SimError::Config("packet length must be >= 1 bit".into()));
    }
    if !(stage.alpha >= 0.0) || !stage.alpha.is_finite() {
        return Err(SimError::Config(format!("alpha must be nonnegative, got {}", stage.alpha)));
    }
    if let Regime::SemiReliable { delta, fixed_cap } = stage.regime {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(SimError::Config(format!("semi-reliable delta must lie in (0, 1), got {delta}")));
        }
        if fixed_cap == 0 {
            return Err(SimError::Config("semi-reliable fixed cap must be >= 1".into()));
        }
    }
    if let InitialBins::Fixed(k) = config.initial_bins {
        if k >= profile.num_bins() {
            return Err(SimError::Config(format!("initial bin {k} out of range")));
        }
    }
    if profile.num_bins() > u16::MAX as usize {
        return Err(SimError::Config("too many bins".into()));
    }
    if (0..n).any(|i| topology.degree(i) == 0) {
        return Err(SimError::Config("every node needs at least one neighbor".into()));
    }
    let unique: HashSet<usize> = config.ce_centers.iter().copied().collect();
    if unique.len() != config.ce_centers.len() || config.ce_centers.iter().any(|&c| c >= n) {
        return Err(SimError::Config("CE ensemble centers must be distinct valid nodes".into()));
    }
    Ok(())
}

/// Convenience wrapper: build and run.
pub fn run_simulation(topology: &Topology, profile: &FadingProfile, config: SimConfig) -> Result<SimulationOutput> {
    Simulation::new(topology, profile, config)?.run()
}
