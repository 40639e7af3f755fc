//! Domain types shared by the simulator, metrics and harness.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Round index. Rounds are the only unit of time.
pub type Round = u64;

/// Dense replica identifier in `0..n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplicaId(pub u32);

impl ReplicaId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for ReplicaId {
    fn from(i: usize) -> Self {
        ReplicaId(u32::try_from(i).expect("replica index fits in u32"))
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Opaque update identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UpdateId(pub u32);

impl fmt::Display for UpdateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

/// Target-selection strategy run by every correct replica.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Protocol {
    /// Uniform targets among all other replicas.
    Random,
    /// Uniform targets within the binary-tree candidate set, blocks of `ell`.
    LTree { ell: usize },
    /// Deterministic cyclic targets; analytical baseline.
    RoundRobin,
}

impl Protocol {
    /// Tree-Random: the ℓ-Tree protocol with blocks of `4t`.
    pub fn tree_random(t: usize) -> Self {
        Protocol::LTree { ell: 4 * t }
    }

    pub fn block_size(&self) -> Option<usize> {
        match self {
            Protocol::LTree { ell } => Some(*ell),
            _ => None,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::Random => f.write_str("random"),
            Protocol::LTree { ell } => write!(f, "ltree:{ell}"),
            Protocol::RoundRobin => f.write_str("round_robin"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown protocol `{0}` (expected random, round_robin or ltree:<block size>)")]
pub struct ParseProtocolError(String);

impl FromStr for Protocol {
    type Err = ParseProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "random" => return Ok(Protocol::Random),
            "round_robin" | "round-robin" => return Ok(Protocol::RoundRobin),
            _ => {}
        }
        s.strip_prefix("ltree:")
            .and_then(|ell| ell.trim().parse().ok())
            .map(|ell| Protocol::LTree { ell })
            .ok_or_else(|| ParseProtocolError(s.to_owned()))
    }
}

impl TryFrom<String> for Protocol {
    type Error = ParseProtocolError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Protocol> for String {
    fn from(p: Protocol) -> String {
        p.to_string()
    }
}

/// Relaxed-synchrony model: a fraction of messages arrive late or never.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationConfig {
    /// Probability that a message is perturbed at all.
    pub perturb_prob: f64,
    /// Share of perturbed messages that are dropped; the rest are delayed.
    pub drop_fraction: f64,
    /// Delayed messages arrive `1..=max_delay` rounds late.
    pub max_delay: u64,
}

impl PerturbationConfig {
    pub const SYNCHRONOUS: PerturbationConfig =
        PerturbationConfig { perturb_prob: 0.0, drop_fraction: 0.5, max_delay: 1 };

    pub fn is_synchronous(&self) -> bool {
        self.perturb_prob == 0.0
    }
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self::SYNCHRONOUS
    }
}

/// Global parameters of one simulated system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n: usize,
    /// Strictly fewer than `t` replicas are faulty; acceptance needs `t` senders.
    pub t: usize,
    pub fan_out: usize,
    pub protocol: Protocol,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub seed: u64,
}

impl SystemConfig {
    pub fn new(n: usize, t: usize, fan_out: usize, protocol: Protocol) -> Self {
        SystemConfig { n, t, fan_out, protocol, perturbation: PerturbationConfig::default(), seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_perturbation(mut self, perturbation: PerturbationConfig) -> Self {
        self.perturbation = perturbation;
        self
    }
}

/// One violated configuration constraint.
#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize)]
#[error("invalid parameter `{field}`: requires {constraint}")]
pub struct InvalidParameter {
    pub field: &'static str,
    pub constraint: String,
}

impl InvalidParameter {
    pub fn new(field: &'static str, constraint: impl Into<String>) -> Self {
        InvalidParameter { field, constraint: constraint.into() }
    }
}

/// Every violation found in a configuration.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{} invalid parameter(s): {}", .0.len(), render(.0))]
pub struct ConfigErrors(pub Vec<InvalidParameter>);

fn render(errs: &[InvalidParameter]) -> String {
    errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl ConfigErrors {
    pub fn violations(&self) -> &[InvalidParameter] {
        &self.0
    }
}

/// A configuration that passed validation, with non-fatal advisories.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidatedConfig {
    pub config: SystemConfig,
    pub advisories: Vec<String>,
}

/// Checks every invariant of `config`, collecting all violations.
///
/// Parameter choices outside the ranges the delay analyses cover are
/// reported as advisories and never reject the run.
pub fn validate_config(config: &SystemConfig) -> Result<ValidatedConfig, ConfigErrors> {
    let SystemConfig { n, t, fan_out, protocol, perturbation, .. } = *config;
    let mut errs = Vec::new();

    if n < 1 {
        errs.push(InvalidParameter::new("n", "n ≥ 1"));
    }
    if t < 1 {
        errs.push(InvalidParameter::new("t", "t ≥ 1"));
    } else if t > n {
        errs.push(InvalidParameter::new("t", format!("t ≤ n (t={t}, n={n})")));
    }
    if fan_out < 1 {
        errs.push(InvalidParameter::new("fan_out", "fan_out ≥ 1"));
    } else if fan_out + 1 > n {
        errs.push(InvalidParameter::new("fan_out", format!("fan_out ≤ n − 1 (fan_out={fan_out}, n={n})")));
    }
    if let Protocol::LTree { ell } = protocol {
        if ell < 1 || ell > n {
            errs.push(InvalidParameter::new("protocol.ell", format!("1 ≤ ℓ ≤ n (ℓ={ell}, n={n})")));
        }
    }
    let unit = |x: f64| (0.0..=1.0).contains(&x);
    if !unit(perturbation.perturb_prob) {
        errs.push(InvalidParameter::new("perturbation.perturb_prob", "perturb_prob ∈ [0, 1]"));
    }
    if !unit(perturbation.drop_fraction) {
        errs.push(InvalidParameter::new("perturbation.drop_fraction", "drop_fraction ∈ [0, 1]"));
    }
    if perturbation.max_delay < 1 {
        errs.push(InvalidParameter::new("perturbation.max_delay", "max_delay ≥ 1"));
    }
    if !errs.is_empty() {
        return Err(ConfigErrors(errs));
    }

    let mut advisories = Vec::new();
    match protocol {
        Protocol::Random if 4 * t > n => {
            advisories.push(format!("t > n/4 (t={t}, n={n}) is outside the analyzed range of the Random delay bound"))
        }
        Protocol::LTree { ell } if ell < 4 * t => {
            advisories.push(format!("ℓ < 4t (ℓ={ell}, t={t}) is outside the analyzed range of the ℓ-Tree delay bound"))
        }
        _ => {}
    }
    Ok(ValidatedConfig { config: config.clone(), advisories })
}

/// Introduction of one update into the system.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateIntro {
    pub id: UpdateId,
    pub intro_round: Round,
    /// Correct replicas that hold the update from `intro_round`; sorted.
    pub initial_set: Vec<ReplicaId>,
    /// `false` for updates fabricated by faulty replicas.
    pub genuine: bool,
}

impl UpdateIntro {
    pub fn genuine(id: UpdateId, intro_round: Round, initial_set: impl IntoIterator<Item = ReplicaId>) -> Self {
        let mut initial_set: Vec<_> = initial_set.into_iter().collect();
        initial_set.sort_unstable();
        initial_set.dedup();
        UpdateIntro { id, intro_round, initial_set, genuine: true }
    }

    pub fn spurious(id: UpdateId, intro_round: Round) -> Self {
        UpdateIntro { id, intro_round, initial_set: Vec::new(), genuine: false }
    }

    /// |I_u|.
    pub fn alpha(&self) -> usize {
        self.initial_set.len()
    }

    pub fn is_initial(&self, p: ReplicaId) -> bool {
        self.initial_set.binary_search(&p).is_ok()
    }
}

/// How an experiment picks the initial-set size for each point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AlphaRule {
    Fixed(usize),
    TPlusOne,
    /// ⌈√(2tn)⌉.
    Sqrt2tn,
}

impl AlphaRule {
    pub fn alpha(&self, n: usize, t: usize) -> usize {
        match *self {
            AlphaRule::Fixed(a) => a,
            AlphaRule::TPlusOne => t + 1,
            AlphaRule::Sqrt2tn => ceil_sqrt(2 * t as u64 * n as u64) as usize,
        }
    }
}

fn ceil_sqrt(x: u64) -> u64 {
    let mut r = (x as f64).sqrt() as u64;
    while r * r > x {
        r -= 1;
    }
    while r * r < x {
        r += 1;
    }
    r
}

impl fmt::Display for AlphaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaRule::Fixed(a) => write!(f, "fixed:{a}"),
            AlphaRule::TPlusOne => f.write_str("t+1"),
            AlphaRule::Sqrt2tn => f.write_str("sqrt2tn"),
        }
    }
}

impl FromStr for AlphaRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "t+1" | "t_plus_1" => Ok(AlphaRule::TPlusOne),
            "sqrt2tn" | "sqrt_2tn" => Ok(AlphaRule::Sqrt2tn),
            other => other
                .strip_prefix("fixed:")
                .unwrap_or(other)
                .parse()
                .map(AlphaRule::Fixed)
                .map_err(|_| format!("unknown alpha rule `{other}` (expected fixed:<k>, t+1 or sqrt2tn)")),
        }
    }
}

impl TryFrom<String> for AlphaRule {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<AlphaRule> for String {
    fn from(a: AlphaRule) -> String {
        a.to_string()
    }
}

/// Set of update ids carried by one message. Shared between the copies a
/// replica sends in one round.
pub type Payload = Arc<[UpdateId]>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub sender: ReplicaId,
    pub target: ReplicaId,
    pub send_round: Round,
    pub payload: Payload,
}

/// What one replica knows about one update.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UpdateRecord {
    /// Distinct senders, in arrival order. Not extended after acceptance.
    pub senders_seen: Vec<ReplicaId>,
    pub accept_round: Option<Round>,
}

impl UpdateRecord {
    pub fn accepted(&self) -> bool {
        self.accept_round.is_some()
    }
}

/// Per-replica diffusion state, one record per scheduled update.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplicaState {
    pub id: ReplicaId,
    pub records: Vec<UpdateRecord>,
}

impl ReplicaState {
    pub fn new(id: ReplicaId, updates: usize) -> Self {
        ReplicaState { id, records: vec![UpdateRecord::default(); updates] }
    }

    /// Marks update `idx` as held from `round` because this replica is in I_u.
    pub fn introduce(&mut self, idx: usize, round: Round) -> bool {
        let rec = &mut self.records[idx];
        if rec.accepted() {
            return false;
        }
        rec.accept_round = Some(round);
        true
    }

    /// Registers that `sender` delivered update `idx` in `round`; returns
    /// `true` when this delivery makes the replica accept.
    pub fn deliver(&mut self, idx: usize, sender: ReplicaId, t: usize, round: Round) -> bool {
        debug_assert_ne!(sender, self.id, "replicas never message themselves");
        let rec = &mut self.records[idx];
        if rec.accepted() || sender == self.id || rec.senders_seen.contains(&sender) {
            return false;
        }
        rec.senders_seen.push(sender);
        if accept_rule(false, rec.senders_seen.len(), t) {
            rec.accept_round = Some(round);
            true
        } else {
            false
        }
    }
}

/// The threshold acceptance rule: members of I_u accept outright, anyone
/// else once `t` distinct replicas (correct or not) delivered the update.
#[inline]
pub fn accept_rule(in_initial_set: bool, distinct_senders: usize, t: usize) -> bool {
    in_initial_set || distinct_senders >= t
}
