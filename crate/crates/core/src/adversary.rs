//! Failure configurations and Byzantine behaviors.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Message, Payload, ReplicaId, Round, UpdateId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Sends nothing. The delay-worst case.
    Silent,
    /// Floods spurious (and optionally genuine) updates.
    Spam,
    /// Runs the protocol like a correct replica.
    Conforming,
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Behavior::Silent => "silent",
            Behavior::Spam => "spam",
            Behavior::Conforming => "conforming",
        })
    }
}

impl FromStr for Behavior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "silent" => Ok(Behavior::Silent),
            "spam" => Ok(Behavior::Spam),
            "conforming" => Ok(Behavior::Conforming),
            other => Err(format!("unknown behavior `{other}` (expected silent, spam or conforming)")),
        }
    }
}

/// Where spamming replicas aim.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpamTargeting {
    /// Every faulty replica hammers the same correct victim.
    Victim(ReplicaId),
    /// Each message goes to a uniformly chosen other replica.
    Scatter,
}

/// The faulty replicas of one trial and how they misbehave.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureConfig {
    #[serde(with = "as_pairs")]
    pub faulty: BTreeMap<ReplicaId, Behavior>,
    /// Messages per spamming replica per round; not bounded by the fan-out.
    pub spam_budget: usize,
    pub targeting: SpamTargeting,
    /// Whether spam payloads also carry every genuine update introduced so far.
    pub knows_genuine: bool,
}

impl FailureConfig {
    /// No faulty replicas.
    pub fn none() -> Self {
        FailureConfig {
            faulty: BTreeMap::new(),
            spam_budget: 0,
            targeting: SpamTargeting::Scatter,
            knows_genuine: true,
        }
    }

    pub fn uniform(faulty: impl IntoIterator<Item = ReplicaId>, behavior: Behavior) -> Self {
        FailureConfig { faulty: faulty.into_iter().map(|p| (p, behavior)).collect(), ..FailureConfig::none() }
    }

    pub fn with_spam(mut self, budget: usize, targeting: SpamTargeting, knows_genuine: bool) -> Self {
        self.spam_budget = budget;
        self.targeting = targeting;
        self.knows_genuine = knows_genuine;
        self
    }

    pub fn is_faulty(&self, p: ReplicaId) -> bool {
        self.faulty.contains_key(&p)
    }

    pub fn behavior(&self, p: ReplicaId) -> Option<Behavior> {
        self.faulty.get(&p).copied()
    }

    pub fn faulty_count(&self) -> usize {
        self.faulty.len()
    }

    pub fn correct(&self, n: usize) -> impl Iterator<Item = ReplicaId> + '_ {
        (0..n).map(ReplicaId::from).filter(move |p| !self.is_faulty(*p))
    }

    /// The failure model tolerates strictly fewer than `t` faulty replicas.
    pub fn within_threshold(&self, t: usize) -> bool {
        self.faulty.len() < t
    }
}

// Map keys would become strings in JSON; a list of pairs keeps ids numeric.
mod as_pairs {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<ReplicaId, Behavior>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<ReplicaId, Behavior>, D::Error> {
        Ok(Vec::<(ReplicaId, Behavior)>::deserialize(d)?.into_iter().collect())
    }
}

/// Chooses `t − 1` faulty replicas uniformly without replacement, all with
/// `behavior`. Spam, when selected, aims at one correct victim chosen
/// uniformly, with a budget of `n` messages per round.
pub fn sample_failure_config<R: Rng + ?Sized>(rng: &mut R, n: usize, t: usize, behavior: Behavior) -> FailureConfig {
    sample_failures(rng, n, t.saturating_sub(1), behavior)
}

/// Like [`sample_failure_config`] with an explicit number of faulty replicas.
pub fn sample_failures<R: Rng + ?Sized>(rng: &mut R, n: usize, count: usize, behavior: Behavior) -> FailureConfig {
    assert!(count <= n, "cannot fail {count} of {n} replicas");
    let faulty = index::sample(rng, n, count).into_iter().map(ReplicaId::from);
    let mut cfg = FailureConfig::uniform(faulty, behavior).with_spam(n, SpamTargeting::Scatter, true);
    if count < n {
        let correct: Vec<_> = cfg.correct(n).collect();
        cfg.targeting = SpamTargeting::Victim(correct[rng.gen_range(0..correct.len())]);
    }
    cfg
}

/// What a faulty replica does in a round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FaultyAction {
    /// Run the protocol exactly as a correct replica would.
    FollowProtocol,
    Send(Vec<Message>),
}

/// Messages a faulty replica emits in `round`.
///
/// `known` lists every update the adversary may put in payloads: spurious
/// updates plus, when the configuration says so, introduced genuine ones.
pub fn faulty_sends<R: Rng + ?Sized>(
    behavior: Behavior,
    rng: &mut R,
    round: Round,
    me: ReplicaId,
    n: usize,
    config: &FailureConfig,
    known: &[UpdateId],
) -> FaultyAction {
    match behavior {
        Behavior::Silent => FaultyAction::Send(Vec::new()),
        Behavior::Conforming => FaultyAction::FollowProtocol,
        Behavior::Spam => {
            let payload: Payload = Arc::from(known);
            let mut out = Vec::with_capacity(config.spam_budget);
            let msg = |target| Message { sender: me, target, send_round: round, payload: payload.clone() };
            match config.targeting {
                SpamTargeting::Victim(v) if v != me => {
                    out.extend((0..config.spam_budget).map(|_| msg(v)));
                }
                SpamTargeting::Victim(_) => {}
                SpamTargeting::Scatter if n > 1 => {
                    for _ in 0..config.spam_budget {
                        let mut q = rng.gen_range(0..n - 1);
                        if q >= me.index() {
                            q += 1;
                        }
                        out.push(msg(ReplicaId::from(q)));
                    }
                }
                SpamTargeting::Scatter => {}
            }
            FaultyAction::Send(out)
        }
    }
}
