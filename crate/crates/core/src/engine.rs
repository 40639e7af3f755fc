//! The synchronous round scheduler.
//!
//! Each round runs three phases in order:
//!
//! 1. **send**: every correct (or conforming faulty) replica picks targets
//!    and sends its accepted-update set; other faulty replicas act per
//!    their behavior. Updates introduced this round are then handed to
//!    their initial sets.
//! 2. **deliver**: the network delivers, delays or drops each message.
//! 3. **receive**: replicas fold deliveries into their distinct-sender sets
//!    and apply the acceptance rule.
//!
//! An update accepted in round `r` is first forwarded in round `r + 1`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::adversary::{faulty_sends, Behavior, FailureConfig, FaultyAction, SpamTargeting};
use crate::analysis::counting_lower_bound;
use crate::model::{
    validate_config, ConfigErrors, Message, Payload, PerturbationConfig, ReplicaId, ReplicaState, Round, SystemConfig,
    UpdateId, UpdateIntro,
};
use crate::protocols::TargetSelector;
use crate::rng::{stream, Stream, TrialRng};
use crate::trace::{AcceptanceEvent, MessageRecord, RoundLoads, TrialTrace};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid failure configuration: {0}")]
    Failure(String),
}

/// When a trial ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopRule {
    /// Last round that may run.
    pub max_rounds: Round,
    /// Stop as soon as every correct replica accepted every genuine update.
    pub until_all_accepted: bool,
}

impl StopRule {
    /// Runs until all correct replicas accepted, capped at the last
    /// introduction round plus 100 × the counting lower bound (at least 100).
    pub fn default_for(config: &SystemConfig, schedule: &[UpdateIntro], failure: &FailureConfig) -> Self {
        let n_correct = (config.n - failure.faulty_count()) as u64;
        let alpha = schedule.iter().filter(|u| u.genuine).map(|u| u.alpha()).min().unwrap_or(1).max(1);
        let bound = counting_lower_bound(n_correct, alpha as u64, config.t.max(1) as u64, config.fan_out.max(1) as u64)
            .unwrap_or(0);
        let last = schedule.iter().map(|u| u.intro_round).max().unwrap_or(0);
        StopRule { max_rounds: last + 100 * bound.max(1), until_all_accepted: true }
    }

    pub fn until_accepted_or(max_rounds: Round) -> Self {
        StopRule { max_rounds, until_all_accepted: true }
    }

    /// Runs exactly rounds `0..=last`.
    pub fn fixed(last: Round) -> Self {
        StopRule { max_rounds: last, until_all_accepted: false }
    }
}

/// What the trace keeps beyond acceptance events.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RecordOptions {
    /// Per-round per-replica message counters (needed for fan-in).
    pub loads: bool,
    /// Every message with its payload and fate.
    pub messages: bool,
}

impl RecordOptions {
    pub const LOADS: RecordOptions = RecordOptions { loads: true, messages: false };
    pub const ALL: RecordOptions = RecordOptions { loads: true, messages: true };
}

/// Fate of a message in the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delivery {
    Now,
    /// Arrives this many rounds after it was sent.
    Later(Round),
    Drop,
}

/// Network perturbation. Draws nothing when the model is synchronous.
pub fn perturb<R: Rng + ?Sized>(rng: &mut R, p: &PerturbationConfig) -> Delivery {
    if p.perturb_prob <= 0.0 || rng.gen::<f64>() >= p.perturb_prob {
        return Delivery::Now;
    }
    if rng.gen::<f64>() < p.drop_fraction {
        Delivery::Drop
    } else {
        Delivery::Later(rng.gen_range(1..=p.max_delay))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Correct,
    Faulty(Behavior),
}

impl Role {
    /// Whether the replica runs the protocol (and so keeps diffusion state).
    fn runs_protocol(self) -> bool {
        matches!(self, Role::Correct | Role::Faulty(Behavior::Conforming))
    }
}

/// A trial in progress.
pub struct Simulation {
    config: SystemConfig,
    failure: FailureConfig,
    schedule: Vec<UpdateIntro>,
    selector: TargetSelector,
    roles: Vec<Role>,
    states: Vec<ReplicaState>,
    // cached payload of each protocol-running replica; rebuilt after it accepts
    payloads: Vec<Payload>,
    stale: Vec<bool>,
    // (id, schedule index), sorted by id
    index: Vec<(UpdateId, usize)>,
    // correct replicas yet to accept each genuine update
    remaining: Vec<usize>,
    pending: BTreeMap<Round, Vec<Message>>,
    outbox: Vec<Message>,
    targets: Vec<ReplicaId>,
    target_rng: TrialRng,
    adversary_rng: TrialRng,
    network_rng: TrialRng,
    round: Round,
    record: RecordOptions,
    acceptances: Vec<AcceptanceEvent>,
    loads: Vec<RoundLoads>,
    messages: Vec<MessageRecord>,
}

impl Simulation {
    pub fn new(
        config: &SystemConfig,
        schedule: &[UpdateIntro],
        failure: &FailureConfig,
        record: RecordOptions,
    ) -> Result<Self, EngineError> {
        validate_config(config)?;
        let n = config.n;
        check_failure(config, failure)?;
        check_schedule(config, schedule, failure)?;

        let roles: Vec<Role> =
            (0..n).map(|p| failure.behavior(ReplicaId::from(p)).map_or(Role::Correct, Role::Faulty)).collect();
        let mut failure = failure.clone();
        if let SpamTargeting::Victim(v) = failure.targeting {
            if v.index() >= n {
                failure.targeting = SpamTargeting::Scatter;
            }
        }
        let mut index: Vec<_> = schedule.iter().enumerate().map(|(i, u)| (u.id, i)).collect();
        index.sort_unstable();
        let n_correct = n - failure.faulty_count();
        let remaining = schedule.iter().map(|u| if u.genuine { n_correct } else { 0 }).collect();
        let empty: Payload = Arc::from(Vec::new());
        Ok(Simulation {
            selector: TargetSelector::new(config.protocol, n).map_err(|e| ConfigErrors(vec![e]))?,
            states: (0..n).map(|p| ReplicaState::new(ReplicaId::from(p), schedule.len())).collect(),
            payloads: vec![empty; n],
            stale: vec![false; n],
            roles,
            index,
            remaining,
            pending: BTreeMap::new(),
            outbox: Vec::new(),
            targets: Vec::new(),
            target_rng: stream(config.seed, Stream::Targets),
            adversary_rng: stream(config.seed, Stream::Adversary),
            network_rng: stream(config.seed, Stream::Network),
            round: 0,
            record,
            acceptances: Vec::new(),
            loads: Vec::new(),
            messages: Vec::new(),
            config: config.clone(),
            failure,
            schedule: schedule.to_vec(),
        })
    }

    /// Index of the next round to run.
    pub fn round(&self) -> Round {
        self.round
    }

    pub fn state(&self, p: ReplicaId) -> &ReplicaState {
        &self.states[p.index()]
    }

    /// Every genuine update has been introduced and accepted by every
    /// correct replica.
    pub fn all_accepted(&self) -> bool {
        let introduced = self.schedule.iter().all(|u| u.intro_round < self.round);
        introduced && self.remaining.iter().all(|&r| r == 0)
    }

    /// Runs one round (send, deliver, receive) and advances the round index.
    pub fn step_round(&mut self) {
        let r = self.round;
        let n = self.config.n;
        let mut loads = self.record.loads.then(|| RoundLoads::zeroed(r, n));

        // send
        self.outbox.clear();
        let known = self.adversary_knowledge(r);
        for p in 0..n {
            let me = ReplicaId::from(p);
            let action = match self.roles[p] {
                Role::Correct => FaultyAction::FollowProtocol,
                Role::Faulty(b) => faulty_sends(b, &mut self.adversary_rng, r, me, n, &self.failure, &known),
            };
            let before = self.outbox.len();
            // Every replica draws protocol targets, used or not, so correct
            // replicas see the same targets whatever the adversary does.
            self.targets.clear();
            self.selector.select_into(&mut self.target_rng, r, me, self.config.fan_out, &mut self.targets);
            match action {
                FaultyAction::FollowProtocol => {
                    let payload = self.payload_of(p);
                    self.outbox.extend(self.targets.iter().map(|&target| Message {
                        sender: me,
                        target,
                        send_round: r,
                        payload: payload.clone(),
                    }));
                }
                FaultyAction::Send(msgs) => self.outbox.extend(msgs),
            }
            if let Some(l) = loads.as_mut() {
                l.sent[p] = (self.outbox.len() - before) as u32;
            }
        }

        for i in 0..self.schedule.len() {
            if self.schedule[i].intro_round == r && self.schedule[i].genuine {
                for k in 0..self.schedule[i].initial_set.len() {
                    let p = self.schedule[i].initial_set[k];
                    if self.states[p.index()].introduce(i, r) {
                        self.on_accept(p, i, r, Vec::new());
                    }
                }
            }
        }

        // deliver
        let mut inbox = self.pending.remove(&r).unwrap_or_default();
        let perturbation = self.config.perturbation;
        for msg in std::mem::take(&mut self.outbox) {
            let fate = perturb(&mut self.network_rng, &perturbation);
            if self.record.messages {
                self.messages.push(MessageRecord {
                    sender: msg.sender,
                    target: msg.target,
                    send_round: r,
                    delivered: match fate {
                        Delivery::Now => Some(r),
                        Delivery::Later(d) => Some(r + d),
                        Delivery::Drop => None,
                    },
                    payload: msg.payload.to_vec(),
                });
            }
            match fate {
                Delivery::Now => inbox.push(msg),
                Delivery::Later(d) => self.pending.entry(r + d).or_default().push(msg),
                Delivery::Drop => {}
            }
        }

        // receive
        for msg in &inbox {
            let q = msg.target.index();
            if let Some(l) = loads.as_mut() {
                if self.roles[msg.sender.index()] == Role::Correct {
                    l.from_correct[q] += 1;
                    if !msg.payload.is_empty() {
                        l.from_correct_nonempty[q] += 1;
                    }
                } else {
                    l.from_faulty[q] += 1;
                }
            }
            if !self.roles[q].runs_protocol() {
                continue;
            }
            for id in msg.payload.iter() {
                let Ok(pos) = self.index.binary_search_by_key(id, |&(u, _)| u) else {
                    continue;
                };
                let idx = self.index[pos].1;
                if self.states[q].deliver(idx, msg.sender, self.config.t, r) {
                    let senders = self.states[q].records[idx].senders_seen.clone();
                    self.on_accept(msg.target, idx, r, senders);
                }
            }
        }
        // recycle the allocation for the next round
        inbox.clear();
        self.outbox = inbox;

        if let Some(l) = loads {
            self.loads.push(l);
        }
        self.round += 1;
    }

    fn on_accept(&mut self, p: ReplicaId, idx: usize, round: Round, senders: Vec<ReplicaId>) {
        self.stale[p.index()] = true;
        if self.roles[p.index()] == Role::Correct && self.schedule[idx].genuine {
            self.remaining[idx] -= 1;
        }
        self.acceptances.push(AcceptanceEvent { replica: p, update: self.schedule[idx].id, round, senders });
    }

    fn payload_of(&mut self, p: usize) -> Payload {
        if self.stale[p] {
            let ids: Vec<UpdateId> = self.states[p]
                .records
                .iter()
                .zip(&self.schedule)
                .filter(|(rec, _)| rec.accept_round.is_some_and(|a| a < self.round))
                .map(|(_, u)| u.id)
                .collect();
            self.payloads[p] = Arc::from(ids);
            self.stale[p] = false;
        }
        self.payloads[p].clone()
    }

    /// Updates a spamming replica can put in payloads in round `r`: every
    /// spurious update already introduced, and genuine updates from the
    /// round after their introduction when the adversary knows them.
    fn adversary_knowledge(&self, r: Round) -> Vec<UpdateId> {
        self.schedule
            .iter()
            .filter(|u| if u.genuine { self.failure.knows_genuine && u.intro_round < r } else { u.intro_round <= r })
            .map(|u| u.id)
            .collect()
    }

    /// Finalizes the trace. `terminated` reflects [`Self::all_accepted`].
    pub fn into_trace(self) -> TrialTrace {
        let terminated = self.all_accepted();
        let distinct_senders = (0..self.schedule.len())
            .map(|i| self.states.iter().map(|s| s.records[i].senders_seen.len() as u32).collect())
            .collect();
        TrialTrace {
            config: self.config,
            failure: self.failure,
            schedule: self.schedule,
            acceptances: self.acceptances,
            loads: self.record.loads.then_some(self.loads),
            messages: self.record.messages.then_some(self.messages),
            distinct_senders,
            final_round: self.round.saturating_sub(1),
            terminated,
        }
    }
}

fn check_failure(config: &SystemConfig, failure: &FailureConfig) -> Result<(), EngineError> {
    if !failure.within_threshold(config.t) {
        return Err(EngineError::Failure(format!(
            "{} faulty replicas, but fewer than t={} may fail",
            failure.faulty_count(),
            config.t
        )));
    }
    if let Some(p) = failure.faulty.keys().find(|p| p.index() >= config.n) {
        return Err(EngineError::Failure(format!("faulty replica {p} outside 0..{}", config.n)));
    }
    Ok(())
}

fn check_schedule(config: &SystemConfig, schedule: &[UpdateIntro], failure: &FailureConfig) -> Result<(), EngineError> {
    let mut ids: Vec<_> = schedule.iter().map(|u| u.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(EngineError::Schedule("duplicate update id".into()));
    }
    for u in schedule {
        if !u.genuine {
            if !u.initial_set.is_empty() {
                return Err(EngineError::Schedule(format!("spurious update {} has an initial set", u.id)));
            }
            continue;
        }
        if u.alpha() < config.t {
            return Err(EngineError::Schedule(format!("update {} has α={} < t={}", u.id, u.alpha(), config.t)));
        }
        if let Some(p) = u.initial_set.iter().find(|p| p.index() >= config.n || failure.is_faulty(**p)) {
            return Err(EngineError::Schedule(format!(
                "initial set of {} contains {p}, which is not a correct replica",
                u.id
            )));
        }
    }
    Ok(())
}

/// Runs one trial to completion, recording loads but not messages.
pub fn run_trial(
    config: &SystemConfig,
    schedule: &[UpdateIntro],
    failure: &FailureConfig,
    stop: StopRule,
) -> Result<TrialTrace, EngineError> {
    run_trial_with(config, schedule, failure, stop, RecordOptions::LOADS)
}

pub fn run_trial_with(
    config: &SystemConfig,
    schedule: &[UpdateIntro],
    failure: &FailureConfig,
    stop: StopRule,
    record: RecordOptions,
) -> Result<TrialTrace, EngineError> {
    let mut sim = Simulation::new(config, schedule, failure, record)?;
    loop {
        sim.step_round();
        let last = sim.round() - 1;
        if (stop.until_all_accepted && sim.all_accepted()) || last >= stop.max_rounds {
            break;
        }
    }
    Ok(sim.into_trace())
}

/// Round by which every correct replica accepted `id`, if all did.
pub fn all_active_round(trace: &TrialTrace, id: UpdateId) -> Option<Round> {
    let rounds = trace.accept_rounds(id)?;
    rounds
        .iter()
        .enumerate()
        .filter(|(p, _)| trace.is_correct(ReplicaId::from(*p)))
        .map(|(_, r)| *r)
        .try_fold(0, |acc: Round, r| r.map(|r| acc.max(r)))
}

/// Checks the structural invariants every trace must satisfy; returns the
/// first violation found.
pub fn check_trace(trace: &TrialTrace) -> Result<(), String> {
    let t = trace.config.t;
    let mut seen = std::collections::HashSet::new();
    for ev in &trace.acceptances {
        let (_, u) = trace.update(ev.update).ok_or_else(|| format!("acceptance of unknown update {}", ev.update))?;
        if !seen.insert((ev.replica, ev.update)) {
            return Err(format!("{} accepted {} twice", ev.replica, ev.update));
        }
        if ev.round < u.intro_round {
            return Err(format!("{} accepted {} before its introduction", ev.replica, ev.update));
        }
        if !trace.is_correct(ev.replica) {
            continue;
        }
        if !u.genuine {
            return Err(format!("correct replica {} accepted spurious update {}", ev.replica, ev.update));
        }
        if u.is_initial(ev.replica) {
            if ev.round != u.intro_round || !ev.senders.is_empty() {
                return Err(format!("initial replica {} accepted {} irregularly", ev.replica, ev.update));
            }
            continue;
        }
        let mut s = ev.senders.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != ev.senders.len() || s.contains(&ev.replica) {
            return Err(format!("{} has a malformed sender set for {}", ev.replica, ev.update));
        }
        if ev.senders.len() < t {
            return Err(format!("{} accepted {} from {} < t senders", ev.replica, ev.update, ev.senders.len()));
        }
    }
    if let Some(loads) = &trace.loads {
        for l in loads {
            for p in trace.failure.correct(trace.n()) {
                if l.sent[p.index()] as usize > trace.config.fan_out {
                    return Err(format!("{p} sent {} > F^out messages in round {}", l.sent[p.index()], l.round));
                }
            }
        }
    }
    if let Some(msgs) = &trace.messages {
        // a replica forwards an update only from the round after it accepted
        let mut accepted_at = std::collections::HashMap::new();
        for ev in &trace.acceptances {
            accepted_at.insert((ev.replica, ev.update), ev.round);
        }
        for m in msgs.iter().filter(|m| trace.failure.behavior(m.sender) != Some(Behavior::Spam)) {
            if m.sender == m.target {
                return Err(format!("{} messaged itself", m.sender));
            }
            for u in &m.payload {
                match accepted_at.get(&(m.sender, *u)) {
                    Some(&a) if a < m.send_round => {}
                    _ => {
                        return Err(format!("{} forwarded {u} in round {} before accepting it", m.sender, m.send_round))
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::sample_failure_config;
    use crate::model::Protocol;

    fn ids(v: impl IntoIterator<Item = u32>) -> Vec<ReplicaId> {
        v.into_iter().map(ReplicaId).collect()
    }

    #[test]
    fn two_replicas_take_one_round() {
        let cfg = SystemConfig::new(2, 1, 1, Protocol::Random);
        let sched = [UpdateIntro::genuine(UpdateId(0), 0, ids([0]))];
        let stop = StopRule::default_for(&cfg, &sched, &FailureConfig::none());
        let tr = run_trial(&cfg, &sched, &FailureConfig::none(), stop).unwrap();
        assert!(tr.terminated);
        assert_eq!(all_active_round(&tr, UpdateId(0)), Some(1));
        assert_eq!(tr.final_round, 1);
        check_trace(&tr).unwrap();
    }

    #[test]
    fn everyone_initial_means_zero_delay() {
        let cfg = SystemConfig::new(10, 3, 2, Protocol::Random);
        let sched = [UpdateIntro::genuine(UpdateId(0), 0, ids(0..10))];
        let tr = run_trial(
            &cfg,
            &sched,
            &FailureConfig::none(),
            StopRule::default_for(&cfg, &sched, &FailureConfig::none()),
        )
        .unwrap();
        assert!(tr.terminated);
        assert_eq!(all_active_round(&tr, UpdateId(0)), Some(0));
    }

    #[test]
    fn perturb_boundaries() {
        let mut rng = stream(1, Stream::Network);
        let sync = PerturbationConfig::SYNCHRONOUS;
        assert!((0..1000).all(|_| perturb(&mut rng, &sync) == Delivery::Now));
        let drop = PerturbationConfig { perturb_prob: 1.0, drop_fraction: 1.0, max_delay: 3 };
        assert!((0..1000).all(|_| perturb(&mut rng, &drop) == Delivery::Drop));
        let late = PerturbationConfig { perturb_prob: 1.0, drop_fraction: 0.0, max_delay: 3 };
        assert!((0..1000).all(|_| matches!(perturb(&mut rng, &late), Delivery::Later(1..=3))));
    }

    #[test]
    fn perturb_frequencies() {
        // Binomial oracle: 10^5 × 0.025 = 2500 expected of each fate, sd ≈ 49.
        let mut rng = stream(2, Stream::Network);
        let p = PerturbationConfig { perturb_prob: 0.05, drop_fraction: 0.5, max_delay: 2 };
        let (mut dropped, mut delayed) = (0, 0);
        for _ in 0..100_000 {
            match perturb(&mut rng, &p) {
                Delivery::Drop => dropped += 1,
                Delivery::Later(_) => delayed += 1,
                Delivery::Now => {}
            }
        }
        for c in [dropped, delayed] {
            assert!((c as f64 - 2500.0).abs() <= 125.0, "{c}");
        }
    }

    #[test]
    fn synchronous_run_draws_no_network_randomness() {
        // perturbation only touches its own stream, so targets are identical
        let cfg = SystemConfig::new(30, 2, 2, Protocol::Random).with_seed(4);
        let sched = [UpdateIntro::genuine(UpdateId(0), 0, ids(0..3))];
        let a = run_trial_with(&cfg, &sched, &FailureConfig::none(), StopRule::fixed(5), RecordOptions::ALL).unwrap();
        let lossy =
            cfg.clone().with_perturbation(PerturbationConfig { perturb_prob: 0.5, drop_fraction: 0.5, max_delay: 2 });
        let b = run_trial_with(&lossy, &sched, &FailureConfig::none(), StopRule::fixed(5), RecordOptions::ALL).unwrap();
        let targets = |t: &TrialTrace| -> Vec<_> {
            t.messages.as_ref().unwrap().iter().filter(|m| m.send_round == 0).map(|m| (m.sender, m.target)).collect()
        };
        assert_eq!(targets(&a), targets(&b));
        assert!(a.messages.unwrap().iter().all(|m| m.delivered == Some(m.send_round)));
        check_trace(&b).unwrap();
    }

    #[test]
    fn forwarding_starts_the_round_after_acceptance() {
        let cfg = SystemConfig::new(40, 3, 2, Protocol::Random).with_seed(11);
        let sched = [UpdateIntro::genuine(UpdateId(7), 2, ids(0..5))];
        let tr =
            run_trial_with(&cfg, &sched, &FailureConfig::none(), StopRule::until_accepted_or(5000), RecordOptions::ALL)
                .unwrap();
        assert!(tr.terminated);
        check_trace(&tr).unwrap();
        let msgs = tr.messages.as_ref().unwrap();
        // nothing carries the update before η_u + 1
        assert!(msgs.iter().filter(|m| m.send_round <= 2).all(|m| m.payload.is_empty()));
        assert!(msgs.iter().any(|m| m.send_round == 3 && !m.payload.is_empty()));
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = SystemConfig::new(10, 3, 1, Protocol::Random);
        let small = [UpdateIntro::genuine(UpdateId(0), 0, ids(0..2))];
        assert!(matches!(
            run_trial(&cfg, &small, &FailureConfig::none(), StopRule::fixed(1)),
            Err(EngineError::Schedule(_))
        ));
        let faulty = FailureConfig::uniform(ids([0]), Behavior::Silent);
        let sched = [UpdateIntro::genuine(UpdateId(0), 0, ids(0..3))];
        assert!(matches!(run_trial(&cfg, &sched, &faulty, StopRule::fixed(1)), Err(EngineError::Schedule(_))));
        let too_many = FailureConfig::uniform(ids([7, 8, 9]), Behavior::Silent);
        assert!(matches!(run_trial(&cfg, &sched, &too_many, StopRule::fixed(1)), Err(EngineError::Failure(_))));
        let dup = [sched[0].clone(), sched[0].clone()];
        assert!(run_trial(&cfg, &dup, &FailureConfig::none(), StopRule::fixed(1)).is_err());
        let bad = SystemConfig::new(10, 0, 1, Protocol::Random);
        assert!(matches!(
            run_trial(&bad, &sched, &FailureConfig::none(), StopRule::fixed(1)),
            Err(EngineError::Config(_))
        ));
    }

    #[test]
    fn round_cap_is_recorded() {
        let cfg = SystemConfig::new(200, 8, 1, Protocol::Random);
        let sched = [UpdateIntro::genuine(UpdateId(0), 0, ids(0..8))];
        let tr = run_trial(&cfg, &sched, &FailureConfig::none(), StopRule::until_accepted_or(3)).unwrap();
        assert!(!tr.terminated);
        assert_eq!(tr.final_round, 3);
        assert_eq!(tr.loads.as_ref().unwrap().len(), 4);
    }

    #[test]
    fn spam_victim_never_accepts_spurious() {
        let cfg = SystemConfig::new(12, 3, 1, Protocol::Random).with_seed(3);
        let failure = FailureConfig::uniform(ids([10, 11]), Behavior::Spam).with_spam(
            12,
            SpamTargeting::Victim(ReplicaId(4)),
            true,
        );
        let sched = [UpdateIntro::genuine(UpdateId(0), 0, ids(0..3)), UpdateIntro::spurious(UpdateId(1), 0)];
        let tr = run_trial(&cfg, &sched, &failure, StopRule::default_for(&cfg, &sched, &failure)).unwrap();
        check_trace(&tr).unwrap();
        // victim saw the spurious update from exactly the two faulty replicas
        assert_eq!(tr.distinct_senders[1][4], 2);
        assert!(tr.acceptances.iter().all(|e| e.update != UpdateId(1)));
        assert!(tr.terminated);
    }

    #[test]
    fn identical_seeds_identical_traces() {
        let cfg = SystemConfig::new(64, 4, 2, Protocol::LTree { ell: 16 }).with_seed(99);
        let failure = sample_failure_config(&mut stream(99, Stream::Failures), 64, 4, Behavior::Spam);
        let correct: Vec<_> = failure.correct(64).take(4).collect();
        let sched = [UpdateIntro::genuine(UpdateId(0), 0, correct), UpdateIntro::spurious(UpdateId(1), 0)];
        let stop = StopRule::default_for(&cfg, &sched, &failure);
        let a = run_trial_with(&cfg, &sched, &failure, stop, RecordOptions::ALL).unwrap();
        let b = run_trial_with(&cfg, &sched, &failure, stop, RecordOptions::ALL).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn round_robin_spreads() {
        let cfg = SystemConfig::new(50, 4, 2, Protocol::RoundRobin);
        let sched = [UpdateIntro::genuine(UpdateId(0), 0, ids(0..6))];
        let tr = run_trial(
            &cfg,
            &sched,
            &FailureConfig::none(),
            StopRule::default_for(&cfg, &sched, &FailureConfig::none()),
        )
        .unwrap();
        assert!(tr.terminated);
        check_trace(&tr).unwrap();
    }
}
