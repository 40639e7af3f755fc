//! Trial traces and their line-oriented serialization.
//!
//! A serialized trace is JSON Lines: one `header` record, then one record
//! per round of load counters, per message (when recorded) and per
//! acceptance, then one `end` record. Records are tagged by `event`.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::FailureConfig;
use crate::model::{ReplicaId, Round, SystemConfig, UpdateId, UpdateIntro};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceEvent {
    pub replica: ReplicaId,
    pub update: UpdateId,
    pub round: Round,
    /// Distinct senders that led to acceptance; empty for I_u members.
    pub senders: Vec<ReplicaId>,
}

/// Per-replica message counters of one round, indexed by replica id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundLoads {
    pub round: Round,
    pub sent: Vec<u32>,
    /// Deliveries whose sender is correct.
    pub from_correct: Vec<u32>,
    /// Deliveries from correct senders carrying at least one update.
    pub from_correct_nonempty: Vec<u32>,
    pub from_faulty: Vec<u32>,
}

impl RoundLoads {
    pub fn zeroed(round: Round, n: usize) -> Self {
        RoundLoads {
            round,
            sent: vec![0; n],
            from_correct: vec![0; n],
            from_correct_nonempty: vec![0; n],
            from_faulty: vec![0; n],
        }
    }

    /// Correct-sender deliveries to `p`, optionally counting empty messages.
    #[inline]
    pub fn correct_load(&self, p: usize, count_empty: bool) -> u32 {
        if count_empty {
            self.from_correct[p]
        } else {
            self.from_correct_nonempty[p]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub sender: ReplicaId,
    pub target: ReplicaId,
    pub send_round: Round,
    /// Round of delivery; `None` if the network dropped the message.
    pub delivered: Option<Round>,
    pub payload: Vec<UpdateId>,
}

/// Everything observed in one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub config: SystemConfig,
    pub failure: FailureConfig,
    pub schedule: Vec<UpdateIntro>,
    pub acceptances: Vec<AcceptanceEvent>,
    pub loads: Option<Vec<RoundLoads>>,
    pub messages: Option<Vec<MessageRecord>>,
    /// `[update][replica]` distinct senders observed by the end (frozen at acceptance).
    pub distinct_senders: Vec<Vec<u32>>,
    pub final_round: Round,
    /// `false` when the round cap fired before every correct replica accepted.
    pub terminated: bool,
}

impl TrialTrace {
    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn is_correct(&self, p: ReplicaId) -> bool {
        !self.failure.is_faulty(p)
    }

    pub fn n_correct(&self) -> usize {
        self.config.n - self.failure.faulty_count()
    }

    pub fn update(&self, id: UpdateId) -> Option<(usize, &UpdateIntro)> {
        self.schedule.iter().enumerate().find(|(_, u)| u.id == id)
    }

    /// Acceptance round of `id` at every replica, indexed by replica id.
    pub fn accept_rounds(&self, id: UpdateId) -> Option<Vec<Option<Round>>> {
        self.update(id)?;
        let mut out = vec![None; self.n()];
        for ev in self.acceptances.iter().filter(|e| e.update == id) {
            out[ev.replica.index()] = Some(ev.round);
        }
        Some(out)
    }

    /// The same trace with every replica id `p` renamed to `perm[p]`.
    pub fn relabeled(&self, perm: &[ReplicaId]) -> TrialTrace {
        assert_eq!(perm.len(), self.n(), "permutation must cover every replica");
        let map = |p: ReplicaId| perm[p.index()];
        let permute = |v: &Vec<u32>| {
            let mut out = vec![0; v.len()];
            for (i, &x) in v.iter().enumerate() {
                out[perm[i].index()] = x;
            }
            out
        };
        let mut t = self.clone();
        t.failure.faulty = self.failure.faulty.iter().map(|(&p, &b)| (map(p), b)).collect();
        if let crate::adversary::SpamTargeting::Victim(v) = self.failure.targeting {
            t.failure.targeting = crate::adversary::SpamTargeting::Victim(map(v));
        }
        for u in &mut t.schedule {
            u.initial_set = u.initial_set.iter().copied().map(map).collect();
            u.initial_set.sort_unstable();
        }
        for ev in &mut t.acceptances {
            ev.replica = map(ev.replica);
            ev.senders.iter_mut().for_each(|s| *s = map(*s));
        }
        if let Some(loads) = &mut t.loads {
            for l in loads {
                l.sent = permute(&l.sent);
                l.from_correct = permute(&l.from_correct);
                l.from_correct_nonempty = permute(&l.from_correct_nonempty);
                l.from_faulty = permute(&l.from_faulty);
            }
        }
        if let Some(msgs) = &mut t.messages {
            for m in msgs {
                m.sender = map(m.sender);
                m.target = map(m.target);
            }
        }
        t.distinct_senders = self.distinct_senders.iter().map(permute).collect();
        t
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum TraceRecord {
    Header { config: SystemConfig, failure: FailureConfig, schedule: Vec<UpdateIntro>, loads: bool, messages: bool },
    Round(RoundLoads),
    Message(MessageRecord),
    Accept(AcceptanceEvent),
    End { final_round: Round, terminated: bool, distinct_senders: Vec<Vec<u32>> },
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("trace i/o: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("malformed trace: {0}")]
    Malformed(&'static str),
}

pub fn write_trace<W: Write>(trace: &TrialTrace, mut w: W) -> Result<(), TraceIoError> {
    let mut emit = |rec: &TraceRecord| -> Result<(), TraceIoError> {
        serde_json::to_writer(&mut w, rec).map_err(|source| TraceIoError::Json { line: 0, source })?;
        w.write_all(b"\n")?;
        Ok(())
    };
    emit(&TraceRecord::Header {
        config: trace.config.clone(),
        failure: trace.failure.clone(),
        schedule: trace.schedule.clone(),
        loads: trace.loads.is_some(),
        messages: trace.messages.is_some(),
    })?;
    for l in trace.loads.iter().flatten() {
        emit(&TraceRecord::Round(l.clone()))?;
    }
    for m in trace.messages.iter().flatten() {
        emit(&TraceRecord::Message(m.clone()))?;
    }
    for a in &trace.acceptances {
        emit(&TraceRecord::Accept(a.clone()))?;
    }
    emit(&TraceRecord::End {
        final_round: trace.final_round,
        terminated: trace.terminated,
        distinct_senders: trace.distinct_senders.clone(),
    })
}

pub fn read_trace<R: BufRead>(r: R) -> Result<TrialTrace, TraceIoError> {
    let mut trace: Option<TrialTrace> = None;
    let mut ended = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord =
            serde_json::from_str(&line).map_err(|source| TraceIoError::Json { line: i + 1, source })?;
        if ended {
            return Err(TraceIoError::Malformed("record after end"));
        }
        match (rec, trace.as_mut()) {
            (TraceRecord::Header { config, failure, schedule, loads, messages }, None) => {
                trace = Some(TrialTrace {
                    config,
                    failure,
                    schedule,
                    acceptances: Vec::new(),
                    loads: loads.then(Vec::new),
                    messages: messages.then(Vec::new),
                    distinct_senders: Vec::new(),
                    final_round: 0,
                    terminated: false,
                });
            }
            (TraceRecord::Header { .. }, Some(_)) => return Err(TraceIoError::Malformed("duplicate header")),
            (_, None) => return Err(TraceIoError::Malformed("missing header")),
            (TraceRecord::Round(l), Some(t)) => {
                t.loads.as_mut().ok_or(TraceIoError::Malformed("unannounced round record"))?.push(l)
            }
            (TraceRecord::Message(m), Some(t)) => {
                t.messages.as_mut().ok_or(TraceIoError::Malformed("unannounced message record"))?.push(m)
            }
            (TraceRecord::Accept(a), Some(t)) => t.acceptances.push(a),
            (TraceRecord::End { final_round, terminated, distinct_senders }, Some(t)) => {
                t.final_round = final_round;
                t.terminated = terminated;
                t.distinct_senders = distinct_senders;
                ended = true;
            }
        }
    }
    match (trace, ended) {
        (Some(t), true) => Ok(t),
        (None, _) => Err(TraceIoError::Malformed("missing header")),
        (Some(_), false) => Err(TraceIoError::Malformed("missing end record")),
    }
}
