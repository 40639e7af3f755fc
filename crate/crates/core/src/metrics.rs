//! Delay and fan-in measured from traces, with Monte Carlo aggregation.
//!
//! Fan-in counts only messages from correct senders. The expectation over
//! failure configurations is estimated from whatever configurations the
//! trials sampled, so reported maxima are lower estimates of the supremum.

use serde::Serialize;
use thiserror::Error;

use crate::model::{ReplicaId, Round, UpdateId};
use crate::scalar::Real;
use crate::trace::TrialTrace;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("update {0} not found in trace")]
    UpdateNotFound(UpdateId),
    #[error("update {0} is spurious and has no delay")]
    Spurious(UpdateId),
    #[error("trace was recorded without per-round loads")]
    LoadsNotRecorded,
}

/// Mean and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate<T> {
    pub mean: T,
    pub std_err: T,
    pub count: usize,
}

impl<T: Real> Estimate<T> {
    pub fn of(values: impl IntoIterator<Item = T>) -> Self {
        let v: Vec<T> = values.into_iter().collect();
        let count = v.len();
        if count == 0 {
            return Estimate { mean: T::nan(), std_err: T::nan(), count };
        }
        let k = T::from_count(count as u64);
        let mean = v.iter().fold(T::zero(), |a, &b| a + b) / k;
        if count == 1 {
            return Estimate { mean, std_err: T::zero(), count };
        }
        let ss = v.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean));
        let var = ss / (k - T::one());
        Estimate { mean, std_err: (var / k).sqrt(), count }
    }
}

/// Delay samples `max_p τ_p^u − η_u` across trials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DelayStats<T> {
    /// One sample per terminating trial, in trial order.
    pub samples: Vec<u64>,
    /// Trials where some correct replica never accepted; excluded from the mean.
    pub non_terminating: usize,
    /// Largest round cap among the non-terminating trials.
    pub round_cap: Option<Round>,
    pub mean: T,
    pub std_err: T,
}

impl<T: Real> DelayStats<T> {
    pub fn trials(&self) -> usize {
        self.samples.len() + self.non_terminating
    }

    /// Nearest-rank percentile, `q` in `[0, 1]`.
    pub fn percentile(&self, q: f64) -> Option<u64> {
        if self.samples.is_empty() {
            return None;
        }
        let mut s = self.samples.clone();
        s.sort_unstable();
        let rank = ((q.clamp(0.0, 1.0) * s.len() as f64).ceil() as usize).max(1);
        Some(s[rank - 1])
    }

    pub fn max(&self) -> Option<u64> {
        self.samples.iter().copied().max()
    }
}

/// Delay of `id` in one trace; `None` if some correct replica never accepted.
pub fn delay_sample(trace: &TrialTrace, id: UpdateId) -> Result<Option<u64>, MetricsError> {
    let (_, u) = trace.update(id).ok_or(MetricsError::UpdateNotFound(id))?;
    if !u.genuine {
        return Err(MetricsError::Spurious(id));
    }
    let rounds = trace.accept_rounds(id).expect("update exists");
    let mut worst = u.intro_round;
    for (p, r) in rounds.iter().enumerate() {
        if !trace.is_correct(ReplicaId::from(p)) {
            continue;
        }
        match r {
            Some(r) => worst = worst.max(*r),
            None => return Ok(None),
        }
    }
    Ok(Some(worst - u.intro_round))
}

pub fn compute_delay<T: Real>(traces: &[TrialTrace], id: UpdateId) -> Result<DelayStats<T>, MetricsError> {
    let outcomes = traces
        .iter()
        .map(|tr| Ok((delay_sample(tr, id)?, tr.final_round)))
        .collect::<Result<Vec<_>, MetricsError>>()?;
    Ok(DelayStats::from_outcomes(outcomes))
}

impl<T: Real> DelayStats<T> {
    /// Aggregates per-trial `(delay, final round)` pairs; `None` marks a
    /// trial that hit its round cap.
    pub fn from_outcomes(outcomes: impl IntoIterator<Item = (Option<u64>, Round)>) -> Self {
        let mut samples = Vec::new();
        let mut non_terminating = 0;
        let mut round_cap = None;
        for (delay, last) in outcomes {
            match delay {
                Some(d) => samples.push(d),
                None => {
                    non_terminating += 1;
                    round_cap = round_cap.max(Some(last));
                }
            }
        }
        let est = Estimate::of(samples.iter().map(|&d| T::from_count(d)));
        DelayStats { samples, non_terminating, round_cap, mean: est.mean, std_err: est.std_err }
    }
}

/// Window `start..start + len` of an amortized fan-in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AmortizedWindow {
    pub start: Round,
    pub len: u64,
}

impl AmortizedWindow {
    /// `⌈log₂ n⌉` rounds starting the round after introduction.
    pub fn default_for(n: usize, intro_round: Round) -> Self {
        let len = (n.max(2) as f64).log2().ceil() as u64;
        AmortizedWindow { start: intro_round + 1, len: len.max(1) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FanInOptions {
    /// Count messages with an empty payload (the default).
    pub count_empty: bool,
    pub window: Option<AmortizedWindow>,
}

impl Default for FanInOptions {
    fn default() -> Self {
        FanInOptions { count_empty: true, window: None }
    }
}

/// Fan-in observed in one trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FanInStats<T> {
    /// `max_p ρ_p^i` for each recorded round `i`, over correct `p`.
    pub per_round_max: Vec<u32>,
    pub peak: u32,
    pub mean_round_max: T,
    /// `max_p` of the window average of `ρ_p^i`; window clipped to the trace.
    pub amortized: Option<T>,
}

pub fn compute_fanin<T: Real>(trace: &TrialTrace, opts: FanInOptions) -> Result<FanInStats<T>, MetricsError> {
    let loads = trace.loads.as_ref().ok_or(MetricsError::LoadsNotRecorded)?;
    let correct: Vec<usize> = trace.failure.correct(trace.n()).map(ReplicaId::index).collect();
    let per_round_max: Vec<u32> =
        loads.iter().map(|l| correct.iter().map(|&p| l.correct_load(p, opts.count_empty)).max().unwrap_or(0)).collect();
    let peak = per_round_max.iter().copied().max().unwrap_or(0);
    let mean_round_max = Estimate::of(per_round_max.iter().map(|&m| T::from_count(m as u64))).mean;
    let amortized = opts.window.and_then(|w| {
        let rounds: Vec<_> =
            loads.iter().filter(|l| l.round >= w.start && l.round < w.start.saturating_add(w.len)).collect();
        if rounds.is_empty() {
            return None;
        }
        let best = correct
            .iter()
            .map(|&p| rounds.iter().map(|l| l.correct_load(p, opts.count_empty) as u64).sum::<u64>())
            .max()
            .unwrap_or(0);
        Some(T::from_count(best) / T::from_count(rounds.len() as u64))
    });
    Ok(FanInStats { per_round_max, peak, mean_round_max, amortized })
}

/// Fan-in across trials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FanInSummary<T> {
    pub trials: usize,
    /// Mean over trials of each trial's peak per-round maximum.
    pub peak: Estimate<T>,
    /// Mean over trials of each trial's average per-round maximum.
    pub round_max: Estimate<T>,
    pub overall_max: u32,
    pub amortized: Option<Estimate<T>>,
}

pub fn aggregate_fanin<T: Real>(stats: &[FanInStats<T>]) -> FanInSummary<T> {
    let amortized: Vec<T> = stats.iter().filter_map(|s| s.amortized).collect();
    FanInSummary {
        trials: stats.len(),
        peak: Estimate::of(stats.iter().map(|s| T::from_count(s.peak as u64))),
        round_max: Estimate::of(stats.iter().map(|s| s.mean_round_max)),
        overall_max: stats.iter().map(|s| s.peak).max().unwrap_or(0),
        amortized: (!amortized.is_empty()).then(|| Estimate::of(amortized)),
    }
}

/// Mean correct-sender deliveries per round per replica over `replicas`.
pub fn mean_load<T: Real>(trace: &TrialTrace, replicas: &[ReplicaId], count_empty: bool) -> Result<T, MetricsError> {
    let loads = trace.loads.as_ref().ok_or(MetricsError::LoadsNotRecorded)?;
    let total: u64 =
        loads.iter().map(|l| replicas.iter().map(|p| l.correct_load(p.index(), count_empty) as u64).sum::<u64>()).sum();
    Ok(T::from_count(total) / T::from_count((loads.len() * replicas.len()).max(1) as u64))
}

/// Correct replicas active for `id` at each round from `η_u` to the end.
pub fn active_count_series(trace: &TrialTrace, id: UpdateId) -> Result<Vec<u32>, MetricsError> {
    let (_, u) = trace.update(id).ok_or(MetricsError::UpdateNotFound(id))?;
    let eta = u.intro_round;
    if trace.final_round < eta {
        return Ok(Vec::new());
    }
    let mut newly = vec![0u32; (trace.final_round - eta + 1) as usize];
    for ev in trace.acceptances.iter().filter(|e| e.update == id && trace.is_correct(e.replica)) {
        newly[(ev.round - eta) as usize] += 1;
    }
    let mut acc = 0;
    Ok(newly
        .into_iter()
        .map(|k| {
            acc += k;
            acc
        })
        .collect())
}
