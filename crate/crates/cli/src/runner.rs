//! Runs an experiment: every sweep point, every protocol, every trial.
//!
//! Trials run on a worker pool and are merged in trial order, so output
//! bytes do not depend on the number of workers. Trial `i` of every point
//! uses the seed `trial_seed(seed, i)`, so rows for a point do not depend
//! on which other points the sweep contains.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use diffusion_core::adversary::{sample_failures, SpamTargeting};
use diffusion_core::analysis::{fanin_forms, random_delay_form, tree_delay_form};
use diffusion_core::metrics::{
    active_count_series, aggregate_fanin, compute_fanin, delay_sample, mean_load, AmortizedWindow, Estimate,
    FanInOptions,
};
use diffusion_core::rng::{stream, trial_seed, Stream};
use diffusion_core::{
    counting_lower_bound, run_trial_with, validate_config, Behavior, DelayStats, FanInStats, FanInSummary,
    PerturbationConfig, Protocol, RecordOptions, ReplicaId, Round, StopRule, SystemConfig, UpdateId, UpdateIntro,
};
use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use crate::spec::{ExperimentSpec, Metric, Point, ProtocolSpec};
use crate::{Error, Row, CSV_HEADER};

const GENUINE: UpdateId = UpdateId(0);

/// What one trial contributes once its trace is dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub seed: u64,
    /// Also the all-active round, since the update is introduced at round 0.
    pub delay: Option<u64>,
    pub final_round: Round,
    pub fanin: Option<FanInStats>,
    /// Mean load of a root-block replica, for tree protocols.
    pub root_load: Option<f64>,
    pub active: Option<Vec<u32>>,
    /// Acceptances of spurious updates by correct replicas.
    pub spurious_accepts: u64,
}

/// Aggregated results of one protocol at one sweep point.
#[derive(Clone, Debug, Serialize)]
pub struct PointResult {
    pub point: Point,
    pub protocol: Protocol,
    pub label: String,
    pub alpha: usize,
    pub n_correct: usize,
    pub counting_bound: u64,
    pub delay: Option<DelayStats>,
    pub fanin: Option<FanInSummary>,
    pub root_load: Option<Estimate<f64>>,
    pub spurious_accepts: u64,
    #[serde(skip)]
    pub outcomes: Vec<TrialOutcome>,
}

pub struct ExperimentOutput {
    pub rows: Vec<Row>,
    pub points: Vec<PointResult>,
    pub advisories: Vec<String>,
}

/// Protocol label used in the CSV: the spec name, plus `~p<prob>` when the
/// network is perturbed.
pub fn label(spec: &ProtocolSpec, perturb_prob: f64) -> String {
    if perturb_prob > 0.0 {
        format!("{spec}~p{perturb_prob}")
    } else {
        spec.to_string()
    }
}

struct Job<'a> {
    spec: &'a ExperimentSpec,
    config: SystemConfig,
    alpha: usize,
    faulty: usize,
    record: RecordOptions,
}

impl Job<'_> {
    fn run(&self, i: u64) -> Result<TrialOutcome, Error> {
        let seed = trial_seed(self.spec.seed, i);
        let n = self.config.n;
        let adv = &self.spec.adversary;
        let mut failure = sample_failures(&mut stream(seed, Stream::Failures), n, self.faulty, adv.behavior);
        failure.spam_budget = adv.spam_budget.unwrap_or(n);
        failure.knows_genuine = adv.knows_genuine;
        if adv.targeting == "scatter" {
            failure.targeting = SpamTargeting::Scatter;
        }
        let correct: Vec<ReplicaId> = failure.correct(n).collect();
        let picks = index::sample(&mut stream(seed, Stream::Schedule), correct.len(), self.alpha);
        let mut schedule = vec![UpdateIntro::genuine(GENUINE, 0, picks.into_iter().map(|k| correct[k]))];
        if adv.behavior == Behavior::Spam {
            schedule.extend((1..=adv.spurious).map(|k| UpdateIntro::spurious(UpdateId(k), 0)));
        }
        let config = self.config.clone().with_seed(seed);
        let stop = match self.spec.max_rounds {
            Some(max) => StopRule::until_accepted_or(max),
            None => StopRule::default_for(&config, &schedule, &failure),
        };
        let trace = run_trial_with(&config, &schedule, &failure, stop, self.record)
            .map_err(|e| Error::Runtime(e.to_string()))?;
        let delay = delay_sample(&trace, GENUINE).map_err(|e| Error::Runtime(e.to_string()))?;
        let wants = |m| self.spec.metrics.contains(&m);
        let fanin = if wants(Metric::Fanin) {
            let opts =
                FanInOptions { count_empty: self.spec.count_empty, window: Some(AmortizedWindow::default_for(n, 0)) };
            Some(compute_fanin(&trace, opts).map_err(|e| Error::Runtime(e.to_string()))?)
        } else {
            None
        };
        let root_load = match (&fanin, config.protocol) {
            (Some(_), Protocol::LTree { ell }) => {
                let root: Vec<ReplicaId> = (0..ell).map(ReplicaId::from).filter(|&p| trace.is_correct(p)).collect();
                (!root.is_empty())
                    .then(|| mean_load(&trace, &root, self.spec.count_empty))
                    .transpose()
                    .map_err(|e| Error::Runtime(e.to_string()))?
            }
            _ => None,
        };
        let active = if wants(Metric::ActiveSeries) {
            Some(active_count_series(&trace, GENUINE).map_err(|e| Error::Runtime(e.to_string()))?)
        } else {
            None
        };
        let spurious_accepts =
            trace.acceptances.iter().filter(|e| e.update != GENUINE && trace.is_correct(e.replica)).count() as u64;
        Ok(TrialOutcome { seed, delay, final_round: trace.final_round, fanin, root_load, active, spurious_accepts })
    }
}

/// Runs `spec` on `workers` threads. `sink` receives each point's rows as
/// soon as the point completes.
pub fn run_experiment(
    spec: &ExperimentSpec,
    workers: usize,
    mut sink: impl FnMut(&[Row]) -> Result<(), Error>,
) -> Result<ExperimentOutput, Error> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Runtime(e.to_string()))?;
    let mut out = ExperimentOutput { rows: Vec::new(), points: Vec::new(), advisories: Vec::new() };
    for point in spec.points() {
        let alpha = spec.alpha.alpha(point.n, point.t);
        let faulty = spec.adversary.faulty.unwrap_or(point.t.saturating_sub(1));
        let n_correct = point
            .n
            .checked_sub(faulty)
            .ok_or_else(|| Error::Config(format!("{} faulty replicas exceed n={}", faulty, point.n)))?;
        if alpha > n_correct {
            return Err(Error::Config(format!(
                "α={alpha} exceeds the {n_correct} correct replicas at n={}, t={}",
                point.n, point.t
            )));
        }
        for pspec in &spec.protocols {
            let protocol = pspec.resolve(point.t, point.ell)?;
            let config =
                SystemConfig::new(point.n, point.t, point.fan_out, protocol).with_perturbation(PerturbationConfig {
                    perturb_prob: point.perturb_prob,
                    drop_fraction: spec.drop_fraction,
                    max_delay: spec.max_delay,
                });
            let lbl = label(pspec, point.perturb_prob);
            let validated = validate_config(&config)?;
            let context = |msg: &str| format!("{lbl} n={} t={} α={alpha}: {msg}", point.n, point.t);
            for a in &validated.advisories {
                push_unique(&mut out.advisories, context(a));
            }
            let record =
                if spec.metrics.contains(&Metric::Fanin) { RecordOptions::LOADS } else { RecordOptions::default() };
            let job = Job { spec, config, alpha, faulty, record };
            log::info!("{} {lbl} n={} t={} α={alpha}: {} trials", spec.name, point.n, point.t, spec.trials);
            let outcomes: Vec<TrialOutcome> =
                pool.install(|| (0..spec.trials).into_par_iter().map(|i| job.run(i)).collect::<Result<_, _>>())?;
            let counting_bound =
                counting_lower_bound(n_correct as u64, alpha as u64, point.t as u64, point.fan_out as u64)
                    .map_err(|e| Error::Config(e.to_string()))?;
            let result = PointResult {
                point,
                protocol,
                label: lbl,
                alpha,
                n_correct,
                counting_bound,
                delay: spec
                    .metrics
                    .contains(&Metric::Delay)
                    .then(|| DelayStats::from_outcomes(outcomes.iter().map(|o| (o.delay, o.final_round)))),
                fanin: spec.metrics.contains(&Metric::Fanin).then(|| {
                    let stats: Vec<FanInStats> = outcomes.iter().filter_map(|o| o.fanin.clone()).collect();
                    aggregate_fanin(&stats)
                }),
                root_load: {
                    let loads: Vec<f64> = outcomes.iter().filter_map(|o| o.root_load).collect();
                    (!loads.is_empty()).then(|| Estimate::of(loads))
                },
                spurious_accepts: outcomes.iter().map(|o| o.spurious_accepts).sum(),
                outcomes,
            };
            let rows = point_rows(spec, &result, &mut out.advisories);
            sink(&rows)?;
            out.rows.extend(rows);
            out.points.push(result);
        }
    }
    Ok(out)
}

fn push_unique(v: &mut Vec<String>, s: String) {
    if !v.contains(&s) {
        v.push(s);
    }
}

fn point_rows(spec: &ExperimentSpec, r: &PointResult, advisories: &mut Vec<String>) -> Vec<Row> {
    let p = r.point;
    let ell = r.protocol.block_size();
    let trials = spec.trials;
    let row = |metric: String, value: f64, stderr: Option<f64>, trials: u64| Row {
        experiment: spec.name.clone(),
        n: p.n,
        t: p.t,
        alpha: r.alpha,
        ell,
        fan_out: p.fan_out,
        protocol: r.label.clone(),
        metric,
        value,
        stderr,
        trials,
    };
    let mut rows = Vec::new();
    if let Some(d) = &r.delay {
        let done = d.samples.len() as u64;
        if done > 0 {
            rows.push(row("delay_mean".into(), d.mean, Some(d.std_err), done));
            rows.push(row("delay_median".into(), d.percentile(0.5).unwrap() as f64, None, done));
            rows.push(row("delay_max".into(), d.max().unwrap() as f64, None, done));
        }
        rows.push(row("non_terminating".into(), d.non_terminating as f64, None, trials));
    }
    if let Some(f) = &r.fanin {
        let k = f.trials as u64;
        rows.push(row("fanin_peak".into(), f.peak.mean, Some(f.peak.std_err), k));
        rows.push(row("fanin_round_max".into(), f.round_max.mean, Some(f.round_max.std_err), k));
        rows.push(row("fanin_max".into(), f.overall_max as f64, None, k));
        if let Some(a) = &f.amortized {
            rows.push(row("fanin_amortized".into(), a.mean, Some(a.std_err), a.count as u64));
        }
        if let Some(l) = &r.root_load {
            rows.push(row("root_load".into(), l.mean, Some(l.std_err), l.count as u64));
        }
    }
    if r.outcomes.iter().any(|o| o.active.is_some()) {
        let series: Vec<&Vec<u32>> = r.outcomes.iter().filter_map(|o| o.active.as_ref()).collect();
        let len = series.iter().map(|s| s.len()).max().unwrap_or(0);
        for round in 0..len {
            // finished trials stay at their final count
            let est = Estimate::of(series.iter().map(|s| *s.get(round).or(s.last()).unwrap_or(&0) as f64));
            rows.push(row(format!("active@{round}"), est.mean, Some(est.std_err), series.len() as u64));
        }
    }
    if spec.adversary.behavior == Behavior::Spam {
        rows.push(row("spurious_accepts".into(), r.spurious_accepts as f64, None, trials));
    }
    if spec.metrics.contains(&Metric::Bounds) {
        rows.push(row("counting_lower_bound".into(), r.counting_bound as f64, None, 0));
        let (n, t, a, f) = (p.n as u64, p.t as u64, r.alpha as u64, p.fan_out as u64);
        let form = match r.protocol {
            Protocol::Random => Some(random_delay_form::<f64>(n, a, t, f)),
            Protocol::LTree { ell } => Some(tree_delay_form::<f64>(n, a, t, f, ell as u64)),
            Protocol::RoundRobin => None,
        };
        let mut forms = Vec::new();
        match form {
            Some(Ok(b)) => forms.push(b),
            Some(Err(e)) => push_unique(advisories, format!("{} n={n}: {e}", r.label)),
            None => {}
        }
        if spec.metrics.contains(&Metric::Fanin) {
            let ell = r.protocol.block_size().unwrap_or(p.n) as u64;
            match fanin_forms::<f64>(n, t, f, ell) {
                Ok(v) => forms.extend(v.into_iter().filter(|b| match r.protocol {
                    Protocol::LTree { .. } => b.name == "tree_fanin",
                    _ => b.name.starts_with("random_"),
                })),
                Err(e) => push_unique(advisories, format!("{} n={n}: {e}", r.label)),
            }
        }
        for b in forms {
            for a in &b.advisories {
                push_unique(advisories, format!("{} {}: {a}", r.label, b.name));
            }
            rows.push(row(format!("form_{}", b.name), b.value, None, 0));
        }
    }
    rows
}

/// Runs `spec` and writes `<dir>/<name>.csv` and `<dir>/<name>.json`.
/// CSV rows are flushed after every point, so an interrupted run leaves
/// the completed points on disk.
pub fn write_experiment(
    spec: &ExperimentSpec,
    workers: usize,
    dir: &Path,
) -> Result<(PathBuf, ExperimentOutput), Error> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{}.csv", spec.name));
    let mut file = BufWriter::new(File::create(&csv_path)?);
    writeln!(file, "{CSV_HEADER}")?;
    file.flush()?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let out = run_experiment(spec, workers, |rows| {
        for r in rows {
            writer.serialize(r)?;
        }
        writer.flush()?;
        Ok(())
    })?;
    drop(writer);
    let summary = Summary { experiment: &spec.name, config: spec, advisories: &out.advisories, points: &out.points };
    let json = File::create(dir.join(format!("{}.json", spec.name)))?;
    serde_json::to_writer_pretty(BufWriter::new(json), &summary)?;
    Ok((csv_path, out))
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: &'a str,
    config: &'a ExperimentSpec,
    advisories: &'a [String],
    points: &'a [PointResult],
}
