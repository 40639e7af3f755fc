use diffusion_core::adversary::{sample_failures, SpamTargeting};
use diffusion_core::engine::{all_active_round, check_trace};
use diffusion_core::metrics::{compute_fanin, delay_sample, AmortizedWindow, FanInOptions};
use diffusion_core::rng::{stream, Stream};
use diffusion_core::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn protocol_strategy() -> impl Strategy<Value = Protocol> {
    prop_oneof![
        Just(Protocol::Random),
        Just(Protocol::RoundRobin),
        (1usize..16).prop_map(|ell| Protocol::LTree { ell }),
    ]
}

/// A valid single-update trial: config, schedule and a sampled failure set.
#[derive(Clone, Debug)]
struct Case {
    config: SystemConfig,
    schedule: Vec<UpdateIntro>,
    failure: FailureConfig,
}

fn case_strategy(behavior: Behavior) -> impl Strategy<Value = Case> {
    (4usize..40, 1usize..6, 1usize..4, protocol_strategy(), any::<u64>(), 0usize..8).prop_filter_map(
        "parameters out of range",
        move |(n, t, fan_out, protocol, seed, extra)| {
            let protocol = match protocol {
                // a leaf hears only its parent block, silent members included
                Protocol::LTree { ell } => Protocol::LTree { ell: ell.max(2 * t - 1).min(n) },
                p => p,
            };
            let faulty = t - 1;
            let n_correct = n.checked_sub(faulty)?;
            let alpha = (t + extra).min(n_correct);
            if alpha < t {
                return None;
            }
            let config = SystemConfig::new(n, t, fan_out, protocol).with_seed(seed);
            let mut rng = stream(seed, Stream::Failures);
            let failure = sample_failures(&mut rng, n, faulty, behavior);
            let mut correct: Vec<ReplicaId> = failure.correct(n).collect();
            correct.shuffle(&mut rng);
            let schedule = vec![UpdateIntro::genuine(UpdateId(0), 0, correct[..alpha].iter().copied())];
            Some(Case { config, schedule, failure })
        },
    )
}

fn run(case: &Case, stop: StopRule) -> TrialTrace {
    run_trial(&case.config, &case.schedule, &case.failure, stop).unwrap()
}

fn run_default(case: &Case) -> TrialTrace {
    run(case, StopRule::default_for(&case.config, &case.schedule, &case.failure))
}

fn to_bytes(trace: &TrialTrace) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).unwrap();
    buf
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_survives_toml(
        n in 1usize..10_000,
        t in 0usize..100,
        fan_out in 0usize..10,
        protocol in protocol_strategy(),
        p in 0u32..=1000,
        d in 0u32..=1000,
        max_delay in 0u64..10,
        seed in any::<u64>(),
    ) {
        let cfg = SystemConfig::new(n, t, fan_out, protocol).with_seed(seed).with_perturbation(PerturbationConfig {
            perturb_prob: p as f64 / 1000.0,
            drop_fraction: d as f64 / 1000.0,
            max_delay,
        });
        let text = toml::to_string(&cfg).unwrap();
        let back: SystemConfig = toml::from_str(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn identical_inputs_give_identical_traces(case in case_strategy(Behavior::Silent)) {
        let a = run_default(&case);
        let b = run_default(&case);
        prop_assert_eq!(to_bytes(&a), to_bytes(&b));
    }

    #[test]
    fn traces_are_well_formed(case in case_strategy(Behavior::Conforming)) {
        let tr = run_default(&case);
        prop_assert!(tr.terminated);
        prop_assert_eq!(check_trace(&tr), Ok(()));
    }

    #[test]
    fn spam_never_gets_accepted(
        case in case_strategy(Behavior::Spam),
        knows_genuine in any::<bool>(),
        scatter in any::<bool>(),
        spurious in 1u32..4,
    ) {
        let mut case = case;
        case.failure.knows_genuine = knows_genuine;
        if scatter {
            case.failure.targeting = SpamTargeting::Scatter;
        }
        for k in 0..spurious {
            case.schedule.push(UpdateIntro::spurious(UpdateId(100 + k), k as Round));
        }
        let tr = run(&case, StopRule::until_accepted_or(200));
        for ev in &tr.acceptances {
            let genuine = tr.update(ev.update).unwrap().1.genuine;
            prop_assert!(genuine || !tr.is_correct(ev.replica), "{:?}", ev);
        }
        prop_assert_eq!(check_trace(&tr), Ok(()));
    }

    #[test]
    fn counting_bound_holds(case in case_strategy(Behavior::Silent)) {
        let tr = run_default(&case);
        let all = all_active_round(&tr, UpdateId(0)).unwrap();
        let bound = counting_lower_bound(
            tr.n_correct() as u64,
            case.schedule[0].alpha() as u64,
            case.config.t as u64,
            case.config.fan_out as u64,
        ).unwrap();
        prop_assert!(all >= bound, "all-active {} < bound {}", all, bound);
    }

    #[test]
    fn accepted_sets_only_grow(case in case_strategy(Behavior::Silent)) {
        let mut sim = Simulation::new(&case.config, &case.schedule, &case.failure, RecordOptions::default()).unwrap();
        let n = case.config.n;
        let mut before = vec![false; n];
        for _ in 0..60 {
            sim.step_round();
            for (p, was) in before.iter_mut().enumerate() {
                let now = sim.state(ReplicaId::from(p)).records[0].accepted();
                prop_assert!(now || !*was);
                *was = now;
            }
        }
    }

    #[test]
    fn spam_leaves_correct_fan_in_alone(case in case_strategy(Behavior::Silent), knows_genuine in any::<bool>()) {
        let silent = run(&case, StopRule::fixed(40));
        let mut spam_case = case.clone();
        for b in spam_case.failure.faulty.values_mut() {
            *b = Behavior::Spam;
        }
        spam_case.failure.spam_budget = case.config.n;
        spam_case.failure.knows_genuine = knows_genuine;
        let spam = run(&spam_case, StopRule::fixed(40));
        let opts = FanInOptions { count_empty: true, window: Some(AmortizedWindow { start: 1, len: 5 }) };
        let a: FanInStats = compute_fanin(&silent, opts).unwrap();
        let b: FanInStats = compute_fanin(&spam, opts).unwrap();
        prop_assert_eq!(a, b);
        if !knows_genuine {
            let opts = FanInOptions { count_empty: false, window: None };
            let a: FanInStats = compute_fanin(&silent, opts).unwrap();
            let b: FanInStats = compute_fanin(&spam, opts).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn relabeling_preserves_metrics(case in case_strategy(Behavior::Silent), perm_seed in any::<u64>()) {
        let tr = run_default(&case);
        let mut perm: Vec<ReplicaId> = (0..case.config.n).map(ReplicaId::from).collect();
        perm.shuffle(&mut stream(perm_seed, Stream::Schedule));
        let moved = tr.relabeled(&perm);
        prop_assert_eq!(delay_sample(&tr, UpdateId(0)).unwrap(), delay_sample(&moved, UpdateId(0)).unwrap());
        let opts = FanInOptions { count_empty: true, window: Some(AmortizedWindow::default_for(case.config.n, 0)) };
        let a: FanInStats = compute_fanin(&tr, opts).unwrap();
        let b: FanInStats = compute_fanin(&moved, opts).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn one_round_window_is_the_round_max(case in case_strategy(Behavior::Silent), start in 0u64..30) {
        let tr = run(&case, StopRule::fixed(30));
        let opts = FanInOptions { count_empty: true, window: Some(AmortizedWindow { start, len: 1 }) };
        let f: FanInStats = compute_fanin(&tr, opts).unwrap();
        prop_assert_eq!(f.amortized.unwrap(), f.per_round_max[start as usize] as f64);
    }

    #[test]
    fn conforming_faults_are_invisible(case in case_strategy(Behavior::Conforming)) {
        let stop = StopRule::fixed(60);
        let with_faults = run(&case, stop);
        let mut clean = case.clone();
        clean.failure = FailureConfig::none();
        let all_correct = run(&clean, stop);
        prop_assert_eq!(&with_faults.acceptances, &all_correct.acceptances);
        let sent = |t: &TrialTrace| t.loads.as_ref().unwrap().iter().map(|l| l.sent.clone()).collect::<Vec<_>>();
        prop_assert_eq!(sent(&with_faults), sent(&all_correct));
    }

    #[test]
    fn silence_never_speeds_things_up(case in case_strategy(Behavior::Silent)) {
        let silent = run_default(&case);
        let mut conf = case.clone();
        for b in conf.failure.faulty.values_mut() {
            *b = Behavior::Conforming;
        }
        let conforming = run_default(&conf);
        let ds = delay_sample(&silent, UpdateId(0)).unwrap().unwrap();
        let dc = delay_sample(&conforming, UpdateId(0)).unwrap().unwrap();
        prop_assert!(ds >= dc, "silent {} < conforming {}", ds, dc);
    }

    #[test]
    fn synchronous_messages_arrive_in_the_send_round(case in case_strategy(Behavior::Silent)) {
        let tr = run_trial_with(&case.config, &case.schedule, &case.failure, StopRule::fixed(20), RecordOptions::ALL).unwrap();
        for m in tr.messages.as_ref().unwrap() {
            prop_assert_eq!(m.delivered, Some(m.send_round));
        }
    }

    #[test]
    fn trace_lines_round_trip(case in case_strategy(Behavior::Spam), all in any::<bool>()) {
        let record = if all { RecordOptions::ALL } else { RecordOptions::LOADS };
        let tr = run_trial_with(&case.config, &case.schedule, &case.failure, StopRule::fixed(15), record).unwrap();
        let back = read_trace(to_bytes(&tr).as_slice()).unwrap();
        prop_assert_eq!(back, tr);
    }
}

#[test]
fn coupon_count_shape() {
    for t in 2..=32u64 {
        let mut prev = f64::INFINITY;
        for beta in t..=256 {
            let r: f64 = coupon_r(beta, t).unwrap();
            assert!(r >= t as f64, "R({beta},{t}) = {r}");
            assert!(r < prev, "not decreasing in β at ({beta},{t})");
            prev = r;
            if beta > t {
                let lower: f64 = coupon_r(beta, t - 1).unwrap();
                assert!(lower < r);
            }
        }
    }
    for t in 2..=64u64 {
        let r: f64 = coupon_r(2 * t, t).unwrap();
        assert!(r <= 1.5 * t as f64, "R({},{t}) = {r}", 2 * t);
    }
}
