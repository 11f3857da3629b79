use proptest::prelude::*;

use badsanta::adversary::{format_stream, parse_streams, StreamSource};
use badsanta::grid::{build_schedule, Coord, GridSpec};
use badsanta::protocol::fault::{crash_maker, format_scenario, FaultKind};
use badsanta::protocol::{
    commit_deadline, fingerprint, fp_bits, generate_max_plan, parse_scenario, run_broadcast, validate_fault_plan,
    ByzantineMode, FaultPlan, ProtocolConfig, Regime, Scenario,
};
use badsanta::stream::{run_strategy, Strategy as QueryStrategy, StreamLength};
use badsanta::CostSummary;

/// An even length and a bit vector of that length with at least half ones.
fn valid_stream() -> impl Strategy<Value = Vec<bool>> {
    (1usize..=64).prop_flat_map(|half| {
        let n = 2 * half;
        (Just(n), proptest::collection::vec(any::<bool>(), n), proptest::sample::subsequence((0..n).collect::<Vec<_>>(), half))
            .prop_map(|(_, mut bits, ones)| {
                for i in ones {
                    bits[i] = true;
                }
                bits
            })
    })
}

fn strategy_choice() -> impl Strategy<Value = QueryStrategy> {
    prop_oneof![
        Just(QueryStrategy::Naive),
        Just(QueryStrategy::SingleRound),
        (2usize..=5).prop_map(|rounds| QueryStrategy::MultiRound { rounds }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn every_strategy_finds_a_one(bits in valid_stream(), strategy in strategy_choice(), seed in any::<u64>()) {
        let n = StreamLength::new(bits.len()).unwrap();
        let mut sources: Vec<StreamSource> =
            (0..strategy.rounds()).map(|_| StreamSource::fixed(bits.clone()).unwrap()).collect();
        let t = run_strategy(strategy, &mut sources, n, seed).unwrap();
        let at = t.found_at.expect("a one is always found");
        prop_assert!(bits[at]);
        prop_assert_eq!(t.queries.last().map(|q| q.position), Some(at));
        for q in &t.queries {
            prop_assert!(q.position < n.get());
            prop_assert_eq!(q.answer, bits[q.position]);
        }
        // positions strictly increase within each stream round
        for round in 0..strategy.rounds() {
            let pos: Vec<usize> = t.round(round).map(|q| q.position).collect();
            prop_assert!(pos.windows(2).all(|w| w[0] < w[1]));
        }
        prop_assert_eq!(t.cost(), t.queries.len());
    }

    #[test]
    fn strategy_runs_repeat_for_a_seed(bits in valid_stream(), strategy in strategy_choice(), seed in any::<u64>()) {
        let n = StreamLength::new(bits.len()).unwrap();
        let run = || {
            let mut sources: Vec<StreamSource> =
                (0..strategy.rounds()).map(|_| StreamSource::fixed(bits.clone()).unwrap()).collect();
            run_strategy(strategy, &mut sources, n, seed).unwrap()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn single_round_cost_is_bounded(bits in valid_stream(), seed in any::<u64>()) {
        let n = StreamLength::new(bits.len()).unwrap();
        let mut sources = [StreamSource::fixed(bits.clone()).unwrap()];
        let t = run_strategy(QueryStrategy::SingleRound, &mut sources, n, seed).unwrap();
        let sample = ((n.get() as f64).sqrt().ceil() as usize).min(n.half());
        prop_assert!(t.cost() <= sample + n.half());
    }

    #[test]
    fn stream_text_round_trips(streams in proptest::collection::vec(valid_stream(), 1..6)) {
        let text: String = streams.iter().map(|s| format_stream(s) + "\n").collect();
        prop_assert_eq!(parse_streams(&text).unwrap(), streams);
    }

    #[test]
    fn cost_interval_brackets_the_mean(costs in proptest::collection::vec(1usize..500, 1..200)) {
        let s = CostSummary::from_costs(&costs, 0);
        prop_assert!(s.ci95.0 <= s.mean && s.mean <= s.ci95.1);
        prop_assert!(s.mean <= s.max as f64);
        prop_assert!(s.mean >= *costs.iter().min().unwrap() as f64);
    }

    #[test]
    fn tdma_slots_never_collide(r in 1usize..4, ax in -30i64..30, ay in -30i64..30, bx in -30i64..30, by in -30i64..30) {
        let spec = GridSpec::new(64, 64, r).unwrap();
        let s = build_schedule(&spec);
        let (a, b) = (Coord::new(ax, ay), Coord::new(bx, by));
        if a != b && a.linf(b) <= 2 * r as i64 {
            prop_assert_ne!(s.slot(a), s.slot(b));
        }
    }

    #[test]
    fn next_turn_is_the_first_own_slot(r in 1usize..4, x in 0i64..20, y in 0i64..20, step in 0u64..10_000) {
        let spec = GridSpec::new(20, 20, r).unwrap();
        let s = build_schedule(&spec);
        let c = Coord::new(x, y);
        let t = s.next_turn(c, step);
        prop_assert!(t >= step && t < step + s.period);
        prop_assert!(s.is_turn(c, t));
        prop_assert!((step..t).all(|u| !s.is_turn(c, u)));
    }

    #[test]
    fn deadline_grows_with_distance(x in -40i64..40, y in -40i64..40, r in 1usize..5, t0 in 0u64..1000) {
        let here = commit_deadline(x, y, r, t0);
        let further = commit_deadline(x.abs() + 1, y, r, t0);
        prop_assert!(here >= t0);
        prop_assert!(further >= here);
    }

    #[test]
    fn fingerprint_length_follows_message_length(msg in proptest::collection::vec(any::<u8>(), 1..300)) {
        let fp = fingerprint(&msg);
        prop_assert_eq!(fp.bit_len(), fp_bits(msg.len() as u64 * 8));
        prop_assert_eq!(fp.as_bytes().len(), (fp.bit_len() as usize).div_ceil(8));
        prop_assert_eq!(fp, fingerprint(&msg));
    }
}

fn small_grid() -> impl Strategy<Value = GridSpec> {
    (1usize..=2, 0usize..6, 0usize..6).prop_flat_map(|(r, ew, eh)| {
        let (w, h) = (2 * r + 3 + ew, 2 * r + 3 + eh);
        (0..w as i64, 0..h as i64).prop_map(move |(dx, dy)| GridSpec::with_dealer(w, h, r, Coord::new(dx, dy)).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_plans_pass_validation(spec in small_grid(), seed in any::<u64>(), late in 0.0f64..1.0, byz in any::<bool>()) {
        let (regime, plan) = if byz {
            let plan = generate_max_plan(&spec, Regime::Byzantine, seed, |_| FaultKind::Byzantine(ByzantineMode::WrongData));
            (Regime::Byzantine, plan)
        } else {
            (Regime::FailStop, generate_max_plan(&spec, Regime::FailStop, seed, crash_maker(late)))
        };
        let report = validate_fault_plan(&plan, &spec, regime);
        prop_assert!(report.is_ok(), "{:?}", report.violations);
        prop_assert!(!plan.is_faulty(spec.dealer));
    }

    #[test]
    fn scenario_text_round_trips(spec in small_grid(), seed in any::<u64>(), late in 0.0f64..1.0) {
        let faults = generate_max_plan(&spec, Regime::FailStop, seed, crash_maker(late));
        let scenario = Scenario { spec, seed, faults };
        prop_assert_eq!(parse_scenario(&format_scenario(&scenario)).unwrap(), scenario);
    }

    #[test]
    fn fault_free_broadcast_agrees_on_time(spec in small_grid(), k in 0usize..3, seed in any::<u64>(),
                                           msg in proptest::collection::vec(any::<u8>(), 1..64)) {
        let cfg = ProtocolConfig { k, seed, ..Default::default() };
        let run = run_broadcast(spec, &FaultPlan::default(), &msg, &cfg).unwrap();
        let s = &run.record.summary;
        prop_assert!(s.agreement);
        prop_assert_eq!(s.delivered, spec.node_count());
        prop_assert_eq!(s.late_fp_commits, 0);
        for l in &run.ledgers {
            prop_assert_eq!(l.data_awake_slots, l.data_listens + l.data_transmits);
        }
    }

    #[test]
    fn start_crash_plans_agree(spec in small_grid(), seed in any::<u64>(), k in 0usize..3) {
        let plan = generate_max_plan(&spec, Regime::FailStop, seed, crash_maker(0.0));
        let run = run_broadcast(spec, &plan, b"crash tolerant", &ProtocolConfig { k, seed, ..Default::default() }).unwrap();
        prop_assert!(run.record.summary.agreement);
    }
}
