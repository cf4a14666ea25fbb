mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{
    all_traces, brute_frontier, random_points, random_sdag_with_duplicates, random_sdfa,
};
use sgmine::automata::SdfaJson;
use sgmine::gaspd::{crossover, mutate, pareto_frontier, Bounds};
use sgmine::relevance::sdag_relevance;
use sgmine::sdag::SdagJson;
use sgmine::{
    entropic_relevance, parse_log, run_alergia, AlergiaParams, EventLog, Pat, Sdag, Sdfa,
    StochasticLanguage, Trace,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn small_log() -> impl Strategy<Value = EventLog> {
    let trace = prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 0..5);
    prop::collection::vec((trace, 1u64..20), 1..6).prop_map(|variants| {
        EventLog::from_variants(variants.into_iter().map(|(t, m)| (Trace::new(t), m)))
    })
}

fn entropy(log: &EventLog) -> f64 {
    let total = log.total_traces() as f64;
    log.variants()
        .map(|(_, m)| {
            let p = m as f64 / total;
            -p * p.log2()
        })
        .sum()
}

/// The automaton with its states renumbered by a random permutation.
fn renamed(a: &Sdfa, seed: u64) -> Sdfa {
    let mut json = a.to_json();
    let mut perm: Vec<usize> = (0..a.num_states()).map(|i| i * 7 + 3).collect();
    perm.shuffle(&mut rng(seed));
    let map = |s: usize| perm[s];
    json.states = json.states.iter().map(|&s| map(s)).collect();
    json.initial = map(json.initial);
    for t in &mut json.transitions {
        t.from = map(t.from);
        t.to = map(t.to);
    }
    json.states.reverse();
    Sdfa::from_json(&json).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn graph_and_automaton_define_the_same_language(seed in any::<u64>()) {
        let a = random_sdfa(&mut rng(seed), 6);
        let g = Sdag::from_sdfa(&a);
        prop_assert!(g.is_deterministic());
        prop_assert!(g.is_sound());
        let back = g.to_sfa().unwrap();
        let alphabet: Vec<String> = a.alphabet().into_iter().collect();
        for t in all_traces(&alphabet, 4) {
            let p = a.trace_probability(&t);
            prop_assert!((g.trace_probability(&t, 1).unwrap() - p).abs() <= 1e-12);
            prop_assert!((back.trace_probability(&t) - p).abs() <= 1e-12);
        }
    }

    #[test]
    fn frequencies_are_conserved(seed in any::<u64>(), cases in 1u32..5000) {
        let g = Sdag::from_sdfa(&random_sdfa(&mut rng(seed), 6));
        let cases = f64::from(cases);
        let ann = g.annotate_frequencies(cases).unwrap();
        prop_assert!(ann.max_residual() <= 1e-6 * cases);
        prop_assert!((ann.node_frequency(g.output()) - cases).abs() <= 1e-6 * cases);
        prop_assert!(ann.arc_freq.values().all(|&f| f >= -1e-9 * cases));

        let rebuilt = Sdag::from_frequencies(
            g.labels().clone(), g.input(), g.output(), &ann.arc_freq, cases,
        );
        if let Ok(rebuilt) = rebuilt {
            for (arc, p) in g.arcs() {
                prop_assert!((rebuilt.arcs()[arc] - p).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn reduction_yields_a_valid_directly_follows_graph(seed in any::<u64>()) {
        let g = Sdag::from_sdfa(&random_sdfa(&mut rng(seed), 6));
        let dfg = g.reduce_to_dfg();
        prop_assert!(dfg.is_deterministic());
        prop_assert_eq!(dfg.num_nodes(), g.alphabet().len());
        prop_assert!(Sdag::new(
            dfg.labels().clone(), dfg.input(), dfg.output(), dfg.arcs().clone()
        ).is_ok());
        prop_assert_eq!(dfg.reduce_to_dfg(), dfg.clone());
    }

    #[test]
    fn merge_order_does_not_matter(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_sdag_with_duplicates(&mut r);
        let mut order: Vec<usize> = g.labels().keys().copied().collect();
        order.shuffle(&mut r);
        let x = g.reduce_to_dfg_in_order(&order).canonical_arcs().unwrap();
        let y = g.reduce_to_dfg().canonical_arcs().unwrap();
        prop_assert_eq!(x.len(), y.len());
        for (k, p) in &x {
            prop_assert!((y[k] - p).abs() <= 1e-12);
        }
    }

    #[test]
    fn frontier_matches_quadratic_oracle(seed in any::<u64>()) {
        let points = random_points(&mut rng(seed));
        let front = pareto_frontier(&points);
        prop_assert_eq!(&front, &brute_frontier(&points));
        for p in &front {
            prop_assert!(front.iter().all(|q| !q.dominates(p)));
        }
    }

    #[test]
    fn crossover_draws_components_from_parents(
        w in (1e-9f64..15.0, 1e-9f64..15.0),
        t in (0f64..100.0, 0f64..100.0),
        f in (0f64..=1.0, 0f64..=1.0),
    ) {
        let p1 = AlergiaParams::new(w.0, t.0, f.0);
        let p2 = AlergiaParams::new(w.1, t.1, f.1);
        let kids = crossover(&p1, &p2);
        prop_assert_eq!(kids.len(), 8);
        for k in kids {
            prop_assert!(k.omega == p1.omega || k.omega == p2.omega);
            prop_assert!(k.t == p1.t || k.t == p2.t);
            prop_assert!(k.f == p1.f || k.f == p2.f);
        }
    }

    #[test]
    fn mutation_stays_in_bounds(
        seed in any::<u64>(), delta in 0f64..3.0,
        omega in 1e-9f64..15.0, t in 0f64..100.0, f in 0f64..=1.0,
    ) {
        let bounds = Bounds { omega_max: 15.0, t_max: 100.0 };
        let m = mutate(&AlergiaParams::new(omega, t, f), &bounds, delta, &mut rng(seed));
        prop_assert!(bounds.contains(&m));
    }

    #[test]
    fn prefix_tree_model_scores_the_log_entropy(log in small_log()) {
        let a = Pat::build(&log).unwrap().to_sdfa();
        let r = entropic_relevance(&log, &a).unwrap();
        prop_assert!((r.bits_per_trace - entropy(&log)).abs() <= 1e-9);
        prop_assert_eq!(r.coverage_rho, 1.0);
        let via_graph = sdag_relevance(&log, &Sdag::from_sdfa(&a)).unwrap();
        prop_assert!((via_graph.bits_per_trace - r.bits_per_trace).abs() <= 1e-9);
    }

    #[test]
    fn relevance_ignores_state_names(seed in any::<u64>(), log in small_log()) {
        let a = random_sdfa(&mut rng(seed), 5);
        let x = entropic_relevance(&log, &a).unwrap().bits_per_trace;
        let y = entropic_relevance(&log, &renamed(&a, seed)).unwrap().bits_per_trace;
        prop_assert!((x - y).abs() <= 1e-12);
    }

    #[test]
    fn relevance_report_adds_up(seed in any::<u64>(), log in small_log()) {
        let r = entropic_relevance(&log, &random_sdfa(&mut rng(seed), 5)).unwrap();
        let n = log.total_traces() as f64;
        prop_assert!((r.bits_per_trace - (r.selector_bits + (r.covered_bits + r.background_bits) / n)).abs() <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&r.coverage_rho));
        prop_assert!(r.bits_per_trace >= 0.0);
    }

    #[test]
    fn tiny_omega_reproduces_the_empirical_distribution(log in small_log()) {
        let a = run_alergia(&log, &AlergiaParams::new(1e-9, 0.0, 1.0)).unwrap();
        let total = log.total_traces() as f64;
        for (trace, m) in log.variants() {
            prop_assert!((a.trace_probability(trace.actions()) - m as f64 / total).abs() <= 1e-12);
        }
        prop_assert!(entropic_relevance(&log, &a).unwrap().bits_per_trace - entropy(&log) <= 1e-9);
    }

    #[test]
    fn huge_omega_collapses_to_one_state(log in small_log()) {
        let a = run_alergia(&log, &AlergiaParams::new(1e9, 0.0, 1.0)).unwrap();
        prop_assert_eq!(a.num_states(), 1);
        prop_assert!(a.validate().is_ok());
    }

    #[test]
    fn learned_automata_are_valid(log in small_log(), omega in 0.1f64..20.0, t in 0f64..30.0, f in 0f64..=1.0) {
        let a = run_alergia(&log, &AlergiaParams::new(omega, t, f)).unwrap();
        prop_assert!(a.validate().is_ok());
        let g = Sdag::from_sdfa(&a);
        prop_assert!(g.is_deterministic());
        prop_assert!(g.is_sound());
        prop_assert!(g.annotate_frequencies(log.total_traces() as f64).is_ok());
    }

    #[test]
    fn prefix_tree_counts_are_consistent(log in small_log()) {
        let pat = Pat::build(&log).unwrap();
        prop_assert!(pat.counts_consistent());
        prop_assert_eq!(pat.total_terminations(), log.total_traces());
    }

    #[test]
    fn filtering_keeps_the_requested_share(log in small_log(), f in 0f64..=1.0) {
        let kept = log.filter_by_frequency(f);
        prop_assert!(kept.total_traces() as f64 >= f * log.total_traces() as f64 - 1e-9);
        prop_assert!(kept.num_variants() <= log.num_variants());
        let more = log.filter_by_frequency((f + 0.1).min(1.0));
        prop_assert!(more.num_variants() >= kept.num_variants());
        for (t, m) in kept.variants() {
            prop_assert_eq!(log.multiplicity(t), m);
        }
    }

    #[test]
    fn plain_log_round_trips(log in small_log()) {
        prop_assert_eq!(parse_log(&log.to_plain_string()).unwrap(), log);
    }

    #[test]
    fn models_round_trip_through_json(seed in any::<u64>()) {
        let a = random_sdfa(&mut rng(seed), 6);
        let text = serde_json::to_string(&a.to_json()).unwrap();
        let json: SdfaJson = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(Sdfa::from_json(&json).unwrap(), a.clone());

        let g = Sdag::from_sdfa(&a);
        let text = serde_json::to_string(&g.to_json()).unwrap();
        let json: SdagJson = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(Sdag::from_json(&json).unwrap(), g);
    }
}

#[test]
fn sampled_traces_follow_the_automaton() {
    let a = random_sdfa(&mut rng(3), 4);
    let mut r = rng(4);
    let mut counts: BTreeMap<Vec<String>, u32> = BTreeMap::new();
    let n = 20_000;
    for _ in 0..n {
        let t = a.sample_trace(&mut r, 200).unwrap();
        *counts.entry(t.actions().to_vec()).or_default() += 1;
    }
    for (t, c) in counts.iter().filter(|(_, &c)| c > 500) {
        let p = a.trace_probability(t);
        assert!((f64::from(*c) / f64::from(n) - p).abs() < 0.02, "{t:?}");
    }
}
