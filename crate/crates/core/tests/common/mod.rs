#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use sgmine::gaspd::{Evaluation, Individual};
use sgmine::{parse_log, AlergiaParams, EventLog, Sdag, Sdfa};

pub const EXAMPLE: &str = "1057;a,c,e,c\n272;a,b,c,e\n164;b,b,b,d\n";

pub fn example_log() -> EventLog {
    parse_log(EXAMPLE).unwrap()
}

pub fn tr(s: &str) -> Vec<String> {
    s.split(',').filter(|a| !a.is_empty()).map(String::from).collect()
}

const ACTIONS: [&str; 4] = ["a", "b", "c", "d"];

/// An automaton with up to `max_states` states over up to four actions.
/// Every state is reachable through a spanning tree from the initial state
/// and terminates with probability at least 0.05, so every state can reach
/// the end.
pub fn random_sdfa<R: Rng>(rng: &mut R, max_states: usize) -> Sdfa {
    let n = rng.gen_range(1..=max_states);
    let n_actions = rng.gen_range(1..=ACTIONS.len());
    let mut edges: Vec<BTreeMap<&str, usize>> = vec![BTreeMap::new(); n];
    for s in 1..n {
        loop {
            let parent = rng.gen_range(0..s);
            let free: Vec<&str> = ACTIONS[..n_actions]
                .iter()
                .copied()
                .filter(|a| !edges[parent].contains_key(a))
                .collect();
            if let Some(&a) = free.choose(rng) {
                edges[parent].insert(a, s);
                break;
            }
        }
    }
    for out in edges.iter_mut() {
        for &a in &ACTIONS[..n_actions] {
            if !out.contains_key(a) && rng.gen_bool(0.4) {
                out.insert(a, rng.gen_range(0..n));
            }
        }
    }
    let mut sdfa = Sdfa::new(n, 0).unwrap();
    for (s, out) in edges.iter().enumerate() {
        let term = rng.gen_range(0.05..0.6);
        let weights: Vec<f64> = out.keys().map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for ((a, &t), w) in out.iter().zip(&weights) {
            sdfa.add_transition(s, *a, t, (1.0 - term) * w / total).unwrap();
        }
    }
    sdfa
}

/// All traces over `alphabet` of length at most `max_len`.
pub fn all_traces(alphabet: &[String], max_len: usize) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for t in &layer {
            for a in alphabet {
                let mut u: Vec<String> = t.clone();
                u.push(a.clone());
                next.push(u);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// A valid graph of 3 to 8 action nodes over at most three labels, with at
/// least one label used twice.
pub fn random_sdag_with_duplicates<R: Rng>(rng: &mut R) -> Sdag {
    let n = rng.gen_range(3..=8);
    let mut labels = BTreeMap::new();
    for i in 0..n {
        labels.insert(i + 2, ["x", "y", "z"][rng.gen_range(0..3)].to_string());
    }
    labels.insert(3, labels[&2].clone());
    let mut targets: Vec<usize> = labels.keys().copied().collect();
    targets.push(1);
    let mut arcs = BTreeMap::new();
    for s in std::iter::once(0).chain(labels.keys().copied()) {
        let k = rng.gen_range(1..=targets.len().min(4));
        let chosen: Vec<usize> = targets.choose_multiple(rng, k).copied().collect();
        let weights: Vec<f64> = chosen.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for (t, w) in chosen.into_iter().zip(weights) {
            arcs.insert((s, t), w / total);
        }
    }
    Sdag::new(labels, 0, 1, arcs).unwrap()
}

/// Up to 100 evaluated individuals with sizes and relevances drawn from
/// small ranges, so ties and duplicates occur.
pub fn random_points<R: Rng>(rng: &mut R) -> Vec<Individual> {
    let n = rng.gen_range(1..=100);
    (0..n)
        .map(|i| Individual {
            params: AlergiaParams::new(1.0, i as f64, 0.5),
            eval: Some(Evaluation {
                size: rng.gen_range(5..30),
                relevance: rng.gen_range(0..40) as f64 / 8.0,
            }),
            ever_good: false,
            generation: 0,
        })
        .collect()
}

/// Quadratic frontier: keep a point unless another strictly dominates it,
/// or an earlier point has the same objectives.
pub fn brute_frontier(points: &[Individual]) -> Vec<Individual> {
    let obj = |p: &Individual| p.eval.map(|e| (e.size, e.relevance)).unwrap();
    points
        .iter()
        .enumerate()
        .filter(|(i, p)| {
            let (s, r) = obj(p);
            points.iter().enumerate().all(|(j, q)| {
                let (qs, qr) = obj(q);
                let strictly = qs <= s && qr <= r && (qs < s || qr < r);
                let earlier_twin = j < *i && qs == s && qr == r;
                !strictly && !earlier_twin
            })
        })
        .map(|(_, p)| p.clone())
        .collect()
}
