//! Entropic relevance of a stochastic model to an event log.
//!
//! A trace the model can produce is encoded with `-log2 P(t)` bits; any other
//! trace falls back to a uniform code over the log's alphabet plus an end
//! marker. One selector bit stream (its entropy `H0(rho)`, where `rho` is the
//! covered share of the log) says which code each trace uses.

use serde::{Deserialize, Serialize};

use crate::automata::StochasticLanguage;
use crate::error::{Error, Result};
use crate::eventlog::EventLog;
use crate::sdag::Sdag;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceReport {
    pub bits_per_trace: f64,
    pub coverage_rho: f64,
    /// Total bits for covered traces, multiplicities included.
    pub covered_bits: f64,
    /// Total bits for uncovered traces, multiplicities included.
    pub background_bits: f64,
    pub selector_bits: f64,
}

/// Uniform code length of a trace over `alphabet_size` actions and an end
/// marker.
pub fn background_bits(trace_len: usize, alphabet_size: usize) -> f64 {
    (trace_len as f64 + 1.0) * ((alphabet_size as f64) + 1.0).log2()
}

/// Binary entropy in bits, with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
    h(p) + h(1.0 - p)
}

pub fn entropic_relevance<M>(log: &EventLog, model: &M) -> Result<RelevanceReport>
where
    M: StochasticLanguage + ?Sized,
{
    if log.is_empty() {
        return Err(Error::domain("relevance of an empty log is undefined"));
    }
    let alphabet_size = log.alphabet().len();
    let total = log.total_traces() as f64;
    let mut covered = 0u64;
    let mut covered_bits = 0.0;
    let mut uncovered_bits = 0.0;
    for (trace, mult) in log.variants() {
        let p = model.trace_probability(trace.actions());
        if p > 0.0 {
            covered += mult;
            covered_bits -= mult as f64 * p.log2();
        } else {
            uncovered_bits += mult as f64 * background_bits(trace.len(), alphabet_size);
        }
    }
    let rho = covered as f64 / total;
    let selector_bits = binary_entropy(rho);
    Ok(RelevanceReport {
        bits_per_trace: selector_bits + (covered_bits + uncovered_bits) / total,
        coverage_rho: rho,
        covered_bits,
        background_bits: uncovered_bits,
        selector_bits,
    })
}

/// Relevance of a graph model; only deterministic graphs are scored.
pub fn sdag_relevance(log: &EventLog, sdag: &Sdag) -> Result<RelevanceReport> {
    if !sdag.is_deterministic() {
        return Err(Error::domain("relevance requires a deterministic graph"));
    }
    entropic_relevance(log, sdag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::tests::{exact_figure_sdfa, figure_sdfa, EXAMPLE};
    use crate::automata::{Pat, Sdfa};
    use crate::eventlog::parse_log;

    fn example() -> EventLog {
        parse_log(EXAMPLE).unwrap()
    }

    /// Independent arithmetic for the example automaton: two covered
    /// variants, one uncovered variant of length four over five actions.
    fn oracle(b: f64, c1: f64, c2: f64) -> f64 {
        let p_acec = c1 * c2;
        let p_abce = b * c1 * (1.0 - c2);
        let n: f64 = 1493.0;
        let rho: f64 = 1329.0 / n;
        let h0 = -rho * rho.log2() - (1.0 - rho) * (1.0 - rho).log2();
        h0 + (1057.0 * -p_acec.log2() + 272.0 * -p_abce.log2() + 164.0 * 5.0 * 6f64.log2()) / n
    }

    #[test]
    fn background_code_lengths() {
        assert!((background_bits(4, 5) - 12.925).abs() < 1e-3);
        assert!((background_bits(0, 5) - 2.585).abs() < 1e-3);
        assert_eq!(background_bits(3, 1), 4.0);
    }

    #[test]
    fn example_automaton() {
        let r = entropic_relevance(&example(), &exact_figure_sdfa()).unwrap();
        let expected = oracle(272.0 / 1601.0, 1329.0 / 1601.0, 1057.0 / 1329.0);
        assert!((r.bits_per_trace - expected).abs() < 1e-9);
        assert!((r.bits_per_trace - 3.275).abs() < 0.01);
        let sum = r.selector_bits + (r.covered_bits + r.background_bits) / 1493.0;
        assert!((r.bits_per_trace - sum).abs() < 1e-9);
        assert!((r.coverage_rho - 1329.0 / 1493.0).abs() < 1e-12);

        let rounded = entropic_relevance(&example(), &figure_sdfa(0.17, 0.83, 0.8)).unwrap();
        assert!((rounded.bits_per_trace - oracle(0.17, 0.83, 0.8)).abs() < 1e-9);
    }

    #[test]
    fn graph_route_agrees() {
        let log = example();
        let a = exact_figure_sdfa();
        let via_graph = sdag_relevance(&log, &Sdag::from_sdfa(&a)).unwrap();
        let direct = entropic_relevance(&log, &a).unwrap();
        assert!((via_graph.bits_per_trace - direct.bits_per_trace).abs() < 1e-12);
    }

    #[test]
    fn full_prefix_tree_scores_the_entropy() {
        let log = example();
        let r = entropic_relevance(&log, &Pat::build(&log).unwrap().to_sdfa()).unwrap();
        let entropy: f64 = [1057.0, 272.0, 164.0]
            .iter()
            .map(|m| {
                let p: f64 = m / 1493.0;
                -p * p.log2()
            })
            .sum();
        assert!((r.bits_per_trace - entropy).abs() < 1e-9);
        assert!((r.bits_per_trace - 1.150).abs() < 1e-3);
        assert_eq!(r.selector_bits, 0.0);
        assert_eq!(r.background_bits, 0.0);
    }

    #[test]
    fn model_covering_nothing() {
        let log = example();
        let mut a = Sdfa::new(2, 0).unwrap();
        a.add_transition(0, "zzz", 1, 1.0).unwrap();
        let r = entropic_relevance(&log, &a).unwrap();
        assert_eq!(r.coverage_rho, 0.0);
        assert_eq!(r.selector_bits, 0.0);
        let mean = (1057.0 * 5.0 + 272.0 * 5.0 + 164.0 * 5.0) * 6f64.log2() / 1493.0;
        assert!((r.bits_per_trace - mean).abs() < 1e-9);
    }

    #[test]
    fn perturbation_never_helps() {
        let log = example();
        let best = oracle(272.0 / 1601.0, 1329.0 / 1601.0, 1057.0 / 1329.0);
        for d in [-0.05, -0.01, -1e-3, 1e-3, 0.01, 0.05] {
            let b = 272.0 / 1601.0 + d;
            let bumped = figure_sdfa(b, 1.0 - b, 1057.0 / 1329.0);
            let r = entropic_relevance(&log, &bumped).unwrap();
            assert!(r.bits_per_trace >= best - 1e-12, "delta {d}");
            let c2 = 1057.0 / 1329.0 + d;
            let bumped = figure_sdfa(272.0 / 1601.0, 1329.0 / 1601.0, c2);
            let r = entropic_relevance(&log, &bumped).unwrap();
            assert!(r.bits_per_trace >= best - 1e-12, "delta {d}");
        }
    }

    #[test]
    fn empty_log_is_an_error() {
        assert!(entropic_relevance(&EventLog::new(), &exact_figure_sdfa()).is_err());
    }
}
