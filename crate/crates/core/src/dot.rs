//! Graphviz export. Presentation only; JSON is the interchange format.

use std::fmt::Write;

use crate::automata::Sdfa;
use crate::sdag::{AnnotatedSdag, Sdag};

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// States are circles labelled with their termination probability, the
/// initial state is marked by an arrow from a point.
pub fn sdfa_to_dot(sdfa: &Sdfa) -> String {
    let mut out = String::new();
    writeln!(out, "digraph sdfa {{").unwrap();
    writeln!(out, "    rankdir=LR;").unwrap();
    writeln!(out, "    start [shape=point];").unwrap();
    for s in 0..sdfa.num_states() {
        let term = sdfa.termination_probability(s).unwrap_or(0.0).max(0.0);
        let shape = if term > 0.0 { "doublecircle" } else { "circle" };
        writeln!(out, "    s{s} [shape={shape} label=\"s{s}\\n{term:.2}\"];").unwrap();
    }
    writeln!(out, "    start -> s{};", sdfa.initial()).unwrap();
    for (from, action, to, prob) in sdfa.all_transitions() {
        writeln!(
            out,
            "    s{from} -> s{to} [label=\"{} ({prob:.2})\"];",
            escape(action)
        )
        .unwrap();
    }
    writeln!(out, "}}").unwrap();
    out
}

/// Action nodes are rounded boxes; input and output are small circles.
/// With frequencies, nodes and arcs also show them to one decimal.
pub fn sdag_to_dot(sdag: &Sdag, freqs: Option<&AnnotatedSdag>) -> String {
    let mut out = String::new();
    writeln!(out, "digraph sdag {{").unwrap();
    writeln!(out, "    rankdir=LR;").unwrap();
    writeln!(
        out,
        "    n{} [shape=circle label=\"i\" style=filled fillcolor=lightgreen];",
        sdag.input()
    )
    .unwrap();
    writeln!(
        out,
        "    n{} [shape=doublecircle label=\"o\" style=filled fillcolor=lightpink];",
        sdag.output()
    )
    .unwrap();
    for (&id, label) in sdag.labels() {
        let label = match freqs {
            Some(a) => format!("{}\\n{:.1}", escape(label), a.node_frequency(id)),
            None => escape(label),
        };
        writeln!(out, "    n{id} [shape=box style=rounded label=\"{label}\"];").unwrap();
    }
    for (&(s, t), &p) in sdag.arcs() {
        let label = match freqs.and_then(|a| a.arc_frequency(s, t)) {
            Some(f) => format!("{p:.2}\\n({f:.1})"),
            None => format!("{p:.2}"),
        };
        writeln!(out, "    n{s} -> n{t} [label=\"{label}\"];").unwrap();
    }
    writeln!(out, "}}").unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::tests::exact_figure_sdfa;

    #[test]
    fn automaton_dot() {
        let dot = sdfa_to_dot(&exact_figure_sdfa());
        assert!(dot.starts_with("digraph sdfa {"));
        assert!(dot.contains("s1 -> s1 [label=\"b (0.17)\"]"));
        assert!(dot.contains("s3 [shape=doublecircle label=\"s3\\n0.20\"]"));
        assert_eq!(dot.matches("->").count(), 6);
    }

    #[test]
    fn graph_dot_with_frequencies() {
        let g = Sdag::from_sdfa(&exact_figure_sdfa()).reduce_to_dfg();
        let ann = g.annotate_frequencies(1493.0).unwrap();
        let dot = sdag_to_dot(&g, Some(&ann));
        assert!(dot.contains("(985.7)"));
        assert!(dot.contains("c\\n2478.7"));
        assert_eq!(dot.matches("->").count(), g.num_arcs());
        assert!(!sdag_to_dot(&g, None).contains("985.7"));
    }

    #[test]
    fn labels_are_escaped() {
        let mut a = Sdfa::new(2, 0).unwrap();
        a.add_transition(0, "say \"hi\"", 1, 1.0).unwrap();
        assert!(sdfa_to_dot(&a).contains("say \\\"hi\\\" (1.00)"));
    }
}
