//! Stochastic directed action graphs (SDAGs).
//!
//! An SDAG has action-labelled nodes plus an unlabelled input and output
//! node. Every node other than the output distributes probability one over
//! its outgoing arcs. Directly-follows graphs are SDAGs with one node per
//! action.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::automata::{Sdfa, StochasticLanguage, PROB_TOLERANCE};
use crate::error::{Error, Result};

pub type NodeId = usize;
pub type Arc = (NodeId, NodeId);

/// Termination probabilities at or below this are treated as absent when an
/// automaton is turned into a graph, so rounding residue never adds arcs.
pub const TERMINATION_EPS: f64 = 1e-12;

/// Relative tolerance for frequency equations, scaled by the case count.
pub const FREQUENCY_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Sdag {
    labels: BTreeMap<NodeId, String>,
    input: NodeId,
    output: NodeId,
    arcs: BTreeMap<Arc, f64>,
}

/// Node roles used to compare graphs independently of node ids.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Input,
    Action(String),
    Output,
}

impl Sdag {
    /// Builds a graph and checks its invariants: distinct unlabelled
    /// input/output, arcs only from nodes or the input and only into nodes or
    /// the output, and unit outflow at the input and every action node.
    pub fn new(
        labels: BTreeMap<NodeId, String>,
        input: NodeId,
        output: NodeId,
        arcs: BTreeMap<Arc, f64>,
    ) -> Result<Sdag> {
        let g = Sdag {
            labels,
            input,
            output,
            arcs,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if self.input == self.output {
            return Err(Error::model("input and output must be distinct"));
        }
        if self.labels.contains_key(&self.input) || self.labels.contains_key(&self.output) {
            return Err(Error::model("input and output nodes cannot carry a label"));
        }
        let mut outflow: BTreeMap<NodeId, f64> = BTreeMap::new();
        for (&(s, t), &p) in &self.arcs {
            if s == self.output || !(s == self.input || self.labels.contains_key(&s)) {
                return Err(Error::model(format!("arc {s}->{t} has an invalid source")));
            }
            if t == self.input || !(t == self.output || self.labels.contains_key(&t)) {
                return Err(Error::model(format!("arc {s}->{t} has an invalid target")));
            }
            if !(0.0..=1.0 + PROB_TOLERANCE).contains(&p) {
                return Err(Error::model(format!("arc {s}->{t} has probability {p}")));
            }
            *outflow.entry(s).or_insert(0.0) += p;
        }
        for s in std::iter::once(self.input).chain(self.labels.keys().copied()) {
            let total = outflow.get(&s).copied().unwrap_or(0.0);
            if (total - 1.0).abs() > PROB_TOLERANCE {
                return Err(Error::model(format!(
                    "outgoing probabilities of node {s} sum to {total}"
                )));
            }
        }
        Ok(())
    }

    /// The graph of an automaton: one node per transition, arcs between
    /// consecutive transitions weighted by the second transition's
    /// probability, input arcs into the initial transitions, and arcs to the
    /// output carrying the termination probability of the reached state.
    pub fn from_sdfa(sdfa: &Sdfa) -> Sdag {
        let input = 0;
        let output = 1;
        let mut labels = BTreeMap::new();
        // transitions leaving each state, as (node, probability)
        let mut leaving: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); sdfa.num_states()];
        let mut node_target = Vec::new();
        for (from, action, to, prob) in sdfa.all_transitions() {
            let id = labels.len() + 2;
            labels.insert(id, action.to_string());
            leaving[from].push((id, prob));
            node_target.push((id, to));
        }
        let termination =
            |s| sdfa.termination_probability(s).expect("state of this automaton");

        let mut arcs = BTreeMap::new();
        for &(node, prob) in &leaving[sdfa.initial()] {
            arcs.insert((input, node), prob);
        }
        let t0 = termination(sdfa.initial());
        if t0 > TERMINATION_EPS {
            arcs.insert((input, output), t0);
        }
        for &(node, target) in &node_target {
            for &(next, prob) in &leaving[target] {
                arcs.insert((node, next), prob);
            }
            let term = termination(target);
            if term > TERMINATION_EPS {
                arcs.insert((node, output), term);
            }
        }
        Sdag {
            labels,
            input,
            output,
            arcs,
        }
    }

    pub fn input(&self) -> NodeId {
        self.input
    }

    pub fn output(&self) -> NodeId {
        self.output
    }

    pub fn labels(&self) -> &BTreeMap<NodeId, String> {
        &self.labels
    }

    pub fn label(&self, node: NodeId) -> Option<&str> {
        self.labels.get(&node).map(String::as_str)
    }

    pub fn arcs(&self) -> &BTreeMap<Arc, f64> {
        &self.arcs
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn out_arcs(&self, node: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.arcs
            .range((node, NodeId::MIN)..=(node, NodeId::MAX))
            .map(|(&(_, t), &p)| (t, p))
    }

    pub fn alphabet(&self) -> BTreeSet<&str> {
        self.labels.values().map(String::as_str).collect()
    }

    /// Nodes (input and output included) plus arcs.
    pub fn model_size(&self) -> usize {
        self.labels.len() + 2 + self.arcs.len()
    }

    /// No node reaches two distinct action nodes that carry the same label.
    pub fn is_deterministic(&self) -> bool {
        std::iter::once(self.input)
            .chain(self.labels.keys().copied())
            .all(|s| {
                let mut seen = BTreeSet::new();
                self.out_arcs(s)
                    .filter_map(|(t, _)| self.label(t))
                    .all(|label| seen.insert(label))
            })
    }

    /// Every action node lies on a directed path from the input to the
    /// output.
    pub fn is_sound(&self) -> bool {
        let mut succ: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        let mut pred: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for &(s, t) in self.arcs.keys() {
            succ.entry(s).or_default().push(t);
            pred.entry(t).or_default().push(s);
        }
        let forward = reach(self.input, &succ);
        let backward = reach(self.output, &pred);
        self.labels
            .keys()
            .all(|n| forward.contains(n) && backward.contains(n))
            && forward.contains(&self.output)
    }

    /// Sum of the probabilities of all executions confirming `trace`.
    ///
    /// Executions are enumerated depth-first; more than `max_execs`
    /// candidate executions of full length is a resource error. A
    /// deterministic graph has at most one.
    pub fn trace_probability(&self, trace: &[String], max_execs: usize) -> Result<f64> {
        let mut visited = 0usize;
        self.sum_executions(self.input, trace, 1.0, &mut visited, max_execs)
    }

    fn sum_executions(
        &self,
        node: NodeId,
        rest: &[String],
        prob: f64,
        visited: &mut usize,
        max_execs: usize,
    ) -> Result<f64> {
        let Some((action, tail)) = rest.split_first() else {
            *visited += 1;
            if *visited > max_execs {
                return Err(Error::Resource(format!(
                    "more than {max_execs} executions confirm the trace"
                )));
            }
            return Ok(prob * self.arcs.get(&(node, self.output)).copied().unwrap_or(0.0));
        };
        let mut total = 0.0;
        for (next, p) in self.out_arcs(node) {
            if self.label(next) == Some(action.as_str()) {
                total += self.sum_executions(next, tail, prob * p, visited, max_execs)?;
            }
        }
        Ok(total)
    }

    /// The automaton of a deterministic graph: the input and every node
    /// become states, an arc `x -> y` becomes a transition on `y`'s label,
    /// and arcs into the output carry the termination mass. States are
    /// renumbered breadth-first from the input.
    pub fn to_sfa(&self) -> Result<Sdfa> {
        if !self.is_deterministic() {
            return Err(Error::domain(
                "graph is not deterministic; its automaton would not be deterministic",
            ));
        }
        let mut index = BTreeMap::new();
        index.insert(self.input, 0);
        for (i, &n) in self.labels.keys().enumerate() {
            index.insert(n, i + 1);
        }
        let mut sdfa = Sdfa::new(self.labels.len() + 1, 0)?;
        for (&(s, t), &p) in &self.arcs {
            if let Some(label) = self.label(t) {
                sdfa.add_transition(index[&s], label, index[&t], p)?;
            }
        }
        Ok(sdfa.canonicalize())
    }

    /// Merges all nodes sharing a label into a single node per label. Arcs
    /// into merged nodes are rerouted and summed; the pooled outgoing arcs of
    /// a merged node are divided by their total.
    pub fn reduce_to_dfg(&self) -> Sdag {
        let mut groups: BTreeMap<&str, Vec<NodeId>> = BTreeMap::new();
        for (&n, label) in &self.labels {
            groups.entry(label.as_str()).or_default().push(n);
        }
        let mut merger = Merger::new(self);
        for members in groups.values().filter(|m| m.len() > 1) {
            merger.merge(members);
        }
        merger.graph.renumbered()
    }

    /// Same reduction, performed as a sequence of pairwise merges in the
    /// order nodes appear in `order` (nodes not listed follow in id order).
    /// A merged node remembers how many original nodes it stands for, so its
    /// outflow is weighted accordingly and the result does not depend on the
    /// order.
    pub fn reduce_to_dfg_in_order(&self, order: &[NodeId]) -> Sdag {
        let mut sequence: Vec<NodeId> = order
            .iter()
            .copied()
            .filter(|n| self.labels.contains_key(n))
            .collect();
        for &n in self.labels.keys() {
            if !sequence.contains(&n) {
                sequence.push(n);
            }
        }
        let mut merger = Merger::new(self);
        let mut representative: BTreeMap<String, NodeId> = BTreeMap::new();
        for n in sequence {
            let label = self.labels[&n].clone();
            let rep = match representative.get(&label) {
                Some(&rep) => merger.merge(&[rep, n]),
                None => n,
            };
            representative.insert(label, rep);
        }
        merger.graph.renumbered()
    }

    /// Renumbers nodes: input 0, output 1, action nodes from 2 ordered by
    /// (label, old id).
    fn renumbered(&self) -> Sdag {
        let mut order: Vec<(&String, NodeId)> = self.labels.iter().map(|(&n, l)| (l, n)).collect();
        order.sort();
        let mut index = BTreeMap::new();
        index.insert(self.input, 0);
        index.insert(self.output, 1);
        for (i, &(_, n)) in order.iter().enumerate() {
            index.insert(n, i + 2);
        }
        Sdag {
            labels: order.iter().map(|&(l, n)| (index[&n], l.clone())).collect(),
            input: 0,
            output: 1,
            arcs: self
                .arcs
                .iter()
                .map(|(&(s, t), &p)| ((index[&s], index[&t]), p))
                .collect(),
        }
    }

    /// Arc probabilities keyed by endpoint labels. Only defined when every
    /// action has a single node.
    pub fn canonical_arcs(&self) -> Result<BTreeMap<(Endpoint, Endpoint), f64>> {
        if self.alphabet().len() != self.labels.len() {
            return Err(Error::domain("graph has several nodes with the same label"));
        }
        let endpoint = |n: NodeId| {
            if n == self.input {
                Endpoint::Input
            } else if n == self.output {
                Endpoint::Output
            } else {
                Endpoint::Action(self.labels[&n].clone())
            }
        };
        Ok(self
            .arcs
            .iter()
            .map(|(&(s, t), &p)| ((endpoint(s), endpoint(t)), p))
            .collect())
    }

    /// Derives arc frequencies for `cases` traces flowing through the graph.
    ///
    /// One unknown per arc and one equation per arc:
    /// `f(s, v) = q(s, v) * inflow(s)`, with the input's inflow fixed to
    /// `cases`. The square system is solved by LU decomposition with partial
    /// pivoting; node conservation and the input/output totals are then
    /// checked on the solution.
    pub fn annotate_frequencies(&self, cases: f64) -> Result<AnnotatedSdag> {
        if !(cases > 0.0) {
            return Err(Error::domain("case count must be positive"));
        }
        let arcs: Vec<(Arc, f64)> = self.arcs.iter().map(|(&a, &p)| (a, p)).collect();
        let m = arcs.len();
        let mut incoming: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for (j, &((_, t), _)) in arcs.iter().enumerate() {
            incoming.entry(t).or_default().push(j);
        }
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for (k, &((s, _), q)) in arcs.iter().enumerate() {
            a[(k, k)] += 1.0;
            if s == self.input {
                b[k] = q * cases;
            } else {
                for &j in incoming.get(&s).into_iter().flatten() {
                    a[(k, j)] -= q;
                }
            }
        }
        let solution = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Numeric("frequency system is singular".into()))?;
        let annotated = AnnotatedSdag {
            sdag: self.clone(),
            arc_freq: arcs
                .iter()
                .enumerate()
                .map(|(k, &(arc, _))| (arc, solution[k]))
                .collect(),
            cases,
        };
        let residual = annotated.max_residual();
        if !(residual <= FREQUENCY_TOLERANCE * cases) {
            return Err(Error::Numeric(format!(
                "frequency equations violated by {residual} (graph not sound?)"
            )));
        }
        Ok(annotated)
    }

    /// Builds a graph from arc frequencies: each arc's probability is its
    /// share of its source's total outflow.
    pub fn from_frequencies(
        labels: BTreeMap<NodeId, String>,
        input: NodeId,
        output: NodeId,
        freq_arcs: &BTreeMap<Arc, f64>,
        cases: f64,
    ) -> Result<Sdag> {
        let mut outflow: BTreeMap<NodeId, f64> = BTreeMap::new();
        for (&(s, t), &f) in freq_arcs {
            if !(f >= 0.0) || !f.is_finite() {
                return Err(Error::domain(format!("arc {s}->{t} has frequency {f}")));
            }
            *outflow.entry(s).or_insert(0.0) += f;
        }
        for s in std::iter::once(input).chain(labels.keys().copied()) {
            if !(outflow.get(&s).copied().unwrap_or(0.0) > 0.0) {
                return Err(Error::domain(format!("node {s} has no outgoing frequency")));
            }
        }
        let input_flow = outflow[&input];
        if (input_flow - cases).abs() > FREQUENCY_TOLERANCE * cases.max(1.0) {
            return Err(Error::domain(format!(
                "input outflow {input_flow} differs from case count {cases}"
            )));
        }
        let arcs = freq_arcs
            .iter()
            .map(|(&(s, t), &f)| ((s, t), f / outflow[&s]))
            .collect();
        Sdag::new(labels, input, output, arcs)
    }

    pub fn to_json(&self) -> SdagJson {
        SdagJson {
            nodes: self
                .labels
                .iter()
                .map(|(&id, label)| SdagNodeJson {
                    id,
                    label: label.clone(),
                })
                .collect(),
            input: self.input,
            output: self.output,
            arcs: self
                .arcs
                .iter()
                .map(|(&(from, to), &prob)| SdagArcJson {
                    from,
                    to,
                    prob: Some(prob),
                    freq: None,
                })
                .collect(),
            cases: None,
        }
    }

    /// Reads a graph from JSON. Arcs carry probabilities, or frequencies
    /// from which probabilities are derived (the case count defaults to the
    /// input's outflow).
    pub fn from_json(json: &SdagJson) -> Result<Sdag> {
        let mut labels = BTreeMap::new();
        for node in &json.nodes {
            if labels.insert(node.id, node.label.clone()).is_some() {
                return Err(Error::model(format!("duplicate node id {}", node.id)));
            }
        }
        let mut probs = BTreeMap::new();
        let mut freqs = BTreeMap::new();
        for arc in &json.arcs {
            let key = (arc.from, arc.to);
            if probs.contains_key(&key) || freqs.contains_key(&key) {
                return Err(Error::model(format!("duplicate arc {}->{}", arc.from, arc.to)));
            }
            if let Some(p) = arc.prob {
                probs.insert(key, p);
            }
            if let Some(f) = arc.freq {
                freqs.insert(key, f);
            }
        }
        if probs.len() == json.arcs.len() {
            Sdag::new(labels, json.input, json.output, probs)
        } else if freqs.len() == json.arcs.len() {
            let cases = json.cases.unwrap_or_else(|| {
                freqs
                    .iter()
                    .filter(|((s, _), _)| *s == json.input)
                    .map(|(_, f)| f)
                    .sum()
            });
            Sdag::from_frequencies(labels, json.input, json.output, &freqs, cases)
        } else {
            Err(Error::model("every arc needs a probability, or every arc a frequency"))
        }
    }
}

impl StochasticLanguage for Sdag {
    /// Sum over confirming executions. Intended for deterministic graphs;
    /// enumeration on a heavily non-deterministic graph saturates at zero.
    fn trace_probability(&self, trace: &[String]) -> f64 {
        Sdag::trace_probability(self, trace, usize::MAX).unwrap_or(0.0)
    }
}

fn reach(start: NodeId, adjacency: &BTreeMap<NodeId, Vec<NodeId>>) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        for &m in adjacency.get(&n).into_iter().flatten() {
            if seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    seen
}

/// Node merging with per-node weights (the number of original nodes a node
/// stands for).
struct Merger {
    graph: Sdag,
    weight: BTreeMap<NodeId, f64>,
    next_id: NodeId,
}

impl Merger {
    fn new(g: &Sdag) -> Self {
        let next_id = g
            .labels
            .keys()
            .copied()
            .chain([g.input, g.output])
            .max()
            .unwrap_or(0)
            + 1;
        Merger {
            graph: g.clone(),
            weight: g.labels.keys().map(|&n| (n, 1.0)).collect(),
            next_id,
        }
    }

    /// Replaces `members` (all with one label) by a fresh node and returns
    /// its id.
    fn merge(&mut self, members: &[NodeId]) -> NodeId {
        let fresh = self.next_id;
        self.next_id += 1;
        let total: f64 = members.iter().map(|n| self.weight[n]).sum();
        let rename = |n: NodeId| if members.contains(&n) { fresh } else { n };

        let mut arcs: BTreeMap<Arc, f64> = BTreeMap::new();
        for (&(s, t), &p) in &self.graph.arcs {
            let share = if members.contains(&s) {
                p * self.weight[&s] / total
            } else {
                p
            };
            *arcs.entry((rename(s), rename(t))).or_insert(0.0) += share;
        }
        let label = self.graph.labels[&members[0]].clone();
        for n in members {
            self.graph.labels.remove(n);
            self.weight.remove(n);
        }
        self.graph.labels.insert(fresh, label);
        self.weight.insert(fresh, total);
        self.graph.arcs = arcs;
        fresh
    }
}

/// A graph with arc frequencies for a given number of cases.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedSdag {
    pub sdag: Sdag,
    pub arc_freq: BTreeMap<Arc, f64>,
    pub cases: f64,
}

impl AnnotatedSdag {
    pub fn arc_frequency(&self, from: NodeId, to: NodeId) -> Option<f64> {
        self.arc_freq.get(&(from, to)).copied()
    }

    /// Frequency of a node: the sum over its incoming arcs, or the case
    /// count for the input.
    pub fn node_frequency(&self, node: NodeId) -> f64 {
        if node == self.sdag.input {
            return self.cases;
        }
        self.arc_freq
            .iter()
            .filter(|((_, t), _)| *t == node)
            .map(|(_, f)| f)
            .sum()
    }

    /// Largest violation among the arc, conservation and input/output
    /// equations.
    pub fn max_residual(&self) -> f64 {
        let g = &self.sdag;
        let mut inflow: BTreeMap<NodeId, f64> = BTreeMap::new();
        let mut outflow: BTreeMap<NodeId, f64> = BTreeMap::new();
        for (&(s, t), &f) in &self.arc_freq {
            *outflow.entry(s).or_insert(0.0) += f;
            *inflow.entry(t).or_insert(0.0) += f;
        }
        let get = |m: &BTreeMap<NodeId, f64>, n| m.get(&n).copied().unwrap_or(0.0);
        let mut worst = (get(&outflow, g.input) - self.cases).abs();
        worst = worst.max((get(&inflow, g.output) - self.cases).abs());
        for &n in g.labels.keys() {
            worst = worst.max((get(&inflow, n) - get(&outflow, n)).abs());
        }
        for (&(s, t), &q) in &g.arcs {
            let base = if s == g.input { self.cases } else { get(&inflow, s) };
            worst = worst.max((self.arc_freq[&(s, t)] - q * base).abs());
        }
        worst
    }

    pub fn to_json(&self) -> SdagJson {
        let mut json = self.sdag.to_json();
        for arc in &mut json.arcs {
            arc.freq = self.arc_frequency(arc.from, arc.to);
        }
        json.cases = Some(self.cases);
        json
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdagJson {
    pub nodes: Vec<SdagNodeJson>,
    pub input: NodeId,
    pub output: NodeId,
    pub arcs: Vec<SdagArcJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cases: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdagNodeJson {
    pub id: NodeId,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdagArcJson {
    pub from: NodeId,
    pub to: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq: Option<f64>,
}
