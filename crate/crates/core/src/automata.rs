//! Stochastic deterministic finite automata and the frequency prefix tree.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{EventLog, Trace};

/// Slack allowed on probability sums.
pub const PROB_TOLERANCE: f64 = 1e-9;

pub type StateId = usize;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub target: StateId,
    pub prob: f64,
}

/// Anything that assigns a probability to every trace.
pub trait StochasticLanguage {
    fn trace_probability(&self, trace: &[String]) -> f64;
}

/// A stochastic deterministic finite automaton.
///
/// States are `0..num_states()`. The termination probability of a state is
/// the deficit `1 - sum of outgoing probabilities`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sdfa {
    states: Vec<BTreeMap<String, Transition>>,
    initial: StateId,
}

impl Sdfa {
    pub fn new(num_states: usize, initial: StateId) -> Result<Self> {
        if initial >= num_states {
            return Err(Error::model(format!(
                "initial state {initial} out of range for {num_states} states"
            )));
        }
        Ok(Sdfa {
            states: vec![BTreeMap::new(); num_states],
            initial,
        })
    }

    /// Adds `from --action--> to` with probability `prob`. Rejects a second
    /// transition for the same (state, action) and any overflow of the
    /// outgoing probability mass.
    pub fn add_transition(
        &mut self,
        from: StateId,
        action: impl Into<String>,
        to: StateId,
        prob: f64,
    ) -> Result<()> {
        let n = self.states.len();
        if from >= n || to >= n {
            return Err(Error::model(format!("transition {from}->{to} references unknown state")));
        }
        if !(0.0..=1.0 + PROB_TOLERANCE).contains(&prob) || prob.is_nan() {
            return Err(Error::model(format!("probability {prob} outside [0, 1]")));
        }
        let action = action.into();
        if self.states[from].contains_key(&action) {
            return Err(Error::model(format!(
                "state {from} already has a transition on {action:?}"
            )));
        }
        self.states[from].insert(action, Transition { target: to, prob });
        let mass = self.outgoing_mass(from);
        if mass > 1.0 + PROB_TOLERANCE {
            return Err(Error::model(format!(
                "outgoing probability of state {from} sums to {mass}"
            )));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn num_transitions(&self) -> usize {
        self.states.iter().map(BTreeMap::len).sum()
    }

    pub fn transitions(&self, state: StateId) -> &BTreeMap<String, Transition> {
        &self.states[state]
    }

    /// All transitions as `(from, action, to, prob)`, ordered by source state
    /// then action.
    pub fn all_transitions(&self) -> impl Iterator<Item = (StateId, &str, StateId, f64)> {
        self.states.iter().enumerate().flat_map(|(s, out)| {
            out.iter()
                .map(move |(a, tr)| (s, a.as_str(), tr.target, tr.prob))
        })
    }

    pub fn alphabet(&self) -> BTreeSet<String> {
        self.states
            .iter()
            .flat_map(|out| out.keys().cloned())
            .collect()
    }

    fn outgoing_mass(&self, state: StateId) -> f64 {
        self.states[state].values().map(|t| t.prob).sum()
    }

    /// `1 - sum of outgoing probabilities`, clamped into [0, 1].
    pub fn termination_probability(&self, state: StateId) -> Result<f64> {
        if state >= self.states.len() {
            return Err(Error::domain(format!("unknown state {state}")));
        }
        Ok((1.0 - self.outgoing_mass(state)).clamp(0.0, 1.0))
    }

    fn termination(&self, state: StateId) -> f64 {
        (1.0 - self.outgoing_mass(state)).clamp(0.0, 1.0)
    }

    /// Probability mass of all traces of length at most `max_len`.
    ///
    /// Propagates a mass vector over states one step at a time, so the cost
    /// is linear in `max_len` rather than in the number of traces.
    pub fn language_mass(&self, max_len: usize) -> f64 {
        let mut mass = vec![0.0; self.states.len()];
        mass[self.initial] = 1.0;
        let mut total = 0.0;
        for step in 0..=max_len {
            total += mass
                .iter()
                .enumerate()
                .map(|(s, m)| m * self.termination(s))
                .sum::<f64>();
            if step == max_len {
                break;
            }
            let mut next = vec![0.0; self.states.len()];
            for (s, out) in self.states.iter().enumerate() {
                if mass[s] == 0.0 {
                    continue;
                }
                for tr in out.values() {
                    next[tr.target] += mass[s] * tr.prob;
                }
            }
            mass = next;
        }
        total
    }

    /// Checks the structural invariants: probabilities in range, per-state
    /// mass at most one, every state reachable from the initial state.
    pub fn validate(&self) -> Result<()> {
        for (s, out) in self.states.iter().enumerate() {
            if out.values().any(|t| !(t.prob >= 0.0) || t.target >= self.states.len()) {
                return Err(Error::model(format!("state {s} has an invalid transition")));
            }
            let mass = self.outgoing_mass(s);
            if mass > 1.0 + PROB_TOLERANCE {
                return Err(Error::model(format!(
                    "outgoing probability of state {s} sums to {mass}"
                )));
            }
        }
        let reachable = self.reachable();
        if let Some(s) = reachable.iter().position(|r| !r) {
            return Err(Error::model(format!("state {s} is unreachable")));
        }
        Ok(())
    }

    fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.states.len()];
        seen[self.initial] = true;
        let mut queue = VecDeque::from([self.initial]);
        while let Some(s) = queue.pop_front() {
            for tr in self.states[s].values() {
                if !seen[tr.target] {
                    seen[tr.target] = true;
                    queue.push_back(tr.target);
                }
            }
        }
        seen
    }

    /// Drops unreachable states and renumbers the rest in breadth-first order
    /// from the initial state, visiting transitions in action order. The
    /// initial state becomes state 0.
    pub fn canonicalize(&self) -> Sdfa {
        let mut order = Vec::new();
        let mut index = vec![usize::MAX; self.states.len()];
        index[self.initial] = 0;
        order.push(self.initial);
        let mut head = 0;
        while head < order.len() {
            let s = order[head];
            head += 1;
            for tr in self.states[s].values() {
                if index[tr.target] == usize::MAX {
                    index[tr.target] = order.len();
                    order.push(tr.target);
                }
            }
        }
        let states = order
            .iter()
            .map(|&s| {
                self.states[s]
                    .iter()
                    .map(|(a, tr)| {
                        (
                            a.clone(),
                            Transition {
                                target: index[tr.target],
                                prob: tr.prob,
                            },
                        )
                    })
                    .collect()
            })
            .collect();
        Sdfa { states, initial: 0 }
    }

    /// Draws a trace from the language. Returns `None` when the walk exceeds
    /// `max_len` actions.
    pub fn sample_trace<R: Rng + ?Sized>(&self, rng: &mut R, max_len: usize) -> Option<Trace> {
        let mut state = self.initial;
        let mut actions = Vec::new();
        loop {
            let mut draw: f64 = rng.gen();
            let mut chosen = None;
            for (a, tr) in &self.states[state] {
                if draw < tr.prob {
                    chosen = Some((a, tr.target));
                    break;
                }
                draw -= tr.prob;
            }
            match chosen {
                None => return Some(Trace::new(actions)),
                Some((a, next)) => {
                    if actions.len() == max_len {
                        return None;
                    }
                    actions.push(a.clone());
                    state = next;
                }
            }
        }
    }

    pub fn to_json(&self) -> SdfaJson {
        SdfaJson {
            states: (0..self.states.len()).collect(),
            initial: self.initial,
            alphabet: self.alphabet().into_iter().collect(),
            transitions: self
                .all_transitions()
                .map(|(from, action, to, prob)| SdfaTransitionJson {
                    from,
                    action: action.to_string(),
                    to,
                    prob,
                })
                .collect(),
        }
    }

    /// Builds an automaton from its JSON form. State ids may be arbitrary
    /// integers; they are mapped onto `0..n` in listed order.
    pub fn from_json(json: &SdfaJson) -> Result<Sdfa> {
        let mut index = BTreeMap::new();
        for (i, &id) in json.states.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(Error::model(format!("duplicate state id {id}")));
            }
        }
        let lookup = |id: usize| {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| Error::model(format!("unknown state id {id}")))
        };
        let mut sdfa = Sdfa::new(json.states.len(), lookup(json.initial)?)?;
        for t in &json.transitions {
            sdfa.add_transition(lookup(t.from)?, t.action.clone(), lookup(t.to)?, t.prob)?;
        }
        Ok(sdfa)
    }
}

impl StochasticLanguage for Sdfa {
    fn trace_probability(&self, trace: &[String]) -> f64 {
        let mut state = self.initial;
        let mut prob = 1.0;
        for action in trace {
            match self.states[state].get(action.as_str()) {
                Some(tr) => {
                    prob *= tr.prob;
                    state = tr.target;
                }
                None => return 0.0,
            }
        }
        prob * self.termination(state)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdfaJson {
    pub states: Vec<usize>,
    pub initial: usize,
    #[serde(default)]
    pub alphabet: Vec<String>,
    pub transitions: Vec<SdfaTransitionJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdfaTransitionJson {
    pub from: usize,
    pub action: String,
    pub to: usize,
    pub prob: f64,
}

pub type PatNodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatEdge {
    pub target: PatNodeId,
    pub freq: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatNode {
    /// n(q): number of traces arriving at the node.
    pub arrivals: u64,
    /// c(q): number of traces ending at the node.
    pub terminations: u64,
    pub children: BTreeMap<String, PatEdge>,
    pub(crate) parent: Option<(PatNodeId, String)>,
    pub(crate) alive: bool,
}

/// Prefix acceptor tree with arrival and termination counts.
///
/// Nodes live in an arena. State merging redirects edges and marks absorbed
/// nodes dead, so after merging the structure is a graph rooted at
/// [`Pat::root`] rather than a tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pat {
    pub(crate) nodes: Vec<PatNode>,
}

impl Pat {
    pub fn build(log: &EventLog) -> Result<Pat> {
        if log.is_empty() {
            return Err(Error::domain("cannot build a prefix tree from an empty log"));
        }
        let mut pat = Pat {
            nodes: vec![PatNode {
                arrivals: 0,
                terminations: 0,
                children: BTreeMap::new(),
                parent: None,
                alive: true,
            }],
        };
        for (trace, count) in log.variants() {
            let mut node = 0;
            pat.nodes[node].arrivals += count;
            for action in trace.actions() {
                node = match pat.nodes[node].children.get_mut(action) {
                    Some(edge) => {
                        edge.freq += count;
                        edge.target
                    }
                    None => {
                        let child = pat.nodes.len();
                        pat.nodes[node].children.insert(
                            action.clone(),
                            PatEdge {
                                target: child,
                                freq: count,
                            },
                        );
                        pat.nodes.push(PatNode {
                            arrivals: 0,
                            terminations: 0,
                            children: BTreeMap::new(),
                            parent: Some((node, action.clone())),
                            alive: true,
                        });
                        child
                    }
                };
                pat.nodes[node].arrivals += count;
            }
            pat.nodes[node].terminations += count;
        }
        Ok(pat)
    }

    pub fn root(&self) -> PatNodeId {
        0
    }

    pub fn node(&self, id: PatNodeId) -> &PatNode {
        &self.nodes[id]
    }

    pub fn is_alive(&self, id: PatNodeId) -> bool {
        self.nodes.get(id).is_some_and(|n| n.alive)
    }

    pub fn live_nodes(&self) -> impl Iterator<Item = (PatNodeId, &PatNode)> {
        self.nodes.iter().enumerate().filter(|(_, n)| n.alive)
    }

    /// Follows `path` from the root.
    pub fn find(&self, path: &[&str]) -> Option<PatNodeId> {
        let mut node = self.root();
        for action in path {
            node = self.nodes[node].children.get(*action)?.target;
        }
        Some(node)
    }

    /// The access string of a node, read off the parent links.
    pub fn access_prefix(&self, id: PatNodeId) -> Vec<&str> {
        let mut path = Vec::new();
        let mut node = id;
        while let Some((parent, action)) = &self.nodes[node].parent {
            path.push(action.as_str());
            node = *parent;
        }
        path.reverse();
        path
    }

    /// True when `n(q) = c(q) + sum of outgoing edge frequencies` holds at
    /// every live node.
    pub fn counts_consistent(&self) -> bool {
        self.live_nodes().all(|(_, n)| {
            n.arrivals == n.terminations + n.children.values().map(|e| e.freq).sum::<u64>()
        })
    }

    pub fn total_terminations(&self) -> u64 {
        self.live_nodes().map(|(_, n)| n.terminations).sum()
    }

    /// Largest edge frequency in the tree.
    pub fn max_branch_frequency(&self) -> u64 {
        self.live_nodes()
            .flat_map(|(_, n)| n.children.values().map(|e| e.freq))
            .max()
            .unwrap_or(0)
    }

    /// Turns counts into probabilities: `p(q, a) = freq(q, a) / n(q)`. Only
    /// nodes reachable from the root become states, numbered breadth-first.
    pub fn to_sdfa(&self) -> Sdfa {
        let mut index: BTreeMap<PatNodeId, StateId> = BTreeMap::new();
        let mut order = vec![self.root()];
        index.insert(self.root(), 0);
        let mut head = 0;
        while head < order.len() {
            let node = order[head];
            head += 1;
            for edge in self.nodes[node].children.values() {
                if let std::collections::btree_map::Entry::Vacant(e) = index.entry(edge.target) {
                    e.insert(order.len());
                    order.push(edge.target);
                }
            }
        }
        let states = order
            .iter()
            .map(|&node| {
                let n = &self.nodes[node];
                n.children
                    .iter()
                    .map(|(a, e)| {
                        (
                            a.clone(),
                            Transition {
                                target: index[&e.target],
                                prob: e.freq as f64 / n.arrivals as f64,
                            },
                        )
                    })
                    .collect()
            })
            .collect();
        Sdfa { states, initial: 0 }
    }
}
