//! Red-blue state merging over the prefix tree with Hoeffding-bound
//! compatibility tests.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::automata::{Pat, PatEdge, PatNodeId, Sdfa};
use crate::error::{Error, Result};
use crate::eventlog::EventLog;

/// Learning parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlergiaParams {
    /// Multiplier on the Hoeffding bound. Larger values merge more.
    pub omega: f64,
    /// Minimum arrival count for a frontier node to be merged or promoted.
    pub t: f64,
    /// Share of trace instances kept by the frequency filter.
    pub f: f64,
}

impl AlergiaParams {
    pub fn new(omega: f64, t: f64, f: f64) -> Self {
        AlergiaParams { omega, t, f }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::domain(format!("omega must be positive, got {}", self.omega)));
        }
        if !(self.t >= 0.0) || !self.t.is_finite() {
            return Err(Error::domain(format!("t must be non-negative, got {}", self.t)));
        }
        if !(0.0..=1.0).contains(&self.f) {
            return Err(Error::domain(format!("f must lie in [0, 1], got {}", self.f)));
        }
        Ok(())
    }
}

/// `|g1/n1 - g2/n2| < omega * (sqrt(1/n1) + sqrt(1/n2))`.
pub fn hoeffding_compatible(g1: u64, n1: u64, g2: u64, n2: u64, omega: f64) -> Result<bool> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::domain("Hoeffding test on a node with zero arrivals"));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let diff = (g1 as f64 / n1f - g2 as f64 / n2f).abs();
    let bound = omega * ((1.0 / n1f).sqrt() + (1.0 / n2f).sqrt());
    Ok(diff < bound)
}

/// Tests whether `blue` may be merged into `red`: termination counts and
/// every outgoing edge (absent edges count as zero) must pass the Hoeffding
/// test, recursively for children reached by a shared action. Recursion
/// follows the blue node's subtree, which is a finite tree.
pub fn compatible(pat: &Pat, red: PatNodeId, blue: PatNodeId, omega: f64) -> Result<bool> {
    let r = pat.node(red);
    let b = pat.node(blue);
    if !hoeffding_compatible(r.terminations, r.arrivals, b.terminations, b.arrivals, omega)? {
        return Ok(false);
    }
    let actions: BTreeSet<&String> = r.children.keys().chain(b.children.keys()).collect();
    let freq = |edge: Option<&PatEdge>| edge.map_or(0, |e| e.freq);
    for action in &actions {
        let (er, eb) = (r.children.get(*action), b.children.get(*action));
        if !hoeffding_compatible(freq(er), r.arrivals, freq(eb), b.arrivals, omega)? {
            return Ok(false);
        }
    }
    for action in actions {
        if let (Some(er), Some(eb)) = (r.children.get(action), b.children.get(action)) {
            if !compatible(pat, er.target, eb.target, omega)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Merges the tree node `blue` into `red`: the edge into `blue` is redirected
/// to `red`, then `blue`'s counts and subtree are folded onto `red`.
///
/// `blue` must be an unmerged tree node whose parent link is intact.
pub fn merge_fold(pat: &mut Pat, red: PatNodeId, blue: PatNodeId) {
    let (parent, action) = pat.nodes[blue]
        .parent
        .clone()
        .expect("merge_fold: blue node has no parent");
    let edge = pat.nodes[parent]
        .children
        .get_mut(&action)
        .expect("merge_fold: parent edge missing");
    debug_assert_eq!(edge.target, blue);
    edge.target = red;
    fold(pat, red, blue);
}

fn fold(pat: &mut Pat, red: PatNodeId, blue: PatNodeId) {
    let absorbed = &mut pat.nodes[blue];
    absorbed.alive = false;
    let arrivals = absorbed.arrivals;
    let terminations = absorbed.terminations;
    let children = std::mem::take(&mut absorbed.children);

    let target = &mut pat.nodes[red];
    target.arrivals += arrivals;
    target.terminations += terminations;
    for (action, edge) in children {
        match pat.nodes[red].children.get_mut(&action) {
            Some(existing) => {
                existing.freq += edge.freq;
                let next = existing.target;
                fold(pat, next, edge.target);
            }
            None => {
                pat.nodes[edge.target].parent = Some((red, action.clone()));
                pat.nodes[red].children.insert(action, edge);
            }
        }
    }
}

/// Working state of the red-blue loop.
#[derive(Clone, Debug)]
pub struct MergeState {
    pub pat: Pat,
    pub red: Vec<PatNodeId>,
}

impl MergeState {
    pub fn new(pat: Pat) -> Self {
        let root = pat.root();
        MergeState {
            pat,
            red: vec![root],
        }
    }

    fn is_red(&self, id: PatNodeId) -> bool {
        self.red.contains(&id)
    }

    /// Children of red nodes that are not red themselves, in first-seen
    /// order.
    pub fn blue(&self) -> Vec<PatNodeId> {
        let mut blue = Vec::new();
        for &r in &self.red {
            for edge in self.pat.node(r).children.values() {
                if !self.is_red(edge.target) && !blue.contains(&edge.target) {
                    blue.push(edge.target);
                }
            }
        }
        blue
    }

    /// The blue node with the most arrivals among those with at least `t`;
    /// ties go to the lexicographically smallest access prefix.
    fn select_blue(&self, t: f64) -> Option<PatNodeId> {
        self.blue()
            .into_iter()
            .filter(|&b| self.pat.node(b).arrivals as f64 >= t)
            .min_by(|&x, &y| {
                let (nx, ny) = (self.pat.node(x).arrivals, self.pat.node(y).arrivals);
                ny.cmp(&nx)
                    .then_with(|| self.pat.access_prefix(x).cmp(&self.pat.access_prefix(y)))
            })
    }

    /// Runs one iteration of the loop. Returns false when no blue node
    /// reaches the frequency threshold.
    pub fn step(&mut self, params: &AlergiaParams) -> Result<bool> {
        let Some(blue) = self.select_blue(params.t) else {
            return Ok(false);
        };
        for i in 0..self.red.len() {
            let red = self.red[i];
            if compatible(&self.pat, red, blue, params.omega)? {
                log::trace!("merge {:?} into {:?}", self.pat.access_prefix(blue), self.pat.access_prefix(red));
                merge_fold(&mut self.pat, red, blue);
                return Ok(true);
            }
        }
        self.red.push(blue);
        Ok(true)
    }
}

/// Learns an SDFA from `log`: frequency filter, prefix tree, red-blue merging,
/// then conversion of counts to probabilities. Frontier nodes below the
/// threshold `t` are kept as unmerged tree fragments.
pub fn run_alergia(log: &EventLog, params: &AlergiaParams) -> Result<Sdfa> {
    params.validate()?;
    let filtered = log.filter_by_frequency(params.f);
    if filtered.is_empty() {
        return Err(Error::domain("event log is empty after filtering"));
    }
    let mut state = MergeState::new(Pat::build(&filtered)?);
    while state.step(params)? {}
    Ok(state.pat.to_sdfa())
}
