//! Event logs as multisets of action traces.
//!
//! Two input formats are understood: a plain text format with one variant per
//! line (`<multiplicity>;<action>,<action>,...`) and the trace/event subset of
//! XES, where the action of an event is its `concept:name` string attribute.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Characters that cannot appear inside an action name in the plain format.
pub const RESERVED_CHARS: [char; 4] = [';', ',', '\n', '\r'];

/// A finite sequence of actions. The empty trace is legal.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trace(Vec<String>);

impl Trace {
    pub fn new<I, S>(actions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Trace(actions.into_iter().map(Into::into).collect())
    }

    pub fn empty() -> Self {
        Trace(Vec::new())
    }

    pub fn actions(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl<S: Into<String>> FromIterator<S> for Trace {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Trace::new(iter)
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.0.join(","))
    }
}

/// A multiset of traces. Variants are kept in lexicographic order so every
/// iteration over a log is deterministic.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLog {
    variants: BTreeMap<Trace, u64>,
    total: u64,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `multiplicity` instances of `trace`. Zero is ignored.
    pub fn add(&mut self, trace: Trace, multiplicity: u64) {
        if multiplicity == 0 {
            return;
        }
        *self.variants.entry(trace).or_insert(0) += multiplicity;
        self.total += multiplicity;
    }

    pub fn from_variants<I>(variants: I) -> Self
    where
        I: IntoIterator<Item = (Trace, u64)>,
    {
        let mut log = EventLog::new();
        for (trace, count) in variants {
            log.add(trace, count);
        }
        log
    }

    /// Number of trace instances, |L|.
    pub fn total_traces(&self) -> u64 {
        self.total
    }

    pub fn num_variants(&self) -> usize {
        self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn multiplicity(&self, trace: &Trace) -> u64 {
        self.variants.get(trace).copied().unwrap_or(0)
    }

    pub fn variants(&self) -> impl Iterator<Item = (&Trace, u64)> {
        self.variants.iter().map(|(t, &m)| (t, m))
    }

    pub fn alphabet(&self) -> BTreeSet<String> {
        self.variants
            .keys()
            .flat_map(|t| t.actions().iter().cloned())
            .collect()
    }

    /// Writes the log in the plain line format accepted by [`parse_log`].
    pub fn to_plain_string(&self) -> String {
        let mut out = String::new();
        for (trace, count) in &self.variants {
            out.push_str(&count.to_string());
            out.push(';');
            out.push_str(&trace.actions().join(","));
            out.push('\n');
        }
        out
    }

    /// Empirical distribution p(t) = mult(t) / |L|.
    pub fn empirical_distribution(&self) -> Result<EmpiricalDistribution> {
        if self.is_empty() {
            return Err(Error::domain("empirical distribution of an empty log"));
        }
        Ok(EmpiricalDistribution {
            counts: self.variants.clone(),
            total: self.total,
        })
    }

    /// Keeps the most frequent variants until their share of trace instances
    /// reaches `threshold`. Variants are ranked by multiplicity (descending),
    /// ties by action sequence. A threshold of zero or less returns the log
    /// unchanged.
    pub fn filter_by_frequency(&self, threshold: f64) -> EventLog {
        if threshold <= 0.0 || self.is_empty() {
            return self.clone();
        }
        let mut ranked: Vec<(&Trace, u64)> = self.variants().collect();
        ranked.sort_by(|(ta, ma), (tb, mb)| mb.cmp(ma).then_with(|| ta.cmp(tb)));

        let total = self.total as f64;
        let mut kept = EventLog::new();
        let mut covered = 0u64;
        for (trace, count) in ranked {
            kept.add(trace.clone(), count);
            covered += count;
            if covered as f64 / total >= threshold {
                break;
            }
        }
        kept
    }
}

/// Finite-support distribution of a log, kept as exact counts.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    counts: BTreeMap<Trace, u64>,
    total: u64,
}

impl EmpiricalDistribution {
    pub fn probability(&self, trace: &Trace) -> f64 {
        self.counts.get(trace).copied().unwrap_or(0) as f64 / self.total as f64
    }

    /// The probability of `trace` as the unreduced fraction (mult, |L|).
    pub fn ratio(&self, trace: &Trace) -> (u64, u64) {
        (self.counts.get(trace).copied().unwrap_or(0), self.total)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Trace, f64)> {
        let total = self.total as f64;
        self.counts.iter().map(move |(t, &m)| (t, m as f64 / total))
    }
}

/// Parses the plain log format.
///
/// Each non-empty line is `<multiplicity>;<a1>,<a2>,...`; the empty trace is
/// `<multiplicity>;`. Lines starting with `#` are comments. Repeated variants
/// accumulate.
pub fn parse_log(text: &str) -> Result<EventLog> {
    let mut log = EventLog::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let (count, body) = line
            .split_once(';')
            .ok_or_else(|| err("missing ';' separator".into()))?;
        let count: u64 = count
            .trim()
            .parse()
            .map_err(|_| err(format!("multiplicity {:?} is not a positive integer", count)))?;
        if count == 0 {
            return Err(err("multiplicity must be positive".into()));
        }
        let trace = if body.is_empty() {
            Trace::empty()
        } else {
            let actions: Vec<&str> = body.split(',').collect();
            if let Some(bad) = actions
                .iter()
                .find(|a| a.is_empty() || a.contains(RESERVED_CHARS))
            {
                return Err(err(format!("invalid action name {:?}", bad)));
            }
            Trace::new(actions)
        };
        log.add(trace, count);
    }
    Ok(log)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum XesElement {
    Log,
    Trace,
    Event,
    Other,
}

/// Parses the trace/event subset of XES. Attributes other than an event's
/// `concept:name` are ignored.
pub fn parse_xes(text: &str) -> Result<EventLog> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);

    let mut log = EventLog::new();
    let mut stack: Vec<XesElement> = Vec::new();
    let mut current_trace: Vec<String> = Vec::new();
    let mut current_event: Option<String> = None;
    let mut saw_log = false;

    loop {
        let event = reader
            .read_event()
            .map_err(|e| Error::Xes(format!("at byte {}: {e}", reader.buffer_position())))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                let parent = stack.last().copied();
                let kind = match e.local_name().as_ref() {
                    b"log" if parent.is_none() => {
                        saw_log = true;
                        XesElement::Log
                    }
                    b"trace" => {
                        if parent != Some(XesElement::Log) {
                            return Err(Error::Xes("<trace> outside <log>".into()));
                        }
                        current_trace.clear();
                        XesElement::Trace
                    }
                    b"event" => {
                        if parent != Some(XesElement::Trace) {
                            return Err(Error::Xes("<event> outside <trace>".into()));
                        }
                        current_event = None;
                        XesElement::Event
                    }
                    b"string" if parent == Some(XesElement::Event) => {
                        if let Some(name) = concept_name(e)? {
                            current_event = Some(name);
                        }
                        XesElement::Other
                    }
                    _ => XesElement::Other,
                };
                if is_empty {
                    close_element(kind, &mut log, &mut current_trace, &mut current_event)?;
                } else {
                    stack.push(kind);
                }
            }
            Event::End(_) => {
                let kind = stack
                    .pop()
                    .ok_or_else(|| Error::Xes("unbalanced closing tag".into()))?;
                close_element(kind, &mut log, &mut current_trace, &mut current_event)?;
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(Error::Xes("unexpected end of document".into()));
    }
    if !saw_log {
        return Err(Error::Xes("missing <log> root element".into()));
    }
    Ok(log)
}

fn concept_name(e: &BytesStart<'_>) -> Result<Option<String>> {
    let mut key = None;
    let mut value = None;
    for attr in e.attributes() {
        let attr = attr.map_err(|err| Error::Xes(err.to_string()))?;
        let text = attr
            .unescape_value()
            .map_err(|err| Error::Xes(err.to_string()))?
            .into_owned();
        match attr.key.as_ref() {
            b"key" => key = Some(text),
            b"value" => value = Some(text),
            _ => {}
        }
    }
    match (key.as_deref(), value) {
        (Some("concept:name"), Some(v)) => Ok(Some(v)),
        (Some("concept:name"), None) => Err(Error::Xes("concept:name without value".into())),
        _ => Ok(None),
    }
}

fn close_element(
    kind: XesElement,
    log: &mut EventLog,
    current_trace: &mut Vec<String>,
    current_event: &mut Option<String>,
) -> Result<()> {
    match kind {
        XesElement::Event => {
            let name = current_event
                .take()
                .ok_or_else(|| Error::Xes("event without concept:name".into()))?;
            current_trace.push(name);
        }
        XesElement::Trace => {
            log.add(Trace::new(std::mem::take(current_trace)), 1);
        }
        _ => {}
    }
    Ok(())
}
