//! Genetic search over ALERGIA parameter triples for a Pareto frontier of
//! (model size, entropic relevance).

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::Mutex;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alergia::{run_alergia, AlergiaParams};
use crate::automata::{Pat, Sdfa};
use crate::error::{Error, Result};
use crate::eventlog::EventLog;
use crate::relevance::sdag_relevance;
use crate::sdag::Sdag;

/// Smallest ω ever sampled; the Hoeffding test needs ω > 0.
pub const OMEGA_MIN: f64 = 1e-9;
pub const DEFAULT_OMEGA_MAX: f64 = 15.0;
pub const DEFAULT_MUTATION_DELTA: f64 = 0.1;
const MAX_REDRAWS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub omega_max: f64,
    pub t_max: f64,
}

impl Bounds {
    /// ω up to the default maximum, t up to the most frequent branch of the
    /// log's prefix tree (at least one).
    pub fn for_log(log: &EventLog) -> Result<Bounds> {
        let pat = Pat::build(log)?;
        Ok(Bounds {
            omega_max: DEFAULT_OMEGA_MAX,
            t_max: pat.max_branch_frequency().max(1) as f64,
        })
    }

    pub fn clamp(&self, p: AlergiaParams) -> AlergiaParams {
        AlergiaParams {
            omega: p.omega.clamp(OMEGA_MIN, self.omega_max),
            t: p.t.clamp(0.0, self.t_max),
            f: p.f.clamp(0.0, 1.0),
        }
    }

    pub fn contains(&self, p: &AlergiaParams) -> bool {
        (OMEGA_MIN..=self.omega_max).contains(&p.omega)
            && (0.0..=self.t_max).contains(&p.t)
            && (0.0..=1.0).contains(&p.f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub population_size: usize,
    pub generations: usize,
    pub parents_k: usize,
    pub bounds: Bounds,
    pub seed: u64,
    /// Mutation half-width as a fraction of each parameter's range.
    pub mutation_delta: f64,
    /// Also breed never-good individuals and record lineage statistics.
    pub lineage_experiment: bool,
    /// Worker threads for evaluation; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl SearchConfig {
    pub fn new(log: &EventLog, parents_k: usize, seed: u64) -> Result<SearchConfig> {
        Ok(SearchConfig {
            population_size: 50,
            generations: 50,
            parents_k,
            bounds: Bounds::for_log(log)?,
            seed,
            mutation_delta: DEFAULT_MUTATION_DELTA,
            lineage_experiment: false,
            threads: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::domain("population size must be at least 2"));
        }
        if self.parents_k < 2 {
            return Err(Error::domain("number of parents must be at least 2"));
        }
        if !(self.bounds.omega_max >= OMEGA_MIN) || !self.bounds.omega_max.is_finite() {
            return Err(Error::domain(format!("omega bound {} is invalid", self.bounds.omega_max)));
        }
        if !(self.bounds.t_max >= 0.0) || !self.bounds.t_max.is_finite() {
            return Err(Error::domain(format!("t bound {} is invalid", self.bounds.t_max)));
        }
        if !(self.mutation_delta >= 0.0) || !self.mutation_delta.is_finite() {
            return Err(Error::domain("mutation delta must be non-negative"));
        }
        if self.threads == Some(0) {
            return Err(Error::domain("thread count must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub size: usize,
    pub relevance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub params: AlergiaParams,
    pub eval: Option<Evaluation>,
    pub ever_good: bool,
    /// Generation in which the triple was created.
    pub generation: usize,
}

impl Individual {
    pub fn new(params: AlergiaParams, generation: usize) -> Self {
        Individual {
            params,
            eval: None,
            ever_good: false,
            generation,
        }
    }

    pub fn dominates(&self, other: &Individual) -> bool {
        match (self.eval, other.eval) {
            (Some(a), Some(b)) => dominates(a, b),
            _ => false,
        }
    }
}

pub fn dominates(a: Evaluation, b: Evaluation) -> bool {
    a.size <= b.size && a.relevance <= b.relevance && (a.size < b.size || a.relevance < b.relevance)
}

type Key = [u64; 3];

fn key(p: &AlergiaParams) -> Key {
    [p.omega.to_bits(), p.t.to_bits(), p.f.to_bits()]
}

/// Learns a model for `params` and measures it.
pub fn evaluate_params(log: &EventLog, params: &AlergiaParams) -> Result<(Sdfa, Evaluation)> {
    let sdfa = run_alergia(log, params)?;
    let sdag = Sdag::from_sdfa(&sdfa);
    let report = sdag_relevance(log, &sdag)?;
    Ok((
        sdfa,
        Evaluation {
            size: sdag.model_size(),
            relevance: report.bits_per_trace,
        },
    ))
}

/// Memoized evaluation; failures are remembered as `None`.
pub struct Evaluator<'a> {
    log: &'a EventLog,
    memo: Mutex<HashMap<Key, Option<Evaluation>>>,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Evaluator<'a> {
    pub fn new(log: &'a EventLog, threads: Option<usize>) -> Result<Self> {
        let pool = threads
            .map(|n| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Resource(e.to_string()))
            })
            .transpose()?;
        Ok(Evaluator {
            log,
            memo: Mutex::new(HashMap::new()),
            pool,
        })
    }

    pub fn evaluate(&self, params: &AlergiaParams) -> Option<Evaluation> {
        self.evaluate_all(std::slice::from_ref(params))[0]
    }

    /// Evaluates every triple, computing unseen ones in parallel.
    pub fn evaluate_all(&self, params: &[AlergiaParams]) -> Vec<Option<Evaluation>> {
        let missing: Vec<AlergiaParams> = {
            let memo = self.memo.lock().expect("memo lock");
            let mut seen = HashSet::new();
            params
                .iter()
                .filter(|p| !memo.contains_key(&key(p)) && seen.insert(key(p)))
                .copied()
                .collect()
        };
        let compute = || {
            missing
                .par_iter()
                .map(|p| {
                    let result = match evaluate_params(self.log, p) {
                        Ok((_, e)) => Some(e),
                        Err(err) => {
                            debug!("discarding {p:?}: {err}");
                            None
                        }
                    };
                    self.memo.lock().expect("memo lock").insert(key(p), result);
                })
                .count()
        };
        match &self.pool {
            Some(pool) => pool.install(compute),
            None => compute(),
        };
        let memo = self.memo.lock().expect("memo lock");
        params.iter().map(|p| memo[&key(p)]).collect()
    }

    pub fn memo_len(&self) -> usize {
        self.memo.lock().expect("memo lock").len()
    }
}

fn eval_order(a: &Evaluation, b: &Evaluation) -> Ordering {
    a.size.cmp(&b.size).then(a.relevance.total_cmp(&b.relevance))
}

/// The evaluated individuals not strictly dominated by any other, in input
/// order. Of several individuals with the same (size, relevance) only the
/// first is kept; unevaluated individuals are ignored.
pub fn pareto_frontier(points: &[Individual]) -> Vec<Individual> {
    let mut order: Vec<(usize, Evaluation)> = points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.eval.map(|e| (i, e)))
        .collect();
    order.sort_by(|(i, a), (j, b)| eval_order(a, b).then(i.cmp(j)));

    let mut keep = Vec::new();
    let mut best = f64::INFINITY;
    let mut last: Option<Evaluation> = None;
    for (i, e) in order {
        if last.is_some_and(|l| l.size == e.size) {
            continue;
        }
        last = Some(e);
        if e.relevance < best {
            best = e.relevance;
            keep.push(i);
        }
    }
    keep.sort_unstable();
    keep.into_iter().map(|i| points[i].clone()).collect()
}

/// The eight single- and double-point recombinations of two triples.
pub fn crossover(p1: &AlergiaParams, p2: &AlergiaParams) -> [AlergiaParams; 8] {
    let mk = AlergiaParams::new;
    [
        mk(p1.omega, p2.t, p2.f),
        mk(p2.omega, p1.t, p1.f),
        mk(p1.omega, p1.t, p2.f),
        mk(p2.omega, p2.t, p1.f),
        mk(p1.omega, p1.t, p1.f),
        mk(p2.omega, p2.t, p2.f),
        mk(p1.omega, p2.t, p1.f),
        mk(p2.omega, p1.t, p2.f),
    ]
}

/// Adds a uniform offset of at most `delta` times the parameter's range to
/// each component, then clamps into the bounds.
pub fn mutate<R: Rng + ?Sized>(
    p: &AlergiaParams,
    bounds: &Bounds,
    delta: f64,
    rng: &mut R,
) -> AlergiaParams {
    let mut offset = |range: f64| {
        let w = delta * range;
        if w > 0.0 {
            rng.gen_range(-w..=w)
        } else {
            0.0
        }
    };
    let moved = AlergiaParams {
        omega: p.omega + offset(bounds.omega_max - OMEGA_MIN),
        t: p.t + offset(bounds.t_max),
        f: p.f + offset(1.0),
    };
    bounds.clamp(moved)
}

fn random_params<R: Rng + ?Sized>(bounds: &Bounds, rng: &mut R) -> AlergiaParams {
    AlergiaParams {
        omega: rng.gen_range(OMEGA_MIN..=bounds.omega_max),
        t: rng.gen_range(0.0..=bounds.t_max),
        f: rng.gen_range(0.0..=1.0),
    }
}

/// `population_size` random triples within the bounds. A duplicate is redrawn
/// up to a hundred times before it is kept.
pub fn init_population<R: Rng + ?Sized>(config: &SearchConfig, rng: &mut R) -> Vec<Individual> {
    let mut seen = HashSet::new();
    let mut population = Vec::with_capacity(config.population_size);
    for _ in 0..config.population_size {
        let mut p = random_params(&config.bounds, rng);
        for _ in 0..MAX_REDRAWS {
            if !seen.contains(&key(&p)) {
                break;
            }
            p = random_params(&config.bounds, rng);
        }
        seen.insert(key(&p));
        population.push(Individual::new(p, 0));
    }
    population
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LineageStats {
    pub offspring_of_good: usize,
    pub good_from_good: usize,
    pub offspring_of_bad: usize,
    pub good_from_bad: usize,
}

impl LineageStats {
    pub fn frac_good_from_good(&self) -> f64 {
        fraction(self.good_from_good, self.offspring_of_good)
    }

    pub fn frac_good_from_bad(&self) -> f64 {
        fraction(self.good_from_bad, self.offspring_of_bad)
    }
}

fn fraction(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Frontier of the population after this generation.
    pub frontier: Vec<Individual>,
    /// Individuals evaluated in this generation (failures excluded).
    pub evaluated: Vec<Individual>,
    pub new_good: usize,
    pub lineage: Option<LineageStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchState {
    pub generation: usize,
    /// Every individual that was ever on a frontier; also the population.
    pub archive: Vec<Individual>,
    /// Evaluated individuals that never reached a frontier.
    pub never_good: Vec<Individual>,
}

impl SearchState {
    pub fn frontier(&self) -> Vec<Individual> {
        pareto_frontier(&self.archive)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub frontier: Vec<Individual>,
    pub history: Vec<GenerationRecord>,
}

fn evaluated(evaluator: &Evaluator, individuals: Vec<Individual>) -> Vec<Individual> {
    let params: Vec<AlergiaParams> = individuals.iter().map(|i| i.params).collect();
    let evals = evaluator.evaluate_all(&params);
    individuals
        .into_iter()
        .zip(evals)
        .filter_map(|(mut ind, e)| {
            ind.eval = Some(e?);
            Some(ind)
        })
        .collect()
}

/// Evaluates the initial population and sets up the archive with its
/// frontier.
pub fn init_state(
    population: Vec<Individual>,
    evaluator: &Evaluator,
) -> (SearchState, GenerationRecord) {
    let mut population = evaluated(evaluator, population);
    let front: HashSet<Key> = pareto_frontier(&population)
        .iter()
        .map(|i| key(&i.params))
        .collect();
    for ind in &mut population {
        ind.ever_good = front.contains(&key(&ind.params));
    }
    let (archive, never_good): (Vec<_>, Vec<_>) =
        population.iter().cloned().partition(|i| i.ever_good);
    let state = SearchState {
        generation: 0,
        archive,
        never_good,
    };
    let record = GenerationRecord {
        generation: 0,
        frontier: state.frontier(),
        new_good: state.archive.len(),
        evaluated: population,
        lineage: None,
    };
    (state, record)
}

/// Offspring of every unordered pair of parents, each followed by its
/// mutated twin. A single parent is paired with itself.
fn breed<R: Rng + ?Sized>(
    parents: &[&Individual],
    config: &SearchConfig,
    generation: usize,
    rng: &mut R,
) -> Vec<Individual> {
    let mut pairs = Vec::new();
    for i in 0..parents.len() {
        for j in i + 1..parents.len() {
            pairs.push((parents[i], parents[j]));
        }
    }
    if parents.len() == 1 {
        pairs.push((parents[0], parents[0]));
    }
    let mut offspring = Vec::new();
    for (a, b) in pairs {
        for child in crossover(&a.params, &b.params) {
            let twin = mutate(&child, &config.bounds, config.mutation_delta, rng);
            offspring.push(Individual::new(child, generation));
            offspring.push(Individual::new(twin, generation));
        }
    }
    offspring
}

fn dedupe(individuals: Vec<Individual>, seen: &mut HashSet<Key>) -> Vec<Individual> {
    individuals
        .into_iter()
        .filter(|i| seen.insert(key(&i.params)))
        .collect()
}

/// One generation: breed from the current frontier, evaluate the offspring
/// and add those that reach the frontier of archive plus offspring to the
/// archive.
pub fn step_generation<R: Rng + ?Sized>(
    state: &mut SearchState,
    config: &SearchConfig,
    evaluator: &Evaluator,
    rng: &mut R,
) -> GenerationRecord {
    let generation = state.generation + 1;
    let front = state.frontier();
    let parents: Vec<&Individual> = front
        .choose_multiple(rng, config.parents_k.min(front.len()))
        .collect();
    let from_good = breed(&parents, config, generation, rng);

    let from_bad = if config.lineage_experiment && !state.never_good.is_empty() {
        let bad: Vec<&Individual> = state
            .never_good
            .choose_multiple(rng, config.parents_k.min(state.never_good.len()))
            .collect();
        breed(&bad, config, generation, rng)
    } else {
        Vec::new()
    };

    let mut seen: HashSet<Key> = state.archive.iter().map(|i| key(&i.params)).collect();
    let from_good = evaluated(evaluator, dedupe(from_good, &mut seen));
    let from_bad = evaluated(evaluator, dedupe(from_bad, &mut seen));
    let n_good_offspring = from_good.len();

    let mut pool = state.archive.clone();
    pool.extend(from_good);
    pool.extend(from_bad);
    let winners: HashSet<Key> = pareto_frontier(&pool)
        .iter()
        .map(|i| key(&i.params))
        .collect();

    let mut lineage = LineageStats::default();
    let mut evaluated_now = Vec::new();
    let archived = state.archive.len();
    for (idx, mut ind) in pool.into_iter().enumerate().skip(archived) {
        let good = winners.contains(&key(&ind.params));
        ind.ever_good = good;
        if idx - archived < n_good_offspring {
            lineage.offspring_of_good += 1;
            lineage.good_from_good += good as usize;
        } else {
            lineage.offspring_of_bad += 1;
            lineage.good_from_bad += good as usize;
        }
        evaluated_now.push(ind.clone());
        if good {
            state.archive.push(ind);
        } else {
            state.never_good.push(ind);
        }
    }
    state.generation = generation;
    let new_good = state.archive.len() - archived;
    debug!("generation {generation}: {} offspring, {new_good} new good", evaluated_now.len());
    GenerationRecord {
        generation,
        frontier: state.frontier(),
        evaluated: evaluated_now,
        new_good,
        lineage: config.lineage_experiment.then_some(lineage),
    }
}

/// Random initial population followed by `generations` steps; fully
/// determined by the log and the configuration.
pub fn run_search(log: &EventLog, config: &SearchConfig) -> Result<SearchResult> {
    config.validate()?;
    if log.is_empty() {
        return Err(Error::domain("cannot search on an empty log"));
    }
    let evaluator = Evaluator::new(log, config.threads)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let population = init_population(config, &mut rng);
    let (mut state, record) = init_state(population, &evaluator);
    let mut history = vec![record];
    for _ in 0..config.generations {
        history.push(step_generation(&mut state, config, &evaluator, &mut rng));
    }
    info!(
        "search finished: {} evaluations, {} ever-good",
        evaluator.memo_len(),
        state.archive.len()
    );
    Ok(SearchResult {
        frontier: state.frontier(),
        history,
    })
}

pub const INDIVIDUAL_CSV_HEADER: &str = "generation,omega,t,f,size,relevance,ever_good";

fn push_row(out: &mut String, generation: usize, ind: &Individual) {
    let e = ind.eval.expect("only evaluated individuals are written");
    let p = &ind.params;
    writeln!(
        out,
        "{generation},{:.6},{:.6},{:.6},{},{:.6},{}",
        p.omega, p.t, p.f, e.size, e.relevance, ind.ever_good
    )
    .expect("writing to a string");
}

/// Final frontier, one row per individual with its creation generation.
pub fn frontier_csv(frontier: &[Individual]) -> String {
    let mut out = format!("{INDIVIDUAL_CSV_HEADER}\n");
    for ind in frontier {
        push_row(&mut out, ind.generation, ind);
    }
    out
}

/// Every individual evaluated during the run, by generation.
pub fn history_csv(history: &[GenerationRecord]) -> String {
    let mut out = format!("{INDIVIDUAL_CSV_HEADER}\n");
    for record in history {
        for ind in &record.evaluated {
            push_row(&mut out, record.generation, ind);
        }
    }
    out
}

pub fn lineage_csv(history: &[GenerationRecord]) -> String {
    let mut out = String::from("generation,frac_good_from_good,frac_good_from_bad\n");
    for record in history {
        if let Some(l) = record.lineage {
            writeln!(
                out,
                "{},{:.6},{:.6}",
                record.generation,
                l.frac_good_from_good(),
                l.frac_good_from_bad()
            )
            .expect("writing to a string");
        }
    }
    out
}
