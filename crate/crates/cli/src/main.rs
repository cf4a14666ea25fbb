use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::{json, Value};

use sgmine::automata::SdfaJson;
use sgmine::dot::{sdag_to_dot, sdfa_to_dot};
use sgmine::gaspd::{
    evaluate_params, frontier_csv, history_csv, lineage_csv, run_search, Bounds, SearchConfig,
    DEFAULT_MUTATION_DELTA, OMEGA_MIN,
};
use sgmine::relevance::sdag_relevance;
use sgmine::sdag::SdagJson;
use sgmine::{entropic_relevance, parse_log, parse_xes, AlergiaParams, EventLog, Sdag, Sdfa};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Input { path: PathBuf, source: sgmine::Error },

    #[error(transparent)]
    Core(#[from] sgmine::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Stochastic process discovery from event logs.
#[derive(Debug, Parser)]
#[command(name = "sgmine", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn an automaton with ALERGIA and report its size and relevance.
    Discover(DiscoverArgs),
    /// Genetic search for a Pareto frontier of size and relevance.
    Search(SearchArgs),
    /// Entropic relevance of a model to a log.
    Score(ScoreArgs),
    /// Convert between automata, graphs and directly-follows graphs.
    Convert(ConvertArgs),
    /// Derive arc frequencies of a graph for a number of cases.
    Annotate(AnnotateArgs),
    /// Render a model as Graphviz DOT.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct DiscoverArgs {
    /// Event log (plain format, or XES when the file ends in .xes).
    #[arg(long)]
    log: PathBuf,
    #[arg(long, value_parser = positive)]
    omega: f64,
    #[arg(long, value_parser = non_negative)]
    t: f64,
    #[arg(long, value_parser = unit_interval)]
    f: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = DiscoverFormat::SdfaJson)]
    format: DiscoverFormat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DiscoverFormat {
    SdfaJson,
    SdagJson,
    /// Automaton DOT.
    Dot,
    /// Graph DOT with frequencies.
    SdagDot,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long, default_value_t = 50, value_parser = at_least_two)]
    pop: usize,
    #[arg(long, default_value_t = 50)]
    gens: usize,
    /// Parents drawn from the frontier each generation.
    #[arg(long, value_parser = at_least_two)]
    parents: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Also breed never-good parents and write lineage.csv.
    #[arg(long)]
    lineage_experiment: bool,
    #[arg(long, value_parser = positive)]
    omega_max: Option<f64>,
    /// Upper bound for t; defaults to the most frequent prefix-tree branch.
    #[arg(long, value_parser = non_negative)]
    t_max: Option<f64>,
    /// Mutation half-width as a fraction of each parameter range.
    #[arg(long, default_value_t = DEFAULT_MUTATION_DELTA, value_parser = non_negative)]
    mutation_delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Sdfa,
    Sdag,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Model kind; inferred from the JSON when omitted.
    #[arg(long, value_enum)]
    kind: Option<ModelKind>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Target {
    Sdag,
    Dfg,
    Sfa,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    to: Target,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    kind: Option<ModelKind>,
}

#[derive(Debug, Args)]
struct AnnotateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = positive)]
    cases: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    kind: Option<ModelKind>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    kind: Option<ModelKind>,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err("must be finite".into())
    }
}

fn positive(s: &str) -> Result<f64, String> {
    parse_f64(s).and_then(|v| if v > 0.0 { Ok(v) } else { Err("must be positive".into()) })
}

fn non_negative(s: &str) -> Result<f64, String> {
    parse_f64(s).and_then(|v| {
        if v >= 0.0 {
            Ok(v)
        } else {
            Err("must be non-negative".into())
        }
    })
}

fn unit_interval(s: &str) -> Result<f64, String> {
    parse_f64(s).and_then(|v| {
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err("must lie in [0, 1]".into())
        }
    })
}

fn at_least_two(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 2 {
        Ok(v)
    } else {
        Err("must be at least 2".into())
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_log(path: &Path) -> CliResult<EventLog> {
    let text = read(path)?;
    let is_xes = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("xes"));
    let parsed = if is_xes { parse_xes(&text) } else { parse_log(&text) };
    parsed.map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

enum Model {
    Sdfa(Sdfa),
    Sdag { sdag: Sdag, cases: Option<f64> },
}

fn read_model(path: &Path, kind: Option<ModelKind>) -> CliResult<Model> {
    let text = read(path)?;
    let input_err = |source: sgmine::Error| CliError::Input {
        path: path.to_path_buf(),
        source,
    };
    let value: Value = serde_json::from_str(&text).map_err(|e| input_err(e.into()))?;
    let kind = match kind {
        Some(k) => k,
        None if value.get("states").is_some() => ModelKind::Sdfa,
        None if value.get("nodes").is_some() => ModelKind::Sdag,
        None => {
            return Err(input_err(sgmine::Error::Model(
                "cannot tell the model kind: expected \"states\" or \"nodes\"".into(),
            )))
        }
    };
    match kind {
        ModelKind::Sdfa => {
            let json: SdfaJson = serde_json::from_value(value).map_err(|e| input_err(e.into()))?;
            Ok(Model::Sdfa(Sdfa::from_json(&json).map_err(input_err)?))
        }
        ModelKind::Sdag => {
            let json: SdagJson = serde_json::from_value(value).map_err(|e| input_err(e.into()))?;
            let sdag = Sdag::from_json(&json).map_err(input_err)?;
            Ok(Model::Sdag {
                sdag,
                cases: json.cases,
            })
        }
    }
}

fn to_pretty(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("model serializes");
    s.push('\n');
    s
}

/// Graph DOT, with frequencies when the graph can be annotated.
fn annotated_dot(sdag: &Sdag, cases: Option<f64>) -> String {
    match cases.map(|n| sdag.annotate_frequencies(n)) {
        Some(Ok(ann)) => sdag_to_dot(sdag, Some(&ann)),
        Some(Err(e)) => {
            warn!("drawing without frequencies: {e}");
            sdag_to_dot(sdag, None)
        }
        None => sdag_to_dot(sdag, None),
    }
}

fn discover(args: &DiscoverArgs) -> CliResult<()> {
    let params = AlergiaParams::new(args.omega, args.t, args.f);
    let log = read_log(&args.log)?;
    let sdfa = sgmine::run_alergia(&log, &params)?;
    let sdag = Sdag::from_sdfa(&sdfa);
    let report = entropic_relevance(&log, &sdfa)?;
    let cases = log.total_traces() as f64;
    let contents = match args.format {
        DiscoverFormat::SdfaJson => to_pretty(&sdfa.to_json()),
        DiscoverFormat::SdagJson => to_pretty(&sdag.to_json()),
        DiscoverFormat::Dot => sdfa_to_dot(&sdfa),
        DiscoverFormat::SdagDot => annotated_dot(&sdag, Some(cases)),
    };
    write(&args.out, &contents)?;
    println!(
        "{}",
        json!({
            "size": sdag.model_size(),
            "relevance": report.bits_per_trace,
            "states": sdfa.num_states(),
            "transitions": sdfa.num_transitions(),
        })
    );
    Ok(())
}

fn threads_from_env() -> CliResult<Option<usize>> {
    match std::env::var("SGMINE_THREADS") {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "SGMINE_THREADS must be a positive integer, got {v:?}"
            ))),
        },
        _ => Ok(None),
    }
}

fn search(args: &SearchArgs) -> CliResult<()> {
    let threads = threads_from_env()?;
    let log = read_log(&args.log)?;
    let defaults = Bounds::for_log(&log)?;
    let config = SearchConfig {
        population_size: args.pop,
        generations: args.gens,
        parents_k: args.parents,
        bounds: Bounds {
            omega_max: args.omega_max.unwrap_or(defaults.omega_max).max(OMEGA_MIN),
            t_max: args.t_max.unwrap_or(defaults.t_max),
        },
        seed: args.seed,
        mutation_delta: args.mutation_delta,
        lineage_experiment: args.lineage_experiment,
        threads,
    };
    let result = run_search(&log, &config)?;

    fs::create_dir_all(&args.out_dir).map_err(|source| CliError::Io {
        path: args.out_dir.clone(),
        source,
    })?;
    let dir = &args.out_dir;
    write(&dir.join("frontier.csv"), &frontier_csv(&result.frontier))?;
    write(&dir.join("history.csv"), &history_csv(&result.history))?;
    if args.lineage_experiment {
        write(&dir.join("lineage.csv"), &lineage_csv(&result.history))?;
    }
    let cases = log.total_traces() as f64;
    let mut points = Vec::new();
    for (i, ind) in result.frontier.iter().enumerate() {
        let (sdfa, eval) = evaluate_params(&log, &ind.params)?;
        let sdag = Sdag::from_sdfa(&sdfa);
        let stem = format!("model_{i:02}_size{}_rel{:.4}", eval.size, eval.relevance);
        write(&dir.join(format!("{stem}.json")), &to_pretty(&sdag.to_json()))?;
        write(&dir.join(format!("{stem}.dot")), &annotated_dot(&sdag, Some(cases)))?;
        points.push(json!({
            "omega": ind.params.omega,
            "t": ind.params.t,
            "f": ind.params.f,
            "size": eval.size,
            "relevance": eval.relevance,
        }));
    }
    info!("wrote {} frontier models to {}", points.len(), dir.display());
    println!("{}", json!({ "frontier": points, "generations": args.gens }));
    Ok(())
}

fn score(args: &ScoreArgs) -> CliResult<()> {
    let model = read_model(&args.model, args.kind)?;
    let log = read_log(&args.log)?;
    let report = match &model {
        Model::Sdfa(sdfa) => entropic_relevance(&log, sdfa)?,
        Model::Sdag { sdag, .. } => sdag_relevance(&log, sdag)?,
    };
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    println!(
        "relevance {:.4} bits/trace, coverage {:.2}% of {} traces",
        report.bits_per_trace,
        100.0 * report.coverage_rho,
        log.total_traces()
    );
    Ok(())
}

fn convert(args: &ConvertArgs) -> CliResult<()> {
    let model = read_model(&args.input, args.kind)?;
    let contents = match (args.to, model) {
        (Target::Sdag, Model::Sdfa(sdfa)) => to_pretty(&Sdag::from_sdfa(&sdfa).to_json()),
        (Target::Sdag, Model::Sdag { .. }) => {
            return Err(sgmine::Error::Domain("input is already a graph".into()).into())
        }
        (Target::Dfg, Model::Sdfa(sdfa)) => {
            to_pretty(&Sdag::from_sdfa(&sdfa).reduce_to_dfg().to_json())
        }
        (Target::Dfg, Model::Sdag { sdag, .. }) => to_pretty(&sdag.reduce_to_dfg().to_json()),
        (Target::Sfa, Model::Sdfa(sdfa)) => to_pretty(&sdfa.canonicalize().to_json()),
        (Target::Sfa, Model::Sdag { sdag, .. }) => to_pretty(&sdag.to_sfa()?.to_json()),
    };
    write(&args.out, &contents)
}

fn as_graph(model: Model) -> Sdag {
    match model {
        Model::Sdfa(sdfa) => Sdag::from_sdfa(&sdfa),
        Model::Sdag { sdag, .. } => sdag,
    }
}

fn annotate(args: &AnnotateArgs) -> CliResult<()> {
    let sdag = as_graph(read_model(&args.input, args.kind)?);
    let annotated = sdag.annotate_frequencies(args.cases)?;
    write(&args.out, &to_pretty(&annotated.to_json()))
}

fn export(args: &ExportArgs) -> CliResult<()> {
    let contents = match read_model(&args.input, args.kind)? {
        Model::Sdfa(sdfa) => sdfa_to_dot(&sdfa),
        Model::Sdag { sdag, cases } => annotated_dot(&sdag, cases),
    };
    write(&args.out, &contents)
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Discover(a) => discover(a),
        Command::Search(a) => search(a),
        Command::Score(a) => score(a),
        Command::Convert(a) => convert(a),
        Command::Annotate(a) => annotate(a),
        Command::Export(a) => export(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
