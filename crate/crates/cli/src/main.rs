//! `patree`: grow preferential-attachment trees, compute their limit laws,
//! and compare the two.
//!
//! Exit codes: 0 success, 1 usage error, 2 numeric failure (condition (M)
//! violation, bracketing failure, non-convergent series), 3 I/O error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use patree_core::analytic::{pi_table, AnalyticError};
use patree_core::malthus::{degree_dist, solve_malthus, MalthusError};
use patree_core::simulate::{census, derive_stream, init_growth, write_jsonl, CensusReport};
use patree_core::stats::{
    compare_ancestors, compare_degree, compare_subtrees, gamma_theta_check, ComparisonReport,
    StatsError,
};
use patree_core::tree::TreeError;
use patree_core::weight::{WeightError, WeightFunction, WeightSpec};

fn main() {
    std::process::exit(run_cli(std::env::args().collect()));
}

fn run_cli(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Numeric(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numeric(m) | CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<WeightError> for CliError {
    fn from(e: WeightError) -> Self {
        match e {
            WeightError::Parse { .. } | WeightError::InvalidParam(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<MalthusError> for CliError {
    fn from(e: MalthusError) -> Self {
        match e {
            MalthusError::InvalidTolerance(_) => CliError::Usage(e.to_string()),
            MalthusError::Weight(w) => w.into(),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        match e {
            TreeError::TooLarge { .. } => CliError::Usage(e.to_string()),
            TreeError::Weight(w) => w.into(),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<AnalyticError> for CliError {
    fn from(e: AnalyticError) -> Self {
        match e {
            AnalyticError::Tree(t) => t.into(),
            AnalyticError::Malthus(m) => m.into(),
            AnalyticError::Weight(w) => w.into(),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::Weight(w) => w.into(),
            StatsError::Malthus(m) => m.into(),
            StatsError::Analytic(a) => a.into(),
            StatsError::Tree(t) => t.into(),
            StatsError::Unnormalized { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "patree",
    about = "Preferential-attachment random trees: simulation, limit laws, and verification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OutputOpts {
    /// Prefix for output files; defaults to stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress the timestamp header so outputs are byte-reproducible
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Malthusian parameter: the root of rho_hat(lambda) = 1
    Malthus {
        /// Weight spec: linear:<a>,<b> | const:<c> | table:w0,...;tail=...
        #[arg(long)]
        weight: String,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Asymptotic degree distribution p(k) for k <= kmax, plus exact tail
    Degdist {
        #[arg(long)]
        weight: String,
        #[arg(long)]
        kmax: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Limiting subtree distribution pi over trees of size <= max-size
    Treedist {
        #[arg(long)]
        weight: String,
        #[arg(long)]
        max_size: usize,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Grow trees and dump them as JSONL, with optional censuses
    Simulate {
        #[arg(long)]
        weight: String,
        #[arg(long)]
        vertices: usize,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long)]
        seed: u64,
        /// Record exponential holding times (continuous-time model)
        #[arg(long)]
        continuous: bool,
        /// Census spec, e.g. degrees,subtrees:4,ancestors:1,2
        #[arg(long)]
        census: Option<String>,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Compare simulated frequencies against the limit laws
    Compare {
        #[command(subcommand)]
        what: CompareCommand,
    },
    /// Sample the normalized growth statistic and test the Gamma law
    Theta {
        /// Linear weight spec, linear:<a>,<b>
        #[arg(long)]
        weight: String,
        #[arg(long)]
        vertices: usize,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: OutputOpts,
    },
}

#[derive(Subcommand)]
enum CompareCommand {
    /// Empirical degree frequencies vs the asymptotic degree law
    Degrees {
        #[arg(long)]
        weight: String,
        #[arg(long)]
        vertices: usize,
        #[arg(long, default_value_t = 8)]
        runs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        kmax: usize,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Empirical subtree-shape frequencies vs pi
    Subtrees {
        #[arg(long)]
        weight: String,
        #[arg(long)]
        vertices: usize,
        #[arg(long, default_value_t = 8)]
        runs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        max_size: usize,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Empirical k-ancestor marked frequencies vs the marked law
    Ancestors {
        #[arg(long)]
        weight: String,
        #[arg(long)]
        vertices: usize,
        #[arg(long, default_value_t = 8)]
        runs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 4)]
        max_size: usize,
        #[command(flatten)]
        output: OutputOpts,
    },
}

fn parse_weight(spec: &str) -> Result<(WeightSpec, WeightFunction), CliError> {
    let parsed: WeightSpec = spec.parse()?;
    let w = parsed.build()?;
    Ok((parsed, w))
}

fn check_tol(tol: f64) -> Result<(), CliError> {
    if !(tol > 0.0 && tol <= 1e-2) {
        return Err(CliError::Usage(format!("--tol {tol} must lie in (0, 1e-2]")));
    }
    Ok(())
}

fn check_counts(vertices: usize, runs: usize) -> Result<(), CliError> {
    if vertices == 0 || runs == 0 {
        return Err(CliError::Usage("--vertices and --runs must be >= 1".into()));
    }
    Ok(())
}

fn timestamp_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Either a file created from `<prefix><suffix>` or stdout.
fn open_sink(out: &Option<PathBuf>, suffix: &str) -> Result<Box<dyn Write>, CliError> {
    match out {
        Some(prefix) => {
            let mut path = prefix.as_os_str().to_owned();
            path.push(suffix);
            let file = File::create(PathBuf::from(path))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn write_header(out: &mut dyn Write, opts: &OutputOpts) -> io::Result<()> {
    if !opts.no_timestamp {
        writeln!(out, "# generated_unix_ms {}", timestamp_ms())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    command: &'a str,
    weight: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_unix_ms: Option<u128>,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(
    opts: &OutputOpts,
    command: &str,
    weight: &str,
    body: T,
) -> Result<(), CliError> {
    let summary = Summary {
        command,
        weight,
        generated_unix_ms: (!opts.no_timestamp).then(timestamp_ms),
        body,
    };
    let mut out = open_sink(&opts.out, ".json")?;
    serde_json::to_writer_pretty(&mut out, &summary)
        .map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Malthus { weight, tol } => {
            check_tol(tol)?;
            let (_, w) = parse_weight(&weight)?;
            let m = solve_malthus(&w, tol)?;
            println!("lambda_star {:.12}", m.lambda_star);
            println!(
                "lambda_under {:.12}{}",
                m.lambda_under,
                if m.lambda_under_is_upper_bound { " (upper bound)" } else { "" }
            );
            println!("residual {:.3e}", m.rho_hat_residual);
            println!("iterations {}", m.iterations);
            Ok(())
        }
        Command::Degdist { weight, kmax, tol, output } => {
            check_tol(tol)?;
            let (_, w) = parse_weight(&weight)?;
            let d = degree_dist(&w, kmax, tol)?;
            let mut out = open_sink(&output.out, ".csv")?;
            write_header(out.as_mut(), &output)?;
            writeln!(out, "# lambda_star={:.12e}", d.lambda_star)?;
            writeln!(out, "k,mass")?;
            for (k, p) in d.masses.iter().enumerate() {
                writeln!(out, "{k},{p:.12e}")?;
            }
            writeln!(out, "tail,{:.12e}", d.tail_mass)?;
            Ok(())
        }
        Command::Treedist { weight, max_size, output } => {
            let (_, w) = parse_weight(&weight)?;
            let table = pi_table(&w, max_size)?;
            let mut out = open_sink(&output.out, ".csv")?;
            write_header(out.as_mut(), &output)?;
            table.write_csv(&mut out)?;
            Ok(())
        }
        Command::Simulate { weight, vertices, runs, seed, continuous, census: census_spec, output } => {
            check_counts(vertices, runs)?;
            let (spec, w) = parse_weight(&weight)?;
            let census_opts = census_spec.map(|s| parse_census_spec(&s)).transpose()?;
            run_simulate(&spec, &w, vertices, runs, seed, continuous, census_opts, &output)
        }
        Command::Compare { what } => match what {
            CompareCommand::Degrees { weight, vertices, runs, seed, kmax, output } => {
                check_counts(vertices, runs)?;
                let (_, w) = parse_weight(&weight)?;
                let report = compare_degree(&w, vertices, runs, seed, kmax)?;
                emit_comparison(&weight, "compare degrees", &report, &output)
            }
            CompareCommand::Subtrees { weight, vertices, runs, seed, max_size, output } => {
                check_counts(vertices, runs)?;
                let (_, w) = parse_weight(&weight)?;
                let report = compare_subtrees(&w, vertices, runs, seed, max_size)?;
                emit_comparison(&weight, "compare subtrees", &report, &output)
            }
            CompareCommand::Ancestors { weight, vertices, runs, seed, k, max_size, output } => {
                check_counts(vertices, runs)?;
                let (_, w) = parse_weight(&weight)?;
                let cmp = compare_ancestors(&w, vertices, runs, seed, k, max_size)?;
                let mut out = open_sink(&output.out, ".csv")?;
                write_header(out.as_mut(), &output)?;
                cmp.marked.write_csv(&mut out)?;
                drop(out);
                let mut out = open_sink(&output.out, "_marginal.csv")?;
                write_header(out.as_mut(), &output)?;
                cmp.marginal.write_csv(&mut out)?;
                drop(out);
                write_json(&output, "compare ancestors", &weight, &cmp)
            }
        },
        Command::Theta { weight, vertices, samples, seed, output } => {
            let spec: WeightSpec = weight.parse()?;
            let (alpha, beta) = match spec {
                WeightSpec::Linear { a, b } => (a, b),
                _ => {
                    return Err(CliError::Usage(
                        "theta requires a linear weight, e.g. --weight linear:1,1".into(),
                    ))
                }
            };
            if samples < 2 || vertices == 0 {
                return Err(CliError::Usage("--samples must be >= 2 and --vertices >= 1".into()));
            }
            let check = gamma_theta_check(alpha, beta, vertices, samples, seed)?;
            println!("samples {samples}");
            println!("sample_mean {:.6} (se {:.6})", check.sample_mean, check.std_error);
            println!("ks_statistic {:.6}", check.ks_statistic);
            println!("p_value {:.6}", check.p_value);
            println!("gamma_shape {:.6}", check.gamma_shape);
            println!("lambda_star {:.12}", check.lambda_star);
            println!("kappa {:.12}", check.kappa);
            if output.out.is_some() {
                write_json(&output, "theta", &weight, &check)?;
            }
            Ok(())
        }
    }
}

#[derive(Clone, Debug, Default)]
struct CensusOpts {
    degrees: bool,
    subtree_cap: Option<usize>,
    ancestor_ks: Vec<usize>,
}

/// Grammar: comma-separated `degrees` | `subtrees:<S>` | `ancestors:<k1>,<k2>,...`
/// (the numbers after `ancestors:` keep attaching to it).
fn parse_census_spec(s: &str) -> Result<CensusOpts, CliError> {
    let mut opts = CensusOpts::default();
    let mut in_ancestors = false;
    for token in s.split(',') {
        if token == "degrees" {
            opts.degrees = true;
            in_ancestors = false;
        } else if let Some(cap) = token.strip_prefix("subtrees:") {
            opts.subtree_cap = Some(cap.parse().map_err(|_| {
                CliError::Usage(format!("bad subtree cap in census spec `{s}`"))
            })?);
            in_ancestors = false;
        } else if let Some(k) = token.strip_prefix("ancestors:") {
            opts.ancestor_ks.push(k.parse().map_err(|_| {
                CliError::Usage(format!("bad ancestor level in census spec `{s}`"))
            })?);
            in_ancestors = true;
        } else if in_ancestors && token.chars().all(|c| c.is_ascii_digit()) && !token.is_empty() {
            opts.ancestor_ks.push(token.parse().expect("digits only"));
        } else {
            return Err(CliError::Usage(format!("unknown census token `{token}` in `{s}`")));
        }
    }
    if !opts.ancestor_ks.is_empty() && opts.subtree_cap.is_none() {
        return Err(CliError::Usage(
            "census spec with `ancestors:` needs `subtrees:<cap>` to bound the shapes".into(),
        ));
    }
    Ok(opts)
}

#[allow(clippy::too_many_arguments)]
fn run_simulate(
    spec: &WeightSpec,
    w: &WeightFunction,
    vertices: usize,
    runs: usize,
    seed: u64,
    continuous: bool,
    census_opts: Option<CensusOpts>,
    output: &OutputOpts,
) -> Result<(), CliError> {
    let spec_string = spec.to_string();
    let mut dump = open_sink(&output.out, ".jsonl")?;
    let mut pooled: Option<CensusReport> = None;

    for r in 0..runs {
        let mut state = init_growth(w, derive_stream(seed, r as u64))?;
        if continuous {
            state.grow_continuous(vertices - 1)?;
        } else {
            state.grow_discrete(vertices - 1)?;
        }
        write_jsonl(&state, &spec_string, &mut dump)?;
        if let Some(opts) = &census_opts {
            let report = census(
                &state,
                opts.subtree_cap.unwrap_or(0),
                &opts.ancestor_ks,
            );
            pooled = Some(match pooled.take() {
                None => report,
                Some(mut acc) => {
                    acc.n_vertices += report.n_vertices;
                    for (k, v) in report.degree_hist {
                        *acc.degree_hist.entry(k).or_insert(0) += v;
                    }
                    for (code, v) in report.subtree_hist.by_code {
                        *acc.subtree_hist.by_code.entry(code).or_insert(0) += v;
                    }
                    acc.subtree_hist.other += report.subtree_hist.other;
                    for (k, hist) in report.ancestor_hists {
                        let slot = acc.ancestor_hists.entry(k).or_default();
                        for (key, v) in hist.by_key {
                            *slot.by_key.entry(key).or_insert(0) += v;
                        }
                        slot.other += hist.other;
                        slot.eligible += hist.eligible;
                    }
                    acc
                }
            });
        }
    }
    drop(dump);

    if let (Some(opts), Some(report)) = (&census_opts, &pooled) {
        if opts.degrees {
            let mut out = open_sink(&output.out, "_degrees.csv")?;
            write_header(out.as_mut(), output)?;
            writeln!(out, "degree,count")?;
            for (k, c) in &report.degree_hist {
                writeln!(out, "{k},{c}")?;
            }
            drop(out);
        }
        if opts.subtree_cap.is_some() {
            let mut out = open_sink(&output.out, "_subtrees.csv")?;
            write_header(out.as_mut(), output)?;
            writeln!(out, "canonical_code,count")?;
            for (code, c) in &report.subtree_hist.by_code {
                writeln!(out, "\"{code}\",{c}")?;
            }
            writeln!(out, "OTHER,{}", report.subtree_hist.other)?;
            drop(out);
        }
        for (&k, hist) in &report.ancestor_hists {
            let mut out = open_sink(&output.out, &format!("_ancestors_k{k}.csv"))?;
            write_header(out.as_mut(), output)?;
            writeln!(out, "canonical_code,mark,count")?;
            for ((code, mark), c) in &hist.by_key {
                writeln!(out, "\"{code}\",{mark},{c}")?;
            }
            writeln!(out, "OTHER,,{}", hist.other)?;
            writeln!(out, "# eligible={}", hist.eligible)?;
            drop(out);
        }
    }
    Ok(())
}

fn emit_comparison(
    weight: &str,
    command: &str,
    report: &ComparisonReport,
    output: &OutputOpts,
) -> Result<(), CliError> {
    let mut out = open_sink(&output.out, ".csv")?;
    write_header(out.as_mut(), output)?;
    report.write_csv(&mut out)?;
    drop(out);
    write_json(output, command, weight, report)
}
