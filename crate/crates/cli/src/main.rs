use std::fs;
use std::io::{self, BufRead, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use limon_core::bench::{ladder, run_ladder_on, to_csv, BenchRow, Corpus, CSV_HEADER};
use limon_core::generators::{gen_linearizable, gen_random, gen_small_model_family, mutate, GenConfig};
use limon_core::history::{parse_history_with_symbols, serialize_history, Adt, Format, History, Value};
use limon_core::oracle::{brute_force_with_bound, saturation_baseline, OracleError, DEFAULT_MAX_OPS};
use limon_core::record::{record_execution, ReferenceImpl};
use limon_core::set::{MultisetMonitor, SetMonitor, StreamError, StreamRecord};
use limon_core::{check, Verdict, Witness};

/// Linearizability monitors for stack, queue, set and multiset histories.
///
/// Exit codes: 0 linearizable, 1 unlinearizable, 2 malformed input,
/// 3 internal error or oracle bound exceeded.
#[derive(Parser)]
#[command(name = "limon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether a history is linearizable.
    Check(CheckArgs),
    /// Write a synthetic history.
    Gen(GenArgs),
    /// Record a history from a concurrent reference implementation.
    Record(RecordArgs),
    /// Decide linearizability by exhaustive search (small inputs only).
    Oracle(OracleArgs),
    /// Time the monitor over a size ladder and print CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct InputArgs {
    /// History file, or `-` for standard input.
    #[arg(default_value = "-")]
    input: String,
    /// Override the `adt` header of the input.
    #[arg(long)]
    adt: Option<Adt>,
    /// Input format; detected from the content when omitted.
    #[arg(long)]
    format: Option<Format>,
    /// Print the verdict and witness as one JSON object.
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Read a timestamp-ordered set or multiset event stream line by line
    /// and stop at the first violation.
    #[arg(long)]
    stream: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    /// Linearizable by construction.
    Linearizable,
    /// A linearizable history with one random perturbation.
    Mutated,
    /// Random events on random intervals.
    Random,
    /// The stack family with no small unlinearizable core; `--values` is
    /// the family size.
    SmallModel,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "stack")]
    adt: Adt,
    #[arg(long, value_enum, default_value = "linearizable")]
    kind: GenKind,
    #[arg(long, default_value_t = 20)]
    ops: usize,
    /// Value domain for sets and multisets.
    #[arg(long, default_value_t = 3)]
    values: usize,
    /// How far intervals drift from their linearization points.
    #[arg(long, default_value_t = 2.0)]
    stretch: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct RecordArgs {
    /// lock-stack, treiber, buggy-stack, lock-queue or ms-queue.
    #[arg(long = "impl", default_value = "treiber")]
    implementation: ReferenceImpl,
    #[arg(long, default_value_t = 4)]
    threads: usize,
    /// Total operations across all threads.
    #[arg(long, default_value_t = 1000)]
    ops: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record the stack with the lost-update race instead.
    #[arg(long)]
    bug: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Refuse histories with more operations than this (at most 64).
    #[arg(long, default_value_t = DEFAULT_MAX_OPS)]
    max_ops: usize,
    /// Use the precedence-saturation baseline instead of the exhaustive
    /// search. It can miss violations.
    #[arg(long)]
    experimental_saturation: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "stack")]
    adt: Adt,
    #[arg(long, default_value_t = 100)]
    step: usize,
    #[arg(long, default_value_t = 10_000)]
    max: usize,
    /// Comma-separated thread counts; slowdown is normalized per count.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    threads: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record histories from this implementation instead of generating them.
    #[arg(long = "impl")]
    implementation: Option<ReferenceImpl>,
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

/// Anything that ends a command early.
enum Failure {
    Malformed(String),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Internal(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Internal(e.into())
    }
}

const LINEARIZABLE: u8 = 0;
const UNLINEARIZABLE: u8 = 1;
const MALFORMED: u8 = 2;
const INTERNAL: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Record(a) => cmd_record(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Malformed(msg)) => {
            eprintln!("limon: {msg}");
            ExitCode::from(MALFORMED)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("limon: {e:#}");
            ExitCode::from(INTERNAL)
        }
    }
}

fn read_input(path: &str) -> Result<String, Failure> {
    let mut text = String::new();
    let read = if path == "-" {
        io::stdin().read_to_string(&mut text).map(drop)
    } else {
        fs::read_to_string(path).map(|t| text = t)
    };
    read.map_err(|e| Failure::Malformed(format!("cannot read {path}: {e}")))?;
    Ok(text)
}

/// Replaces the `adt` header, or adds one when the input has none.
fn with_adt(text: &str, adt: Adt) -> String {
    let header = format!("adt {adt}");
    let mut out = String::with_capacity(text.len() + header.len() + 1);
    let mut replaced = false;
    for line in text.lines() {
        let body = line.split('#').next().unwrap_or("").trim();
        if !replaced && !body.is_empty() {
            replaced = true;
            out.push_str(&header);
            out.push('\n');
            if body.split_whitespace().next() == Some("adt") {
                continue;
            }
        }
        out.push_str(line);
        out.push('\n');
    }
    if !replaced {
        out.push_str(&header);
        out.push('\n');
    }
    out
}

fn load(input: &InputArgs) -> Result<(History, std::collections::BTreeMap<String, Value>), Failure> {
    let mut text = read_input(&input.input)?;
    if let Some(adt) = input.adt {
        text = with_adt(&text, adt);
    }
    let format = input.format.unwrap_or_else(|| Format::detect(&text));
    parse_history_with_symbols(&text, format).map_err(|e| Failure::Malformed(e.to_string()))
}

fn report(v: &Verdict, verbose: bool, symbols: &std::collections::BTreeMap<String, Value>) -> Result<u8, Failure> {
    if verbose {
        let mut json = serde_json::to_value(v).context("encoding verdict")?;
        if !symbols.is_empty() {
            json["symbols"] = serde_json::to_value(symbols).context("encoding symbols")?;
        }
        println!("{json}");
    } else {
        println!("{}", if v.linearizable { "linearizable" } else { "unlinearizable" });
    }
    Ok(if v.linearizable { LINEARIZABLE } else { UNLINEARIZABLE })
}

fn cmd_check(a: CheckArgs) -> Result<u8, Failure> {
    if a.stream {
        return check_stream(&a.input);
    }
    let (h, symbols) = load(&a.input)?;
    report(&check(&h), a.input.verbose, &symbols)
}

enum Online {
    Set(SetMonitor),
    Multiset(MultisetMonitor),
}

impl Online {
    fn feed(&mut self, rec: StreamRecord) -> Result<(), StreamError> {
        match self {
            Online::Set(m) => m.feed(rec),
            Online::Multiset(m) => m.feed(rec),
        }
    }

    fn violation(&self) -> Option<&Witness> {
        match self {
            Online::Set(m) => m.violation(),
            Online::Multiset(m) => m.violation(),
        }
    }

    fn finish(self) -> Result<Verdict, StreamError> {
        match self {
            Online::Set(m) => m.finish(),
            Online::Multiset(m) => m.finish(),
        }
    }
}

fn check_stream(input: &InputArgs) -> Result<u8, Failure> {
    let reader: Box<dyn BufRead> = if input.input == "-" {
        Box::new(io::stdin().lock())
    } else {
        let f = fs::File::open(&input.input)
            .map_err(|e| Failure::Malformed(format!("cannot read {}: {e}", input.input)))?;
        Box::new(io::BufReader::new(f))
    };
    let mut monitor = input.adt.map(online_for).transpose()?;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let at = |msg: String| Failure::Malformed(format!("line {}: {msg}", n + 1));
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix("adt ") {
            let adt: Adt = name.trim().parse().map_err(at)?;
            if monitor.is_none() {
                monitor = Some(online_for(input.adt.unwrap_or(adt))?);
            }
            continue;
        }
        let m = monitor.as_mut().ok_or_else(|| at("missing `adt` header".into()))?;
        let Some(rec) = StreamRecord::parse(body).map_err(at)? else { continue };
        m.feed(rec).map_err(|e| at(e.to_string()))?;
        if let Some(w) = m.violation() {
            return report(&Verdict::unlinearizable(w.clone()), input.verbose, &Default::default());
        }
    }
    let m = monitor.ok_or_else(|| Failure::Malformed("missing `adt` header".into()))?;
    let v = m.finish().map_err(|e| Failure::Malformed(e.to_string()))?;
    report(&v, input.verbose, &Default::default())
}

fn online_for(adt: Adt) -> Result<Online, Failure> {
    match adt {
        Adt::Set => Ok(Online::Set(SetMonitor::new())),
        Adt::Multiset => Ok(Online::Multiset(MultisetMonitor::new())),
        other => Err(Failure::Malformed(format!("streaming mode supports set and multiset, not {other}"))),
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<u8, Failure> {
    let cfg = GenConfig::new(a.adt, a.ops, a.seed).with_values(a.values).with_stretch(a.stretch);
    let h = match a.kind {
        GenKind::Linearizable => gen_linearizable(&cfg),
        GenKind::Mutated => mutate(&gen_linearizable(&cfg), a.seed).0,
        GenKind::Random => gen_random(&cfg),
        GenKind::SmallModel => {
            if a.values < 2 {
                return Err(Failure::Malformed("the small-model family needs --values >= 2".into()));
            }
            gen_small_model_family(a.values)
        }
    };
    write_output(a.out.output.as_deref(), &serialize_history(&h, a.out.format.unwrap_or(Format::Ops)))?;
    Ok(0)
}

fn cmd_record(a: RecordArgs) -> Result<u8, Failure> {
    if a.threads == 0 {
        return Err(Failure::Malformed("--threads must be at least 1".into()));
    }
    let mut cfg = GenConfig::new(a.implementation.adt(), a.ops, a.seed).with_threads(a.threads);
    cfg.bug = a.bug;
    let h = record_execution(a.implementation, &cfg);
    write_output(a.out.output.as_deref(), &serialize_history(&h, a.out.format.unwrap_or(Format::Events)))?;
    Ok(0)
}

fn cmd_oracle(a: OracleArgs) -> Result<u8, Failure> {
    let (h, symbols) = load(&a.input)?;
    let verdict = if a.experimental_saturation {
        if !h.adt.is_container() {
            return Err(Failure::Malformed(format!("saturation supports stack and queue, not {}", h.adt)));
        }
        saturation_baseline(&h)
    } else {
        match brute_force_with_bound(&h, a.max_ops) {
            Ok(v) => v,
            Err(e @ OracleError::TooLarge { .. }) => return Err(Failure::Internal(e.into())),
        }
    };
    report(&verdict, a.input.verbose, &symbols)
}

fn cmd_bench(a: BenchArgs) -> Result<u8, Failure> {
    if a.step == 0 || a.max < a.step {
        return Err(Failure::Malformed("need 0 < --step <= --max".into()));
    }
    let corpus = match a.implementation {
        None => Corpus::Generated,
        Some(ReferenceImpl::BuggyStack) => {
            return Err(Failure::Malformed("bench needs a correct implementation".into()));
        }
        Some(imp) if imp.adt() != a.adt => {
            return Err(Failure::Malformed(format!("{imp:?} does not implement a {}", a.adt)));
        }
        Some(imp) => Corpus::Recorded(imp),
    };
    let sizes = ladder(a.step, a.max);
    let mut rows: Vec<BenchRow> = Vec::new();
    for &threads in &a.threads {
        if threads == 0 {
            return Err(Failure::Malformed("thread counts must be at least 1".into()));
        }
        let base = GenConfig::new(a.adt, 0, a.seed).with_threads(threads);
        rows.extend(run_ladder_on(corpus, a.adt, &sizes, &base));
    }
    let csv = to_csv(&rows);
    debug_assert!(csv.starts_with(CSV_HEADER));
    write_output(a.output.as_deref(), &csv)?;
    Ok(0)
}
