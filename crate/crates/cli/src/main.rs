//! `hsara`: generate instances, solve them, run benchmarks, or serve the
//! HTTP API.
//!
//! Exit codes: 0 success, 1 invalid usage, 2 solver or i/o failure.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hsara_core::instance::{generate_instance, read_instance, read_travel_csv};
use hsara_core::{gap, run_colgen, ColGenConfig, GeneratorParams, Instance, Method};
use hsara_service::engine::run_job;
use hsara_service::model::{SolveParams, SCHEMA_VERSION};
use hsara_service::EngineConfig;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hsara", version, about = "Fleet sizing, routing and appointment scheduling for service teams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance as JSON.
    Generate(GenerateArgs),
    /// Solve an instance and schedule its routes.
    Solve(SolveArgs),
    /// Compare methods on generated instances and write one CSV row per run.
    Bench(BenchArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generator parameters as JSON; missing fields take their defaults.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Replace the travel-time matrix with a header-free CSV.
    #[arg(long)]
    travel_csv: Option<PathBuf>,
    #[arg(long, default_value = "hm", value_parser = parse_method)]
    method: Method,
    /// Time budget in seconds; `inf` or absent is unlimited.
    #[arg(long, value_parser = parse_tmax)]
    tmax: Option<f64>,
    #[arg(long, default_value_t = 0.5, value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    replicas: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "10,20,30", value_parser = clap::value_parser!(u64).range(1..))]
    sizes: Vec<u64>,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    #[arg(long, value_delimiter = ',', default_value = "is,hm,em", value_parser = parse_method)]
    methods: Vec<Method>,
    /// Run `r` uses instance seed `seed + r`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Time budget for HM and EM runs, in seconds.
    #[arg(long, value_parser = parse_tmax)]
    tmax: Option<f64>,
    /// CSV output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Directory holding instances, job logs and results.
    #[arg(long, default_value = "hsara-data")]
    data_dir: PathBuf,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    workers: u64,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn parse_tmax(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if t >= 0.0 {
        Ok(t)
    } else {
        Err(format!("time budget must be non-negative, got {s}"))
    }
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if (0.0..=1.0).contains(&a) {
        Ok(a)
    } else {
        Err(format!("alpha must lie in [0, 1], got {s}"))
    }
}

fn finite(t: Option<f64>) -> Option<f64> {
    t.filter(|t| t.is_finite())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let params: GeneratorParams = match &args.params {
        Some(p) => serde_json::from_reader(File::open(p).with_context(|| format!("opening {}", p.display()))?)
            .with_context(|| format!("reading {}", p.display()))?,
        None => GeneratorParams::default(),
    };
    let inst = generate_instance(args.n as usize, args.seed, &params)?;
    write_json(args.out.as_deref(), &inst)
}

#[derive(Serialize)]
struct SolveReport<'a> {
    schema_version: u32,
    instance: &'a Path,
    params: &'a SolveParams,
    solution: &'a hsara_core::SarSolution,
    schedules: &'a [hsara_core::RouteSchedule],
    cost_breakdown: &'a hsara_core::CostBreakdown,
    clamped_arcs: usize,
}

fn solve(args: SolveArgs) -> Result<()> {
    let mut inst: Instance = read_instance(&args.instance).with_context(|| format!("reading {}", args.instance.display()))?;
    if let Some(csv) = &args.travel_csv {
        let matrix = read_travel_csv(csv).with_context(|| format!("reading {}", csv.display()))?;
        inst = inst.with_travel_matrix(matrix)?;
    }
    let params = SolveParams {
        method: args.method,
        t_max: finite(args.tmax),
        alpha: args.alpha,
        replicas: args.replicas as usize,
        seed: args.seed,
    };
    let res = run_job(Default::default(), &inst, &params)?;
    let report = SolveReport {
        schema_version: SCHEMA_VERSION,
        instance: &args.instance,
        params: &params,
        solution: &res.solution,
        schedules: &res.schedules,
        cost_breakdown: &res.cost_breakdown,
        clamped_arcs: res.clamped_arcs,
    };
    write_json(args.out.as_deref(), &report)
}

#[derive(Debug, Serialize)]
struct BenchRow {
    n: usize,
    method: Method,
    run: u64,
    objective: f64,
    lower_bound: Option<f64>,
    gap_percent: Option<f64>,
    cpu_seconds: f64,
    routes: usize,
}

/// Runs EM first when requested so the other methods can be measured against it.
fn bench_instance(inst: &Instance, run: u64, methods: &[Method], t_max: Option<f64>) -> Result<Vec<BenchRow>> {
    let mut order: Vec<Method> = methods.to_vec();
    order.sort_by_key(|m| *m != Method::Exact);
    let mut solved = BTreeMap::new();
    for &m in &order {
        if solved.contains_key(m.code()) {
            continue;
        }
        let cfg = ColGenConfig {
            t_max,
            ..ColGenConfig::new(m)
        };
        solved.insert(m.code(), run_colgen(inst, &cfg)?);
    }
    let exact = solved.get(Method::Exact.code());
    let mut rows = Vec::new();
    for &m in methods {
        let sol = &solved[m.code()];
        let gap_percent = match (m, exact) {
            (Method::Exact, _) => sol.gap_percent,
            (_, Some(e)) => Some(gap(sol.objective, e.objective)?),
            (_, None) => None,
        };
        rows.push(BenchRow {
            n: inst.n,
            method: m,
            run,
            objective: sol.objective,
            lower_bound: exact.and_then(|e| e.lower_bound),
            gap_percent,
            cpu_seconds: sol.wall_time_s,
            routes: sol.routes.len(),
        });
    }
    Ok(rows)
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, k) = xs.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    (k > 0).then(|| sum / k as f64)
}

fn bench_summary(rows: &[BenchRow], sizes: &[u64], seed: u64) -> String {
    let mut out = format!("seed {seed}\n");
    for &n in sizes {
        let at = |m: Method| rows.iter().filter(move |r| r.n == n as usize && r.method == m);
        let mut line = format!("n={n}");
        for m in [Method::InitialSplit, Method::Heuristic] {
            if let Some(g) = mean(at(m).filter_map(|r| r.gap_percent)) {
                line += &format!("  {m} gap {g:.2}%");
            }
        }
        let ratios = at(Method::Exact).filter_map(|e| {
            at(Method::Heuristic)
                .find(|h| h.run == e.run)
                .map(|h| e.cpu_seconds / h.cpu_seconds.max(1e-9))
        });
        if let Some(s) = mean(ratios) {
            line += &format!("  avg speedup EM/HM {s:.1}");
        }
        out += &line;
        out.push('\n');
    }
    out
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output(args.out.as_deref())?);
    let params = GeneratorParams::default();
    let mut rows = Vec::new();
    for &n in &args.sizes {
        for run in 0..args.runs {
            let inst = generate_instance(n as usize, args.seed.wrapping_add(run), &params)?;
            for row in bench_instance(&inst, run, &args.methods, finite(args.tmax))? {
                writer.serialize(&row)?;
                rows.push(row);
            }
            writer.flush()?;
        }
    }
    let summary = bench_summary(&rows, &args.sizes, args.seed);
    if args.out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let config = EngineConfig {
        workers: args.workers as usize,
        ..EngineConfig::default()
    };
    let addr = SocketAddr::new(args.host, args.port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(hsara_service::serve(addr, args.data_dir, config))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Bench(a) => {
            if a.methods.is_empty() {
                bail!("no methods given");
            }
            bench(a)
        }
        Command::Serve(a) => serve(a),
    }
}

/// The error chain joined by `: `, skipping causes already quoted by the
/// message before them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out += ": ";
            }
            out += &msg;
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}
