//! Benchmark CLI for the two-party secure-comparison engine.
//!
//! Subcommands: `verify` runs the exhaustive/randomized oracle sweeps,
//! `bench` measures rounds/volumes and simulated network times for a
//! configured workload, `plan-reuse` audits correlated-randomness counts
//! for an exponent matrix, and `estimate` attaches the analytical compute
//! model to a bench run. Exit codes: 0 success, 1 verification failure,
//! 2 usage or parse errors.

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use millforge_core::cost::{estimate_end_to_end, crh_blocks_for_pads, ComputeProfile, CrhCostProfile};
use millforge_core::merge::comparison_merge_matrix;
use millforge_core::nonlinear::{
    run_batch, sweep_millionaire, sweep_nonlinear, BatchOp, BatchSpec, FaultInjection,
    MillionaireConfig, SweepOutcome, Variant,
};
use millforge_core::report::{EstimateBlock, ProtocolReport};
use millforge_core::reuse::{
    brute_force_count, build_reuse_plan, n_final, n_naive, n_opt, parse_matrix, ExponentMatrix,
};
use millforge_core::transport::SchedulerMode;
use millforge_core::{Error, DEFAULT_SEED};

#[derive(Parser)]
#[command(name = "millforge", version, about = "Two-party secure comparison bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run correctness sweeps against the plaintext oracles.
    Verify(VerifyArgs),
    /// Run a benchmark workload and report rounds, volumes, and times.
    Bench(BenchArgs),
    /// Audit correlated-randomness counts for an exponent matrix.
    PlanReuse(PlanReuseArgs),
    /// Bench plus the analytical compute-cost estimate.
    Estimate(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Baseline,
    Tami,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OpArg {
    Millionaire,
    Drelu,
    Relu,
}

impl From<OpArg> for BatchOp {
    fn from(op: OpArg) -> BatchOp {
        match op {
            OpArg::Millionaire => BatchOp::Millionaire,
            OpArg::Drelu => BatchOp::Drelu,
            OpArg::Relu => BatchOp::Relu,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NetworkArg {
    Lan,
    Wan,
    Mobile,
    All,
}

impl NetworkArg {
    fn names(self) -> Vec<&'static str> {
        match self {
            NetworkArg::Lan => vec!["lan"],
            NetworkArg::Wan => vec!["wan"],
            NetworkArg::Mobile => vec!["mobile"],
            NetworkArg::All => vec!["lan", "wan", "mobile"],
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutArg {
    Json,
    Csv,
    Table,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "tami")]
    variant: VariantArg,
    #[arg(long, value_enum, default_value = "millionaire")]
    op: OpArg,
    /// Total input width in bits.
    #[arg(long, default_value_t = 8)]
    bits: u8,
    /// Chunk width in bits.
    #[arg(long, default_value_t = 4)]
    chunk: u8,
    #[arg(long)]
    interleaved: bool,
    #[arg(long, env = "MILLFORGE_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Tape sessions for the tape-assisted sweeps.
    #[arg(long, default_value_t = 256)]
    tami_seeds: u64,
    /// Random cases when the grid is too wide to exhaust.
    #[arg(long, default_value_t = 10_000)]
    samples: u64,
    /// Negative control: corrupt one retained pad and expect a mismatch.
    #[arg(long)]
    inject_fault: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "millionaire")]
    op: OpArg,
    #[arg(long, value_enum, default_value = "both")]
    variant: VariantArg,
    #[arg(long)]
    interleaved: bool,
    #[arg(long, default_value_t = 32)]
    bits: u8,
    #[arg(long, default_value_t = 4)]
    chunk: u8,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, value_enum, default_value = "all")]
    network: NetworkArg,
    #[arg(long, env = "MILLFORGE_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    out: OutArg,
    /// Force the deterministic turn-taking scheduler.
    #[arg(long)]
    lockstep: bool,
    /// Independent concurrent sessions; stats are aggregated.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Include measured per-party times (makes reports nondeterministic).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct PlanReuseArgs {
    /// Path to a matrix file: rows on lines, space-separated exponents.
    #[arg(long, conflicts_with = "compare_n")]
    matrix: Option<std::path::PathBuf>,
    /// Generate the comparison merge matrix for this many chunks.
    #[arg(long)]
    compare_n: Option<usize>,
    #[arg(long, value_enum, default_value = "json")]
    out: OutArg,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Verify(args) => cmd_verify(&args),
        Command::Bench(args) => cmd_bench(&args, false),
        Command::Estimate(args) => cmd_bench(&args, true),
        Command::PlanReuse(args) => cmd_plan_reuse(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::MatrixParse { .. } | Error::Config(_) | Error::ChunkWidth { .. } | Error::InvalidWidth(_) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn variants_of(arg: VariantArg, interleaved: bool) -> Vec<(Variant, bool)> {
    match arg {
        VariantArg::Baseline => vec![(Variant::Baseline, false)],
        VariantArg::Tami => vec![(Variant::Tami, interleaved)],
        VariantArg::Both => vec![(Variant::Baseline, false), (Variant::Tami, interleaved)],
    }
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode, Error> {
    let fault = if args.inject_fault {
        FaultInjection::CorruptTape
    } else {
        FaultInjection::None
    };
    let mut failed = false;
    for (variant, interleaved) in variants_of(args.variant, args.interleaved) {
        let cfg = MillionaireConfig::new(args.bits, args.chunk, variant, interleaved)?;
        let outcome: SweepOutcome = match args.op {
            OpArg::Millionaire => sweep_millionaire(&cfg, args.seed, args.tami_seeds, fault)?,
            OpArg::Drelu => {
                if args.inject_fault {
                    return Err(Error::Config(
                        "fault injection is wired to the millionaire sweep".into(),
                    ));
                }
                sweep_nonlinear(BatchOp::Drelu, &cfg, args.seed, args.tami_seeds, args.samples)?
            }
            OpArg::Relu => {
                if args.inject_fault {
                    return Err(Error::Config(
                        "fault injection is wired to the millionaire sweep".into(),
                    ));
                }
                sweep_nonlinear(BatchOp::Relu, &cfg, args.seed, args.tami_seeds, args.samples)?
            }
        };
        let status = if outcome.passed() { "pass" } else { "FAIL" };
        println!(
            "verify {} {} bits={} chunk={}: {} ({} runs, {} mismatches)",
            variant.name(),
            match args.op {
                OpArg::Millionaire => "millionaire",
                OpArg::Drelu => "drelu",
                OpArg::Relu => "relu",
            },
            args.bits,
            args.chunk,
            status,
            outcome.runs,
            outcome.mismatches
        );
        if !outcome.passed() {
            failed = true;
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome.counterexamples).expect("serialize")
            );
        }
    }
    Ok(if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

/// Runs one workload, optionally split over parallel sessions, and merges
/// the per-session reports (volumes add; rounds are concurrent, so the
/// maximum is reported).
fn run_workload(args: &BenchArgs, variant: Variant, interleaved: bool) -> Result<ProtocolReport, Error> {
    let cfg = MillionaireConfig::new(args.bits, args.chunk, variant, interleaved)?;
    let mode = if args.lockstep {
        SchedulerMode::Lockstep
    } else {
        SchedulerMode::Threaded
    };
    let sessions = args.parallel.max(1).min(args.count.max(1));
    let base = args.count / sessions;
    let extra = args.count % sessions;
    let specs: Vec<BatchSpec> = (0..sessions)
        .map(|k| {
            let mut spec = BatchSpec::new(
                args.op.into(),
                cfg,
                base + usize::from(k < extra),
                args.seed,
            );
            spec.session_id = k as u64;
            spec.mode = mode;
            spec.timing = args.timing;
            spec
        })
        .filter(|s| s.count > 0)
        .collect();

    let mut runs = Vec::with_capacity(specs.len());
    if specs.len() == 1 {
        runs.push(run_batch(&specs[0])?);
    } else {
        let handles: Vec<_> = specs
            .iter()
            .map(|spec| {
                let spec = *spec;
                std::thread::spawn(move || run_batch(&spec))
            })
            .collect();
        for h in handles {
            runs.push(h.join().expect("session thread")?);
        }
    }

    let mut merged = runs[0].report.clone();
    for run in &runs[1..] {
        let r = &run.report;
        merged.count += r.count;
        merged.correct += r.correct;
        merged.rounds = merged.rounds.max(r.rounds);
        merged.bits_s2r += r.bits_s2r;
        merged.bits_r2s += r.bits_r2s;
        merged.bytes_s2r += r.bytes_s2r;
        merged.bytes_r2s += r.bytes_r2s;
        merged.offline_bits += r.offline_bits;
        if let (Some(a), Some(b)) = (&mut merged.cpu_ms, &r.cpu_ms) {
            a.sender_ms += b.sender_ms;
            a.receiver_ms += b.receiver_ms;
        }
    }
    if runs.len() > 1 {
        // Recompute the time model over the aggregated volumes.
        let stats = millforge_core::transport::ChannelStats {
            rounds: merged.rounds,
            messages: 0,
            bits_s2r: merged.bits_s2r,
            bits_r2s: merged.bits_r2s,
            bytes_s2r: merged.bytes_s2r,
            bytes_r2s: merged.bytes_r2s,
        };
        merged.simulated_ms = millforge_core::report::SimulatedTimes::from_stats(&stats);
        merged
            .discrepancy_notes
            .push(format!("aggregated over {} parallel sessions", runs.len()));
    }
    Ok(merged)
}

fn attach_estimate(report: &mut ProtocolReport, variant: Variant) {
    let stats = millforge_core::transport::ChannelStats {
        rounds: report.rounds,
        messages: 0,
        bits_s2r: report.bits_s2r,
        bits_r2s: report.bits_r2s,
        bytes_s2r: report.bytes_s2r,
        bytes_r2s: report.bytes_r2s,
    };
    let n = (report.config.bits / report.config.chunk) as usize;
    let blocks = crh_blocks_for_pads(report.count, n, report.config.chunk);
    let profile = match variant {
        Variant::Baseline => CrhCostProfile::cpu(),
        Variant::Tami => CrhCostProfile::pipelined(),
    };
    let compute = ComputeProfile::symmetric(&profile, blocks);
    report.estimate = Some(EstimateBlock {
        lan: estimate_end_to_end(&stats, &compute, &millforge_core::transport::NetworkPreset::LAN),
        wan: estimate_end_to_end(&stats, &compute, &millforge_core::transport::NetworkPreset::WAN),
        mobile: estimate_end_to_end(
            &stats,
            &compute,
            &millforge_core::transport::NetworkPreset::MOBILE,
        ),
    });
}

fn cmd_bench(args: &BenchArgs, with_estimate: bool) -> Result<ExitCode, Error> {
    let mut reports = Vec::new();
    for (variant, interleaved) in variants_of(args.variant, args.interleaved) {
        let mut report = run_workload(args, variant, interleaved)?;
        if with_estimate {
            attach_estimate(&mut report, variant);
        }
        reports.push(report);
    }

    match args.out {
        OutArg::Json => print_json(&reports, args),
        OutArg::Csv => print_csv(&reports, args),
        OutArg::Table => print_table(&reports, args),
    }
    Ok(ExitCode::SUCCESS)
}

fn print_json(reports: &[ProtocolReport], args: &BenchArgs) {
    if reports.len() == 1 {
        println!("{}", reports[0].to_json_string());
        return;
    }
    let mut comparison = serde_json::Map::new();
    let base = &reports[0];
    let tami = &reports[1];
    comparison.insert(
        "rounds".into(),
        serde_json::json!({ "baseline": base.rounds, "tami": tami.rounds }),
    );
    let mut ratios = serde_json::Map::new();
    for name in args.network.names() {
        let b = base.simulated_ms.by_name(name).unwrap_or(f64::NAN);
        let t = tami.simulated_ms.by_name(name).unwrap_or(f64::NAN);
        ratios.insert(name.into(), serde_json::json!(b / t));
    }
    comparison.insert("simulated_speedup".into(), serde_json::Value::Object(ratios));
    let doc = serde_json::json!({
        "runs": reports,
        "comparison": serde_json::Value::Object(comparison),
    });
    println!("{}", serde_json::to_string_pretty(&doc).expect("serialize"));
}

fn print_csv(reports: &[ProtocolReport], args: &BenchArgs) {
    println!(
        "variant,op,bits,chunk,interleaved,count,correct,preset,rounds,pipelined_rounds,\
         bits_s2r,bits_r2s,bytes_s2r,bytes_r2s,offline_bits,simulated_ms,cpu_ms_sender,cpu_ms_receiver"
    );
    for r in reports {
        for preset in args.network.names() {
            let sim = r.simulated_ms.by_name(preset).unwrap_or(f64::NAN);
            println!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{},{}",
                r.variant,
                r.op,
                r.config.bits,
                r.config.chunk,
                r.config.interleaved,
                r.count,
                r.correct,
                preset,
                r.rounds,
                r.pipelined_rounds.map(|p| p.to_string()).unwrap_or_default(),
                r.bits_s2r,
                r.bits_r2s,
                r.bytes_s2r,
                r.bytes_r2s,
                r.offline_bits,
                sim,
                r.cpu_ms.map(|c| format!("{:.3}", c.sender_ms)).unwrap_or_default(),
                r.cpu_ms.map(|c| format!("{:.3}", c.receiver_ms)).unwrap_or_default(),
            );
        }
    }
}

fn print_table(reports: &[ProtocolReport], args: &BenchArgs) {
    println!(
        "{:<10} {:<12} {:>5} {:>6} {:>8} {:>8} {:>7} {:>12} {:>12} {:>9} {:>14}",
        "variant", "op", "bits", "chunk", "count", "correct", "rounds", "bits_s2r", "bits_r2s",
        "preset", "simulated_ms"
    );
    for r in reports {
        for preset in args.network.names() {
            let sim = r.simulated_ms.by_name(preset).unwrap_or(f64::NAN);
            println!(
                "{:<10} {:<12} {:>5} {:>6} {:>8} {:>8} {:>7} {:>12} {:>12} {:>9} {:>14.4}",
                r.variant,
                r.op,
                r.config.bits,
                r.config.chunk,
                r.count,
                r.correct,
                r.rounds,
                r.bits_s2r,
                r.bits_r2s,
                preset,
                sim
            );
        }
        for note in &r.discrepancy_notes {
            println!("  note[{}]: {}", r.variant, note);
        }
    }
}

fn cmd_plan_reuse(args: &PlanReuseArgs) -> Result<ExitCode, Error> {
    let matrix: ExponentMatrix = if let Some(path) = &args.matrix {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        parse_matrix(&text)?
    } else if let Some(n) = args.compare_n {
        comparison_merge_matrix(n)?
    } else {
        return Err(Error::Config(
            "pass --matrix FILE or --compare-n N".into(),
        ));
    };

    let naive = n_naive(&matrix)?;
    let opt = n_opt(&matrix);
    let counts = n_final(&matrix)?;
    let plan = build_reuse_plan(&matrix)?;
    let oracle = if matrix.num_cols() <= 20 {
        let brute = brute_force_count(&matrix)?;
        Some((brute, brute == counts.total && plan.len() as u128 == brute))
    } else {
        None
    };

    match args.out {
        OutArg::Json => {
            let doc = serde_json::json!({
                "rows": matrix.num_rows(),
                "cols": matrix.num_cols(),
                "n_naive": naive.to_string(),
                "n_opt": opt.to_string(),
                "n_final_per_row": counts.per_row.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                "n_final_total": counts.total.to_string(),
                "brute_force": oracle.map(|(b, _)| b.to_string()),
                "oracle": oracle.map(|(_, ok)| if ok { "match" } else { "MISMATCH" }),
                "plan": plan.to_json_value(),
            });
            println!("{}", serde_json::to_string_pretty(&doc).expect("serialize"));
        }
        OutArg::Csv | OutArg::Table => {
            println!("matrix: {} rows x {} cols", matrix.num_rows(), matrix.num_cols());
            println!("n_naive: {naive}");
            println!("n_opt:   {opt}");
            println!("n_final: {} (per row: {:?})", counts.total, counts.per_row);
            match oracle {
                Some((brute, ok)) => println!(
                    "brute force: {brute} -> {}",
                    if ok { "match" } else { "MISMATCH" }
                ),
                None => println!("brute force: skipped (more than 20 columns)"),
            }
            println!("plan size: {}", plan.len());
        }
    }

    if let Some((_, ok)) = oracle {
        if !ok {
            return Ok(ExitCode::from(1));
        }
    }
    Ok(ExitCode::SUCCESS)
}
