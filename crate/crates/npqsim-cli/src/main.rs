//! Experiment runner for the queue-management simulator: canned sweeps,
//! the analytic cost report, and scenario files, all emitting deterministic
//! CSV/tables.  Exit codes: 0 success, 2 configuration error, 3 simulation
//! error, 4 I/O error.

mod scenario;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use npqsim::costmodel::{
    cycle_budget, sustained_throughput, CopyMode, CycleTable, Duplex, PacketOp,
    MICROENGINE_RATES_KPPS,
};
use npqsim::experiment::{delay_sweep_csv, loss_sweep_csv, run_delay_sweep, run_loss_sweep};
use scenario::{CliError, Experiment, Scenario};

#[derive(Parser)]
#[command(
    name = "npqsim",
    version,
    about = "Queue-management subsystem simulator: banked-memory bus scheduling, \
             command-pipeline delays, and software cost models"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Bus-policy throughput-loss sweep over bank counts (CSV)
    Table1(SweepArgs),
    /// Command-pipeline delay sweep over offered loads (CSV)
    Table5(SweepArgs),
    /// Analytic cost report for the software queue manager
    Cost {
        /// Write the report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario file (flat key=value lines; must set experiment=)
    Run(RunArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Simulation seed; repeat the flag for several
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Write output here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override one config key, e.g. --set table1.banks=4,8
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Simulation length in cycles
    #[arg(long)]
    horizon: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file path
    scenario: PathBuf,
    #[command(flatten)]
    sweep: SweepArgs,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Table1(args) => execute(&build_scenario(Experiment::LossSweep, &args)?),
        Cmd::Table5(args) => execute(&build_scenario(Experiment::DelaySweep, &args)?),
        Cmd::Cost { out } => {
            let mut sc = Scenario::new(Experiment::CostReport);
            sc.out = out;
            execute(&sc)
        }
        Cmd::Run(args) => {
            let text = fs::read_to_string(&args.scenario)
                .map_err(|e| CliError::Io(format!("{}: {e}", args.scenario.display())))?;
            let mut sc = Scenario::new(Experiment::LossSweep);
            sc.apply_file_text(&text)?;
            apply_flags(&mut sc, &args.sweep)?;
            execute(&sc)
        }
    }
}

fn build_scenario(experiment: Experiment, args: &SweepArgs) -> Result<Scenario, CliError> {
    let mut sc = Scenario::new(experiment);
    apply_flags(&mut sc, args)?;
    Ok(sc)
}

/// Command-line flags land after any scenario file, so they win.
fn apply_flags(sc: &mut Scenario, args: &SweepArgs) -> Result<(), CliError> {
    for pair in &args.sets {
        sc.apply_set(pair)?;
    }
    if !args.seeds.is_empty() {
        sc.set_seeds(&args.seeds);
    }
    if let Some(horizon) = args.horizon {
        sc.set_horizon(horizon);
    }
    if let Some(out) = &args.out {
        sc.out = Some(out.clone());
    }
    Ok(())
}

fn execute(sc: &Scenario) -> Result<(), CliError> {
    let content = match sc.experiment {
        Experiment::LossSweep => {
            let rows = run_loss_sweep(&sc.loss);
            loss_sweep_csv(&sc.loss, &rows)
        }
        Experiment::DelaySweep => {
            let rows = run_delay_sweep(&sc.delay).map_err(|e| CliError::Config(e.to_string()))?;
            if let Some(row) = rows.iter().find(|r| r.faults > 0.0) {
                return Err(CliError::Simulation(format!(
                    "{} faulted commands per run at the {} Gbps load point",
                    row.faults, row.offered_gbps
                )));
            }
            delay_sweep_csv(&sc.delay, &rows)
        }
        Experiment::CostReport => cost_report(),
    };
    match &sc.out {
        Some(path) => fs::write(path, content)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn mbps(cycles: u64, clock_hz: u64) -> String {
    let rate = sustained_throughput(cycles, clock_hz, 512);
    format!("{:.3}", *rate.numer() as f64 / *rate.denom() as f64 / 1e6)
}

/// The analytic report: cycles per segment operation under each copy
/// strategy, with projected line rates across the clock range a synthesized
/// embedded core can reach.
fn cost_report() -> String {
    const MHZ: u64 = 1_000_000;
    let table = CycleTable::default();
    let mut out = String::new();
    out.push_str("# software queue manager cost model, 512-bit packets\n");
    out.push_str("op,mode,cycles,mbps_100mhz,mbps_200mhz,mbps_400mhz\n");
    for (mode, mode_name) in [
        (CopyMode::WordTransactions, "word"),
        (CopyMode::LineTransactions, "line"),
        (CopyMode::Dma, "dma"),
    ] {
        let enqueue_first = table.packet_op_cycles(PacketOp::Enqueue, true, mode);
        let enqueue_rest = table.packet_op_cycles(PacketOp::Enqueue, false, mode);
        let dequeue = table.packet_op_cycles(PacketOp::Dequeue, true, mode);
        let rows = [
            ("enqueue_first", enqueue_first),
            ("enqueue_rest", enqueue_rest),
            ("dequeue", dequeue),
            // Full-duplex service: one enqueue and one dequeue per packet.
            ("round_trip", enqueue_first + dequeue),
        ];
        for (op_name, cycles) in rows {
            let _ = writeln!(
                out,
                "{op_name},{mode_name},{cycles},{},{},{}",
                mbps(cycles, 100 * MHZ),
                mbps(cycles, 200 * MHZ),
                mbps(cycles, 400 * MHZ)
            );
        }
    }
    let half = cycle_budget(100 * MHZ, 100 * MHZ, Duplex::Half, 512);
    let full = cycle_budget(100 * MHZ, 100 * MHZ, Duplex::Full, 512);
    let _ = writeln!(
        out,
        "# cycle budget at 100 MHz, 100 Mbps line: half_duplex={} full_duplex={}",
        half.to_integer(),
        full.to_integer()
    );
    out.push_str("# reference: software queue management on a six-microengine NP\n");
    out.push_str("# queues,kpps_1_engine,kpps_6_engines\n");
    for (queues, one, six) in MICROENGINE_RATES_KPPS {
        let _ = writeln!(out, "# {queues},{one},{six}");
    }
    out
}
