//! Canned experiment drivers: the bus-policy loss sweep and the command
//! delay sweep, with deterministic CSV emission.
//!
//! Every simulation instance is an independent (parameter, seed) cell.  With
//! the `parallel` feature the cells fan out over a rayon pool — capped by
//! the `NPQSIM_THREADS` environment variable — and are merged back in input
//! order, so the output is identical to a sequential run byte for byte.

use std::fmt::Write as _;

use crate::pipeline::{
    CommandKind, DelayBreakdown, Pipeline, PipelineConfig, RunStats, SubmitOutcome,
};
use crate::sched::{measure_throughput_loss, LossConfig, Policy};
use crate::traffic::{CommandGen, TrafficError, WorkloadSpec};

/// Environment variable that caps the worker thread count for parallel
/// sweeps.  Unset or unparsable means rayon's default.
pub const THREADS_ENV: &str = "NPQSIM_THREADS";

/// Whether a sweep's cells run on a rayon pool or one after another.  The
/// two produce identical results; Parallel degrades to sequential when the
/// `parallel` feature is compiled out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|n: &usize| *n > 0)
}

/// Map `job` over `inputs`, preserving input order in the output.
fn fan_out<I, O, F>(mode: ExecMode, inputs: Vec<I>, job: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Sync + Send,
{
    match mode {
        ExecMode::Sequential => inputs.into_iter().map(job).collect(),
        ExecMode::Parallel => fan_out_parallel(inputs, job),
    }
}

#[cfg(feature = "parallel")]
fn fan_out_parallel<I, O, F>(inputs: Vec<I>, job: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Sync + Send,
{
    use rayon::prelude::*;
    let pool = thread_cap()
        .and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok());
    let work = move || inputs.into_par_iter().map(|input| job(input)).collect();
    match pool {
        Some(pool) => pool.install(work),
        None => work(),
    }
}

#[cfg(not(feature = "parallel"))]
fn fan_out_parallel<I, O, F>(inputs: Vec<I>, job: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Sync + Send,
{
    let _ = thread_cap();
    inputs.into_iter().map(job).collect()
}

/// The bus-policy loss sweep: throughput loss per (bank count, policy,
/// penalty mode, seed), saturated random traffic on all four bus ports.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSweepConfig {
    pub banks: Vec<u32>,
    pub policies: Vec<Policy>,
    /// Charge the read→write turnaround cycle: off isolates bank conflicts,
    /// on adds the direction-turnaround effect.
    pub penalty_modes: Vec<bool>,
    pub seeds: Vec<u64>,
    /// Measured window, in access cycles.
    pub horizon: u64,
    pub warmup: u64,
    pub exec: ExecMode,
}

impl Default for LossSweepConfig {
    fn default() -> Self {
        LossSweepConfig {
            banks: vec![1, 4, 8, 12, 16],
            policies: vec![Policy::Naive, Policy::Optimized],
            penalty_modes: vec![false, true],
            seeds: (0..10).collect(),
            horizon: 1_000_000,
            warmup: 1_000,
            exec: ExecMode::default(),
        }
    }
}

/// One loss-sweep result row; `seed` is `None` on the per-cell mean row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub banks: u32,
    pub policy: Policy,
    pub penalty: bool,
    pub seed: Option<u64>,
    pub loss: f64,
}

fn penalty_name(penalty: bool) -> &'static str {
    if penalty {
        "on"
    } else {
        "off"
    }
}

/// Run the sweep.  Rows come out sorted by (banks, policy, penalty), the
/// seeds of a cell in config order, each cell closed by its mean row.
pub fn run_loss_sweep(cfg: &LossSweepConfig) -> Vec<LossRow> {
    let mut banks = cfg.banks.clone();
    banks.sort_unstable();
    banks.dedup();

    let mut cells = Vec::new();
    for &n_banks in &banks {
        for &policy in &cfg.policies {
            for &penalty in &cfg.penalty_modes {
                cells.push((n_banks, policy, penalty));
            }
        }
    }
    let jobs: Vec<(u32, Policy, bool, u64)> = cells
        .iter()
        .flat_map(|&(b, p, pen)| cfg.seeds.iter().map(move |&s| (b, p, pen, s)))
        .collect();
    let n_jobs = jobs.len();

    let losses = fan_out(cfg.exec, jobs, |(n_banks, policy, penalty, seed)| {
        let dram = crate::dram::DramConfig {
            n_banks,
            interleave_penalty: penalty,
            ..crate::dram::DramConfig::default()
        };
        let mut loss_cfg = LossConfig::new(policy, dram);
        loss_cfg.horizon = cfg.horizon;
        loss_cfg.warmup = cfg.warmup;
        measure_throughput_loss(&loss_cfg, seed)
    });

    let per_cell = cfg.seeds.len();
    let mut rows = Vec::with_capacity(n_jobs + cells.len());
    for (cell_idx, &(banks, policy, penalty)) in cells.iter().enumerate() {
        let cell_losses = &losses[cell_idx * per_cell..(cell_idx + 1) * per_cell];
        for (&seed, &loss) in cfg.seeds.iter().zip(cell_losses) {
            rows.push(LossRow { banks, policy, penalty, seed: Some(seed), loss });
        }
        let mean = cell_losses.iter().sum::<f64>() / per_cell as f64;
        rows.push(LossRow { banks, policy, penalty, seed: None, loss: mean });
    }
    rows
}

fn push_u64_list(out: &mut String, key: &str, values: impl IntoIterator<Item = u64>) {
    let list: Vec<String> = values.into_iter().map(|v| v.to_string()).collect();
    let _ = writeln!(out, "# {key}={}", list.join(","));
}

/// Render sweep rows as CSV, with the full configuration as `#` header
/// comments so a run can be reproduced from its output alone.
pub fn loss_sweep_csv(cfg: &LossSweepConfig, rows: &[LossRow]) -> String {
    let mut out = String::new();
    push_u64_list(&mut out, "banks", cfg.banks.iter().map(|&b| u64::from(b)));
    let policies: Vec<String> = cfg.policies.iter().map(|p| p.to_string()).collect();
    let _ = writeln!(out, "# policies={}", policies.join(","));
    let penalties: Vec<&str> = cfg.penalty_modes.iter().map(|&p| penalty_name(p)).collect();
    let _ = writeln!(out, "# penalty={}", penalties.join(","));
    push_u64_list(&mut out, "seeds", cfg.seeds.iter().copied());
    let _ = writeln!(out, "# horizon={}", cfg.horizon);
    let _ = writeln!(out, "# warmup={}", cfg.warmup);
    out.push_str("banks,policy,penalty,loss,seed,horizon\n");
    for row in rows {
        let seed = row.seed.map_or_else(|| "mean".to_string(), |s| s.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{},{}",
            row.banks,
            row.policy,
            penalty_name(row.penalty),
            row.loss,
            seed,
            cfg.horizon
        );
    }
    out
}

/// The delay sweep: drive the command pipeline at a list of offered loads
/// and report the mean delay decomposition per load point.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySweepConfig {
    pub loads_gbps: Vec<f64>,
    pub mix: Vec<(CommandKind, f64)>,
    pub flows: u32,
    pub seeds: Vec<u64>,
    pub duration_cycles: u64,
    pub pipeline: PipelineConfig,
    pub exec: ExecMode,
}

impl Default for DelaySweepConfig {
    fn default() -> Self {
        DelaySweepConfig {
            loads_gbps: vec![1.6, 3.2, 4.0, 4.8, 6.14],
            mix: vec![(CommandKind::Enqueue, 0.5), (CommandKind::Dequeue, 0.5)],
            flows: 64,
            seeds: vec![0, 1, 2],
            duration_cycles: 200_000,
            pipeline: PipelineConfig::default(),
            exec: ExecMode::default(),
        }
    }
}

/// Per-load-point results, each stat averaged over the seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayRow {
    pub offered_gbps: f64,
    pub delays: DelayBreakdown,
    pub mops: f64,
    pub gbps_served: f64,
    /// Mean faulted completions per run; nonzero means the workload
    /// generator admitted a command its own mirror should have blocked.
    pub faults: f64,
}

fn drive_one(load: f64, seed: u64, cfg: &DelaySweepConfig) -> RunStats {
    let spec = WorkloadSpec {
        offered_gbps: load,
        mix: cfg.mix.clone(),
        flows: cfg.flows,
        seed,
        duration_cycles: cfg.duration_cycles,
    };
    let budget = u64::from(cfg.pipeline.pool.segments)
        .saturating_sub((cfg.pipeline.ports * cfg.pipeline.fifo_depth) as u64);
    let mut gen = CommandGen::new(spec).expect("validated before fan-out").with_pool_budget(budget);
    let mut pipe = Pipeline::new(cfg.pipeline.clone());
    let mut buf = Vec::new();
    for cycle in 0..cfg.duration_cycles {
        gen.fill_cycle(cycle, &mut buf);
        for cmd in buf.drain(..) {
            if pipe.submit(cmd) == SubmitOutcome::Accepted {
                gen.on_accepted(&cmd);
            }
        }
        pipe.step();
    }
    while pipe.queued() > 0 || pipe.in_engine() > 0 {
        pipe.step();
    }
    pipe.stats().unwrap_or(RunStats {
        delays: DelayBreakdown { fifo_delay: 0.0, exec_delay: 0.0, data_delay: 0.0, total: 0.0 },
        mops: 0.0,
        gbps_served: 0.0,
        submitted: 0,
        rejected: 0,
        completed: 0,
        faults: 0,
    })
}

/// Run the sweep: one row per load point, stats averaged across seeds.
pub fn run_delay_sweep(cfg: &DelaySweepConfig) -> Result<Vec<DelayRow>, TrafficError> {
    if cfg.seeds.is_empty() {
        return Err(TrafficError::BadSpec("no seeds".into()));
    }
    // Surface bad load/mix/flow values before any simulation starts.
    for &load in &cfg.loads_gbps {
        WorkloadSpec {
            offered_gbps: load,
            mix: cfg.mix.clone(),
            flows: cfg.flows,
            seed: 0,
            duration_cycles: cfg.duration_cycles,
        }
        .validate()?;
    }

    let jobs: Vec<(f64, u64)> = cfg
        .loads_gbps
        .iter()
        .flat_map(|&load| cfg.seeds.iter().map(move |&s| (load, s)))
        .collect();
    let stats = fan_out(cfg.exec, jobs, |(load, seed)| drive_one(load, seed, cfg));

    let per_cell = cfg.seeds.len();
    let n = per_cell as f64;
    let rows = cfg
        .loads_gbps
        .iter()
        .enumerate()
        .map(|(i, &load)| {
            let cell = &stats[i * per_cell..(i + 1) * per_cell];
            let mean = |f: &dyn Fn(&RunStats) -> f64| cell.iter().map(|s| f(s)).sum::<f64>() / n;
            let fifo_delay = mean(&|s| s.delays.fifo_delay);
            let exec_delay = mean(&|s| s.delays.exec_delay);
            let data_delay = mean(&|s| s.delays.data_delay);
            DelayRow {
                offered_gbps: load,
                delays: DelayBreakdown {
                    fifo_delay,
                    exec_delay,
                    data_delay,
                    total: fifo_delay + exec_delay + data_delay,
                },
                mops: mean(&|s| s.mops),
                gbps_served: mean(&|s| s.gbps_served),
                faults: mean(&|s| s.faults as f64),
            }
        })
        .collect();
    Ok(rows)
}

/// Render delay-sweep rows as CSV with the configuration header.
pub fn delay_sweep_csv(cfg: &DelaySweepConfig, rows: &[DelayRow]) -> String {
    let mut out = String::new();
    let loads: Vec<String> = cfg.loads_gbps.iter().map(|l| format!("{l:.2}")).collect();
    let _ = writeln!(out, "# loads_gbps={}", loads.join(","));
    let mix: Vec<String> =
        cfg.mix.iter().map(|(kind, w)| format!("{}:{w:.2}", kind.name())).collect();
    let _ = writeln!(out, "# mix={}", mix.join(","));
    let _ = writeln!(out, "# flows={}", cfg.flows);
    push_u64_list(&mut out, "seeds", cfg.seeds.iter().copied());
    let _ = writeln!(out, "# duration_cycles={}", cfg.duration_cycles);
    let p = &cfg.pipeline;
    let _ = writeln!(out, "# dram.banks={}", p.dram.n_banks);
    let _ = writeln!(out, "# dram.interleave_penalty={}", p.dram.interleave_penalty);
    let _ = writeln!(out, "# pipeline.bus={}", p.bus_policy);
    let _ = writeln!(out, "# pipeline.fifo_depth={}", p.fifo_depth);
    out.push_str("offered_gbps,fifo_delay,exec_delay,data_delay,total_delay,mops,gbps_served\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{:.2},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
            row.offered_gbps,
            row.delays.fifo_delay,
            row.delays.exec_delay,
            row.delays.data_delay,
            row.delays.total,
            row.mops,
            row.gbps_served
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_loss_cfg(exec: ExecMode) -> LossSweepConfig {
        LossSweepConfig {
            banks: vec![1, 8],
            seeds: vec![0, 1, 2],
            horizon: 20_000,
            warmup: 500,
            exec,
            ..LossSweepConfig::default()
        }
    }

    #[test]
    fn loss_rows_group_per_cell_with_trailing_mean() {
        let cfg = small_loss_cfg(ExecMode::Sequential);
        let rows = run_loss_sweep(&cfg);
        // 2 banks × 2 policies × 2 penalties × (3 seeds + 1 mean)
        assert_eq!(rows.len(), 8 * 4);
        for cell in rows.chunks(4) {
            assert!(cell[..3].iter().all(|r| r.seed.is_some()));
            assert_eq!(cell[3].seed, None);
            let mean = cell[..3].iter().map(|r| r.loss).sum::<f64>() / 3.0;
            assert_eq!(cell[3].loss, mean);
            assert!(cell.iter().all(|r| (r.banks, r.policy, r.penalty)
                == (cell[0].banks, cell[0].policy, cell[0].penalty)));
        }
    }

    #[test]
    fn parallel_and_sequential_sweeps_agree_exactly() {
        let seq = run_loss_sweep(&small_loss_cfg(ExecMode::Sequential));
        let par = run_loss_sweep(&small_loss_cfg(ExecMode::Parallel));
        assert_eq!(seq, par);
    }

    #[test]
    fn thread_cap_env_preserves_results() {
        std::env::set_var(THREADS_ENV, "2");
        let capped = run_loss_sweep(&small_loss_cfg(ExecMode::Parallel));
        std::env::remove_var(THREADS_ENV);
        assert_eq!(capped, run_loss_sweep(&small_loss_cfg(ExecMode::Sequential)));
    }

    #[test]
    fn loss_csv_is_stable_and_well_formed() {
        let cfg = small_loss_cfg(ExecMode::Sequential);
        let rows = run_loss_sweep(&cfg);
        let csv = loss_sweep_csv(&cfg, &rows);
        assert_eq!(csv, loss_sweep_csv(&cfg, &run_loss_sweep(&cfg)));
        let mut lines = csv.lines().skip_while(|l| l.starts_with('#'));
        assert_eq!(lines.next(), Some("banks,policy,penalty,loss,seed,horizon"));
        let first = lines.next().unwrap();
        assert!(first.starts_with("1,naive,off,0.750000,0,20000"), "{first}");
        assert!(csv.lines().filter(|l| !l.starts_with('#')).count() == 1 + rows.len());
        assert!(csv.contains(",mean,"));
    }

    #[test]
    fn delay_sweep_reports_one_row_per_load_in_order() {
        let cfg = DelaySweepConfig {
            loads_gbps: vec![1.6, 4.8],
            seeds: vec![0],
            duration_cycles: 30_000,
            exec: ExecMode::Sequential,
            ..DelaySweepConfig::default()
        };
        let rows = run_delay_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].offered_gbps, 1.6);
        assert_eq!(rows[1].offered_gbps, 4.8);
        for row in &rows {
            assert_eq!(row.faults, 0.0);
            assert!(row.delays.exec_delay > 9.0 && row.delays.exec_delay < 12.0);
            assert!(row.gbps_served > 0.0);
        }
        let csv = delay_sweep_csv(&cfg, &rows);
        assert!(csv
            .lines()
            .any(|l| l == "offered_gbps,fifo_delay,exec_delay,data_delay,total_delay,mops,gbps_served"));
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 3);
    }

    #[test]
    fn delay_sweep_rejects_bad_loads() {
        let cfg = DelaySweepConfig {
            loads_gbps: vec![1.6, -1.0],
            exec: ExecMode::Sequential,
            ..DelaySweepConfig::default()
        };
        assert!(matches!(run_delay_sweep(&cfg), Err(TrafficError::BadSpec(_))));
    }
}
