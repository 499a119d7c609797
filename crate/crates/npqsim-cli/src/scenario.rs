//! Scenario configuration: a flat key=value model covering every experiment
//! parameter, parsed from scenario files and `--set` overrides alike.

use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use npqsim::experiment::{DelaySweepConfig, ExecMode, LossSweepConfig};
use npqsim::pipeline::CommandKind;
use npqsim::sched::Policy;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("simulation error: {0}")]
    Simulation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Bus-policy throughput-loss sweep over bank counts.
    LossSweep,
    /// Command-pipeline delay sweep over offered loads.
    DelaySweep,
    /// Analytic cost report; takes no simulation parameters.
    CostReport,
}

/// Everything one invocation runs: the chosen experiment plus a full
/// parameter set for each, so overrides can be applied uniformly.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub experiment: Experiment,
    pub loss: LossSweepConfig,
    pub delay: DelaySweepConfig,
    pub out: Option<PathBuf>,
}

fn bad<T>(msg: String) -> Result<T, CliError> {
    Err(CliError::Config(msg))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(|item| {
            item.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{key}: cannot parse {:?}", item.trim())))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {:?}", value.trim())))
}

fn parse_policy(key: &str, item: &str) -> Result<Policy, CliError> {
    match item {
        "naive" => Ok(Policy::Naive),
        "optimized" => Ok(Policy::Optimized),
        other => bad(format!("{key}: unknown policy {other:?} (naive|optimized)")),
    }
}

impl Scenario {
    pub fn new(experiment: Experiment) -> Self {
        Scenario {
            experiment,
            loss: LossSweepConfig::default(),
            delay: DelaySweepConfig::default(),
            out: None,
        }
    }

    /// Replace the seed list of whichever sweeps the scenario can run.
    pub fn set_seeds(&mut self, seeds: &[u64]) {
        self.loss.seeds = seeds.to_vec();
        self.delay.seeds = seeds.to_vec();
    }

    /// Simulation length: the loss sweep's measured window and the delay
    /// sweep's driven duration, in their respective cycle units.
    pub fn set_horizon(&mut self, horizon: u64) {
        self.loss.horizon = horizon;
        self.delay.duration_cycles = horizon;
    }

    /// Apply one dotted-key override.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "experiment" => {
                self.experiment = match value {
                    "table1" => Experiment::LossSweep,
                    "table5" => Experiment::DelaySweep,
                    "cost" => Experiment::CostReport,
                    other => {
                        return bad(format!("experiment: unknown {other:?} (table1|table5|cost)"))
                    }
                };
            }
            "seeds" => self.set_seeds(&parse_list(key, value)?),
            "horizon" => self.set_horizon(parse_one(key, value)?),
            "warmup" => self.loss.warmup = parse_one(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "exec" => {
                let mode = match value {
                    "sequential" => ExecMode::Sequential,
                    "parallel" => ExecMode::Parallel,
                    other => return bad(format!("exec: unknown {other:?} (sequential|parallel)")),
                };
                self.loss.exec = mode;
                self.delay.exec = mode;
            }
            "table1.banks" => self.loss.banks = parse_list(key, value)?,
            "table1.policies" => {
                self.loss.policies = value
                    .split(',')
                    .map(|item| parse_policy(key, item.trim()))
                    .collect::<Result<_, _>>()?;
            }
            "table1.penalty" => {
                self.loss.penalty_modes = value
                    .split(',')
                    .map(|item| match item.trim() {
                        "off" => Ok(false),
                        "on" => Ok(true),
                        other => bad(format!("{key}: unknown mode {other:?} (off|on)")),
                    })
                    .collect::<Result<_, _>>()?;
            }
            "table5.loads" => self.delay.loads_gbps = parse_list(key, value)?,
            "table5.flows" => self.delay.flows = parse_one(key, value)?,
            "table5.duration" => self.delay.duration_cycles = parse_one(key, value)?,
            "table5.mix" => {
                self.delay.mix = value
                    .split(',')
                    .map(|item| {
                        let item = item.trim();
                        let (name, weight) = item.split_once(':').ok_or_else(|| {
                            CliError::Config(format!("{key}: want kind:weight, got {item:?}"))
                        })?;
                        let kind = CommandKind::from_name(name.trim()).ok_or_else(|| {
                            CliError::Config(format!("{key}: unknown command kind {name:?}"))
                        })?;
                        Ok((kind, parse_one::<f64>(key, weight)?))
                    })
                    .collect::<Result<_, _>>()?;
            }
            "dram.banks" => self.delay.pipeline.dram.n_banks = parse_one(key, value)?,
            "dram.interleave_penalty" => {
                self.delay.pipeline.dram.interleave_penalty = parse_one(key, value)?
            }
            "pipeline.bus" => self.delay.pipeline.bus_policy = parse_policy(key, value)?,
            "pipeline.fifo_depth" => self.delay.pipeline.fifo_depth = parse_one(key, value)?,
            "pipeline.fifo_floor" => {
                self.delay.pipeline.fifo_floor_cycles = parse_one(key, value)?
            }
            "pipeline.data_path" => {
                self.delay.pipeline.data_path_cycles = parse_one(key, value)?
            }
            "pipeline.priorities" => {
                let priorities: Vec<u32> = parse_list(key, value)?;
                if priorities.len() != self.delay.pipeline.ports {
                    return bad(format!(
                        "{key}: want {} entries, got {}",
                        self.delay.pipeline.ports,
                        priorities.len()
                    ));
                }
                self.delay.pipeline.port_priorities = priorities;
            }
            other => return bad(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Apply a `KEY=VALUE` override string (the `--set` form).
    pub fn apply_set(&mut self, pair: &str) -> Result<(), CliError> {
        let Some((key, value)) = pair.split_once('=') else {
            return bad(format!("--set {pair:?}: want KEY=VALUE"));
        };
        self.apply(key.trim(), value.trim())
    }

    /// Apply a scenario file's lines: `key = value` per line, `#` comments
    /// and blank lines ignored, errors identified by line number.
    pub fn apply_file_text(&mut self, text: &str) -> Result<(), CliError> {
        let mut saw_experiment = false;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return bad(format!("line {}: want key=value, got {line:?}", idx + 1));
            };
            let key = key.trim();
            saw_experiment |= key == "experiment";
            self.apply(key, value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {e}", idx + 1)))?;
        }
        if !saw_experiment {
            return bad("scenario file sets no experiment= key".into());
        }
        Ok(())
    }
}
