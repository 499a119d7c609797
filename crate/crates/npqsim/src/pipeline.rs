//! Cycle-level model of the command path: per-port command FIFOs, a
//! priority scheduler, a single-issue execution engine with fixed
//! per-command latencies, and a data path through the banked data store.
//!
//! A command's life: it arrives in its port FIFO, waits for the engine
//! (FIFO delay), occupies the engine for its fixed latency (execution
//! delay), and — for data-bearing kinds — runs one segment transfer through
//! the data store, dispatched one core cycle after execution starts and
//! overlapping it (data delay).  The engine applies the queue-manager
//! semantics atomically when execution completes, so the functional outcome
//! equals running the same commands sequentially without timing.

use std::collections::VecDeque;

use thiserror::Error;

use crate::dram::{AccessKind, AccessRequest, DramConfig, DramModel};
use crate::qmgr::{
    AppendPosition, DeleteScope, PoolConfig, QueueError, QueueManager, SegmentData,
};
use crate::sched::{BusScheduler, Policy, Tick};

/// The command set the engine executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CommandKind {
    Enqueue,
    Read,
    Overwrite,
    Move,
    Delete,
    OverwriteLen,
    Dequeue,
    OverwriteLenAndMove,
    OverwriteAndMove,
    AppendHead,
    AppendTail,
}

impl CommandKind {
    pub const ALL: [CommandKind; 11] = [
        CommandKind::Enqueue,
        CommandKind::Read,
        CommandKind::Overwrite,
        CommandKind::Move,
        CommandKind::Delete,
        CommandKind::OverwriteLen,
        CommandKind::Dequeue,
        CommandKind::OverwriteLenAndMove,
        CommandKind::OverwriteAndMove,
        CommandKind::AppendHead,
        CommandKind::AppendTail,
    ];

    fn index(self) -> usize {
        Self::ALL.iter().position(|k| *k == self).unwrap()
    }

    /// Stable lowercase name, used in workload-mix config keys.
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Enqueue => "enqueue",
            CommandKind::Read => "read",
            CommandKind::Overwrite => "overwrite",
            CommandKind::Move => "move",
            CommandKind::Delete => "delete",
            CommandKind::OverwriteLen => "overwrite_len",
            CommandKind::Dequeue => "dequeue",
            CommandKind::OverwriteLenAndMove => "overwrite_len_and_move",
            CommandKind::OverwriteAndMove => "overwrite_and_move",
            CommandKind::AppendHead => "append_head",
            CommandKind::AppendTail => "append_tail",
        }
    }

    /// Inverse of [`name`](Self::name).
    pub fn from_name(name: &str) -> Option<CommandKind> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Direction of the segment transfer this kind performs, if any.
    /// Pointer-only commands (moves, deletes, length rewrites) never touch
    /// the data store.
    pub fn data_access(self) -> Option<AccessKind> {
        match self {
            CommandKind::Enqueue
            | CommandKind::Overwrite
            | CommandKind::OverwriteAndMove
            | CommandKind::AppendHead
            | CommandKind::AppendTail => Some(AccessKind::Write),
            CommandKind::Read | CommandKind::Dequeue => Some(AccessKind::Read),
            CommandKind::Move
            | CommandKind::Delete
            | CommandKind::OverwriteLen
            | CommandKind::OverwriteLenAndMove => None,
        }
    }
}

/// Fixed execution latency per command kind, in core cycles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecLatencyTable {
    cycles: [u64; CommandKind::ALL.len()],
}

impl Default for ExecLatencyTable {
    fn default() -> Self {
        let mut cycles = [0; CommandKind::ALL.len()];
        for kind in CommandKind::ALL {
            cycles[kind.index()] = match kind {
                CommandKind::Enqueue => 10,
                CommandKind::Read => 10,
                CommandKind::Overwrite => 10,
                CommandKind::Move => 11,
                CommandKind::Delete => 7,
                CommandKind::OverwriteLen => 7,
                CommandKind::Dequeue => 11,
                CommandKind::OverwriteLenAndMove => 12,
                CommandKind::OverwriteAndMove => 12,
                // The appends have no published latency; they walk the same
                // pointer sequence as an enqueue, so they borrow its cost.
                CommandKind::AppendHead => 10,
                CommandKind::AppendTail => 10,
            };
        }
        ExecLatencyTable { cycles }
    }
}

impl ExecLatencyTable {
    pub fn cycles(&self, kind: CommandKind) -> u64 {
        self.cycles[kind.index()]
    }
}

/// One queue-management request, as queued at a port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Command {
    pub kind: CommandKind,
    pub flow: u32,
    pub port: u8,
    /// Core cycle the command entered its FIFO; stamped by `submit`.
    pub arrival_cycle: u64,
    /// Segment payload, for kinds that write data.
    pub data: Option<SegmentData>,
    /// Segment length argument (enqueues, appends, length rewrites).
    pub len: u8,
    /// End-of-packet flag for enqueues.
    pub eop: bool,
    /// Destination flow for move kinds.
    pub dst: u32,
    /// Scope for deletes.
    pub scope: DeleteScope,
}

impl Command {
    fn new(kind: CommandKind, flow: u32) -> Self {
        Command {
            kind,
            flow,
            port: 0,
            arrival_cycle: 0,
            data: None,
            len: 64,
            eop: true,
            dst: flow,
            scope: DeleteScope::Segment,
        }
    }

    pub fn enqueue(flow: u32, data: SegmentData, len: u8, eop: bool) -> Self {
        Command { data: Some(data), len, eop, ..Self::new(CommandKind::Enqueue, flow) }
    }

    pub fn read(flow: u32) -> Self {
        Self::new(CommandKind::Read, flow)
    }

    pub fn overwrite(flow: u32, data: SegmentData) -> Self {
        Command { data: Some(data), ..Self::new(CommandKind::Overwrite, flow) }
    }

    pub fn move_packet(flow: u32, dst: u32) -> Self {
        Command { dst, ..Self::new(CommandKind::Move, flow) }
    }

    pub fn delete(flow: u32, scope: DeleteScope) -> Self {
        Command { scope, ..Self::new(CommandKind::Delete, flow) }
    }

    pub fn overwrite_len(flow: u32, len: u8) -> Self {
        Command { len, ..Self::new(CommandKind::OverwriteLen, flow) }
    }

    pub fn dequeue(flow: u32) -> Self {
        Self::new(CommandKind::Dequeue, flow)
    }

    pub fn overwrite_len_and_move(flow: u32, len: u8, dst: u32) -> Self {
        Command { len, dst, ..Self::new(CommandKind::OverwriteLenAndMove, flow) }
    }

    pub fn overwrite_and_move(flow: u32, data: SegmentData, dst: u32) -> Self {
        Command { data: Some(data), dst, ..Self::new(CommandKind::OverwriteAndMove, flow) }
    }

    pub fn append_head(flow: u32, data: SegmentData, len: u8) -> Self {
        Command { data: Some(data), len, ..Self::new(CommandKind::AppendHead, flow) }
    }

    pub fn append_tail(flow: u32, data: SegmentData, len: u8) -> Self {
        Command { data: Some(data), len, ..Self::new(CommandKind::AppendTail, flow) }
    }

    pub fn on_port(mut self, port: u8) -> Self {
        self.port = port;
        self
    }
}

/// Outcome of handing a command to a port FIFO.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmitOutcome {
    Accepted,
    Rejected(RejectReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    FifoFull,
}

/// Timing and sizing of the command path.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Core clock; 125 MHz gives the 8 ns cycle all latencies assume.
    pub core_clock_mhz: u32,
    /// Command slots per port FIFO.
    pub fifo_depth: usize,
    /// Number of command ports.
    pub ports: usize,
    /// Service priority per port; lower values are served first, ties
    /// round-robin.
    pub port_priorities: Vec<u32>,
    pub dram: DramConfig,
    pub pool: PoolConfig,
    pub bus_policy: Policy,
    /// Fixed input-path latency added to every command's FIFO delay — a
    /// calibration constant for the measured low-load floor, not a derived
    /// quantity.
    pub fifo_floor_cycles: u64,
    /// Fixed transfer-path latency added to every data delay (serialization
    /// and handshaking around the raw bank access) — likewise a calibration
    /// constant.
    pub data_path_cycles: u64,
    /// Seed forwarded to workload drivers; the pipeline itself is
    /// deterministic.
    pub seed: u64,
    /// Keep a log of completed commands (costs memory on long runs).
    pub record_completions: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            core_clock_mhz: 125,
            fifo_depth: 64,
            ports: 4,
            port_priorities: vec![0, 1, 2, 3],
            dram: DramConfig::default(),
            pool: PoolConfig::default(),
            bus_policy: Policy::Optimized,
            fifo_floor_cycles: 20,
            data_path_cycles: 19,
            seed: 0,
            record_completions: false,
        }
    }
}

/// Mean delay decomposition over completed commands, in core cycles.
/// `total` is the sum of the three components by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayBreakdown {
    pub fifo_delay: f64,
    pub exec_delay: f64,
    pub data_delay: f64,
    pub total: f64,
}

/// Aggregate results of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunStats {
    pub delays: DelayBreakdown,
    /// Completed operations per second, in millions.
    pub mops: f64,
    /// Served segment bandwidth: 64 bytes per data-bearing completion.
    pub gbps_served: f64,
    pub submitted: u64,
    pub rejected: u64,
    pub completed: u64,
    /// Completions whose queue operation returned an error.
    pub faults: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no commands have completed")]
pub struct NoData;

/// One completed command with the per-command delay components known at
/// completion time (the data phase settles asynchronously and is only
/// tracked in aggregate).
#[derive(Debug, Clone, Copy)]
pub struct Completion {
    pub cmd: Command,
    /// Wait from arrival to engine grant, plus the reporting floor.
    pub fifo_cycles: u64,
    /// Engine occupancy: the kind's fixed latency.
    pub exec_cycles: u64,
}

/// The command occupying the engine.
#[derive(Debug, Clone)]
struct InFlight {
    cmd: Command,
    grant: u64,
    done: u64,
    dispatched: bool,
}

/// A data access in the bus FIFO, waiting to be issued.
#[derive(Debug, Clone, Copy)]
struct DataTag {
    dispatch: u64,
}

#[derive(Debug)]
pub struct Pipeline {
    cfg: PipelineConfig,
    latencies: ExecLatencyTable,
    qm: QueueManager,
    fifos: Vec<VecDeque<Command>>,
    bus: BusScheduler,
    /// Core cycles per data-store access cycle (5 at the default clocks).
    dram_ratio: u64,
    core_cycle_ns: u64,
    now: u64,
    engine: Option<InFlight>,
    last_grant_port: usize,
    /// Dispatch bookkeeping per bus port, issue order = FIFO order.
    tags: Vec<VecDeque<DataTag>>,
    submitted: u64,
    rejected: u64,
    completed: u64,
    faults: u64,
    segment_ops: u64,
    fifo_sum: u64,
    exec_sum: u64,
    data_sum: u64,
    data_completed: u64,
    completions: Vec<Completion>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        assert_eq!(
            cfg.port_priorities.len(),
            cfg.ports,
            "one priority per port"
        );
        assert!(cfg.ports > 0 && cfg.fifo_depth > 0);
        let core_cycle_ns = 1000 / u64::from(cfg.core_clock_mhz);
        assert_eq!(
            core_cycle_ns * u64::from(cfg.core_clock_mhz),
            1000,
            "core clock must divide 1 GHz evenly"
        );
        let dram_ratio = cfg.dram.access_cycle_ns / core_cycle_ns;
        assert_eq!(
            dram_ratio * core_cycle_ns,
            cfg.dram.access_cycle_ns,
            "data-store access cycle must be a whole number of core cycles"
        );
        let bus = BusScheduler::new(DramModel::new(cfg.dram.clone()), cfg.bus_policy);
        Pipeline {
            qm: QueueManager::new(cfg.pool.clone()),
            fifos: vec![VecDeque::new(); cfg.ports],
            bus,
            dram_ratio,
            core_cycle_ns,
            now: 0,
            engine: None,
            last_grant_port: cfg.ports - 1,
            tags: vec![VecDeque::new(); crate::sched::PORT_COUNT],
            submitted: 0,
            rejected: 0,
            completed: 0,
            faults: 0,
            segment_ops: 0,
            fifo_sum: 0,
            exec_sum: 0,
            data_sum: 0,
            data_completed: 0,
            completions: Vec::new(),
            latencies: ExecLatencyTable::default(),
            cfg,
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn latencies(&self) -> &ExecLatencyTable {
        &self.latencies
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn queue_manager(&self) -> &QueueManager {
        &self.qm
    }

    /// Commands currently waiting in port FIFOs.
    pub fn queued(&self) -> usize {
        self.fifos.iter().map(VecDeque::len).sum()
    }

    pub fn fifo_len(&self, port: usize) -> usize {
        self.fifos[port].len()
    }

    /// Completed-command log; empty unless `record_completions` is set.
    pub fn completions(&self) -> &[Completion] {
        &self.completions
    }

    /// Queue a command at its port, stamping the arrival cycle.
    pub fn submit(&mut self, cmd: Command) -> SubmitOutcome {
        assert!((cmd.port as usize) < self.cfg.ports, "port out of range");
        self.submitted += 1;
        let fifo = &mut self.fifos[cmd.port as usize];
        if fifo.len() >= self.cfg.fifo_depth {
            self.rejected += 1;
            return SubmitOutcome::Rejected(RejectReason::FifoFull);
        }
        fifo.push_back(Command { arrival_cycle: self.now, ..cmd });
        SubmitOutcome::Accepted
    }

    /// Highest-priority non-empty port, round-robin among equal priorities.
    fn pick_port(&self) -> Option<usize> {
        let mut best: Option<(u32, usize)> = None;
        for step in 1..=self.cfg.ports {
            let port = (self.last_grant_port + step) % self.cfg.ports;
            if self.fifos[port].is_empty() {
                continue;
            }
            let prio = self.cfg.port_priorities[port];
            // Strictly-better only: the first port encountered in scan order
            // wins its priority class, which is the round-robin tie-break.
            if best.map_or(true, |(b, _)| prio < b) {
                best = Some((prio, port));
            }
        }
        best.map(|(_, port)| port)
    }

    fn grant(&mut self) {
        let Some(port) = self.pick_port() else { return };
        let cmd = self.fifos[port].pop_front().unwrap();
        self.fifo_sum += self.now - cmd.arrival_cycle + self.cfg.fifo_floor_cycles;
        let done = self.now + self.latencies.cycles(cmd.kind);
        self.engine = Some(InFlight { cmd, grant: self.now, done, dispatched: false });
        self.last_grant_port = port;
    }

    /// Slot the command's data transfer will touch, peeked ahead of the
    /// functional update: allocating kinds take the free-list head, the rest
    /// work on their flow's head segment.  `None` means the command is going
    /// to fail and moves no data.
    fn data_target(&self, cmd: &Command) -> Option<u32> {
        match cmd.kind {
            CommandKind::Enqueue | CommandKind::AppendHead | CommandKind::AppendTail => {
                self.qm.free_head()
            }
            _ => self.qm.flow_head(cmd.flow),
        }
    }

    /// One core cycle after execution starts, the pointer fetch is done and
    /// the segment transfer enters the data store's port FIFO.
    fn dispatch_data(&mut self) {
        let Some(fl) = &mut self.engine else { return };
        if fl.dispatched || self.now != fl.grant + 1 {
            return;
        }
        fl.dispatched = true;
        let Some(direction) = fl.cmd.kind.data_access() else { return };
        let cmd = fl.cmd;
        let Some(slot) = self.data_target(&cmd) else { return };
        let bank = slot % self.bus.dram.config().n_banks;
        // Engine-side bus ports: writes on the first write port, reads on
        // the first read port.
        let bus_port = match direction {
            AccessKind::Write => 0,
            AccessKind::Read => 2,
        };
        self.bus.fifos.push(bus_port, AccessRequest { bank, kind: direction, port: bus_port as u8 });
        self.tags[bus_port].push_back(DataTag { dispatch: self.now });
    }

    fn apply(&mut self, cmd: &Command) -> Result<(), QueueError> {
        let data = cmd.data.unwrap_or_default();
        match cmd.kind {
            CommandKind::Enqueue => {
                self.qm.enqueue_segment(cmd.flow, data, cmd.len, cmd.eop).map(|_| ())
            }
            CommandKind::Read => self.qm.read_segment(cmd.flow).map(|_| ()),
            CommandKind::Overwrite => self.qm.overwrite_segment(cmd.flow, data),
            CommandKind::Move => self.qm.move_packet(cmd.flow, cmd.dst),
            CommandKind::Delete => self.qm.delete_head(cmd.flow, cmd.scope).map(|_| ()),
            CommandKind::OverwriteLen => self.qm.overwrite_length(cmd.flow, cmd.len),
            CommandKind::Dequeue => self.qm.dequeue_segment(cmd.flow).map(|_| ()),
            CommandKind::OverwriteLenAndMove => {
                self.qm.overwrite_length_then_move(cmd.flow, cmd.len, cmd.dst)
            }
            CommandKind::OverwriteAndMove => self.qm.overwrite_then_move(cmd.flow, data, cmd.dst),
            CommandKind::AppendHead => self
                .qm
                .append_segment(cmd.flow, AppendPosition::HeadOfPacket, data, cmd.len)
                .map(|_| ()),
            CommandKind::AppendTail => self
                .qm
                .append_segment(cmd.flow, AppendPosition::TailOfPacket, data, cmd.len)
                .map(|_| ()),
        }
    }

    fn complete_exec(&mut self) {
        let Some(fl) = self.engine.take() else { return };
        let cmd = fl.cmd;
        let outcome = self.apply(&cmd);
        self.completed += 1;
        self.exec_sum += fl.done - fl.grant;
        match outcome {
            Ok(()) => {
                if cmd.kind.data_access().is_some() {
                    self.segment_ops += 1;
                }
            }
            Err(_) => self.faults += 1,
        }
        if self.cfg.record_completions {
            self.completions.push(Completion {
                cmd,
                fifo_cycles: fl.grant - cmd.arrival_cycle + self.cfg.fifo_floor_cycles,
                exec_cycles: fl.done - fl.grant,
            });
        }
    }

    /// Advance one core cycle.
    pub fn step(&mut self) {
        if self.engine.as_ref().is_some_and(|fl| fl.done == self.now) {
            self.complete_exec();
        }
        if self.engine.is_none() {
            self.grant();
        }
        self.dispatch_data();
        if self.now % self.dram_ratio == 0 {
            let access_now = self.now / self.dram_ratio;
            if let Tick::Issued(access) = self.bus.tick(access_now) {
                let tag = self.tags[access.port]
                    .pop_front()
                    .expect("every engine data access is tagged");
                let done_core = access.result.completion_ns.div_ceil(self.core_cycle_ns);
                self.data_sum += done_core - tag.dispatch + self.cfg.data_path_cycles;
                self.data_completed += 1;
            }
        }
        self.now += 1;
    }

    pub fn run_until(&mut self, cycle: u64) {
        while self.now < cycle {
            self.step();
        }
    }

    /// Commands in flight (0 or 1; the engine is single-issue).
    pub fn in_engine(&self) -> u64 {
        u64::from(self.engine.is_some())
    }

    pub fn stats(&self) -> Result<RunStats, NoData> {
        if self.completed == 0 {
            return Err(NoData);
        }
        let fifo_delay = self.fifo_sum as f64 / self.completed as f64;
        let exec_delay = self.exec_sum as f64 / self.completed as f64;
        // Data delay averages over commands that moved a segment; the
        // pointer-only kinds have no data phase to fold in.
        let data_delay = if self.data_completed > 0 {
            self.data_sum as f64 / self.data_completed as f64
        } else {
            0.0
        };
        let cycles = self.now.max(1) as f64;
        let mhz = f64::from(self.cfg.core_clock_mhz);
        Ok(RunStats {
            delays: DelayBreakdown {
                fifo_delay,
                exec_delay,
                data_delay,
                total: fifo_delay + exec_delay + data_delay,
            },
            mops: mhz * self.completed as f64 / cycles,
            gbps_served: 64.0 * 8.0 * (mhz / 1000.0) * self.segment_ops as f64 / cycles,
            submitted: self.submitted,
            rejected: self.rejected,
            completed: self.completed,
            faults: self.faults,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_cfg() -> PipelineConfig {
        // No reporting floors: the raw queueing numbers are the assertions.
        PipelineConfig {
            fifo_floor_cycles: 0,
            data_path_cycles: 0,
            record_completions: true,
            ..PipelineConfig::default()
        }
    }

    fn payload(tag: u8) -> SegmentData {
        SegmentData([tag; 64])
    }

    #[test]
    fn latency_table_holds_the_published_values() {
        let lat = ExecLatencyTable::default();
        let expect = [
            (CommandKind::Enqueue, 10),
            (CommandKind::Read, 10),
            (CommandKind::Overwrite, 10),
            (CommandKind::Move, 11),
            (CommandKind::Delete, 7),
            (CommandKind::OverwriteLen, 7),
            (CommandKind::Dequeue, 11),
            (CommandKind::OverwriteLenAndMove, 12),
            (CommandKind::OverwriteAndMove, 12),
            (CommandKind::AppendHead, 10),
            (CommandKind::AppendTail, 10),
        ];
        for (kind, cycles) in expect {
            assert_eq!(lat.cycles(kind), cycles, "{kind:?}");
        }
    }

    #[test]
    fn single_enqueue_into_idle_system() {
        let mut pipe = Pipeline::new(quiet_cfg());
        assert_eq!(pipe.submit(Command::enqueue(0, payload(1), 64, true)), SubmitOutcome::Accepted);
        pipe.run_until(40);
        let stats = pipe.stats().unwrap();
        assert_eq!(stats.completed, 1);
        assert_eq!(stats.faults, 0);
        assert_eq!(stats.delays.fifo_delay, 0.0, "granted the cycle it arrived");
        assert_eq!(stats.delays.exec_delay, 10.0);
        assert_eq!(pipe.queue_manager().flow(0).unwrap().seg_count(), 1);
    }

    #[test]
    fn stats_need_at_least_one_completion() {
        let pipe = Pipeline::new(quiet_cfg());
        assert_eq!(pipe.stats(), Err(NoData));
    }

    #[test]
    fn idle_steps_only_advance_the_clock() {
        let mut pipe = Pipeline::new(quiet_cfg());
        pipe.run_until(100);
        assert_eq!(pipe.now(), 100);
        assert_eq!(pipe.queued(), 0);
        assert_eq!(pipe.in_engine(), 0);
        assert_eq!(pipe.queue_manager().free_count(), pipe.config().pool.segments);
    }

    #[test]
    fn alternating_enqueue_dequeue_executes_at_ten_and_a_half() {
        let mut pipe = Pipeline::new(quiet_cfg());
        let mut sent = 0u64;
        let total = 2_000u64;
        while pipe.stats().map_or(0, |s| s.completed) < total {
            // Keep port 0 backlogged with the strict E/D alternation.
            while sent < total && pipe.fifo_len(0) < pipe.config().fifo_depth {
                let cmd = if sent % 2 == 0 {
                    Command::enqueue(0, payload(sent as u8), 64, true)
                } else {
                    Command::dequeue(0)
                };
                if pipe.submit(cmd) == SubmitOutcome::Accepted {
                    sent += 1;
                } else {
                    break;
                }
            }
            pipe.step();
        }
        let stats = pipe.stats().unwrap();
        assert_eq!(stats.completed, total);
        assert_eq!(stats.faults, 0);
        assert_eq!(stats.delays.exec_delay, 10.5, "strict E/D alternation");
    }

    #[test]
    fn priorities_outrank_round_robin() {
        let mut cfg = quiet_cfg();
        cfg.port_priorities = vec![1, 0, 0, 2];
        let mut pipe = Pipeline::new(cfg);
        for port in 0..4u8 {
            for n in 0..2 {
                pipe.submit(Command::enqueue(u32::from(port), payload(n), 64, true).on_port(port));
            }
        }
        while pipe.queued() > 0 || pipe.in_engine() > 0 {
            pipe.step();
        }
        // Single-issue engine: completion order is grant order.  Ports 1 and
        // 2 share the top priority and alternate; then port 0, then port 3.
        let order: Vec<u8> = pipe.completions().iter().map(|c| c.cmd.port).collect();
        assert_eq!(order, vec![1, 2, 1, 2, 0, 0, 3, 3]);
    }

    #[test]
    fn fifo_depth_bounds_acceptance() {
        let mut pipe = Pipeline::new(quiet_cfg());
        // No step() yet: the engine never drains anything.
        for n in 0..64 {
            assert_eq!(
                pipe.submit(Command::enqueue(0, payload(n as u8), 64, true)),
                SubmitOutcome::Accepted,
                "submit {n}"
            );
        }
        assert_eq!(
            pipe.submit(Command::enqueue(0, payload(64), 64, true)),
            SubmitOutcome::Rejected(RejectReason::FifoFull)
        );
        let stats_err = pipe.stats();
        assert_eq!(stats_err, Err(NoData));
        assert_eq!(pipe.queued(), 64);
    }

    #[test]
    fn per_port_completion_order_is_submission_order() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let mut pipe = Pipeline::new(quiet_cfg());
        let mut expected: Vec<Vec<u8>> = vec![Vec::new(); 4];
        let mut tag = 0u8;
        for _ in 0..200 {
            for port in 0..4u8 {
                if rng.random_bool(0.4) && pipe.fifo_len(port as usize) < 64 {
                    let cmd = Command::enqueue(u32::from(port), payload(tag), 64, true).on_port(port);
                    if pipe.submit(cmd) == SubmitOutcome::Accepted {
                        expected[port as usize].push(tag);
                    }
                    tag = tag.wrapping_add(1);
                }
            }
            pipe.step();
        }
        while pipe.queued() > 0 || pipe.in_engine() > 0 {
            pipe.step();
        }
        let mut seen: Vec<Vec<u8>> = vec![Vec::new(); 4];
        for c in pipe.completions() {
            seen[c.cmd.port as usize].push(c.cmd.data.unwrap().0[0]);
        }
        assert_eq!(seen, expected);
    }

    #[test]
    fn conservation_holds_every_cycle() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let mut pipe = Pipeline::new(quiet_cfg());
        for _ in 0..5_000 {
            for port in 0..4u8 {
                if rng.random_bool(0.2) {
                    let flow = u32::from(port) + 4 * rng.random_range(0..8u32);
                    let cmd = if rng.random_bool(0.5) {
                        Command::enqueue(flow, payload(rng.random()), 64, true).on_port(port)
                    } else {
                        Command::dequeue(flow).on_port(port)
                    };
                    pipe.submit(cmd);
                }
            }
            pipe.step();
            let stats = pipe.submitted;
            let accounted =
                pipe.completed + pipe.queued() as u64 + pipe.in_engine() + pipe.rejected;
            assert_eq!(stats, accounted, "cycle {}", pipe.now());
        }
    }

    #[test]
    fn timed_run_matches_untimed_replay() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(47);
        let mut pipe = Pipeline::new(quiet_cfg());
        for _ in 0..3_000 {
            for port in 0..4u8 {
                if rng.random_bool(0.3) {
                    let flow = u32::from(port) + 4 * rng.random_range(0..4u32);
                    let cmd = match rng.random_range(0..4) {
                        0 | 1 => Command::enqueue(flow, payload(rng.random()), rng.random_range(1..=64), true),
                        2 => Command::dequeue(flow),
                        _ => Command::delete(flow, DeleteScope::Packet),
                    };
                    pipe.submit(cmd.on_port(port));
                }
            }
            pipe.step();
        }
        while pipe.queued() > 0 || pipe.in_engine() > 0 {
            pipe.step();
        }
        let mut replay = QueueManager::new(pipe.config().pool.clone());
        for c in pipe.completions() {
            let cmd = &c.cmd;
            let data = cmd.data.unwrap_or_default();
            let _ = match cmd.kind {
                CommandKind::Enqueue => replay.enqueue_segment(cmd.flow, data, cmd.len, cmd.eop).map(|_| ()),
                CommandKind::Dequeue => replay.dequeue_segment(cmd.flow).map(|_| ()),
                CommandKind::Delete => replay.delete_head(cmd.flow, cmd.scope).map(|_| ()),
                _ => unreachable!("not generated here"),
            };
        }
        assert_eq!(pipe.queue_manager(), &replay);
    }

    #[test]
    fn delay_components_sum_to_the_total() {
        let mut pipe = Pipeline::new(PipelineConfig::default());
        for n in 0..32 {
            pipe.submit(Command::enqueue(0, payload(n), 64, true));
            pipe.submit(Command::dequeue(0));
        }
        pipe.run_until(2_000);
        let s = pipe.stats().unwrap();
        assert_eq!(s.delays.total, s.delays.fifo_delay + s.delays.exec_delay + s.delays.data_delay);
        assert!(s.delays.fifo_delay >= 20.0, "floor is part of the reported delay");
        assert!(s.delays.data_delay > 0.0);
    }

    #[test]
    fn data_phase_overlaps_execution() {
        // A lone enqueue: exec takes 10 cycles, the data write dispatches at
        // grant+1 and lands before exec completes, so the engine cadence is
        // never data-bound.
        let mut pipe = Pipeline::new(quiet_cfg());
        pipe.submit(Command::enqueue(0, payload(1), 64, true));
        pipe.run_until(60);
        let s = pipe.stats().unwrap();
        assert_eq!(s.completed, 1);
        // Dispatch at cycle 1; the write's slot 0 hits bank 0, first access
        // cycle 1 (core cycle 5), completion 80 ns = core cycle 10; the
        // delay is 10 - 1 = 9 core cycles with no path constant.
        assert_eq!(s.delays.data_delay, 9.0);
    }
}
