//! Packet segmentation and reassembly, plus deterministic workload
//! generation for the command pipeline's load sweeps.
//!
//! The generator assigns each flow to the port `flow % 4` and keeps every
//! command for a flow — including the destination of a move — inside that
//! port class.  Per-port FIFOs preserve submission order, so a command that
//! was valid against the generator's mirror when it was emitted is still
//! valid when the engine executes it.

use std::collections::VecDeque;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::pipeline::{Command, CommandKind};
use crate::qmgr::{SegmentData, SegmentPayload, SEGMENT_BYTES};

/// A packet awaiting segmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub flow: u32,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrafficError {
    #[error("packet has no bytes")]
    EmptyPacket,
    #[error("segment sequence has no end-of-packet marker")]
    MissingEop,
    #[error("segment {index} is {len} bytes but only the last segment may be short")]
    InteriorShortSegment { index: usize, len: u8 },
    #[error("end-of-packet marker on segment {0} before the end of the sequence")]
    EarlyEop(usize),
    #[error("segment {index} has invalid length {len}")]
    BadSegmentLength { index: usize, len: u8 },
    #[error("workload spec invalid: {0}")]
    BadSpec(String),
}

/// Cut a packet into 64-byte segments.  Every segment is full except
/// possibly the last, which carries the end-of-packet mark.
pub fn segment_packet(packet: &Packet) -> Result<Vec<SegmentPayload>, TrafficError> {
    if packet.bytes.is_empty() {
        return Err(TrafficError::EmptyPacket);
    }
    let chunks: Vec<&[u8]> = packet.bytes.chunks(SEGMENT_BYTES).collect();
    Ok(chunks
        .iter()
        .enumerate()
        .map(|(i, chunk)| SegmentPayload {
            data: SegmentData::from_prefix(chunk),
            len: chunk.len() as u8,
            eop: i + 1 == chunks.len(),
        })
        .collect())
}

/// Glue a well-formed segment sequence back into the packet's byte stream.
/// Inverse of [`segment_packet`].
pub fn reassemble(segments: &[SegmentPayload]) -> Result<Vec<u8>, TrafficError> {
    let Some(last) = segments.len().checked_sub(1) else {
        return Err(TrafficError::MissingEop);
    };
    let mut bytes = Vec::with_capacity(segments.len() * SEGMENT_BYTES);
    for (index, seg) in segments.iter().enumerate() {
        if seg.len == 0 || seg.len as usize > SEGMENT_BYTES {
            return Err(TrafficError::BadSegmentLength { index, len: seg.len });
        }
        if index < last {
            if seg.eop {
                return Err(TrafficError::EarlyEop(index));
            }
            if (seg.len as usize) < SEGMENT_BYTES {
                return Err(TrafficError::InteriorShortSegment { index, len: seg.len });
            }
        } else if !seg.eop {
            return Err(TrafficError::MissingEop);
        }
        bytes.extend_from_slice(&seg.data.as_bytes()[..seg.len as usize]);
    }
    Ok(bytes)
}

/// Offered load and shape of a generated command stream.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    /// Offered segment bandwidth; one command moves 64 bytes.
    pub offered_gbps: f64,
    /// Command mix as (kind, weight) pairs; weights must sum to 1.
    pub mix: Vec<(CommandKind, f64)>,
    pub flows: u32,
    pub seed: u64,
    pub duration_cycles: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            offered_gbps: 3.2,
            mix: vec![(CommandKind::Enqueue, 0.5), (CommandKind::Dequeue, 0.5)],
            flows: 64,
            seed: 0,
            duration_cycles: 100_000,
        }
    }
}

/// Command ports the generator spreads arrivals over.
const GEN_PORTS: u32 = 4;
/// Core cycles per second at the 125 MHz clock, per Gbps of offered load:
/// at 8 ns per cycle, one 64-byte command per cycle is 64 Gbit/s, so each
/// port (of four) sees `gbps / 256` arrivals per cycle.
const GBPS_PER_PORT_SATURATION: f64 = 256.0;

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), TrafficError> {
        if !(self.offered_gbps > 0.0 && self.offered_gbps <= GBPS_PER_PORT_SATURATION) {
            return Err(TrafficError::BadSpec(format!(
                "offered_gbps {} outside (0, {GBPS_PER_PORT_SATURATION}]",
                self.offered_gbps
            )));
        }
        if self.flows < GEN_PORTS || self.flows > 32_768 {
            return Err(TrafficError::BadSpec(format!(
                "flows {} outside {GEN_PORTS}..=32768 (one flow per port minimum)",
                self.flows
            )));
        }
        if self.mix.is_empty() {
            return Err(TrafficError::BadSpec("empty command mix".into()));
        }
        let total: f64 = self.mix.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-6 || self.mix.iter().any(|(_, w)| *w < 0.0) {
            return Err(TrafficError::BadSpec(format!("mix weights sum to {total}, want 1")));
        }
        Ok(())
    }
}

/// Mirror of one flow: the end-of-packet flag of every queued segment.
type FlowMirror = VecDeque<bool>;

/// Deterministic command source.
///
/// Protocol: call [`fill_cycle`](Self::fill_cycle) once per core cycle,
/// submit each command, and report every acceptance back through
/// [`on_accepted`](Self::on_accepted) before the next cycle.  The mirror
/// tracks accepted commands only, so rejected submissions need no rollback.
#[derive(Debug, Clone)]
pub struct CommandGen {
    spec: WorkloadSpec,
    rng: ChaCha8Rng,
    per_port_rate: f64,
    mirror: Vec<FlowMirror>,
    pool_used: u64,
    pool_budget: u64,
}

impl CommandGen {
    pub fn new(spec: WorkloadSpec) -> Result<Self, TrafficError> {
        spec.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(spec.seed);
        Ok(CommandGen {
            per_port_rate: spec.offered_gbps / GBPS_PER_PORT_SATURATION,
            mirror: vec![FlowMirror::new(); spec.flows as usize],
            pool_used: 0,
            // Leave room for every command the port FIFOs can hold, so an
            // allocation admitted against the mirror cannot find the pool
            // exhausted by in-flight commands.
            pool_budget: u64::from(crate::qmgr::PoolConfig::default().segments)
                - u64::from(GEN_PORTS) * 64,
            rng,
            spec,
        })
    }

    /// Bound the segment allocations the generator will keep in flight.
    /// Use when the pipeline's pool is not the default size.
    pub fn with_pool_budget(mut self, segments: u64) -> Self {
        self.pool_budget = segments;
        self
    }

    pub fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }

    fn draw_kind(&mut self) -> CommandKind {
        let mut roll: f64 = self.rng.random();
        for (kind, weight) in &self.spec.mix {
            if roll < *weight {
                return *kind;
            }
            roll -= weight;
        }
        self.spec.mix.last().unwrap().0
    }

    fn random_data(&mut self) -> SegmentData {
        let mut bytes = [0u8; SEGMENT_BYTES];
        self.rng.fill(&mut bytes);
        SegmentData(bytes)
    }

    /// Uniform flow in `port`'s class.
    fn draw_flow(&mut self, port: u32) -> u32 {
        let class = (self.spec.flows - 1 - port) / GEN_PORTS + 1;
        port + GEN_PORTS * self.rng.random_range(0..class)
    }

    /// First end-of-packet position in a mirror, if the head packet is
    /// complete.
    fn head_packet_end(flow: &FlowMirror) -> Option<usize> {
        flow.iter().position(|eop| *eop)
    }

    /// Whether `kind` can execute against the mirrored state of `flow`.
    fn admissible(&self, kind: CommandKind, flow: u32) -> bool {
        let q = &self.mirror[flow as usize];
        match kind {
            CommandKind::Enqueue => self.pool_used < self.pool_budget,
            CommandKind::Read
            | CommandKind::Overwrite
            | CommandKind::OverwriteLen
            | CommandKind::Dequeue
            | CommandKind::Delete => !q.is_empty(),
            CommandKind::AppendHead => !q.is_empty() && self.pool_used < self.pool_budget,
            CommandKind::AppendTail => {
                Self::head_packet_end(q).is_some() && self.pool_used < self.pool_budget
            }
            CommandKind::Move
            | CommandKind::OverwriteLenAndMove
            | CommandKind::OverwriteAndMove => Self::head_packet_end(q).is_some(),
        }
    }

    fn build(&mut self, kind: CommandKind, flow: u32, port: u32) -> Command {
        let cmd = match kind {
            // Generated enqueues carry one complete 64-byte packet — the
            // unit the rate accounting assumes.
            CommandKind::Enqueue => Command::enqueue(flow, self.random_data(), 64, true),
            CommandKind::Read => Command::read(flow),
            CommandKind::Overwrite => Command::overwrite(flow, self.random_data()),
            CommandKind::OverwriteLen => {
                Command::overwrite_len(flow, self.rng.random_range(1..=64))
            }
            CommandKind::Dequeue => Command::dequeue(flow),
            CommandKind::Delete => Command::delete(flow, crate::qmgr::DeleteScope::Segment),
            CommandKind::AppendHead => {
                Command::append_head(flow, self.random_data(), self.rng.random_range(1..=64))
            }
            CommandKind::AppendTail => {
                Command::append_tail(flow, self.random_data(), self.rng.random_range(1..=64))
            }
            CommandKind::Move => Command::move_packet(flow, self.draw_flow(port)),
            CommandKind::OverwriteLenAndMove => Command::overwrite_len_and_move(
                flow,
                self.rng.random_range(1..=64),
                self.draw_flow(port),
            ),
            CommandKind::OverwriteAndMove => {
                Command::overwrite_and_move(flow, self.random_data(), self.draw_flow(port))
            }
        };
        cmd.on_port(port as u8)
    }

    /// Emit this cycle's arrivals: at most one command per port, Bernoulli
    /// at the offered rate.  A drawn kind whose precondition the mirror
    /// rules out falls back to an enqueue (or is skipped when even that
    /// cannot be admitted).
    pub fn fill_cycle(&mut self, cycle: u64, out: &mut Vec<Command>) {
        if cycle >= self.spec.duration_cycles {
            return;
        }
        for port in 0..GEN_PORTS {
            if !self.rng.random_bool(self.per_port_rate) {
                continue;
            }
            let flow = self.draw_flow(port);
            let mut kind = self.draw_kind();
            if !self.admissible(kind, flow) {
                kind = CommandKind::Enqueue;
                if !self.admissible(kind, flow) {
                    continue;
                }
            }
            let cmd = self.build(kind, flow, port);
            out.push(Command { arrival_cycle: cycle, ..cmd });
        }
    }

    /// Fold an accepted command into the mirror.
    pub fn on_accepted(&mut self, cmd: &Command) {
        let q = &mut self.mirror[cmd.flow as usize];
        match cmd.kind {
            CommandKind::Enqueue => {
                q.push_back(cmd.eop);
                self.pool_used += 1;
            }
            CommandKind::Read | CommandKind::Overwrite | CommandKind::OverwriteLen => {}
            CommandKind::Dequeue => {
                q.pop_front();
                self.pool_used -= 1;
            }
            CommandKind::Delete => match cmd.scope {
                crate::qmgr::DeleteScope::Segment => {
                    q.pop_front();
                    self.pool_used -= 1;
                }
                crate::qmgr::DeleteScope::Packet => {
                    let end = Self::head_packet_end(q).unwrap_or(q.len() - 1);
                    q.drain(..=end);
                    self.pool_used -= end as u64 + 1;
                }
            },
            CommandKind::AppendHead => {
                q.push_front(false);
                self.pool_used += 1;
            }
            CommandKind::AppendTail => {
                let end = Self::head_packet_end(q).expect("admission checked the packet");
                q[end] = false;
                q.insert(end + 1, true);
                self.pool_used += 1;
            }
            CommandKind::Move
            | CommandKind::OverwriteLenAndMove
            | CommandKind::OverwriteAndMove => {
                if cmd.flow != cmd.dst {
                    let end = Self::head_packet_end(q).expect("admission checked the packet");
                    let packet: Vec<bool> = q.drain(..=end).collect();
                    self.mirror[cmd.dst as usize].extend(packet);
                }
            }
        }
    }
}

/// Materialize a whole stream, as if every command were accepted.  Suited
/// to rate and determinism checks; live runs should drive a [`CommandGen`]
/// so FIFO rejections feed back.
pub fn generate_schedule(spec: WorkloadSpec) -> Result<Vec<Command>, TrafficError> {
    let duration = spec.duration_cycles;
    let mut gen = CommandGen::new(spec)?;
    let mut schedule = Vec::new();
    let mut cycle_buf = Vec::new();
    for cycle in 0..duration {
        gen.fill_cycle(cycle, &mut cycle_buf);
        for cmd in cycle_buf.drain(..) {
            gen.on_accepted(&cmd);
            schedule.push(cmd);
        }
    }
    Ok(schedule)
}
