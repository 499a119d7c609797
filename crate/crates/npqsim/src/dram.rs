//! Bank-level timing model of a DDR data store.
//!
//! The device accepts one 64-byte transfer per access cycle on a shared bus.
//! Each access occupies its bank for a fixed busy window, so back-to-back
//! traffic must spread across banks to keep the bus full.  Reads and writes
//! complete with different latencies, and a write whose data phase would
//! directly follow a read's needs one extra bus cycle to turn the bus around.

use thiserror::Error;

/// Timing parameters of the data store.  Durations are nanoseconds; the
/// access cycle is the scheduling quantum everything else is measured in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DramConfig {
    /// Number of independently busy banks.
    pub n_banks: u32,
    /// Bus slot width: one transfer may start per access cycle.
    pub access_cycle_ns: u64,
    /// A bank that accepted a transfer refuses new ones for this long.
    pub bank_busy_ns: u64,
    /// Start-to-data-valid latency of a read.
    pub read_latency_ns: u64,
    /// Start-to-write-complete latency of a write.
    pub write_latency_ns: u64,
    /// Charge the one-cycle bus turnaround when a write directly follows a
    /// read.  Off by default so bank conflicts can be studied in isolation.
    pub interleave_penalty: bool,
}

impl Default for DramConfig {
    fn default() -> Self {
        DramConfig {
            n_banks: 8,
            access_cycle_ns: 40,
            bank_busy_ns: 160,
            read_latency_ns: 60,
            write_latency_ns: 40,
            interleave_penalty: false,
        }
    }
}

impl DramConfig {
    /// Bank busy window expressed in access cycles.
    pub fn busy_cycles(&self) -> u64 {
        self.bank_busy_ns / self.access_cycle_ns
    }
}

/// Direction of a transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

/// One queued 64-byte transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessRequest {
    pub bank: u32,
    pub kind: AccessKind,
    /// Input port the request arrived on, `0..4`.
    pub port: u8,
}

/// Outcome of a successfully issued access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IssueResult {
    /// Access cycle in which the data phase actually occupies the bus
    /// (the nominal cycle plus any turnaround penalty).
    pub start_cycle: u64,
    /// Extra bus cycles spent turning the bus around: 0 or 1.
    pub penalty_cycles: u64,
    /// Absolute completion time of the transfer.
    pub completion_ns: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DramError {
    #[error("bank {bank} is busy until access cycle {busy_until}")]
    BankBusy { bank: u32, busy_until: u64 },
    #[error("bank {bank} out of range (device has {n_banks})")]
    NoSuchBank { bank: u32, n_banks: u32 },
}

/// Per-bank busy bookkeeping.  `now` arguments are access-cycle indices.
#[derive(Debug, Clone)]
pub struct DramModel {
    cfg: DramConfig,
    busy_until: Vec<u64>,
}

impl DramModel {
    pub fn new(cfg: DramConfig) -> Self {
        let busy_until = vec![0; cfg.n_banks as usize];
        DramModel { cfg, busy_until }
    }

    pub fn config(&self) -> &DramConfig {
        &self.cfg
    }

    /// True while the bank is still inside a previous access's busy window.
    /// An access issued at cycle `t` leaves its bank busy through `t + 3`
    /// (with the default 160 ns window) and free again at `t + 4`.
    pub fn is_busy(&self, bank: u32, now: u64) -> bool {
        now < self.busy_until[bank as usize]
    }

    /// Start one transfer at access cycle `now`.
    ///
    /// `prev` is the direction of the transfer occupying the bus in cycle
    /// `now - 1`, or `None` if that cycle carried no data.  Callers own that
    /// bookkeeping: an idle bus cycle already provides the turnaround gap, so
    /// only a write directly behind a read pays the one-cycle penalty.
    pub fn issue(
        &mut self,
        req: AccessRequest,
        now: u64,
        prev: Option<AccessKind>,
    ) -> Result<IssueResult, DramError> {
        if req.bank >= self.cfg.n_banks {
            return Err(DramError::NoSuchBank { bank: req.bank, n_banks: self.cfg.n_banks });
        }
        if self.is_busy(req.bank, now) {
            return Err(DramError::BankBusy {
                bank: req.bank,
                busy_until: self.busy_until[req.bank as usize],
            });
        }

        let penalty_cycles = u64::from(
            self.cfg.interleave_penalty
                && req.kind == AccessKind::Write
                && prev == Some(AccessKind::Read),
        );
        let start_cycle = now + penalty_cycles;
        self.busy_until[req.bank as usize] = start_cycle + self.cfg.busy_cycles();

        let latency = match req.kind {
            AccessKind::Read => self.cfg.read_latency_ns,
            AccessKind::Write => self.cfg.write_latency_ns,
        };
        let completion_ns = start_cycle * self.cfg.access_cycle_ns + latency;

        Ok(IssueResult { start_cycle, penalty_cycles, completion_ns })
    }
}
