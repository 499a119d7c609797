//! Per-flow segment queues over a fixed buffer pool.
//!
//! Packet data lives in fixed 64-byte segments.  Each segment slot has a
//! control entry (next link, payload length, end-of-packet flag); queues are
//! singly-linked chains of slots, one per flow, with explicit tails for O(1)
//! enqueue.  Unused slots sit on a free list that allocates from its head and
//! recycles to its tail.  Every command the management subsystem executes is
//! a method here; timing lives elsewhere.

use thiserror::Error;

/// Size of one data segment in bytes.
pub const SEGMENT_BYTES: usize = 64;

/// Link value marking the end of a chain.
const NIL: u32 = u32::MAX;

/// Payload of one segment slot: a full 64-byte buffer, of which the first
/// `len` bytes are meaningful.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SegmentData(pub [u8; SEGMENT_BYTES]);

impl SegmentData {
    pub fn zeroed() -> Self {
        SegmentData([0; SEGMENT_BYTES])
    }

    /// Buffer whose leading bytes are `prefix`, zero-padded to 64 bytes.
    ///
    /// # Panics
    /// If `prefix` is longer than a segment.
    pub fn from_prefix(prefix: &[u8]) -> Self {
        assert!(prefix.len() <= SEGMENT_BYTES, "prefix exceeds segment size");
        let mut bytes = [0; SEGMENT_BYTES];
        bytes[..prefix.len()].copy_from_slice(prefix);
        SegmentData(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SEGMENT_BYTES] {
        &self.0
    }
}

impl Default for SegmentData {
    fn default() -> Self {
        Self::zeroed()
    }
}

impl std::fmt::Debug for SegmentData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // 64 raw bytes are noise in assertion output; show a short prefix.
        write!(f, "SegmentData({:02x?}..)", &self.0[..4])
    }
}

/// What a segment holds, as returned by reads and dequeues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentPayload {
    pub data: SegmentData,
    /// Meaningful byte count, 1..=64.
    pub len: u8,
    /// Marks the last segment of a packet.
    pub eop: bool,
}

/// Per-slot link metadata kept alongside the data buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ControlEntry {
    next: u32,
    seg_len: u8,
    eop: bool,
}

/// One flow's queue header: chain ends plus cached counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowQueue {
    head: u32,
    tail: u32,
    seg_count: u32,
    pkt_count: u32,
}

impl FlowQueue {
    const EMPTY: FlowQueue = FlowQueue { head: NIL, tail: NIL, seg_count: 0, pkt_count: 0 };

    pub fn head(&self) -> Option<u32> {
        (self.head != NIL).then_some(self.head)
    }

    pub fn tail(&self) -> Option<u32> {
        (self.tail != NIL).then_some(self.tail)
    }

    pub fn seg_count(&self) -> u32 {
        self.seg_count
    }

    pub fn pkt_count(&self) -> u32 {
        self.pkt_count
    }

    pub fn is_empty(&self) -> bool {
        self.head == NIL
    }
}

/// How much of the flow head `delete_head` removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeleteScope {
    /// The head segment only.
    Segment,
    /// Every segment through the head packet's end-of-packet marker.
    Packet,
}

/// Where `append_segment` inserts relative to the head packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppendPosition {
    /// Prepend before the current head (protocol encapsulation).
    HeadOfPacket,
    /// Insert after the head packet's last segment, taking over its
    /// end-of-packet marker (trailer insertion).
    TailOfPacket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum QueueError {
    #[error("segment pool exhausted")]
    PoolExhausted,
    #[error("segment {0} is already free")]
    DoubleFree(u32),
    #[error("flow {flow} out of range ({flows} flows)")]
    BadFlow { flow: u32, flows: u32 },
    #[error("segment length {0} outside 1..=64")]
    BadLength(u8),
    #[error("flow {0} is empty")]
    EmptyFlow(u32),
    #[error("source flow {0} is empty")]
    EmptySrc(u32),
    #[error("head packet of flow {0} has no end-of-packet segment")]
    IncompletePacket(u32),
}

/// Pool and queue-table dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolConfig {
    /// Segment slots in the pool (64 bytes of data each).
    pub segments: u32,
    /// Number of flow queues.
    pub flows: u32,
}

impl Default for PoolConfig {
    fn default() -> Self {
        // 64 Mbit of segment data and 32K flows.
        PoolConfig { segments: 65536, flows: 32768 }
    }
}

/// The queue manager: buffer pool, free list, and per-flow queue table.
///
/// Single-owner mutation; the structure is `Clone` so callers can snapshot
/// state for comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueManager {
    cfg: PoolConfig,
    data: Vec<SegmentData>,
    ctrl: Vec<ControlEntry>,
    flows: Vec<FlowQueue>,
    free_head: u32,
    free_tail: u32,
    free_count: u32,
    /// One bit per slot, backing double-free detection.
    allocated: Vec<bool>,
}

impl QueueManager {
    /// Fresh pool with every slot free, linked in ascending index order.
    pub fn new(cfg: PoolConfig) -> Self {
        assert!(cfg.segments > 0, "pool needs at least one segment");
        assert!(cfg.segments < NIL, "pool size must leave room for the nil link");
        assert!(cfg.flows > 0, "pool needs at least one flow");
        let s = cfg.segments as usize;
        let ctrl = (0..cfg.segments)
            .map(|i| ControlEntry {
                next: if i + 1 == cfg.segments { NIL } else { i + 1 },
                seg_len: 0,
                eop: false,
            })
            .collect();
        QueueManager {
            data: vec![SegmentData::zeroed(); s],
            ctrl,
            flows: vec![FlowQueue::EMPTY; cfg.flows as usize],
            free_head: 0,
            free_tail: cfg.segments - 1,
            free_count: cfg.segments,
            allocated: vec![false; s],
            cfg,
        }
    }

    pub fn config(&self) -> &PoolConfig {
        &self.cfg
    }

    pub fn free_count(&self) -> u32 {
        self.free_count
    }

    /// Slot the next allocation will hand out, if any.
    pub fn free_head(&self) -> Option<u32> {
        (self.free_head != NIL).then_some(self.free_head)
    }

    pub fn flow(&self, flow: u32) -> Option<&FlowQueue> {
        self.flows.get(flow as usize)
    }

    /// Head segment index of a flow, if the flow exists and is non-empty.
    pub fn flow_head(&self, flow: u32) -> Option<u32> {
        self.flows.get(flow as usize).and_then(FlowQueue::head)
    }

    fn check_flow(&self, flow: u32) -> Result<(), QueueError> {
        if flow < self.cfg.flows {
            Ok(())
        } else {
            Err(QueueError::BadFlow { flow, flows: self.cfg.flows })
        }
    }

    fn check_len(len: u8) -> Result<(), QueueError> {
        if (1..=SEGMENT_BYTES as u8).contains(&len) {
            Ok(())
        } else {
            Err(QueueError::BadLength(len))
        }
    }

    /// Take the free-list head out of the pool.
    pub fn alloc_segment(&mut self) -> Result<u32, QueueError> {
        let idx = self.free_head;
        if idx == NIL {
            return Err(QueueError::PoolExhausted);
        }
        let slot = idx as usize;
        self.free_head = self.ctrl[slot].next;
        if self.free_head == NIL {
            self.free_tail = NIL;
        }
        self.free_count -= 1;
        self.allocated[slot] = true;
        self.ctrl[slot].next = NIL;
        Ok(idx)
    }

    /// Return a detached slot to the free-list tail.
    ///
    /// The caller must have unlinked `idx` from any flow chain first;
    /// releasing a slot that is still linked corrupts the pool.
    pub fn release_segment(&mut self, idx: u32) -> Result<(), QueueError> {
        let slot = idx as usize;
        assert!(slot < self.allocated.len(), "segment index out of range");
        if !self.allocated[slot] {
            return Err(QueueError::DoubleFree(idx));
        }
        self.allocated[slot] = false;
        self.ctrl[slot].next = NIL;
        if self.free_tail == NIL {
            self.free_head = idx;
        } else {
            self.ctrl[self.free_tail as usize].next = idx;
        }
        self.free_tail = idx;
        self.free_count += 1;
        Ok(())
    }

    /// Append one segment at the flow tail.  Checks flow, then length, then
    /// pool occupancy, in that order.
    pub fn enqueue_segment(
        &mut self,
        flow: u32,
        data: SegmentData,
        seg_len: u8,
        eop: bool,
    ) -> Result<u32, QueueError> {
        self.check_flow(flow)?;
        Self::check_len(seg_len)?;
        let idx = self.alloc_segment()?;
        let slot = idx as usize;
        self.data[slot] = data;
        self.ctrl[slot] = ControlEntry { next: NIL, seg_len, eop };
        let tail = self.flows[flow as usize].tail;
        if tail == NIL {
            self.flows[flow as usize].head = idx;
        } else {
            self.ctrl[tail as usize].next = idx;
        }
        let q = &mut self.flows[flow as usize];
        q.tail = idx;
        q.seg_count += 1;
        if eop {
            q.pkt_count += 1;
        }
        Ok(idx)
    }

    /// Unlink the head segment, returning its index and end-of-packet flag.
    /// The slot stays allocated; the caller decides its fate.
    fn unlink_head(&mut self, flow: u32) -> Result<(u32, bool), QueueError> {
        let head = self.flows[flow as usize].head;
        if head == NIL {
            return Err(QueueError::EmptyFlow(flow));
        }
        let slot = head as usize;
        let next = self.ctrl[slot].next;
        let eop = self.ctrl[slot].eop;
        self.ctrl[slot].next = NIL;
        let q = &mut self.flows[flow as usize];
        q.head = next;
        if next == NIL {
            q.tail = NIL;
        }
        q.seg_count -= 1;
        if eop {
            q.pkt_count -= 1;
        }
        Ok((head, eop))
    }

    /// Remove and return the head segment; its slot goes back to the pool.
    pub fn dequeue_segment(&mut self, flow: u32) -> Result<SegmentPayload, QueueError> {
        self.check_flow(flow)?;
        let head = self.flows[flow as usize].head;
        if head == NIL {
            return Err(QueueError::EmptyFlow(flow));
        }
        let payload = self.payload(head);
        let (idx, _) = self.unlink_head(flow)?;
        self.release_segment(idx).expect("unlinked head was allocated");
        Ok(payload)
    }

    /// Return the head segment's contents without touching the queue.
    pub fn read_segment(&self, flow: u32) -> Result<SegmentPayload, QueueError> {
        self.check_flow(flow)?;
        match self.flows[flow as usize].head {
            NIL => Err(QueueError::EmptyFlow(flow)),
            head => Ok(self.payload(head)),
        }
    }

    /// Drop the head segment, or the whole head packet, recycling the slots.
    /// Returns how many segments were released.  A head packet that never
    /// received its end-of-packet segment is dropped through the flow tail.
    pub fn delete_head(&mut self, flow: u32, scope: DeleteScope) -> Result<u32, QueueError> {
        self.check_flow(flow)?;
        if self.flows[flow as usize].head == NIL {
            return Err(QueueError::EmptyFlow(flow));
        }
        let mut released = 0;
        loop {
            let (idx, eop) = self.unlink_head(flow)?;
            self.release_segment(idx).expect("unlinked head was allocated");
            released += 1;
            let done = match scope {
                DeleteScope::Segment => true,
                DeleteScope::Packet => eop || self.flows[flow as usize].head == NIL,
            };
            if done {
                return Ok(released);
            }
        }
    }

    /// Replace the head segment's data in place; length, links, and counts
    /// are untouched.
    pub fn overwrite_segment(&mut self, flow: u32, data: SegmentData) -> Result<(), QueueError> {
        self.check_flow(flow)?;
        match self.flows[flow as usize].head {
            NIL => Err(QueueError::EmptyFlow(flow)),
            head => {
                self.data[head as usize] = data;
                Ok(())
            }
        }
    }

    /// Rewrite the head segment's length field; the data bytes stay put.
    pub fn overwrite_length(&mut self, flow: u32, new_len: u8) -> Result<(), QueueError> {
        self.check_flow(flow)?;
        Self::check_len(new_len)?;
        match self.flows[flow as usize].head {
            NIL => Err(QueueError::EmptyFlow(flow)),
            head => {
                self.ctrl[head as usize].seg_len = new_len;
                Ok(())
            }
        }
    }

    /// Grow the head packet by one segment, before its first or after its
    /// last segment.  The packet count never changes: a head insert carries
    /// no end-of-packet mark, and a tail insert takes the mark over.
    pub fn append_segment(
        &mut self,
        flow: u32,
        position: AppendPosition,
        data: SegmentData,
        seg_len: u8,
    ) -> Result<u32, QueueError> {
        self.check_flow(flow)?;
        Self::check_len(seg_len)?;
        let head = self.flows[flow as usize].head;
        if head == NIL {
            return Err(QueueError::EmptyFlow(flow));
        }
        match position {
            AppendPosition::HeadOfPacket => {
                let idx = self.alloc_segment()?;
                self.data[idx as usize] = data;
                self.ctrl[idx as usize] = ControlEntry { next: head, seg_len, eop: false };
                let q = &mut self.flows[flow as usize];
                q.head = idx;
                q.seg_count += 1;
                Ok(idx)
            }
            AppendPosition::TailOfPacket => {
                let (end, _) = self.find_packet_end(flow, head)?;
                let idx = self.alloc_segment()?;
                let after = self.ctrl[end as usize].next;
                self.data[idx as usize] = data;
                self.ctrl[idx as usize] = ControlEntry { next: after, seg_len, eop: true };
                self.ctrl[end as usize] = ControlEntry { eop: false, next: idx, ..self.ctrl[end as usize] };
                let q = &mut self.flows[flow as usize];
                if q.tail == end {
                    q.tail = idx;
                }
                q.seg_count += 1;
                Ok(idx)
            }
        }
    }

    /// Walk from `head` to the first end-of-packet segment, returning its
    /// index and the number of segments traversed (inclusive).
    fn find_packet_end(&self, flow: u32, head: u32) -> Result<(u32, u32), QueueError> {
        let mut cur = head;
        let mut count = 1;
        loop {
            let entry = &self.ctrl[cur as usize];
            if entry.eop {
                return Ok((cur, count));
            }
            if entry.next == NIL {
                return Err(QueueError::IncompletePacket(flow));
            }
            cur = entry.next;
            count += 1;
        }
    }

    /// Relink the head packet of `src` at the tail of `dst` without moving
    /// any data.  `src == dst` validates and leaves the state unchanged.
    pub fn move_packet(&mut self, src: u32, dst: u32) -> Result<(), QueueError> {
        self.check_flow(src)?;
        self.check_flow(dst)?;
        let head = self.flows[src as usize].head;
        if head == NIL {
            return Err(QueueError::EmptySrc(src));
        }
        let (end, count) = self.find_packet_end(src, head)?;
        if src == dst {
            return Ok(());
        }
        let after = self.ctrl[end as usize].next;
        {
            let q = &mut self.flows[src as usize];
            q.head = after;
            if after == NIL {
                q.tail = NIL;
            }
            q.seg_count -= count;
            q.pkt_count -= 1;
        }
        self.ctrl[end as usize].next = NIL;
        let dst_tail = self.flows[dst as usize].tail;
        if dst_tail == NIL {
            self.flows[dst as usize].head = head;
        } else {
            self.ctrl[dst_tail as usize].next = head;
        }
        let q = &mut self.flows[dst as usize];
        q.tail = end;
        q.seg_count += count;
        q.pkt_count += 1;
        Ok(())
    }

    /// Length rewrite and packet move as one command.
    pub fn overwrite_length_then_move(
        &mut self,
        flow: u32,
        new_len: u8,
        dst: u32,
    ) -> Result<(), QueueError> {
        self.overwrite_length(flow, new_len)?;
        self.move_packet(flow, dst)
    }

    /// Data rewrite and packet move as one command.
    pub fn overwrite_then_move(
        &mut self,
        flow: u32,
        data: SegmentData,
        dst: u32,
    ) -> Result<(), QueueError> {
        self.overwrite_segment(flow, data)?;
        self.move_packet(flow, dst)
    }

    fn payload(&self, idx: u32) -> SegmentPayload {
        let slot = idx as usize;
        SegmentPayload {
            data: self.data[slot],
            len: self.ctrl[slot].seg_len,
            eop: self.ctrl[slot].eop,
        }
    }

    /// Walk a flow from head to tail without mutating it.
    pub fn iter_flow(&self, flow: u32) -> impl Iterator<Item = (u32, SegmentPayload)> + '_ {
        let mut cur = self.flows.get(flow as usize).map_or(NIL, |q| q.head);
        std::iter::from_fn(move || {
            if cur == NIL {
                return None;
            }
            let idx = cur;
            cur = self.ctrl[idx as usize].next;
            Some((idx, self.payload(idx)))
        })
    }

    /// Full structural audit: free list and every flow chain are walked and
    /// checked for conservation, disjointness, acyclicity, and count
    /// coherence.  O(pool size); meant for tests and debugging.
    pub fn check_invariants(&self) -> Result<(), String> {
        let s = self.cfg.segments;
        let mut seen = vec![false; s as usize];
        let mut visit = |idx: u32, what: &str| -> Result<(), String> {
            if idx >= s {
                return Err(format!("{what}: index {idx} out of range"));
            }
            if seen[idx as usize] {
                return Err(format!("{what}: segment {idx} reached twice"));
            }
            seen[idx as usize] = true;
            Ok(())
        };

        let mut walked = 0u32;
        let mut last = NIL;
        let mut cur = self.free_head;
        while cur != NIL {
            visit(cur, "free list")?;
            if self.allocated[cur as usize] {
                return Err(format!("free segment {cur} is marked allocated"));
            }
            walked += 1;
            last = cur;
            cur = self.ctrl[cur as usize].next;
        }
        if walked != self.free_count {
            return Err(format!("free count {} but walk found {walked}", self.free_count));
        }
        if self.free_tail != last {
            return Err(format!("free tail {} but walk ended at {last}", self.free_tail));
        }

        let mut total = walked;
        for (flow, q) in self.flows.iter().enumerate() {
            if (q.head == NIL) != (q.tail == NIL) {
                return Err(format!("flow {flow}: half-empty head/tail pair"));
            }
            let mut segs = 0u32;
            let mut pkts = 0u32;
            let mut last = NIL;
            let mut cur = q.head;
            while cur != NIL {
                visit(cur, "flow chain")?;
                if !self.allocated[cur as usize] {
                    return Err(format!("flow {flow}: segment {cur} is marked free"));
                }
                segs += 1;
                if self.ctrl[cur as usize].eop {
                    pkts += 1;
                }
                last = cur;
                cur = self.ctrl[cur as usize].next;
            }
            if q.tail != last {
                return Err(format!("flow {flow}: tail {} but walk ended at {last}", q.tail));
            }
            if segs != q.seg_count || pkts != q.pkt_count {
                return Err(format!(
                    "flow {flow}: counts {}/{} but walk found {segs}/{pkts}",
                    q.seg_count, q.pkt_count
                ));
            }
            total += segs;
        }
        if total != s {
            return Err(format!("pool holds {s} segments but lists account for {total}"));
        }
        Ok(())
    }

    /// Debug dump: one `flow_id,seg_count,pkt_count,head,tail` line per flow,
    /// then a `free,count,head,tail` summary.
    pub fn dump(&self) -> String {
        use std::fmt::Write;

        fn link(idx: u32) -> String {
            if idx == NIL {
                "nil".into()
            } else {
                idx.to_string()
            }
        }

        let mut out = String::new();
        for (flow, q) in self.flows.iter().enumerate() {
            writeln!(
                out,
                "{flow},{},{},{},{}",
                q.seg_count,
                q.pkt_count,
                link(q.head),
                link(q.tail)
            )
            .unwrap();
        }
        writeln!(out, "free,{},{},{}", self.free_count, link(self.free_head), link(self.free_tail))
            .unwrap();
        out
    }
}
