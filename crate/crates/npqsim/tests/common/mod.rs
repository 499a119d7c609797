//! A deliberately naive reference model of the queue manager: every flow is
//! a plain double-ended sequence of payloads and the pool is a bare
//! counter.  No slots, no links — just the sequences the real structure is
//! supposed to realize, so the two can be compared state for state.

use std::collections::VecDeque;

use npqsim::qmgr::{AppendPosition, DeleteScope, SegmentData, SegmentPayload};

pub struct FlatModel {
    pub flows: Vec<VecDeque<SegmentPayload>>,
    pub free: usize,
}

impl FlatModel {
    pub fn new(segments: usize, flows: usize) -> Self {
        FlatModel { flows: vec![VecDeque::new(); flows], free: segments }
    }

    /// Index of the head packet's last segment, if the packet is complete.
    pub fn head_packet_end(&self, flow: usize) -> Option<usize> {
        self.flows[flow].iter().position(|seg| seg.eop)
    }

    pub fn enqueue(&mut self, flow: usize, data: SegmentData, len: u8, eop: bool) {
        assert!(self.free > 0, "oracle driven past pool capacity");
        self.flows[flow].push_back(SegmentPayload { data, len, eop });
        self.free -= 1;
    }

    pub fn dequeue(&mut self, flow: usize) -> SegmentPayload {
        let seg = self.flows[flow].pop_front().expect("oracle dequeue on empty flow");
        self.free += 1;
        seg
    }

    pub fn read(&self, flow: usize) -> SegmentPayload {
        *self.flows[flow].front().expect("oracle read on empty flow")
    }

    pub fn overwrite(&mut self, flow: usize, data: SegmentData) {
        self.flows[flow].front_mut().expect("oracle overwrite on empty flow").data = data;
    }

    pub fn overwrite_len(&mut self, flow: usize, len: u8) {
        self.flows[flow].front_mut().expect("oracle overwrite_len on empty flow").len = len;
    }

    /// Drop the head segment, or the head packet — everything through the
    /// first end-of-packet mark, or the whole flow if the mark never comes.
    pub fn delete(&mut self, flow: usize, scope: DeleteScope) -> usize {
        let q = &mut self.flows[flow];
        assert!(!q.is_empty(), "oracle delete on empty flow");
        let released = match scope {
            DeleteScope::Segment => 1,
            DeleteScope::Packet => q.iter().position(|seg| seg.eop).map_or(q.len(), |e| e + 1),
        };
        q.drain(..released);
        self.free += released;
        released
    }

    /// Grow the head packet at its front (unmarked) or behind its last
    /// segment (taking the end-of-packet mark over).
    pub fn append(&mut self, flow: usize, position: AppendPosition, data: SegmentData, len: u8) {
        assert!(self.free > 0, "oracle driven past pool capacity");
        match position {
            AppendPosition::HeadOfPacket => {
                assert!(!self.flows[flow].is_empty());
                self.flows[flow].push_front(SegmentPayload { data, len, eop: false });
            }
            AppendPosition::TailOfPacket => {
                let end = self.head_packet_end(flow).expect("oracle append on incomplete packet");
                self.flows[flow][end].eop = false;
                self.flows[flow].insert(end + 1, SegmentPayload { data, len, eop: true });
            }
        }
        self.free -= 1;
    }

    /// Relocate the head packet of `src` to the tail of `dst`; moving a
    /// packet onto its own flow is a validated no-op.
    pub fn move_packet(&mut self, src: usize, dst: usize) {
        let end = self.head_packet_end(src).expect("oracle move on incomplete packet");
        if src == dst {
            return;
        }
        let packet: Vec<SegmentPayload> = self.flows[src].drain(..=end).collect();
        self.flows[dst].extend(packet);
    }
}
