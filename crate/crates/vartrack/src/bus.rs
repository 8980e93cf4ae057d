//! Inter-radar fusion bus.
//!
//! Radar nodes exchange two kinds of payloads: Gaussian state messages in
//! information form (data messages broadcast after each local update) and new
//! object candidates during the initialization ring pass. The bus models a
//! broadcast medium with per-node mailboxes and an explicit binary wire
//! format, so that byte budgets per step can be measured and node dropouts
//! simulated.
//!
//! Wire layout, little-endian:
//!   [0]     kind tag (u8)
//!   [1..5]  object id (u32)
//!   [5..9]  time index (u32)
//!   [9..13] sender id (u32)
//!   [13..]  payload of f64 values
//!
//! A state payload is the 4-vector mean followed by the row-major 4x4
//! precision matrix (20 doubles, 160 bytes). A candidate payload is the
//! 4-vector state followed by the existence probability (5 doubles).

use nalgebra::Matrix4;
use std::collections::BTreeMap;
use std::ops::Range;
use thiserror::Error;

use crate::beliefs::{GaussianMessage, MessageSource};
use crate::ObjectState;

pub const HEADER_LEN: usize = 13;
pub const STATE_WIRE_LEN: usize = HEADER_LEN + 20 * 8;
pub const CANDIDATE_WIRE_LEN: usize = HEADER_LEN + 5 * 8;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("unknown message kind {0}")]
    UnknownKind(u8),
    #[error("truncated frame: got {got} bytes, need {need}")]
    Truncated { got: usize, need: usize },
}

/// Payload of a bus frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Likelihood message about an existing object, information form.
    State { mean: ObjectState, precision: Matrix4<f64> },
    /// Newly detected object proposed during the init ring.
    Candidate { state: ObjectState, existence: f64 },
    /// Final candidate set rebroadcast by the last ring node.
    Consensus { state: ObjectState, existence: f64 },
}

/// One frame on the fusion bus.
#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub object_id: u32,
    pub time_index: u32,
    pub sender: u32,
    pub payload: Payload,
}

impl WireMessage {
    pub fn encode(&self) -> Vec<u8> {
        let (kind, n) = match &self.payload {
            Payload::State { .. } => (0u8, STATE_WIRE_LEN),
            Payload::Candidate { .. } => (1u8, CANDIDATE_WIRE_LEN),
            Payload::Consensus { .. } => (2u8, CANDIDATE_WIRE_LEN),
        };
        let mut buf = Vec::with_capacity(n);
        buf.push(kind);
        buf.extend_from_slice(&self.object_id.to_le_bytes());
        buf.extend_from_slice(&self.time_index.to_le_bytes());
        buf.extend_from_slice(&self.sender.to_le_bytes());
        match &self.payload {
            Payload::State { mean, precision } => {
                for v in mean.iter() {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                for r in 0..4 {
                    for c in 0..4 {
                        buf.extend_from_slice(&precision[(r, c)].to_le_bytes());
                    }
                }
            }
            Payload::Candidate { state, existence } | Payload::Consensus { state, existence } => {
                for v in state.iter() {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                buf.extend_from_slice(&existence.to_le_bytes());
            }
        }
        debug_assert_eq!(buf.len(), n);
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.is_empty() {
            return Err(WireError::Truncated { got: 0, need: HEADER_LEN });
        }
        let kind = bytes[0];
        let need = match kind {
            0 => STATE_WIRE_LEN,
            1 | 2 => CANDIDATE_WIRE_LEN,
            k => return Err(WireError::UnknownKind(k)),
        };
        if bytes.len() < need {
            return Err(WireError::Truncated { got: bytes.len(), need });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let object_id = u32_at(1);
        let time_index = u32_at(5);
        let sender = u32_at(9);
        let payload = match kind {
            0 => {
                let mean = ObjectState::from_fn(|i, _| f64_at(HEADER_LEN + 8 * i));
                let precision =
                    Matrix4::from_fn(|r, c| f64_at(HEADER_LEN + 8 * (4 + 4 * r + c)));
                Payload::State { mean, precision }
            }
            _ => {
                let state = ObjectState::from_fn(|i, _| f64_at(HEADER_LEN + 8 * i));
                let existence = f64_at(HEADER_LEN + 8 * 4);
                if kind == 1 {
                    Payload::Candidate { state, existence }
                } else {
                    Payload::Consensus { state, existence }
                }
            }
        };
        Ok(Self { object_id, time_index, sender, payload })
    }

    /// Convert a received state frame into an engine message tagged with the
    /// sending radar.
    pub fn to_state_message(&self) -> Option<GaussianMessage> {
        match &self.payload {
            Payload::State { mean, precision } => Some(GaussianMessage::from_information(
                *mean,
                *precision,
                MessageSource::Data(self.sender),
            )),
            _ => None,
        }
    }
}

/// Scheduled outage of one node.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub node: u32,
    pub steps: Range<usize>,
}

/// The set of radar nodes on the bus plus their init-ring order and any
/// scheduled dropouts.
#[derive(Debug, Clone, Default)]
pub struct NodePool {
    pub ids: Vec<u32>,
    /// Visit order for the sequential initialization pass; a permutation of
    /// `ids`. The labeling is arbitrary, so the default is id order.
    pub ring_order: Vec<u32>,
    pub dropouts: Vec<Dropout>,
}

impl NodePool {
    pub fn new(ids: Vec<u32>) -> Self {
        let ring_order = ids.clone();
        Self { ids, ring_order, dropouts: Vec::new() }
    }

    pub fn with_ring_order(mut self, ring_order: Vec<u32>) -> Self {
        let mut sorted = ring_order.clone();
        sorted.sort_unstable();
        let mut ids = self.ids.clone();
        ids.sort_unstable();
        assert_eq!(sorted, ids, "ring order must be a permutation of the node ids");
        self.ring_order = ring_order;
        self
    }

    pub fn with_dropout(mut self, node: u32, steps: Range<usize>) -> Self {
        self.dropouts.push(Dropout { node, steps });
        self
    }

    pub fn is_dropped(&self, node: u32, step: usize) -> bool {
        self.dropouts.iter().any(|d| d.node == node && d.steps.contains(&step))
    }

    /// Nodes participating at this step, in ring order.
    pub fn active(&self, step: usize) -> Vec<u32> {
        self.ring_order.iter().copied().filter(|&n| !self.is_dropped(n, step)).collect()
    }
}

/// Broadcast bus with one mailbox per node and a byte counter.
#[derive(Debug, Default)]
pub struct Bus {
    mailboxes: BTreeMap<u32, Vec<WireMessage>>,
    pub bytes_sent: usize,
}

impl Bus {
    pub fn new(pool: &NodePool) -> Self {
        Self {
            mailboxes: pool.ids.iter().map(|&id| (id, Vec::new())).collect(),
            bytes_sent: 0,
        }
    }

    /// Deliver a frame to every node except the sender, through the wire
    /// codec. Returns the encoded frame length.
    pub fn broadcast(&mut self, msg: &WireMessage) -> usize {
        let bytes = msg.encode();
        let decoded = WireMessage::decode(&bytes).expect("self-encoded frame must decode");
        let n = bytes.len();
        for (&id, mailbox) in self.mailboxes.iter_mut() {
            if id != msg.sender {
                mailbox.push(decoded.clone());
            }
        }
        self.bytes_sent += n * self.mailboxes.len().saturating_sub(1);
        n
    }

    /// Drain the mailbox of one node.
    pub fn collect(&mut self, node: u32) -> Vec<WireMessage> {
        self.mailboxes.get_mut(&node).map(std::mem::take).unwrap_or_default()
    }
}

/// Broadcast one state message per (live radar, object) pair and return, per
/// radar, the messages it received from the others. `local` maps radar id to
/// its locally computed data messages, keyed by object id.
pub fn broadcast_state_messages(
    pool: &NodePool,
    step: usize,
    time_index: u32,
    local: &BTreeMap<u32, Vec<(u32, GaussianMessage)>>,
) -> BTreeMap<u32, Vec<WireMessage>> {
    let mut bus = Bus::new(pool);
    for (&sender, msgs) in local {
        if pool.is_dropped(sender, step) {
            continue;
        }
        for (object_id, msg) in msgs {
            bus.broadcast(&WireMessage {
                object_id: *object_id,
                time_index,
                sender,
                payload: Payload::State { mean: msg.mean, precision: msg.precision },
            });
        }
    }
    let mut received = BTreeMap::new();
    for &id in &pool.ids {
        if !pool.is_dropped(id, step) {
            received.insert(id, bus.collect(id));
        }
    }
    received
}

/// Run the object-initialization ring: each live node in turn receives the
/// candidate list accumulated so far, appends its own detections through
/// `detect`, and forwards the list. The last node rebroadcasts the final set
/// as consensus frames. Returns the consensus list plus the wire bytes spent.
pub fn run_init_ring<F>(
    pool: &NodePool,
    step: usize,
    time_index: u32,
    mut detect: F,
) -> (Vec<(ObjectState, f64)>, usize)
where
    F: FnMut(u32, &[(ObjectState, f64)]) -> Vec<(ObjectState, f64)>,
{
    let mut candidates: Vec<(ObjectState, f64)> = Vec::new();
    let mut bytes = 0usize;
    let active = pool.active(step);
    for &node in &active {
        let new = detect(node, &candidates);
        for (state, existence) in new {
            let frame = WireMessage {
                object_id: candidates.len() as u32,
                time_index,
                sender: node,
                payload: Payload::Candidate { state, existence },
            };
            let encoded = frame.encode();
            bytes += encoded.len();
            let back = WireMessage::decode(&encoded).expect("self-encoded frame must decode");
            match back.payload {
                Payload::Candidate { state, existence } => candidates.push((state, existence)),
                _ => unreachable!(),
            }
        }
    }
    if let Some(&last) = active.last() {
        let mut consensus = Vec::with_capacity(candidates.len());
        for (i, &(state, existence)) in candidates.iter().enumerate() {
            let frame = WireMessage {
                object_id: i as u32,
                time_index,
                sender: last,
                payload: Payload::Consensus { state, existence },
            };
            let encoded = frame.encode();
            bytes += encoded.len() * active.len().saturating_sub(1);
            let back = WireMessage::decode(&encoded).expect("self-encoded frame must decode");
            match back.payload {
                Payload::Consensus { state, existence } => consensus.push((state, existence)),
                _ => unreachable!(),
            }
        }
        candidates = consensus;
    }
    (candidates, bytes)
}
