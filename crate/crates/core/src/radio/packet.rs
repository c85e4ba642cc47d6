use crate::kernel::SimTime;
use crate::routing::NixVector;
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Address {
    Broadcast,
    Node(NodeId),
}

impl Address {
    pub fn accepts(self, node: NodeId) -> bool {
        match self {
            Address::Broadcast => true,
            Address::Node(n) => n == node,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub protocol: u16,
    pub bits: u32,
}

/// Compact packet: payload length plus a stack of protocol headers. No
/// payload bytes are materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub src: NodeId,
    /// Final destination.
    pub dst: Address,
    /// Link-layer receiver for this hop.
    pub link: Address,
    pub created: SimTime,
    pub hops: u16,
    pub bit_errors: u32,
    pub route: Option<NixVector>,
    headers: Vec<Header>,
    payload_bits: u32,
    size: u32,
}

impl Packet {
    pub fn new(id: u64, src: NodeId, dst: Address, payload_bits: u32, created: SimTime) -> Self {
        Packet {
            id,
            src,
            dst,
            link: dst,
            created,
            hops: 0,
            bit_errors: 0,
            route: None,
            headers: Vec::new(),
            payload_bits,
            size: payload_bits,
        }
    }

    /// Total size in bits: payload plus every header on the stack.
    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn payload_bits(&self) -> u32 {
        self.payload_bits
    }

    pub fn headers(&self) -> &[Header] {
        &self.headers
    }

    pub fn push_header(&mut self, protocol: u16, bits: u32) {
        self.headers.push(Header { protocol, bits });
        self.size += bits;
    }

    pub fn pop_header(&mut self) -> Option<Header> {
        let h = self.headers.pop()?;
        self.size -= h.bits;
        Some(h)
    }

    pub fn top_header(&self) -> Option<&Header> {
        self.headers.last()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_stack_is_lifo_and_size_tracks() {
        let mut p = Packet::new(1, NodeId(0), Address::Broadcast, 800, SimTime::ZERO);
        p.push_header(1, 64);
        p.push_header(2, 32);
        assert_eq!(p.size(), 896);
        assert_eq!(
            p.pop_header(),
            Some(Header {
                protocol: 2,
                bits: 32
            })
        );
        assert_eq!(p.size(), 864);
        assert_eq!(p.top_header().unwrap().protocol, 1);
    }
}
