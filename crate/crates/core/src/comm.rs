//! Network send/receive insertion on cut FIFOs and the link timing model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterSpec, LinkProtocol};
use crate::error::{Error, Result};
use crate::graph::{FifoEdge, TaskGraph, TaskVertex, VertexKind};
use crate::inter::InterAssignment;
use crate::resource::ResourceVec;

/// Smallest transfer unit the network stack supports.
pub const MIN_PACKET_BYTES: u64 = 64;
pub const DEFAULT_PACKET_BYTES: u64 = 64;
pub const DEFAULT_PORT_STREAMS: usize = 16;

/// Calibration volume: 64 MB.
pub const CALIBRATION_BYTES: u64 = 64_000_000;
/// (packet bytes, total one-hop time in seconds) for the calibration volume.
pub const CALIBRATION_POINTS: [(u64, f64); 2] = [(64, 6.53e-3), (128, 3.96e-3)];
/// Network ports aggregated by one device-to-device stream.
pub const AGGREGATED_PORTS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetLink {
    pub edge: String,
    pub src_device: usize,
    pub dst_device: usize,
    pub hops: u32,
    pub protocol: LinkProtocol,
    /// True when the link leaves its server node and is staged through hosts.
    pub inter_node: bool,
    pub packet_bytes: u64,
    pub volume_bytes: u64,
}

/// The design after network insertion.
#[derive(Debug, Clone)]
pub struct NetDesign {
    pub graph: TaskGraph,
    /// Device of every vertex, including the inserted ones.
    pub placement: BTreeMap<String, usize>,
    pub links: Vec<NetLink>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommOptions {
    pub packet_bytes: u64,
    pub port_streams: usize,
}

impl Default for CommOptions {
    fn default() -> Self {
        CommOptions {
            packet_bytes: DEFAULT_PACKET_BYTES,
            port_streams: DEFAULT_PORT_STREAMS,
        }
    }
}

pub fn send_id(edge: &str) -> String {
    format!("{edge}.send")
}

pub fn recv_id(edge: &str) -> String {
    format!("{edge}.recv")
}

/// Id of the network hop edge that replaced cut FIFO `edge`.
pub fn net_edge_id(edge: &str) -> String {
    format!("{edge}.net")
}

/// Replace every cut FIFO `e` by `src -> e.send -> e.recv -> dst`.
pub fn insert_network_vertices(
    g: &TaskGraph,
    a: &InterAssignment,
    cluster: &ClusterSpec,
    opts: CommOptions,
) -> Result<NetDesign> {
    if opts.packet_bytes < MIN_PACKET_BYTES {
        return Err(Error::UnsupportedPacket(opts.packet_bytes));
    }
    let mut placement = BTreeMap::new();
    for v in g.vertices() {
        let d = a.device_of(&v.id).ok_or_else(|| Error::Reference {
            kind: "vertex",
            id: v.id.clone(),
        })?;
        if d >= cluster.device_count() {
            return Err(Error::Range {
                index: d,
                count: cluster.device_count(),
            });
        }
        placement.insert(v.id.clone(), d);
    }
    let mut vertices: Vec<TaskVertex> = g.vertices().to_vec();
    let mut edges: Vec<FifoEdge> = Vec::with_capacity(g.edge_count());
    let mut links = Vec::new();
    let mut streams = vec![0usize; cluster.device_count()];
    for e in g.edges() {
        let (s, d) = (placement[&e.src], placement[&e.dst]);
        if s == d {
            edges.push(e.clone());
            continue;
        }
        streams[s] += 1;
        streams[d] += 1;
        let (tx, rx) = (send_id(&e.id), recv_id(&e.id));
        for (id, kind, dev) in [(&tx, VertexKind::NetSend, s), (&rx, VertexKind::NetRecv, d)] {
            vertices.push(TaskVertex {
                id: id.clone(),
                area: ResourceVec::ZERO,
                work: 0,
                kind,
                hbm_ports: vec![],
            });
            placement.insert(id.clone(), dev);
        }
        let hop = |id: String, src: &str, dst: &str| FifoEdge {
            id,
            src: src.to_string(),
            dst: dst.to_string(),
            ..e.clone()
        };
        edges.push(hop(format!("{}.tx", e.id), &e.src, &tx));
        edges.push(hop(net_edge_id(&e.id), &tx, &rx));
        edges.push(hop(format!("{}.rx", e.id), &rx, &e.dst));
        let inter_node = !cluster.topology.same_node(s, d);
        links.push(NetLink {
            edge: e.id.clone(),
            src_device: s,
            dst_device: d,
            hops: cluster.topology.dist(s, d)?,
            protocol: cluster.protocol_between(s, d).clone(),
            inter_node,
            packet_bytes: opts.packet_bytes,
            volume_bytes: e.volume_bytes(),
        });
    }
    for (dev, &n) in streams.iter().enumerate() {
        let capacity = cluster.devices[dev].qsfp_ports * opts.port_streams;
        if n > capacity {
            return Err(Error::PortExhaustion {
                device: dev,
                streams: n,
                capacity,
            });
        }
    }
    let graph = TaskGraph::from_parts(g.name.clone(), vertices, edges)?;
    Ok(NetDesign {
        graph,
        placement,
        links,
    })
}

/// Rate of one direct device-to-device stream at `packet_bytes`, in bits/s.
/// Linear in log2(packet size) through the two calibration points and
/// clamped to the aggregated line rate.
pub fn ethernet_rate(packet_bytes: u64, protocol: &LinkProtocol) -> Result<f64> {
    if packet_bytes < MIN_PACKET_BYTES {
        return Err(Error::UnsupportedPacket(packet_bytes));
    }
    let bits = CALIBRATION_BYTES as f64 * 8.0;
    let rate_at = |(_, t): (u64, f64)| bits / (t - protocol.one_way_latency_ns * 1e-9);
    let (p0, p1) = (CALIBRATION_POINTS[0], CALIBRATION_POINTS[1]);
    let (r0, r1) = (rate_at(p0), rate_at(p1));
    let (x0, x1) = ((p0.0 as f64).log2(), (p1.0 as f64).log2());
    let x = (packet_bytes as f64).log2();
    let r = r0 + (r1 - r0) * (x - x0) / (x1 - x0);
    Ok(r.min(protocol.line_rate_bps * AGGREGATED_PORTS as f64))
}

/// Rate of a link, in bits/s. Inter-node links are staged device -> host,
/// host -> host and host -> device in series.
pub fn effective_rate(link: &NetLink, cluster: &ClusterSpec) -> Result<f64> {
    if link.inter_node {
        if link.packet_bytes < MIN_PACKET_BYTES {
            return Err(Error::UnsupportedPacket(link.packet_bytes));
        }
        let legs = [
            cluster.host.line_rate_bps,
            link.protocol.line_rate_bps,
            cluster.host.line_rate_bps,
        ];
        Ok(1.0 / legs.iter().map(|r| 1.0 / r).sum::<f64>())
    } else {
        ethernet_rate(link.packet_bytes, &link.protocol)
    }
}

/// Fixed latency of a link in nanoseconds.
pub fn link_latency_ns(link: &NetLink, cluster: &ClusterSpec) -> f64 {
    let base = link.hops as f64 * link.protocol.one_way_latency_ns;
    if link.inter_node {
        base + 2.0 * cluster.host.one_way_latency_ns
    } else {
        base
    }
}

/// End-to-end time to move the link's volume, in nanoseconds.
pub fn link_transfer_time(link: &NetLink, cluster: &ClusterSpec) -> Result<f64> {
    let rate = effective_rate(link, cluster)?;
    Ok(link_latency_ns(link, cluster) + link.volume_bytes as f64 * 8.0 / rate * 1e9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::TopologyKind;

    fn link(volume: u64, packet: u64) -> NetLink {
        NetLink {
            edge: "e".into(),
            src_device: 0,
            dst_device: 1,
            hops: 1,
            protocol: LinkProtocol::ethernet_100g(),
            inter_node: false,
            packet_bytes: packet,
            volume_bytes: volume,
        }
    }

    #[test]
    fn zero_volume_is_pure_latency() {
        let c = ClusterSpec::u55c(TopologyKind::Chain, 2).unwrap();
        assert_eq!(link_transfer_time(&link(0, 64), &c).unwrap(), 500.0);
    }

    #[test]
    fn small_packets_rejected() {
        let c = ClusterSpec::u55c(TopologyKind::Chain, 2).unwrap();
        assert!(matches!(
            link_transfer_time(&link(10, 32), &c),
            Err(Error::UnsupportedPacket(32))
        ));
    }

    #[test]
    fn rate_saturates() {
        let p = LinkProtocol::ethernet_100g();
        assert_eq!(ethernet_rate(1 << 16, &p).unwrap(), 200e9);
    }
}
