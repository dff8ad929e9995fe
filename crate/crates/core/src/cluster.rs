//! Devices, slot geometry, network topology and link protocols.

use serde::{Deserialize, Serialize};

use crate::canon;
use crate::error::{Error, Result};
use crate::resource::{Resource, ResourceVec, Thresholds};

/// Resources of one Alveo U55C card.
pub const U55C_CAPACITY: ResourceVec = ResourceVec::new(1_146_240, 2_292_480, 1776, 8376, 960);

/// Per-port networking IP overhead in basis points of device capacity
/// (LUT, FF, BRAM, DSP, URAM).
pub const NET_PORT_OVERHEAD_BP: [u64; 5] = [204, 294, 206, 0, 0];

/// On-chip SRAM bandwidth, 35 TB/s, in bits per second.
pub const ONCHIP_BW_BPS: f64 = 35e12 * 8.0;
/// Aggregate HBM bandwidth, 460 GB/s, in bits per second.
pub const HBM_BW_BPS: f64 = 460e9 * 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Chain,
    Ring,
    Star,
    Mesh,
    Hypercube,
    Custom,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    kind: TopologyKind,
    count: usize,
    #[serde(default)]
    groups: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    custom_hops: Option<Vec<Vec<u32>>>,
}

/// Device interconnect. Devices are grouped into server nodes; `kind` describes
/// the wiring inside each node, while devices in different nodes are one
/// host-mediated hop apart. A `custom` matrix gives direct link lengths over
/// all devices (0 = no link) and distances are shortest paths over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopologyDoc", into = "TopologyDoc")]
pub struct Topology {
    pub kind: TopologyKind,
    pub count: usize,
    pub groups: Vec<Vec<usize>>,
    pub custom_hops: Option<Vec<Vec<u32>>>,
    hops: Vec<Vec<u32>>,
    group_of: Vec<usize>,
}

impl From<Topology> for TopologyDoc {
    fn from(t: Topology) -> Self {
        TopologyDoc {
            kind: t.kind,
            count: t.count,
            groups: Some(t.groups),
            custom_hops: t.custom_hops,
        }
    }
}

impl TryFrom<TopologyDoc> for Topology {
    type Error = Error;
    fn try_from(d: TopologyDoc) -> Result<Self> {
        Topology::new(d.kind, d.count, d.groups, d.custom_hops)
    }
}

const UNREACHABLE: u32 = u32::MAX / 4;

impl Topology {
    pub fn new(
        kind: TopologyKind,
        count: usize,
        groups: Option<Vec<Vec<usize>>>,
        custom_hops: Option<Vec<Vec<u32>>>,
    ) -> Result<Self> {
        if count == 0 {
            return Err(Error::Parameter("topology needs at least one device".into()));
        }
        let groups = groups.unwrap_or_else(|| vec![(0..count).collect()]);
        let mut group_of = vec![usize::MAX; count];
        for (gi, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::Parameter(format!("topology group {gi} is empty")));
            }
            for &d in g {
                if d >= count {
                    return Err(Error::Range { index: d, count });
                }
                if group_of[d] != usize::MAX {
                    return Err(Error::Parameter(format!("device {d} listed in two groups")));
                }
                group_of[d] = gi;
            }
        }
        if let Some(d) = group_of.iter().position(|&g| g == usize::MAX) {
            return Err(Error::Parameter(format!("device {d} belongs to no group")));
        }

        let hops = match kind {
            TopologyKind::Custom => {
                let m = custom_hops.as_ref().ok_or_else(|| {
                    Error::Parameter("custom topology requires custom_hops".into())
                })?;
                custom_distances(m, count)?
            }
            _ => {
                if kind == TopologyKind::Hypercube {
                    for g in &groups {
                        if !g.len().is_power_of_two() {
                            return Err(Error::Parameter(format!(
                                "hypercube group of {} devices is not a power of two",
                                g.len()
                            )));
                        }
                    }
                }
                let mut hops = vec![vec![0u32; count]; count];
                for i in 0..count {
                    for j in 0..count {
                        hops[i][j] = if i == j {
                            0
                        } else if group_of[i] != group_of[j] {
                            1
                        } else {
                            let g = &groups[group_of[i]];
                            let pi = g.iter().position(|&x| x == i).unwrap();
                            let pj = g.iter().position(|&x| x == j).unwrap();
                            intra_group_hops(kind, pi, pj, g.len())
                        };
                    }
                }
                hops
            }
        };
        Ok(Topology {
            kind,
            count,
            groups,
            custom_hops,
            hops,
            group_of,
        })
    }

    pub fn simple(kind: TopologyKind, count: usize) -> Result<Self> {
        Topology::new(kind, count, None, None)
    }

    /// Hop count between devices `i` and `j`.
    pub fn dist(&self, i: usize, j: usize) -> Result<u32> {
        for x in [i, j] {
            if x >= self.count {
                return Err(Error::Range {
                    index: x,
                    count: self.count,
                });
            }
        }
        Ok(self.hops[i][j])
    }

    pub fn hop_matrix(&self) -> &[Vec<u32>] {
        &self.hops
    }

    pub fn same_node(&self, i: usize, j: usize) -> bool {
        self.group_of[i] == self.group_of[j]
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.group_of[i]
    }

    /// Devices directly wired to `i` inside its own server node.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.count)
            .filter(|&j| j != i && self.same_node(i, j) && self.hops[i][j] == 1)
            .collect()
    }
}

fn intra_group_hops(kind: TopologyKind, i: usize, j: usize, n: usize) -> u32 {
    let diff = i.abs_diff(j);
    match kind {
        TopologyKind::Chain => diff as u32,
        TopologyKind::Ring => diff.min(n - diff) as u32,
        TopologyKind::Star => {
            if i == 0 || j == 0 {
                1
            } else {
                2
            }
        }
        TopologyKind::Hypercube => (i ^ j).count_ones(),
        TopologyKind::Mesh => {
            let cols = (n as f64).sqrt().ceil() as usize;
            let (ri, ci) = (i / cols, i % cols);
            let (rj, cj) = (j / cols, j % cols);
            (ri.abs_diff(rj) + ci.abs_diff(cj)) as u32
        }
        TopologyKind::Custom => unreachable!("custom distances come from the matrix"),
    }
}

fn custom_distances(m: &[Vec<u32>], n: usize) -> Result<Vec<Vec<u32>>> {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(Error::Parameter(format!("custom_hops must be {n}x{n}")));
    }
    let mut d = vec![vec![UNREACHABLE; n]; n];
    for i in 0..n {
        if m[i][i] != 0 {
            return Err(Error::Parameter("custom_hops diagonal must be zero".into()));
        }
        for j in 0..n {
            if m[i][j] != m[j][i] {
                return Err(Error::Parameter("custom_hops must be symmetric".into()));
            }
            if i == j {
                d[i][j] = 0;
            } else if m[i][j] > 0 {
                d[i][j] = m[i][j];
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k].saturating_add(d[k][j]);
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    if d.iter().flatten().any(|&x| x >= UNREACHABLE) {
        return Err(Error::Parameter("custom topology is disconnected".into()));
    }
    Ok(d)
}

/// Inter-device transport with its cost-scaling factor and timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkProtocol {
    pub name: String,
    pub lambda: f64,
    pub one_way_latency_ns: f64,
    pub line_rate_bps: f64,
}

impl LinkProtocol {
    /// 100 Gb/s QSFP28 Ethernet, 1 us round trip. Cost baseline (lambda = 1).
    pub fn ethernet_100g() -> Self {
        LinkProtocol {
            name: "ethernet-100g".into(),
            lambda: 1.0,
            one_way_latency_ns: 500.0,
            line_rate_bps: 100e9,
        }
    }

    /// PCIe Gen3x16 peer-to-peer, 12.5x the Ethernet cost.
    pub fn pcie_gen3x16() -> Self {
        LinkProtocol {
            name: "pcie-gen3x16".into(),
            lambda: 12.5,
            one_way_latency_ns: 625.0,
            line_rate_bps: 100e9 / 12.5,
        }
    }

    /// Host-side MPI over 10 Gb/s Ethernet between server nodes.
    pub fn host_mpi_10g() -> Self {
        LinkProtocol {
            name: "host-mpi-10g".into(),
            lambda: 100e9 / 10e9,
            one_way_latency_ns: 10_000.0,
            line_rate_bps: 10e9,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "ethernet-100g" => Ok(Self::ethernet_100g()),
            "pcie-gen3x16" => Ok(Self::pcie_gen3x16()),
            "host-mpi-10g" => Ok(Self::host_mpi_10g()),
            other => Err(Error::Parameter(format!("unknown link protocol `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ProtocolDoc {
    Named(String),
    Full(LinkProtocol),
}

impl ProtocolDoc {
    fn resolve(self) -> Result<LinkProtocol> {
        match self {
            ProtocolDoc::Named(n) => LinkProtocol::by_name(&n),
            ProtocolDoc::Full(p) => Ok(p),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ThresholdDoc {
    Uniform(f64),
    PerClass(Thresholds),
}

impl ThresholdDoc {
    fn resolve(self) -> Thresholds {
        match self {
            ThresholdDoc::Uniform(t) => Thresholds::uniform(t),
            ThresholdDoc::PerClass(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub id: usize,
    pub capacity: ResourceVec,
    pub slot_rows: usize,
    pub slot_cols: usize,
    pub hbm_channels: usize,
    /// Slot row adjacent to the HBM stacks. Row 0 is the bottom die.
    pub hbm_row: usize,
    pub qsfp_ports: usize,
    pub threshold: Thresholds,
    /// Optional per-slot capacities, row-major, replacing uniform division.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot_capacity: Option<Vec<ResourceVec>>,
}

impl DeviceSpec {
    /// Alveo U55C: three dies stacked vertically, two columns, HBM on the bottom die.
    pub fn u55c(id: usize) -> Self {
        DeviceSpec {
            id,
            capacity: U55C_CAPACITY,
            slot_rows: 3,
            slot_cols: 2,
            hbm_channels: 32,
            hbm_row: 0,
            qsfp_ports: 2,
            threshold: Thresholds::default(),
            slot_capacity: None,
        }
    }

    pub fn num_slots(&self) -> usize {
        self.slot_rows * self.slot_cols
    }

    pub fn slot_index(&self, row: usize, col: usize) -> usize {
        row * self.slot_cols + col
    }

    /// Capacity of the slot at (`row`, `col`).
    pub fn slot_capacity_at(&self, row: usize, col: usize) -> ResourceVec {
        match &self.slot_capacity {
            Some(table) => table[self.slot_index(row, col)],
            None => slot_capacity(self),
        }
    }

    /// Thresholded device capacity used by the inter-device partitioner.
    pub fn limit(&self) -> ResourceVec {
        self.threshold.limit(&self.capacity)
    }

    fn check(&self) -> Result<()> {
        if self.slot_rows * self.slot_cols == 0 {
            return Err(Error::Parameter(format!("device {}: empty slot grid", self.id)));
        }
        if self.hbm_row >= self.slot_rows {
            return Err(Error::Parameter(format!(
                "device {}: hbm_row {} outside {} rows",
                self.id, self.hbm_row, self.slot_rows
            )));
        }
        if !self.threshold.is_valid() {
            return Err(Error::Parameter(format!(
                "device {}: thresholds must lie in (0, 1]",
                self.id
            )));
        }
        if let Some(t) = &self.slot_capacity {
            if t.len() != self.num_slots() {
                return Err(Error::Parameter(format!(
                    "device {}: slot_capacity needs {} entries",
                    self.id,
                    self.num_slots()
                )));
            }
        }
        Ok(())
    }
}

/// Uniform per-slot capacity, `floor(capacity / slots)` per class.
pub fn slot_capacity(d: &DeviceSpec) -> ResourceVec {
    d.capacity.div_floor(d.num_slots() as u64)
}

/// Deduct the networking IP overhead of `ports_used` QSFP ports.
pub fn apply_network_overhead(d: &DeviceSpec, ports_used: usize) -> Result<DeviceSpec> {
    if ports_used > d.qsfp_ports {
        return Err(Error::Capacity(format!(
            "device {} has {} network ports, {} requested",
            d.id, d.qsfp_ports, ports_used
        )));
    }
    let mut out = d.clone();
    for (i, r) in Resource::ALL.iter().enumerate() {
        let cap = d.capacity.get(*r);
        let cut = cap * NET_PORT_OVERHEAD_BP[i] * ports_used as u64 / 10_000;
        *out.capacity.get_mut(*r) = cap - cut;
    }
    if let Some(table) = &mut out.slot_capacity {
        // Networking IP sits next to the ports; charge it to the whole grid evenly.
        let n = table.len() as u64;
        let cut = d.capacity - out.capacity;
        for s in table.iter_mut() {
            *s = s.saturating_sub(&cut.div_floor(n));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceDoc {
    id: usize,
    capacity: ResourceVec,
    slot_rows: usize,
    slot_cols: usize,
    hbm_channels: usize,
    #[serde(default)]
    hbm_row: usize,
    qsfp_ports: usize,
    #[serde(default)]
    threshold: Option<ThresholdDoc>,
    #[serde(default)]
    slot_capacity: Option<Vec<ResourceVec>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProtocolsDoc {
    inter_fpga: ProtocolDoc,
    inter_node: ProtocolDoc,
    #[serde(default)]
    host: Option<ProtocolDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterDoc {
    devices: Vec<DeviceDoc>,
    topology: Topology,
    protocols: ProtocolsDoc,
    #[serde(default)]
    onchip_bw: Option<f64>,
    #[serde(default)]
    hbm_bw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSpec {
    pub devices: Vec<DeviceSpec>,
    pub topology: Topology,
    pub inter_fpga: LinkProtocol,
    pub inter_node: LinkProtocol,
    /// Device-to-host staging link used on inter-node hops.
    pub host: LinkProtocol,
    pub onchip_bw_bps: f64,
    /// Aggregate HBM bandwidth of one device.
    pub hbm_bw_bps: f64,
}

impl ClusterSpec {
    pub fn new(devices: Vec<DeviceSpec>, topology: Topology) -> Result<Self> {
        let c = ClusterSpec {
            devices,
            topology,
            inter_fpga: LinkProtocol::ethernet_100g(),
            inter_node: LinkProtocol::host_mpi_10g(),
            host: LinkProtocol::pcie_gen3x16(),
            onchip_bw_bps: ONCHIP_BW_BPS,
            hbm_bw_bps: HBM_BW_BPS,
        };
        c.check()?;
        Ok(c)
    }

    /// `count` U55C cards wired as `kind` inside one server node.
    pub fn u55c(kind: TopologyKind, count: usize) -> Result<Self> {
        let devices = (0..count).map(DeviceSpec::u55c).collect();
        ClusterSpec::new(devices, Topology::simple(kind, count)?)
    }

    /// U55C cards split over several server nodes of `per_node` devices each.
    pub fn u55c_nodes(kind: TopologyKind, nodes: usize, per_node: usize) -> Result<Self> {
        let count = nodes * per_node;
        let groups = (0..nodes)
            .map(|n| (n * per_node..(n + 1) * per_node).collect())
            .collect();
        let devices = (0..count).map(DeviceSpec::u55c).collect();
        ClusterSpec::new(devices, Topology::new(kind, count, Some(groups), None)?)
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn hbm_bw_per_channel(&self, device: usize) -> f64 {
        self.hbm_bw_bps / self.devices[device].hbm_channels.max(1) as f64
    }

    /// Protocol used on the hop class between `i` and `j`.
    pub fn protocol_between(&self, i: usize, j: usize) -> &LinkProtocol {
        if self.topology.same_node(i, j) {
            &self.inter_fpga
        } else {
            &self.inter_node
        }
    }

    /// QSFP ports a device must dedicate to its in-node neighbors.
    pub fn ports_required(&self, device: usize) -> usize {
        let n = self.topology.neighbors(device).len();
        n.min(self.devices[device].qsfp_ports)
    }

    /// Copy of the cluster with networking overhead deducted from every device.
    pub fn with_network_overhead(&self) -> Result<ClusterSpec> {
        let mut out = self.clone();
        for (i, d) in self.devices.iter().enumerate() {
            out.devices[i] = apply_network_overhead(d, self.ports_required(i))?;
        }
        Ok(out)
    }

    /// Override every device's threshold.
    pub fn set_threshold(&mut self, t: Thresholds) {
        for d in &mut self.devices {
            d.threshold = t;
        }
    }

    /// True when devices are interchangeable for partitioning purposes.
    pub fn homogeneous(&self) -> bool {
        self.devices.windows(2).all(|w| {
            w[0].limit() == w[1].limit()
                && w[0].slot_rows == w[1].slot_rows
                && w[0].slot_cols == w[1].slot_cols
        })
    }

    fn check(&self) -> Result<()> {
        if self.topology.count != self.devices.len() {
            return Err(Error::Parameter(format!(
                "topology has {} devices, cluster lists {}",
                self.topology.count,
                self.devices.len()
            )));
        }
        for (i, d) in self.devices.iter().enumerate() {
            if d.id != i {
                return Err(Error::Parameter(format!("device at position {i} has id {}", d.id)));
            }
            d.check()?;
        }
        let (r, c) = (self.devices[0].slot_rows, self.devices[0].slot_cols);
        if self.devices.iter().any(|d| d.slot_rows != r || d.slot_cols != c) {
            return Err(Error::Parameter("devices must share one slot grid".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = ClusterDoc {
            devices: self
                .devices
                .iter()
                .map(|d| DeviceDoc {
                    id: d.id,
                    capacity: d.capacity,
                    slot_rows: d.slot_rows,
                    slot_cols: d.slot_cols,
                    hbm_channels: d.hbm_channels,
                    hbm_row: d.hbm_row,
                    qsfp_ports: d.qsfp_ports,
                    threshold: Some(ThresholdDoc::PerClass(d.threshold)),
                    slot_capacity: d.slot_capacity.clone(),
                })
                .collect(),
            topology: self.topology.clone(),
            protocols: ProtocolsDoc {
                inter_fpga: ProtocolDoc::Full(self.inter_fpga.clone()),
                inter_node: ProtocolDoc::Full(self.inter_node.clone()),
                host: Some(ProtocolDoc::Full(self.host.clone())),
            },
            onchip_bw: Some(self.onchip_bw_bps),
            hbm_bw: Some(self.hbm_bw_bps),
        };
        canon::to_string(&doc)
    }
}

/// Parse a canonical-JSON cluster description.
pub fn parse_cluster(text: &str) -> Result<ClusterSpec> {
    let doc: ClusterDoc = canon::from_str(text)?;
    let devices = doc
        .devices
        .into_iter()
        .map(|d| DeviceSpec {
            id: d.id,
            capacity: d.capacity,
            slot_rows: d.slot_rows,
            slot_cols: d.slot_cols,
            hbm_channels: d.hbm_channels,
            hbm_row: d.hbm_row,
            qsfp_ports: d.qsfp_ports,
            threshold: d.threshold.map(ThresholdDoc::resolve).unwrap_or_default(),
            slot_capacity: d.slot_capacity,
        })
        .collect();
    let mut c = ClusterSpec::new(devices, doc.topology)?;
    c.inter_fpga = doc.protocols.inter_fpga.resolve()?;
    c.inter_node = doc.protocols.inter_node.resolve()?;
    if let Some(h) = doc.protocols.host {
        c.host = h.resolve()?;
    }
    if let Some(b) = doc.onchip_bw {
        c.onchip_bw_bps = b;
    }
    if let Some(b) = doc.hbm_bw {
        c.hbm_bw_bps = b;
    }
    Ok(c)
}

/// Communication cost of one FIFO between devices `i` and `j`: width x hops x lambda.
pub fn comm_cost(width: u32, i: usize, j: usize, cluster: &ClusterSpec) -> Result<f64> {
    let hops = cluster.topology.dist(i, j)?;
    if hops == 0 {
        return Ok(0.0);
    }
    Ok(width as f64 * hops as f64 * cluster.protocol_between(i, j).lambda)
}
