//! Discrete-event execution of a pipelined design.
//!
//! Each FIFO's tokens travel in at most [`MAX_PACKETS`] packets. Every
//! vertex of a connected component fires as many times as the component's
//! busiest edge has packets; firing `i` consumes what the producer's firing
//! `i` emitted and produces its own proportional share of every output.
//! Edges that close a cycle carry data for the next invocation: they are
//! buffered whole and read by a final zero-work drain firing.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterSpec;
use crate::comm::{effective_rate, link_latency_ns, net_edge_id, NetLink, AGGREGATED_PORTS};
use crate::error::{Error, Result};
use crate::graph::{TaskGraph, VertexKind};
use crate::pipeliner::{scc, PipelinedDesign};

pub const MAX_PACKETS: u64 = 64;
/// Smallest FIFO capacity in packets.
pub const MIN_CAPACITY_PACKETS: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub frequency_hz: f64,
    /// Streams one network port carries; bounds the links per device.
    pub port_streams: usize,
    pub trace: bool,
    /// Vertices that merge inputs in arrival order instead of by contract.
    /// Used only to check that the latency-insensitivity test can fail.
    pub nondeterministic_merge: BTreeSet<String>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            frequency_hz: crate::pipeliner::DEFAULT_FREQUENCY_HZ,
            port_streams: crate::comm::DEFAULT_PORT_STREAMS,
            trace: false,
            nondeterministic_merge: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexStats {
    pub firings: u64,
    pub work_per_firing: u64,
    pub busy_cycles: u64,
    pub idle_cycles: u64,
    pub first_start_s: f64,
    pub last_end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub edge: String,
    pub src_device: usize,
    pub dst_device: usize,
    pub bytes: u64,
    pub packets: u64,
    pub busy_s: f64,
    pub achieved_bps: f64,
    /// Packets that waited for the device's network egress.
    pub serialized: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub device: usize,
    pub channel: usize,
    pub bytes: u64,
    pub busy_s: f64,
    /// Accesses that waited for the channel.
    pub serialized: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub subject: String,
    pub event: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub total_time_s: f64,
    pub frequency_hz: f64,
    /// Makespan with unlimited buffering, bandwidth and memory.
    pub critical_path_s: f64,
    pub lower_bound_s: f64,
    pub vertices: BTreeMap<String, VertexStats>,
    pub links: Vec<LinkStats>,
    pub hbm_channels: Vec<ChannelStats>,
    pub contention_events: u64,
    pub sink_tokens: BTreeMap<String, u64>,
    pub sink_digests: BTreeMap<String, String>,
    pub output_digest: String,
    /// Largest mean interval between consecutive firing starts of one vertex.
    pub initiation_interval_s: f64,
    pub compute_share: f64,
    pub link_share: f64,
    pub hbm_share: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRecord>,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        crate::canon::to_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        crate::canon::from_str(text)
    }

    /// Event trace, one JSON record per line.
    pub fn trace_lines(&self) -> String {
        self.trace
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace record") + "\n")
            .collect()
    }

    pub fn total_sink_tokens(&self) -> u64 {
        self.sink_tokens.values().sum()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn fnv_u64(h: u64, x: u64) -> u64 {
    fnv(h, &x.to_le_bytes())
}

/// Feedback edges: DFS back edges inside each strongly connected component,
/// rooted at sources and entry vertices first.
pub fn back_edges(g: &TaskGraph) -> Vec<bool> {
    let comp = scc(g);
    let ends = g.endpoints();
    let n = g.vertex_count();
    let mut out_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut entry = vec![false; n];
    for (i, &(s, d)) in ends.iter().enumerate() {
        if comp[s] == comp[d] {
            out_adj[s].push(i);
        } else {
            entry[d] = true;
        }
    }
    let verts = g.vertices();
    let mut roots: Vec<usize> = (0..n).collect();
    roots.sort_by_key(|&v| (!(entry[v] || verts[v].kind == VertexKind::Source), v));
    let mut state = vec![0u8; n]; // 0 new, 1 on path, 2 done
    let mut back = vec![false; ends.len()];
    for r in roots {
        if state[r] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(r, 0)];
        state[r] = 1;
        while let Some(&mut (v, ref mut it)) = stack.last_mut() {
            if *it < out_adj[v].len() {
                let e = out_adj[v][*it];
                *it += 1;
                let w = ends[e].1;
                match state[w] {
                    0 => {
                        state[w] = 1;
                        stack.push((w, 0));
                    }
                    1 => back[e] = true,
                    _ => {}
                }
            } else {
                state[v] = 2;
                stack.pop();
            }
        }
    }
    back
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Done,
    Wake,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    time: Time,
    kind: EventKind,
    vertex: usize,
}

struct EdgeModel {
    src: usize,
    dst: usize,
    tokens: u64,
    width: u64,
    packets: u64,
    capacity: u64,
    latency_s: f64,
    back: bool,
    net: Option<NetModel>,
}

struct NetModel {
    link: usize,
    device: usize,
    rate_bps: f64,
    latency_s: f64,
}

impl EdgeModel {
    fn packet_tokens(&self, k: u64) -> u64 {
        (k + 1) * self.tokens / self.packets - k * self.tokens / self.packets
    }
}

struct PortModel {
    device: usize,
    channel: usize,
    volume: u64,
}

struct VertexModel {
    /// Firings that carry work.
    firings: u64,
    /// Including the drain firing for feedback inputs.
    total_firings: u64,
    work_per_firing: u64,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    ports: Vec<PortModel>,
    merge: bool,
}

impl VertexModel {
    /// Cumulative packets of `e` consumed once firing `i` has started: what
    /// the producer's firing `i` emitted. Feedback is only read by the drain
    /// firing.
    fn need(&self, e: &EdgeModel, i: u64) -> u64 {
        if e.back {
            return if i >= self.firings { e.packets } else { 0 };
        }
        (i + 1).min(self.firings) * e.packets / self.firings
    }

    /// Cumulative packets of `e` produced once firing `i` has completed.
    fn emitted(&self, e: &EdgeModel, i: u64) -> u64 {
        (i + 1).min(self.firings) * e.packets / self.firings
    }
}

struct Fifo {
    /// Arrival time, value and tokens of packets not yet consumed.
    queue: VecDeque<(f64, u64, u64)>,
    emitted: u64,
    consumed: u64,
    consumed_tokens: u64,
}

struct Model {
    edges: Vec<EdgeModel>,
    vertices: Vec<VertexModel>,
    links: Vec<NetLink>,
    channels: Vec<usize>,
    channel_bw: Vec<f64>,
    devices: usize,
    cycle_s: f64,
}

fn build(d: &PipelinedDesign, cluster: &ClusterSpec, cfg: &SimConfig) -> Result<Model> {
    if !(cfg.frequency_hz > 0.0) {
        return Err(Error::Parameter(format!("frequency {} Hz", cfg.frequency_hz)));
    }
    let g = &d.graph;
    let cycle_s = 1.0 / cfg.frequency_hz;
    let ends = g.endpoints();
    let back = back_edges(g);
    let device_of = |id: &str| d.slots.mapping.get(id).map_or(0, |s| s.device);
    let link_of: BTreeMap<String, usize> =
        d.links.iter().enumerate().map(|(i, l)| (net_edge_id(&l.edge), i)).collect();
    let mut streams = vec![0usize; cluster.device_count()];
    for l in &d.links {
        streams[l.src_device] += 1;
        streams[l.dst_device] += 1;
    }
    for (dev, &n) in streams.iter().enumerate() {
        let capacity = cluster.devices[dev].qsfp_ports * cfg.port_streams;
        if n > capacity {
            return Err(Error::PortExhaustion {
                device: dev,
                streams: n,
                capacity,
            });
        }
    }
    let mut edges = Vec::with_capacity(g.edge_count());
    for (i, e) in g.edges().iter().enumerate() {
        let packets = e.tokens.min(MAX_PACKETS);
        let depth = d.depth(&e.id);
        let capacity = if packets == 0 {
            MIN_CAPACITY_PACKETS
        } else {
            (depth * packets / e.tokens).max(MIN_CAPACITY_PACKETS)
        };
        let net = match link_of.get(&e.id) {
            Some(&li) => {
                let l = &d.links[li];
                if l.src_device >= cluster.device_count() || l.dst_device >= cluster.device_count() {
                    return Err(Error::Range {
                        index: l.src_device.max(l.dst_device),
                        count: cluster.device_count(),
                    });
                }
                Some(NetModel {
                    link: li,
                    device: l.src_device,
                    rate_bps: effective_rate(l, cluster)?,
                    latency_s: link_latency_ns(l, cluster) * 1e-9,
                })
            }
            None => None,
        };
        edges.push(EdgeModel {
            src: ends[i].0,
            dst: ends[i].1,
            tokens: e.tokens,
            width: e.width as u64,
            packets,
            capacity,
            latency_s: d.edge_latency.get(&e.id).copied().unwrap_or(0) as f64 * cycle_s,
            back: back[i],
            net,
        });
    }
    let mut channels = Vec::with_capacity(cluster.device_count());
    let mut channel_bw = Vec::with_capacity(cluster.device_count());
    for (i, dev) in cluster.devices.iter().enumerate() {
        channels.push(dev.hbm_channels.max(1));
        channel_bw.push(cluster.hbm_bw_per_channel(i));
    }
    // One firing count per weakly connected component keeps every producer
    // and consumer schedule aligned.
    let mut parent: Vec<usize> = (0..g.vertex_count()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for e in &edges {
        let (a, b) = (find(&mut parent, e.src), find(&mut parent, e.dst));
        parent[a.max(b)] = a.min(b);
    }
    let mut rate = vec![1u64; g.vertex_count()];
    for e in &edges {
        let r = find(&mut parent, e.src);
        rate[r] = rate[r].max(e.packets);
    }
    let mut vertices = Vec::with_capacity(g.vertex_count());
    for (vi, v) in g.vertices().iter().enumerate() {
        let inputs: Vec<usize> = (0..edges.len()).filter(|&e| edges[e].dst == vi).collect();
        let outputs: Vec<usize> = (0..edges.len()).filter(|&e| edges[e].src == vi).collect();
        let merge = cfg.nondeterministic_merge.contains(&v.id);
        let firings = if merge {
            inputs.iter().map(|&e| edges[e].packets).sum::<u64>().max(1)
        } else {
            rate[find(&mut parent, vi)]
        };
        let drains = !merge && inputs.iter().any(|&e| edges[e].back && edges[e].packets > 0);
        let dev = device_of(&v.id);
        if dev >= cluster.device_count() {
            return Err(Error::Range {
                index: dev,
                count: cluster.device_count(),
            });
        }
        let ports = v
            .hbm_ports
            .iter()
            .enumerate()
            .map(|(p, port)| PortModel {
                device: dev,
                channel: d
                    .hbm
                    .get(&dev)
                    .and_then(|b| b.channel(&v.id, p))
                    .unwrap_or(p % channels[dev])
                    .min(channels[dev] - 1),
                volume: port.volume,
            })
            .collect();
        vertices.push(VertexModel {
            firings,
            total_firings: firings + drains as u64,
            work_per_firing: v.work.div_ceil(firings),
            inputs,
            outputs,
            ports,
            merge,
        });
    }
    Ok(Model {
        edges,
        vertices,
        links: d.links.clone(),
        channels,
        channel_bw,
        devices: cluster.device_count(),
        cycle_s,
    })
}

/// Resources a run is allowed to contend for.
#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Real,
    /// Unlimited FIFO capacity, memory and network bandwidth.
    Ideal,
}

struct Run<'a> {
    m: &'a Model,
    g: &'a TaskGraph,
    mode: Mode,
    fifos: Vec<Fifo>,
    next: Vec<u64>,
    busy: Vec<bool>,
    state: Vec<u64>,
    stats: Vec<(u64, f64, f64, Vec<f64>)>,
    chan_free: Vec<Vec<f64>>,
    chan_stats: BTreeMap<(usize, usize), (u64, f64, u64)>,
    egress_free: Vec<f64>,
    link_stats: Vec<(u64, u64, f64, u64)>,
    events: BinaryHeap<std::cmp::Reverse<Event>>,
    dirty: BTreeSet<usize>,
    trace: Option<Vec<TraceRecord>>,
    end: f64,
}

impl<'a> Run<'a> {
    fn new(m: &'a Model, g: &'a TaskGraph, mode: Mode, trace: bool) -> Self {
        let n = m.vertices.len();
        Run {
            m,
            g,
            mode,
            fifos: (0..m.edges.len())
                .map(|_| Fifo {
                    queue: VecDeque::new(),
                    emitted: 0,
                    consumed: 0,
                    consumed_tokens: 0,
                })
                .collect(),
            next: vec![0; n],
            busy: vec![false; n],
            state: g.vertices().iter().map(|v| fnv(FNV_OFFSET, v.id.as_bytes())).collect(),
            stats: vec![(0, f64::INFINITY, 0.0, Vec::new()); n],
            chan_free: m.channels.iter().map(|&c| vec![0.0; c]).collect(),
            chan_stats: BTreeMap::new(),
            egress_free: vec![0.0; m.devices],
            link_stats: vec![(0, 0, 0.0, 0); m.links.len()],
            events: BinaryHeap::new(),
            dirty: (0..n).collect(),
            trace: trace.then(Vec::new),
            end: 0.0,
        }
    }

    fn log(&mut self, t: f64, subject: &str, event: String) {
        if let Some(tr) = &mut self.trace {
            tr.push(TraceRecord {
                t,
                subject: subject.to_string(),
                event,
            });
        }
    }

    fn arrived(&self, e: usize, k: u64, t: f64) -> bool {
        let f = &self.fifos[e];
        k == 0 || (f.queue.len() as u64 >= k && f.queue[k as usize - 1].0 <= t)
    }

    /// Input edge chosen by a merge vertex, if any packet is waiting.
    fn merge_pick(&self, v: usize, t: f64) -> Option<usize> {
        self.m.vertices[v]
            .inputs
            .iter()
            .filter_map(|&e| self.fifos[e].queue.front().filter(|p| p.0 <= t).map(|p| (Time(p.0), e)))
            .min()
            .map(|(_, e)| e)
    }

    fn can_fire(&self, v: usize, t: f64) -> bool {
        let vm = &self.m.vertices[v];
        let i = self.next[v];
        if self.busy[v] || i >= vm.total_firings {
            return false;
        }
        if vm.merge {
            if self.merge_pick(v, t).is_none() {
                return false;
            }
        } else {
            for &e in &vm.inputs {
                let em = &self.m.edges[e];
                let k = vm.need(em, i) - self.fifos[e].consumed;
                if !self.arrived(e, k, t) {
                    return false;
                }
            }
        }
        if self.mode == Mode::Real {
            for &e in &vm.outputs {
                let em = &self.m.edges[e];
                if em.back {
                    continue;
                }
                let before = if i == 0 { 0 } else { vm.emitted(em, i - 1) };
                let add = vm.emitted(em, i) - before;
                let held = self.fifos[e].emitted - self.fifos[e].consumed;
                if add > 0 && held > 0 && held + add > em.capacity {
                    return false;
                }
            }
        }
        true
    }

    fn consume(&mut self, v: usize, e: usize, count: u64) {
        for _ in 0..count {
            let (_, value, tokens) = self.fifos[e].queue.pop_front().expect("arrived packet");
            self.fifos[e].consumed += 1;
            self.fifos[e].consumed_tokens += tokens;
            self.state[v] = fnv_u64(self.state[v], value);
        }
        if count > 0 {
            self.dirty.insert(self.m.edges[e].src);
        }
    }

    fn fire(&mut self, v: usize, t: f64) {
        let m = self.m;
        let vm = &m.vertices[v];
        let i = self.next[v];
        if vm.merge {
            let e = self.merge_pick(v, t).expect("merge input");
            self.state[v] = fnv_u64(self.state[v], e as u64);
            self.consume(v, e, 1);
        } else {
            for &e in &vm.inputs {
                let k = vm.need(&m.edges[e], i) - self.fifos[e].consumed;
                self.consume(v, e, k);
            }
        }
        let drain = i >= vm.firings;
        let work = if drain { 0 } else { vm.work_per_firing };
        let mut end = t + work as f64 * m.cycle_s;
        if !drain {
            for p in &vm.ports {
                let bytes = (i + 1) * p.volume / vm.firings - i * p.volume / vm.firings;
                if bytes == 0 {
                    continue;
                }
                let dur = bytes as f64 * 8.0 / m.channel_bw[p.device];
                let free = &mut self.chan_free[p.device][p.channel];
                let start = if self.mode == Mode::Real { t.max(*free) } else { t };
                let waited = start > t;
                *free = start + dur;
                let s = self.chan_stats.entry((p.device, p.channel)).or_insert((0, 0.0, 0));
                s.0 += bytes;
                s.1 += dur;
                s.2 += waited as u64;
                end = end.max(start + dur);
            }
        }
        self.busy[v] = true;
        let st = &mut self.stats[v];
        st.0 += work;
        st.1 = st.1.min(t);
        st.3.push(t);
        if self.trace.is_some() {
            let id = self.g.vertices()[v].id.clone();
            self.log(t, &id, format!("fire {i}"));
        }
        self.events.push(std::cmp::Reverse(Event {
            time: Time(end),
            kind: EventKind::Done,
            vertex: v,
        }));
    }

    fn complete(&mut self, v: usize, t: f64) {
        let m = self.m;
        let vm = &m.vertices[v];
        let i = self.next[v];
        for &e in &vm.outputs {
            let em = &m.edges[e];
            let before = if i == 0 { 0 } else { vm.emitted(em, i - 1) };
            for k in before..vm.emitted(em, i) {
                let tokens = em.packet_tokens(k);
                let value = fnv_u64(fnv_u64(self.state[v], e as u64), k);
                let arrival = match &em.net {
                    Some(net) => {
                        let bytes = tokens * em.width / 8;
                        let dur = bytes as f64 * 8.0 / net.rate_bps;
                        let (depart, dur) = match self.mode {
                            Mode::Real => (t.max(self.egress_free[net.device]), dur),
                            Mode::Ideal => (t, 0.0),
                        };
                        let s = &mut self.link_stats[net.link];
                        s.0 += bytes;
                        s.1 += 1;
                        s.2 += dur;
                        s.3 += (depart > t) as u64;
                        if self.mode == Mode::Real {
                            self.egress_free[net.device] = depart + dur;
                        }
                        depart + dur + net.latency_s + em.latency_s
                    }
                    None => t + em.latency_s,
                };
                self.fifos[e].queue.push_back((arrival, value, tokens));
                self.fifos[e].emitted += 1;
                self.events.push(std::cmp::Reverse(Event {
                    time: Time(arrival),
                    kind: EventKind::Wake,
                    vertex: em.dst,
                }));
            }
        }
        self.busy[v] = false;
        self.next[v] += 1;
        self.stats[v].2 = t;
        self.end = self.end.max(t);
        self.dirty.insert(v);
        if self.trace.is_some() {
            let id = self.g.vertices()[v].id.clone();
            self.log(t, &id, format!("done {i}"));
        }
    }

    fn run(&mut self) -> Result<()> {
        let mut t = 0.0;
        loop {
            while let Some(v) = self.dirty.pop_first() {
                if self.can_fire(v, t) {
                    self.fire(v, t);
                }
            }
            let Some(std::cmp::Reverse(first)) = self.events.pop() else {
                break;
            };
            t = first.time.0;
            let mut batch = vec![first];
            while let Some(std::cmp::Reverse(ev)) = self.events.peek() {
                if ev.time.0 != t {
                    break;
                }
                batch.push(self.events.pop().unwrap().0);
            }
            for ev in batch {
                match ev.kind {
                    EventKind::Done => self.complete(ev.vertex, t),
                    EventKind::Wake => {
                        self.dirty.insert(ev.vertex);
                    }
                }
            }
        }
        let waiting: Vec<String> = (0..self.m.vertices.len())
            .filter(|&v| self.next[v] < self.m.vertices[v].total_firings)
            .map(|v| self.g.vertices()[v].id.clone())
            .collect();
        if !waiting.is_empty() {
            return Err(Error::Deadlock {
                time: (t / self.m.cycle_s).round() as u64,
                waiting,
            });
        }
        Ok(())
    }
}

/// Run the design to completion.
pub fn simulate(d: &PipelinedDesign, cluster: &ClusterSpec, cfg: &SimConfig) -> Result<SimReport> {
    let m = build(d, cluster, cfg)?;
    let g = &d.graph;
    let mut run = Run::new(&m, g, Mode::Real, cfg.trace);
    run.run()?;
    let mut ideal = Run::new(&m, g, Mode::Ideal, false);
    ideal.run()?;
    report(d, cluster, &m, run, ideal.end)
}

fn report(d: &PipelinedDesign, cluster: &ClusterSpec, m: &Model, run: Run, critical: f64) -> Result<SimReport> {
    let g = &d.graph;
    let total = run.end;
    let f = 1.0 / m.cycle_s;
    let total_cycles = (total * f).round() as u64;
    let mut vertices = BTreeMap::new();
    let mut ii: f64 = 0.0;
    let mut max_busy: f64 = 0.0;
    for (v, vx) in g.vertices().iter().enumerate() {
        let (busy, first, last, starts) = &run.stats[v];
        if starts.len() > 1 {
            ii = ii.max((starts[starts.len() - 1] - starts[0]) / (starts.len() - 1) as f64);
        }
        max_busy = max_busy.max(*busy as f64 * m.cycle_s);
        vertices.insert(
            vx.id.clone(),
            VertexStats {
                firings: run.next[v],
                work_per_firing: m.vertices[v].work_per_firing,
                busy_cycles: *busy,
                idle_cycles: total_cycles.saturating_sub(*busy),
                first_start_s: if first.is_finite() { *first } else { 0.0 },
                last_end_s: *last,
            },
        );
    }
    // Conservation and sink quotas.
    let mut sink_tokens = BTreeMap::new();
    let mut sink_digests = BTreeMap::new();
    for (e, em) in m.edges.iter().enumerate() {
        let fifo = &run.fifos[e];
        if fifo.emitted != fifo.consumed + fifo.queue.len() as u64 || !fifo.queue.is_empty() {
            return Err(Error::TokenMismatch {
                sink: g.edges()[e].id.clone(),
                expected: fifo.emitted,
                got: fifo.consumed,
            });
        }
        let dst = &g.vertices()[em.dst];
        if m.vertices[em.dst].outputs.is_empty() || dst.kind == VertexKind::Sink {
            if fifo.consumed_tokens != em.tokens {
                return Err(Error::TokenMismatch {
                    sink: dst.id.clone(),
                    expected: em.tokens,
                    got: fifo.consumed_tokens,
                });
            }
            *sink_tokens.entry(dst.id.clone()).or_insert(0) += em.tokens;
        }
    }
    let mut digest = FNV_OFFSET;
    for (v, vx) in g.vertices().iter().enumerate() {
        if sink_tokens.contains_key(&vx.id) {
            let h = run.state[v];
            digest = fnv_u64(fnv(digest, vx.id.as_bytes()), h);
            sink_digests.insert(vx.id.clone(), format!("{h:016x}"));
        }
    }
    let links: Vec<LinkStats> = m
        .links
        .iter()
        .zip(&run.link_stats)
        .map(|(l, &(bytes, packets, busy, ser))| LinkStats {
            edge: l.edge.clone(),
            src_device: l.src_device,
            dst_device: l.dst_device,
            bytes,
            packets,
            busy_s: busy,
            achieved_bps: if busy > 0.0 { bytes as f64 * 8.0 / busy } else { 0.0 },
            serialized: ser,
        })
        .collect();
    let hbm_channels: Vec<ChannelStats> = run
        .chan_stats
        .iter()
        .map(|(&(device, channel), &(bytes, busy_s, serialized))| ChannelStats {
            device,
            channel,
            bytes,
            busy_s,
            serialized,
        })
        .collect();
    // Egress time per device, and the line-rate bound per link.
    let mut egress = vec![0.0f64; m.devices];
    let mut link_bound: f64 = 0.0;
    for (l, s) in m.links.iter().zip(&links) {
        egress[l.src_device] += s.busy_s;
        let peak = l.protocol.line_rate_bps * AGGREGATED_PORTS as f64;
        link_bound = link_bound.max(s.bytes as f64 * 8.0 / peak);
    }
    let max_link = egress.iter().copied().fold(0.0, f64::max);
    let max_hbm = hbm_channels.iter().map(|c| c.busy_s).fold(0.0, f64::max);
    let lower_bound = critical.max(link_bound).max(max_hbm).max(max_busy);
    let share = |x: f64| if total > 0.0 { crate::canon::round6(x / total) } else { 0.0 };
    let contention_events =
        links.iter().map(|l| l.serialized).sum::<u64>() + hbm_channels.iter().map(|c| c.serialized).sum::<u64>();
    let _ = cluster;
    Ok(SimReport {
        total_time_s: total,
        frequency_hz: f,
        critical_path_s: critical,
        lower_bound_s: lower_bound,
        vertices,
        links,
        hbm_channels,
        contention_events,
        sink_tokens,
        sink_digests,
        output_digest: format!("{digest:016x}"),
        initiation_interval_s: ii,
        compute_share: share(max_busy),
        link_share: share(max_link),
        hbm_share: share(max_hbm),
        trace: run.trace.unwrap_or_default(),
    })
}

/// Deterministic extra stages for edge `j` in trial `t` (1-based).
pub fn perturbation(t: u64, j: u64) -> u64 {
    (t * 7 + j * j * 3 + j * t * 5) % 11
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InsensitivityVerdict {
    pub trials: usize,
    pub digest: String,
}

/// Re-run under `trials` latency perturbations and require identical outputs.
pub fn check_latency_insensitivity(
    d: &PipelinedDesign,
    cluster: &ClusterSpec,
    cfg: &SimConfig,
    trials: usize,
) -> Result<InsensitivityVerdict> {
    let base = simulate(d, cluster, cfg)?;
    let runs: Vec<Result<(Vec<(String, u64)>, String)>> = (1..=trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut p = d.clone();
            let mut vector = Vec::new();
            for (j, e) in d.graph.edges().iter().enumerate() {
                let extra = perturbation(t, j as u64);
                *p.edge_latency.entry(e.id.clone()).or_insert(0) += extra;
                vector.push((e.id.clone(), extra));
            }
            let r = simulate(&p, cluster, cfg)?;
            Ok((vector, r.output_digest))
        })
        .collect();
    for r in runs {
        let (vector, digest) = r?;
        if digest != base.output_digest {
            return Err(Error::DigestMismatch { perturbation: vector });
        }
    }
    Ok(InsensitivityVerdict {
        trials,
        digest: base.output_digest,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Speedup {
    /// Baseline time over candidate time.
    pub speedup: f64,
    pub baseline_s: f64,
    pub candidate_s: f64,
    /// (compute, link, hbm) shares of each run.
    pub baseline_shares: (f64, f64, f64),
    pub candidate_shares: (f64, f64, f64),
}

pub fn compare(baseline: &SimReport, candidate: &SimReport) -> Result<Speedup> {
    let (a, b) = (baseline.total_sink_tokens(), candidate.total_sink_tokens());
    if a != b {
        return Err(Error::WorkloadMismatch(format!("{a} vs {b} sink tokens")));
    }
    let shares = |r: &SimReport| (r.compute_share, r.link_share, r.hbm_share);
    Ok(Speedup {
        speedup: if candidate.total_time_s > 0.0 {
            baseline.total_time_s / candidate.total_time_s
        } else {
            1.0
        },
        baseline_s: baseline.total_time_s,
        candidate_s: candidate.total_time_s,
        baseline_shares: shares(baseline),
        candidate_shares: shares(candidate),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv(FNV_OFFSET, b""), 0xcbf29ce484222325);
        assert_eq!(fnv(FNV_OFFSET, b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn perturbations_vary() {
        let a: Vec<u64> = (0..8).map(|j| perturbation(1, j)).collect();
        let b: Vec<u64> = (0..8).map(|j| perturbation(2, j)).collect();
        assert_ne!(a, b);
        assert!(a.iter().any(|&x| x > 0));
    }
}
