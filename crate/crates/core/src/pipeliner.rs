//! Pipeline registers on slot crossings and reconvergent-path balancing.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::cluster::ClusterSpec;
use crate::comm::{link_latency_ns, net_edge_id, NetLink};
use crate::error::{Error, Result};
use crate::floorplan::SlotAssignment;
use crate::graph::TaskGraph;
use crate::hbm::HbmBinding;

pub const DEFAULT_STAGES_PER_CROSSING: u64 = 1;
pub const DEFAULT_FREQUENCY_HZ: f64 = 300e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    /// Register stages per slot boundary crossed.
    pub stages_per_crossing: u64,
    /// Clock used to express link latency in cycles when balancing.
    pub frequency_hz: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            stages_per_crossing: DEFAULT_STAGES_PER_CROSSING,
            frequency_hz: DEFAULT_FREQUENCY_HZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelinedDesign {
    pub graph: TaskGraph,
    pub slots: SlotAssignment,
    /// Register stages added per edge.
    pub edge_latency: BTreeMap<String, u64>,
    /// Network hop latency in cycles, for device-crossing edges.
    pub link_latency: BTreeMap<String, u64>,
    /// Extra FIFO depth, in tokens, per edge.
    pub balancing_fifos: BTreeMap<String, u64>,
    pub links: Vec<NetLink>,
    /// Channel binding per device; unbound ports fall back to channel `port % channels`.
    pub hbm: BTreeMap<usize, HbmBinding>,
    pub stages_per_crossing: u64,
    pub frequency_hz: f64,
}

impl PipelinedDesign {
    /// Registers plus network latency of `edge`, in cycles.
    pub fn total_latency(&self, edge: &str) -> u64 {
        self.edge_latency.get(edge).copied().unwrap_or(0) + self.link_latency.get(edge).copied().unwrap_or(0)
    }

    pub fn depth(&self, edge: &str) -> u64 {
        let base = self.graph.edge(edge).map_or(0, |e| e.depth as u64);
        base + self.balancing_fifos.get(edge).copied().unwrap_or(0)
    }

    /// Latency and depth tables for the design bundle.
    pub fn latency_json(&self) -> String {
        #[derive(Serialize)]
        struct Row {
            stages: u64,
            link_cycles: u64,
            balance_depth: u64,
        }
        let rows: BTreeMap<&str, Row> = self
            .graph
            .edges()
            .iter()
            .map(|e| {
                (
                    e.id.as_str(),
                    Row {
                        stages: self.edge_latency.get(&e.id).copied().unwrap_or(0),
                        link_cycles: self.link_latency.get(&e.id).copied().unwrap_or(0),
                        balance_depth: self.balancing_fifos.get(&e.id).copied().unwrap_or(0),
                    },
                )
            })
            .collect();
        crate::canon::to_string(&rows)
    }
}

/// Register stages for every edge: `k` per slot boundary between endpoints on
/// the same device, zero for edges leaving the device.
pub fn insert_crossing_registers(s: &SlotAssignment, g: &TaskGraph, k: u64) -> Result<BTreeMap<String, u64>> {
    let mut out = BTreeMap::new();
    for e in g.edges() {
        let slot = |id: &str| {
            s.mapping.get(id).ok_or_else(|| Error::Reference {
                kind: "slot assignment for vertex",
                id: id.to_string(),
            })
        };
        let (a, b) = (slot(&e.src)?, slot(&e.dst)?);
        let stages = if a.device == b.device {
            k * (a.row.abs_diff(b.row) + a.col.abs_diff(b.col)) as u64
        } else {
            0
        };
        out.insert(e.id.clone(), stages);
    }
    Ok(out)
}

/// Strongly connected components, as a component index per vertex.
/// Components are numbered in reverse topological order.
pub fn scc(g: &TaskGraph) -> Vec<usize> {
    let n = g.vertex_count();
    let mut adj = vec![Vec::new(); n];
    for (s, d) in g.endpoints() {
        adj[s].push(d);
    }
    // Iterative Tarjan.
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let mut next_index = 0;
    let mut ncomp = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut it)) = call.last_mut() {
            if *it < adj[v].len() {
                let w = adj[v][*it];
                *it += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp[w] = ncomp;
                        if w == v {
                            break;
                        }
                    }
                    ncomp += 1;
                }
            }
        }
    }
    comp
}

/// Reject cycles whose added register stages exceed their total FIFO depth.
pub fn check_deadlock_risk(g: &TaskGraph, stages: &BTreeMap<String, u64>) -> Result<()> {
    let comp = scc(g);
    let ends = g.endpoints();
    // A cycle with sum(stages - depth) > 0 is a negative cycle under depth - stages.
    let inner: Vec<(usize, usize, i64, usize)> = ends
        .iter()
        .zip(g.edges())
        .enumerate()
        .filter(|(_, ((s, d), _))| comp[*s] == comp[*d])
        .map(|(i, ((s, d), e))| {
            let w = e.depth as i64 - stages.get(&e.id).copied().unwrap_or(0) as i64;
            (*s, *d, w, i)
        })
        .collect();
    if inner.is_empty() {
        return Ok(());
    }
    let n = g.vertex_count();
    let mut dist = vec![0i64; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut last = None;
    for _ in 0..=n {
        last = None;
        for &(s, d, w, i) in &inner {
            if dist[s] + w < dist[d] {
                dist[d] = dist[s] + w;
                pred[d] = Some(i);
                last = Some(d);
            }
        }
        if last.is_none() {
            return Ok(());
        }
    }
    let mut x = last.unwrap();
    for _ in 0..n {
        x = ends[pred[x].unwrap()].0;
    }
    let mut cycle_edges = Vec::new();
    let mut y = x;
    loop {
        let e = pred[y].unwrap();
        cycle_edges.push(e);
        y = ends[e].0;
        if y == x {
            break;
        }
    }
    cycle_edges.reverse();
    let edges = g.edges();
    let verts = g.vertices();
    let latency = cycle_edges.iter().map(|&e| stages.get(&edges[e].id).copied().unwrap_or(0)).sum();
    let depth = cycle_edges.iter().map(|&e| edges[e].depth as u64).sum();
    Err(Error::DeadlockRisk {
        cycle: cycle_edges.iter().map(|&e| verts[ends[e].0].id.clone()).collect(),
        latency,
        depth,
    })
}

/// Extra depth per edge so that every in-edge of a vertex sees the latest
/// arrival over all its in-paths. Cycles are contracted; edges inside a
/// strongly connected component get no balancing.
pub fn balance_reconvergent(g: &TaskGraph, latency: &BTreeMap<String, u64>) -> Result<BTreeMap<String, u64>> {
    let comp = scc(g);
    let ncomp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let ends = g.endpoints();
    let lat = |e: &crate::graph::FifoEdge| latency.get(&e.id).copied().unwrap_or(0);
    // Tarjan numbers components in reverse topological order.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
    for (v, &c) in comp.iter().enumerate() {
        members[c].push(v);
    }
    let mut arrival = vec![0u64; ncomp];
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
    for (i, &(s, d)) in ends.iter().enumerate() {
        if comp[s] != comp[d] {
            incoming[comp[d]].push(i);
        }
    }
    let edges = g.edges();
    for c in (0..ncomp).rev() {
        for &i in &incoming[c] {
            let (s, _) = ends[i];
            arrival[c] = arrival[c].max(arrival[comp[s]] + lat(&edges[i]));
        }
    }
    let mut out = BTreeMap::new();
    for (i, &(s, d)) in ends.iter().enumerate() {
        let extra = if comp[s] != comp[d] {
            arrival[comp[d]] - (arrival[comp[s]] + lat(&edges[i]))
        } else {
            0
        };
        out.insert(edges[i].id.clone(), extra);
    }
    Ok(out)
}

/// Register insertion, deadlock check and balancing over a floorplanned design.
pub fn pipeline(
    g: &TaskGraph,
    slots: &SlotAssignment,
    links: &[NetLink],
    cluster: &ClusterSpec,
    opts: &PipelineOptions,
) -> Result<PipelinedDesign> {
    if !(opts.frequency_hz > 0.0) {
        return Err(Error::Parameter(format!("frequency {} Hz", opts.frequency_hz)));
    }
    let edge_latency = insert_crossing_registers(slots, g, opts.stages_per_crossing)?;
    check_deadlock_risk(g, &edge_latency)?;
    let mut link_latency = BTreeMap::new();
    for l in links {
        let cycles = (link_latency_ns(l, cluster) * 1e-9 * opts.frequency_hz).ceil() as u64;
        link_latency.insert(net_edge_id(&l.edge), cycles);
    }
    let total: BTreeMap<String, u64> = edge_latency
        .iter()
        .map(|(e, &r)| (e.clone(), r + link_latency.get(e).copied().unwrap_or(0)))
        .collect();
    let balancing_fifos = balance_reconvergent(g, &total)?;
    Ok(PipelinedDesign {
        graph: g.clone(),
        slots: slots.clone(),
        edge_latency,
        link_latency,
        balancing_fifos,
        links: links.to_vec(),
        hbm: BTreeMap::new(),
        stages_per_crossing: opts.stages_per_crossing,
        frequency_hz: opts.frequency_hz,
    })
}

/// Vertex indices of every cycle-free component, in topological order.
pub fn topo_components(g: &TaskGraph) -> Vec<BTreeSet<usize>> {
    let comp = scc(g);
    let ncomp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = vec![BTreeSet::new(); ncomp];
    for (v, &c) in comp.iter().enumerate() {
        out[ncomp - 1 - c].insert(v);
    }
    out
}
