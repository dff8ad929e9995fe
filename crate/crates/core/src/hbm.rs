//! Binding of HBM ports to memory channels.
//!
//! Channel `ch` enters the fabric at row `hbm_row`, column band
//! `ch * slot_cols / hbm_channels`. A port's cost is `alpha` times the slot
//! distance to that entry point plus `beta` times the number of other ports
//! sharing its channel.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assign::cost_lt;
use crate::cluster::DeviceSpec;
use crate::error::{Error, Result};
use crate::floorplan::SlotAssignment;
use crate::graph::TaskGraph;

pub const DEFAULT_PORTS_PER_CHANNEL: usize = 1;
/// Largest search space the exhaustive oracle walks.
pub const ORACLE_MAX_STATES: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HbmOptions {
    pub alpha: f64,
    /// Contention weight; `None` uses the mean FIFO width of the graph.
    pub beta: Option<f64>,
    pub ports_per_channel: usize,
}

impl Default for HbmOptions {
    fn default() -> Self {
        HbmOptions {
            alpha: 1.0,
            beta: None,
            ports_per_channel: DEFAULT_PORTS_PER_CHANNEL,
        }
    }
}

/// Channel of every HBM port of the device's vertices, indexed by port position.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HbmBinding {
    pub device: usize,
    pub channels: BTreeMap<String, Vec<usize>>,
}

impl HbmBinding {
    pub fn channel(&self, vertex: &str, port: usize) -> Option<usize> {
        self.channels.get(vertex).and_then(|v| v.get(port)).copied()
    }

    /// Ports bound to each channel.
    pub fn load(&self, hbm_channels: usize) -> Vec<usize> {
        let mut n = vec![0; hbm_channels];
        for &ch in self.channels.values().flatten() {
            n[ch] += 1;
        }
        n
    }
}

/// One port to bind, with its slot.
#[derive(Debug, Clone, PartialEq)]
struct PortSlot {
    vertex: String,
    index: usize,
    volume: u64,
    row: usize,
    col: usize,
}

pub fn channel_column(d: &DeviceSpec, ch: usize) -> usize {
    ch * d.slot_cols / d.hbm_channels.max(1)
}

fn port_distance(d: &DeviceSpec, row: usize, col: usize, ch: usize) -> f64 {
    (row.abs_diff(d.hbm_row) + col.abs_diff(channel_column(d, ch))) as f64
}

fn mean_width(g: &TaskGraph) -> f64 {
    if g.edge_count() == 0 {
        return 0.0;
    }
    g.edges().iter().map(|e| e.width as f64).sum::<f64>() / g.edge_count() as f64
}

fn collect_ports(g: &TaskGraph, s: &SlotAssignment, d: &DeviceSpec) -> Result<Vec<PortSlot>> {
    let mut ports = Vec::new();
    for v in g.vertices() {
        if v.hbm_ports.is_empty() {
            continue;
        }
        let Some(slot) = s.mapping.get(&v.id) else {
            continue;
        };
        if slot.device != d.id {
            continue;
        }
        for (index, p) in v.hbm_ports.iter().enumerate() {
            ports.push(PortSlot {
                vertex: v.id.clone(),
                index,
                volume: p.volume,
                row: slot.row,
                col: slot.col,
            });
        }
    }
    Ok(ports)
}

fn check_capacity(d: &DeviceSpec, ports: usize, opts: &HbmOptions) -> Result<()> {
    let capacity = d.hbm_channels * opts.ports_per_channel;
    if ports > capacity {
        return Err(Error::BindingCapacity {
            device: d.id,
            ports,
            capacity,
        });
    }
    Ok(())
}

fn total_cost(d: &DeviceSpec, ports: &[PortSlot], chan: &[usize], alpha: f64, beta: f64) -> f64 {
    let mut load = vec![0u64; d.hbm_channels];
    let mut dist = 0.0;
    for (p, &ch) in ports.iter().zip(chan) {
        dist += port_distance(d, p.row, p.col, ch);
        load[ch] += 1;
    }
    alpha * dist + beta * load.iter().map(|&n| (n * n.saturating_sub(1)) as f64).sum::<f64>()
}

fn to_binding(d: &DeviceSpec, ports: &[PortSlot], chan: &[usize]) -> HbmBinding {
    let mut channels: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (p, &ch) in ports.iter().zip(chan) {
        let v = channels.entry(p.vertex.clone()).or_default();
        if v.len() <= p.index {
            v.resize(p.index + 1, 0);
        }
        v[p.index] = ch;
    }
    HbmBinding {
        device: d.id,
        channels,
    }
}

/// Bind the HBM ports of the vertices `s` places on device `d`.
pub fn bind_hbm_channels(
    g: &TaskGraph,
    s: &SlotAssignment,
    d: &DeviceSpec,
    opts: &HbmOptions,
) -> Result<HbmBinding> {
    let mut ports = collect_ports(g, s, d)?;
    check_capacity(d, ports.len(), opts)?;
    let alpha = opts.alpha;
    let beta = opts.beta.unwrap_or_else(|| mean_width(g));
    let ppc = opts.ports_per_channel;
    ports.sort_by(|a, b| {
        b.volume
            .cmp(&a.volume)
            .then_with(|| a.vertex.cmp(&b.vertex))
            .then(a.index.cmp(&b.index))
    });
    let mut load = vec![0usize; d.hbm_channels];
    let mut chan = Vec::with_capacity(ports.len());
    for p in &ports {
        let mut best: Option<(f64, usize)> = None;
        for ch in 0..d.hbm_channels {
            if load[ch] >= ppc {
                continue;
            }
            let c = alpha * port_distance(d, p.row, p.col, ch) + beta * 2.0 * load[ch] as f64;
            if best.is_none_or(|(bc, _)| cost_lt(c, bc)) {
                best = Some((c, ch));
            }
        }
        let (_, ch) = best.expect("capacity checked");
        load[ch] += 1;
        chan.push(ch);
    }
    while let Some(moves) = improving_moves(d, &ports, &chan, alpha, beta, ppc) {
        for (i, ch) in moves {
            chan[i] = ch;
        }
    }
    Ok(to_binding(d, &ports, &chan))
}

/// A cost-reducing exchange: a cycle of moves between channels, or a chain
/// that ends on a channel with room. Swaps and single moves are the short
/// cases. With none left the binding is optimal.
fn improving_moves(
    d: &DeviceSpec,
    ports: &[PortSlot],
    chan: &[usize],
    alpha: f64,
    beta: f64,
    ppc: usize,
) -> Option<Vec<(usize, usize)>> {
    let k = d.hbm_channels;
    let mut load = vec![0usize; k];
    chan.iter().for_each(|&c| load[c] += 1);
    // Cheapest port to move from channel a to channel b.
    let mut arc = vec![vec![None::<(f64, usize)>; k]; k];
    for (i, p) in ports.iter().enumerate() {
        let a = chan[i];
        let here = port_distance(d, p.row, p.col, a);
        for b in (0..k).filter(|&b| b != a) {
            let c = alpha * (port_distance(d, p.row, p.col, b) - here);
            if arc[a][b].is_none_or(|(bc, _)| cost_lt(c, bc)) {
                arc[a][b] = Some((c, i));
            }
        }
    }
    let to_moves = |path: &[usize]| -> Vec<(usize, usize)> {
        path.windows(2).map(|w| (arc[w[0]][w[1]].unwrap().1, w[1])).collect()
    };
    // Negative cycle, Bellman-Ford from a virtual root.
    let mut dist = vec![0.0f64; k];
    let mut pred = vec![usize::MAX; k];
    let mut last = None;
    for _ in 0..=k {
        last = None;
        for a in 0..k {
            for b in 0..k {
                if let Some((c, _)) = arc[a][b] {
                    if dist[a] + c < dist[b] - 1e-9 {
                        dist[b] = dist[a] + c;
                        pred[b] = a;
                        last = Some(b);
                    }
                }
            }
        }
        if last.is_none() {
            break;
        }
    }
    if let Some(mut x) = last {
        for _ in 0..k {
            x = pred[x];
        }
        let mut cycle = vec![x];
        let mut y = pred[x];
        while y != x {
            cycle.push(y);
            y = pred[y];
        }
        cycle.push(x);
        cycle.reverse();
        return Some(to_moves(&cycle));
    }
    // No negative cycle: all-pairs shortest paths, then the best chain
    // from a channel shedding a port to a channel with room.
    let inf = f64::INFINITY;
    let mut sp: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| arc[a][b].map_or(inf, |(c, _)| c)).collect())
        .collect();
    let mut next: Vec<Vec<usize>> = (0..k).map(|_| (0..k).collect()).collect();
    for m in 0..k {
        for a in 0..k {
            if sp[a][m] == inf {
                continue;
            }
            for b in 0..k {
                let via = sp[a][m] + sp[m][b];
                if via < sp[a][b] - 1e-9 {
                    sp[a][b] = via;
                    next[a][b] = next[a][m];
                }
            }
        }
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for a in (0..k).filter(|&a| load[a] > 0) {
        for b in (0..k).filter(|&b| b != a && load[b] < ppc && sp[a][b] < inf) {
            let gain = sp[a][b] + beta * 2.0 * (load[b] as f64 - (load[a] - 1) as f64);
            if gain < -1e-9 && best.is_none_or(|(g, _, _)| gain < g - 1e-9) {
                best = Some((gain, a, b));
            }
        }
    }
    let (_, a, b) = best?;
    let mut path = vec![a];
    let mut x = a;
    while x != b {
        x = next[x][b];
        path.push(x);
    }
    Some(to_moves(&path))
}

/// Cost of a binding under `opts`.
pub fn binding_cost(
    g: &TaskGraph,
    s: &SlotAssignment,
    d: &DeviceSpec,
    b: &HbmBinding,
    opts: &HbmOptions,
) -> Result<f64> {
    let ports = collect_ports(g, s, d)?;
    let chan = ports
        .iter()
        .map(|p| {
            b.channel(&p.vertex, p.index).ok_or_else(|| Error::Reference {
                kind: "hbm port",
                id: format!("{}[{}]", p.vertex, p.index),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(&ch) = chan.iter().find(|&&ch| ch >= d.hbm_channels) {
        return Err(Error::Range {
            index: ch,
            count: d.hbm_channels,
        });
    }
    Ok(total_cost(d, &ports, &chan, opts.alpha, opts.beta.unwrap_or_else(|| mean_width(g))))
}

/// Exhaustive minimum-cost binding. Test oracle.
pub fn binding_oracle(
    g: &TaskGraph,
    s: &SlotAssignment,
    d: &DeviceSpec,
    opts: &HbmOptions,
) -> Result<(HbmBinding, f64)> {
    let ports = collect_ports(g, s, d)?;
    check_capacity(d, ports.len(), opts)?;
    let k = d.hbm_channels;
    let states = (k as u64).checked_pow(ports.len() as u32).unwrap_or(u64::MAX);
    if states > ORACLE_MAX_STATES {
        return Err(Error::TooLarge(format!("{k}^{} bindings", ports.len())));
    }
    let beta = opts.beta.unwrap_or_else(|| mean_width(g));
    let mut chan = vec![0usize; ports.len()];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut load = vec![0usize; k];
        chan.iter().for_each(|&c| load[c] += 1);
        if load.iter().all(|&n| n <= opts.ports_per_channel) {
            let c = total_cost(d, &ports, &chan, opts.alpha, beta);
            if best.as_ref().is_none_or(|(bc, _)| cost_lt(c, *bc)) {
                best = Some((c, chan.clone()));
            }
        }
        let mut i = ports.len();
        loop {
            if i == 0 {
                let (c, chan) = best.expect("capacity checked");
                return Ok((to_binding(d, &ports, &chan), c));
            }
            i -= 1;
            chan[i] += 1;
            if chan[i] < k {
                break;
            }
            chan[i] = 0;
        }
    }
}
