#![allow(dead_code)]

use std::collections::BTreeMap;

use dfsplit_core::cluster::{ClusterSpec, TopologyKind};
use dfsplit_core::floorplan::{SlotAssignment, SlotRef};
use dfsplit_core::graph::{FifoEdge, HbmPort, PortDir, TaskGraph, TaskVertex, VertexKind};
use dfsplit_core::pipeliner::{pipeline, PipelineOptions, PipelinedDesign};
use dfsplit_core::resource::ResourceVec;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const WIDTHS: [u32; 5] = [32, 64, 128, 256, 512];

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn vertex(id: &str, area: ResourceVec, kind: VertexKind) -> TaskVertex {
    TaskVertex {
        id: id.to_string(),
        area,
        work: 100,
        kind,
        hbm_ports: vec![],
    }
}

pub fn lut(id: &str, lut: u64) -> TaskVertex {
    vertex(id, ResourceVec::new(lut, 0, 0, 0, 0), VertexKind::Compute)
}

pub fn edge(src: &str, dst: &str, width: u32) -> FifoEdge {
    FifoEdge {
        id: format!("{src}->{dst}"),
        src: src.to_string(),
        dst: dst.to_string(),
        width,
        depth: 16,
        tokens: 64,
    }
}

pub fn with_ports(mut v: TaskVertex, volumes: &[u64]) -> TaskVertex {
    v.hbm_ports = volumes
        .iter()
        .map(|&volume| HbmPort {
            dir: PortDir::Read,
            width: 256,
            volume,
        })
        .collect();
    v
}

pub fn all_on(g: &TaskGraph, device: usize) -> BTreeMap<String, usize> {
    g.vertices().iter().map(|v| (v.id.clone(), device)).collect()
}

/// Random DAG over `n` vertices named `v0..`; edges go from lower to higher index.
pub fn random_dag(r: &mut StdRng, n: usize, density: f64, luts: (u64, u64)) -> TaskGraph {
    let ids: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let vertices = ids.iter().map(|id| lut(id, r.gen_range(luts.0..=luts.1))).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.gen_bool(density) {
                edges.push(edge(&ids[i], &ids[j], WIDTHS[r.gen_range(0..WIDTHS.len())]));
            }
        }
    }
    TaskGraph::from_parts("random", vertices, edges).unwrap()
}

/// Slot assignment from explicit `(vertex, device, row, col)` rows.
pub fn slots(rows: &[(&str, usize, usize, usize)]) -> SlotAssignment {
    SlotAssignment {
        mapping: rows
            .iter()
            .map(|&(id, device, row, col)| (id.to_string(), SlotRef { device, row, col }))
            .collect(),
        per_slot_area: BTreeMap::new(),
        objective: BTreeMap::new(),
        certified: true,
        level_bounds: BTreeMap::new(),
    }
}

/// Every vertex in slot (0, 0) of device 0.
pub fn one_slot(g: &TaskGraph) -> SlotAssignment {
    let ids: Vec<&str> = g.vertices().iter().map(|v| v.id.as_str()).collect();
    slots(&ids.iter().map(|&id| (id, 0, 0, 0)).collect::<Vec<_>>())
}

pub fn single_u55c() -> ClusterSpec {
    ClusterSpec::u55c(TopologyKind::Chain, 1).unwrap()
}

pub fn pipelined(g: &TaskGraph, s: &SlotAssignment, cluster: &ClusterSpec) -> PipelinedDesign {
    pipeline(g, s, &[], cluster, &PipelineOptions::default()).unwrap()
}

pub fn chain_graph(ids: &[&str], work: u64, tokens: u64) -> TaskGraph {
    let vs = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let kind = if i == 0 {
                VertexKind::Source
            } else if i + 1 == ids.len() {
                VertexKind::Sink
            } else {
                VertexKind::Compute
            };
            let mut v = vertex(id, ResourceVec::ZERO, kind);
            v.work = work;
            v
        })
        .collect();
    let es = ids
        .windows(2)
        .map(|w| {
            let mut e = edge(w[0], w[1], 64);
            e.tokens = tokens;
            e
        })
        .collect();
    TaskGraph::from_parts("chain", vs, es).unwrap()
}

/// `s -> {a, b} -> t` with the given tokens on every edge.
pub fn diamond(tokens: u64) -> TaskGraph {
    let mut vs = vec![
        vertex("s", ResourceVec::ZERO, VertexKind::Source),
        lut("a", 0),
        lut("b", 0),
        vertex("t", ResourceVec::ZERO, VertexKind::Sink),
    ];
    vs[1].work = 300;
    let es = [("s", "a"), ("s", "b"), ("a", "t"), ("b", "t")]
        .iter()
        .map(|&(x, y)| {
            let mut e = edge(x, y, 32);
            e.tokens = tokens;
            e.depth = 2;
            e
        })
        .collect();
    TaskGraph::from_parts("diamond", vs, es).unwrap()
}

/// Small devices with 1000 LUT and 100 DSP each.
pub fn small_cluster(kind: TopologyKind, count: usize) -> ClusterSpec {
    let mut c = ClusterSpec::u55c(kind, count).unwrap();
    for d in &mut c.devices {
        d.capacity = ResourceVec::new(1000, 0, 0, 100, 0);
    }
    c
}

/// Share of all `k^n` mappings that respect every device limit.
pub fn feasible_fraction(g: &TaskGraph, c: &ClusterSpec) -> f64 {
    let (n, k) = (g.vertex_count(), c.device_count());
    let limits: Vec<ResourceVec> = c.devices.iter().map(|d| d.limit()).collect();
    let total = k.pow(n as u32);
    let mut ok = 0;
    for code in 0..total {
        let mut used = vec![ResourceVec::ZERO; k];
        let mut x = code;
        for v in g.vertices() {
            used[x % k] += v.area;
            x /= k;
        }
        ok += used.iter().zip(&limits).all(|(u, l)| u.fits_within(l)) as usize;
    }
    ok as f64 / total as f64
}

/// Random partitioning instance: up to `max_n` vertices on 2-4 small
/// devices wired as a chain, ring or star, with 30-90% of mappings feasible.
pub fn random_instance(r: &mut StdRng, max_n: usize) -> (TaskGraph, ClusterSpec) {
    let kinds = [TopologyKind::Chain, TopologyKind::Ring, TopologyKind::Star];
    loop {
        let n = r.gen_range(2..=max_n);
        let k = r.gen_range(2..=4);
        let c = small_cluster(kinds[r.gen_range(0..3)], k);
        // Total demand around the combined limit keeps a fair share feasible.
        let fill = r.gen_range(0.3..0.9) * k as f64;
        let density = r.gen_range(0.2..0.6);
        let mut g = random_dag(r, n, density, (1, 1));
        let vs: Vec<TaskVertex> = g
            .vertices()
            .iter()
            .map(|v| {
                let mut v = v.clone();
                let lut = (r.gen_range(0.4..1.6) * fill * 700.0 / n as f64) as u64;
                let dsp = if r.gen_bool(0.3) { r.gen_range(0..50) } else { 0 };
                v.area = ResourceVec::new(lut.min(700), 0, 0, dsp, 0);
                v
            })
            .collect();
        g = TaskGraph::from_parts(g.name.clone(), vs, g.edges().to_vec()).unwrap();
        let f = feasible_fraction(&g, &c);
        if (0.3..=0.9).contains(&f) {
            return (g, c);
        }
    }
}
