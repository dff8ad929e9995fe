//! Parameterized benchmark graphs: a stencil chain, PageRank, KNN and a
//! systolic-array CNN. Area and volume constants are calibrated so the
//! generated graphs reproduce published utilization and transfer figures.

use crate::cluster::U55C_CAPACITY;
use crate::error::{Error, Result};
use crate::graph::{FifoEdge, HbmPort, PortDir, TaskGraph, TaskVertex, VertexKind, HBM_PORT_WIDTHS};
use crate::resource::ResourceVec;


fn vertex(id: String, area: ResourceVec, work: u64, kind: VertexKind, hbm_ports: Vec<HbmPort>) -> TaskVertex {
    TaskVertex {
        id,
        area,
        work,
        kind,
        hbm_ports,
    }
}

fn edge(src: &str, dst: &str, width: u32, tokens: u64) -> FifoEdge {
    FifoEdge {
        id: format!("{src}->{dst}"),
        src: src.to_string(),
        dst: dst.to_string(),
        width,
        depth: crate::graph::DEFAULT_FIFO_DEPTH,
        tokens,
    }
}

fn port(dir: PortDir, width: u32, volume: u64) -> HbmPort {
    HbmPort { dir, width, volume }
}

fn check_width(width: u32) -> Result<()> {
    if HBM_PORT_WIDTHS.contains(&width) {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "HBM access width {width} not in {HBM_PORT_WIDTHS:?}"
        )))
    }
}

// ---------------------------------------------------------------- stencil

/// Grid side of the stencil input (single-precision cells).
pub const STENCIL_GRID: u64 = 4096;
/// Bytes of the stencil input image.
pub const STENCIL_IMAGE_BYTES: u64 = STENCIL_GRID * STENCIL_GRID * 4;
/// Bytes crossing one inter-stage FIFO at 64 iterations. Volume grows
/// linearly with the iteration count.
pub const STENCIL_VOLUME_64_BYTES: u64 = 144_215_800;
/// Operations per byte of external memory traffic at 64 iterations.
pub const STENCIL_OPS_PER_BYTE_64: u64 = 208;
/// Stencil operations one PE retires per cycle.
pub const STENCIL_OPS_PER_CYCLE: u64 = 128;
pub const STENCIL_ITERATIONS: [u32; 4] = [64, 128, 256, 512];

const STENCIL_PE_AREA: ResourceVec = ResourceVec::new(32_095, 45_850, 36, 125, 0);
const STENCIL_IO_AREA: ResourceVec = ResourceVec::new(8_000, 12_000, 20, 0, 0);

/// Bytes crossing one inter-stage FIFO for `iterations`.
pub fn stencil_stream_bytes(iterations: u32) -> u64 {
    STENCIL_VOLUME_64_BYTES * iterations as u64 / 64
}

/// Total stencil operations: ops/byte scales linearly with iterations and
/// applies to the load plus store traffic.
pub fn stencil_total_ops(iterations: u32) -> u64 {
    STENCIL_OPS_PER_BYTE_64 * iterations as u64 / 64 * 2 * STENCIL_IMAGE_BYTES
}

/// Linear chain `load -> pe_000 -> ... -> store`. Iterations are spread
/// evenly over the PEs.
pub fn gen_stencil(iterations: u32, pes: usize, hbm_width: u32) -> Result<TaskGraph> {
    check_width(hbm_width)?;
    if pes == 0 {
        return Err(Error::Parameter("stencil needs at least one PE".into()));
    }
    if iterations == 0 {
        return Err(Error::Parameter("stencil needs at least one iteration".into()));
    }
    let tokens = stencil_stream_bytes(iterations) / (hbm_width as u64 / 8);
    let io_tokens = STENCIL_IMAGE_BYTES / (hbm_width as u64 / 8);
    let total_cycles = stencil_total_ops(iterations) / STENCIL_OPS_PER_CYCLE;
    let mut vs = vec![
        vertex(
            "load".into(),
            STENCIL_IO_AREA,
            io_tokens,
            VertexKind::Source,
            vec![port(PortDir::Read, hbm_width, STENCIL_IMAGE_BYTES)],
        ),
        vertex(
            "store".into(),
            STENCIL_IO_AREA,
            io_tokens,
            VertexKind::Sink,
            vec![port(PortDir::Write, hbm_width, STENCIL_IMAGE_BYTES)],
        ),
    ];
    let names: Vec<String> = (0..pes).map(|i| format!("pe_{i:03}")).collect();
    for (i, n) in names.iter().enumerate() {
        let share = total_cycles / pes as u64 + u64::from((i as u64) < total_cycles % pes as u64);
        vs.push(vertex(n.clone(), STENCIL_PE_AREA, share, VertexKind::Compute, vec![]));
    }
    let mut es = vec![edge("load", &names[0], hbm_width, io_tokens)];
    for w in names.windows(2) {
        es.push(edge(&w[0], &w[1], hbm_width, tokens));
    }
    es.push(edge(&names[pes - 1], "store", hbm_width, io_tokens));
    TaskGraph::from_parts(format!("stencil_i{iterations}_p{pes}_w{hbm_width}"), vs, es)
}

// --------------------------------------------------------------- pagerank

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: &'static str,
    pub nodes: u64,
    pub edges: u64,
}

pub const DATASETS: [Dataset; 5] = [
    Dataset { name: "web-BerkStan", nodes: 685_230, edges: 7_600_595 },
    Dataset { name: "soc-Slashdot0811", nodes: 77_360, edges: 905_468 },
    Dataset { name: "web-Google", nodes: 875_713, edges: 5_105_039 },
    Dataset { name: "cit-Patents", nodes: 3_774_768, edges: 16_518_948 },
    Dataset { name: "web-NotreDame", nodes: 325_729, edges: 1_497_134 },
];

pub fn dataset(name: &str) -> Result<&'static Dataset> {
    DATASETS
        .iter()
        .find(|d| d.name == name)
        .ok_or_else(|| Error::Parameter(format!("unknown dataset `{name}`")))
}

/// Bytes per edge record (source, destination) a PE reads from HBM.
pub const PAGERANK_EDGE_BYTES: u64 = 8;
/// Bytes per vertex rank the router sends out.
pub const PAGERANK_RANK_BYTES: u64 = 4;
/// Bytes per accumulated update (vertex, contribution) a PE returns.
pub const PAGERANK_UPDATE_BYTES: u64 = 8;
/// Vertex ranks one PE keeps on chip; beyond this its updates spill to HBM.
pub const PAGERANK_PE_ONCHIP_NODES: u64 = 262_144;
/// HBM burst a spilled update reads and writes back.
pub const PAGERANK_BURST_BYTES: u64 = 64;
pub const PAGERANK_HBM_PORTS_PER_PE: usize = 6;
pub const PAGERANK_FEEDBACK_DEPTH: u32 = 16;
const PAGERANK_WIDTH: u32 = 512;
/// Edges one PE processes per cycle.
pub const PAGERANK_EDGES_PER_CYCLE: u64 = 4;
/// Vertices the router and accumulator handle per cycle.
pub const PAGERANK_VERTICES_PER_CYCLE: u64 = 16;

const PAGERANK_PE_AREA: ResourceVec = ResourceVec::new(60_000, 90_000, 100, 96, 48);
const PAGERANK_ROUTER_AREA: ResourceVec = ResourceVec::new(34_400, 51_600, 60, 0, 0);
const PAGERANK_ACC_AREA: ResourceVec = ResourceVec::new(34_400, 51_600, 60, 32, 16);

#[derive(Debug, Clone, PartialEq)]
pub struct PagerankParams {
    pub pes: usize,
    pub dataset: Dataset,
    /// Include the accumulator-to-router feedback edge.
    pub feedback: bool,
}

impl PagerankParams {
    pub fn new(pes: usize) -> Self {
        PagerankParams {
            pes,
            dataset: DATASETS[3].clone(),
            feedback: true,
        }
    }
}

/// Bytes the router sends to all PEs and the PEs return to the accumulator.
/// Independent of the PE count.
pub fn pagerank_volumes(ds: &Dataset) -> (u64, u64) {
    (ds.nodes * PAGERANK_RANK_BYTES, ds.nodes * PAGERANK_UPDATE_BYTES)
}

pub fn gen_pagerank(pes: usize) -> Result<TaskGraph> {
    gen_pagerank_with(&PagerankParams::new(pes))
}

fn split_ports(dir: PortDir, count: usize, total: u64) -> impl Iterator<Item = HbmPort> {
    let n = count as u64;
    (0..n).map(move |k| port(dir, PAGERANK_WIDTH, total / n + u64::from(k < total % n)))
}

/// Router -> PEs -> accumulator, with a feedback edge closing a cycle
/// through every PE. Each PE reads its share of the edge list from its own
/// HBM channels; a PE whose vertex slice exceeds the on-chip buffer also
/// reads and writes back one burst per edge.
pub fn gen_pagerank_with(p: &PagerankParams) -> Result<TaskGraph> {
    if p.pes == 0 {
        return Err(Error::Parameter("pagerank needs at least one PE".into()));
    }
    let n = p.pes as u64;
    let tok_bytes = PAGERANK_WIDTH as u64 / 8;
    let (rank_bytes, update_bytes) = pagerank_volumes(&p.dataset);
    let spill = p.dataset.nodes.div_ceil(n) > PAGERANK_PE_ONCHIP_NODES;
    let vertex_cycles = p.dataset.nodes.div_ceil(PAGERANK_VERTICES_PER_CYCLE);
    let mut vs = vec![
        vertex(
            "router".into(),
            PAGERANK_ROUTER_AREA,
            vertex_cycles,
            VertexKind::Source,
            split_ports(PortDir::Read, 2, rank_bytes).collect(),
        ),
        vertex(
            "acc".into(),
            PAGERANK_ACC_AREA,
            vertex_cycles,
            VertexKind::Sink,
            vec![port(PortDir::Write, PAGERANK_WIDTH, rank_bytes)],
        ),
    ];
    let (rank_tokens, update_tokens) = (rank_bytes.div_ceil(tok_bytes), update_bytes.div_ceil(tok_bytes));
    let mut es = Vec::new();
    let half = PAGERANK_HBM_PORTS_PER_PE / 2;
    for i in 0..p.pes {
        let id = format!("pe_{i:02}");
        let share = |total: u64| total / n + u64::from((i as u64) < total % n);
        let pe_edges = share(p.dataset.edges);
        let burst = if spill { pe_edges * PAGERANK_BURST_BYTES } else { 0 };
        let ports = split_ports(PortDir::Read, half, pe_edges * PAGERANK_EDGE_BYTES + burst)
            .chain(split_ports(PortDir::Write, PAGERANK_HBM_PORTS_PER_PE - half, burst))
            .collect();
        vs.push(vertex(
            id.clone(),
            PAGERANK_PE_AREA,
            pe_edges.div_ceil(PAGERANK_EDGES_PER_CYCLE),
            VertexKind::Compute,
            ports,
        ));
        es.push(edge("router", &id, PAGERANK_WIDTH, share(rank_tokens)));
        es.push(edge(&id, "acc", PAGERANK_WIDTH, share(update_tokens)));
    }
    if p.feedback {
        let mut fb = edge("acc", "router", 64, 64);
        fb.depth = PAGERANK_FEEDBACK_DEPTH;
        es.push(fb);
    }
    let suffix = if p.feedback { "" } else { "_acyclic" };
    TaskGraph::from_parts(format!("pagerank_p{}{suffix}", p.pes), vs, es)
}

// -------------------------------------------------------------------- knn

#[derive(Debug, Clone, PartialEq)]
pub struct KnnParams {
    pub n: u64,
    pub d: u64,
    pub k: u64,
    pub dist_modules: usize,
    /// HBM port width of the distance modules.
    pub port_width: u32,
    /// On-chip buffer per distance module, in KiB.
    pub buffer_kb: u64,
}

impl KnnParams {
    pub fn new(n: u64, d: u64, k: u64, dist_modules: usize) -> Self {
        KnnParams {
            n,
            d,
            k,
            dist_modules,
            port_width: 256,
            buffer_kb: 32,
        }
    }
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams::new(4_000_000, 2, 10, 18)
    }
}

pub const KNN_FAN_IN: usize = 3;
/// Bits of one (index, distance) record passed between sorters.
const KNN_RECORD_BITS: u32 = 64;
const KNN_DIST_WIDTH: u32 = 512;
/// Distance lanes of a distance module per cycle.
const KNN_DIST_LANES: u64 = 16;

const KNN_YELLOW_AREA: ResourceVec = ResourceVec::new(9_170, 13_750, 4, 0, 0);
const KNN_GREEN_AREA: ResourceVec = ResourceVec::new(5_730, 9_170, 4, 0, 0);

/// Distance-module area as a function of port width and buffer size.
pub fn knn_blue_area(port_width: u32, buffer_kb: u64) -> ResourceVec {
    ResourceVec::new(
        8_000 + 60 * port_width as u64 + 120 * buffer_kb,
        12_000 + 90 * port_width as u64 + 100 * buffer_kb,
        4 + buffer_kb.div_ceil(4),
        16,
        0,
    )
}

/// Sizes of the sorter levels above `blues` distance modules.
pub fn knn_levels(blues: usize) -> Vec<usize> {
    let mut levels = Vec::new();
    let mut cur = blues;
    loop {
        let next = cur.div_ceil(KNN_FAN_IN);
        levels.push(next);
        cur = next;
        if cur <= KNN_FAN_IN {
            break;
        }
    }
    levels
}

pub fn gen_knn(n: u64, d: u64, k: u64, dist_modules: usize) -> Result<TaskGraph> {
    gen_knn_with(&KnnParams::new(n, d, k, dist_modules))
}

/// Distance modules feed a fan-in-3 tree of top-K sorters ending in one accumulator.
pub fn gen_knn_with(p: &KnnParams) -> Result<TaskGraph> {
    if p.k >= p.n {
        return Err(Error::Parameter(format!("k = {} must be below n = {}", p.k, p.n)));
    }
    if p.dist_modules == 0 || p.k == 0 || p.d == 0 {
        return Err(Error::Parameter("knn sizes must be positive".into()));
    }
    check_width(p.port_width)?;
    let b = p.dist_modules as u64;
    let blue_area = knn_blue_area(p.port_width, p.buffer_kb);
    let mut vs = Vec::new();
    let mut es = Vec::new();
    let blue_ids: Vec<String> = (0..p.dist_modules).map(|i| format!("blue_{i:03}")).collect();
    for (i, id) in blue_ids.iter().enumerate() {
        let pts = p.n / b + u64::from((i as u64) < p.n % b);
        let bytes = pts * p.d * 4;
        vs.push(vertex(
            id.clone(),
            blue_area,
            (pts * p.d).div_ceil(KNN_DIST_LANES),
            VertexKind::Source,
            vec![port(PortDir::Read, p.port_width, bytes)],
        ));
    }
    // Points each node of the current level summarizes, used for sorter work.
    let mut level_ids = blue_ids;
    let mut level_points: Vec<u64> = (0..p.dist_modules as u64)
        .map(|i| p.n / b + u64::from(i < p.n % b))
        .collect();
    let levels = knn_levels(p.dist_modules);
    for (li, &size) in levels.iter().enumerate() {
        let mut ids = Vec::with_capacity(size);
        let mut pts = Vec::with_capacity(size);
        for j in 0..size {
            let id = format!("yellow_{}_{j:02}", li + 1);
            let kids = (j * KNN_FAN_IN)..((j + 1) * KNN_FAN_IN).min(level_ids.len());
            let mut covered = 0;
            for c in kids {
                covered += level_points[c];
                let tokens = if li == 0 {
                    // Raw distances, 32 bits each.
                    (level_points[c] * 32).div_ceil(KNN_DIST_WIDTH as u64)
                } else {
                    p.k
                };
                let width = if li == 0 { KNN_DIST_WIDTH } else { KNN_RECORD_BITS };
                es.push(edge(&level_ids[c], &id, width, tokens));
            }
            let work = if li == 0 { covered } else { p.k * KNN_FAN_IN as u64 };
            vs.push(vertex(id.clone(), KNN_YELLOW_AREA, work, VertexKind::Compute, vec![]));
            ids.push(id);
            pts.push(covered);
        }
        level_ids = ids;
        level_points = pts;
    }
    vs.push(vertex(
        "green".into(),
        KNN_GREEN_AREA,
        p.k * level_ids.len() as u64,
        VertexKind::Sink,
        vec![port(PortDir::Write, 64, p.k * 8)],
    ));
    for id in &level_ids {
        es.push(edge(id, "green", KNN_RECORD_BITS, p.k));
    }
    TaskGraph::from_parts(
        format!("knn_n{}_d{}_k{}_b{}", p.n, p.d, p.k, p.dist_modules),
        vs,
        es,
    )
}

// -------------------------------------------------------------------- cnn

pub const CNN_WIDTH: u32 = 256;
/// Tokens of one B-operand stream between vertically adjacent PEs.
pub const CNN_B_TOKENS: u64 = 16_700;
/// Tokens of one A-operand stream into a PE.
pub const CNN_A_TOKENS: u64 = 16_700;
/// Output tokens each PE hands to its drainer.
pub const CNN_OUT_TOKENS_PER_PE: u64 = 5;
/// Floating-point operations of the whole layer.
pub const CNN_TOTAL_FLOPS: u64 = 54_500_000;
/// PEs per A-feeder segment along a row.
pub const CNN_SEGMENT: usize = 3;
/// PE rows served by one drainer.
pub const CNN_DRAIN_ROWS: usize = 2;
const CNN_FLOPS_PER_CYCLE: u64 = 16;

const CNN_PE_AREA: ResourceVec = ResourceVec::new(3_133, 3_593, 2, 39, 0);
const CNN_FEEDER_AREA: ResourceVec = ResourceVec::new(1_200, 1_800, 2, 0, 0);
const CNN_DRAINER_AREA: ResourceVec = ResourceVec::new(900, 1_400, 1, 0, 0);
const CNN_STORE_AREA: ResourceVec = ResourceVec::new(2_000, 3_000, 4, 0, 0);

/// Published utilization of the 13-row grids, in percent of one device:
/// (cols, [lut, ff, bram, dsp, uram]).
pub const CNN_UTILIZATION: [(usize, [f64; 5]); 5] = [
    (4, [20.4, 12.1, 14.2, 25.2, 0.0]),
    (8, [38.3, 23.5, 23.7, 49.0, 0.0]),
    (12, [56.1, 34.3, 32.7, 80.1, 0.0]),
    (16, [74.0, 45.7, 42.3, 97.6, 0.0]),
    (20, [91.9, 57.0, 52.1, 123.7, 0.0]),
];

/// Number of vertices `gen_systolic(rows, cols)` produces.
pub fn cnn_vertex_count(rows: usize, cols: usize) -> usize {
    rows * cols + rows * cols.div_ceil(CNN_SEGMENT) + cols * rows.div_ceil(CNN_DRAIN_ROWS) + 2
}

fn cnn_non_global_area(rows: usize, cols: usize) -> ResourceVec {
    CNN_PE_AREA.scale((rows * cols) as u64)
        + CNN_FEEDER_AREA.scale((rows * cols.div_ceil(CNN_SEGMENT)) as u64)
        + CNN_DRAINER_AREA.scale((cols * rows.div_ceil(CNN_DRAIN_ROWS)) as u64)
        + CNN_STORE_AREA
}

fn cnn_target(cols_idx: usize) -> ResourceVec {
    let pct = CNN_UTILIZATION[cols_idx].1;
    let cap = U55C_CAPACITY.as_array();
    let v: Vec<u64> = (0..5).map(|r| (pct[r] / 100.0 * cap[r] as f64).round() as u64).collect();
    ResourceVec::new(v[0], v[1], v[2], v[3], v[4])
}

/// Area of the load/control vertex: the part of the measured utilization
/// the per-module constants do not explain. Interpolated between the
/// calibrated grids and held constant outside them.
fn cnn_residual(cols: usize) -> ResourceVec {
    let resid = |i: usize| {
        let c = CNN_UTILIZATION[i].0;
        cnn_target(i).saturating_sub(&cnn_non_global_area(13, c))
    };
    let n = CNN_UTILIZATION.len();
    if cols <= CNN_UTILIZATION[0].0 {
        return resid(0);
    }
    if cols >= CNN_UTILIZATION[n - 1].0 {
        return resid(n - 1);
    }
    let i = CNN_UTILIZATION.iter().position(|(c, _)| *c >= cols).unwrap();
    let (c0, c1) = (CNN_UTILIZATION[i - 1].0 as u64, CNN_UTILIZATION[i].0 as u64);
    let (a, b) = (resid(i - 1), resid(i));
    let t = cols as u64 - c0;
    a.map(|r, x| (x * (c1 - c0 - t) + b.get(r) * t) / (c1 - c0))
}

/// First PE row below the canonical cut.
pub fn cnn_cut_row(rows: usize) -> usize {
    (CNN_DRAIN_ROWS * (rows / 4)).clamp(1, rows.saturating_sub(1).max(1))
}

pub fn pe_id(r: usize, c: usize) -> String {
    format!("r{r:02}_c{c:02}")
}

fn feeder_id(r: usize, s: usize) -> String {
    format!("r{r:02}_a{s:02}")
}

/// Drainer `k` of column `c` sorts after the last PE row it serves.
fn drainer_id(rows: usize, k: usize, c: usize) -> String {
    let last = ((k + 1) * CNN_DRAIN_ROWS).min(rows) - 1;
    format!("r{last:02}_z{c:02}")
}

/// Row-major PE grid. A operands enter each row through a chain of
/// feeders, one per three-PE segment, and move east inside a segment;
/// B operands enter at row 0 and move south; results drain down a chain of
/// per-column drainers into the store vertex.
pub fn gen_systolic(rows: usize, cols: usize) -> Result<TaskGraph> {
    if rows == 0 || cols == 0 {
        return Err(Error::Parameter("grid dimensions must be positive".into()));
    }
    let segs = cols.div_ceil(CNN_SEGMENT);
    let drains = rows.div_ceil(CNN_DRAIN_ROWS);
    let pe_cycles = (CNN_TOTAL_FLOPS / (rows * cols) as u64).div_ceil(CNN_FLOPS_PER_CYCLE);
    let tok = CNN_WIDTH as u64 / 8;
    let a_bytes = CNN_A_TOKENS * tok * rows as u64 * segs as u64;
    let b_bytes = CNN_B_TOKENS * tok * cols as u64;
    let out_tokens = CNN_OUT_TOKENS_PER_PE * (rows * cols) as u64;
    let mut vs = vec![
        vertex(
            "g_load".into(),
            cnn_residual(cols),
            CNN_A_TOKENS,
            VertexKind::Source,
            vec![
                port(PortDir::Read, CNN_WIDTH, a_bytes),
                port(PortDir::Read, CNN_WIDTH, b_bytes),
            ],
        ),
        vertex(
            "g_store".into(),
            CNN_STORE_AREA,
            out_tokens,
            VertexKind::Sink,
            vec![port(PortDir::Write, CNN_WIDTH, out_tokens * tok)],
        ),
    ];
    let mut es = Vec::new();
    for r in 0..rows {
        for s in 0..segs {
            vs.push(vertex(feeder_id(r, s), CNN_FEEDER_AREA, CNN_A_TOKENS, VertexKind::Compute, vec![]));
            let remaining = (segs - s) as u64;
            let src = if s == 0 { "g_load".to_string() } else { feeder_id(r, s - 1) };
            es.push(edge(&src, &feeder_id(r, s), CNN_WIDTH, CNN_A_TOKENS * remaining));
            es.push(edge(&feeder_id(r, s), &pe_id(r, s * CNN_SEGMENT), CNN_WIDTH, CNN_A_TOKENS));
        }
        for c in 0..cols {
            vs.push(vertex(pe_id(r, c), CNN_PE_AREA, pe_cycles, VertexKind::Compute, vec![]));
            if c % CNN_SEGMENT != CNN_SEGMENT - 1 && c + 1 < cols {
                es.push(edge(&pe_id(r, c), &pe_id(r, c + 1), CNN_WIDTH, CNN_A_TOKENS));
            }
            let b_src = if r == 0 { "g_load".to_string() } else { pe_id(r - 1, c) };
            es.push(edge(&b_src, &pe_id(r, c), CNN_WIDTH, CNN_B_TOKENS));
            es.push(edge(&pe_id(r, c), &drainer_id(rows, r / CNN_DRAIN_ROWS, c), CNN_WIDTH, CNN_OUT_TOKENS_PER_PE));
        }
    }
    for c in 0..cols {
        for k in 0..drains {
            let covered = ((k + 1) * CNN_DRAIN_ROWS).min(rows) as u64;
            vs.push(vertex(
                drainer_id(rows, k, c),
                CNN_DRAINER_AREA,
                covered * CNN_OUT_TOKENS_PER_PE,
                VertexKind::Compute,
                vec![],
            ));
            let dst = if k + 1 == drains { "g_store".to_string() } else { drainer_id(rows, k + 1, c) };
            es.push(edge(&drainer_id(rows, k, c), &dst, CNN_WIDTH, covered * CNN_OUT_TOKENS_PER_PE));
        }
    }
    TaskGraph::from_parts(format!("cnn_{rows}x{cols}"), vs, es)
}
