//! End-to-end flow: partition, network insertion, floorplan, HBM binding,
//! pipelining and simulation, with the artifacts each stage emits.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use crate::cluster::ClusterSpec;
use crate::comm::{insert_network_vertices, CommOptions, NetDesign};
use crate::error::{Error, Result};
use crate::floorplan::{floorplan_all, FloorplanOptions, SlotAssignment};
use crate::graph::TaskGraph;
use crate::hbm::{bind_hbm_channels, HbmBinding, HbmOptions};
use crate::inter::{formulate, solve_with, InterAssignment, SolverKind};
use crate::pipeliner::{pipeline, PipelineOptions, PipelinedDesign};
use crate::resource::{Resource, ResourceVec};
use crate::sim::{simulate, SimConfig, SimReport};

/// Partition attempts after a placement the slots cannot hold.
pub const DEFAULT_REPARTITIONS: usize = 8;
/// Factor applied to a device limit that floorplanning could not meet.
const TIGHTEN_NUM: u64 = 9;
const TIGHTEN_DEN: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Partition,
    Comm,
    Floorplan,
    Hbm,
    Pipeline,
    Simulate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Partition => "partition",
            Stage::Comm => "comm",
            Stage::Floorplan => "floorplan",
            Stage::Hbm => "hbm",
            Stage::Pipeline => "pipeline",
            Stage::Simulate => "simulate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    pub time_limit: Option<Duration>,
    pub solver: SolverKind,
    pub comm: CommOptions,
    pub floorplan: FloorplanOptions,
    pub hbm: HbmOptions,
    pub pipeline: PipelineOptions,
    pub sim: SimConfig,
    pub repartitions: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            time_limit: None,
            solver: SolverKind::Internal,
            comm: CommOptions::default(),
            floorplan: FloorplanOptions::default(),
            hbm: HbmOptions::default(),
            pipeline: PipelineOptions::default(),
            sim: SimConfig::default(),
            repartitions: DEFAULT_REPARTITIONS,
        }
    }
}

impl FlowOptions {
    /// Toggle every stage that can run concurrently.
    pub fn parallel(mut self, on: bool) -> Self {
        self.floorplan.parallel = on;
        self
    }
}

/// Cluster as the partitioner and floorplanner see it: network port logic
/// is deducted once more than one device is in use.
pub fn effective_cluster(cluster: &ClusterSpec) -> Result<ClusterSpec> {
    if cluster.device_count() > 1 {
        cluster.with_network_overhead()
    } else {
        Ok(cluster.clone())
    }
}

/// Device assignment the slots of every device can hold. A floorplan
/// failure tightens the offending device's limit and solves again.
pub fn partition(g: &TaskGraph, cluster: &ClusterSpec, opts: &FlowOptions) -> Result<InterAssignment> {
    let eff = effective_cluster(cluster)?;
    let mut p = formulate(g, &eff)?;
    let mut last: Option<Error> = None;
    for _ in 0..=opts.repartitions {
        let a = match solve_with(&p, opts.time_limit, opts.solver) {
            Ok(a) => a,
            Err(e) => return Err(last.unwrap_or(e)),
        };
        let failure = match place(g, &a, cluster, opts).and_then(|net| {
            let s = floorplan_all(&net.graph, &net.placement, &eff, &opts.floorplan)?;
            bind_all(&net.graph, &s, &eff, &opts.hbm).map(|_| ())
        }) {
            Ok(()) => return Ok(a),
            Err(e) => e,
        };
        let used = a.per_device_area.get(&failure_device(&failure)).copied().unwrap_or_default();
        match &failure {
            Error::RegionInfeasible { device, resource, .. } => {
                tighten(&mut p.limits[*device], &used, &[*resource], TIGHTEN_NUM, TIGHTEN_DEN);
            }
            Error::BindingCapacity {
                device,
                ports,
                capacity,
            } => {
                let (num, den) = if (*capacity as u64) * TIGHTEN_DEN < (*ports as u64) * TIGHTEN_NUM {
                    (*capacity as u64, *ports as u64)
                } else {
                    (TIGHTEN_NUM, TIGHTEN_DEN)
                };
                tighten(&mut p.limits[*device], &used, &Resource::ALL, num, den);
            }
            _ => return Err(failure),
        }
        // Devices with the same geometry cannot pack what this one could not.
        let d = failure_device(&failure);
        let same = |j: usize| {
            let (x, y) = (&eff.devices[j], &eff.devices[d]);
            (x.capacity, x.slot_rows, x.slot_cols, x.threshold, &x.slot_capacity)
                == (y.capacity, y.slot_rows, y.slot_cols, y.threshold, &y.slot_capacity)
        };
        let tightened = p.limits[d];
        for j in 0..p.limits.len() {
            if j != d && same(j) {
                p.limits[j] = ResourceVec::from_fn(|r| p.limits[j].get(r).min(tightened.get(r)));
            }
        }
        last = Some(failure);
    }
    Err(last.expect("at least one attempt"))
}

fn failure_device(e: &Error) -> usize {
    match e {
        Error::RegionInfeasible { device, .. } | Error::BindingCapacity { device, .. } => *device,
        _ => 0,
    }
}

/// Scale the limit by `num / den`, and below the current usage so at least
/// one vertex has to move.
fn tighten(limit: &mut ResourceVec, used: &ResourceVec, resources: &[Resource], num: u64, den: u64) {
    for &r in resources {
        let v = limit.get_mut(r);
        *v = (*v * num / den).min(used.get(r).saturating_sub(1));
    }
}

/// Insert network vertices for cut edges; a single device needs none.
pub fn place(g: &TaskGraph, a: &InterAssignment, cluster: &ClusterSpec, opts: &FlowOptions) -> Result<NetDesign> {
    if cluster.device_count() == 1 {
        let mut placement = BTreeMap::new();
        for v in g.vertices() {
            let d = a.device_of(&v.id).ok_or_else(|| Error::Reference {
                kind: "vertex",
                id: v.id.clone(),
            })?;
            if d != 0 {
                return Err(Error::Range { index: d, count: 1 });
            }
            placement.insert(v.id.clone(), 0);
        }
        return Ok(NetDesign {
            graph: g.clone(),
            placement,
            links: Vec::new(),
        });
    }
    insert_network_vertices(g, a, cluster, opts.comm)
}

pub fn floorplan(net: &NetDesign, cluster: &ClusterSpec, opts: &FlowOptions) -> Result<SlotAssignment> {
    floorplan_all(&net.graph, &net.placement, &effective_cluster(cluster)?, &opts.floorplan)
}

fn bind_all(
    g: &TaskGraph,
    s: &SlotAssignment,
    cluster: &ClusterSpec,
    opts: &HbmOptions,
) -> Result<BTreeMap<usize, HbmBinding>> {
    cluster
        .devices
        .iter()
        .enumerate()
        .map(|(i, d)| Ok((i, bind_hbm_channels(g, s, d, opts)?)))
        .collect()
}

pub fn bind(net: &NetDesign, s: &SlotAssignment, cluster: &ClusterSpec, opts: &FlowOptions) -> Result<BTreeMap<usize, HbmBinding>> {
    bind_all(&net.graph, s, &effective_cluster(cluster)?, &opts.hbm)
}

pub fn pipelined(
    net: &NetDesign,
    s: &SlotAssignment,
    hbm: &BTreeMap<usize, HbmBinding>,
    cluster: &ClusterSpec,
    opts: &FlowOptions,
) -> Result<PipelinedDesign> {
    let mut d = pipeline(&net.graph, s, &net.links, cluster, &opts.pipeline)?;
    d.hbm = hbm.clone();
    Ok(d)
}

pub fn hbm_json(hbm: &BTreeMap<usize, HbmBinding>) -> String {
    crate::canon::to_string(hbm)
}

pub fn hbm_from_json(text: &str) -> Result<BTreeMap<usize, HbmBinding>> {
    crate::canon::from_str(text)
}

/// Everything a run produced, up to the first failing stage.
#[derive(Debug, Default)]
pub struct Bundle {
    pub assignment: Option<InterAssignment>,
    pub net: Option<NetDesign>,
    pub floorplan: Option<SlotAssignment>,
    pub hbm: Option<BTreeMap<usize, HbmBinding>>,
    pub design: Option<PipelinedDesign>,
    pub report: Option<SimReport>,
    pub failed: Option<(Stage, Error)>,
}

impl Bundle {
    /// File name and content of every artifact present, in stage order.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if let Some(a) = &self.assignment {
            out.push(("assignment.json", a.to_json()));
        }
        if let Some(s) = &self.floorplan {
            out.push(("floorplan.json", s.to_json()));
        }
        if let Some(h) = &self.hbm {
            out.push(("hbm.json", hbm_json(h)));
        }
        if let Some(d) = &self.design {
            out.push(("latency.json", d.latency_json()));
        }
        if let Some(r) = &self.report {
            out.push(("report.json", r.to_json()));
        }
        if let Ok(dot) = self.dot() {
            out.push(("design.dot", dot));
        }
        if let Some((stage, e)) = &self.failed {
            out.push(("FAILED_AT", format!("{stage}\n{e}\n")));
        }
        out
    }

    pub fn dot(&self) -> Result<String> {
        match (&self.net, &self.floorplan) {
            (Some(net), Some(s)) => Ok(crate::dot::export_dot(net, s, self.design.as_ref())),
            _ => Err(Error::StageMissing(Stage::Floorplan.name().into())),
        }
    }

    pub fn result(&self) -> std::result::Result<(), &Error> {
        match &self.failed {
            Some((_, e)) => Err(e),
            None => Ok(()),
        }
    }

    pub fn certified(&self) -> bool {
        self.assignment.as_ref().is_some_and(|a| a.certified)
            && self.floorplan.as_ref().is_some_and(|s| s.certified)
    }
}

/// Run every stage, stopping at the first failure.
pub fn run(g: &TaskGraph, cluster: &ClusterSpec, opts: &FlowOptions) -> Bundle {
    let mut b = Bundle::default();
    macro_rules! stage {
        ($stage:expr, $e:expr) => {
            match $e {
                Ok(v) => v,
                Err(e) => {
                    b.failed = Some(($stage, e));
                    return b;
                }
            }
        };
    }
    let a = stage!(Stage::Partition, partition(g, cluster, opts));
    b.assignment = Some(a.clone());
    let net = stage!(Stage::Comm, place(g, &a, cluster, opts));
    b.net = Some(net.clone());
    let s = stage!(Stage::Floorplan, floorplan(&net, cluster, opts));
    b.floorplan = Some(s.clone());
    let hbm = stage!(Stage::Hbm, bind(&net, &s, cluster, opts));
    b.hbm = Some(hbm.clone());
    let d = stage!(Stage::Pipeline, pipelined(&net, &s, &hbm, cluster, opts));
    b.design = Some(d.clone());
    let r = stage!(Stage::Simulate, simulate(&d, cluster, &opts.sim));
    b.report = Some(r);
    b
}
