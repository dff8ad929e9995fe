//! Slot floorplanning inside each device by recursive two-way partitioning.
//!
//! Costs are width x Manhattan distance between slots. During recursion a
//! region is represented by its center in doubled coordinates so that
//! half-slot offsets stay integral.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assign::{self, AssignOutcome, AssignProblem, Budget};
use crate::cluster::{ClusterSpec, DeviceSpec};
use crate::error::{Error, Result};
use crate::graph::TaskGraph;
use crate::resource::{Resource, ResourceVec};

pub const DEFAULT_MAX_DEPTH: usize = 3;
pub const DEFAULT_NODE_BUDGET: u64 = 200_000;
const MAX_DFF_K: u128 = 16;
/// Largest free-vertex count the flat oracle enumerates.
pub const FLAT_ORACLE_MAX_VERTICES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloorplanOptions {
    pub max_depth: usize,
    /// Branch-and-bound nodes per two-way subproblem.
    pub node_budget: u64,
    /// Floorplan devices concurrently.
    pub parallel: bool,
}

impl Default for FloorplanOptions {
    fn default() -> Self {
        FloorplanOptions {
            max_depth: DEFAULT_MAX_DEPTH,
            node_budget: DEFAULT_NODE_BUDGET,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotRef {
    pub device: usize,
    pub row: usize,
    pub col: usize,
}

/// Half-open rectangle of slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Region {
    pub r0: usize,
    pub r1: usize,
    pub c0: usize,
    pub c1: usize,
}

impl Region {
    pub fn slot(row: usize, col: usize) -> Self {
        Region {
            r0: row,
            r1: row + 1,
            c0: col,
            c1: col + 1,
        }
    }

    pub fn rows(&self) -> usize {
        self.r1 - self.r0
    }

    pub fn cols(&self) -> usize {
        self.c1 - self.c0
    }

    pub fn is_slot(&self) -> bool {
        self.rows() == 1 && self.cols() == 1
    }

    /// Split along the longer axis, rows on a tie.
    pub fn split(&self) -> (Region, Region) {
        if self.rows() >= self.cols() {
            let m = self.r0 + self.rows() / 2;
            (Region { r1: m, ..*self }, Region { r0: m, ..*self })
        } else {
            let m = self.c0 + self.cols() / 2;
            (Region { c1: m, ..*self }, Region { c0: m, ..*self })
        }
    }

    /// Center in doubled coordinates.
    fn center2(&self) -> (i64, i64) {
        ((self.r0 + self.r1 - 1) as i64, (self.c0 + self.c1 - 1) as i64)
    }

    fn slots(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.r0..self.r1).flat_map(move |r| (self.c0..self.c1).map(move |c| (r, c)))
    }

    /// Smallest Manhattan distance between any slot of `self` and any slot of `other`.
    pub fn min_dist(&self, other: &Region) -> u64 {
        let gap = |a0: usize, a1: usize, b0: usize, b1: usize| {
            if a1 <= b0 {
                b0 - a1 + 1
            } else if b1 <= a0 {
                a0 - b1 + 1
            } else {
                0
            }
        };
        (gap(self.r0, self.r1, other.r0, other.r1) + gap(self.c0, self.c1, other.c0, other.c1)) as u64
    }

    fn label(&self) -> String {
        format!("rows {}..{} cols {}..{}", self.r0, self.r1, self.c0, self.c1)
    }
}

fn dist2(a: &Region, b: &Region) -> f64 {
    let (ar, ac) = a.center2();
    let (br, bc) = b.center2();
    ((ar - br).abs() + (ac - bc).abs()) as f64
}

/// Slot holding network send/receive vertices: the row farthest from HBM, column 0.
pub fn port_slot(d: &DeviceSpec) -> (usize, usize) {
    let row = if d.hbm_row == 0 { d.slot_rows - 1 } else { 0 };
    (row, 0)
}

pub fn slot_limit(d: &DeviceSpec, row: usize, col: usize) -> ResourceVec {
    d.threshold.limit(&d.slot_capacity_at(row, col))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotAssignment {
    pub mapping: BTreeMap<String, SlotRef>,
    /// Per device, row-major per-slot area.
    pub per_slot_area: BTreeMap<usize, Vec<ResourceVec>>,
    /// Per device, width x Manhattan cost.
    pub objective: BTreeMap<usize, f64>,
    /// Every two-way subproblem was solved to optimality.
    pub certified: bool,
    /// Per device, lower-bound cost after each recursion level.
    pub level_bounds: BTreeMap<usize, Vec<f64>>,
}

impl SlotAssignment {
    pub fn total_objective(&self) -> f64 {
        self.objective.values().sum()
    }

    pub fn to_json(&self) -> String {
        crate::canon::to_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        crate::canon::from_str(text)
    }
}

struct DevicePlan {
    mapping: BTreeMap<String, SlotRef>,
    certified: bool,
    level_bounds: Vec<f64>,
}

/// Vertices of device `dev`, in graph order.
fn device_vertices(g: &TaskGraph, placement: &BTreeMap<String, usize>, dev: usize) -> Vec<usize> {
    g.vertices()
        .iter()
        .enumerate()
        .filter(|(_, v)| placement.get(&v.id) == Some(&dev))
        .map(|(i, _)| i)
        .collect()
}

/// Weighted intra-device edges as (local a, local b, width).
fn local_edges(g: &TaskGraph, local: &HashMap<usize, usize>) -> Vec<(usize, usize, f64)> {
    g.endpoints()
        .into_iter()
        .zip(g.edges())
        .filter_map(|((s, d), e)| match (local.get(&s), local.get(&d)) {
            (Some(&a), Some(&b)) if a != b => Some((a, b, e.width as f64)),
            _ => None,
        })
        .collect()
}

fn level_bound(edges: &[(usize, usize, f64)], region: &[Region]) -> f64 {
    edges
        .iter()
        .map(|&(a, b, w)| w * region[a].min_dist(&region[b]) as f64)
        .sum()
}

/// Floorplan the vertices `placement` puts on device `dev`.
pub fn floorplan_device(
    g: &TaskGraph,
    placement: &BTreeMap<String, usize>,
    dev: usize,
    d: &DeviceSpec,
    opts: &FloorplanOptions,
) -> Result<SlotAssignment> {
    let plan = plan_device(g, placement, dev, d, opts)?;
    Ok(assemble(g, placement, &[(dev, d)], vec![plan]))
}

fn plan_device(
    g: &TaskGraph,
    placement: &BTreeMap<String, usize>,
    dev: usize,
    d: &DeviceSpec,
    opts: &FloorplanOptions,
) -> Result<DevicePlan> {
    let verts = device_vertices(g, placement, dev);
    let local: HashMap<usize, usize> = verts.iter().enumerate().map(|(l, &gi)| (gi, l)).collect();
    let edges = local_edges(g, &local);
    let mut nbrs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); verts.len()];
    for &(a, b, w) in &edges {
        nbrs[a].push((b, w));
        nbrs[b].push((a, w));
    }
    let gv = g.vertices();
    let whole = Region {
        r0: 0,
        r1: d.slot_rows,
        c0: 0,
        c1: d.slot_cols,
    };
    let (pr, pc) = port_slot(d);
    let pinned: Vec<bool> = verts.iter().map(|&gi| gv[gi].kind.is_net()).collect();
    let mut region: Vec<Region> = pinned
        .iter()
        .map(|&p| if p { Region::slot(pr, pc) } else { whole })
        .collect();
    // Area already committed to each slot by pinned vertices.
    let mut pinned_area = vec![ResourceVec::ZERO; d.num_slots()];
    for (l, &gi) in verts.iter().enumerate() {
        if pinned[l] {
            pinned_area[d.slot_index(pr, pc)] += gv[gi].area;
        }
    }
    let free_limit = |row: usize, col: usize| -> ResourceVec {
        slot_limit(d, row, col).saturating_sub(&pinned_area[d.slot_index(row, col)])
    };
    let all_slots: Vec<ResourceVec> = whole.slots().map(|(r, c)| free_limit(r, c)).collect();
    let free_areas: Vec<ResourceVec> = (0..verts.len()).filter(|&l| !pinned[l]).map(|l| gv[verts[l]].area).collect();
    if let Some(resource) = packing_refuted(&free_areas, &all_slots) {
        return Err(Error::RegionInfeasible {
            device: dev,
            region: whole.label(),
            resource,
        });
    }
    let mut certified = true;
    let mut level_bounds = vec![level_bound(&edges, &region)];
    let mut frontier = vec![whole];
    let mut depth = 0;
    while frontier.iter().any(|r| !r.is_slot()) && depth < opts.max_depth {
        let mut next = Vec::new();
        for reg in &frontier {
            if reg.is_slot() {
                next.push(*reg);
                continue;
            }
            let halves = reg.split();
            let items: Vec<usize> = (0..verts.len())
                .filter(|&l| !pinned[l] && region[l] == *reg)
                .collect();
            let bins = [halves.0, halves.1];
            let sol = solve_region(&items, &bins, &region, &nbrs, |l| gv[verts[l]].area, &free_limit, opts)
                .map_err(|(b, res)| Error::RegionInfeasible {
                    device: dev,
                    region: bins[b].label(),
                    resource: res,
                })?;
            certified &= sol.1;
            for (k, &l) in items.iter().enumerate() {
                region[l] = bins[sol.0[k]];
            }
            next.push(halves.0);
            next.push(halves.1);
        }
        frontier = next;
        depth += 1;
        level_bounds.push(level_bound(&edges, &region));
    }
    // Depth exhausted: place what remains slot by slot in one multi-way step.
    for reg in frontier.iter().filter(|r| !r.is_slot()) {
        let items: Vec<usize> = (0..verts.len())
            .filter(|&l| !pinned[l] && region[l] == *reg)
            .collect();
        let bins: Vec<Region> = reg.slots().map(|(r, c)| Region::slot(r, c)).collect();
        let sol = solve_region(&items, &bins, &region, &nbrs, |l| gv[verts[l]].area, &free_limit, opts)
            .map_err(|(b, res)| Error::RegionInfeasible {
                device: dev,
                region: bins[b].label(),
                resource: res,
            })?;
        certified &= sol.1;
        for (k, &l) in items.iter().enumerate() {
            region[l] = bins[sol.0[k]];
        }
    }
    if level_bounds.len() == 1 || frontier.iter().any(|r| !r.is_slot()) {
        level_bounds.push(level_bound(&edges, &region));
    }
    let mapping = verts
        .iter()
        .enumerate()
        .map(|(l, &gi)| {
            (
                gv[gi].id.clone(),
                SlotRef {
                    device: dev,
                    row: region[l].r0,
                    col: region[l].c0,
                },
            )
        })
        .collect();
    Ok(DevicePlan {
        mapping,
        certified,
        level_bounds,
    })
}

/// Whether `areas` can be packed into slots with the given limits.
fn packable(areas: &[ResourceVec], limits: Vec<ResourceVec>, budget: u64) -> bool {
    let total: ResourceVec = areas.iter().copied().sum();
    if limits.len() == 1 {
        return total.fits_within(&limits[0]);
    }
    if !total.fits_within(&limits.iter().copied().sum()) || packing_refuted(areas, &limits).is_some() {
        return false;
    }
    packing(areas, limits, budget).is_some()
}

/// Resource class on which `areas` provably cannot be packed into bins with
/// `limits`, by dual-feasible-function bounds on the number of bins needed.
pub fn packing_refuted(areas: &[ResourceVec], limits: &[ResourceVec]) -> Option<Resource> {
    let bins = limits.len() as u128;
    for r in Resource::ALL {
        let c = limits.iter().map(|l| l.get(r)).max().unwrap_or(0) as u128;
        let xs: Vec<u128> = areas.iter().map(|a| a.get(r) as u128).filter(|&x| x > 0).collect();
        if xs.is_empty() {
            continue;
        }
        if c == 0 || xs.iter().any(|&x| x > c) {
            return Some(r);
        }
        for k in 1..=MAX_DFF_K {
            // f_k(x) * k: x * k when (k + 1) x is a multiple of c, else floor((k + 1) x / c) * c.
            let sum: u128 = xs
                .iter()
                .map(|&x| if (k + 1) * x % c == 0 { x * k } else { (k + 1) * x / c * c })
                .sum();
            if sum > bins * k * c {
                return Some(r);
            }
        }
    }
    None
}

fn packing(areas: &[ResourceVec], limits: Vec<ResourceVec>, budget: u64) -> Option<Vec<usize>> {
    let p = AssignProblem {
        areas: areas.to_vec(),
        fixed: vec![None; areas.len()],
        limits,
        unary: vec![],
        edges: vec![],
        pair_cost: vec![],
        automorphisms: vec![],
    };
    match assign::solve(&p, Budget::nodes(budget)) {
        AssignOutcome::Solved(s) => Some(s.bins),
        _ => None,
    }
}

/// Assign `items` (local indices, all currently in one region) to `bins`,
/// such that every bin's share can still be packed into its slots.
/// Edges to vertices outside the item set become unary terms against
/// their current region center.
#[allow(clippy::too_many_arguments)]
fn solve_region(
    items: &[usize],
    bins: &[Region],
    region: &[Region],
    nbrs: &[Vec<(usize, f64)>],
    area: impl Fn(usize) -> ResourceVec,
    free_limit: &impl Fn(usize, usize) -> ResourceVec,
    opts: &FloorplanOptions,
) -> std::result::Result<(Vec<usize>, bool), (usize, Resource)> {
    if items.is_empty() {
        return Ok((vec![], true));
    }
    let pos: HashMap<usize, usize> = items.iter().enumerate().map(|(k, &l)| (l, k)).collect();
    let mut edges = Vec::new();
    let mut unary = vec![vec![0.0; bins.len()]; items.len()];
    for (k, &l) in items.iter().enumerate() {
        for &(u, w) in &nbrs[l] {
            match pos.get(&u) {
                Some(&ku) if ku > k => edges.push((k, ku, w)),
                Some(_) => {}
                None => {
                    for (b, bin) in bins.iter().enumerate() {
                        unary[k][b] += w * dist2(bin, &region[u]);
                    }
                }
            }
        }
    }
    let areas: Vec<ResourceVec> = items.iter().map(|&l| area(l)).collect();
    let slot_limits: Vec<Vec<ResourceVec>> = bins
        .iter()
        .map(|b| b.slots().map(|(r, c)| free_limit(r, c)).collect())
        .collect();
    let p = AssignProblem {
        areas: areas.clone(),
        limits: slot_limits.iter().map(|l| l.iter().copied().sum()).collect(),
        unary,
        edges,
        pair_cost: bins
            .iter()
            .map(|a| bins.iter().map(|b| dist2(a, b)).collect())
            .collect(),
        automorphisms: vec![],
        fixed: vec![None; items.len()],
    };
    let pack_budget = (opts.node_budget / 20).max(1000);
    let multi = bins.iter().any(|b| !b.is_slot());
    let cache: RefCell<HashMap<Vec<usize>, bool>> = RefCell::new(HashMap::new());
    let accept = |assignment: &[usize]| -> bool {
        if !multi {
            return true;
        }
        if let Some(&ok) = cache.borrow().get(assignment) {
            return ok;
        }
        let ok = bins.iter().enumerate().all(|(b, bin)| {
            bin.is_slot() || {
                let share: Vec<ResourceVec> = assignment
                    .iter()
                    .zip(&areas)
                    .filter(|(&x, _)| x == b)
                    .map(|(_, &a)| a)
                    .collect();
                packable(&share, slot_limits[b].clone(), pack_budget)
            }
        });
        cache.borrow_mut().insert(assignment.to_vec(), ok);
        ok
    };
    match assign::solve_filtered(&p, Budget::nodes(opts.node_budget), &accept) {
        AssignOutcome::Solved(s) => Ok((s.bins, s.certified)),
        AssignOutcome::Infeasible(row) if !multi => Err(row.unwrap_or((0, Resource::Lut))),
        outcome => {
            // Fall back to the split induced by any slot-level packing.
            let flat: Vec<ResourceVec> = slot_limits.iter().flatten().copied().collect();
            let owner: Vec<usize> = slot_limits
                .iter()
                .enumerate()
                .flat_map(|(b, l)| std::iter::repeat_n(b, l.len()))
                .collect();
            match packing(&areas, flat, opts.node_budget) {
                Some(slots) => Ok((slots.into_iter().map(|s| owner[s]).collect(), false)),
                None => match outcome {
                    AssignOutcome::Infeasible(Some(row)) => Err(row),
                    _ => Err((0, first_short_resource(&areas, &slot_limits))),
                },
            }
        }
    }
}

/// Resource class most over-subscribed by `areas` across all slots.
fn first_short_resource(areas: &[ResourceVec], slot_limits: &[Vec<ResourceVec>]) -> Resource {
    let total: ResourceVec = areas.iter().copied().sum();
    let cap: ResourceVec = slot_limits.iter().flatten().copied().sum();
    if let Some(r) = total.first_excess(&cap) {
        return r;
    }
    *Resource::ALL
        .iter()
        .max_by(|&&a, &&b| {
            let f = |r: Resource| total.get(r) as f64 / cap.get(r).max(1) as f64;
            f(a).total_cmp(&f(b))
        })
        .unwrap()
}

fn assemble(
    g: &TaskGraph,
    placement: &BTreeMap<String, usize>,
    devices: &[(usize, &DeviceSpec)],
    plans: Vec<DevicePlan>,
) -> SlotAssignment {
    let mut out = SlotAssignment {
        mapping: BTreeMap::new(),
        per_slot_area: BTreeMap::new(),
        objective: BTreeMap::new(),
        certified: true,
        level_bounds: BTreeMap::new(),
    };
    for (&(dev, d), plan) in devices.iter().zip(plans) {
        out.certified &= plan.certified;
        out.level_bounds.insert(dev, plan.level_bounds);
        let mut areas = vec![ResourceVec::ZERO; d.num_slots()];
        for (id, s) in &plan.mapping {
            areas[d.slot_index(s.row, s.col)] += g.vertex(id).unwrap().area;
        }
        out.per_slot_area.insert(dev, areas);
        out.mapping.extend(plan.mapping);
    }
    let _ = placement;
    out.objective = manhattan_cost(&out, g);
    for &(dev, _) in devices {
        out.objective.entry(dev).or_insert(0.0);
    }
    out
}

/// Floorplan every device of `cluster`.
pub fn floorplan_all(
    g: &TaskGraph,
    placement: &BTreeMap<String, usize>,
    cluster: &ClusterSpec,
    opts: &FloorplanOptions,
) -> Result<SlotAssignment> {
    let devices: Vec<(usize, &DeviceSpec)> = cluster.devices.iter().enumerate().collect();
    let run = |&(dev, d): &(usize, &DeviceSpec)| plan_device(g, placement, dev, d, opts);
    let plans: Vec<Result<DevicePlan>> = if opts.parallel {
        devices.par_iter().map(run).collect()
    } else {
        devices.iter().map(run).collect()
    };
    let plans = plans.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(assemble(g, placement, &devices, plans))
}

/// Width x Manhattan distance summed over edges whose endpoints share a device.
pub fn manhattan_cost(s: &SlotAssignment, g: &TaskGraph) -> BTreeMap<usize, f64> {
    let mut out = BTreeMap::new();
    for e in g.edges() {
        let (Some(a), Some(b)) = (s.mapping.get(&e.src), s.mapping.get(&e.dst)) else {
            continue;
        };
        if a.device != b.device {
            continue;
        }
        let d = a.row.abs_diff(b.row) + a.col.abs_diff(b.col);
        *out.entry(a.device).or_insert(0.0) += e.width as f64 * d as f64;
    }
    out
}

/// Check every slot against its thresholded capacity.
pub fn check_slots(s: &SlotAssignment, cluster: &ClusterSpec) -> Result<()> {
    for (&dev, areas) in &s.per_slot_area {
        let d = &cluster.devices[dev];
        for row in 0..d.slot_rows {
            for col in 0..d.slot_cols {
                let a = areas[d.slot_index(row, col)];
                if let Some(r) = a.first_excess(&slot_limit(d, row, col)) {
                    return Err(Error::RegionInfeasible {
                        device: dev,
                        region: Region::slot(row, col).label(),
                        resource: r,
                    });
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatPlan {
    pub mapping: BTreeMap<String, (usize, usize)>,
    pub cost: f64,
}

/// Exhaustive slot assignment of one device's vertices. Network vertices
/// stay pinned to the port slot. Test oracle.
pub fn flat_oracle(
    g: &TaskGraph,
    placement: &BTreeMap<String, usize>,
    dev: usize,
    d: &DeviceSpec,
) -> Result<FlatPlan> {
    let verts = device_vertices(g, placement, dev);
    let gv = g.vertices();
    let port = port_slot(d);
    let free: Vec<usize> = verts.iter().copied().filter(|&gi| !gv[gi].kind.is_net()).collect();
    if free.len() > FLAT_ORACLE_MAX_VERTICES {
        return Err(Error::TooLarge(format!("{} vertices on device {dev}", free.len())));
    }
    let slots: Vec<(usize, usize)> = (0..d.slot_rows)
        .flat_map(|r| (0..d.slot_cols).map(move |c| (r, c)))
        .collect();
    let mut at: HashMap<usize, (usize, usize)> = verts
        .iter()
        .filter(|&&gi| gv[gi].kind.is_net())
        .map(|&gi| (gi, port))
        .collect();
    let intra: Vec<(usize, usize, f64)> = g
        .endpoints()
        .into_iter()
        .zip(g.edges())
        .filter(|((s, t), _)| placement.get(&gv[*s].id) == Some(&dev) && placement.get(&gv[*t].id) == Some(&dev))
        .map(|((s, t), e)| (s, t, e.width as f64))
        .collect();
    let n = free.len();
    let k = slots.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut choice = vec![0usize; n];
    loop {
        let mut used = vec![ResourceVec::ZERO; k];
        for (i, &gi) in free.iter().enumerate() {
            used[choice[i]] += gv[gi].area;
            at.insert(gi, slots[choice[i]]);
        }
        for &gi in verts.iter().filter(|&&gi| gv[gi].kind.is_net()) {
            used[d.slot_index(port.0, port.1)] += gv[gi].area;
        }
        let ok = slots
            .iter()
            .enumerate()
            .all(|(s, &(r, c))| used[s].fits_within(&slot_limit(d, r, c)));
        if ok {
            let cost: f64 = intra
                .iter()
                .map(|&(a, b, w)| {
                    let (pa, pb) = (at[&a], at[&b]);
                    w * (pa.0.abs_diff(pb.0) + pa.1.abs_diff(pb.1)) as f64
                })
                .sum();
            if best.as_ref().is_none_or(|(bc, _)| assign::cost_lt(cost, *bc)) {
                best = Some((cost, choice.clone()));
            }
        }
        let mut i = n;
        loop {
            if i == 0 {
                let (cost, choice) = best.ok_or_else(|| {
                    Error::Infeasible(format!("no slot assignment fits device {dev}"))
                })?;
                let mut mapping: BTreeMap<String, (usize, usize)> = free
                    .iter()
                    .zip(&choice)
                    .map(|(&gi, &s)| (gv[gi].id.clone(), slots[s]))
                    .collect();
                for &gi in verts.iter().filter(|&&gi| gv[gi].kind.is_net()) {
                    mapping.insert(gv[gi].id.clone(), port);
                }
                return Ok(FlatPlan { mapping, cost });
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < k {
                break;
            }
            choice[i] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_prefers_rows() {
        let r = Region { r0: 0, r1: 3, c0: 0, c1: 2 };
        let (a, b) = r.split();
        assert_eq!((a.r0, a.r1, b.r0, b.r1), (0, 1, 1, 3));
        let (c, d) = b.split();
        assert_eq!((c.r1, d.r0), (2, 2));
        let (e, f) = Region { r0: 0, r1: 1, c0: 0, c1: 2 }.split();
        assert_eq!((e.c1, f.c0), (1, 1));
    }

    #[test]
    fn region_distance() {
        let a = Region::slot(0, 0);
        let b = Region::slot(2, 1);
        assert_eq!(a.min_dist(&b), 3);
        let whole = Region { r0: 0, r1: 3, c0: 0, c1: 2 };
        assert_eq!(whole.min_dist(&b), 0);
        assert_eq!(dist2(&a, &b), 6.0);
    }

    #[test]
    fn dff_bound_counts_items_per_slot() {
        let item = ResourceVec::new(54, 0, 0, 0, 0);
        let slot = ResourceVec::new(133, 0, 0, 0, 0);
        // Two fit per slot, so six slots hold twelve.
        assert_eq!(packing_refuted(&[item; 12], &[slot; 6]), None);
        assert_eq!(packing_refuted(&[item; 13], &[slot; 6]), Some(Resource::Lut));
    }

    #[test]
    fn u55c_port_slot_is_top_left() {
        assert_eq!(port_slot(&DeviceSpec::u55c(0)), (2, 0));
    }
}
