//! Vertex-to-device assignment minimizing hop-weighted FIFO width under
//! per-device resource thresholds.

use std::collections::BTreeMap;
use std::io::Write;
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::assign::{self, AssignOutcome, AssignProblem};
use crate::cluster::{comm_cost, ClusterSpec};
use crate::error::{Error, Result};
use crate::graph::TaskGraph;
use crate::resource::{Resource, ResourceVec};

/// Largest instance the exhaustive oracle accepts.
pub const ORACLE_MAX_VERTICES: usize = 14;
pub const ORACLE_MAX_DEVICES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Internal,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterAssignment {
    pub mapping: BTreeMap<String, usize>,
    pub objective: f64,
    pub per_device_area: BTreeMap<usize, ResourceVec>,
    pub feasible: bool,
    /// Search completed, so `objective` is optimal.
    pub certified: bool,
    pub lower_bound: f64,
    pub nodes: u64,
    pub solver: SolverKind,
}

impl InterAssignment {
    pub fn device_of(&self, vertex: &str) -> Option<usize> {
        self.mapping.get(vertex).copied()
    }

    /// Ids of edges whose endpoints sit on different devices.
    pub fn cut_edges(&self, g: &TaskGraph) -> Vec<String> {
        g.edges()
            .iter()
            .filter(|e| self.mapping.get(&e.src) != self.mapping.get(&e.dst))
            .map(|e| e.id.clone())
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("assignment serializes");
        v["objective"] = serde_json::json!(crate::canon::round6(self.objective));
        v["lower_bound"] = serde_json::json!(crate::canon::round6(self.lower_bound));
        crate::canon::to_string(&v)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        crate::canon::from_str(text)
    }
}

/// The binary program: x[v][d] placement variables plus, per merged edge and
/// ordered device pair with nonzero cost, a product variable
/// y[e][a][b] >= x[src][a] + x[dst][b] - 1.
#[derive(Debug, Clone)]
pub struct IlpProblem {
    pub vertex_ids: Vec<String>,
    pub areas: Vec<ResourceVec>,
    pub limits: Vec<ResourceVec>,
    /// Parallel edges between the same ordered vertex pair merged into one width.
    pub edges: Vec<(usize, usize, u64)>,
    /// `pair_cost[a][b]` = hops(a, b) x lambda of that hop class.
    pub pair_cost: Vec<Vec<f64>>,
    /// Use device automorphisms to prune mirrored subtrees.
    pub symmetry_breaking: bool,
}

impl IlpProblem {
    pub fn num_devices(&self) -> usize {
        self.limits.len()
    }

    fn costly_pairs(&self) -> usize {
        let k = self.num_devices();
        (0..k)
            .flat_map(|a| (0..k).map(move |b| (a, b)))
            .filter(|&(a, b)| self.pair_cost[a][b] != 0.0)
            .count()
    }

    pub fn num_x(&self) -> usize {
        self.vertex_ids.len() * self.num_devices()
    }

    pub fn num_y(&self) -> usize {
        self.edges.len() * self.costly_pairs()
    }

    /// Assignment rows + five capacity rows per device + one row per y.
    pub fn num_rows(&self) -> usize {
        self.vertex_ids.len() + self.num_devices() * Resource::ALL.len() + self.num_y()
    }

    /// Objective value of a device vector indexed like `vertex_ids`.
    pub fn objective(&self, devices: &[usize]) -> f64 {
        self.edges
            .iter()
            .map(|&(a, b, w)| w as f64 * self.pair_cost[devices[a]][devices[b]])
            .sum()
    }

    fn to_assign(&self) -> AssignProblem {
        let mut p = AssignProblem {
            areas: self.areas.clone(),
            limits: self.limits.clone(),
            unary: vec![],
            edges: self
                .edges
                .iter()
                .map(|&(a, b, w)| (a, b, w as f64))
                .collect(),
            pair_cost: self.pair_cost.clone(),
            automorphisms: vec![],
            fixed: vec![None; self.vertex_ids.len()],
        };
        if self.symmetry_breaking {
            p.automorphisms = assign::find_automorphisms(&p);
        }
        p
    }

    fn assignment(&self, devices: &[usize], certified: bool, lb: f64, nodes: u64, solver: SolverKind) -> InterAssignment {
        let mut per_device_area: BTreeMap<usize, ResourceVec> =
            (0..self.num_devices()).map(|d| (d, ResourceVec::ZERO)).collect();
        for (i, &d) in devices.iter().enumerate() {
            *per_device_area.get_mut(&d).unwrap() += self.areas[i];
        }
        let feasible = per_device_area
            .iter()
            .all(|(d, a)| a.fits_within(&self.limits[*d]));
        InterAssignment {
            mapping: self
                .vertex_ids
                .iter()
                .cloned()
                .zip(devices.iter().copied())
                .collect(),
            objective: self.objective(devices),
            per_device_area,
            feasible,
            certified,
            lower_bound: lb,
            nodes,
            solver,
        }
    }
}

/// Build the program for `g` on `cluster`. Device capacities are taken as
/// given, so network port overhead must already be deducted.
pub fn formulate(g: &TaskGraph, cluster: &ClusterSpec) -> Result<IlpProblem> {
    let limits: Vec<ResourceVec> = cluster.devices.iter().map(|d| d.limit()).collect();
    for v in g.vertices() {
        if limits.iter().all(|l| !v.area.fits_within(l)) {
            let resource = limits
                .iter()
                .filter_map(|l| v.area.first_excess(l))
                .next()
                .unwrap_or(Resource::Lut);
            return Err(Error::InfeasibleVertex {
                vertex: v.id.clone(),
                resource,
            });
        }
    }
    let k = cluster.device_count();
    let mut pair_cost = vec![vec![0.0; k]; k];
    for (a, row) in pair_cost.iter_mut().enumerate() {
        for (b, c) in row.iter_mut().enumerate() {
            *c = comm_cost(1, a, b, cluster)?;
        }
    }
    let mut merged: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for (e, (s, d)) in g.edges().iter().zip(g.endpoints()) {
        *merged.entry((s, d)).or_default() += e.width as u64;
    }
    let edges = merged.into_iter().map(|((a, b), w)| (a, b, w)).collect();
    Ok(IlpProblem {
        vertex_ids: g.vertices().iter().map(|v| v.id.clone()).collect(),
        areas: g.vertices().iter().map(|v| v.area).collect(),
        limits,
        edges,
        pair_cost,
        symmetry_breaking: true,
    })
}

fn infeasible_row(p: &IlpProblem, row: Option<(usize, Resource)>) -> Error {
    match row {
        Some((d, r)) => {
            let demand: u64 = p.areas.iter().map(|a| a.get(r)).sum();
            Error::Infeasible(format!(
                "capacity row device {d} {r}: total demand {demand} cannot be packed under limit {}",
                p.limits[d].get(r)
            ))
        }
        None => Error::Infeasible("no assignment satisfies the capacity rows".into()),
    }
}

/// Exact branch and bound. At the time limit the incumbent is returned
/// with `certified = false`.
pub fn solve(p: &IlpProblem, time_limit: Option<Duration>) -> Result<InterAssignment> {
    let budget = assign::Budget {
        time: time_limit,
        nodes: None,
    };
    match assign::solve(&p.to_assign(), budget) {
        AssignOutcome::Solved(s) => {
            Ok(p.assignment(&s.bins, s.certified, s.lower_bound, s.nodes, SolverKind::Internal))
        }
        AssignOutcome::Infeasible(row) => Err(infeasible_row(p, row)),
        AssignOutcome::Unknown => Err(Error::Infeasible(
            "time limit reached before any feasible assignment was found".into(),
        )),
    }
}

const EXTERNAL_SCRIPT: &str = r#"
import json, sys
import numpy as np
from scipy.optimize import milp, LinearConstraint, Bounds
from scipy.sparse import lil_matrix

p = json.load(sys.stdin)
n, k = p["n"], p["k"]
areas, limits, edges, cost = p["areas"], p["limits"], p["edges"], p["pair_cost"]
pairs = [(a, b) for a in range(k) for b in range(k) if cost[a][b] != 0]
nx = n * k
ny = len(edges) * len(pairs)
c = np.zeros(nx + ny)
rows = n + 5 * k + ny
A = lil_matrix((rows, nx + ny))
lo = np.full(rows, -np.inf)
hi = np.full(rows, np.inf)
for v in range(n):
    for d in range(k):
        A[v, v * k + d] = 1
    lo[v] = hi[v] = 1
r = n
for d in range(k):
    for res in range(5):
        for v in range(n):
            if areas[v][res]:
                A[r, v * k + d] = areas[v][res]
        hi[r] = limits[d][res]
        r += 1
y = nx
for (s, t, w) in edges:
    for (a, b) in pairs:
        c[y] = w * cost[a][b]
        A[r, s * k + a] = 1
        A[r, t * k + b] = 1
        A[r, y] = -1
        hi[r] = 1
        r += 1
        y += 1
integrality = np.concatenate([np.ones(nx), np.zeros(ny)])
ub = np.ones(nx + ny)
lb = np.zeros(nx + ny)
if p.get("pin_first"):
    ub[1:k] = 0
res = milp(c, constraints=LinearConstraint(A.tocsr(), lo, hi), integrality=integrality,
           bounds=Bounds(lb, ub), options={"time_limit": p["time_limit"], "disp": False})
out = {"status": int(res.status), "message": res.message}
if res.x is not None:
    x = res.x[:nx].reshape(n, k)
    out["devices"] = [int(np.argmax(x[v])) for v in range(n)]
    out["bound"] = float(res.mip_dual_bound)
json.dump(out, sys.stdout)
"#;

#[derive(Deserialize)]
struct ExternalOut {
    status: i32,
    message: String,
    devices: Option<Vec<usize>>,
    bound: Option<f64>,
}

/// Solve with the HiGHS MILP solver through `python3` and scipy.
/// The optimum is exact but ties are not broken lexicographically.
pub fn solve_external(p: &IlpProblem, time_limit: Option<Duration>) -> Result<InterAssignment> {
    let pin_first = p.symmetry_breaking
        && !p.vertex_ids.is_empty()
        && vertex_transitive(p);
    let input = serde_json::json!({
        "n": p.vertex_ids.len(),
        "k": p.num_devices(),
        "areas": p.areas.iter().map(|a| a.as_array()).collect::<Vec<_>>(),
        "limits": p.limits.iter().map(|a| a.as_array()).collect::<Vec<_>>(),
        "edges": p.edges,
        "pair_cost": p.pair_cost,
        "time_limit": time_limit.map(|d| d.as_secs_f64()).unwrap_or(1e9),
        "pin_first": pin_first,
    });
    let mut child = Command::new("python3")
        .arg("-c")
        .arg(EXTERNAL_SCRIPT)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Solver(format!("cannot start python3: {e}")))?;
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.to_string().as_bytes())?;
    let out = child.wait_with_output()?;
    if !out.status.success() {
        return Err(Error::Solver(String::from_utf8_lossy(&out.stderr).trim().to_string()));
    }
    let r: ExternalOut = serde_json::from_slice(&out.stdout)
        .map_err(|e| Error::Solver(format!("bad solver output: {e}")))?;
    match (r.status, r.devices) {
        (0, Some(d)) => {
            let obj = p.objective(&d);
            Ok(p.assignment(&d, true, obj, 0, SolverKind::External))
        }
        (1, Some(d)) => Ok(p.assignment(&d, false, r.bound.unwrap_or(0.0), 0, SolverKind::External)),
        (2, _) => Err(infeasible_row(p, None)),
        _ => Err(Error::Solver(r.message)),
    }
}

/// Every device can be mapped onto device 0 by a cost- and limit-preserving permutation.
fn vertex_transitive(p: &IlpProblem) -> bool {
    let ap = p.to_assign();
    let autos = assign::find_automorphisms(&ap);
    (1..p.num_devices()).all(|d| autos.iter().any(|perm| perm[d] == 0))
}

pub fn solve_with(p: &IlpProblem, time_limit: Option<Duration>, kind: SolverKind) -> Result<InterAssignment> {
    match kind {
        SolverKind::Internal => solve(p, time_limit),
        SolverKind::External => solve_external(p, time_limit),
    }
}

/// Enumerate every mapping of `g` onto `cluster` and return the cheapest
/// feasible one, lexicographically smallest among ties. Test oracle.
pub fn brute_force_oracle(g: &TaskGraph, cluster: &ClusterSpec) -> Result<InterAssignment> {
    let n = g.vertex_count();
    let k = cluster.device_count();
    if n > ORACLE_MAX_VERTICES || k > ORACLE_MAX_DEVICES {
        return Err(Error::TooLarge(format!("{n} vertices on {k} devices")));
    }
    let limits: Vec<ResourceVec> = cluster.devices.iter().map(|d| d.limit()).collect();
    let vertices = g.vertices();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut devices = vec![0usize; n];
    let total = (k as u64).pow(n as u32);
    for code in 0..total {
        let mut c = code;
        for i in (0..n).rev() {
            devices[i] = (c % k as u64) as usize;
            c /= k as u64;
        }
        let mut used = vec![ResourceVec::ZERO; k];
        for (v, &d) in vertices.iter().zip(&devices) {
            used[d] += v.area;
        }
        if used.iter().zip(&limits).any(|(u, l)| !u.fits_within(l)) {
            continue;
        }
        let mut cost = 0.0;
        for e in g.edges() {
            let a = devices[g.index_of(&e.src).unwrap()];
            let b = devices[g.index_of(&e.dst).unwrap()];
            cost += comm_cost(e.width, a, b, cluster)?;
        }
        if best.as_ref().is_none_or(|(bc, _)| assign::cost_lt(cost, *bc)) {
            best = Some((cost, devices.clone()));
        }
    }
    let (cost, devices) = best.ok_or_else(|| {
        Error::Infeasible("no mapping satisfies every device's thresholded capacity".into())
    })?;
    let mut per_device_area: BTreeMap<usize, ResourceVec> =
        (0..k).map(|d| (d, ResourceVec::ZERO)).collect();
    for (v, &d) in vertices.iter().zip(&devices) {
        *per_device_area.get_mut(&d).unwrap() += v.area;
    }
    Ok(InterAssignment {
        mapping: vertices.iter().map(|v| v.id.clone()).zip(devices).collect(),
        objective: cost,
        per_device_area,
        feasible: true,
        certified: true,
        lower_bound: cost,
        nodes: total,
        solver: SolverKind::Internal,
    })
}

/// Post-hoc capacity check of an assignment, independent of the solver.
pub fn check_assignment(g: &TaskGraph, cluster: &ClusterSpec, a: &InterAssignment) -> Result<()> {
    let k = cluster.device_count();
    let mut used = vec![ResourceVec::ZERO; k];
    for v in g.vertices() {
        let d = a.device_of(&v.id).ok_or_else(|| Error::Reference {
            kind: "vertex",
            id: v.id.clone(),
        })?;
        if d >= k {
            return Err(Error::Range { index: d, count: k });
        }
        used[d] += v.area;
    }
    for (d, u) in used.iter().enumerate() {
        if let Some(r) = u.first_excess(&cluster.devices[d].limit()) {
            return Err(Error::Infeasible(format!("device {d} exceeds its {r} threshold")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::TopologyKind;
    use crate::graph::{FifoEdge, TaskVertex, VertexKind};

    fn v(id: &str, lut: u64) -> TaskVertex {
        TaskVertex {
            id: id.into(),
            area: ResourceVec::new(lut, 0, 0, 0, 0),
            work: 1,
            kind: VertexKind::Compute,
            hbm_ports: vec![],
        }
    }

    fn e(id: &str, s: &str, d: &str, w: u32) -> FifoEdge {
        FifoEdge {
            id: id.into(),
            src: s.into(),
            dst: d.into(),
            width: w,
            depth: 2,
            tokens: 1,
        }
    }

    #[test]
    fn row_count_formula() {
        let g = TaskGraph::from_parts("t", vec![v("a", 1), v("b", 1)], vec![e("e", "a", "b", 8)]).unwrap();
        let c = ClusterSpec::u55c(TopologyKind::Chain, 2).unwrap();
        let p = formulate(&g, &c).unwrap();
        assert_eq!(p.num_x(), 4);
        assert_eq!(p.num_y(), 2);
        assert_eq!(p.num_rows(), 2 + 10 + 2);
    }

    #[test]
    fn oversized_vertex_named() {
        let g = TaskGraph::from_parts("t", vec![v("huge", 1_000_000)], vec![]).unwrap();
        let c = ClusterSpec::u55c(TopologyKind::Chain, 2).unwrap();
        match formulate(&g, &c) {
            Err(Error::InfeasibleVertex { vertex, resource }) => {
                assert_eq!(vertex, "huge");
                assert_eq!(resource, Resource::Lut);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_vertex_on_device_zero() {
        let g = TaskGraph::from_parts("t", vec![v("a", 1)], vec![]).unwrap();
        let c = ClusterSpec::u55c(TopologyKind::Ring, 4).unwrap();
        let a = solve(&formulate(&g, &c).unwrap(), None).unwrap();
        assert_eq!(a.mapping["a"], 0);
        assert_eq!(a.objective, 0.0);
        assert_eq!(brute_force_oracle(&g, &c).unwrap().mapping["a"], 0);
    }
}
