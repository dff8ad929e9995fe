//! Dataflow task graphs: compute vertices connected by FIFO channels.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::canon;
use crate::error::{Error, Result};
use crate::resource::ResourceVec;

pub const DEFAULT_FIFO_DEPTH: u32 = 2;
pub const HBM_PORT_WIDTHS: [u32; 5] = [32, 64, 128, 256, 512];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexKind {
    Compute,
    Source,
    Sink,
    NetSend,
    NetRecv,
}

impl VertexKind {
    pub fn is_net(self) -> bool {
        matches!(self, VertexKind::NetSend | VertexKind::NetRecv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortDir {
    Read,
    Write,
}

/// External-memory port of a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HbmPort {
    pub dir: PortDir,
    /// Port width in bits.
    pub width: u32,
    /// Estimated bytes moved through the port in one execution.
    pub volume: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskVertex {
    pub id: String,
    pub area: ResourceVec,
    /// Compute cycles for one complete execution of the task.
    pub work: u64,
    pub kind: VertexKind,
    #[serde(default)]
    pub hbm_ports: Vec<HbmPort>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FifoEdge {
    pub id: String,
    pub src: String,
    pub dst: String,
    /// Bits per token.
    pub width: u32,
    #[serde(default = "default_depth")]
    pub depth: u32,
    /// Tokens moved through the FIFO in one execution.
    pub tokens: u64,
}

fn default_depth() -> u32 {
    DEFAULT_FIFO_DEPTH
}

impl FifoEdge {
    pub fn volume_bytes(&self) -> u64 {
        self.tokens * self.width as u64 / 8
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    name: String,
    vertices: Vec<TaskVertex>,
    edges: Vec<FifoEdge>,
}

/// A task graph. Vertices and edges are kept sorted by id, so two graphs built
/// from differently ordered documents compare equal.
#[derive(Debug, Clone)]
pub struct TaskGraph {
    pub name: String,
    vertices: Vec<TaskVertex>,
    edges: Vec<FifoEdge>,
    index: HashMap<String, usize>,
}

impl PartialEq for TaskGraph {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.vertices == other.vertices && self.edges == other.edges
    }
}

/// One violated graph invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl TaskGraph {
    /// Build a graph, checking only id uniqueness and edge references.
    /// Remaining invariants are reported by [`validate_graph`].
    pub fn from_parts(
        name: impl Into<String>,
        mut vertices: Vec<TaskVertex>,
        mut edges: Vec<FifoEdge>,
    ) -> Result<Self> {
        vertices.sort_by(|a, b| a.id.cmp(&b.id));
        edges.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index = HashMap::with_capacity(vertices.len());
        for (i, v) in vertices.iter().enumerate() {
            if index.insert(v.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(v.id.clone()));
            }
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
            for end in [&e.src, &e.dst] {
                if !index.contains_key(end) {
                    return Err(Error::Reference {
                        kind: "vertex",
                        id: end.clone(),
                    });
                }
            }
        }
        Ok(TaskGraph {
            name: name.into(),
            vertices,
            edges,
            index,
        })
    }

    pub fn vertices(&self) -> &[TaskVertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[FifoEdge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn vertex(&self, id: &str) -> Option<&TaskVertex> {
        self.index_of(id).map(|i| &self.vertices[i])
    }

    pub fn edge(&self, id: &str) -> Option<&FifoEdge> {
        self.edges
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.edges[i])
    }

    /// Edge endpoints as vertex indices, in edge order.
    pub fn endpoints(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .map(|e| (self.index[&e.src], self.index[&e.dst]))
            .collect()
    }

    pub fn adjacency(&self) -> Adjacency {
        let n = self.vertices.len();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for (ei, (s, d)) in self.endpoints().into_iter().enumerate() {
            out_edges[s].push(ei);
            in_edges[d].push(ei);
        }
        Adjacency {
            out_edges,
            in_edges,
        }
    }

    /// Source vertices: declared sources plus vertices with no inputs.
    pub fn sources(&self) -> Vec<usize> {
        let adj = self.adjacency();
        (0..self.vertices.len())
            .filter(|&i| self.vertices[i].kind == VertexKind::Source || adj.in_edges[i].is_empty())
            .collect()
    }

    /// Sink vertices: declared sinks plus vertices with no outputs.
    pub fn sinks(&self) -> Vec<usize> {
        let adj = self.adjacency();
        (0..self.vertices.len())
            .filter(|&i| self.vertices[i].kind == VertexKind::Sink || adj.out_edges[i].is_empty())
            .collect()
    }

    pub fn to_json(&self) -> String {
        canon::to_string(&GraphDoc {
            name: self.name.clone(),
            vertices: self.vertices.clone(),
            edges: self.edges.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Adjacency {
    pub out_edges: Vec<Vec<usize>>,
    pub in_edges: Vec<Vec<usize>>,
}

/// Parse and validate a canonical-JSON task graph.
pub fn parse_task_graph(text: &str) -> Result<TaskGraph> {
    let doc: GraphDoc = canon::from_str(text)?;
    let g = TaskGraph::from_parts(doc.name, doc.vertices, doc.edges)?;
    if let Some(d) = validate_graph(&g).into_iter().next() {
        return Err(Error::Parse {
            path: d.path,
            message: d.message,
        });
    }
    Ok(g)
}

/// Report every violated invariant; empty when the graph is well formed.
pub fn validate_graph(g: &TaskGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for v in g.vertices() {
        for (pi, p) in v.hbm_ports.iter().enumerate() {
            if !HBM_PORT_WIDTHS.contains(&p.width) {
                out.push(Diagnostic {
                    path: format!("vertices[{}].hbm_ports[{pi}].width", v.id),
                    message: format!("HBM port width {} not in {:?}", p.width, HBM_PORT_WIDTHS),
                });
            }
        }
    }
    for e in g.edges() {
        let path = format!("edges[{}]", e.id);
        if e.width == 0 {
            out.push(Diagnostic {
                path: format!("{path}.width"),
                message: "edge width must be positive".into(),
            });
        }
        if e.depth == 0 {
            out.push(Diagnostic {
                path: format!("{path}.depth"),
                message: "FIFO depth must be at least 1".into(),
            });
        }
        if e.src == e.dst {
            out.push(Diagnostic {
                path: format!("{path}.dst"),
                message: format!("self-loop on `{}`", e.src),
            });
        }
    }

    if g.vertex_count() == 0 {
        out.push(Diagnostic {
            path: "vertices".into(),
            message: "graph has no vertices".into(),
        });
        return out;
    }
    let sinks = g.sinks();
    if sinks.is_empty() {
        out.push(Diagnostic {
            path: "vertices".into(),
            message: "graph has no sink".into(),
        });
        return out;
    }
    let adj = g.adjacency();
    let ends = g.endpoints();
    let mut reached = vec![false; g.vertex_count()];
    let mut queue: VecDeque<usize> = g.sources().into_iter().collect();
    for &s in &queue {
        reached[s] = true;
    }
    while let Some(v) = queue.pop_front() {
        for &e in &adj.out_edges[v] {
            let d = ends[e].1;
            if !reached[d] {
                reached[d] = true;
                queue.push_back(d);
            }
        }
    }
    for s in sinks {
        if !reached[s] {
            out.push(Diagnostic {
                path: format!("vertices[{}]", g.vertices()[s].id),
                message: "sink is not reachable from any source".into(),
            });
        }
    }
    out
}

/// Component-wise sum of the areas of `subset`.
pub fn total_area<S: AsRef<str>>(g: &TaskGraph, subset: &[S]) -> Result<ResourceVec> {
    let mut acc = ResourceVec::ZERO;
    for id in subset {
        let v = g.vertex(id.as_ref()).ok_or_else(|| Error::Reference {
            kind: "vertex",
            id: id.as_ref().to_string(),
        })?;
        acc += v.area;
    }
    Ok(acc)
}

/// Count vertices by kind, handy in reports and tests.
pub fn kind_histogram(g: &TaskGraph) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for v in g.vertices() {
        let k = serde_json::to_value(v.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        *m.entry(k).or_insert(0) += 1;
    }
    m
}
