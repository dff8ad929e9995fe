mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use dfsplit_core::benchgen::{gen_knn_with, gen_pagerank, gen_stencil, KnnParams};
use dfsplit_core::cluster::{ClusterSpec, TopologyKind};
use dfsplit_core::comm::{recv_id, send_id};
use dfsplit_core::flow::{self, FlowOptions, Stage};
use dfsplit_core::graph::TaskGraph;
use dfsplit_core::sim::compare;
use dfsplit_core::Error;

/// Minimal DOT reader: statements, quoted ids and nested subgraphs.
#[derive(Debug, Default)]
struct Dot {
    clusters: Vec<String>,
    nodes: BTreeSet<String>,
    edges: Vec<(String, String, String)>,
}

fn unquote(s: &str) -> String {
    let s = s.trim();
    assert!(s.starts_with('"') && s.ends_with('"') && s.len() >= 2, "unquoted id {s}");
    s[1..s.len() - 1].replace("\\\"", "\"").replace("\\\\", "\\")
}

/// Split at the first ` -> ` outside quotes.
fn split_arrow(s: &str) -> Option<(&str, &str)> {
    let mut quoted = false;
    let b = s.as_bytes();
    for i in 0..b.len() {
        match b[i] {
            b'\\' if quoted => continue,
            b'"' if i == 0 || b[i - 1] != b'\\' => quoted = !quoted,
            b'-' if !quoted && s[i..].starts_with("-> ") => return Some((&s[..i], &s[i + 3..])),
            _ => {}
        }
    }
    None
}

fn parse_dot(text: &str) -> Dot {
    let mut dot = Dot::default();
    let mut depth = 0i32;
    let mut lines = text.lines();
    let head = lines.next().unwrap();
    assert!(head.starts_with("digraph \"") && head.ends_with(" {"), "{head}");
    depth += 1;
    for raw in lines {
        let l = raw.trim();
        if l == "}" {
            depth -= 1;
            assert!(depth >= 0);
            continue;
        }
        if let Some(name) = l.strip_prefix("subgraph ") {
            let name = name.strip_suffix(" {").expect("subgraph opens a block");
            assert!(name.starts_with("cluster_"));
            dot.clusters.push(name.to_string());
            depth += 1;
            continue;
        }
        let stmt = l.strip_suffix(';').unwrap_or_else(|| panic!("statement without `;`: {l}"));
        if stmt.starts_with("label=") || stmt.starts_with("compound=") || stmt.starts_with("node ") {
            continue;
        }
        if let Some((src, rest)) = split_arrow(stmt) {
            let (dst, attrs) = match rest.find(" [") {
                Some(i) if rest.ends_with(']') && !rest[..i].ends_with('\\') => (&rest[..i], &rest[i + 2..rest.len() - 1]),
                _ => (rest, ""),
            };
            dot.edges.push((unquote(src), unquote(dst), attrs.to_string()));
        } else {
            dot.nodes.insert(unquote(stmt));
        }
    }
    assert_eq!(depth, 0, "unbalanced braces");
    dot
}

fn knn_2dev() -> (TaskGraph, ClusterSpec) {
    let mut p = KnnParams::default();
    p.port_width = 512;
    p.buffer_kb = 128;
    (gen_knn_with(&p).unwrap(), ClusterSpec::u55c(TopologyKind::Chain, 2).unwrap())
}

#[test]
fn knn_dashed_edges_are_the_partition_cut() {
    let (g, c) = knn_2dev();
    let b = flow::run(&g, &c, &FlowOptions::default());
    b.result().unwrap();
    let dot = parse_dot(&b.dot().unwrap());
    let cut = b.assignment.as_ref().unwrap().cut_edges(&g);
    let dashed: BTreeSet<(String, String)> = dot
        .edges
        .iter()
        .filter(|(_, _, a)| a.contains("style=dashed"))
        .map(|(s, d, _)| (s.clone(), d.clone()))
        .collect();
    let expected: BTreeSet<(String, String)> = cut.iter().map(|e| (send_id(e), recv_id(e))).collect();
    assert!(!expected.is_empty());
    assert_eq!(dashed, expected);
    assert!(dot.clusters.contains(&"cluster_d0".to_string()));
    assert!(dot.clusters.contains(&"cluster_d1".to_string()));
    assert_eq!(dot.nodes.len(), b.net.as_ref().unwrap().graph.vertex_count());
    assert_eq!(dot.edges.len(), b.net.as_ref().unwrap().graph.edge_count());
}

#[test]
fn single_slot_device_renders_one_cluster_without_dashes() {
    let g = gen_stencil(64, 2, 128).unwrap();
    let mut c = ClusterSpec::u55c(TopologyKind::Chain, 1).unwrap();
    c.devices[0].slot_rows = 1;
    c.devices[0].slot_cols = 1;
    let b = flow::run(&g, &c, &FlowOptions::default());
    b.result().unwrap();
    let dot = parse_dot(&b.dot().unwrap());
    assert_eq!(dot.clusters, vec!["cluster_d0".to_string(), "cluster_d0_r0_c0".to_string()]);
    assert!(dot.edges.iter().all(|(_, _, a)| !a.contains("dashed")));
    // Nothing crosses a slot boundary, so nothing is pipelined.
    assert!(dot.edges.iter().all(|(_, _, a)| !a.contains("color=red")));
}

#[test]
fn pipelined_edges_are_labelled() {
    let g = gen_stencil(64, 15, 128).unwrap();
    let c = ClusterSpec::u55c(TopologyKind::Chain, 1).unwrap();
    let b = flow::run(&g, &c, &FlowOptions::default());
    b.result().unwrap();
    let d = b.design.as_ref().unwrap();
    let dot = parse_dot(&b.dot().unwrap());
    let mut red = 0;
    for (src, dst, attrs) in &dot.edges {
        let e = d.graph.edges().iter().find(|e| &e.src == src && &e.dst == dst).unwrap();
        let (cyc, extra) = (d.total_latency(&e.id), d.balancing_fifos.get(&e.id).copied().unwrap_or(0));
        assert_eq!(attrs.contains("color=red"), cyc > 0 || extra > 0, "{}", e.id);
        if cyc > 0 {
            assert!(attrs.contains(&format!("+{cyc} cyc")), "{}", e.id);
            red += 1;
        }
    }
    assert!(red > 0);
}

#[test]
fn odd_ids_are_escaped() {
    let vs = vec![lut("say \"hi\"", 1), lut("back\\slash", 1)];
    let es = vec![edge("say \"hi\"", "back\\slash", 32)];
    let g = TaskGraph::from_parts("q\"uote", vs, es).unwrap();
    let c = ClusterSpec::u55c(TopologyKind::Chain, 1).unwrap();
    let b = flow::run(&g, &c, &FlowOptions::default());
    b.result().unwrap();
    let dot = parse_dot(&b.dot().unwrap());
    assert!(dot.nodes.contains("say \"hi\""));
    assert_eq!(dot.edges[0].1, "back\\slash");
}

fn bundle_bytes(g: &TaskGraph, c: &ClusterSpec, parallel: bool) -> Vec<(&'static str, String)> {
    flow::run(g, c, &FlowOptions::default().parallel(parallel)).files()
}

#[test]
fn bundles_do_not_depend_on_parallelism() {
    let (g, c) = knn_2dev();
    let a = bundle_bytes(&g, &c, true);
    assert_eq!(a.len(), 6);
    assert_eq!(a, bundle_bytes(&g, &c, false));
    assert_eq!(a, bundle_bytes(&g, &c, true));
}

#[test]
fn failed_runs_keep_earlier_artifacts() {
    let (g, c) = knn_2dev();
    let mut opts = FlowOptions::default();
    opts.pipeline.stages_per_crossing = 500;
    let g = {
        // A feedback edge turns the tree into a cycle the extra registers can starve.
        let mut es = g.edges().to_vec();
        let mut fb = edge("green", "blue_000", 64);
        fb.depth = 2;
        es.push(fb);
        TaskGraph::from_parts(g.name.clone(), g.vertices().to_vec(), es).unwrap()
    };
    let b = flow::run(&g, &c, &opts);
    let (stage, e) = b.failed.as_ref().expect("deep pipelining fails");
    assert_eq!(*stage, Stage::Pipeline);
    assert!(matches!(e, Error::DeadlockRisk { .. }));
    let names: Vec<&str> = b.files().iter().map(|(n, _)| *n).collect();
    assert_eq!(names, vec!["assignment.json", "floorplan.json", "hbm.json", "design.dot", "FAILED_AT"]);
}

#[test]
fn link_bound_split_gains_nothing() {
    // Big transfers and trivial compute: the network is the bottleneck.
    let g = chain_graph(&["s", "a", "b", "t"], 10, 1_000_000);
    let opts = FlowOptions::default();
    let one = flow::run(&g, &ClusterSpec::u55c(TopologyKind::Chain, 1).unwrap(), &opts);
    let two_c = ClusterSpec::u55c(TopologyKind::Chain, 2).unwrap();
    let net = {
        let mut a = one.assignment.clone().unwrap();
        for id in ["b", "t"] {
            a.mapping.insert(id.into(), 1);
        }
        a
    };
    let placed = flow::place(&g, &net, &two_c, &opts).unwrap();
    let s = flow::floorplan(&placed, &two_c, &opts).unwrap();
    let h = flow::bind(&placed, &s, &two_c, &opts).unwrap();
    let d = flow::pipelined(&placed, &s, &h, &two_c, &opts).unwrap();
    let two = dfsplit_core::sim::simulate(&d, &two_c, &opts.sim).unwrap();
    let sp = compare(one.report.as_ref().unwrap(), &two).unwrap();
    assert!(sp.speedup < 1.2, "{sp:?}");
    assert!(sp.candidate_shares.1 > sp.candidate_shares.0);
}

#[test]
fn pagerank_bundle_round_trips_through_its_files() {
    let g = gen_pagerank(4).unwrap();
    let c = ClusterSpec::u55c(TopologyKind::Chain, 1).unwrap();
    let b = flow::run(&g, &c, &FlowOptions::default());
    b.result().unwrap();
    let files: BTreeMap<&str, String> = b.files().into_iter().collect();
    let a = dfsplit_core::inter::InterAssignment::from_json(&files["assignment.json"]).unwrap();
    assert_eq!(a.to_json(), files["assignment.json"]);
    let hbm = flow::hbm_from_json(&files["hbm.json"]).unwrap();
    assert_eq!(flow::hbm_json(&hbm), files["hbm.json"]);
    let r = dfsplit_core::sim::SimReport::from_json(&files["report.json"]).unwrap();
    assert_eq!(r.to_json(), files["report.json"]);
}
