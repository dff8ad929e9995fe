mod common;

use std::collections::BTreeSet;

use common::*;
use dfsplit_core::benchgen::*;
use dfsplit_core::graph::*;
use dfsplit_core::resource::ResourceVec;
use dfsplit_core::Error;
use proptest::prelude::*;

fn generated() -> Vec<TaskGraph> {
    vec![
        gen_stencil(64, 15, 128).unwrap(),
        gen_pagerank(8).unwrap(),
        gen_knn_with(&KnnParams::default()).unwrap(),
        gen_systolic(13, 4).unwrap(),
    ]
}

#[test]
fn generated_graphs_round_trip() {
    for g in generated() {
        let text = g.to_json();
        let back = parse_task_graph(&text).unwrap();
        assert_eq!(back, g, "{}", g.name);
        assert_eq!(back.to_json(), text);
    }
}

#[test]
fn document_order_does_not_matter() {
    let g = gen_knn(1_000, 2, 5, 9).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
    for key in ["vertices", "edges"] {
        doc[key].as_array_mut().unwrap().reverse();
    }
    let back = parse_task_graph(&doc.to_string()).unwrap();
    assert_eq!(back, g);
}

#[test]
fn dangling_edge_is_a_reference_error() {
    let vs = vec![lut("PE_0", 1), lut("PE_1", 1)];
    let es = vec![edge("PE_0", "PE_1", 32), edge("PE_1", "PE_9", 32)];
    match TaskGraph::from_parts("g", vs, es) {
        Err(Error::Reference { id, .. }) => assert_eq!(id, "PE_9"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn duplicate_edge_id_is_rejected() {
    let vs = vec![lut("a", 1), lut("b", 1)];
    let es = vec![edge("a", "b", 32), edge("a", "b", 64)];
    assert!(matches!(TaskGraph::from_parts("g", vs, es), Err(Error::DuplicateId(_))));
}

#[test]
fn generated_pagerank_has_no_diagnostics() {
    assert_eq!(validate_graph(&gen_pagerank(4).unwrap()), vec![]);
}

#[test]
fn total_area_edge_cases() {
    let g = gen_systolic(13, 4).unwrap();
    assert_eq!(total_area::<&str>(&g, &[]).unwrap(), ResourceVec::ZERO);
    let one = g.vertex("r00_c00").unwrap().area;
    assert_eq!(total_area(&g, &["r00_c00"]).unwrap(), one);
    assert!(matches!(total_area(&g, &["nope"]), Err(Error::Reference { .. })));
}

#[test]
fn schema_errors_name_the_path() {
    let g = gen_stencil(64, 2, 128).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
    doc["edges"][1]["width"] = serde_json::json!("wide");
    match parse_task_graph(&doc.to_string()) {
        Err(Error::Parse { path, .. }) => assert!(path.starts_with("edges[1].width"), "{path}"),
        other => panic!("{other:?}"),
    }
}

/// Sinks no source reaches, by repeated relaxation over the edge list.
fn unreachable_sinks(g: &TaskGraph) -> BTreeSet<String> {
    let mut reached: BTreeSet<&str> = g
        .vertices()
        .iter()
        .filter(|v| !g.edges().iter().any(|e| e.dst == v.id))
        .map(|v| v.id.as_str())
        .collect();
    loop {
        let before = reached.len();
        for e in g.edges() {
            if reached.contains(e.src.as_str()) {
                reached.insert(&e.dst);
            }
        }
        if reached.len() == before {
            break;
        }
    }
    g.vertices()
        .iter()
        .filter(|v| !g.edges().iter().any(|e| e.src == v.id) && !reached.contains(v.id.as_str()))
        .map(|v| v.id.clone())
        .collect()
}

proptest! {
    #[test]
    fn total_area_is_additive(seed in any::<u64>(), n in 1usize..12, mask in any::<u32>()) {
        let g = random_dag(&mut rng(seed), n, 0.3, (0, 5000));
        let ids: Vec<&str> = g.vertices().iter().map(|v| v.id.as_str()).collect();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (i, id) in ids.iter().enumerate() {
            if mask >> i & 1 == 1 { a.push(*id) } else { b.push(*id) }
        }
        let sum = total_area(&g, &a).unwrap() + total_area(&g, &b).unwrap();
        prop_assert_eq!(total_area(&g, &ids).unwrap(), sum);
    }

    #[test]
    fn reachability_diagnostics_match_the_oracle(seed in any::<u64>(), n in 2usize..10, extra in 0usize..4) {
        use rand::Rng;
        let mut r = rng(seed);
        let base = random_dag(&mut r, n, 0.3, (1, 10));
        // Back edges can hide a sink from every source.
        let mut es = base.edges().to_vec();
        for k in 0..extra {
            let (i, j) = (r.gen_range(0..n), r.gen_range(0..n));
            if i < j {
                es.push(edge(&format!("v{j}"), &format!("v{i}"), 32));
                es.last_mut().unwrap().id = format!("back{k}");
            }
        }
        let g = TaskGraph::from_parts("r", base.vertices().to_vec(), es).unwrap();
        let diag: BTreeSet<String> = validate_graph(&g)
            .iter()
            .filter(|d| d.message.contains("reachable"))
            .map(|d| d.path.trim_start_matches("vertices[").trim_end_matches(']').to_string())
            .collect();
        let has_sink = g.vertices().iter().any(|v| !g.edges().iter().any(|e| e.src == v.id));
        if has_sink {
            prop_assert_eq!(diag, unreachable_sinks(&g));
        }
    }
}
