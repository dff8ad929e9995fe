mod common;

use std::collections::BTreeSet;

use common::*;
use dfsplit_core::benchgen::{gen_knn, gen_pagerank};
use dfsplit_core::graph::{TaskGraph, VertexKind};
use dfsplit_core::resource::ResourceVec;
use dfsplit_core::sim::{check_latency_insensitivity, compare, simulate, SimConfig, SimReport};
use dfsplit_core::Error;
use proptest::prelude::*;

const F: f64 = 300e6;

fn run(g: &TaskGraph) -> SimReport {
    let c = single_u55c();
    simulate(&pipelined(g, &one_slot(g), &c), &c, &SimConfig::default()).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-9)
}

#[test]
fn single_token_edge_takes_both_works() {
    let g = chain_graph(&["src", "snk"], 100, 1);
    let r = run(&g);
    assert!(close(r.total_time_s, 200.0 / F), "{}", r.total_time_s);
    assert_eq!(r.sink_tokens["snk"], 1);
}

#[test]
fn extra_edge_latency_shifts_time_only() {
    let g = chain_graph(&["src", "snk"], 100, 1);
    let c = single_u55c();
    let d = pipelined(&g, &one_slot(&g), &c);
    let base = simulate(&d, &c, &SimConfig::default()).unwrap();
    let mut slow = d.clone();
    slow.edge_latency.insert("src->snk".into(), 5);
    let r = simulate(&slow, &c, &SimConfig::default()).unwrap();
    assert_eq!(r.output_digest, base.output_digest);
    assert!(close(r.total_time_s - base.total_time_s, 5.0 / F));
}

#[test]
fn streaming_chain_overlaps_stages() {
    // 64 packets, 1 cycle each per stage: fill the pipe once then stream.
    let g = chain_graph(&["a", "b", "c"], 64, 64);
    let r = run(&g);
    assert!(close(r.total_time_s, 66.0 / F), "{}", r.total_time_s * F);
    assert!(close(r.initiation_interval_s, 1.0 / F));
}

#[test]
fn identical_reports_compare_to_one() {
    let r = run(&diamond(16));
    let s = compare(&r, &r).unwrap();
    assert_eq!(s.speedup, 1.0);
}

#[test]
fn unequal_workloads_refuse_comparison() {
    let a = run(&diamond(16));
    let b = run(&diamond(8));
    assert!(matches!(compare(&a, &b), Err(Error::WorkloadMismatch(_))));
}

#[test]
fn diamond_survives_eight_perturbations() {
    let g = diamond(32);
    let c = single_u55c();
    let d = pipelined(&g, &one_slot(&g), &c);
    let v = check_latency_insensitivity(&d, &c, &SimConfig::default(), 8).unwrap();
    assert_eq!(v.trials, 8);
}

#[test]
fn knn_survives_eight_perturbations() {
    let g = gen_knn(20_000, 2, 10, 9).unwrap();
    let c = single_u55c();
    let d = pipelined(&g, &one_slot(&g), &c);
    check_latency_insensitivity(&d, &c, &SimConfig::default(), 8).unwrap();
}

#[test]
fn arrival_order_merge_is_caught() {
    let g = diamond(32);
    let c = single_u55c();
    let d = pipelined(&g, &one_slot(&g), &c);
    let cfg = SimConfig {
        nondeterministic_merge: BTreeSet::from(["t".to_string()]),
        ..SimConfig::default()
    };
    match check_latency_insensitivity(&d, &c, &cfg, 8) {
        Err(Error::DigestMismatch { perturbation }) => assert_eq!(perturbation.len(), g.edge_count()),
        other => panic!("expected a digest mismatch, got {other:?}"),
    }
}

#[test]
fn pagerank_cycle_completes() {
    let g = gen_pagerank(4).unwrap();
    let r = run(&g);
    assert!(r.total_time_s > 0.0);
    assert!(r.total_time_s >= r.lower_bound_s);
}

#[test]
fn starved_merge_loop_deadlocks() {
    // The merge fires once per input packet but only one arrives from outside.
    let vs = vec![
        vertex("s", ResourceVec::ZERO, VertexKind::Source),
        lut("m", 0),
        lut("x", 0),
    ];
    let mut es = vec![edge("s", "m", 32), edge("m", "x", 32), edge("x", "m", 32)];
    es[0].tokens = 1;
    let g = TaskGraph::from_parts("loop", vs, es).unwrap();
    let c = single_u55c();
    let d = pipelined(&g, &one_slot(&g), &c);
    let cfg = SimConfig {
        nondeterministic_merge: BTreeSet::from(["m".to_string()]),
        ..SimConfig::default()
    };
    match simulate(&d, &c, &cfg) {
        Err(Error::Deadlock { waiting, .. }) => assert_eq!(waiting, ["m", "x"]),
        other => panic!("expected deadlock, got {other:?}"),
    }
}

#[test]
fn hbm_channel_bounds_time() {
    let mut v = with_ports(vertex("load", ResourceVec::ZERO, VertexKind::Source), &[1 << 30]);
    v.work = 1;
    let mut s = vertex("snk", ResourceVec::ZERO, VertexKind::Sink);
    s.work = 1;
    let g = TaskGraph::from_parts("mem", vec![v, s], vec![edge("load", "snk", 64)]).unwrap();
    let c = single_u55c();
    let r = run(&g);
    let channel_time = (1u64 << 30) as f64 * 8.0 / c.hbm_bw_per_channel(0);
    assert!(r.total_time_s >= channel_time);
    assert!(close(r.lower_bound_s, channel_time) || r.lower_bound_s > channel_time);
    assert_eq!(r.hbm_channels.len(), 1);
    assert_eq!(r.hbm_channels[0].bytes, 1 << 30);
}

#[test]
fn trace_lines_are_json() {
    let g = chain_graph(&["a", "b"], 4, 4);
    let c = single_u55c();
    let d = pipelined(&g, &one_slot(&g), &c);
    let cfg = SimConfig {
        trace: true,
        ..SimConfig::default()
    };
    let r = simulate(&d, &c, &cfg).unwrap();
    let lines = r.trace_lines();
    assert_eq!(lines.lines().count(), 16);
    for l in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert!(v["t"].is_number() && v["subject"].is_string());
    }
}

#[test]
fn report_round_trips() {
    let r = run(&diamond(8));
    assert_eq!(SimReport::from_json(&r.to_json()).unwrap(), r);
}

fn small_dag(seed: u64) -> TaskGraph {
    let mut r = rng(seed);
    let g = random_dag(&mut r, 8, 0.35, (1, 10));
    let mut vs = g.vertices().to_vec();
    let mut es = g.edges().to_vec();
    for (i, v) in vs.iter_mut().enumerate() {
        v.work = 10 + (seed * 31 + i as u64 * 17) % 200;
    }
    for (i, e) in es.iter_mut().enumerate() {
        e.tokens = 1 + (seed * 13 + i as u64 * 7) % 150;
        e.depth = 2 + (i as u32 % 3) * 4;
    }
    TaskGraph::from_parts("dag", vs, es).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conservation_and_bounds(seed in 0u64..10_000) {
        let g = small_dag(seed);
        let r = run(&g);
        for v in g.vertices() {
            let st = &r.vertices[&v.id];
            let drain = st.busy_cycles != st.work_per_firing * st.firings;
            prop_assert!(!drain || st.busy_cycles == st.work_per_firing * (st.firings - 1));
        }
        let srcs: BTreeSet<&str> = g.edges().iter().map(|e| e.src.as_str()).collect();
        let produced: u64 = g.edges().iter().filter(|e| !srcs.contains(e.dst.as_str())).map(|e| e.tokens).sum();
        prop_assert_eq!(r.total_sink_tokens(), produced);
        prop_assert!(r.total_time_s >= r.lower_bound_s * (1.0 - 1e-12));
        prop_assert!(r.total_time_s >= r.critical_path_s * (1.0 - 1e-12));
    }

    #[test]
    fn latency_never_speeds_up(seed in 0u64..10_000, pick in 0usize..64, extra in 1u64..40) {
        let g = small_dag(seed);
        prop_assume!(g.edge_count() > 0);
        let c = single_u55c();
        let d = pipelined(&g, &one_slot(&g), &c);
        let base = simulate(&d, &c, &SimConfig::default()).unwrap();
        let mut slow = d.clone();
        let id = g.edges()[pick % g.edge_count()].id.clone();
        *slow.edge_latency.entry(id).or_insert(0) += extra;
        let r = simulate(&slow, &c, &SimConfig::default()).unwrap();
        prop_assert!(r.total_time_s >= base.total_time_s * (1.0 - 1e-12));
        prop_assert_eq!(r.output_digest, base.output_digest);
    }

    #[test]
    fn repeat_runs_are_identical(seed in 0u64..10_000) {
        let g = small_dag(seed);
        prop_assert_eq!(run(&g).to_json(), run(&g).to_json());
    }
}
