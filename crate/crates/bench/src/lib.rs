//! Workloads shared by the benchmarks.

use dfsplit_core::benchgen::{gen_knn_with, gen_pagerank, gen_stencil, gen_systolic, KnnParams};
use dfsplit_core::cluster::{ClusterSpec, TopologyKind};
use dfsplit_core::graph::TaskGraph;

/// Named graph and cluster pairs, small enough to iterate on.
pub fn workloads() -> Vec<(&'static str, TaskGraph, ClusterSpec)> {
    let mut knn = KnnParams::default();
    knn.port_width = 512;
    knn.buffer_kb = 128;
    let chain = |n| ClusterSpec::u55c(TopologyKind::Chain, n).unwrap();
    vec![
        ("stencil_15x1", gen_stencil(64, 15, 128).unwrap(), chain(1)),
        ("pagerank_4x1", gen_pagerank(4).unwrap(), chain(1)),
        ("knn_2dev", gen_knn_with(&knn).unwrap(), chain(2)),
        ("cnn_13x4x1", gen_systolic(13, 4).unwrap(), chain(1)),
    ]
}
