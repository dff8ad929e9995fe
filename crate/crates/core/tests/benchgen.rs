use dfsplit_core::benchgen::*;
use dfsplit_core::graph::{validate_graph, PortDir, TaskGraph, VertexKind};
use proptest::prelude::*;

// U55C resources: LUT, FF, BRAM, DSP, URAM.
const U55C: [f64; 5] = [1_146_240.0, 2_292_480.0, 1776.0, 8376.0, 960.0];

/// (iterations, ops/byte, inter-stage MB).
const STENCIL_ROWS: [(u32, u64, &str); 4] = [
    (64, 208, "144.22"),
    (128, 416, "288.43"),
    (256, 832, "576.86"),
    (512, 1664, "1153.73"),
];

/// (cols, MB crossing the cut of a 13-row grid).
const CNN_VOLUMES: [(usize, &str); 5] = [(4, "2.14"), (8, "4.28"), (12, "6.42"), (16, "8.57"), (20, "10.71")];

/// (cols, LUT/FF/BRAM/DSP percent of one U55C).
const CNN_PERCENT: [(usize, [f64; 4]); 5] = [
    (4, [20.4, 12.1, 14.2, 25.2]),
    (8, [38.3, 23.5, 23.7, 49.0]),
    (12, [56.1, 34.3, 32.7, 80.1]),
    (16, [74.0, 45.7, 42.3, 97.6]),
    (20, [91.9, 57.0, 52.1, 123.7]),
];

fn mb(bytes: u64) -> String {
    format!("{:.2}", bytes as f64 / 1e6)
}

fn hbm_bytes(g: &TaskGraph) -> u64 {
    g.vertices().iter().flat_map(|v| &v.hbm_ports).map(|p| p.volume).sum()
}

#[test]
fn stencil_rows_match_the_published_table() {
    for (it, ops_per_byte, volume) in STENCIL_ROWS {
        let g = gen_stencil(it, 15, 128).unwrap();
        let cycles: u64 = g
            .vertices()
            .iter()
            .filter(|v| v.kind == VertexKind::Compute)
            .map(|v| v.work)
            .sum();
        let ops = cycles * STENCIL_OPS_PER_CYCLE;
        assert_eq!(ops % hbm_bytes(&g), 0, "{it}");
        assert_eq!(ops / hbm_bytes(&g), ops_per_byte, "{it}");
        // Any single cut between two PEs carries the same stream.
        for e in g.edges().iter().filter(|e| e.src.starts_with("pe_") && e.dst.starts_with("pe_")) {
            assert_eq!(mb(e.volume_bytes()), volume, "{it} {}", e.id);
        }
    }
}

#[test]
fn stencil_volume_does_not_depend_on_width_or_pe_count() {
    let v = |pes, w| gen_stencil(512, pes, w).unwrap().edge("pe_000->pe_001").unwrap().volume_bytes();
    assert_eq!(v(2, 128), v(15, 128));
    assert_eq!(v(2, 128), v(2, 512));
}

/// Grid row of a CNN vertex; the global load/store vertices have none.
fn grid_row(id: &str) -> Option<usize> {
    id.strip_prefix('r')?.get(..2)?.parse().ok()
}

/// Bytes between PE-grid vertices above and below `cut`.
fn cnn_cut_bytes(g: &TaskGraph, cut: usize) -> u64 {
    g.edges()
        .iter()
        .filter_map(|e| match (grid_row(&e.src), grid_row(&e.dst)) {
            (Some(a), Some(b)) if (a < cut) != (b < cut) => Some(e.volume_bytes()),
            _ => None,
        })
        .sum()
}

#[test]
fn cnn_cut_volumes_match_the_published_table() {
    for (cols, volume) in CNN_VOLUMES {
        let g = gen_systolic(13, cols).unwrap();
        assert_eq!(mb(cnn_cut_bytes(&g, cnn_cut_row(13))), volume, "13x{cols}");
    }
}

#[test]
fn cnn_utilization_is_within_one_point() {
    for (cols, pct) in CNN_PERCENT {
        let g = gen_systolic(13, cols).unwrap();
        let mut total = [0u64; 5];
        for v in g.vertices() {
            for (t, x) in total.iter_mut().zip(v.area.as_array()) {
                *t += x;
            }
        }
        for r in 0..4 {
            let got = total[r] as f64 / U55C[r] * 100.0;
            assert!((got - pct[r]).abs() <= 1.0, "13x{cols} resource {r}: {got:.2} vs {}", pct[r]);
        }
        assert_eq!(total[4], 0);
    }
}

#[test]
fn largest_cnn_grid_has_493_modules() {
    assert_eq!(gen_systolic(13, 20).unwrap().vertex_count(), 493);
}

#[test]
fn knn_defaults_give_27_modules() {
    let g = gen_knn_with(&KnnParams::default()).unwrap();
    assert_eq!(g.vertex_count(), 27);
    assert_eq!(g.vertices().iter().filter(|v| v.id.starts_with("blue")).count(), 18);
}

fn into_green(g: &TaskGraph) -> u64 {
    g.edges().iter().filter(|e| e.dst == "green").map(|e| e.volume_bytes()).sum()
}

#[test]
fn knn_partition_volume_is_constant_in_n() {
    let a = gen_knn(4_000_000, 2, 10, 18).unwrap();
    let b = gen_knn(8_000_000, 2, 10, 18).unwrap();
    assert_eq!(into_green(&a), into_green(&b));
    // The distance reads do double.
    let result_bytes = 10 * 8;
    assert_eq!(2 * (hbm_bytes(&a) - result_bytes), hbm_bytes(&b) - result_bytes);
}

#[test]
fn knn_single_distance_module_is_valid() {
    let g = gen_knn(1_000, 2, 10, 1).unwrap();
    assert_eq!(validate_graph(&g), vec![]);
    assert_eq!(g.sources().len(), 1);
    assert_eq!(g.sinks().len(), 1);
}

#[test]
fn pagerank_volumes_are_the_same_for_any_pe_count() {
    let ds = dataset("cit-Patents").unwrap();
    let (rank, update) = pagerank_volumes(ds);
    for pes in [1, 4, 8, 16] {
        let g = gen_pagerank(pes).unwrap();
        let router: u64 = g.edges().iter().filter(|e| e.src == "router").map(|e| e.volume_bytes()).sum();
        let acc: u64 = g.edges().iter().filter(|e| e.dst == "acc").map(|e| e.volume_bytes()).sum();
        assert!(router >= rank && router < rank + 64 * pes as u64, "{pes}");
        assert!(acc >= update && acc < update + 64 * pes as u64, "{pes}");
    }
}

#[test]
fn pagerank_without_feedback_is_acyclic() {
    let mut p = PagerankParams::new(4);
    p.feedback = false;
    let g = gen_pagerank_with(&p).unwrap();
    assert!(g.edges().iter().all(|e| e.dst != "router"));
    assert_eq!(gen_pagerank(4).unwrap().edge_count(), g.edge_count() + 1);
}

#[test]
fn pagerank_reads_every_edge_record() {
    for pes in [2, 16] {
        let g = gen_pagerank(pes).unwrap();
        let reads: u64 = g
            .vertices()
            .iter()
            .filter(|v| v.id.starts_with("pe_"))
            .flat_map(|v| &v.hbm_ports)
            .filter(|p| p.dir == PortDir::Read)
            .map(|p| p.volume)
            .sum();
        let edges = dataset("cit-Patents").unwrap().edges;
        assert!(reads >= edges * PAGERANK_EDGE_BYTES);
    }
}

#[test]
fn unknown_dataset_is_rejected() {
    assert!(dataset("nope").is_err());
    assert_eq!(DATASETS.len(), 5);
}

#[test]
fn bad_parameters_are_rejected() {
    assert!(gen_stencil(0, 4, 128).is_err());
    assert!(gen_stencil(64, 0, 128).is_err());
    assert!(gen_stencil(64, 4, 96).is_err());
    assert!(gen_knn(100, 0, 10, 4).is_err());
    assert!(gen_knn(100, 2, 0, 4).is_err());
    assert!(gen_knn(100, 2, 10, 0).is_err());
    assert!(gen_systolic(4, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_graphs_validate(
        it in 1u32..600, pes in 1usize..20, w in 0usize..5,
        pr in 1usize..17, fb in any::<bool>(),
        blues in 1usize..90, k in 1u64..50,
        rows in 1usize..16, cols in 1usize..24,
    ) {
        let width = [32, 64, 128, 256, 512][w];
        let mut p = PagerankParams::new(pr);
        p.feedback = fb;
        for g in [
            gen_stencil(it, pes, width).unwrap(),
            gen_pagerank_with(&p).unwrap(),
            gen_knn(10_000, 3, k, blues).unwrap(),
            gen_systolic(rows, cols).unwrap(),
        ] {
            prop_assert_eq!(validate_graph(&g), vec![], "{}", g.name);
        }
        prop_assert_eq!(gen_systolic(rows, cols).unwrap().vertex_count(), cnn_vertex_count(rows, cols));
    }

    #[test]
    fn cnn_cut_volume_is_linear_in_columns(cols in 1usize..30) {
        let one = cnn_cut_bytes(&gen_systolic(13, 1).unwrap(), cnn_cut_row(13));
        prop_assert_eq!(cnn_cut_bytes(&gen_systolic(13, cols).unwrap(), cnn_cut_row(13)), one * cols as u64);
    }
}
