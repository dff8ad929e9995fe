//! Graphviz rendering: one cluster per device, one sub-cluster per slot,
//! red pipelined edges and dashed network hops.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::comm::NetDesign;
use crate::floorplan::{SlotAssignment, SlotRef};
use crate::pipeliner::PipelinedDesign;

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' | '\\' => {
                out.push('\\');
                out.push(c);
            }
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

/// DOT text for a floorplanned design. Latency labels need `design`.
pub fn export_dot(net: &NetDesign, s: &SlotAssignment, design: Option<&PipelinedDesign>) -> String {
    let g = &net.graph;
    let mut by_slot: BTreeMap<SlotRef, Vec<&str>> = BTreeMap::new();
    let mut loose = Vec::new();
    for v in g.vertices() {
        match s.mapping.get(&v.id) {
            Some(&slot) => by_slot.entry(slot).or_default().push(&v.id),
            None => loose.push(v.id.as_str()),
        }
    }
    let mut out = String::new();
    writeln!(out, "digraph {} {{", quote(&g.name)).unwrap();
    writeln!(out, "  compound=true;").unwrap();
    writeln!(out, "  node [shape=box];").unwrap();
    let mut device = None;
    for (slot, ids) in &by_slot {
        if device != Some(slot.device) {
            if device.is_some() {
                writeln!(out, "  }}").unwrap();
            }
            device = Some(slot.device);
            writeln!(out, "  subgraph cluster_d{} {{", slot.device).unwrap();
            writeln!(out, "    label={};", quote(&format!("device {}", slot.device))).unwrap();
        }
        writeln!(out, "    subgraph cluster_d{}_r{}_c{} {{", slot.device, slot.row, slot.col).unwrap();
        writeln!(out, "      label={};", quote(&format!("slot ({}, {})", slot.row, slot.col))).unwrap();
        for id in ids {
            writeln!(out, "      {};", quote(id)).unwrap();
        }
        writeln!(out, "    }}").unwrap();
    }
    if device.is_some() {
        writeln!(out, "  }}").unwrap();
    }
    for id in loose {
        writeln!(out, "  {};", quote(id)).unwrap();
    }
    let dev = |id: &str| net.placement.get(id).copied();
    for e in g.edges() {
        let mut attrs = Vec::new();
        if dev(&e.src) != dev(&e.dst) {
            attrs.push("style=dashed".to_string());
        }
        if let Some(d) = design {
            let (cyc, depth) = (d.total_latency(&e.id), d.balancing_fifos.get(&e.id).copied().unwrap_or(0));
            if cyc > 0 || depth > 0 {
                attrs.push("color=red".to_string());
                attrs.push(format!("label={}", quote(&format!("+{cyc} cyc / +{depth} depth"))));
            }
        }
        let attrs = if attrs.is_empty() {
            String::new()
        } else {
            format!(" [{}]", attrs.join(", "))
        };
        writeln!(out, "  {} -> {}{};", quote(&e.src), quote(&e.dst), attrs).unwrap();
    }
    writeln!(out, "}}").unwrap();
    out
}
