//! Topology-aware partitioning of task-parallel dataflow graphs over
//! clusters of multi-die FPGAs, with slot floorplanning, interconnect
//! pipelining and a discrete-event latency model.

pub mod assign;
pub mod benchgen;
pub mod canon;
pub mod comm;
pub mod dot;
pub mod cluster;
pub mod error;
pub mod floorplan;
pub mod flow;
pub mod graph;
pub mod hbm;
pub mod inter;
pub mod pipeliner;
pub mod resource;
pub mod sim;

pub use error::{Error, Result};
