//! Core engine for financial models represented as dataflow graphs.
//!
//! A model is a directed graph of processors joined by synchronicity-typed
//! edges; fragments of data flow through it. On top of that representation
//! sit runtime graph plasticity, a reactive (spreadsheet-like) layer with
//! implicit lifting, distribution patterns mapping connector-bounded spaces
//! onto execution contexts, and a discrete-event simulation environment with
//! cooperative agents and time squeezing.

pub mod catalog;
pub mod digest;
pub mod distribution;
pub mod endpoints;
pub mod fragment;
pub mod graph;
pub mod plasticity;
pub mod reactives;
pub mod runtime;
pub mod simulation;
pub mod value;

pub use fragment::Fragment;
pub use graph::{NodeId, ProcessorKind, ProcessorSpec, StreamGraph, SyncMode};
pub use value::Value;
