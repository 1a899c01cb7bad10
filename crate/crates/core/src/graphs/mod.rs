//! Call graph and static happens-before graph construction.

pub mod callgraph;
pub mod shbg;

pub use callgraph::{build_call_graph, CallGraph};
pub use shbg::{
    build_shbg, build_shbg_with, AccessOp, Event, GraphError, HbRelation, HeldLock, ShbgOptions,
    StaticHappensBeforeGraph, StaticThreadId, SyncKind, SyncSite, ThreadInfo, DEFAULT_MAX_DEPTH,
};
