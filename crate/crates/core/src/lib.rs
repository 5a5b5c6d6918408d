//! Delay-bounded multi-party conferencing over arbitrary underlay networks.
//!
//! Each conference participant sources a session that is delivered over
//! two-hop trees packed on a per-session two-layer graph. Overlay link rates
//! are driven by a distributed loss/delay primal-subgradient-dual controller,
//! simulated here with a deterministic fluid model.

pub mod cli;
pub mod control;
pub mod cut;
pub mod oracle;
pub mod overlay;
pub mod sim;
pub mod treepack;
pub mod underlay;

pub use overlay::{
    build_session_graph, full_mesh_sessions, link_load, zero_allocation, OverlayLink,
    OverlayRoutes, RateAllocation, Session, SessionGraph, Vertex,
};
pub use underlay::{compute_route, LinkId, NodeId, NodeKind, Route, UnderlayGraph};
