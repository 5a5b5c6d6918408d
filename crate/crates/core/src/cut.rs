//! Critical cuts and the resulting subgradient of the session rate.

use std::collections::{BTreeMap, BTreeSet};

use crate::overlay::{OverlayLink, SessionGraph, Vertex};
use crate::treepack::min_min_cut;
use crate::underlay::NodeId;

/// A source-side vertex set whose outgoing capacity equals the session rate.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticalCut {
    pub z: BTreeSet<Vertex>,
    pub cut_edges: Vec<OverlayLink>,
    pub value: f64,
    /// Receiver node separated from the source.
    pub critical_receiver: NodeId,
}

/// Builds the critical cut for the sink minimizing the per-receiver cut.
///
/// A middle vertex `v` joins the source side when `cap(v -> t*) < cap(s -> v)`
/// (its sink edge is cheaper to cut); on equality the `s -> v` edge is cut.
/// Every other sink sits on the source side.
pub fn critical_cut(g: &SessionGraph) -> CriticalCut {
    let (value, jstar) = min_min_cut(g);
    let mut z = BTreeSet::from([Vertex::Source]);
    let mut cut_edges = Vec::new();
    for v in 0..g.num_middle() {
        let up = g.source_edge(v);
        let down = g.sink_edge(v, jstar);
        let source_side = down.unwrap_or(0.0) < up.unwrap_or(0.0);
        let vertex = g.middle_vertex(v);
        if source_side {
            z.insert(vertex);
            if down.is_some() {
                cut_edges.extend(g.overlay_link(vertex, Vertex::Sink(jstar)));
            }
        } else if up.is_some() {
            cut_edges.extend(g.overlay_link(Vertex::Source, vertex));
        }
    }
    for j in (0..g.num_sinks()).filter(|&j| j != jstar) {
        z.insert(Vertex::Sink(j));
    }
    CriticalCut {
        z,
        cut_edges,
        value,
        critical_receiver: g.receivers()[jstar],
    }
}

/// Indicator of the cut edges over every overlay edge present in `g`.
pub fn subgradient(g: &SessionGraph, cut: &CriticalCut) -> BTreeMap<OverlayLink, u8> {
    let cut_set: BTreeSet<_> = cut.cut_edges.iter().copied().collect();
    g.overlay_edges()
        .into_iter()
        .map(|(e, _)| (e, u8::from(cut_set.contains(&e))))
        .collect()
}
