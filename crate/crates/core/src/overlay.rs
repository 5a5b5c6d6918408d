//! Conference sessions, overlay links and their routes, rate allocations, and
//! the delay-pruned two-layer session graph each source packs trees over.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::underlay::{compute_route, overlay_prop_delay, NodeId, Route, UnderlayGraph};

#[derive(Debug, Error, PartialEq)]
pub enum OverlayError {
    #[error("session source {0} is also listed as a receiver")]
    SourceIsReceiver(NodeId),
    #[error("helper {0} overlaps the source or receivers")]
    HelperOverlap(NodeId),
    #[error("session of {0} has no receivers")]
    NoReceivers(NodeId),
    #[error("receiver {0} has no delay-feasible path from the source")]
    ReceiverUnreachable(NodeId),
}

/// A logical head -> tail connection between two participants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OverlayLink {
    pub head: NodeId,
    pub tail: NodeId,
}

impl OverlayLink {
    pub fn new(head: NodeId, tail: NodeId) -> Self {
        Self { head, tail }
    }
}

impl fmt::Display for OverlayLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.head, self.tail)
    }
}

/// One source broadcasting to a receiver set, optionally assisted by helpers.
/// A session is identified by its source node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    source: NodeId,
    receivers: Vec<NodeId>,
    helpers: Vec<NodeId>,
}

impl Session {
    pub fn new(
        source: NodeId,
        receivers: impl IntoIterator<Item = NodeId>,
        helpers: impl IntoIterator<Item = NodeId>,
    ) -> Result<Self, OverlayError> {
        let receivers: BTreeSet<_> = receivers.into_iter().collect();
        let helpers: BTreeSet<_> = helpers.into_iter().collect();
        if receivers.contains(&source) {
            return Err(OverlayError::SourceIsReceiver(source));
        }
        if receivers.is_empty() {
            return Err(OverlayError::NoReceivers(source));
        }
        if let Some(h) = helpers
            .iter()
            .find(|h| **h == source || receivers.contains(h))
        {
            return Err(OverlayError::HelperOverlap(*h));
        }
        Ok(Self {
            source,
            receivers: receivers.into_iter().collect(),
            helpers: helpers.into_iter().collect(),
        })
    }

    pub fn id(&self) -> NodeId {
        self.source
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    /// Sorted by node id; this order is the receiver index used in session
    /// graphs.
    pub fn receivers(&self) -> &[NodeId] {
        &self.receivers
    }

    pub fn helpers(&self) -> &[NodeId] {
        &self.helpers
    }

    /// Relays (one per receiver) followed by helpers.
    pub fn middle_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.receivers.iter().chain(self.helpers.iter()).copied()
    }

    /// Every overlay link a two-hop tree of this session may use.
    pub fn overlay_links(&self) -> Vec<OverlayLink> {
        let mut out = Vec::new();
        for v in self.middle_nodes() {
            out.push(OverlayLink::new(self.source, v));
        }
        for v in self.middle_nodes() {
            for &t in &self.receivers {
                if t != v {
                    out.push(OverlayLink::new(v, t));
                }
            }
        }
        out
    }

    pub fn add_receiver(&mut self, node: NodeId) {
        if node == self.source || self.receivers.contains(&node) {
            return;
        }
        self.helpers.retain(|h| *h != node);
        self.receivers.push(node);
        self.receivers.sort();
    }

    /// Drops `node` as receiver or helper. Returns false if the session is
    /// left without receivers.
    pub fn remove_member(&mut self, node: NodeId) -> bool {
        self.receivers.retain(|r| *r != node);
        self.helpers.retain(|h| *h != node);
        !self.receivers.is_empty()
    }
}

/// Full-mesh conference: every participant sources one session to all others.
pub fn full_mesh_sessions(participants: &[NodeId]) -> Vec<Session> {
    participants
        .iter()
        .map(|&s| {
            Session::new(
                s,
                participants.iter().copied().filter(|r| *r != s),
                std::iter::empty(),
            )
            .expect("distinct participants")
        })
        .collect()
}

/// Per-(session, overlay link) rates in kbps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RateAllocation {
    rates: BTreeMap<(NodeId, OverlayLink), f64>,
}

impl RateAllocation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, session: NodeId, link: OverlayLink) -> f64 {
        self.rates.get(&(session, link)).copied().unwrap_or(0.0)
    }

    /// Clamped at zero; the raw iterate may be negative.
    pub fn exported(&self, session: NodeId, link: OverlayLink) -> f64 {
        self.get(session, link).max(0.0)
    }

    pub fn set(&mut self, session: NodeId, link: OverlayLink, kbps: f64) {
        self.rates.insert((session, link), kbps);
    }

    pub fn contains(&self, session: NodeId, link: OverlayLink) -> bool {
        self.rates.contains_key(&(session, link))
    }

    pub fn remove_where(&mut self, mut pred: impl FnMut(NodeId, OverlayLink) -> bool) {
        self.rates.retain(|(m, e), _| !pred(*m, *e));
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, OverlayLink, f64)> + '_ {
        self.rates.iter().map(|((m, e), c)| (*m, *e, *c))
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Sum of exported rates on `link` over all sessions.
    pub fn link_total(&self, link: OverlayLink) -> f64 {
        self.rates
            .iter()
            .filter(|((_, e), _)| *e == link)
            .map(|(_, c)| c.max(0.0))
            .sum()
    }
}

/// Zero rate on every overlay link of every session.
pub fn zero_allocation<'a>(sessions: impl IntoIterator<Item = &'a Session>) -> RateAllocation {
    let mut a = RateAllocation::new();
    for s in sessions {
        for e in s.overlay_links() {
            a.set(s.id(), e, 0.0);
        }
    }
    a
}

/// Underlay routes of the overlay links in use. Links whose endpoints are
/// disconnected are simply absent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OverlayRoutes {
    routes: BTreeMap<OverlayLink, Route>,
}

impl OverlayRoutes {
    pub fn build<'a>(
        graph: &UnderlayGraph,
        sessions: impl IntoIterator<Item = &'a Session>,
    ) -> Self {
        let mut routes = BTreeMap::new();
        for s in sessions {
            for e in s.overlay_links() {
                if routes.contains_key(&e) {
                    continue;
                }
                if let Ok(r) = compute_route(graph, e.head, e.tail) {
                    routes.insert(e, r);
                }
            }
        }
        Self { routes }
    }

    pub fn get(&self, link: OverlayLink) -> Option<&Route> {
        self.routes.get(&link)
    }

    pub fn iter(&self) -> impl Iterator<Item = (OverlayLink, &Route)> {
        self.routes.iter().map(|(e, r)| (*e, r))
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn prop_delays(&self, graph: &UnderlayGraph) -> BTreeMap<OverlayLink, f64> {
        self.routes
            .iter()
            .map(|(e, r)| (*e, overlay_prop_delay(r, graph)))
            .collect()
    }
}

/// Total load per physical link (kbps, indexed by `LinkId`): cross traffic
/// plus every exported session rate routed over it. Down links carry nothing.
pub fn link_load(graph: &UnderlayGraph, allocation: &RateAllocation, routes: &OverlayRoutes) -> Vec<f64> {
    let mut y: Vec<f64> = graph.links().iter().map(|l| l.cross_traffic).collect();
    for (_, e, c) in allocation.iter() {
        if let Some(r) = routes.get(e) {
            for l in &r.links {
                y[l.0] += c.max(0.0);
            }
        }
    }
    for l in graph.links() {
        if !l.up {
            y[l.id.0] = 0.0;
        }
    }
    y
}

/// Vertex of a two-layer session graph. The derived order (source, relays,
/// helpers, sinks) is the tie-break order used by packing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vertex {
    Source,
    Relay(usize),
    Helper(usize),
    Sink(usize),
}

/// The delay-pruned DAG `source -> {relays, helpers} -> sinks` of one session.
///
/// Middle vertex `i < n` is the relay of receiver `i`; `n + k` is helper `k`.
/// A missing edge (`None`) was pruned or has no route. The relay of receiver
/// `j` always reaches sink `j` with the surrogate-infinite capacity.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionGraph {
    source: NodeId,
    receivers: Vec<NodeId>,
    helpers: Vec<NodeId>,
    to_mid: Vec<Option<f64>>,
    mid_to_sink: Vec<Vec<Option<f64>>>,
    infinite: f64,
}

impl SessionGraph {
    /// Builds a graph from explicit capacities. `to_mid[v]` is the `s -> v`
    /// edge and `mid_to_sink[v][j]` the `v -> t_j` edge; entries for a relay's
    /// own sink are ignored.
    pub fn from_capacities(
        source: NodeId,
        receivers: Vec<NodeId>,
        helpers: Vec<NodeId>,
        to_mid: Vec<Option<f64>>,
        mut mid_to_sink: Vec<Vec<Option<f64>>>,
    ) -> Self {
        let n = receivers.len();
        assert_eq!(to_mid.len(), n + helpers.len());
        assert_eq!(mid_to_sink.len(), n + helpers.len());
        let infinite = to_mid.iter().flatten().map(|c| c.max(0.0)).sum::<f64>() + 1.0;
        for (v, row) in mid_to_sink.iter_mut().enumerate() {
            assert_eq!(row.len(), n);
            for c in row.iter_mut().flatten() {
                *c = c.max(0.0);
            }
            if v < n {
                row[v] = Some(infinite);
            }
        }
        let to_mid = to_mid.into_iter().map(|c| c.map(|c| c.max(0.0))).collect();
        Self {
            source,
            receivers,
            helpers,
            to_mid,
            mid_to_sink,
            infinite,
        }
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn receivers(&self) -> &[NodeId] {
        &self.receivers
    }

    pub fn helpers(&self) -> &[NodeId] {
        &self.helpers
    }

    pub fn num_sinks(&self) -> usize {
        self.receivers.len()
    }

    pub fn num_middle(&self) -> usize {
        self.to_mid.len()
    }

    pub fn infinite_capacity(&self) -> f64 {
        self.infinite
    }

    pub fn middle_vertex(&self, v: usize) -> Vertex {
        if v < self.receivers.len() {
            Vertex::Relay(v)
        } else {
            Vertex::Helper(v - self.receivers.len())
        }
    }

    pub fn middle_node(&self, v: usize) -> NodeId {
        if v < self.receivers.len() {
            self.receivers[v]
        } else {
            self.helpers[v - self.receivers.len()]
        }
    }

    /// Capacity of `s -> v`; `None` if absent.
    pub fn source_edge(&self, v: usize) -> Option<f64> {
        self.to_mid[v]
    }

    /// Capacity of `v -> t_j`; `None` if absent.
    pub fn sink_edge(&self, v: usize, j: usize) -> Option<f64> {
        self.mid_to_sink[v][j]
    }

    pub fn is_own_sink(&self, v: usize, j: usize) -> bool {
        v == j && v < self.receivers.len()
    }

    /// The overlay link behind a finite edge, or `None` for `r_j -> t_j`.
    pub fn overlay_link(&self, head: Vertex, tail: Vertex) -> Option<OverlayLink> {
        let node = |v: Vertex| match v {
            Vertex::Source => self.source,
            Vertex::Relay(i) | Vertex::Sink(i) => self.receivers[i],
            Vertex::Helper(k) => self.helpers[k],
        };
        match (head, tail) {
            (Vertex::Relay(i), Vertex::Sink(j)) if i == j => None,
            _ => Some(OverlayLink::new(node(head), node(tail))),
        }
    }

    /// All present edges with their capacities, `(head, tail, capacity)`.
    pub fn edges(&self) -> Vec<(Vertex, Vertex, f64)> {
        let mut out = Vec::new();
        for v in 0..self.num_middle() {
            if let Some(c) = self.to_mid[v] {
                out.push((Vertex::Source, self.middle_vertex(v), c));
            }
        }
        for v in 0..self.num_middle() {
            for j in 0..self.num_sinks() {
                if let Some(c) = self.mid_to_sink[v][j] {
                    out.push((self.middle_vertex(v), Vertex::Sink(j), c));
                }
            }
        }
        out
    }

    /// Present finite edges, by overlay link.
    pub fn overlay_edges(&self) -> Vec<(OverlayLink, f64)> {
        self.edges()
            .into_iter()
            .filter_map(|(h, t, c)| self.overlay_link(h, t).map(|e| (e, c)))
            .collect()
    }

    pub fn receiver_index(&self, node: NodeId) -> Option<usize> {
        self.receivers.iter().position(|r| *r == node)
    }
}

/// Builds the two-layer DAG of `session` from the exported allocation.
///
/// Edges whose one-hop propagation delay exceeds `delay_bound` are dropped, as
/// are `v -> t_j` edges whose two-hop path `s -> v -> t_j` exceeds it. Overlay
/// links missing from `prop_delays` (no route) are absent.
pub fn build_session_graph(
    session: &Session,
    allocation: &RateAllocation,
    prop_delays: &BTreeMap<OverlayLink, f64>,
    delay_bound: f64,
) -> Result<SessionGraph, OverlayError> {
    let s = session.source();
    let n = session.receivers().len();
    let mids: Vec<NodeId> = session.middle_nodes().collect();

    let first_hop: Vec<Option<f64>> = mids
        .iter()
        .map(|&v| {
            let e = OverlayLink::new(s, v);
            prop_delays.get(&e).copied().filter(|d| *d <= delay_bound)
        })
        .collect();
    let to_mid: Vec<Option<f64>> = mids
        .iter()
        .zip(&first_hop)
        .map(|(&v, d)| d.map(|_| allocation.exported(session.id(), OverlayLink::new(s, v))))
        .collect();

    let mut mid_to_sink = vec![vec![None; n]; mids.len()];
    for (vi, &v) in mids.iter().enumerate() {
        let Some(d1) = first_hop[vi] else { continue };
        for (j, &t) in session.receivers().iter().enumerate() {
            if vi == j {
                continue;
            }
            let e = OverlayLink::new(v, t);
            if let Some(d2) = prop_delays.get(&e) {
                if *d2 <= delay_bound && d1 + d2 <= delay_bound {
                    mid_to_sink[vi][j] = Some(allocation.exported(session.id(), e));
                }
            }
        }
    }

    let g = SessionGraph::from_capacities(
        s,
        session.receivers().to_vec(),
        session.helpers().to_vec(),
        to_mid,
        mid_to_sink,
    );
    for j in 0..n {
        let reachable = (0..g.num_middle())
            .any(|v| g.source_edge(v).is_some() && g.sink_edge(v, j).is_some());
        if !reachable {
            return Err(OverlayError::ReceiverUnreachable(session.receivers()[j]));
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::underlay::{LinkId, NodeKind};

    fn ids(v: &[usize]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    fn uniform(session: &Session, c: f64) -> RateAllocation {
        let mut a = zero_allocation([session]);
        for e in session.overlay_links() {
            a.set(session.id(), e, c);
        }
        a
    }

    fn delays(session: &Session, d: f64) -> BTreeMap<OverlayLink, f64> {
        session.overlay_links().into_iter().map(|e| (e, d)).collect()
    }

    #[test]
    fn session_validation() {
        assert_eq!(
            Session::new(NodeId(0), ids(&[0, 1]), []),
            Err(OverlayError::SourceIsReceiver(NodeId(0)))
        );
        assert_eq!(
            Session::new(NodeId(0), ids(&[1]), ids(&[1])),
            Err(OverlayError::HelperOverlap(NodeId(1)))
        );
        assert_eq!(
            Session::new(NodeId(0), [], []),
            Err(OverlayError::NoReceivers(NodeId(0)))
        );
    }

    #[test]
    fn complete_two_layer_graph() {
        let s = Session::new(NodeId(0), ids(&[1, 2, 3]), []).unwrap();
        let g = build_session_graph(&s, &uniform(&s, 1.0), &delays(&s, 0.0), 200.0).unwrap();
        // 3 source edges, 6 cross edges, 3 own-sink edges.
        assert_eq!(g.edges().len(), 12);
        assert_eq!(g.overlay_edges().len(), 9);
        assert_eq!(g.infinite_capacity(), 4.0);
        for j in 0..3 {
            assert_eq!(g.sink_edge(j, j), Some(4.0));
        }
    }

    #[test]
    fn two_hop_pruning() {
        let s = Session::new(NodeId(0), ids(&[1, 2]), []).unwrap();
        let mut d = delays(&s, 0.0);
        d.insert(OverlayLink::new(NodeId(0), NodeId(1)), 150.0);
        d.insert(OverlayLink::new(NodeId(1), NodeId(2)), 100.0);
        let g = build_session_graph(&s, &uniform(&s, 1.0), &d, 200.0).unwrap();
        assert_eq!(g.source_edge(0), Some(1.0));
        assert_eq!(g.sink_edge(0, 1), None);
        assert_eq!(g.sink_edge(1, 0), Some(1.0));
    }

    #[test]
    fn helper_edges() {
        let s = Session::new(NodeId(0), ids(&[1, 2, 3]), ids(&[4])).unwrap();
        let g = build_session_graph(&s, &uniform(&s, 1.0), &delays(&s, 0.0), 200.0).unwrap();
        assert_eq!(g.middle_vertex(3), Vertex::Helper(0));
        assert_eq!(g.source_edge(3), Some(1.0));
        for j in 0..3 {
            assert_eq!(g.sink_edge(3, j), Some(1.0));
        }
    }

    #[test]
    fn unreachable_receiver() {
        let s = Session::new(NodeId(0), ids(&[1, 2]), []).unwrap();
        let mut d = delays(&s, 0.0);
        d.remove(&OverlayLink::new(NodeId(0), NodeId(2)));
        d.remove(&OverlayLink::new(NodeId(1), NodeId(2)));
        assert_eq!(
            build_session_graph(&s, &uniform(&s, 1.0), &d, 200.0),
            Err(OverlayError::ReceiverUnreachable(NodeId(2)))
        );
    }

    #[test]
    fn zero_allocation_is_zero() {
        let sessions = full_mesh_sessions(&ids(&[0, 1, 2]));
        let a = zero_allocation(&sessions);
        assert_eq!(a.len(), 3 * 4);
        assert!(a.iter().all(|(_, _, c)| c == 0.0));
    }

    #[test]
    fn load_accounting() {
        let mut g = UnderlayGraph::new();
        let a = g.add_node("A", NodeKind::Host);
        let e = g.add_node("E", NodeKind::Router);
        let f = g.add_node("F", NodeKind::Router);
        let c = g.add_node("C", NodeKind::Host);
        g.add_link("", a, e, 1000.0, 0.0).unwrap();
        g.add_link("", e, f, 480.0, 0.0).unwrap();
        g.add_link("", f, c, 1000.0, 0.0).unwrap();
        g.add_link("", c, a, 1000.0, 0.0).unwrap();
        let s = Session::new(a, [c], []).unwrap();
        let routes = OverlayRoutes::build(&g, [&s]);
        let mut alloc = zero_allocation([&s]);
        assert_eq!(link_load(&g, &alloc, &routes), vec![0.0; 4]);
        alloc.set(a, OverlayLink::new(a, c), 100.0);
        assert_eq!(link_load(&g, &alloc, &routes), vec![100.0, 100.0, 100.0, 0.0]);
        g.set_cross_traffic(LinkId(1), 80.0).unwrap();
        assert_eq!(link_load(&g, &alloc, &routes)[1], 180.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn alloc_for(s: &Session, caps: &[f64]) -> RateAllocation {
            let mut a = RateAllocation::new();
            for (e, c) in s.overlay_links().into_iter().zip(caps) {
                a.set(s.id(), e, *c);
            }
            a
        }

        proptest! {
            #[test]
            fn edges_monotone_in_bound(ds in proptest::collection::vec(0.0..200.0f64, 12), d in 0.0..300.0f64, extra in 0.0..100.0f64) {
                let s = Session::new(NodeId(0), ids(&[1, 2, 3]), []).unwrap();
                let delays: BTreeMap<_, _> = s.overlay_links().into_iter().zip(ds).collect();
                let a = uniform(&s, 1.0);
                let small = build_session_graph(&s, &a, &delays, d);
                let large = build_session_graph(&s, &a, &delays, d + extra);
                if let Ok(small) = small {
                    let large = large.unwrap();
                    let big: BTreeSet<_> = large.edges().into_iter().map(|(h, t, _)| (h, t)).collect();
                    for (h, t, _) in small.edges() {
                        prop_assert!(big.contains(&(h, t)));
                    }
                }
            }

            #[test]
            fn no_path_violates_bound(ds in proptest::collection::vec(0.0..200.0f64, 12), d in 0.0..300.0f64) {
                let s = Session::new(NodeId(0), ids(&[1, 2, 3]), []).unwrap();
                let delays: BTreeMap<_, _> = s.overlay_links().into_iter().zip(ds).collect();
                if let Ok(g) = build_session_graph(&s, &uniform(&s, 1.0), &delays, d) {
                    for v in 0..g.num_middle() {
                        if g.source_edge(v).is_none() { continue; }
                        let d1 = delays[&OverlayLink::new(NodeId(0), g.middle_node(v))];
                        prop_assert!(d1 <= d);
                        for j in 0..g.num_sinks() {
                            if g.sink_edge(v, j).is_some() && !g.is_own_sink(v, j) {
                                let d2 = delays[&OverlayLink::new(g.middle_node(v), g.receivers()[j])];
                                prop_assert!(d1 + d2 <= d);
                            }
                        }
                    }
                }
            }

            #[test]
            fn load_is_linear(c1 in proptest::collection::vec(0.0..500.0f64, 6), c2 in proptest::collection::vec(0.0..500.0f64, 6)) {
                let mut g = UnderlayGraph::new();
                let a = g.add_node("A", NodeKind::Host);
                let b = g.add_node("B", NodeKind::Host);
                let r = g.add_node("R", NodeKind::Router);
                let c = g.add_node("C", NodeKind::Host);
                for (x, y) in [(a, r), (b, r), (c, r)] {
                    g.add_link("", x, y, 1e4, 0.0).unwrap();
                    g.add_link("", y, x, 1e4, 0.0).unwrap();
                }
                let s = Session::new(a, [b, c], []).unwrap();
                let routes = OverlayRoutes::build(&g, [&s]);
                let sum: Vec<f64> = c1.iter().zip(&c2).map(|(x, y)| x + y).collect();
                let y1 = link_load(&g, &alloc_for(&s, &c1), &routes);
                let y2 = link_load(&g, &alloc_for(&s, &c2), &routes);
                let y12 = link_load(&g, &alloc_for(&s, &sum), &routes);
                for l in 0..y1.len() {
                    prop_assert!((y12[l] - y1[l] - y2[l]).abs() < 1e-9);
                }
            }
        }
    }
}
