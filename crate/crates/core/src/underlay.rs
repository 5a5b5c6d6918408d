//! Physical network model: nodes, directed links, fixed routing and the
//! fluid per-link dynamics that turn offered load into loss and queuing delay.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

const DELAY_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

/// Hosts terminate traffic; only routers forward it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Host,
    Router,
}

#[derive(Clone, Debug)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Clone, Debug)]
pub struct PhysLink {
    pub id: LinkId,
    pub name: String,
    pub src: NodeId,
    pub dst: NodeId,
    /// kbps
    pub capacity: f64,
    /// ms
    pub prop_delay: f64,
    pub up: bool,
    /// Exogenous load in kbps.
    pub cross_traffic: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum UnderlayError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("link capacity must be positive, got {0}")]
    BadCapacity(f64),
    #[error("propagation delay must be nonnegative, got {0}")]
    BadDelay(f64),
    #[error("cross traffic must be nonnegative, got {0}")]
    BadCrossTraffic(f64),
    #[error("route head and tail are the same node {0}")]
    SelfRoute(NodeId),
    #[error("no path from {head} to {tail}")]
    NoPath { head: NodeId, tail: NodeId },
}

#[derive(Clone, Debug, Default)]
pub struct UnderlayGraph {
    nodes: Vec<Node>,
    links: Vec<PhysLink>,
}

impl UnderlayGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: impl Into<String>, kind: NodeKind) -> NodeId {
        self.nodes.push(Node {
            name: name.into(),
            kind,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Adds a directed link. Link ids are assigned in insertion order, which
    /// is also the routing tie-break order.
    pub fn add_link(
        &mut self,
        name: impl Into<String>,
        src: NodeId,
        dst: NodeId,
        capacity: f64,
        prop_delay: f64,
    ) -> Result<LinkId, UnderlayError> {
        for n in [src, dst] {
            if n.0 >= self.nodes.len() {
                return Err(UnderlayError::UnknownNode(n));
            }
        }
        if src == dst {
            return Err(UnderlayError::SelfLoop(src));
        }
        if !(capacity > 0.0 && capacity.is_finite()) {
            return Err(UnderlayError::BadCapacity(capacity));
        }
        if !(prop_delay >= 0.0 && prop_delay.is_finite()) {
            return Err(UnderlayError::BadDelay(prop_delay));
        }
        let id = LinkId(self.links.len());
        self.links.push(PhysLink {
            id,
            name: name.into(),
            src,
            dst,
            capacity,
            prop_delay,
            up: true,
            cross_traffic: 0.0,
        });
        Ok(id)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[PhysLink] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn link(&self, id: LinkId) -> &PhysLink {
        &self.links[id.0]
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(NodeId)
    }

    pub fn link_by_name(&self, name: &str) -> Option<LinkId> {
        self.links.iter().position(|l| l.name == name).map(LinkId)
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn set_up(&mut self, id: LinkId, up: bool) {
        self.links[id.0].up = up;
    }

    pub fn set_cross_traffic(&mut self, id: LinkId, kbps: f64) -> Result<(), UnderlayError> {
        if !(kbps >= 0.0 && kbps.is_finite()) {
            return Err(UnderlayError::BadCrossTraffic(kbps));
        }
        self.links[id.0].cross_traffic = kbps;
        Ok(())
    }

    fn can_transit(&self, n: NodeId) -> bool {
        self.nodes[n.0].kind == NodeKind::Router
    }
}

/// Ordered physical links from an overlay head to its tail.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Route {
    pub links: Vec<LinkId>,
}

impl Route {
    pub fn contains(&self, link: LinkId) -> bool {
        self.links.contains(&link)
    }
}

/// Minimum propagation-delay path over up links, transiting only routers.
/// Among equally short paths the lexicographically smallest link-id sequence
/// wins.
pub fn compute_route(
    graph: &UnderlayGraph,
    head: NodeId,
    tail: NodeId,
) -> Result<Route, UnderlayError> {
    let n = graph.nodes.len();
    for v in [head, tail] {
        if v.0 >= n {
            return Err(UnderlayError::UnknownNode(v));
        }
    }
    if head == tail {
        return Err(UnderlayError::SelfRoute(head));
    }

    // A link is usable from `u` only if `u` is the head or a router.
    let usable = |l: &PhysLink| l.up && (l.src == head || graph.can_transit(l.src));

    // Bellman-Ford style relaxation towards the tail; graphs are small.
    let mut to_tail = vec![f64::INFINITY; n];
    to_tail[tail.0] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for l in graph.links.iter().filter(|l| usable(l)) {
            let cand = to_tail[l.dst.0] + l.prop_delay;
            if cand + DELAY_EPS < to_tail[l.src.0] {
                to_tail[l.src.0] = cand;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if !to_tail[head.0].is_finite() {
        return Err(UnderlayError::NoPath { head, tail });
    }

    let tight = |l: &PhysLink| {
        usable(l)
            && to_tail[l.dst.0].is_finite()
            && (to_tail[l.dst.0] + l.prop_delay - to_tail[l.src.0]).abs() <= DELAY_EPS
    };

    // Greedy lexicographic walk over the tight subgraph, keeping the tail
    // reachable without revisiting nodes.
    let mut visited = BTreeSet::from([head]);
    let mut at = head;
    let mut links = Vec::new();
    while at != tail {
        let next = graph
            .links
            .iter()
            .filter(|l| l.src == at && tight(l) && !visited.contains(&l.dst))
            .find(|l| {
                l.dst == tail
                    || (graph.can_transit(l.dst) && reaches(graph, l.dst, tail, &visited, &tight))
            })
            .ok_or(UnderlayError::NoPath { head, tail })?;
        links.push(next.id);
        visited.insert(next.dst);
        at = next.dst;
    }
    Ok(Route { links })
}

fn reaches(
    graph: &UnderlayGraph,
    from: NodeId,
    tail: NodeId,
    visited: &BTreeSet<NodeId>,
    tight: &impl Fn(&PhysLink) -> bool,
) -> bool {
    let mut seen = visited.clone();
    seen.insert(from);
    let mut stack = vec![from];
    while let Some(u) = stack.pop() {
        for l in graph.links.iter().filter(|l| l.src == u && tight(l)) {
            if l.dst == tail {
                return true;
            }
            if graph.can_transit(l.dst) && seen.insert(l.dst) {
                stack.push(l.dst);
            }
        }
    }
    false
}

/// `(y - C)^+ / y`, with 0 for an idle link.
pub fn loss_fraction(y: f64, capacity: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else {
        (y - capacity).max(0.0) / y
    }
}

/// One fluid tick of the projected price update. The price is queuing delay
/// in milliseconds and grows by `dt * (y - C) / C` seconds per tick.
pub fn price_step(price_ms: f64, y: f64, capacity: f64, dt_s: f64) -> f64 {
    let next_s = price_ms / 1000.0 + dt_s * (y - capacity) / capacity;
    (next_s * 1000.0).max(0.0)
}

/// Per-link queuing-delay prices (ms), indexed by `LinkId`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkPriceState {
    pub prices_ms: Vec<f64>,
}

impl LinkPriceState {
    pub fn zeros(links: usize) -> Self {
        Self {
            prices_ms: vec![0.0; links],
        }
    }

    pub fn step(&mut self, graph: &UnderlayGraph, loads: &[f64], dt_s: f64) {
        for l in graph.links() {
            let p = &mut self.prices_ms[l.id.0];
            *p = if l.up {
                price_step(*p, loads[l.id.0], l.capacity, dt_s)
            } else {
                0.0
            };
        }
    }

    pub fn get(&self, link: LinkId) -> f64 {
        self.prices_ms[link.0]
    }
}

/// Additive path loss, capped at 1.
pub fn overlay_loss(route: &Route, link_losses: &[f64]) -> f64 {
    route
        .links
        .iter()
        .map(|l| link_losses[l.0])
        .sum::<f64>()
        .min(1.0)
}

pub fn overlay_queue_delay(route: &Route, prices_ms: &[f64]) -> f64 {
    route.links.iter().map(|l| prices_ms[l.0]).sum()
}

pub fn overlay_prop_delay(route: &Route, graph: &UnderlayGraph) -> f64 {
    route.links.iter().map(|l| graph.link(*l).prop_delay).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A,B - E = F - C,D with LAN links inside each office.
    pub(crate) fn dumbbell() -> UnderlayGraph {
        let mut g = UnderlayGraph::new();
        let a = g.add_node("A", NodeKind::Host);
        let b = g.add_node("B", NodeKind::Host);
        let c = g.add_node("C", NodeKind::Host);
        let d = g.add_node("D", NodeKind::Host);
        let e = g.add_node("E", NodeKind::Router);
        let f = g.add_node("F", NodeKind::Router);
        let lan = 100_000.0;
        for (x, y, cap) in [(a, e, lan), (b, e, lan), (c, f, lan), (d, f, lan), (e, f, 480.0)] {
            g.add_link("", x, y, cap, 0.0).unwrap();
            g.add_link("", y, x, cap, 0.0).unwrap();
        }
        g.add_link("", a, b, lan, 0.0).unwrap();
        g.add_link("", b, a, lan, 0.0).unwrap();
        g.add_link("", c, d, lan, 0.0).unwrap();
        g.add_link("", d, c, lan, 0.0).unwrap();
        g
    }

    fn names(g: &UnderlayGraph, r: &Route) -> Vec<String> {
        r.links
            .iter()
            .map(|l| {
                let l = g.link(*l);
                format!("{}{}", g.node_name(l.src), g.node_name(l.dst))
            })
            .collect()
    }

    #[test]
    fn dumbbell_routes() {
        let g = dumbbell();
        let n = |s| g.node_by_name(s).unwrap();
        let r = compute_route(&g, n("A"), n("C")).unwrap();
        assert_eq!(names(&g, &r), ["AE", "EF", "FC"]);
        let r = compute_route(&g, n("A"), n("B")).unwrap();
        assert_eq!(names(&g, &r), ["AE", "EB"]);
        assert_eq!(
            compute_route(&g, n("A"), n("A")),
            Err(UnderlayError::SelfRoute(n("A")))
        );
    }

    #[test]
    fn failed_gateway_leaves_only_lan() {
        let mut g = dumbbell();
        let n = |s| g.node_by_name(s).unwrap();
        let (a, b, c) = (n("A"), n("B"), n("C"));
        g.set_up(LinkId(0), false);
        g.set_up(LinkId(1), false);
        let r = compute_route(&g, a, b).unwrap();
        assert_eq!(names(&g, &r), ["AB"]);
        // B is a host and does not forward.
        assert_eq!(
            compute_route(&g, a, c),
            Err(UnderlayError::NoPath { head: a, tail: c })
        );
    }

    #[test]
    fn shorter_delay_beats_fewer_hops() {
        let mut g = UnderlayGraph::new();
        let a = g.add_node("a", NodeKind::Host);
        let r = g.add_node("r", NodeKind::Router);
        let b = g.add_node("b", NodeKind::Host);
        g.add_link("", a, b, 10.0, 50.0).unwrap();
        let l1 = g.add_link("", a, r, 10.0, 10.0).unwrap();
        let l2 = g.add_link("", r, b, 10.0, 10.0).unwrap();
        assert_eq!(compute_route(&g, a, b).unwrap().links, vec![l1, l2]);
    }

    #[test]
    fn zero_delay_cycles_terminate() {
        let mut g = UnderlayGraph::new();
        let a = g.add_node("a", NodeKind::Host);
        let r1 = g.add_node("r1", NodeKind::Router);
        let r2 = g.add_node("r2", NodeKind::Router);
        let b = g.add_node("b", NodeKind::Host);
        g.add_link("", a, r1, 1.0, 0.0).unwrap();
        g.add_link("", r1, r2, 1.0, 0.0).unwrap();
        g.add_link("", r2, r1, 1.0, 0.0).unwrap();
        g.add_link("", r2, b, 1.0, 0.0).unwrap();
        assert_eq!(compute_route(&g, a, b).unwrap().links.len(), 3);
    }

    #[test]
    fn rejects_bad_links() {
        let mut g = UnderlayGraph::new();
        let a = g.add_node("a", NodeKind::Host);
        let b = g.add_node("b", NodeKind::Host);
        assert_eq!(g.add_link("", a, a, 1.0, 0.0), Err(UnderlayError::SelfLoop(a)));
        assert_eq!(g.add_link("", a, b, 0.0, 0.0), Err(UnderlayError::BadCapacity(0.0)));
        assert_eq!(g.add_link("", a, b, 1.0, -1.0), Err(UnderlayError::BadDelay(-1.0)));
        assert_eq!(
            g.add_link("", a, NodeId(7), 1.0, 0.0),
            Err(UnderlayError::UnknownNode(NodeId(7)))
        );
    }

    #[test]
    fn loss_fraction_cases() {
        assert!((loss_fraction(600.0, 480.0) - 0.2).abs() < 1e-12);
        assert_eq!(loss_fraction(480.0, 480.0), 0.0);
        assert_eq!(loss_fraction(0.0, 480.0), 0.0);
    }

    #[test]
    fn price_step_cases() {
        assert_eq!(price_step(0.0, 480.0, 480.0, 0.01), 0.0);
        assert!((price_step(0.0, 960.0, 480.0, 0.01) - 10.0).abs() < 1e-9);
        assert_eq!(price_step(5.0, 240.0, 480.0, 0.01), 0.0);
    }

    #[test]
    fn route_sums() {
        let r = Route {
            links: vec![LinkId(0), LinkId(1)],
        };
        assert!((overlay_loss(&r, &[0.01, 0.01]) - 0.02).abs() < 1e-12);
        assert_eq!(overlay_loss(&r, &[0.7, 0.7]), 1.0);
        assert_eq!(overlay_queue_delay(&r, &[0.0, 0.0]), 0.0);
        let g = dumbbell();
        let n = |s| g.node_by_name(s).unwrap();
        let r = compute_route(&g, n("A"), n("C")).unwrap();
        assert_eq!(overlay_prop_delay(&r, &g), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn price_never_negative(p in 0.0..500.0f64, y in 0.0..2000.0f64, c in 1.0..1000.0f64, dt in 0.001..1.0f64) {
                let next = price_step(p, y, c, dt);
                prop_assert!(next >= 0.0);
                if (y - c).abs() > 1e-6 && (y > c || p > 0.0) {
                    prop_assert!(next != p);
                }
            }

            #[test]
            fn loss_in_unit_interval(y in 0.0..1e6f64, c in 1.0..1e5f64) {
                let q = loss_fraction(y, c);
                prop_assert!((0.0..1.0).contains(&q));
            }
        }
    }
}
