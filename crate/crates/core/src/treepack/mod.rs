//! Delay-bounded session rate and greedy packing of two-hop trees.
//!
//! On the two-layer graph the source-to-sink min-cut has a closed form:
//! every path crosses exactly one middle vertex, so the cut to `t_j` is
//! `sum_v min(cap(s->v), cap(v->t_j))`. The session rate is the minimum of
//! these over sinks. Unit trees are packed greedily edge by edge, always
//! keeping the edge whose removal hurts the residual minimum least; when that
//! stalls below the cut, an LP-guided rounding takes over.

use std::collections::{BTreeMap, BTreeSet};

use crate::overlay::{OverlayLink, SessionGraph, Vertex};
use crate::underlay::NodeId;

mod lp;

/// Min-cut from the source to sink `j`.
pub fn per_receiver_cut(g: &SessionGraph, j: usize) -> f64 {
    (0..g.num_middle())
        .map(|v| {
            let a = g.source_edge(v).unwrap_or(0.0);
            let b = g.sink_edge(v, j).unwrap_or(0.0);
            a.min(b)
        })
        .sum()
}

/// Minimum over sinks of the per-receiver cut, with the critical sink index
/// (smallest index on ties).
pub fn min_min_cut(g: &SessionGraph) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for j in 0..g.num_sinks() {
        let c = per_receiver_cut(g, j);
        if c < best.0 {
            best = (c, j);
        }
    }
    best
}

/// A two-hop tree: the source feeds each key of `branches`, which forwards
/// to the listed receivers. A relay's own receiver appears both in its
/// branch and in `direct`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tree {
    pub source: NodeId,
    pub rate_units: u64,
    pub branches: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pub direct: BTreeSet<NodeId>,
}

impl Tree {
    /// Builds a tree from `middle -> receivers` lists; a middle node that is
    /// itself a receiver always serves itself.
    pub fn new(
        source: NodeId,
        branches: impl IntoIterator<Item = (NodeId, Vec<NodeId>)>,
        receivers: &[NodeId],
    ) -> Self {
        let mut map: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        let mut direct = BTreeSet::new();
        for (v, sinks) in branches {
            let entry = map.entry(v).or_default();
            entry.extend(sinks);
            if receivers.contains(&v) {
                entry.insert(v);
                direct.insert(v);
            }
        }
        Self {
            source,
            rate_units: 1,
            branches: map,
            direct,
        }
    }

    /// Overlay links carrying this tree (relay-to-own-sink hops are local).
    pub fn overlay_links(&self) -> Vec<OverlayLink> {
        let mut out = Vec::new();
        for (&v, sinks) in &self.branches {
            out.push(OverlayLink::new(self.source, v));
            for &t in sinks {
                if t != v {
                    out.push(OverlayLink::new(v, t));
                }
            }
        }
        out
    }

    pub fn sinks(&self) -> BTreeSet<NodeId> {
        self.branches.values().flatten().copied().collect()
    }

    fn same_shape(&self, other: &Tree) -> bool {
        self.source == other.source && self.branches == other.branches
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeSet {
    pub trees: Vec<Tree>,
    /// kbps carried by one unit tree.
    pub quantum: f64,
}

impl TreeSet {
    pub fn rate_of(&self, tree: &Tree) -> f64 {
        tree.rate_units as f64 * self.quantum
    }

    pub fn total_rate(&self) -> f64 {
        self.trees.iter().map(|t| self.rate_of(t)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    /// kbps of this tree set crossing each overlay link.
    pub fn overlay_usage(&self) -> BTreeMap<OverlayLink, f64> {
        let mut usage = BTreeMap::new();
        for t in &self.trees {
            for e in t.overlay_links() {
                *usage.entry(e).or_insert(0.0) += self.rate_of(t);
            }
        }
        usage
    }
}

/// Integer residual capacities in units of the packing quantum.
#[derive(Clone)]
struct Residual {
    to_mid: Vec<u64>,
    to_sink: Vec<Vec<u64>>,
}

impl Residual {
    fn from_graph(g: &SessionGraph, quantum: f64) -> Self {
        let units = |c: Option<f64>| c.map_or(0, |c| (c / quantum + 1e-9).floor() as u64);
        let to_mid: Vec<u64> = (0..g.num_middle()).map(|v| units(g.source_edge(v))).collect();
        let infinite = to_mid.iter().sum::<u64>() + 1;
        let to_sink = (0..g.num_middle())
            .map(|v| {
                (0..g.num_sinks())
                    .map(|j| {
                        if g.is_own_sink(v, j) {
                            infinite
                        } else {
                            units(g.sink_edge(v, j))
                        }
                    })
                    .collect()
            })
            .collect();
        Self { to_mid, to_sink }
    }

    fn min_min_cut(&self) -> u64 {
        let sinks = self.to_sink.first().map_or(0, Vec::len);
        (0..sinks)
            .map(|j| {
                self.to_mid
                    .iter()
                    .zip(&self.to_sink)
                    .map(|(a, row)| (*a).min(row[j]))
                    .sum::<u64>()
            })
            .min()
            .unwrap_or(0)
    }

    fn cap_mut(&mut self, edge: UnitEdge) -> &mut u64 {
        match edge {
            UnitEdge::ToMid(v) => &mut self.to_mid[v],
            UnitEdge::ToSink(v, j) => &mut self.to_sink[v][j],
        }
    }

    fn remove(&mut self, edges: &[UnitEdge], copies: u64) {
        for &e in edges {
            *self.cap_mut(e) -= copies;
        }
    }

    fn restore(&mut self, edges: &[UnitEdge], copies: u64) {
        for &e in edges {
            *self.cap_mut(e) += copies;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum UnitEdge {
    ToMid(usize),
    ToSink(usize, usize),
}

/// Exact search for a unit tree whose removal keeps the residual
/// min-min-cut at least `bound`, over the set `M` of middle vertices used.
///
/// With `a_v = c(s->v)` and `b_vj = c(v->t_j)`, removing the tree lowers the
/// cut of sink `j` by the number of `v` in `M` with `a_v <= b_vj`, or by one
/// if there is none and `j` hangs off some other `v` in `M`. Those counts only
/// grow with `M`, which prunes the search.
fn exact_tree(res: &Residual, bound: u64) -> Option<Vec<UnitEdge>> {
    let mids = res.to_mid.len();
    let n = res.to_sink.first().map_or(0, Vec::len);
    let value: Vec<u64> = (0..n)
        .map(|j| (0..mids).map(|v| res.to_mid[v].min(res.to_sink[v][j])).sum())
        .collect();
    if value.iter().any(|&x| x < bound) {
        return None;
    }
    let tight = |v: usize, j: usize| res.to_mid[v] >= 1 && res.to_mid[v] <= res.to_sink[v][j];
    let reach = |v: usize, j: usize| res.to_mid[v] >= 1 && res.to_sink[v][j] >= 1;

    struct Search<'a> {
        n: usize,
        allowed: Vec<u64>,
        tight: &'a dyn Fn(usize, usize) -> bool,
        reach: &'a dyn Fn(usize, usize) -> bool,
        chosen: Vec<usize>,
    }
    impl Search<'_> {
        fn covered(&self) -> bool {
            (0..self.n).all(|j| self.chosen.iter().any(|&v| (self.reach)(v, j)))
        }
        fn go(&mut self, v: usize, mids: usize, count: &mut [u64]) -> bool {
            if self.covered() {
                return true;
            }
            if v == mids {
                return false;
            }
            if (0..self.n).any(|j| (self.reach)(v, j)) {
                let hits: Vec<usize> = (0..self.n).filter(|&j| (self.tight)(v, j)).collect();
                if hits.iter().all(|&j| count[j] < self.allowed[j]) {
                    for &j in &hits {
                        count[j] += 1;
                    }
                    self.chosen.push(v);
                    if self.go(v + 1, mids, count) {
                        return true;
                    }
                    self.chosen.pop();
                    for &j in &hits {
                        count[j] -= 1;
                    }
                }
            }
            self.go(v + 1, mids, count)
        }
    }
    let mut search = Search {
        n,
        allowed: value.iter().map(|&x| x - bound).collect(),
        tight: &tight,
        reach: &reach,
        chosen: Vec::new(),
    };
    if !search.go(0, mids, &mut vec![0; n]) {
        return None;
    }
    let chosen = search.chosen;
    let mut edges: BTreeSet<UnitEdge> = BTreeSet::new();
    for j in 0..n {
        let v = chosen
            .iter()
            .copied()
            .find(|&v| tight(v, j))
            .or_else(|| chosen.iter().copied().find(|&v| reach(v, j)))?;
        edges.insert(UnitEdge::ToMid(v));
        edges.insert(UnitEdge::ToSink(v, j));
    }
    Some(edges.into_iter().collect())
}

/// Edge-by-edge greedy growth of one unit tree from `{s}`: among edges
/// leaving the connected set, take the one whose removal leaves the largest
/// residual min-min-cut, ties by smallest `(head, tail)`. Returns `None` when
/// no edge keeps the residual at `bound` or more.
fn greedy_tree(res: &mut Residual, bound: u64) -> Option<Vec<UnitEdge>> {
    let mids = res.to_mid.len();
    let n = res.to_sink.first().map_or(0, Vec::len);
    let mut in_mid = vec![false; mids];
    let mut in_sink = vec![false; n];
    let mut used: Vec<UnitEdge> = Vec::new();
    while in_sink.iter().any(|x| !x) {
        // Candidates in (head, tail) vertex order: source edges first.
        let candidates = (0..mids)
            .filter(|&v| !in_mid[v] && res.to_mid[v] >= 1)
            .map(UnitEdge::ToMid)
            .chain((0..mids).filter(|&v| in_mid[v]).flat_map(|v| {
                let (res, in_sink) = (&*res, &in_sink);
                (0..n)
                    .filter(move |&j| !in_sink[j] && res.to_sink[v][j] >= 1)
                    .map(move |j| UnitEdge::ToSink(v, j))
            }))
            .collect::<Vec<_>>();
        let mut best: Option<(u64, UnitEdge)> = None;
        for e in candidates {
            *res.cap_mut(e) -= 1;
            let after = res.min_min_cut();
            *res.cap_mut(e) += 1;
            if best.is_none_or(|(b, _)| after > b) {
                best = Some((after, e));
            }
        }
        let best = best.filter(|&(after, _)| after >= bound);
        let Some((_, e)) = best else {
            res.restore(&used, 1);
            return None;
        };
        *res.cap_mut(e) -= 1;
        used.push(e);
        match e {
            UnitEdge::ToMid(v) => in_mid[v] = true,
            UnitEdge::ToSink(_, j) => in_sink[j] = true,
        }
    }
    res.restore(&used, 1);
    Some(used)
}

/// Packs unit-rate two-hop trees on `g` after quantizing capacities down to
/// multiples of `quantum` kbps. Repeated copies of one tree are packed in a
/// single step when the residual minimum allows it.
///
/// The packed total equals the quantized min-min-cut whenever every residual
/// along the way admits a tree that lowers it by one. Two-hop trees cannot
/// always reach the cut: relays that each cover only some receivers force
/// every tree through several source edges (see `cyclic_relays_fall_short`),
/// and the total then stays below it.
pub fn pack_trees(g: &SessionGraph, quantum: f64) -> TreeSet {
    assert!(quantum > 0.0, "quantum must be positive");
    let res = Residual::from_graph(g, quantum);
    let cut = res.min_min_cut();
    let mut packs = greedy_pack(res.clone());
    let total = |p: &[(Vec<UnitEdge>, u64)]| p.iter().map(|(_, c)| c).sum::<u64>();
    if total(&packs) < cut {
        if let Some(alt) = lp::lp_rounding(res, &own_sinks(g)) {
            if total(&alt) > total(&packs) {
                packs = alt;
            }
        }
    }
    let trees = packs
        .into_iter()
        .map(|(edges, copies)| Tree {
            rate_units: copies,
            ..unit_tree(g, &edges)
        })
        .collect();
    merge(trees, quantum)
}

/// Optimal fractional packing of two-hop trees on `g` after quantization, in
/// kbps. It bounds every integral packing from above. `None` when the graph
/// has too many usable middle vertices to price exhaustively.
pub fn fractional_packing_bound(g: &SessionGraph, quantum: f64) -> Option<f64> {
    assert!(quantum > 0.0, "quantum must be positive");
    let res = Residual::from_graph(g, quantum);
    lp::fractional(&res, own_sinks(g)).map(|f| f.value * quantum)
}

fn own_sinks(g: &SessionGraph) -> Vec<Vec<bool>> {
    (0..g.num_middle())
        .map(|v| (0..g.num_sinks()).map(|j| g.is_own_sink(v, j)).collect())
        .collect()
}

/// Greedy packing in units: one unit tree per round, then as many further
/// copies of it as each lower the residual cut by exactly one.
fn greedy_pack(mut res: Residual) -> Vec<(Vec<UnitEdge>, u64)> {
    let mut packs = Vec::new();
    let mut k = res.min_min_cut();
    while k >= 1 {
        // The greedy keeps K(residual) >= k - 1 on the usual instances. When
        // it dead-ends, the exact search either finds a tree that does or
        // proves none exists, in which case the tree keeping the largest
        // residual is packed and the total falls short of the cut.
        let found = greedy_tree(&mut res, k - 1)
            .or_else(|| (0..k).rev().find_map(|bound| exact_tree(&res, bound)));
        let Some(mut used) = found else {
            debug_assert!(false, "a positive cut always admits a unit tree");
            break;
        };
        res.remove(&used, 1);

        // Middle vertices that ended up feeding nothing give their edge back.
        let feeds = |v: usize, used: &[UnitEdge]| {
            used.iter()
                .any(|e| matches!(e, UnitEdge::ToSink(w, _) if *w == v))
        };
        let idle: Vec<UnitEdge> = used
            .iter()
            .copied()
            .filter(|e| matches!(e, UnitEdge::ToMid(v) if !feeds(*v, &used)))
            .collect();
        res.restore(&idle, 1);
        used.retain(|e| !idle.contains(e));

        // Each further copy lowers the residual by at least one; take as many
        // as lower it by exactly one.
        let target = res.min_min_cut();
        let headroom = used.iter().map(|&e| *res.cap_mut(e)).min().unwrap_or(0);
        let (mut lo, mut hi) = (0u64, headroom);
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            res.remove(&used, mid);
            let ok = res.min_min_cut() + mid == target;
            res.restore(&used, mid);
            if ok {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        res.remove(&used, lo);
        packs.push((used, 1 + lo));
        k = res.min_min_cut();
        debug_assert_eq!(k, target - lo);
    }
    packs
}

fn unit_tree(g: &SessionGraph, used: &[UnitEdge]) -> Tree {
    let mut branches: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    let mut direct = BTreeSet::new();
    for &e in used {
        match e {
            UnitEdge::ToMid(v) => {
                branches.entry(g.middle_node(v)).or_default();
            }
            UnitEdge::ToSink(v, j) => {
                let t = g.receivers()[j];
                branches.entry(g.middle_node(v)).or_default().insert(t);
                if g.is_own_sink(v, j) {
                    direct.insert(t);
                }
            }
        }
    }
    Tree {
        source: g.source(),
        rate_units: 1,
        branches,
        direct,
    }
}

fn merge(trees: Vec<Tree>, quantum: f64) -> TreeSet {
    let mut out: Vec<Tree> = Vec::new();
    for t in trees {
        match out.last_mut() {
            Some(last) if last.same_shape(&t) => last.rate_units += t.rate_units,
            _ => out.push(t),
        }
    }
    TreeSet {
        trees: out,
        quantum,
    }
}

/// Largest source-to-receiver propagation delay along the tree, in ms.
/// Overlay links missing from `prop_delays` count as unbounded.
pub fn tree_delay(tree: &Tree, prop_delays: &BTreeMap<OverlayLink, f64>) -> f64 {
    let d = |e: OverlayLink| prop_delays.get(&e).copied().unwrap_or(f64::INFINITY);
    let mut worst: f64 = 0.0;
    for (&v, sinks) in &tree.branches {
        let first = d(OverlayLink::new(tree.source, v));
        for &t in sinks {
            let total = if t == v { first } else { first + d(OverlayLink::new(v, t)) };
            worst = worst.max(total);
        }
    }
    worst
}

/// Vertex-level view of a tree's edges inside `g`, for feasibility checks.
pub fn tree_vertex_edges(g: &SessionGraph, tree: &Tree) -> Vec<(Vertex, Vertex)> {
    let mid_index = |node: NodeId| (0..g.num_middle()).find(|&v| g.middle_node(v) == node);
    let mut out = Vec::new();
    for (&v, sinks) in &tree.branches {
        let Some(vi) = mid_index(v) else { continue };
        out.push((Vertex::Source, g.middle_vertex(vi)));
        for &t in sinks {
            if let Some(j) = g.receiver_index(t) {
                out.push((g.middle_vertex(vi), Vertex::Sink(j)));
            }
        }
    }
    out
}
