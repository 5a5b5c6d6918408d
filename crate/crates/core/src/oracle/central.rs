//! Centralized solvers for the delay-bounded utility maximization problem.

use std::collections::{BTreeMap, BTreeSet};

use super::barrier::{Program, SparseRow};
use super::OracleError;
use crate::control::UtilityParams;
use crate::overlay::{
    build_session_graph, OverlayError, OverlayLink, OverlayRoutes, RateAllocation, Session,
    SessionGraph,
};
use crate::treepack::Tree;
use crate::underlay::{LinkId, NodeId, UnderlayGraph};

/// Relative duality-gap target of the interior-point solves.
const GAP_TOL: f64 = 1e-8;

/// A network snapshot with routes and propagation delays resolved once.
#[derive(Clone, Debug)]
pub struct Instance<'a> {
    pub graph: &'a UnderlayGraph,
    pub sessions: &'a [Session],
    pub routes: OverlayRoutes,
    pub prop_delays: BTreeMap<OverlayLink, f64>,
    pub delay_bound: f64,
}

impl<'a> Instance<'a> {
    pub fn new(graph: &'a UnderlayGraph, sessions: &'a [Session], delay_bound: f64) -> Self {
        let routes = OverlayRoutes::build(graph, sessions);
        let prop_delays = routes.prop_delays(graph);
        Self {
            graph,
            sessions,
            routes,
            prop_delays,
            delay_bound,
        }
    }

    /// Capacity left for sessions after cross traffic; zero on down links.
    pub fn residual(&self, l: LinkId) -> f64 {
        let link = self.graph.link(l);
        if link.up {
            (link.capacity - link.cross_traffic).max(0.0)
        } else {
            0.0
        }
    }

    /// Whether `e` has a route with spare capacity on every link.
    fn live(&self, e: OverlayLink) -> bool {
        self.routes
            .get(e)
            .is_some_and(|r| r.links.iter().all(|&l| self.residual(l) > 1e-9))
    }

    /// Session graph with unit capacity on every overlay link that survives
    /// routing and delay pruning.
    pub fn shape(&self, m: usize) -> Result<SessionGraph, OverlayError> {
        let s = &self.sessions[m];
        let mut ones = RateAllocation::new();
        for e in s.overlay_links() {
            ones.set(s.id(), e, 1.0);
        }
        build_session_graph(s, &ones, &self.prop_delays, self.delay_bound)
    }

    /// Physical links crossed by `e`, with multiplicity.
    fn route_links(&self, e: OverlayLink) -> &[LinkId] {
        self.routes.get(e).map_or(&[], |r| r.links.as_slice())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CentralSolution {
    /// Tight optimal allocation: each overlay link carries exactly the flow
    /// routed over it.
    pub allocation: RateAllocation,
    /// Session rate keyed by source node.
    pub rates: BTreeMap<NodeId, f64>,
    pub total_utility: f64,
    /// Capacity multipliers per physical link, in utils per kbps.
    pub prices: Vec<f64>,
}

fn check_utilities(inst: &Instance, utilities: &[UtilityParams]) -> Result<(), OracleError> {
    if utilities.len() != inst.sessions.len() {
        return Err(OracleError::Solver(format!(
            "{} utility entries for {} sessions",
            utilities.len(),
            inst.sessions.len()
        )));
    }
    for u in utilities {
        u.validate().map_err(OracleError::Solver)?;
    }
    Ok(())
}

/// Adds per-link capacity rows for the given `(var, overlay link)` usages
/// and returns a step size that keeps `eps` on every var strictly feasible.
fn capacity_rows(
    inst: &Instance,
    prog: &mut Program,
    usage: &[(usize, OverlayLink)],
) -> (Vec<(LinkId, usize)>, f64) {
    let mut rows: BTreeMap<LinkId, SparseRow> = BTreeMap::new();
    for &(var, e) in usage {
        for &l in inst.route_links(e) {
            rows.entry(l).or_default().push((var, 1.0));
        }
    }
    let mut eps: f64 = 1.0;
    let mut index = Vec::new();
    for (l, row) in rows {
        let cap = inst.residual(l);
        eps = eps.min(cap / (2.0 * row.len() as f64));
        index.push((l, prog.constraints.len()));
        prog.constraints.push((row, cap));
    }
    (index, eps)
}

/// Solves the full delay-bounded problem: per-receiver flows over two-hop
/// paths bounded by per-session overlay link rates, which share physical
/// capacity across sessions.
pub fn solve_mp_central(
    inst: &Instance,
    utilities: &[UtilityParams],
) -> Result<CentralSolution, OracleError> {
    check_utilities(inst, utilities)?;
    let mut prog = Program::default();
    let mut usage: Vec<(usize, OverlayLink)> = Vec::new();
    // Per session: map overlay link -> var, path vars per sink, rate var.
    struct Layout {
        c: BTreeMap<OverlayLink, usize>,
        paths: Vec<Vec<(usize, OverlayLink, Option<OverlayLink>)>>,
        rate: Option<usize>,
    }
    let mut layouts = Vec::new();
    for (m, s) in inst.sessions.iter().enumerate() {
        let g = inst.shape(m).map_err(|e| OracleError::Infeasible(e.to_string()))?;
        let mut layout = Layout {
            c: BTreeMap::new(),
            paths: vec![Vec::new(); g.num_sinks()],
            rate: None,
        };
        let mut c_var = |e: OverlayLink, prog: &mut Program, layout: &mut Layout| {
            *layout.c.entry(e).or_insert_with(|| {
                let v = prog.add_var();
                usage.push((v, e));
                v
            })
        };
        for v in 0..g.num_middle() {
            if g.source_edge(v).is_none() {
                continue;
            }
            let up = OverlayLink::new(s.source(), g.middle_node(v));
            if !inst.live(up) {
                continue;
            }
            for j in 0..g.num_sinks() {
                let down = if g.is_own_sink(v, j) {
                    None
                } else if g.sink_edge(v, j).is_some() {
                    let e = OverlayLink::new(g.middle_node(v), g.receivers()[j]);
                    if !inst.live(e) {
                        continue;
                    }
                    Some(e)
                } else {
                    continue;
                };
                c_var(up, &mut prog, &mut layout);
                if let Some(e) = down {
                    c_var(e, &mut prog, &mut layout);
                }
                let f = prog.add_var();
                layout.paths[j].push((f, up, down));
            }
        }
        if layout.paths.iter().all(|p| !p.is_empty()) {
            let r = prog.add_var();
            layout.rate = Some(r);
            prog.objective
                .push((utilities[m].beta, vec![(r, 1.0)], utilities[m].delta));
            for paths in &layout.paths {
                let mut row: SparseRow = vec![(r, 1.0)];
                row.extend(paths.iter().map(|&(f, _, _)| (f, -1.0)));
                prog.constraints.push((row, 0.0));
            }
        }
        for paths in &layout.paths {
            for &(f, up, down) in paths {
                prog.constraints.push((vec![(f, 1.0), (layout.c[&up], -1.0)], 0.0));
                if let Some(e) = down {
                    prog.constraints.push((vec![(f, 1.0), (layout.c[&e], -1.0)], 0.0));
                }
            }
        }
        layouts.push(layout);
    }
    let (cap_index, eps) = capacity_rows(inst, &mut prog, &usage);

    let mut x0 = vec![eps; prog.num_vars];
    for layout in &layouts {
        for paths in &layout.paths {
            for &(f, _, _) in paths {
                x0[f] = eps / 2.0;
            }
        }
        if let Some(r) = layout.rate {
            let least = layout.paths.iter().map(Vec::len).min().unwrap_or(0);
            x0[r] = least as f64 * eps / 4.0;
        }
    }
    let scale: f64 = utilities.iter().map(|u| u.beta).sum::<f64>().max(1.0);
    let sol = prog.solve(x0, GAP_TOL * scale)?;

    let mut allocation = RateAllocation::new();
    let mut rates = BTreeMap::new();
    let mut total_utility = 0.0;
    for ((m, s), layout) in inst.sessions.iter().enumerate().zip(&layouts) {
        for e in s.overlay_links() {
            allocation.set(s.id(), e, 0.0);
        }
        let mut tight: BTreeMap<OverlayLink, f64> = BTreeMap::new();
        let mut rate = f64::INFINITY;
        for paths in &layout.paths {
            let mut sum = 0.0;
            for &(f, up, down) in paths {
                let flow = sol.x[f];
                sum += flow;
                let t = tight.entry(up).or_insert(0.0);
                *t = t.max(flow);
                if let Some(e) = down {
                    let t = tight.entry(e).or_insert(0.0);
                    *t = t.max(flow);
                }
            }
            rate = rate.min(sum);
        }
        for (e, c) in tight {
            allocation.set(s.id(), e, c);
        }
        let rate = if layout.rate.is_some() { rate } else { 0.0 };
        total_utility += crate::control::utility(rate, &utilities[m]);
        rates.insert(s.id(), rate);
    }
    let mut prices = vec![0.0; inst.graph.links().len()];
    for (l, row) in cap_index {
        prices[l.0] = sol.duals[row];
    }
    Ok(CentralSolution {
        allocation,
        rates,
        total_utility,
        prices,
    })
}

/// Whether every overlay link of `tree` survives pruning in `g` and the tree
/// reaches exactly the session's receivers.
fn tree_fits(g: &SessionGraph, tree: &Tree) -> bool {
    let receivers: BTreeSet<NodeId> = g.receivers().iter().copied().collect();
    if tree.sinks() != receivers {
        return false;
    }
    for (&v, sinks) in &tree.branches {
        let Some(vi) = (0..g.num_middle()).find(|&i| g.middle_node(i) == v) else {
            return false;
        };
        if g.source_edge(vi).is_none() {
            return false;
        }
        for &t in sinks {
            let Some(j) = g.receiver_index(t) else { return false };
            if !g.is_own_sink(vi, j) && g.sink_edge(vi, j).is_none() {
                return false;
            }
        }
    }
    true
}

/// Maximizes total utility when session `m` may only use the trees in
/// `catalogs[m]`. Trees that violate routing, the delay bound, or cross a
/// saturated link are dropped; a session left without trees gets rate 0.
pub fn solve_restricted(
    inst: &Instance,
    catalogs: &[Vec<Tree>],
    utilities: &[UtilityParams],
) -> Result<Vec<f64>, OracleError> {
    check_utilities(inst, utilities)?;
    if catalogs.len() != inst.sessions.len() {
        return Err(OracleError::Solver("one catalog per session required".into()));
    }
    let mut prog = Program::default();
    let mut rows: BTreeMap<LinkId, BTreeMap<usize, f64>> = BTreeMap::new();
    let mut session_vars: Vec<Vec<usize>> = Vec::new();
    for (m, catalog) in catalogs.iter().enumerate() {
        let mut vars = Vec::new();
        if let Ok(g) = inst.shape(m) {
            for tree in catalog {
                let links = tree.overlay_links();
                if !tree_fits(&g, tree) || !links.iter().all(|&e| inst.live(e)) {
                    continue;
                }
                let x = prog.add_var();
                for e in links {
                    for &l in inst.route_links(e) {
                        *rows.entry(l).or_default().entry(x).or_insert(0.0) += 1.0;
                    }
                }
                vars.push(x);
            }
        }
        if !vars.is_empty() {
            let u = &utilities[m];
            prog.objective
                .push((u.beta, vars.iter().map(|&x| (x, 1.0)).collect(), u.delta));
        }
        session_vars.push(vars);
    }
    let mut eps: f64 = 1.0;
    for (l, row) in rows {
        let cap = inst.residual(l);
        let weight: f64 = row.values().sum();
        eps = eps.min(cap / (2.0 * weight));
        prog.constraints.push((row.into_iter().collect(), cap));
    }
    let scale: f64 = utilities.iter().map(|u| u.beta).sum::<f64>().max(1.0);
    let sol = prog.solve(vec![eps; prog.num_vars], GAP_TOL * scale)?;
    Ok(session_vars
        .iter()
        .map(|vars| vars.iter().fold(0.0, |acc, &x| acc + sol.x[x]))
        .collect())
}

/// The one-hop star: the source sends straight to every receiver.
pub fn simulcast_catalog(s: &Session) -> Vec<Tree> {
    let branches = s.receivers().iter().map(|&r| (r, vec![]));
    vec![Tree::new(s.source(), branches, s.receivers())]
}

/// The star, every depth-2 tree through one receiver, and every depth-2
/// tree through one helper.
pub fn mutualcast_catalog(s: &Session) -> Vec<Tree> {
    let mut out = simulcast_catalog(s);
    for &v in s.receivers().iter().chain(s.helpers()) {
        let others: Vec<NodeId> = s.receivers().iter().copied().filter(|&r| r != v).collect();
        out.push(Tree::new(s.source(), [(v, others)], s.receivers()));
    }
    out
}

/// Every tree of depth at most two: a set of first-hop middle nodes, with
/// each remaining receiver attached to one of them. Helpers must serve at
/// least one receiver. Exponential; meant for tiny instances.
pub fn two_hop_catalog(s: &Session) -> Vec<Tree> {
    let mids: Vec<NodeId> = s.middle_nodes().collect();
    let receivers = s.receivers();
    let mut out = Vec::new();
    for mask in 1u32..(1 << mids.len()) {
        let chosen: Vec<NodeId> = (0..mids.len())
            .filter(|&i| mask & (1 << i) != 0)
            .map(|i| mids[i])
            .collect();
        let rest: Vec<NodeId> = receivers
            .iter()
            .copied()
            .filter(|r| !chosen.contains(r))
            .collect();
        let total = chosen.len().pow(rest.len() as u32);
        for code in 0..total {
            let mut branches: BTreeMap<NodeId, Vec<NodeId>> =
                chosen.iter().map(|&v| (v, Vec::new())).collect();
            let mut c = code;
            for &r in &rest {
                branches.get_mut(&chosen[c % chosen.len()]).unwrap().push(r);
                c /= chosen.len();
            }
            let idle_helper = branches
                .iter()
                .any(|(v, sinks)| !receivers.contains(v) && sinks.is_empty());
            if !idle_helper {
                out.push(Tree::new(s.source(), branches, receivers));
            }
        }
    }
    out
}
