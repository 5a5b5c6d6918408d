//! Deterministic discrete-time fluid simulation of the conferencing overlay.

mod baselines;
mod overhead;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use baselines::{mutualcast_max, simulcast_max};
pub use overhead::{
    estimate_overhead, OverheadConfig, OverheadEstimate, HEADER_BYTES, LINK_STATE_KBPS,
    RATE_CONTROL_KBPS,
};

use crate::control::{quickstart_params, rate_update, utility, utility_deriv, ControlParams, UtilityParams};
use crate::cut::critical_cut;
use crate::oracle::TrajectoryPoint;
use crate::overlay::{build_session_graph, link_load, OverlayLink, OverlayRoutes, RateAllocation, Session};
use crate::treepack::{pack_trees, TreeSet};
use crate::underlay::{loss_fraction, LinkId, LinkPriceState, NodeId, UnderlayGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EventKind {
    AddCrossTraffic { link: LinkId, kbps: f64 },
    RemoveCrossTraffic(LinkId),
    FailLink(LinkId),
    RestoreLink(LinkId),
    Join(NodeId),
    Leave(NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioEvent {
    /// Seconds from the start of the run.
    pub at: f64,
    pub kind: EventKind,
}

/// Who takes part: every participant sources a session to all others, and
/// helpers may forward for any session.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Conference {
    pub participants: Vec<NodeId>,
    pub helpers: Vec<NodeId>,
}

impl Conference {
    pub fn sessions(&self) -> Vec<Session> {
        let mut parts = self.participants.clone();
        parts.sort();
        parts
            .iter()
            .filter_map(|&s| {
                Session::new(
                    s,
                    parts.iter().copied().filter(|&r| r != s),
                    self.helpers.iter().copied().filter(|h| !parts.contains(h)),
                )
                .ok()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimParams {
    pub control: ControlParams,
    pub utility: UtilityParams,
    /// Per-session utility scale overriding `utility.beta`.
    pub session_beta: BTreeMap<NodeId, f64>,
    pub tick_ms: f64,
    pub sample_interval_s: f64,
    /// kbps per packed unit tree.
    pub quantum: f64,
    /// Starting rate of every overlay link at time zero.
    pub initial_rate: f64,
    /// Starting rate of overlay links created by a join.
    pub join_rate: f64,
    /// Deliver cut information immediately instead of one report later.
    pub instant_control: bool,
    /// Leaves also discard all control messages in flight.
    pub crash_leave: bool,
    pub record_trajectory: bool,
    /// Reserved for stochastic extensions; the default model is deterministic.
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            control: ControlParams::default(),
            utility: UtilityParams::default(),
            session_beta: BTreeMap::new(),
            tick_ms: 10.0,
            sample_interval_s: 1.0,
            quantum: 1.0,
            initial_rate: 0.0,
            join_rate: 1.0,
            instant_control: false,
            crash_leave: false,
            record_trajectory: false,
            seed: 0,
        }
    }
}

impl SimParams {
    pub fn session_utility(&self, m: NodeId) -> UtilityParams {
        UtilityParams {
            beta: self.session_beta.get(&m).copied().unwrap_or(self.utility.beta),
            ..self.utility
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SessionSample {
    pub session: NodeId,
    /// Packed tree rate the source transmits.
    pub send_kbps: f64,
    /// Send rate net of path loss, averaged over receivers.
    pub recv_kbps: f64,
    pub delay_ms: f64,
    pub loss: f64,
    pub utility: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub t: f64,
    pub sessions: Vec<SessionSample>,
    pub total_utility: f64,
    pub link_load: Vec<f64>,
    pub link_price_ms: Vec<f64>,
}

impl MetricsRow {
    pub fn session(&self, m: NodeId) -> Option<&SessionSample> {
        self.sessions.iter().find(|s| s.session == m)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimOutput {
    pub rows: Vec<MetricsRow>,
    /// One point per rate-control iteration when recording was requested.
    pub trajectory: Vec<TrajectoryPoint>,
}

impl SimOutput {
    /// Send-rate series `(t, kbps)` of one session.
    pub fn series(&self, m: NodeId) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.session(m).map(|s| (r.t, s.send_kbps)))
            .collect()
    }

    /// Mean send rate of `m` over samples with `from <= t <= to`.
    pub fn mean_rate(&self, m: NodeId, from: f64, to: f64) -> f64 {
        let xs: Vec<f64> = self
            .series(m)
            .into_iter()
            .filter(|(t, _)| *t >= from - 1e-9 && *t <= to + 1e-9)
            .map(|(_, r)| r)
            .collect();
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    }
}

/// What a source tells the rest of the overlay after packing.
#[derive(Clone, Debug, Default, PartialEq)]
struct ControlInfo {
    u_deriv: f64,
    cut: BTreeSet<OverlayLink>,
}

fn steps_per(interval_ms: f64, tick_ms: f64, what: &str) -> Result<u64, SimError> {
    let n = (interval_ms / tick_ms).round();
    if n < 1.0 || (n * tick_ms - interval_ms).abs() > 1e-9 * interval_ms.max(1.0) {
        return Err(SimError::Config(format!(
            "tick {tick_ms} ms does not divide {what} {interval_ms} ms"
        )));
    }
    Ok(n as u64)
}

struct Engine<'p> {
    params: &'p SimParams,
    graph: UnderlayGraph,
    helpers: Vec<NodeId>,
    participants: BTreeSet<NodeId>,
    sessions: Vec<Session>,
    routes: OverlayRoutes,
    prop_delays: BTreeMap<OverlayLink, f64>,
    alloc: RateAllocation,
    prices: LinkPriceState,
    active: BTreeMap<NodeId, ControlInfo>,
    pending: Vec<(u64, NodeId, ControlInfo)>,
    packed: BTreeMap<NodeId, TreeSet>,
    // Window sums over the current rate interval.
    sum_loss: Vec<f64>,
    sum_price: Vec<f64>,
    sum_load: Vec<f64>,
    window_ticks: u64,
    loads: Vec<f64>,
    losses: Vec<f64>,
}

impl<'p> Engine<'p> {
    fn new(topology: &UnderlayGraph, conf: &Conference, params: &'p SimParams) -> Self {
        let sessions = conf.sessions();
        let mut alloc = RateAllocation::new();
        for s in &sessions {
            for e in s.overlay_links() {
                alloc.set(s.id(), e, params.initial_rate);
            }
        }
        let nl = topology.links().len();
        let mut eng = Self {
            params,
            graph: topology.clone(),
            helpers: conf.helpers.clone(),
            participants: conf.participants.iter().copied().collect(),
            sessions,
            routes: OverlayRoutes::default(),
            prop_delays: BTreeMap::new(),
            alloc,
            prices: LinkPriceState::zeros(nl),
            active: BTreeMap::new(),
            pending: Vec::new(),
            packed: BTreeMap::new(),
            sum_loss: vec![0.0; nl],
            sum_price: vec![0.0; nl],
            sum_load: vec![0.0; nl],
            window_ticks: 0,
            loads: vec![0.0; nl],
            losses: vec![0.0; nl],
        };
        eng.reroute();
        eng
    }

    fn reroute(&mut self) {
        self.routes = OverlayRoutes::build(&self.graph, &self.sessions);
        self.prop_delays = self.routes.prop_delays(&self.graph);
    }

    fn rebuild_sessions(&mut self) {
        let conf = Conference {
            participants: self.participants.iter().copied().collect(),
            helpers: self.helpers.clone(),
        };
        self.sessions = conf.sessions();
    }

    fn apply(&mut self, ev: &ScenarioEvent, tick: u64) -> Result<(), SimError> {
        let check_link = |l: LinkId, g: &UnderlayGraph| {
            if l.0 < g.links().len() {
                Ok(())
            } else {
                Err(SimError::Config(format!("event at {} s: unknown link {l}", ev.at)))
            }
        };
        let check_node = |n: NodeId, g: &UnderlayGraph| {
            if n.0 < g.nodes().len() {
                Ok(())
            } else {
                Err(SimError::Config(format!("event at {} s: unknown node {n}", ev.at)))
            }
        };
        match ev.kind {
            EventKind::AddCrossTraffic { link, kbps } => {
                check_link(link, &self.graph)?;
                self.graph
                    .set_cross_traffic(link, kbps)
                    .map_err(|e| SimError::Config(e.to_string()))?;
            }
            EventKind::RemoveCrossTraffic(link) => {
                check_link(link, &self.graph)?;
                self.graph.set_cross_traffic(link, 0.0).expect("zero is valid");
            }
            EventKind::FailLink(link) => {
                check_link(link, &self.graph)?;
                self.graph.set_up(link, false);
                self.prices.prices_ms[link.0] = 0.0;
                self.reroute();
            }
            EventKind::RestoreLink(link) => {
                check_link(link, &self.graph)?;
                self.graph.set_up(link, true);
                self.reroute();
            }
            EventKind::Join(node) => {
                check_node(node, &self.graph)?;
                if !self.participants.insert(node) {
                    return Err(SimError::Config(format!(
                        "event at {} s: {} already participates",
                        ev.at,
                        self.graph.node_name(node)
                    )));
                }
                self.rebuild_sessions();
                for s in &self.sessions {
                    for e in s.overlay_links() {
                        if !self.alloc.contains(s.id(), e) {
                            self.alloc.set(s.id(), e, self.params.join_rate);
                        }
                    }
                }
                self.reroute();
            }
            EventKind::Leave(node) => {
                check_node(node, &self.graph)?;
                if !self.participants.remove(&node) {
                    return Err(SimError::Config(format!(
                        "event at {} s: {} is not a participant",
                        ev.at,
                        self.graph.node_name(node)
                    )));
                }
                self.helpers.retain(|&h| h != node);
                self.rebuild_sessions();
                let live: BTreeSet<(NodeId, OverlayLink)> = self
                    .sessions
                    .iter()
                    .flat_map(|s| s.overlay_links().into_iter().map(move |e| (s.id(), e)))
                    .collect();
                self.alloc.remove_where(|m, e| !live.contains(&(m, e)));
                self.active.retain(|m, _| *m != node);
                self.packed.retain(|m, _| *m != node);
                if self.params.crash_leave {
                    self.pending.clear();
                } else {
                    self.pending.retain(|(_, m, _)| *m != node);
                }
                self.reroute();
            }
        }
        let _ = tick;
        Ok(())
    }

    /// Packs every session on the exported allocation and returns the
    /// control information each source publishes.
    fn report(&mut self, t: f64) -> Vec<(NodeId, ControlInfo)> {
        let mut out = Vec::new();
        for s in &self.sessions {
            let u = self.params.session_utility(s.id());
            let (_, beta) = quickstart_params(t, &self.params.control, &u);
            let u_eff = UtilityParams { beta, ..u };
            match build_session_graph(s, &self.alloc, &self.prop_delays, self.params.control.delay_bound) {
                Ok(g) => {
                    let cut = critical_cut(&g);
                    let u_deriv = utility_deriv(cut.value, &u_eff);
                    debug_assert!(u_deriv <= u_eff.max_deriv() + 1e-12);
                    self.packed.insert(s.id(), pack_trees(&g, self.params.quantum));
                    out.push((
                        s.id(),
                        ControlInfo {
                            u_deriv,
                            cut: cut.cut_edges.into_iter().collect(),
                        },
                    ));
                }
                Err(_) => {
                    // Orphaned receivers: nothing can be delivered.
                    self.packed.remove(&s.id());
                    out.push((s.id(), ControlInfo::default()));
                }
            }
        }
        out
    }

    fn fluid_step(&mut self, dt_s: f64) {
        self.loads = link_load(&self.graph, &self.alloc, &self.routes);
        for l in self.graph.links() {
            let i = l.id.0;
            self.losses[i] = if l.up { loss_fraction(self.loads[i], l.capacity) } else { 0.0 };
        }
        self.prices.step(&self.graph, &self.loads, dt_s);
        for i in 0..self.loads.len() {
            self.sum_loss[i] += self.losses[i];
            self.sum_price[i] += self.prices.prices_ms[i];
            self.sum_load[i] += self.loads[i];
        }
        self.window_ticks += 1;
    }

    fn rate_step(&mut self, t: f64, trajectory: Option<&mut Vec<TrajectoryPoint>>) {
        let w = self.window_ticks.max(1) as f64;
        let avg_loss: Vec<f64> = self.sum_loss.iter().map(|x| x / w).collect();
        let avg_price_s: Vec<f64> = self.sum_price.iter().map(|x| x / w / 1000.0).collect();
        let avg_load: Vec<f64> = self.sum_load.iter().map(|x| x / w).collect();

        let mut updates = Vec::with_capacity(self.alloc.len());
        let mut primal2 = 0.0;
        for (m, e, c) in self.alloc.iter() {
            let (loss, queue) = match self.routes.get(e) {
                Some(r) => (
                    r.links.iter().map(|l| avg_loss[l.0]).sum::<f64>().min(1.0),
                    r.links.iter().map(|l| avg_price_s[l.0]).sum::<f64>(),
                ),
                None => (0.0, 0.0),
            };
            let info = self.active.get(&m);
            let is_cut = info.is_some_and(|i| i.cut.contains(&e));
            let u_deriv = info.map_or(0.0, |i| i.u_deriv);
            let u = self.params.session_utility(m);
            let (alpha, _) = quickstart_params(t, &self.params.control, &u);
            let next = rate_update(c, is_cut, u_deriv, loss, queue, alpha);
            primal2 += ((next - c) / alpha).powi(2);
            updates.push((m, e, next));
        }
        if let Some(traj) = trajectory {
            let mut dual2 = 0.0;
            for l in self.graph.links().iter().filter(|l| l.up) {
                let d = avg_load[l.id.0] - l.capacity;
                if self.prices.prices_ms[l.id.0] > 0.0 || d > 0.0 {
                    dual2 += d * d;
                }
            }
            traj.push(TrajectoryPoint {
                c: self.alloc.clone(),
                p: self.prices.prices_ms.iter().map(|p| p / 1000.0).collect(),
                primal_norm: primal2.sqrt(),
                dual_norm: dual2.sqrt(),
            });
        }
        for (m, e, c) in updates {
            self.alloc.set(m, e, c);
        }
        for v in [&mut self.sum_loss, &mut self.sum_price, &mut self.sum_load] {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        self.window_ticks = 0;
    }

    fn sample(&self, t: f64) -> MetricsRow {
        let edge_delay = |e: OverlayLink| -> Option<(f64, f64)> {
            let r = self.routes.get(e)?;
            let prop = self.prop_delays.get(&e).copied().unwrap_or(0.0);
            let queue: f64 = r.links.iter().map(|l| self.prices.get(*l)).sum();
            let loss: f64 = r.links.iter().map(|l| self.losses[l.0]).sum::<f64>().min(1.0);
            Some((prop + queue, loss))
        };
        let mut sessions = Vec::new();
        let mut total = 0.0;
        for s in &self.sessions {
            let u = self.params.session_utility(s.id());
            let (mut send, mut recv, mut delay, mut loss) = (0.0, 0.0, 0.0, 0.0);
            if let Some(ts) = self.packed.get(&s.id()) {
                for tree in &ts.trees {
                    let rate = ts.rate_of(tree);
                    let (mut d_sum, mut l_sum, mut n) = (0.0, 0.0, 0.0);
                    for (&v, sinks) in &tree.branches {
                        let (d1, l1) = edge_delay(OverlayLink::new(s.source(), v)).unwrap_or((0.0, 1.0));
                        for &sink in sinks {
                            let (d2, l2) = if sink == v {
                                (0.0, 0.0)
                            } else {
                                edge_delay(OverlayLink::new(v, sink)).unwrap_or((0.0, 1.0))
                            };
                            d_sum += d1 + d2;
                            l_sum += (l1 + l2).min(1.0);
                            n += 1.0;
                        }
                    }
                    if n > 0.0 {
                        send += rate;
                        delay += rate * d_sum / n;
                        loss += rate * l_sum / n;
                        recv += rate * (1.0 - l_sum / n);
                    }
                }
            }
            if send > 0.0 {
                delay /= send;
                loss /= send;
            }
            let util = utility(send, &u);
            total += util;
            sessions.push(SessionSample {
                session: s.id(),
                send_kbps: send,
                recv_kbps: recv,
                delay_ms: delay,
                loss,
                utility: util,
            });
        }
        MetricsRow {
            t,
            sessions,
            total_utility: total,
            link_load: self.loads.clone(),
            link_price_ms: self.prices.prices_ms.clone(),
        }
    }
}

/// Network and membership after applying every event with `at <= t`.
pub fn state_at(
    topology: &UnderlayGraph,
    conference: &Conference,
    scenario: &[ScenarioEvent],
    t: f64,
) -> Result<(UnderlayGraph, Conference), SimError> {
    let mut g = topology.clone();
    let mut conf = conference.clone();
    for ev in scenario.iter().filter(|e| e.at <= t + 1e-9) {
        let bad = |what: String| SimError::Config(format!("event at {} s: {what}", ev.at));
        let link_ok = |l: LinkId| {
            if l.0 < g.links().len() {
                Ok(l)
            } else {
                Err(bad(format!("unknown link {l}")))
            }
        };
        match ev.kind {
            EventKind::AddCrossTraffic { link, kbps } => {
                let l = link_ok(link)?;
                g.set_cross_traffic(l, kbps).map_err(|e| bad(e.to_string()))?;
            }
            EventKind::RemoveCrossTraffic(link) => {
                let l = link_ok(link)?;
                g.set_cross_traffic(l, 0.0).expect("zero is valid");
            }
            EventKind::FailLink(link) => {
                let l = link_ok(link)?;
                g.set_up(l, false);
            }
            EventKind::RestoreLink(link) => {
                let l = link_ok(link)?;
                g.set_up(l, true);
            }
            EventKind::Join(n) => {
                if conf.participants.contains(&n) {
                    return Err(bad(format!("{n} already participates")));
                }
                conf.participants.push(n);
            }
            EventKind::Leave(n) => {
                if !conf.participants.contains(&n) {
                    return Err(bad(format!("{n} is not a participant")));
                }
                conf.participants.retain(|&p| p != n);
                conf.helpers.retain(|&h| h != n);
            }
        }
    }
    Ok((g, conf))
}

/// Runs the fluid model for `duration_s` seconds.
///
/// Per tick: link loads, loss and prices. Per report interval: each source
/// packs trees on the current allocation and publishes its utility slope
/// and critical cut, visible one report interval later. Per rate interval:
/// every (session, overlay link) rate steps on the window-averaged loss and
/// queuing delay of its route.
pub fn run(
    topology: &UnderlayGraph,
    conference: &Conference,
    params: &SimParams,
    scenario: &[ScenarioEvent],
    duration_s: f64,
) -> Result<SimOutput, SimError> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(SimError::Config(format!("duration must be positive, got {duration_s}")));
    }
    if params.tick_ms.is_nan() || params.tick_ms <= 0.0 {
        return Err(SimError::Config(format!("tick must be positive, got {}", params.tick_ms)));
    }
    params.control.validate().map_err(SimError::Config)?;
    params.utility.validate().map_err(SimError::Config)?;
    if params.quantum.is_nan() || params.quantum <= 0.0 {
        return Err(SimError::Config("quantum must be positive".into()));
    }
    if !(params.initial_rate >= 0.0 && params.join_rate >= 0.0) {
        return Err(SimError::Config("initial rates must be nonnegative".into()));
    }
    if scenario.windows(2).any(|w| w[0].at > w[1].at) {
        return Err(SimError::Config("scenario events must be sorted by time".into()));
    }
    if let Some(ev) = scenario.iter().find(|e| e.at.is_nan() || e.at < 0.0) {
        return Err(SimError::Config(format!("event time {} is negative", ev.at)));
    }
    for &n in conference.participants.iter().chain(&conference.helpers) {
        if n.0 >= topology.nodes().len() {
            return Err(SimError::Config(format!("unknown node {n}")));
        }
    }
    let tick = params.tick_ms;
    let rate_every = steps_per(params.control.rate_interval, tick, "rate interval")?;
    let report_every = steps_per(params.control.report_interval, tick, "report interval")?;
    let sample_every = steps_per(params.sample_interval_s * 1000.0, tick, "sample interval")?;
    let total_ticks = (duration_s * 1000.0 / tick).round() as u64;
    let dt_s = tick / 1000.0;

    let mut eng = Engine::new(topology, conference, params);
    let mut out = SimOutput::default();
    let mut next_event = 0;
    for n in 0..=total_ticks {
        let t = n as f64 * dt_s;
        while next_event < scenario.len() && scenario[next_event].at <= t + 1e-9 {
            eng.apply(&scenario[next_event], n)?;
            next_event += 1;
        }
        let (ready, later): (Vec<_>, Vec<_>) =
            std::mem::take(&mut eng.pending).into_iter().partition(|(at, _, _)| *at <= n);
        eng.pending = later;
        for (_, m, info) in ready {
            eng.active.insert(m, info);
        }
        if n % report_every == 0 {
            for (m, info) in eng.report(t) {
                if params.instant_control {
                    eng.active.insert(m, info);
                } else {
                    eng.pending.push((n + report_every, m, info));
                }
            }
        }
        eng.fluid_step(dt_s);
        if n % sample_every == 0 {
            out.rows.push(eng.sample(t));
        }
        if n == total_ticks {
            break;
        }
        if (n + 1) % rate_every == 0 {
            let traj = params.record_trajectory.then_some(&mut out.trajectory);
            eng.rate_step(t + dt_s, traj);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::underlay::NodeKind;

    /// Two hosts joined by a 300 kbps / 200 kbps pair of links.
    fn pair() -> (UnderlayGraph, Conference) {
        let mut g = UnderlayGraph::new();
        let a = g.add_node("A", NodeKind::Host);
        let b = g.add_node("B", NodeKind::Host);
        g.add_link("ab", a, b, 300.0, 10.0).unwrap();
        g.add_link("ba", b, a, 200.0, 10.0).unwrap();
        (
            g,
            Conference {
                participants: vec![a, b],
                helpers: vec![],
            },
        )
    }

    #[test]
    fn rejects_bad_tick() {
        let (g, c) = pair();
        let p = SimParams {
            tick_ms: 7.0,
            ..Default::default()
        };
        assert!(matches!(run(&g, &c, &p, &[], 1.0), Err(SimError::Config(_))));
        assert!(run(&g, &c, &SimParams::default(), &[], 0.0).is_err());
    }

    #[test]
    fn rejects_unsorted_events() {
        let (g, c) = pair();
        let ev = [
            ScenarioEvent { at: 5.0, kind: EventKind::FailLink(LinkId(0)) },
            ScenarioEvent { at: 1.0, kind: EventKind::RestoreLink(LinkId(0)) },
        ];
        assert!(run(&g, &c, &SimParams::default(), &ev, 10.0).is_err());
    }

    #[test]
    fn single_links_approach_capacity() {
        let (g, c) = pair();
        let out = run(&g, &c, &SimParams::default(), &[], 120.0).unwrap();
        assert_eq!(out.rows.len(), 121);
        let a = out.mean_rate(NodeId(0), 90.0, 120.0);
        let b = out.mean_rate(NodeId(1), 90.0, 120.0);
        assert!((a - 300.0).abs() < 30.0, "{a}");
        assert!((b - 200.0).abs() < 20.0, "{b}");
        for r in &out.rows {
            for s in &r.sessions {
                assert!(s.send_kbps >= 0.0 && s.loss >= 0.0 && s.delay_ms >= 0.0);
                assert!(s.recv_kbps <= s.send_kbps + 1e-9);
            }
        }
    }

    #[test]
    fn deterministic() {
        let (g, c) = pair();
        let p = SimParams::default();
        assert_eq!(run(&g, &c, &p, &[], 20.0), run(&g, &c, &p, &[], 20.0));
    }

    #[test]
    fn failed_link_orphans_session() {
        let (g, c) = pair();
        let ev = [ScenarioEvent { at: 10.0, kind: EventKind::FailLink(LinkId(0)) }];
        let out = run(&g, &c, &SimParams::default(), &ev, 20.0).unwrap();
        let last = out.rows.last().unwrap();
        assert_eq!(last.session(NodeId(0)).unwrap().send_kbps, 0.0);
        assert_eq!(last.link_load[0], 0.0);
    }

    #[test]
    fn trajectory_has_one_point_per_rate_step() {
        let (g, c) = pair();
        let p = SimParams {
            record_trajectory: true,
            ..Default::default()
        };
        let out = run(&g, &c, &p, &[], 10.0).unwrap();
        assert_eq!(out.trajectory.len(), 50);
    }

    #[test]
    fn static_state_replays_events() {
        let (g, c) = pair();
        let ev = [
            ScenarioEvent { at: 1.0, kind: EventKind::FailLink(LinkId(0)) },
            ScenarioEvent { at: 2.0, kind: EventKind::Leave(NodeId(1)) },
        ];
        let (g1, c1) = state_at(&g, &c, &ev, 1.5).unwrap();
        assert!(!g1.link(LinkId(0)).up);
        assert_eq!(c1.participants.len(), 2);
        let (_, c2) = state_at(&g, &c, &ev, 2.0).unwrap();
        assert_eq!(c2.participants, vec![NodeId(0)]);
        assert!(c2.sessions().is_empty());
    }

    #[test]
    fn join_and_leave_errors() {
        let (g, c) = pair();
        let ev = [ScenarioEvent { at: 1.0, kind: EventKind::Join(NodeId(0)) }];
        assert!(run(&g, &c, &SimParams::default(), &ev, 2.0).is_err());
        let ev = [ScenarioEvent { at: 1.0, kind: EventKind::Leave(NodeId(7)) }];
        assert!(run(&g, &c, &SimParams::default(), &ev, 2.0).is_err());
    }
}
