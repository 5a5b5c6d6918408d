//! Experiment configuration files.
//!
//! Configs are TOML documents. Every field is optional at the syntax level;
//! validation fills defaults and reports all problems with their paths.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::control::{ControlParams, UtilityParams};
use crate::sim::{Conference, EventKind, OverheadConfig, ScenarioEvent, SimParams};
use crate::underlay::{LinkId, NodeKind, UnderlayGraph};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    run: Option<RawRun>,
    control: Option<RawControl>,
    utility: Option<RawUtility>,
    #[serde(default)]
    node: Vec<RawNode>,
    #[serde(default)]
    link: Vec<RawLink>,
    conference: Option<RawConference>,
    #[serde(default)]
    event: Vec<RawEvent>,
    overhead: Option<RawOverhead>,
    output: Option<RawOutput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    duration: Option<f64>,
    tick: Option<f64>,
    seed: Option<u64>,
    sample_interval: Option<f64>,
    quantum: Option<f64>,
    initial_rate: Option<f64>,
    join_rate: Option<f64>,
    instant_control: Option<bool>,
    crash_leave: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    alpha: Option<f64>,
    delay_bound: Option<f64>,
    rate_interval: Option<f64>,
    report_interval: Option<f64>,
    quickstart_duration: Option<f64>,
    quickstart_beta_mult: Option<f64>,
    quickstart_alpha_mult: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUtility {
    beta: Option<f64>,
    delta: Option<f64>,
    #[serde(default)]
    session_beta: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    name: Option<String>,
    kind: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    name: Option<String>,
    from: Option<String>,
    to: Option<String>,
    capacity: Option<f64>,
    delay: Option<f64>,
    duplex: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConference {
    #[serde(default)]
    participants: Vec<String>,
    #[serde(default)]
    helpers: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    at: Option<f64>,
    kind: Option<String>,
    link: Option<String>,
    #[serde(default)]
    links: Vec<String>,
    node: Option<String>,
    kbps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverhead {
    payload_bytes: Option<f64>,
    data_kbps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub topology: UnderlayGraph,
    pub conference: Conference,
    pub params: SimParams,
    pub scenario: Vec<ScenarioEvent>,
    pub duration_s: f64,
    /// Whether the file set the tick (which then wins over the flag).
    pub tick_from_file: bool,
    pub out_dir: Option<PathBuf>,
    pub overhead: OverheadConfig,
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

fn positive(errs: &mut Vec<String>, path: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errs.push(format!("{path}: must be positive, got {v}"));
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut errs = Vec::new();

    let run = raw.run.unwrap_or_default();
    let mut params = SimParams::default();
    let duration_s = run.duration.unwrap_or(1000.0);
    positive(&mut errs, "run.duration", duration_s);
    if let Some(t) = run.tick {
        positive(&mut errs, "run.tick", t);
        params.tick_ms = t;
    }
    params.seed = run.seed.unwrap_or(0);
    if let Some(v) = run.sample_interval {
        positive(&mut errs, "run.sample_interval", v);
        params.sample_interval_s = v;
    }
    if let Some(v) = run.quantum {
        positive(&mut errs, "run.quantum", v);
        params.quantum = v;
    }
    for (name, v, slot) in [
        ("run.initial_rate", run.initial_rate, &mut params.initial_rate),
        ("run.join_rate", run.join_rate, &mut params.join_rate),
    ] {
        if let Some(v) = v {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("{name}: must be nonnegative, got {v}"));
            }
            *slot = v;
        }
    }
    params.instant_control = run.instant_control.unwrap_or(false);
    params.crash_leave = run.crash_leave.unwrap_or(false);

    let c = raw.control.unwrap_or_default();
    let d = ControlParams::default();
    params.control = ControlParams {
        alpha: c.alpha.unwrap_or(d.alpha),
        delay_bound: c.delay_bound.unwrap_or(d.delay_bound),
        rate_interval: c.rate_interval.unwrap_or(d.rate_interval),
        report_interval: c.report_interval.unwrap_or(d.report_interval),
        quickstart_duration: c.quickstart_duration.unwrap_or(d.quickstart_duration),
        quickstart_beta_mult: c.quickstart_beta_mult.unwrap_or(d.quickstart_beta_mult),
        quickstart_alpha_mult: c.quickstart_alpha_mult.unwrap_or(d.quickstart_alpha_mult),
    };
    if let Err(e) = params.control.validate() {
        errs.push(format!("control: {e}"));
    }
    let u = raw.utility.unwrap_or_default();
    let du = UtilityParams::default();
    params.utility = UtilityParams {
        beta: u.beta.unwrap_or(du.beta),
        delta: u.delta.unwrap_or(du.delta),
    };
    if let Err(e) = params.utility.validate() {
        errs.push(format!("utility: {e}"));
    }

    let mut topology = UnderlayGraph::new();
    if raw.node.is_empty() {
        errs.push("node: at least one node is required".into());
    }
    for (i, n) in raw.node.iter().enumerate() {
        let Some(name) = &n.name else {
            errs.push(format!("node[{i}].name: missing"));
            continue;
        };
        let kind = match n.kind.as_deref() {
            None | Some("host") => NodeKind::Host,
            Some("router") => NodeKind::Router,
            Some(other) => {
                errs.push(format!("node[{i}].kind: expected host or router, got {other:?}"));
                NodeKind::Host
            }
        };
        if topology.node_by_name(name).is_some() {
            errs.push(format!("node[{i}].name: duplicate node {name:?}"));
            continue;
        }
        topology.add_node(name.clone(), kind);
    }
    let node = |errs: &mut Vec<String>, path: String, name: &Option<String>| {
        match name {
            None => {
                errs.push(format!("{path}: missing"));
                None
            }
            Some(n) => {
                let id = topology.node_by_name(n);
                if id.is_none() {
                    errs.push(format!("{path}: unknown node {n:?}"));
                }
                id
            }
        }
    };
    let mut pending_links = Vec::new();
    // Names of declared links, so a broken declaration is reported once.
    let mut declared = std::collections::BTreeSet::new();
    for (i, l) in raw.link.iter().enumerate() {
        let from = node(&mut errs, format!("link[{i}].from"), &l.from);
        let to = node(&mut errs, format!("link[{i}].to"), &l.to);
        let label = match (&l.from, &l.to) {
            (Some(a), Some(b)) => format!("{a}-{b}"),
            _ => format!("#{i}"),
        };
        if l.capacity.is_none() {
            errs.push(format!("link[{i}].capacity: missing for link {label}"));
        }
        if l.delay.is_none() {
            errs.push(format!("link[{i}].delay: missing for link {label}"));
        }
        let duplex = l.duplex.unwrap_or(true);
        if let (Some(a), Some(b)) = (&l.from, &l.to) {
            declared.insert(l.name.clone().unwrap_or_else(|| format!("{a}-{b}")));
            if duplex {
                declared.insert(format!("{b}-{a}"));
            }
        }
        if duplex && l.name.is_some() {
            errs.push(format!("link[{i}].name: only simplex links take a name"));
        }
        if let (Some(a), Some(b), Some(cap), Some(delay)) = (from, to, l.capacity, l.delay) {
            pending_links.push((i, l.name.clone(), a, b, cap, delay, duplex));
        }
    }
    for (i, name, a, b, cap, delay, duplex) in pending_links {
        let mut dirs = vec![(a, b, name)];
        if duplex {
            dirs.push((b, a, None));
        }
        for (x, y, name) in dirs {
            let name = name.unwrap_or_else(|| {
                format!("{}-{}", topology.node_name(x), topology.node_name(y))
            });
            if topology.link_by_name(&name).is_some() {
                errs.push(format!("link[{i}]: duplicate link name {name:?}"));
                continue;
            }
            if let Err(e) = topology.add_link(name, x, y, cap, delay) {
                errs.push(format!("link[{i}]: {e}"));
            }
        }
    }

    let node_id = |errs: &mut Vec<String>, path: String, name: &str| {
        let id = topology.node_by_name(name);
        if id.is_none() {
            errs.push(format!("{path}: unknown node {name:?}"));
        }
        id
    };
    let conf = raw.conference.unwrap_or_default();
    let mut conference = Conference::default();
    for (i, p) in conf.participants.iter().enumerate() {
        if let Some(id) = node_id(&mut errs, format!("conference.participants[{i}]"), p) {
            if conference.participants.contains(&id) {
                errs.push(format!("conference.participants[{i}]: duplicate {p:?}"));
            }
            conference.participants.push(id);
        }
    }
    for (i, h) in conf.helpers.iter().enumerate() {
        if let Some(id) = node_id(&mut errs, format!("conference.helpers[{i}]"), h) {
            if conference.participants.contains(&id) {
                errs.push(format!("conference.helpers[{i}]: {h:?} is also a participant"));
            }
            conference.helpers.push(id);
        }
    }
    if conference.participants.len() < 2 && raw.event.iter().all(|e| e.kind.as_deref() != Some("join")) {
        errs.push("conference.participants: at least two participants are required".into());
    }
    for (name, beta) in &u.session_beta {
        if let Some(id) = node_id(&mut errs, format!("utility.session_beta.{name}"), name) {
            positive(&mut errs, &format!("utility.session_beta.{name}"), *beta);
            params.session_beta.insert(id, *beta);
        }
    }

    let mut scenario = Vec::new();
    for (i, ev) in raw.event.iter().enumerate() {
        let path = format!("event[{i}]");
        let Some(at) = ev.at else {
            errs.push(format!("{path}.at: missing"));
            continue;
        };
        if !(at >= 0.0 && at.is_finite()) {
            errs.push(format!("{path}.at: must be nonnegative, got {at}"));
        }
        let mut link_ids = Vec::new();
        for (k, name) in ev.link.iter().chain(&ev.links).enumerate() {
            match topology.link_by_name(name) {
                Some(l) => link_ids.push(l),
                None if declared.contains(name) => {}
                None => errs.push(format!("{path}.links[{k}]: unknown link {name:?}")),
            }
        }
        let need_links = |errs: &mut Vec<String>, ids: &[LinkId]| {
            if ids.is_empty() && ev.link.is_none() && ev.links.is_empty() {
                errs.push(format!("{path}: link or links required"));
            }
        };
        let kinds: Vec<EventKind> = match ev.kind.as_deref() {
            Some("add_cross_traffic") => {
                need_links(&mut errs, &link_ids);
                let kbps = ev.kbps.unwrap_or_else(|| {
                    errs.push(format!("{path}.kbps: missing"));
                    0.0
                });
                if !(kbps >= 0.0 && kbps.is_finite()) {
                    errs.push(format!("{path}.kbps: must be nonnegative, got {kbps}"));
                }
                link_ids
                    .iter()
                    .map(|&link| EventKind::AddCrossTraffic { link, kbps })
                    .collect()
            }
            Some("remove_cross_traffic") => {
                need_links(&mut errs, &link_ids);
                link_ids.iter().map(|&l| EventKind::RemoveCrossTraffic(l)).collect()
            }
            Some("fail_link") => {
                need_links(&mut errs, &link_ids);
                link_ids.iter().map(|&l| EventKind::FailLink(l)).collect()
            }
            Some("restore_link") => {
                need_links(&mut errs, &link_ids);
                link_ids.iter().map(|&l| EventKind::RestoreLink(l)).collect()
            }
            Some(k @ ("join" | "leave")) => match &ev.node {
                None => {
                    errs.push(format!("{path}.node: missing"));
                    vec![]
                }
                Some(n) => node_id(&mut errs, format!("{path}.node"), n)
                    .map(|id| {
                        if k == "join" {
                            EventKind::Join(id)
                        } else {
                            EventKind::Leave(id)
                        }
                    })
                    .into_iter()
                    .collect(),
            },
            Some(other) => {
                errs.push(format!("{path}.kind: unknown event kind {other:?}"));
                vec![]
            }
            None => {
                errs.push(format!("{path}.kind: missing"));
                vec![]
            }
        };
        scenario.extend(kinds.into_iter().map(|kind| ScenarioEvent { at, kind }));
    }
    scenario.sort_by(|a, b| a.at.total_cmp(&b.at));

    let oh = raw.overhead.unwrap_or_default();
    let overhead = OverheadConfig {
        overlay_links: 0,
        sessions: 0,
        payload_bytes: oh.payload_bytes.unwrap_or(OverheadConfig::default().payload_bytes),
        data_kbps: oh.data_kbps.unwrap_or(0.0),
    };
    positive(&mut errs, "overhead.payload_bytes", overhead.payload_bytes);

    if !errs.is_empty() {
        return Err(ConfigError::Validation(errs));
    }
    // Replaying membership catches joins and leaves that do not line up.
    if let Err(e) = crate::sim::state_at(&topology, &conference, &scenario, f64::INFINITY) {
        return Err(ConfigError::Validation(vec![format!("event: {e}")]));
    }
    Ok(ExperimentConfig {
        topology,
        conference,
        params,
        scenario,
        duration_s,
        tick_from_file: run.tick.is_some(),
        out_dir: raw.output.and_then(|o| o.dir).map(PathBuf::from),
        overhead,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
[[node]]
name = "A"
[[node]]
name = "B"
[[node]]
name = "R"
kind = "router"

[[link]]
from = "A"
to = "R"
capacity = 500
delay = 5
[[link]]
from = "B"
to = "R"
capacity = 500
delay = 5

[conference]
participants = ["A", "B"]

[[event]]
at = 10
kind = "fail_link"
links = ["A-R", "R-A"]
"#;

    fn errors(text: &str) -> Vec<String> {
        match parse_config_str(text) {
            Err(ConfigError::Validation(e)) => e,
            other => panic!("expected validation errors, got {other:?}"),
        }
    }

    #[test]
    fn parses_tiny_config() {
        let cfg = parse_config_str(TINY).unwrap();
        assert_eq!(cfg.topology.links().len(), 4);
        assert_eq!(cfg.topology.link_by_name("R-B"), Some(LinkId(3)));
        assert_eq!(cfg.scenario.len(), 2);
        assert_eq!(cfg.duration_s, 1000.0);
        assert!(!cfg.tick_from_file);
        assert_eq!(cfg.params.control, ControlParams::default());
    }

    #[test]
    fn missing_capacity_names_the_link() {
        let text = TINY.replacen("capacity = 500\n", "", 1);
        let e = errors(&text);
        assert_eq!(e.len(), 1, "{e:?}");
        assert!(e[0].contains("link[0].capacity") && e[0].contains("A-R"), "{e:?}");
    }

    #[test]
    fn all_errors_reported() {
        let text = TINY
            .replace("participants = [\"A\", \"B\"]", "participants = [\"A\", \"Z\"]")
            .replace("delay = 5\n[[link]]", "[[link]]")
            .replace("\"R-A\"", "\"R-Q\"");
        let e = errors(&text);
        assert!(e.iter().any(|x| x.contains("conference.participants[1]") && x.contains("\"Z\"")));
        assert!(e.iter().any(|x| x.contains("link[0].delay")));
        assert!(e.iter().any(|x| x.contains("event[0].links[1]")));
        assert!(e.len() >= 3);
    }

    #[test]
    fn unknown_field_is_parse_error() {
        let text = format!("{TINY}\n[run]\nspeed = 3\n");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn inconsistent_membership_rejected() {
        let text = format!("{TINY}\n[[event]]\nat = 5\nkind = \"join\"\nnode = \"A\"\n");
        let e = errors(&text);
        assert!(e[0].contains("already participates"), "{e:?}");
    }
}
