//! Config-driven experiment runner behind the `confnet` binary.

mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

pub use config::{parse_config, parse_config_str, ConfigError, ExperimentConfig};

use crate::control::{utility, UtilityParams};
use crate::oracle::{solve_mp_central, Instance, OracleError};
use crate::sim::{
    estimate_overhead, mutualcast_max, run, simulcast_max, state_at, Conference, MetricsRow,
    OverheadConfig, OverheadEstimate, SessionSample, SimError,
};
use crate::underlay::{NodeId, UnderlayGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Celerity,
    Simulcast,
    Mutualcast,
    Oracle,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Celerity => "celerity",
            Mode::Simulcast => "simulcast",
            Mode::Mutualcast => "mutualcast",
            Mode::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    /// 1 for configuration problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Sim(SimError::Config(_)) => 1,
            _ => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryLine {
    pub session: String,
    pub converged_kbps: f64,
    pub optimum_kbps: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub mode: Mode,
    pub duration_s: f64,
    pub lines: Vec<SummaryLine>,
    pub overhead: OverheadEstimate,
}

impl Summary {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode: {}", self.mode.name());
        let _ = writeln!(s, "duration_s: {}", self.duration_s);
        let _ = writeln!(s, "converged rates use the mean over the last 10% of the run");
        let _ = writeln!(s, "{:<10} {:>14} {:>14} {:>8}", "session", "converged_kbps", "optimum_kbps", "ratio");
        for l in &self.lines {
            let (opt, ratio) = match l.optimum_kbps {
                Some(o) if o > 0.0 => (fixed(o, 2), fixed(l.converged_kbps / o, 4)),
                Some(o) => (fixed(o, 2), "n/a".to_string()),
                None => ("n/a".to_string(), "n/a".to_string()),
            };
            let conv = fixed(l.converged_kbps, 2);
            let _ = writeln!(s, "{:<10} {:>14} {:>14} {:>8}", l.session, conv, opt, ratio);
        }
        let o = &self.overhead;
        let _ = writeln!(
            s,
            "overhead: packet {:.2}%, control {:.3} kbps/link/session = {:.2} kbps ({:.2}%), total {:.2}%",
            100.0 * o.packet_overhead,
            o.control_kbps_per_link_session,
            o.control_kbps,
            100.0 * o.control_fraction,
            100.0 * o.total_fraction()
        );
        s
    }
}

/// Sample rows for the oracle and baseline modes: rates are re-solved for
/// each phase between events and held constant; delay is the propagation
/// delay of the direct overlay paths.
fn static_rows(cfg: &ExperimentConfig, mode: Mode) -> Result<Vec<MetricsRow>, CliError> {
    let p = &cfg.params;
    let mut times = Vec::new();
    let mut t = 0.0;
    let mut i = 0u64;
    while t <= cfg.duration_s + 1e-9 {
        times.push(t);
        i += 1;
        t = i as f64 * p.sample_interval_s;
    }
    let mut phase_cache: BTreeMap<usize, Vec<SessionSample>> = BTreeMap::new();
    let mut rows = Vec::new();
    for t in times {
        let applied = cfg.scenario.iter().filter(|e| e.at <= t + 1e-9).count();
        if let std::collections::btree_map::Entry::Vacant(slot) = phase_cache.entry(applied) {
            let (g, conf) = state_at(&cfg.topology, &cfg.conference, &cfg.scenario, t)?;
            slot.insert(static_samples(&g, &conf, cfg, mode)?);
        }
        let sessions = phase_cache[&applied].clone();
        rows.push(MetricsRow {
            t,
            total_utility: sessions.iter().map(|s| s.utility).sum(),
            sessions,
            link_load: vec![],
            link_price_ms: vec![],
        });
    }
    Ok(rows)
}

fn static_samples(
    g: &UnderlayGraph,
    conf: &Conference,
    cfg: &ExperimentConfig,
    mode: Mode,
) -> Result<Vec<SessionSample>, CliError> {
    let sessions = conf.sessions();
    let d = cfg.params.control.delay_bound;
    let u = cfg.params.utility;
    let rates: BTreeMap<NodeId, f64> = match mode {
        Mode::Simulcast => simulcast_max(g, &sessions, d, u)?,
        Mode::Mutualcast => mutualcast_max(g, &sessions, d, u)?,
        Mode::Oracle => match oracle_rates(g, conf, cfg) {
            Ok(r) => r,
            Err(OracleError::Infeasible(_)) => sessions.iter().map(|s| (s.id(), 0.0)).collect(),
            Err(e) => return Err(e.into()),
        },
        Mode::Celerity => unreachable!("dynamic mode"),
    };
    let inst = Instance::new(g, &sessions, d);
    Ok(sessions
        .iter()
        .map(|s| {
            let rate = rates.get(&s.id()).copied().unwrap_or(0.0);
            let direct: Vec<f64> = s
                .receivers()
                .iter()
                .filter_map(|&r| inst.prop_delays.get(&crate::OverlayLink::new(s.id(), r)).copied())
                .collect();
            let delay = if direct.is_empty() || rate == 0.0 {
                0.0
            } else {
                direct.iter().sum::<f64>() / direct.len() as f64
            };
            SessionSample {
                session: s.id(),
                send_kbps: rate,
                recv_kbps: rate,
                delay_ms: delay,
                loss: 0.0,
                utility: utility(rate, &cfg.params.session_utility(s.id())),
            }
        })
        .collect())
}

fn utilities(cfg: &ExperimentConfig, conf: &Conference) -> Vec<UtilityParams> {
    conf.sessions()
        .iter()
        .map(|s| cfg.params.session_utility(s.id()))
        .collect()
}

fn oracle_rates(
    g: &UnderlayGraph,
    conf: &Conference,
    cfg: &ExperimentConfig,
) -> Result<BTreeMap<NodeId, f64>, OracleError> {
    let sessions = conf.sessions();
    let inst = Instance::new(g, &sessions, cfg.params.control.delay_bound);
    Ok(solve_mp_central(&inst, &utilities(cfg, conf))?.rates)
}

/// Fixed-decimal formatting that never prints a negative zero.
fn fixed(x: f64, prec: usize) -> String {
    let s = format!("{x:.prec$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

fn write_timeseries(path: &Path, g: &UnderlayGraph, rows: &[MetricsRow]) -> Result<(), CliError> {
    let out = |e: csv::Error| CliError::Output(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(out)?;
    w.write_record(["t_s", "session", "send_kbps", "delay_ms", "loss", "utility"])
        .map_err(out)?;
    for r in rows {
        for s in &r.sessions {
            w.write_record([
                fixed(r.t, 3),
                g.node_name(s.session).to_string(),
                fixed(s.send_kbps, 4),
                fixed(s.delay_ms, 4),
                fixed(s.loss, 6),
                fixed(s.utility, 6),
            ])
            .map_err(out)?;
        }
    }
    w.flush().map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

/// Runs one mode and writes `timeseries.csv` and `summary.txt` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, mode: Mode, out_dir: &Path) -> Result<Summary, CliError> {
    let rows = match mode {
        Mode::Celerity => {
            run(&cfg.topology, &cfg.conference, &cfg.params, &cfg.scenario, cfg.duration_s)?.rows
        }
        _ => static_rows(cfg, mode)?,
    };
    let (g_end, conf_end) = state_at(&cfg.topology, &cfg.conference, &cfg.scenario, cfg.duration_s)?;
    let from = 0.9 * cfg.duration_s;
    let tail: Vec<&MetricsRow> = rows.iter().filter(|r| r.t >= from - 1e-9).collect();
    let optimum = match oracle_rates(&g_end, &conf_end, cfg) {
        Ok(r) => Some(r),
        Err(OracleError::Infeasible(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let sessions = conf_end.sessions();
    let mut lines = Vec::new();
    let mut data_kbps = 0.0;
    for s in &sessions {
        let xs: Vec<f64> = tail
            .iter()
            .filter_map(|r| r.session(s.id()).map(|x| x.send_kbps))
            .collect();
        let converged = if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
        data_kbps += converged * s.receivers().len() as f64;
        lines.push(SummaryLine {
            session: g_end.node_name(s.id()).to_string(),
            converged_kbps: converged,
            optimum_kbps: optimum.as_ref().and_then(|o| o.get(&s.id()).copied()),
        });
    }
    let mut links = std::collections::BTreeSet::new();
    for s in &sessions {
        links.extend(s.overlay_links());
    }
    let overhead = estimate_overhead(&OverheadConfig {
        overlay_links: links.len(),
        sessions: sessions.len(),
        payload_bytes: cfg.overhead.payload_bytes,
        data_kbps: if cfg.overhead.data_kbps > 0.0 { cfg.overhead.data_kbps } else { data_kbps },
    });
    let summary = Summary {
        mode,
        duration_s: cfg.duration_s,
        lines,
        overhead,
    };
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Output(format!("{}: {e}", out_dir.display())))?;
    write_timeseries(&out_dir.join("timeseries.csv"), &cfg.topology, &rows)?;
    std::fs::write(out_dir.join("summary.txt"), summary.render())
        .map_err(|e| CliError::Output(format!("summary.txt: {e}")))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_drops_negative_zero() {
        assert_eq!(fixed(-0.0, 2), "0.00");
        assert_eq!(fixed(-1e-9, 4), "0.0000");
        assert_eq!(fixed(-1.5, 1), "-1.5");
        assert_eq!(fixed(2.25, 1), "2.2");
    }
}
