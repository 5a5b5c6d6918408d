//! Maximum achievable rates of the fixed-tree baselines.

use std::collections::BTreeMap;

use crate::control::UtilityParams;
use crate::oracle::{mutualcast_catalog, simulcast_catalog, solve_restricted, Instance, OracleError};
use crate::overlay::Session;
use crate::treepack::Tree;
use crate::underlay::{NodeId, UnderlayGraph};

fn restricted(
    topology: &UnderlayGraph,
    sessions: &[Session],
    delay_bound: f64,
    utility: UtilityParams,
    catalog: fn(&Session) -> Vec<Tree>,
) -> Result<BTreeMap<NodeId, f64>, OracleError> {
    let inst = Instance::new(topology, sessions, delay_bound);
    let catalogs: Vec<_> = sessions.iter().map(catalog).collect();
    let rates = solve_restricted(&inst, &catalogs, &vec![utility; sessions.len()])?;
    Ok(sessions.iter().map(Session::id).zip(rates).collect())
}

/// Optimal rates when every source streams directly to each receiver.
pub fn simulcast_max(
    topology: &UnderlayGraph,
    sessions: &[Session],
    delay_bound: f64,
    utility: UtilityParams,
) -> Result<BTreeMap<NodeId, f64>, OracleError> {
    restricted(topology, sessions, delay_bound, utility, simulcast_catalog)
}

/// Optimal rates over the star plus the single-relay depth-2 trees.
pub fn mutualcast_max(
    topology: &UnderlayGraph,
    sessions: &[Session],
    delay_bound: f64,
    utility: UtilityParams,
) -> Result<BTreeMap<NodeId, f64>, OracleError> {
    restricted(topology, sessions, delay_bound, utility, mutualcast_catalog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlay::full_mesh_sessions;
    use crate::underlay::NodeKind;

    #[test]
    fn shared_bottleneck_splits_evenly() {
        // One source, three receivers behind a single 300 kbps link.
        let mut g = UnderlayGraph::new();
        let s = g.add_node("S", NodeKind::Host);
        let r = g.add_node("R", NodeKind::Router);
        g.add_link("", s, r, 300.0, 1.0).unwrap();
        let hosts: Vec<NodeId> = (0..3)
            .map(|i| {
                let h = g.add_node(format!("H{i}"), NodeKind::Host);
                g.add_link("", r, h, 10_000.0, 1.0).unwrap();
                h
            })
            .collect();
        let sessions = vec![Session::new(s, hosts, []).unwrap()];
        let rates = simulcast_max(&g, &sessions, 200.0, UtilityParams::default()).unwrap();
        assert!((rates[&s] - 100.0).abs() < 1e-3);
    }

    #[test]
    fn zero_capacity_gives_zero() {
        let mut g = UnderlayGraph::new();
        let a = g.add_node("A", NodeKind::Host);
        let b = g.add_node("B", NodeKind::Host);
        g.add_link("", a, b, 100.0, 1.0).unwrap();
        g.add_link("", b, a, 100.0, 1.0).unwrap();
        for l in [0, 1] {
            g.set_cross_traffic(crate::LinkId(l), 100.0).unwrap();
        }
        let sessions = full_mesh_sessions(&[a, b]);
        let rates = mutualcast_max(&g, &sessions, 200.0, UtilityParams::default()).unwrap();
        assert!(rates.values().all(|&r| r == 0.0));
    }
}
