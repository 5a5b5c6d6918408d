#![allow(dead_code)]

use std::path::PathBuf;

use confnet::cli::{parse_config, ExperimentConfig};
use confnet::{NodeId, SessionGraph};
use rand::Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

pub fn load(name: &str) -> ExperimentConfig {
    parse_config(&config_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Edge presence pattern of a two-layer graph, without capacities.
#[derive(Clone, Debug)]
pub struct Shape {
    pub receivers: usize,
    pub helpers: usize,
    pub to_mid: Vec<bool>,
    pub mid_to_sink: Vec<Vec<bool>>,
}

impl Shape {
    pub fn random(rng: &mut impl Rng) -> Self {
        let receivers = rng.gen_range(1..=6);
        let helpers = rng.gen_range(0..=2);
        let mids = receivers + helpers;
        Shape {
            receivers,
            helpers,
            to_mid: (0..mids).map(|_| rng.gen_bool(0.85)).collect(),
            mid_to_sink: (0..mids)
                .map(|_| (0..receivers).map(|_| rng.gen_bool(0.75)).collect())
                .collect(),
        }
    }

    pub fn num_edges(&self) -> usize {
        self.to_mid.len() + self.to_mid.len() * self.receivers
    }

    /// Builds the graph with one capacity per potential edge, `s -> v` first
    /// followed by the `v -> t_j` rows. Absent edges ignore their entry.
    pub fn build(&self, caps: &[f64]) -> SessionGraph {
        assert_eq!(caps.len(), self.num_edges());
        let mids = self.to_mid.len();
        let to_mid = (0..mids).map(|v| self.to_mid[v].then_some(caps[v])).collect();
        let mid_to_sink = (0..mids)
            .map(|v| {
                (0..self.receivers)
                    .map(|j| self.mid_to_sink[v][j].then_some(caps[mids + v * self.receivers + j]))
                    .collect()
            })
            .collect();
        SessionGraph::from_capacities(
            NodeId(0),
            (1..=self.receivers).map(NodeId).collect(),
            (self.receivers + 1..=self.receivers + self.helpers).map(NodeId).collect(),
            to_mid,
            mid_to_sink,
        )
    }

    pub fn int_caps(&self, rng: &mut impl Rng, max: u32) -> Vec<f64> {
        (0..self.num_edges()).map(|_| rng.gen_range(0..=max) as f64).collect()
    }

    pub fn real_caps(&self, rng: &mut impl Rng, max: f64) -> Vec<f64> {
        (0..self.num_edges()).map(|_| rng.gen_range(0.0..max)).collect()
    }
}
