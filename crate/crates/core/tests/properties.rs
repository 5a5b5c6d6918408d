mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::Shape;
use confnet::cut::{critical_cut, subgradient};
use confnet::oracle::max_flow;
use confnet::treepack::{fractional_packing_bound, min_min_cut, pack_trees, per_receiver_cut};
use confnet::{OverlayLink, SessionGraph, Vertex};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn int_graph(seed: u64) -> (Shape, Vec<f64>, SessionGraph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape::random(&mut rng);
    let caps = shape.int_caps(&mut rng, 100);
    let g = shape.build(&caps);
    (shape, caps, g)
}

fn real_graph(seed: u64) -> (Shape, Vec<f64>, SessionGraph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape::random(&mut rng);
    let caps = shape.real_caps(&mut rng, 100.0);
    let g = shape.build(&caps);
    (shape, caps, g)
}

fn caps_of(g: &SessionGraph) -> BTreeMap<OverlayLink, f64> {
    g.overlay_edges().into_iter().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn packing_is_feasible_and_spans_receivers(seed in any::<u64>(), quantum in prop::sample::select(vec![0.5, 1.0, 3.0])) {
        let (_, _, g) = int_graph(seed);
        let packed = pack_trees(&g, quantum);
        let caps = caps_of(&g);
        for (e, used) in packed.overlay_usage() {
            if let Some(&c) = caps.get(&e) {
                prop_assert!(used <= c + 1e-9, "{:?} uses {} of {}", e, used, c);
            }
        }
        let receivers: BTreeSet<_> = g.receivers().iter().copied().collect();
        for t in &packed.trees {
            let fed: Vec<_> = t.branches.values().flatten().copied().collect();
            prop_assert_eq!(fed.len(), receivers.len());
            prop_assert_eq!(fed.into_iter().collect::<BTreeSet<_>>(), receivers.clone());
        }
        let total = packed.total_rate();
        let units = total / quantum;
        prop_assert!((units - units.round()).abs() < 1e-9);
        prop_assert!(total <= min_min_cut(&g).0 + 1e-9);
    }

    #[test]
    fn packing_meets_fractional_floor(seed in any::<u64>()) {
        let (_, _, g) = int_graph(seed);
        let lp = fractional_packing_bound(&g, 1.0).unwrap();
        let (mmc, _) = min_min_cut(&g);
        prop_assert!(lp <= mmc + 1e-6);
        prop_assert_eq!(pack_trees(&g, 1.0).total_rate(), (lp + 1e-6).floor());
    }

    #[test]
    fn cut_matches_max_flow(seed in any::<u64>()) {
        let (_, _, g) = real_graph(seed);
        for j in 0..g.num_sinks() {
            let (flow, _) = max_flow(&g, j);
            prop_assert!((flow - per_receiver_cut(&g, j)).abs() < 1e-9);
        }
    }

    #[test]
    fn raising_a_capacity_never_lowers_the_rate(seed in any::<u64>(), bump in 0.0f64..50.0, pick in any::<prop::sample::Index>()) {
        let (shape, mut caps, g) = real_graph(seed);
        let before = min_min_cut(&g).0;
        let i = pick.index(caps.len());
        caps[i] += bump;
        prop_assert!(min_min_cut(&shape.build(&caps)).0 >= before - 1e-9);
    }

    #[test]
    fn dropping_a_helper_never_raises_the_rate(seed in any::<u64>()) {
        let (mut shape, caps, g) = real_graph(seed);
        let before = min_min_cut(&g).0;
        for h in shape.receivers..shape.receivers + shape.helpers {
            shape.to_mid[h] = false;
        }
        prop_assert!(min_min_cut(&shape.build(&caps)).0 <= before + 1e-9);
    }

    #[test]
    fn critical_cut_is_a_minimum_cut(seed in any::<u64>()) {
        let (_, _, g) = real_graph(seed);
        let (mmc, j) = min_min_cut(&g);
        let cut = critical_cut(&g);
        prop_assert!(cut.z.contains(&Vertex::Source));
        prop_assert!(!cut.z.contains(&Vertex::Sink(j)));
        prop_assert_eq!(cut.critical_receiver, g.receivers()[j]);
        let caps = caps_of(&g);
        let across: f64 = cut.cut_edges.iter().map(|e| caps[e]).sum();
        prop_assert!((across - mmc).abs() < 1e-9 && (cut.value - mmc).abs() < 1e-9);
    }

    #[test]
    fn rate_is_concave(seed in any::<u64>(), lambda in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Shape::random(&mut rng);
        let c1 = shape.real_caps(&mut rng, 100.0);
        let c2 = shape.real_caps(&mut rng, 100.0);
        let mix: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        let r = |c: &[f64]| min_min_cut(&shape.build(c)).0;
        prop_assert!(r(&mix) >= lambda * r(&c1) + (1.0 - lambda) * r(&c2) - 1e-9);
    }

    #[test]
    fn cut_indicator_is_a_supergradient(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Shape::random(&mut rng);
        let g = shape.build(&shape.real_caps(&mut rng, 100.0));
        let h = shape.build(&shape.real_caps(&mut rng, 100.0));
        let xi = subgradient(&g, &critical_cut(&g));
        let (cg, ch) = (caps_of(&g), caps_of(&h));
        let step: f64 = xi.iter().map(|(e, &x)| f64::from(x) * (ch[e] - cg[e])).sum();
        prop_assert!(min_min_cut(&h).0 <= min_min_cut(&g).0 + step + 1e-9);
    }
}
