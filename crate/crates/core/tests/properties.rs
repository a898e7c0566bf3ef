use std::collections::HashSet;

use beamtrain::ckm::GridSpec;
use beamtrain::multi_user::{prune_user_points, similarity};
use beamtrain::strategy::{
    activations, best_activation, optimal_layer, overhead_for_target, reward,
};
use beamtrain::tree::{BeamWeightTable, PrunedTree};
use beamtrain::{BeamId, CkmGrid, Point2, PositionPrior, SubRegion, WeightParams};
use proptest::prelude::*;

const N: usize = 16;
const L: u32 = 4;

/// Random map over a 1-D grid; every point has a positive gain on every beam.
fn arb_ckm(points: usize) -> impl Strategy<Value = CkmGrid> {
    prop::collection::vec(prop::collection::vec(0.01f32..10.0, points), 2 * N - 2).prop_map(
        move |gains| {
            let grid = GridSpec {
                origin: Point2::new(1.0, 1.0),
                spacing_x: 1.0,
                spacing_y: 1.0,
                nx: points,
                ny: 1,
            };
            CkmGrid::from_gains(grid, N, gains).unwrap()
        },
    )
}

fn uniform_prior(points: usize) -> PositionPrior {
    PositionPrior::new(vec![SubRegion {
        points: (0..points).collect(),
        prior: 1.0,
    }])
    .unwrap()
}

fn arb_bottom() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::btree_set(1u32..=N as u32, 1..=N).prop_map(|s| s.into_iter().collect())
}

/// Probe count of walking an activation, with candidates found by explicit
/// ancestor enumeration.
fn walk(bottom: &[u32], layers: &[u32], target: BeamId) -> u32 {
    let mut cands = HashSet::new();
    for &n in bottom {
        let mut b = Some(BeamId::new(L, n));
        while let Some(x) = b {
            cands.insert(x);
            b = x.parent();
        }
    }
    let mut anchor: Option<BeamId> = None;
    let mut probes = 0;
    for (i, &l) in layers.iter().enumerate() {
        let here = (1..=1u32 << l)
            .map(|n| BeamId::new(l, n))
            .filter(|b| cands.contains(b) && anchor.is_none_or(|a| a.is_ancestor_of(*b)))
            .count() as u32;
        if i == 0 || here >= 2 {
            probes += here;
        }
        anchor = Some(target.ancestor_at(l));
    }
    probes
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_are_conserved_through_updates(
        ckm in arb_ckm(12),
        beta in 0.05f64..1.0,
        retain in prop::option::of(1usize..6),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 8),
    ) {
        let params = WeightParams { beta, retain_per_point: retain };
        let mut table = BeamWeightTable::compute(&ckm, &uniform_prior(12), params).unwrap();
        for pick in picks {
            let bottom: f64 = table.bottom_weights().iter().sum();
            prop_assert!(bottom > 0.0);
            for l in table.root().layer() + 1..=L {
                let s: f64 = table.layer_weights(l).iter().sum();
                prop_assert!((s - bottom).abs() <= 1e-9 * bottom);
            }
            let tree = PrunedTree::from_table(&table).unwrap();
            if tree.bottom_candidates().len() <= 1 {
                break;
            }
            let layer = table.root().layer() + 1 + (pick.index(64) as u32 % (L - table.root().layer()));
            let probed = tree.candidates_at(layer);
            let alive_before = table.alive_points().len();
            table.apply_observation(Some(&ckm), &probed, *pick.get(&probed)).unwrap();
            prop_assert!(table.alive_points().len() <= alive_before);
        }
    }

    #[test]
    fn closed_form_overhead_matches_walk(bottom in arb_bottom()) {
        let tree = PrunedTree::from_bottom(L, &bottom).unwrap();
        for act in activations(0, L) {
            for &t in &bottom {
                let target = BeamId::new(L, t);
                prop_assert_eq!(overhead_for_target(&tree, &act, target).unwrap(), walk(&bottom, act.layers(), target));
            }
        }
    }

    #[test]
    fn single_leaf_costs_only_the_top_layer(leaf in 1u32..=N as u32) {
        let tree = PrunedTree::from_bottom(L, &[leaf]).unwrap();
        for act in activations(0, L) {
            prop_assert_eq!(overhead_for_target(&tree, &act, BeamId::new(L, leaf)).unwrap(), 1);
        }
    }

    #[test]
    fn layer_choice_ignores_weight_scale(
        weights in prop::collection::vec(0.0f64..5.0, N),
        scale in 1e-3f64..1e3,
    ) {
        prop_assume!(weights.iter().filter(|w| **w > 0.0).count() >= 2);
        let a = BeamWeightTable::from_bottom_weights(L, weights.clone()).unwrap();
        let b = BeamWeightTable::from_bottom_weights(L, weights.iter().map(|w| w * scale).collect()).unwrap();
        let (ta, tb) = (PrunedTree::from_table(&a).unwrap(), PrunedTree::from_table(&b).unwrap());
        prop_assert_eq!(optimal_layer(&ta, &a), optimal_layer(&tb, &b));
    }

    #[test]
    fn optimal_layer_maximises_reward(weights in prop::collection::vec(0.0f64..5.0, N)) {
        prop_assume!(weights.iter().filter(|w| **w > 0.0).count() >= 2);
        let table = BeamWeightTable::from_bottom_weights(L, weights).unwrap();
        let tree = PrunedTree::from_table(&table).unwrap();
        let acts = activations(0, L);
        let rewards: Vec<f64> = acts.iter().map(|a| reward(&tree, &table, a)).collect();
        let best = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let chosen = best_activation(&acts, &rewards);
        prop_assert!((rewards[chosen] - best).abs() <= 1e-12 * best.abs().max(1.0));
        prop_assert_eq!(optimal_layer(&tree, &table), acts[chosen].top());
    }

    #[test]
    fn similarity_is_scale_invariant_and_bounded(
        pair in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..20),
        c in 1e-6f64..1e6,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pair.into_iter().unzip();
        let s = similarity(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
        prop_assert!((similarity(&scaled, &b).unwrap() - s).abs() < 1e-12);
        prop_assert!((similarity(&a, &b).unwrap() - similarity(&b, &a).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn pruning_matches_direct_rule(
        ckm in arb_ckm(10),
        obs in prop::collection::vec(0.0f64..5.0, 2),
        eta in 0.05f64..1.0,
        with_beam in any::<bool>(),
    ) {
        let beams = vec![BeamId::new(1, 1), BeamId::new(1, 2)];
        let points: Vec<usize> = (0..10).collect();
        let strongest = with_beam.then(|| if obs[0] >= obs[1] { beams[0] } else { beams[1] });
        let got = prune_user_points(&ckm, &points, &beams, &obs, strongest, eta).unwrap();

        let cos = |g: &[f64]| {
            let d = obs[0] * g[0] + obs[1] * g[1];
            let n = obs[0].hypot(obs[1]) * g[0].hypot(g[1]);
            if n == 0.0 { 0.0 } else { d / n }
        };
        let scored: Vec<(usize, f64, BeamId)> = points
            .iter()
            .map(|&p| {
                let g = [ckm.gain_at(p, beams[0]), ckm.gain_at(p, beams[1])];
                (p, cos(&g), if g[1] > g[0] { beams[1] } else { beams[0] })
            })
            .collect();
        let max = scored.iter().map(|s| s.1).fold(0.0, f64::max);
        let mut expected: Vec<usize> = scored
            .iter()
            .filter(|s| s.1 > eta * max && strongest.is_none_or(|b| b == s.2))
            .map(|s| s.0)
            .collect();
        if max <= 0.0 {
            expected = points.clone();
        } else if expected.is_empty() {
            expected = scored.iter().filter(|s| (s.1 - max).abs() < 1e-15).map(|s| s.0).collect();
        }
        prop_assert_eq!(&got, &expected);
        prop_assert!(!got.is_empty() && got.len() <= points.len());
    }

    #[test]
    fn map_round_trip_is_bit_exact(ckm in arb_ckm(7)) {
        let bytes = ckm.to_bytes();
        let back = CkmGrid::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back, ckm);
    }
}
