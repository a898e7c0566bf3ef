//! Joint map-aided search for several users.
//!
//! Each round picks one layer for everybody, probes the union of the matching
//! users' candidates at that layer once, and lets every still-active user
//! report the magnitudes it saw. Users compare that vector against the map at
//! each of their remaining candidate positions (cosine similarity) and drop
//! positions that no longer fit; matching users additionally require the
//! strongest beam to agree and descend to it.

use std::collections::BTreeSet;

use crate::channel::Sounder;
use crate::ckm::CkmGrid;
use crate::codebook::{BeamId, Root};
use crate::error::{Error, Result};
use crate::position::PositionPrior;
use crate::strategy::{activations, best_activation, optimal_layer, reward};
use crate::tree::{map_argmax, BeamWeightTable, PrunedTree, WeightParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointParams {
    pub weights: WeightParams,
    /// Relative similarity cut-off in (0, 1].
    pub eta: f64,
}

impl Default for JointParams {
    fn default() -> Self {
        Self {
            weights: WeightParams::default(),
            eta: 0.9,
        }
    }
}

/// Role of a user in the current round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Indicator {
    /// Search finished (`-1`).
    Terminated,
    /// Listens to the probed beams for side information only (`0`).
    Sidelobe,
    /// Its own candidates are probed this round (`1`).
    Matching,
}

impl Indicator {
    pub fn value(self) -> i8 {
        match self {
            Indicator::Terminated => -1,
            Indicator::Sidelobe => 0,
            Indicator::Matching => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UserState {
    pub id: usize,
    pub table: BeamWeightTable,
    pub indicator: Indicator,
    pub chosen: Option<BeamId>,
}

impl UserState {
    pub fn new(
        id: usize,
        ckm: &CkmGrid,
        prior: &PositionPrior,
        params: WeightParams,
    ) -> Result<Self> {
        let mut user = Self {
            id,
            table: BeamWeightTable::compute(ckm, prior, params)?,
            indicator: Indicator::Matching,
            chosen: None,
        };
        user.refresh_termination()?;
        Ok(user)
    }

    pub fn from_table(id: usize, table: BeamWeightTable) -> Result<Self> {
        let mut user = Self {
            id,
            table,
            indicator: Indicator::Matching,
            chosen: None,
        };
        user.refresh_termination()?;
        Ok(user)
    }

    pub fn tree(&self) -> PrunedTree {
        PrunedTree::from_table(&self.table).expect("active user has candidates")
    }

    pub fn points(&self) -> Vec<usize> {
        self.table.alive_points()
    }

    pub fn is_active(&self) -> bool {
        self.chosen.is_none()
    }

    /// Single-user preferred layer; `L + 1` once finished.
    pub fn single_user_layer(&self) -> u32 {
        if !self.is_active() {
            return self.table.num_layers() + 1;
        }
        optimal_layer(&self.tree(), &self.table)
    }

    fn refresh_termination(&mut self) -> Result<()> {
        let tree = PrunedTree::from_table(&self.table)?;
        let bottom = tree.bottom_candidates();
        if bottom.len() == 1 {
            self.chosen = Some(bottom[0]);
            self.indicator = Indicator::Terminated;
        }
        Ok(())
    }
}

/// Jointly preferred layer: per-user rewards are divided by the sum of their
/// absolute values over all activations before being added up across users.
pub fn joint_layer(users: &[UserState]) -> Result<u32> {
    let active: Vec<&UserState> = users.iter().filter(|u| u.is_active()).collect();
    let first = active.first().ok_or(Error::NoActiveUsers)?;
    let l = first.table.num_layers();
    let from = active.iter().map(|u| u.table.root().layer()).min().unwrap();
    let acts = activations(from, l);
    let mut total = vec![0.0; acts.len()];
    for user in &active {
        let tree = user.tree();
        let rewards: Vec<f64> = acts.iter().map(|a| reward(&tree, &user.table, a)).collect();
        let norm: f64 = rewards.iter().map(|r| r.abs()).sum();
        if norm > 0.0 {
            for (t, r) in total.iter_mut().zip(&rewards) {
                *t += r / norm;
            }
        }
    }
    Ok(acts[best_activation(&acts, &total)].top())
}

/// Round layer and user roles from the joint layer `l_mu`, each user's
/// single-user layer `l_su[k]` (`> L` when finished) and root layer.
///
/// The round layer is the shallowest of all proposals. When the joint layer is
/// strictly shallower than every single-user layer, the users whose root lies
/// above it are the matching ones.
pub fn select_round_from_layers(
    l_mu: u32,
    l_su: &[u32],
    root_layers: &[u32],
    num_layers: u32,
) -> (u32, Vec<Indicator>) {
    let min_su = l_su.iter().copied().filter(|&l| l <= num_layers).min();
    let layer = match min_su {
        Some(m) => m.min(l_mu),
        None => return (num_layers + 1, vec![Indicator::Terminated; l_su.len()]),
    };
    let joint_only = min_su.is_some_and(|m| layer < m);
    let indicators = l_su
        .iter()
        .zip(root_layers)
        .map(|(&su, &root)| {
            if su > num_layers {
                Indicator::Terminated
            } else if su == layer || (joint_only && root < layer) {
                Indicator::Matching
            } else {
                Indicator::Sidelobe
            }
        })
        .collect();
    (layer, indicators)
}

pub fn select_round(users: &mut [UserState]) -> Result<u32> {
    let l = users
        .first()
        .ok_or(Error::NoActiveUsers)?
        .table
        .num_layers();
    let l_su: Vec<u32> = users.iter().map(|u| u.single_user_layer()).collect();
    if l_su.iter().all(|&x| x > l) {
        return Err(Error::NoActiveUsers);
    }
    let l_mu = joint_layer(users)?;
    let roots: Vec<u32> = users.iter().map(|u| u.table.root().layer()).collect();
    let (layer, indicators) = select_round_from_layers(l_mu, &l_su, &roots, l);
    for (u, i) in users.iter_mut().zip(indicators) {
        u.indicator = i;
    }
    Ok(layer)
}

/// Union of the matching users' candidates at `layer`, ascending by index.
pub fn union_beams(users: &[UserState], layer: u32) -> Vec<BeamId> {
    let set: BTreeSet<BeamId> = users
        .iter()
        .filter(|u| u.indicator == Indicator::Matching)
        .flat_map(|u| u.tree().candidates_at(layer))
        .collect();
    set.into_iter().collect()
}

/// Map gains of `beams` at a grid point and the strongest of them.
pub fn map_gain_vector(
    ckm: &CkmGrid,
    point: usize,
    beams: &[BeamId],
) -> (Vec<f64>, Option<BeamId>) {
    (
        beams.iter().map(|&b| ckm.gain_at(point, b)).collect(),
        map_argmax(ckm, point, beams),
    )
}

/// Cosine similarity of two nonnegative vectors; 0 when either is all zero.
pub fn similarity(observed: &[f64], mapped: &[f64]) -> Result<f64> {
    if observed.len() != mapped.len() {
        return Err(Error::DimensionMismatch {
            expected: observed.len(),
            actual: mapped.len(),
        });
    }
    let dot: f64 = observed.iter().zip(mapped).map(|(a, b)| a * b).sum();
    let na = observed.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = mapped.iter().map(|b| b * b).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

/// Survivors among `points` after an observation. With `strongest` set (a
/// matching user) a point must also have the observed beam as its strongest
/// map beam. Falls back to the best-correlated points if nothing survives, and
/// to the unchanged set if no point correlates at all.
pub fn prune_user_points(
    ckm: &CkmGrid,
    points: &[usize],
    beams: &[BeamId],
    observed: &[f64],
    strongest: Option<BeamId>,
    eta: f64,
) -> Result<Vec<usize>> {
    let scored: Vec<(usize, f64, Option<BeamId>)> = points
        .iter()
        .map(|&p| {
            let (g_map, f_map) = map_gain_vector(ckm, p, beams);
            Ok((p, similarity(observed, &g_map)?, f_map))
        })
        .collect::<Result<_>>()?;
    let max = scored.iter().map(|s| s.1).fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(points.to_vec());
    }
    let survivors: Vec<usize> = scored
        .iter()
        .filter(|(_, u, f)| *u > eta * max && strongest.is_none_or(|s| *f == Some(s)))
        .map(|s| s.0)
        .collect();
    if !survivors.is_empty() {
        return Ok(survivors);
    }
    Ok(scored.iter().filter(|s| s.1 == max).map(|s| s.0).collect())
}

/// What one user reported in a round.
#[derive(Debug, Clone, PartialEq)]
pub struct UserObservation {
    pub user: usize,
    pub indicator: Indicator,
    pub magnitudes: Option<Vec<f64>>,
    pub strongest: Option<BeamId>,
    pub points_before: usize,
    pub points_after: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointRound {
    pub round: usize,
    pub layer: u32,
    pub beams: Vec<BeamId>,
    /// Number of beams actually transmitted (0 for a free descent).
    pub probes: u32,
    pub observations: Vec<UserObservation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserOutcome {
    pub chosen: BeamId,
    /// Probes charged to this user: each transmitted beam is charged to the
    /// lowest-id matching user that had it as a candidate.
    pub overhead: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiUserOutcome {
    pub users: Vec<UserOutcome>,
    pub total_overhead: u32,
    pub rounds: Vec<JointRound>,
}

/// Runs joint rounds until every user has a single bottom candidate.
pub fn run_joint<S: Sounder>(
    ckm: &CkmGrid,
    mut users: Vec<UserState>,
    sounders: &mut [S],
    eta: f64,
) -> Result<MultiUserOutcome> {
    if users.is_empty() {
        return Err(Error::NoActiveUsers);
    }
    if sounders.len() != users.len() {
        return Err(Error::DimensionMismatch {
            expected: users.len(),
            actual: sounders.len(),
        });
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidConfig(format!("eta {eta} outside (0, 1]")));
    }
    let mut charged = vec![0u32; users.len()];
    let mut rounds = Vec::new();

    while users.iter().any(|u| u.is_active()) {
        let layer = select_round(&mut users)?;
        let beams = union_beams(&users, layer);
        let own: Vec<Vec<BeamId>> = users
            .iter()
            .map(|u| {
                if u.indicator == Indicator::Matching {
                    u.tree().candidates_at(layer)
                } else {
                    Vec::new()
                }
            })
            .collect();

        let mut observations = Vec::new();
        if beams.len() == 1 {
            for u in users
                .iter_mut()
                .filter(|u| u.indicator == Indicator::Matching)
            {
                let before = u.table.alive_points().len();
                u.table.set_root(Root::Beam(beams[0]));
                u.refresh_termination()?;
                observations.push(UserObservation {
                    user: u.id,
                    indicator: Indicator::Matching,
                    magnitudes: None,
                    strongest: Some(beams[0]),
                    points_before: before,
                    points_after: before,
                });
            }
            rounds.push(JointRound {
                round: rounds.len(),
                layer,
                beams,
                probes: 0,
                observations,
            });
            continue;
        }

        for &b in &beams {
            if let Some(k) = (0..users.len()).find(|&k| own[k].contains(&b)) {
                charged[k] += 1;
            }
        }

        for (k, user) in users.iter_mut().enumerate() {
            if user.indicator == Indicator::Terminated {
                continue;
            }
            let magnitudes: Vec<f64> = beams.iter().map(|&b| sounders[k].measure(b)).collect();
            let strongest =
                (user.indicator == Indicator::Matching).then(|| argmax_beam(&beams, &magnitudes));
            let before = user.table.alive_points();
            let survivors = prune_user_points(ckm, &before, &beams, &magnitudes, strongest, eta)?;
            let keep: BTreeSet<usize> = survivors.iter().copied().collect();
            user.table.retain_points(|p| keep.contains(&p));
            if user.indicator == Indicator::Matching {
                // descend to the strongest of the user's own candidates
                let own_mags: Vec<f64> = own[k]
                    .iter()
                    .map(|b| magnitudes[beams.binary_search(b).expect("own beam in union")])
                    .collect();
                user.table
                    .set_root(Root::Beam(argmax_beam(&own[k], &own_mags)));
            }
            user.refresh_termination()?;
            observations.push(UserObservation {
                user: user.id,
                indicator: user.indicator,
                magnitudes: Some(magnitudes),
                strongest,
                points_before: before.len(),
                points_after: survivors.len(),
            });
        }
        rounds.push(JointRound {
            round: rounds.len(),
            layer,
            probes: beams.len() as u32,
            beams,
            observations,
        });
    }

    let total_overhead = rounds.iter().map(|r| r.probes).sum();
    Ok(MultiUserOutcome {
        users: users
            .iter()
            .zip(charged)
            .map(|(u, overhead)| UserOutcome {
                chosen: u.chosen.expect("finished"),
                overhead,
            })
            .collect(),
        total_overhead,
        rounds,
    })
}

fn argmax_beam(beams: &[BeamId], magnitudes: &[f64]) -> BeamId {
    let mut best = 0;
    for (i, m) in magnitudes.iter().enumerate() {
        if *m > magnitudes[best] {
            best = i;
        }
    }
    beams[best]
}

/// Joint search from per-user priors.
pub fn run_multi_user<S: Sounder>(
    ckm: &CkmGrid,
    priors: &[PositionPrior],
    sounders: &mut [S],
    params: JointParams,
) -> Result<MultiUserOutcome> {
    let users = priors
        .iter()
        .enumerate()
        .map(|(k, p)| UserState::new(k, ckm, p, params.weights))
        .collect::<Result<Vec<_>>>()?;
    run_joint(ckm, users, sounders, params.eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn similarity_values() {
        assert_relative_eq!(
            similarity(&[0.3, 0.4], &[0.3, 0.4]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_eq!(similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_relative_eq!(
            similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-12
        );
        assert_eq!(similarity(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn round_selection() {
        let (layer, ind) = select_round_from_layers(4, &[3, 5, 8], &[0, 0, 2], 7);
        assert_eq!(layer, 3);
        let v: Vec<i8> = ind.iter().map(|i| i.value()).collect();
        assert_eq!(v, vec![1, 0, -1]);

        let (layer, ind) = select_round_from_layers(9, &[8, 8], &[7, 7], 7);
        assert_eq!(layer, 8);
        assert!(ind.iter().all(|i| *i == Indicator::Terminated));

        // joint layer strictly shallower: users rooted above it match
        let (layer, ind) = select_round_from_layers(2, &[4, 5, 3], &[0, 2, 1], 7);
        assert_eq!(layer, 2);
        assert_eq!(
            ind,
            vec![
                Indicator::Matching,
                Indicator::Sidelobe,
                Indicator::Matching
            ]
        );
    }

    use crate::channel::{synthesize_channel, ArrayConfig, ChannelSounder, Environment, Point2};
    use crate::ckm::{build_ckm, GridSpec};
    use crate::codebook::HierarchicalCodebook;
    use crate::position::SubRegion;
    use crate::strategy::run_single_user;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Setup {
        ckm: CkmGrid,
        cb: HierarchicalCodebook,
        array: ArrayConfig,
        grid: GridSpec,
    }

    fn setup() -> Setup {
        let array = ArrayConfig {
            num_antennas: 16,
            carrier_frequency_hz: 28e9,
            bs_position: Point2::new(0.0, 0.0),
        };
        let grid = GridSpec {
            origin: Point2::new(-11.5, 2.5),
            spacing_x: 1.0,
            spacing_y: 1.0,
            nx: 24,
            ny: 12,
        };
        let cb = HierarchicalCodebook::build(16).unwrap();
        let ckm = build_ckm(&Environment::line_of_sight_only(), &array, &cb, &grid, None).unwrap();
        Setup {
            ckm,
            cb,
            array,
            grid,
        }
    }

    fn prior(points: Vec<usize>) -> PositionPrior {
        PositionPrior::new(vec![SubRegion { points, prior: 1.0 }]).unwrap()
    }

    fn noiseless<'a>(s: &'a Setup, point: usize) -> ChannelSounder<'a, ChaCha8Rng> {
        let ch = synthesize_channel(
            &Environment::line_of_sight_only(),
            &s.array,
            s.grid.point(point),
        )
        .unwrap();
        ChannelSounder::new(&s.cb, &ch, 0.0, ChaCha8Rng::seed_from_u64(0))
    }

    fn oracle(sounder: &ChannelSounder<'_, ChaCha8Rng>, cb: &HierarchicalCodebook) -> BeamId {
        cb.bottom_beams()
            .max_by(|a, b| sounder.true_gain(*a).total_cmp(&sounder.true_gain(*b)))
            .unwrap()
    }

    #[test]
    fn single_user_matches_reward_search() {
        let s = setup();
        let p = prior((0..48).collect());
        for truth in [0usize, 13, 40] {
            let mut a = noiseless(&s, truth);
            let single = run_single_user(&s.ckm, &p, &mut a, WeightParams::default()).unwrap();
            let mut b = vec![noiseless(&s, truth)];
            let joint = run_multi_user(
                &s.ckm,
                std::slice::from_ref(&p),
                &mut b,
                JointParams::default(),
            )
            .unwrap();
            // magnitude-based pruning can only sharpen the point set, so the
            // joint search is never asked to be costlier than the single one here
            assert_eq!(joint.users[0].chosen, single.chosen);
            assert!(joint.total_overhead <= single.overhead);
        }
    }

    #[test]
    fn co_located_users_share_every_probe() {
        let s = setup();
        let p = prior((0..60).collect());
        for truth in [7usize, 33, 58] {
            let mut one = vec![noiseless(&s, truth)];
            let alone = run_multi_user(
                &s.ckm,
                std::slice::from_ref(&p),
                &mut one,
                JointParams::default(),
            )
            .unwrap();
            let mut three: Vec<_> = (0..3).map(|_| noiseless(&s, truth)).collect();
            let together = run_multi_user(
                &s.ckm,
                &[p.clone(), p.clone(), p.clone()],
                &mut three,
                JointParams::default(),
            )
            .unwrap();
            assert_eq!(together.total_overhead, alone.total_overhead);
            assert!(together
                .users
                .iter()
                .all(|u| u.chosen == alone.users[0].chosen));
            // all probes are charged to the first user
            assert_eq!(together.users[0].overhead, together.total_overhead);
        }
    }

    #[test]
    fn noiseless_joint_search_finds_every_oracle() {
        let s = setup();
        let priors = vec![
            prior((0..24).chain(24..30).collect()),
            prior((100..112).chain(124..136).collect()),
            prior((200..212).collect()),
        ];
        for truths in [[3usize, 105, 201], [29, 135, 211], [12, 124, 205]] {
            let mut sounders: Vec<_> = truths.iter().map(|&t| noiseless(&s, t)).collect();
            let oracles: Vec<_> = sounders.iter().map(|x| oracle(x, &s.cb)).collect();
            let out =
                run_multi_user(&s.ckm, &priors, &mut sounders, JointParams::default()).unwrap();
            for (u, o) in out.users.iter().zip(&oracles) {
                assert_eq!(u.chosen, *o);
            }
            assert_eq!(
                out.total_overhead,
                out.users.iter().map(|u| u.overhead).sum::<u32>()
            );
            assert_eq!(
                out.total_overhead,
                out.rounds.iter().map(|r| r.probes).sum::<u32>()
            );
            for r in &out.rounds {
                for o in &r.observations {
                    assert!(o.points_after <= o.points_before);
                }
            }
        }
    }

    #[test]
    fn pruning_keeps_best_match_when_nothing_survives() {
        let s = setup();
        let beams = vec![BeamId::new(1, 1), BeamId::new(1, 2)];
        let points: Vec<usize> = (0..24).collect();
        // observation pointing at a beam no point favours
        let g_obs = vec![1.0, 0.0];
        let kept = prune_user_points(
            &s.ckm,
            &points,
            &beams,
            &g_obs,
            Some(BeamId::new(1, 1)),
            0.9,
        )
        .unwrap();
        assert!(!kept.is_empty());
        // all-zero observation keeps the set
        let kept = prune_user_points(&s.ckm, &points, &beams, &[0.0, 0.0], None, 0.9).unwrap();
        assert_eq!(kept, points);
    }

    #[test]
    fn parameter_errors() {
        let s = setup();
        let p = prior(vec![0, 1, 2]);
        let mut none: Vec<ChannelSounder<'_, ChaCha8Rng>> = Vec::new();
        assert!(run_multi_user(
            &s.ckm,
            std::slice::from_ref(&p),
            &mut none,
            JointParams::default()
        )
        .is_err());
        let mut one = vec![noiseless(&s, 0)];
        let bad = JointParams {
            eta: 0.0,
            ..JointParams::default()
        };
        assert!(run_multi_user(&s.ckm, &[p], &mut one, bad).is_err());
        assert!(matches!(joint_layer(&[]), Err(Error::NoActiveUsers)));
    }
}
