//! Reward-driven choice of which tree layers to probe.
//!
//! An activation is the set of layers that will actually be probed on the way
//! down (the bottom layer is always included). For a hypothetical target leaf
//! its cost is every candidate at the first active layer, plus, at each later
//! active layer, the candidates below the ancestor identified one active layer
//! up whenever there are at least two of them (a single child is entered
//! without probing). The reward of an activation is minus the
//! potential-weighted sum of those costs over all candidate leaves.

use crate::channel::Sounder;
use crate::ckm::CkmGrid;
use crate::codebook::{BeamId, Root};
use crate::error::{Error, Result};
use crate::position::PositionPrior;
use crate::tree::{BeamWeightTable, PrunedTree, WeightParams};

/// Layers probed by one search strategy, ascending, always ending at `L`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Activation {
    layers: Vec<u32>,
}

impl Activation {
    pub fn new(mut layers: Vec<u32>, num_layers: u32) -> Result<Self> {
        layers.sort_unstable();
        layers.dedup();
        if layers.last() != Some(&num_layers) || layers[0] == 0 {
            return Err(Error::InvalidConfig(format!(
                "activation {layers:?} must be within 1..={num_layers} and contain {num_layers}"
            )));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[u32] {
        &self.layers
    }

    pub fn top(&self) -> u32 {
        self.layers[0]
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// The same strategy seen from a root at `root_layer`: shallower layers
    /// are dropped.
    pub fn below(&self, root_layer: u32) -> Activation {
        Activation {
            layers: self
                .layers
                .iter()
                .copied()
                .filter(|&l| l > root_layer)
                .collect(),
        }
    }
}

/// Every activation over layers `from_layer + 1 ..= num_layers` that contains
/// the bottom layer: `2^(num_layers - from_layer - 1)` of them.
pub fn activations(from_layer: u32, num_layers: u32) -> Vec<Activation> {
    if from_layer >= num_layers {
        return Vec::new();
    }
    let free: Vec<u32> = (from_layer + 1..num_layers).collect();
    (0u64..1 << free.len())
        .map(|mask| {
            let mut layers: Vec<u32> = free
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &l)| l)
                .collect();
            layers.push(num_layers);
            Activation { layers }
        })
        .collect()
}

/// Probes spent to isolate `target` under `activation`.
pub fn overhead_for_target(
    tree: &PrunedTree,
    activation: &Activation,
    target: BeamId,
) -> Result<u32> {
    if target.layer != tree.num_layers() || !tree.is_candidate(target) {
        return Err(Error::NotACandidate(target));
    }
    Ok(overhead_unchecked(tree, activation.layers(), target))
}

fn overhead_unchecked(tree: &PrunedTree, layers: &[u32], target: BeamId) -> u32 {
    let top = layers[0];
    let mut total = tree.count_at(top);
    let mut anchor = target.ancestor_at(top);
    for &l in &layers[1..] {
        let sub = tree.count_below(Root::Beam(anchor), l);
        if sub >= 2 {
            total += sub;
        }
        anchor = target.ancestor_at(l);
    }
    total
}

/// `-sum_n w_n * overhead_n` over bottom candidates.
pub fn reward(tree: &PrunedTree, table: &BeamWeightTable, activation: &Activation) -> f64 {
    let layers = activation.below(tree.root().layer());
    if layers.is_empty() {
        return 0.0;
    }
    -tree
        .bottom_candidates()
        .into_iter()
        .map(|t| table.weight(t) * overhead_unchecked(tree, layers.layers(), t) as f64)
        .sum::<f64>()
}

/// Index of the preferred activation: highest reward, then fewest active
/// layers, then the deepest first layer.
pub fn best_activation(candidates: &[Activation], rewards: &[f64]) -> usize {
    let scale = rewards.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut best = 0;
    for i in 1..candidates.len() {
        let (r, rb) = (rewards[i], rewards[best]);
        let better = if (r - rb).abs() <= tol {
            let (a, b) = (&candidates[i], &candidates[best]);
            a.len() < b.len() || (a.len() == b.len() && a.top() > b.top())
        } else {
            r > rb
        };
        if better {
            best = i;
        }
    }
    best
}

/// Layer at which the next probing round should happen, or `L + 1` when a
/// single leaf is left.
pub fn optimal_layer(tree: &PrunedTree, table: &BeamWeightTable) -> u32 {
    let l = tree.num_layers();
    if tree.count_at(l) <= 1 || tree.root().layer() >= l {
        return l + 1;
    }
    let acts = activations(tree.root().layer(), l);
    let rewards: Vec<f64> = acts.iter().map(|a| reward(tree, table, a)).collect();
    acts[best_activation(&acts, &rewards)].top()
}

/// One probing round: beams sent, magnitudes reported, beam chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRound {
    pub layer: u32,
    pub probed: Vec<BeamId>,
    pub magnitudes: Vec<f64>,
    pub feedback: BeamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub chosen: BeamId,
    pub overhead: u32,
    pub transcript: Vec<ProbeRound>,
}

impl SearchOutcome {
    pub fn transcript_probes(&self) -> u32 {
        self.transcript.iter().map(|r| r.probed.len() as u32).sum()
    }
}

/// Sounds `beams` and returns the magnitudes and the strongest beam (first
/// on ties).
pub fn sound_round<S: Sounder + ?Sized>(
    sounder: &mut S,
    layer: u32,
    beams: Vec<BeamId>,
) -> ProbeRound {
    let magnitudes: Vec<f64> = beams.iter().map(|&b| sounder.measure(b)).collect();
    let mut best = 0;
    for (i, m) in magnitudes.iter().enumerate() {
        if *m > magnitudes[best] {
            best = i;
        }
    }
    ProbeRound {
        layer,
        feedback: beams[best],
        probed: beams,
        magnitudes,
    }
}

/// Next-layer rule shared by the single-user searches.
pub trait LayerPolicy {
    fn next_layer(&self, tree: &PrunedTree, table: &BeamWeightTable) -> u32;
}

/// Exhaustive reward maximisation over activations.
pub struct RewardPolicy;

impl LayerPolicy for RewardPolicy {
    fn next_layer(&self, tree: &PrunedTree, table: &BeamWeightTable) -> u32 {
        optimal_layer(tree, table)
    }
}

/// Runs the probe / feedback / update loop from an initial table until one
/// bottom beam remains.
pub fn run_search<P: LayerPolicy + ?Sized, S: Sounder + ?Sized>(
    mut table: BeamWeightTable,
    ckm: Option<&CkmGrid>,
    policy: &P,
    sounder: &mut S,
) -> Result<SearchOutcome> {
    let l = table.num_layers();
    let mut transcript = Vec::new();
    loop {
        let tree = PrunedTree::from_table(&table)?;
        let bottom = tree.bottom_candidates();
        if bottom.len() == 1 {
            let overhead = transcript
                .iter()
                .map(|r: &ProbeRound| r.probed.len() as u32)
                .sum();
            return Ok(SearchOutcome {
                chosen: bottom[0],
                overhead,
                transcript,
            });
        }
        let layer = policy.next_layer(&tree, &table);
        debug_assert!(layer > tree.root().layer() && layer <= l);
        let beams = tree.candidates_at(layer);
        if beams.len() == 1 {
            table.set_root(Root::Beam(beams[0]));
            continue;
        }
        let round = sound_round(sounder, layer, beams);
        table.apply_observation(ckm, &round.probed, round.feedback)?;
        transcript.push(round);
    }
}

/// Single-user map-aided search with exact reward maximisation.
pub fn run_single_user<S: Sounder + ?Sized>(
    ckm: &CkmGrid,
    prior: &PositionPrior,
    sounder: &mut S,
    params: WeightParams,
) -> Result<SearchOutcome> {
    let table = BeamWeightTable::compute(ckm, prior, params)?;
    run_search(table, Some(ckm), &RewardPolicy, sounder)
}
