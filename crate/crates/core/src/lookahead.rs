//! Two-layer lookahead: decide the next probing layer from the shape of the
//! candidate subtree in the two layers below the current root only.

use crate::channel::Sounder;
use crate::ckm::CkmGrid;
use crate::codebook::{BeamId, Root};
use crate::error::{Error, Result};
use crate::position::PositionPrior;
use crate::strategy::{run_search, LayerPolicy, SearchOutcome};
use crate::tree::{BeamWeightTable, PrunedTree, WeightParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// Two children with two candidate grandchildren each.
    FullTree,
    /// Two children with two and one candidate grandchildren.
    AsymmetricBinary,
    /// Two children with one candidate grandchild each.
    SingleChain,
    /// A single candidate child; it is entered without probing.
    ForcedDescent,
    /// The children are already bottom-layer beams.
    Terminal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChildView {
    pub beam: BeamId,
    pub weight: f64,
    pub grandchildren: Vec<(BeamId, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookaheadView {
    pub root: Root,
    pub num_layers: u32,
    pub children: Vec<ChildView>,
}

impl LookaheadView {
    pub fn from_tree(tree: &PrunedTree, table: &BeamWeightTable) -> Self {
        let root = tree.root();
        let l = tree.num_layers();
        let child_layer = root.layer() + 1;
        let children = if child_layer > l {
            Vec::new()
        } else {
            tree.candidates_at(child_layer)
                .into_iter()
                .map(|c| ChildView {
                    beam: c,
                    weight: table.weight(c),
                    grandchildren: if child_layer < l {
                        tree.candidates_below(Root::Beam(c), child_layer + 1)
                            .into_iter()
                            .map(|g| (g, table.weight(g)))
                            .collect()
                    } else {
                        Vec::new()
                    },
                })
                .collect()
        };
        Self {
            root,
            num_layers: l,
            children,
        }
    }

    pub fn root_layer(&self) -> u32 {
        self.root.layer()
    }
}

pub fn classify(view: &LookaheadView) -> Result<Topology> {
    if view.children.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if view.root_layer() + 1 >= view.num_layers {
        return Ok(Topology::Terminal);
    }
    if view.children.len() == 1 {
        return Ok(Topology::ForcedDescent);
    }
    let counts = (
        view.children[0].grandchildren.len(),
        view.children[1].grandchildren.len(),
    );
    match counts {
        (2, 2) => Ok(Topology::FullTree),
        (2, 1) | (1, 2) => Ok(Topology::AsymmetricBinary),
        (1, 1) => Ok(Topology::SingleChain),
        _ => Err(Error::EmptyCandidates),
    }
}

/// Expected probes `(T_ES, T_HS)` for an asymmetric view: exhaustive search
/// of the three grandchildren versus two hierarchical steps.
pub fn asymmetric_costs(view: &LookaheadView) -> (f64, f64) {
    let (pair, single) = if view.children[0].grandchildren.len() == 2 {
        (&view.children[0], &view.children[1])
    } else {
        (&view.children[1], &view.children[0])
    };
    let w1 = pair.grandchildren[0].1;
    let w2 = pair.grandchildren[1].1;
    let w3 = single.grandchildren[0].1;
    (3.0 * (w1 + w2 + w3), 4.0 * w1 + 4.0 * w2 + 2.0 * w3)
}

pub fn next_layer(view: &LookaheadView) -> Result<u32> {
    let l = view.root_layer();
    Ok(match classify(view)? {
        Topology::FullTree | Topology::ForcedDescent | Topology::Terminal => l + 1,
        Topology::SingleChain => l + 2,
        Topology::AsymmetricBinary => {
            let (t_es, t_hs) = asymmetric_costs(view);
            if t_hs <= t_es {
                l + 1
            } else {
                l + 2
            }
        }
    })
}

pub struct LookaheadPolicy;

impl LayerPolicy for LookaheadPolicy {
    fn next_layer(&self, tree: &PrunedTree, table: &BeamWeightTable) -> u32 {
        next_layer(&LookaheadView::from_tree(tree, table)).expect("active tree has candidates")
    }
}

/// Single-user map-aided search with two-layer lookahead.
pub fn run_lookahead<S: Sounder + ?Sized>(
    ckm: &CkmGrid,
    prior: &PositionPrior,
    sounder: &mut S,
    params: WeightParams,
) -> Result<SearchOutcome> {
    let table = BeamWeightTable::compute(ckm, prior, params)?;
    run_search(table, Some(ckm), &LookaheadPolicy, sounder)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view_for(num_layers: u32, bottom: Vec<f64>) -> LookaheadView {
        let table = BeamWeightTable::from_bottom_weights(num_layers, bottom).unwrap();
        let tree = PrunedTree::from_table(&table).unwrap();
        LookaheadView::from_tree(&tree, &table)
    }

    #[test]
    fn classifies_fig5_shapes() {
        // layers 1 and 2 below the virtual root of a 3-layer tree
        let full = view_for(3, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(classify(&full).unwrap(), Topology::FullTree);
        let asym = view_for(3, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(classify(&asym).unwrap(), Topology::AsymmetricBinary);
        let mirrored = view_for(3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(classify(&mirrored).unwrap(), Topology::AsymmetricBinary);
        let chain = view_for(3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(classify(&chain).unwrap(), Topology::SingleChain);
        let forced = view_for(3, vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(classify(&forced).unwrap(), Topology::ForcedDescent);
        let terminal = view_for(1, vec![1.0, 1.0]);
        assert_eq!(classify(&terminal).unwrap(), Topology::Terminal);
    }

    #[test]
    fn asymmetric_rule() {
        // unit weights: T_ES = 9 < T_HS = 10 -> skip a layer
        let v = view_for(3, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(asymmetric_costs(&v), (9.0, 10.0));
        assert_eq!(next_layer(&v).unwrap(), 2);
        // mass on the lone grandchild: T_HS = 2.4 < T_ES = 3
        let v = view_for(3, vec![0.1, 0.0, 0.1, 0.0, 0.8, 0.0, 0.0, 0.0]);
        let (es, hs) = asymmetric_costs(&v);
        assert!((es - 3.0).abs() < 1e-12 && (hs - 2.4).abs() < 1e-12);
        assert_eq!(next_layer(&v).unwrap(), 1);
        // orientation does not matter
        let v = view_for(3, vec![0.8, 0.0, 0.0, 0.0, 0.1, 0.0, 0.1, 0.0]);
        assert_eq!(next_layer(&v).unwrap(), 1);
    }

    #[test]
    fn chain_and_full_rules() {
        let chain = view_for(3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(next_layer(&chain).unwrap(), 2);
        let full = view_for(3, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(next_layer(&full).unwrap(), 1);
    }

    #[test]
    fn next_layer_scale_invariant() {
        let w = vec![0.3, 0.0, 0.2, 0.0, 0.45, 0.0, 0.0, 0.0];
        let a = view_for(3, w.clone());
        let b = view_for(3, w.iter().map(|x| x * 1e4).collect());
        assert_eq!(next_layer(&a).unwrap(), next_layer(&b).unwrap());
    }

    #[test]
    fn complete_tree_is_plain_hierarchical_search() {
        let table = BeamWeightTable::from_bottom_weights(4, vec![1.0; 16]).unwrap();
        let target = BeamId::new(4, 11);
        let mut s = |b: BeamId| if b.is_ancestor_of(target) { 1.0 } else { 0.2 };
        let out = run_search(table, None, &LookaheadPolicy, &mut s).unwrap();
        assert_eq!(out.chosen, target);
        assert_eq!(out.overhead, 8);
        assert!(out.transcript.iter().all(|r| r.probed.len() == 2));
    }

    #[test]
    fn chain_tree_needs_at_most_one_pair() {
        // depth-4 tree, one candidate per layer
        let mut w = vec![0.0; 16];
        w[9] = 1.0;
        let table = BeamWeightTable::from_bottom_weights(4, w).unwrap();
        let mut s = |_: BeamId| 1.0;
        let out = run_search(table, None, &LookaheadPolicy, &mut s).unwrap();
        assert_eq!(out.chosen, BeamId::new(4, 10));
        assert!(out.overhead <= 2);

        // two leaves deep in one branch: forced descent then a single pair
        let mut w = vec![0.0; 16];
        w[8] = 1.0;
        w[9] = 1.0;
        let table = BeamWeightTable::from_bottom_weights(4, w).unwrap();
        let target = BeamId::new(4, 10);
        let mut s = |b: BeamId| if b == target { 1.0 } else { 0.0 };
        let out = run_search(table, None, &LookaheadPolicy, &mut s).unwrap();
        assert_eq!(out.chosen, target);
        assert_eq!(out.overhead, 2);
    }

    #[test]
    fn empty_view_is_an_error() {
        let v = LookaheadView {
            root: Root::Virtual,
            num_layers: 3,
            children: Vec::new(),
        };
        assert!(classify(&v).is_err());
    }
}
