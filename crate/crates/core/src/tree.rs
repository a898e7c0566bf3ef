//! Beam potentials and the pruned search tree they induce.
//!
//! Every candidate grid point contributes `p * G` to each bottom beam whose map
//! gain is within a factor `beta` of that point's best bottom beam; wider beams
//! carry the sum of their two children. Codewords with positive potential form
//! an ancestor-closed, generally incomplete binary tree.

use crate::ckm::CkmGrid;
use crate::codebook::{BeamId, Root};
use crate::error::{Error, Result};
use crate::position::PositionPrior;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams {
    /// Relative gain threshold in (0, 1].
    pub beta: f64,
    /// Keep at most this many bottom beams per grid point (strongest first).
    pub retain_per_point: Option<usize>,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self {
            beta: 0.5,
            retain_per_point: None,
        }
    }
}

impl WeightParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "beta {} outside (0, 1]",
                self.beta
            )));
        }
        if self.retain_per_point == Some(0) {
            return Err(Error::InvalidConfig("retain_per_point must be >= 1".into()));
        }
        Ok(())
    }
}

/// Thresholded contributions of one candidate grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointWeights {
    pub grid_index: usize,
    pub probability: f64,
    pub alive: bool,
    /// `(bottom index, p * G)` for every beam passing the threshold.
    pub beams: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
enum BottomSource {
    Points(Vec<PointWeights>),
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamWeightTable {
    num_layers: u32,
    params: WeightParams,
    source: BottomSource,
    root: Root,
    // layer_weights[l - 1][n - 1]
    layer_weights: Vec<Vec<f64>>,
    uniform_fallback: bool,
}

impl BeamWeightTable {
    /// Builds point-wise and aggregated potentials from the map and prior.
    pub fn compute(ckm: &CkmGrid, prior: &PositionPrior, params: WeightParams) -> Result<Self> {
        params.validate()?;
        prior.check_within(ckm.grid())?;
        let num_layers = ckm.num_layers();
        let bottom_count = 1u32 << num_layers;
        let mut points = Vec::with_capacity(prior.num_points());
        let mut gains: Vec<(u32, f64)> = Vec::with_capacity(bottom_count as usize);
        for (k, p) in prior.points() {
            gains.clear();
            gains.extend(
                (1..=bottom_count).map(|n| (n, ckm.gain_at(k, BeamId::new(num_layers, n)))),
            );
            let max = gains.iter().map(|g| g.1).fold(0.0, f64::max);
            let threshold = params.beta * max;
            let mut kept: Vec<(u32, f64)> = gains
                .iter()
                .copied()
                .filter(|&(_, g)| g >= threshold && g > 0.0)
                .collect();
            if let Some(cap) = params.retain_per_point {
                kept.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                kept.truncate(cap);
                kept.sort_by_key(|e| e.0);
            }
            points.push(PointWeights {
                grid_index: k,
                probability: p,
                alive: true,
                beams: kept.into_iter().map(|(n, g)| (n, p * g)).collect(),
            });
        }
        let mut table = Self {
            num_layers,
            params,
            source: BottomSource::Points(points),
            root: Root::Virtual,
            layer_weights: Vec::new(),
            uniform_fallback: false,
        };
        table.recompute();
        if table.total_weight() <= 0.0 {
            return Err(Error::EmptyCandidates);
        }
        Ok(table)
    }

    /// Table driven directly by bottom-layer weights, with no grid points
    /// behind it.
    pub fn from_bottom_weights(num_layers: u32, bottom: Vec<f64>) -> Result<Self> {
        if bottom.len() != 1usize << num_layers {
            return Err(Error::DimensionMismatch {
                expected: 1 << num_layers,
                actual: bottom.len(),
            });
        }
        if bottom.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let mut table = Self {
            num_layers,
            params: WeightParams::default(),
            source: BottomSource::Fixed(bottom),
            root: Root::Virtual,
            layer_weights: Vec::new(),
            uniform_fallback: false,
        };
        table.recompute();
        if table.total_weight() <= 0.0 {
            return Err(Error::EmptyCandidates);
        }
        Ok(table)
    }

    pub fn num_layers(&self) -> u32 {
        self.num_layers
    }

    pub fn params(&self) -> WeightParams {
        self.params
    }

    pub fn root(&self) -> Root {
        self.root
    }

    pub fn uses_uniform_fallback(&self) -> bool {
        self.uniform_fallback
    }

    pub fn weight(&self, beam: BeamId) -> f64 {
        self.layer_weights[beam.layer as usize - 1][beam.index as usize - 1]
    }

    pub fn layer_weights(&self, layer: u32) -> &[f64] {
        &self.layer_weights[layer as usize - 1]
    }

    pub fn bottom_weights(&self) -> &[f64] {
        self.layer_weights(self.num_layers)
    }

    pub fn total_weight(&self) -> f64 {
        self.bottom_weights().iter().sum()
    }

    pub fn points(&self) -> &[PointWeights] {
        match &self.source {
            BottomSource::Points(p) => p,
            BottomSource::Fixed(_) => &[],
        }
    }

    /// Grid indices of the points still considered possible.
    pub fn alive_points(&self) -> Vec<usize> {
        self.points()
            .iter()
            .filter(|p| p.alive)
            .map(|p| p.grid_index)
            .collect()
    }

    fn recompute(&mut self) {
        let l = self.num_layers;
        let count = 1usize << l;
        let (lo, hi) = self.root.range_at(l);
        let mut bottom = vec![0.0; count];
        match &self.source {
            BottomSource::Points(points) => {
                for p in points.iter().filter(|p| p.alive) {
                    for &(n, w) in &p.beams {
                        bottom[n as usize - 1] += w;
                    }
                }
            }
            BottomSource::Fixed(w) => bottom.copy_from_slice(w),
        }
        for (i, w) in bottom.iter_mut().enumerate() {
            let n = i as u32 + 1;
            if n < lo || n > hi {
                *w = 0.0;
            }
        }
        self.uniform_fallback = false;
        if bottom.iter().sum::<f64>() <= 0.0 && self.root != Root::Virtual {
            // keep searching below the last observation
            for w in &mut bottom[lo as usize - 1..hi as usize] {
                *w = 1.0;
            }
            self.uniform_fallback = true;
        }
        let mut layers = vec![bottom];
        for _ in 1..l {
            let below = layers.last().unwrap();
            let above: Vec<f64> = below.chunks_exact(2).map(|c| c[0] + c[1]).collect();
            layers.push(above);
        }
        layers.reverse();
        self.layer_weights = layers;
    }

    /// Applies UE feedback `observed` after probing `probed`: the root
    /// descends to `observed`, everything outside its subtree is dropped, and
    /// any grid point whose strongest map beam among `probed` differs from the
    /// observation stops contributing.
    pub fn apply_observation(
        &mut self,
        ckm: Option<&CkmGrid>,
        probed: &[BeamId],
        observed: BeamId,
    ) -> Result<()> {
        if !observed.is_valid(self.num_layers)
            || self.weight(observed) <= 0.0
            || !self.root.covers(observed)
            || observed.layer <= self.root.layer()
        {
            return Err(Error::NotACandidate(observed));
        }
        if let (Some(ckm), BottomSource::Points(points)) = (ckm, &mut self.source) {
            for p in points.iter_mut().filter(|p| p.alive) {
                if map_argmax(ckm, p.grid_index, probed) != Some(observed) {
                    p.alive = false;
                }
            }
        }
        self.root = Root::Beam(observed);
        self.recompute();
        Ok(())
    }

    /// Moves the root without any point-level evidence.
    pub fn set_root(&mut self, root: Root) {
        self.root = root;
        self.recompute();
    }

    /// Keeps only the listed grid points alive.
    pub fn retain_points(&mut self, mut keep: impl FnMut(usize) -> bool) {
        if let BottomSource::Points(points) = &mut self.source {
            for p in points.iter_mut().filter(|p| p.alive) {
                if !keep(p.grid_index) {
                    p.alive = false;
                }
            }
        }
        self.recompute();
    }
}

/// Strongest map beam at a grid point among `beams`; ties go to the earlier
/// entry.
pub fn map_argmax(ckm: &CkmGrid, point: usize, beams: &[BeamId]) -> Option<BeamId> {
    let mut best: Option<(BeamId, f64)> = None;
    for &b in beams {
        let g = ckm.gain_at(point, b);
        if best.is_none_or(|(_, bg)| g > bg) {
            best = Some((b, g));
        }
    }
    best.map(|(b, _)| b)
}

/// Codewords with positive potential below the current root.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedTree {
    num_layers: u32,
    root: Root,
    // prefix[l - 1][n] = candidates among indices 1..=n at layer l
    prefix: Vec<Vec<u32>>,
}

impl PrunedTree {
    pub fn from_table(table: &BeamWeightTable) -> Result<Self> {
        let l = table.num_layers();
        let prefix: Vec<Vec<u32>> = (1..=l)
            .map(|layer| {
                let mut acc = 0;
                std::iter::once(0)
                    .chain(table.layer_weights(layer).iter().map(|&w| {
                        acc += u32::from(w > 0.0);
                        acc
                    }))
                    .collect()
            })
            .collect();
        if prefix[l as usize - 1][1 << l] == 0 {
            return Err(Error::EmptyCandidates);
        }
        Ok(Self {
            num_layers: l,
            root: table.root(),
            prefix,
        })
    }

    /// Tree whose bottom candidates are exactly `bottom` (ancestors implied).
    pub fn from_bottom(num_layers: u32, bottom: &[u32]) -> Result<Self> {
        let mut w = vec![0.0; 1 << num_layers];
        for &n in bottom {
            let slot = w
                .get_mut(n as usize - 1)
                .ok_or(Error::InvalidBeam(BeamId::new(num_layers, n)))?;
            *slot = 1.0;
        }
        Self::from_table(&BeamWeightTable::from_bottom_weights(num_layers, w)?)
    }

    pub fn num_layers(&self) -> u32 {
        self.num_layers
    }

    pub fn root(&self) -> Root {
        self.root
    }

    pub fn is_candidate(&self, beam: BeamId) -> bool {
        beam.is_valid(self.num_layers)
            && self.root.covers(beam)
            && beam.layer > self.root.layer()
            && self.count_range(beam.layer, beam.index, beam.index) == 1
    }

    /// Candidates at `layer` with index in `lo..=hi`.
    pub fn count_range(&self, layer: u32, lo: u32, hi: u32) -> u32 {
        let p = &self.prefix[layer as usize - 1];
        p[hi as usize] - p[lo as usize - 1]
    }

    /// Candidates at `layer` descending from `ancestor` (or the root).
    pub fn count_below(&self, ancestor: Root, layer: u32) -> u32 {
        let (lo, hi) = ancestor.range_at(layer);
        self.count_range(layer, lo, hi)
    }

    pub fn count_at(&self, layer: u32) -> u32 {
        self.count_below(self.root, layer)
    }

    pub fn candidates_below(&self, ancestor: Root, layer: u32) -> Vec<BeamId> {
        let (lo, hi) = ancestor.range_at(layer);
        let p = &self.prefix[layer as usize - 1];
        (lo..=hi)
            .filter(|&n| p[n as usize] > p[n as usize - 1])
            .map(|n| BeamId::new(layer, n))
            .collect()
    }

    pub fn candidates_at(&self, layer: u32) -> Vec<BeamId> {
        self.candidates_below(self.root, layer)
    }

    pub fn bottom_candidates(&self) -> Vec<BeamId> {
        self.candidates_at(self.num_layers)
    }

    /// All candidates below the root, layer by layer.
    pub fn candidates(&self) -> Vec<BeamId> {
        (self.root.layer() + 1..=self.num_layers)
            .flat_map(|l| self.candidates_at(l))
            .collect()
    }
}

/// Candidate tree of a weight table.
pub fn candidate_beams(table: &BeamWeightTable) -> Result<PrunedTree> {
    PrunedTree::from_table(table)
}
