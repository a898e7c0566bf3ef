//! Hierarchical binary codebook over a uniform linear array.
//!
//! Layer `l` holds `2^l` beams; beam `(l, n)` covers the sine-space interval
//! `[-1 + (n-1)/2^(l-1), -1 + n/2^(l-1))`. The bottom layer is a set of
//! orthogonal DFT beams centred on their supports, and every wider beam is the
//! power-normalised sum of the bottom beams it covers.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::steering_vector;
use crate::error::{Error, Result};

/// Address of a codeword: layer in `1..=L`, index in `1..=2^layer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BeamId {
    pub layer: u32,
    pub index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Parent,
    LeftChild,
    RightChild,
}

impl BeamId {
    pub const fn new(layer: u32, index: u32) -> Self {
        Self { layer, index }
    }

    pub fn is_valid(self, num_layers: u32) -> bool {
        self.layer >= 1
            && self.layer <= num_layers
            && self.index >= 1
            && (self.index as u64) <= (1u64 << self.layer)
    }

    /// Position of this beam when all codewords are laid out layer by layer.
    pub fn flat_index(self) -> usize {
        (1usize << self.layer) - 2 + (self.index as usize - 1)
    }

    pub fn from_flat_index(flat: usize) -> Self {
        let mut layer = 1u32;
        while flat + 2 >= (1usize << (layer + 1)) {
            layer += 1;
        }
        Self::new(layer, (flat + 2 - (1usize << layer)) as u32 + 1)
    }

    /// Half-open sine-space interval dominated by this beam.
    pub fn support(self) -> (f64, f64) {
        let width = 2.0 / (1u64 << self.layer) as f64;
        let lo = -1.0 + (self.index - 1) as f64 * width;
        (lo, lo + width)
    }

    pub fn parent(self) -> Option<Self> {
        (self.layer > 1).then(|| Self::new(self.layer - 1, self.index.div_ceil(2)))
    }

    pub fn children(self) -> (Self, Self) {
        (
            Self::new(self.layer + 1, 2 * self.index - 1),
            Self::new(self.layer + 1, 2 * self.index),
        )
    }

    /// Ancestor at a shallower (or equal) layer.
    pub fn ancestor_at(self, layer: u32) -> Self {
        debug_assert!(layer >= 1 && layer <= self.layer);
        let shift = self.layer - layer;
        Self::new(layer, ((self.index - 1) >> shift) + 1)
    }

    /// Inclusive index range of this beam's descendants at a deeper layer.
    pub fn descendant_range(self, layer: u32) -> (u32, u32) {
        debug_assert!(layer >= self.layer);
        let shift = layer - self.layer;
        (((self.index - 1) << shift) + 1, self.index << shift)
    }

    pub fn is_ancestor_of(self, other: Self) -> bool {
        other.layer >= self.layer && other.ancestor_at(self.layer) == self
    }

    /// Tree navigation bounded by `num_layers`.
    pub fn navigate(self, direction: Direction, num_layers: u32) -> Result<Self> {
        if !self.is_valid(num_layers) {
            return Err(Error::InvalidBeam(self));
        }
        match direction {
            Direction::Parent => self.parent().ok_or(Error::NoParent(self)),
            Direction::LeftChild | Direction::RightChild if self.layer == num_layers => {
                Err(Error::NoChildren(self))
            }
            Direction::LeftChild => Ok(self.children().0),
            Direction::RightChild => Ok(self.children().1),
        }
    }
}

impl fmt::Display for BeamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f({},{})", self.layer, self.index)
    }
}

/// Search-tree root: either the omnidirectional virtual root above layer 1 or
/// a fixed codeword.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Root {
    Virtual,
    Beam(BeamId),
}

impl Root {
    pub fn layer(self) -> u32 {
        match self {
            Root::Virtual => 0,
            Root::Beam(b) => b.layer,
        }
    }

    pub fn covers(self, beam: BeamId) -> bool {
        match self {
            Root::Virtual => true,
            Root::Beam(r) => r.is_ancestor_of(beam),
        }
    }

    /// Inclusive index range covered by this root at `layer`.
    pub fn range_at(self, layer: u32) -> (u32, u32) {
        match self {
            Root::Virtual => (1, 1 << layer),
            Root::Beam(r) => r.descendant_range(layer),
        }
    }
}

pub fn num_layers_for(num_antennas: usize) -> u32 {
    num_antennas.next_power_of_two().trailing_zeros()
}

#[derive(Debug, Clone)]
pub struct HierarchicalCodebook {
    num_antennas: usize,
    num_layers: u32,
    // flat_index order, layer by layer
    codewords: Vec<Vec<Complex64>>,
}

impl HierarchicalCodebook {
    pub fn build(num_antennas: usize) -> Result<Self> {
        if num_antennas < 4 || !num_antennas.is_power_of_two() {
            return Err(Error::InvalidArraySize(num_antennas));
        }
        let num_layers = num_layers_for(num_antennas);
        let norm = (num_antennas as f64).sqrt();
        // Each column is referenced to the array centre so that neighbouring
        // columns add coherently between their peaks; summing plain DFT
        // columns leaves near-nulls inside the wide beams.
        let bottom: Vec<Vec<Complex64>> = (1..=num_antennas as u32)
            .map(|n| {
                let (lo, hi) = BeamId::new(num_layers, n).support();
                let centre = 0.5 * (lo + hi);
                let phase = Complex64::from_polar(
                    norm.recip(),
                    std::f64::consts::PI * centre * (num_antennas as f64 - 1.0) / 2.0,
                );
                steering_vector(centre, num_antennas)
                    .expect("support centre lies in [-1, 1)")
                    .into_iter()
                    .map(|x| x * phase)
                    .collect()
            })
            .collect();

        let total = (1usize << (num_layers + 1)) - 2;
        let mut codewords = Vec::with_capacity(total);
        for layer in 1..=num_layers {
            for index in 1..=(1u32 << layer) {
                let (first, last) = BeamId::new(layer, index).descendant_range(num_layers);
                let members = (last - first + 1) as f64;
                let mut w = vec![Complex64::new(0.0, 0.0); num_antennas];
                for col in &bottom[(first - 1) as usize..last as usize] {
                    for (acc, x) in w.iter_mut().zip(col) {
                        *acc += x;
                    }
                }
                let scale = members.sqrt().recip();
                w.iter_mut().for_each(|x| *x *= scale);
                codewords.push(w);
            }
        }
        Ok(Self {
            num_antennas,
            num_layers,
            codewords,
        })
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_layers(&self) -> u32 {
        self.num_layers
    }

    pub fn num_codewords(&self) -> usize {
        self.codewords.len()
    }

    pub fn codeword(&self, beam: BeamId) -> Result<&[Complex64]> {
        if !beam.is_valid(self.num_layers) {
            return Err(Error::InvalidBeam(beam));
        }
        Ok(&self.codewords[beam.flat_index()])
    }

    pub fn beams(&self) -> impl Iterator<Item = BeamId> + '_ {
        (0..self.codewords.len()).map(BeamId::from_flat_index)
    }

    pub fn layer_beams(&self, layer: u32) -> impl Iterator<Item = BeamId> {
        (1..=(1u32 << layer)).map(move |n| BeamId::new(layer, n))
    }

    pub fn bottom_beams(&self) -> impl Iterator<Item = BeamId> {
        self.layer_beams(self.num_layers)
    }
}
