//! Prior over a user's position: disjoint subregions of grid points, each with
//! a probability mass spread uniformly over its points.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::Point2;
use crate::ckm::GridSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SubRegion {
    /// Grid-point indices, in row-major order of discovery.
    pub points: Vec<usize>,
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionPrior {
    subregions: Vec<SubRegion>,
}

impl PositionPrior {
    pub fn new(subregions: Vec<SubRegion>) -> Result<Self> {
        if subregions.is_empty() {
            return Err(Error::EmptyPrior);
        }
        let mut seen = HashSet::new();
        for (s, r) in subregions.iter().enumerate() {
            if r.points.is_empty() {
                return Err(Error::InvalidPrior(format!("subregion {s} has no points")));
            }
            if !(r.prior > 0.0 && r.prior <= 1.0) {
                return Err(Error::InvalidPrior(format!(
                    "subregion {s} prior {} outside (0, 1]",
                    r.prior
                )));
            }
            for &p in &r.points {
                if !seen.insert(p) {
                    return Err(Error::InvalidPrior(format!(
                        "grid point {p} appears twice (subregions must be disjoint)"
                    )));
                }
            }
        }
        let total: f64 = subregions.iter().map(|r| r.prior).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPrior(format!("priors sum to {total}")));
        }
        Ok(Self { subregions })
    }

    /// All mass on one grid point.
    pub fn singleton(point: usize) -> Self {
        Self {
            subregions: vec![SubRegion {
                points: vec![point],
                prior: 1.0,
            }],
        }
    }

    pub fn subregions(&self) -> &[SubRegion] {
        &self.subregions
    }

    pub fn num_points(&self) -> usize {
        self.subregions.iter().map(|r| r.points.len()).sum()
    }

    pub fn check_within(&self, grid: &GridSpec) -> Result<()> {
        let n = grid.num_points();
        match self.points().find(|(p, _)| *p >= n) {
            Some((p, _)) => Err(Error::InvalidPrior(format!(
                "grid point {p} outside a {n}-point grid"
            ))),
            None => Ok(()),
        }
    }

    /// `P_s / N_s`.
    pub fn point_probability(&self, subregion: usize, point: usize) -> Result<f64> {
        let r = self
            .subregions
            .get(subregion)
            .ok_or_else(|| Error::IndexOutOfRange(format!("subregion {subregion}")))?;
        if point >= r.points.len() {
            return Err(Error::IndexOutOfRange(format!(
                "point {point} of subregion {subregion}"
            )));
        }
        Ok(r.prior / r.points.len() as f64)
    }

    /// Every `(grid index, probability)` pair.
    pub fn points(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.subregions.iter().flat_map(|r| {
            let p = r.prior / r.points.len() as f64;
            r.points.iter().map(move |&k| (k, p))
        })
    }

    /// Draws a subregion by prior, then a point uniformly within it.
    pub fn sample_true_position<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.subregions.last().expect("nonempty");
        for r in &self.subregions {
            acc += r.prior;
            if u < acc {
                chosen = r;
                break;
            }
        }
        chosen.points[rng.random_range(0..chosen.points.len())]
    }
}

/// Order-preserving filter over a point set.
pub fn prune_points(current: &[usize], mut keep: impl FnMut(usize) -> bool) -> Vec<usize> {
    current.iter().copied().filter(|&p| keep(p)).collect()
}

/// Scenario-file form of a subregion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum RegionShape {
    /// Axis-aligned rectangle; every grid point inside (inclusive) belongs to it.
    Rect {
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },
    /// Explicit positions, snapped to their nearest grid points.
    Points(Vec<Point2>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub shape: RegionShape,
    pub prior: f64,
}

impl RegionConfig {
    pub fn resolve(&self, grid: &GridSpec) -> Result<SubRegion> {
        let points = match &self.shape {
            RegionShape::Rect {
                x_min,
                x_max,
                y_min,
                y_max,
            } => {
                if grid.num_points() == 0 || x_min > x_max || y_min > y_max {
                    return Err(Error::InvalidPrior("empty rectangle".into()));
                }
                let eps = 1e-9;
                (0..grid.num_points())
                    .filter(|&k| {
                        let p = grid.point(k);
                        p.x >= x_min - eps
                            && p.x <= x_max + eps
                            && p.y >= y_min - eps
                            && p.y <= y_max + eps
                    })
                    .collect::<Vec<_>>()
            }
            RegionShape::Points(ps) => {
                let mut out = Vec::new();
                for p in ps {
                    if !grid.contains(*p) {
                        return Err(Error::InvalidPrior(format!(
                            "point ({}, {}) outside the grid",
                            p.x, p.y
                        )));
                    }
                    let k = grid.nearest(*p);
                    if !out.contains(&k) {
                        out.push(k);
                    }
                }
                out
            }
        };
        if points.is_empty() {
            return Err(Error::InvalidPrior("region covers no grid points".into()));
        }
        Ok(SubRegion {
            points,
            prior: self.prior,
        })
    }
}

pub fn resolve_prior(regions: &[RegionConfig], grid: &GridSpec) -> Result<PositionPrior> {
    let subregions = regions
        .iter()
        .map(|r| r.resolve(grid))
        .collect::<Result<Vec<_>>>()?;
    PositionPrior::new(subregions)
}
