//! Beam-indexed channel knowledge map: one scalar gain per (codeword, grid
//! point), queried by nearest grid point.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! "BCKM" | version u32 | num_antennas u32 | num_layers u32 | nx u32 | ny u32
//! | dx f64 | dy f64 | origin_x f64 | origin_y f64 | num_codewords u32
//! then per codeword: layer u16 | index u16 | nx*ny f32 gains (row-major)
//! ```

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{beam_gain, synthesize_channel, ArrayConfig, Environment, Point2};
use crate::codebook::{num_layers_for, BeamId, HierarchicalCodebook};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BCKM";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 5 + 8 * 4 + 4;

/// Uniform grid of candidate receiver positions. Point `(i, j)` sits at
/// `origin + (i * spacing_x, j * spacing_y)` and has row-major index
/// `j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Point2,
    pub spacing_x: f64,
    pub spacing_y: f64,
    pub nx: usize,
    pub ny: usize,
}

/// Grid as written in scenario files: an `extent_x` by `extent_y` area whose
/// first point is at `origin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub extent_x: f64,
    pub extent_y: f64,
    pub spacing_x: f64,
    pub spacing_y: f64,
    pub origin: Point2,
}

impl GridSpec {
    /// `ceil(X / dx) * ceil(Y / dy)` points.
    pub fn from_extent(
        extent_x: f64,
        extent_y: f64,
        spacing_x: f64,
        spacing_y: f64,
        origin: Point2,
    ) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(extent_x) && ok(extent_y) && ok(spacing_x) && ok(spacing_y)) {
            return Err(Error::InvalidConfig(
                "grid extents and spacings must be positive".into(),
            ));
        }
        Ok(Self {
            origin,
            spacing_x,
            spacing_y,
            nx: (extent_x / spacing_x).ceil() as usize,
            ny: (extent_y / spacing_y).ceil() as usize,
        })
    }

    pub fn num_points(&self) -> usize {
        self.nx * self.ny
    }

    pub fn point(&self, index: usize) -> Point2 {
        let (i, j) = (index % self.nx, index / self.nx);
        Point2::new(
            self.origin.x + i as f64 * self.spacing_x,
            self.origin.y + j as f64 * self.spacing_y,
        )
    }

    pub fn points(&self) -> impl Iterator<Item = Point2> + '_ {
        (0..self.num_points()).map(|k| self.point(k))
    }

    /// Index of the grid point nearest to `p`. Equidistant candidates resolve
    /// to the smaller row-major index; positions outside the grid snap to the
    /// boundary.
    pub fn nearest(&self, p: Point2) -> usize {
        let axis = |v: f64, o: f64, d: f64, n: usize| {
            let f = (v - o) / d;
            // ceil(f - 0.5) rounds half-way cases down
            let k = (f - 0.5).ceil();
            k.clamp(0.0, (n - 1) as f64) as usize
        };
        let i = axis(p.x, self.origin.x, self.spacing_x, self.nx);
        let j = axis(p.y, self.origin.y, self.spacing_y, self.ny);
        j * self.nx + i
    }

    pub fn contains(&self, p: Point2) -> bool {
        let max_x = self.origin.x + (self.nx - 1) as f64 * self.spacing_x;
        let max_y = self.origin.y + (self.ny - 1) as f64 * self.spacing_y;
        p.x >= self.origin.x - 0.5 * self.spacing_x
            && p.x <= max_x + 0.5 * self.spacing_x
            && p.y >= self.origin.y - 0.5 * self.spacing_y
            && p.y <= max_y + 0.5 * self.spacing_y
    }
}

impl TryFrom<&GridConfig> for GridSpec {
    type Error = Error;

    fn try_from(c: &GridConfig) -> Result<Self> {
        GridSpec::from_extent(c.extent_x, c.extent_y, c.spacing_x, c.spacing_y, c.origin)
    }
}

/// Multiplicative log-normal error applied to every stored gain, modelling an
/// out-of-date map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Staleness {
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CkmGrid {
    grid: GridSpec,
    num_antennas: usize,
    num_layers: u32,
    // [beam flat index][point index]
    gains: Vec<Vec<f32>>,
}

impl CkmGrid {
    /// Wraps precomputed gains laid out as `gains[beam.flat_index()][point]`.
    pub fn from_gains(grid: GridSpec, num_antennas: usize, gains: Vec<Vec<f32>>) -> Result<Self> {
        if num_antennas < 4 || !num_antennas.is_power_of_two() {
            return Err(Error::InvalidArraySize(num_antennas));
        }
        let num_layers = num_layers_for(num_antennas);
        let expected = (1usize << (num_layers + 1)) - 2;
        if gains.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: gains.len(),
            });
        }
        for row in &gains {
            if row.len() != grid.num_points() {
                return Err(Error::DimensionMismatch {
                    expected: grid.num_points(),
                    actual: row.len(),
                });
            }
            if row.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                return Err(Error::MapFormat(
                    "gains must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(Self {
            grid,
            num_antennas,
            num_layers,
            gains,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_layers(&self) -> u32 {
        self.num_layers
    }

    /// Stored gain at a grid point.
    #[inline]
    pub fn gain_at(&self, point: usize, beam: BeamId) -> f64 {
        self.gains[beam.flat_index()][point] as f64
    }

    /// Gain of `beam` at the grid point nearest to `position`.
    pub fn lookup_gain(&self, position: Point2, beam: BeamId) -> Result<f64> {
        if !beam.is_valid(self.num_layers) {
            return Err(Error::InvalidBeam(beam));
        }
        Ok(self.gain_at(self.grid.nearest(position), beam))
    }

    pub fn layer_gains(&self, beam: BeamId) -> &[f32] {
        &self.gains[beam.flat_index()]
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.grid.num_points();
        let mut out = Vec::with_capacity(HEADER_LEN + self.gains.len() * (4 + 4 * n));
        out.extend_from_slice(MAGIC);
        for v in [
            FORMAT_VERSION,
            self.num_antennas as u32,
            self.num_layers,
            self.grid.nx as u32,
            self.grid.ny as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [
            self.grid.spacing_x,
            self.grid.spacing_y,
            self.grid.origin.x,
            self.grid.origin.y,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.gains.len() as u32).to_le_bytes());
        for (flat, row) in self.gains.iter().enumerate() {
            let beam = BeamId::from_flat_index(flat);
            out.extend_from_slice(&(beam.layer as u16).to_le_bytes());
            out.extend_from_slice(&(beam.index as u16).to_le_bytes());
            for g in row {
                out.extend_from_slice(&g.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::MapFormat("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::MapFormat(format!("unsupported version {version}")));
        }
        let num_antennas = r.u32()? as usize;
        let num_layers = r.u32()?;
        let nx = r.u32()? as usize;
        let ny = r.u32()? as usize;
        let spacing_x = r.f64()?;
        let spacing_y = r.f64()?;
        let origin = Point2::new(r.f64()?, r.f64()?);
        let num_codewords = r.u32()? as usize;

        if num_antennas < 4 || !num_antennas.is_power_of_two() {
            return Err(Error::MapFormat(format!("bad array size {num_antennas}")));
        }
        if num_layers != num_layers_for(num_antennas) {
            return Err(Error::MapFormat(format!(
                "{num_layers} layers inconsistent with {num_antennas} antennas"
            )));
        }
        if num_codewords != (1usize << (num_layers + 1)) - 2 {
            return Err(Error::MapFormat(format!(
                "{num_codewords} codewords inconsistent with {num_layers} layers"
            )));
        }
        if nx == 0 || ny == 0 || !(spacing_x > 0.0 && spacing_y > 0.0) {
            return Err(Error::MapFormat("degenerate grid".into()));
        }
        let points = nx * ny;
        let expected_len = HEADER_LEN + num_codewords * (4 + 4 * points);
        if bytes.len() != expected_len {
            return Err(Error::MapFormat(format!(
                "payload is {} bytes, header implies {expected_len}",
                bytes.len()
            )));
        }

        let mut gains: Vec<Option<Vec<f32>>> = vec![None; num_codewords];
        for _ in 0..num_codewords {
            let beam = BeamId::new(r.u16()? as u32, r.u16()? as u32);
            if !beam.is_valid(num_layers) {
                return Err(Error::MapFormat(format!("invalid codeword {beam}")));
            }
            let slot = &mut gains[beam.flat_index()];
            if slot.is_some() {
                return Err(Error::MapFormat(format!("duplicate codeword {beam}")));
            }
            let raw = r.take(4 * points)?;
            *slot = Some(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
        }
        let gains = gains
            .into_iter()
            .map(|g| g.expect("all slots filled"))
            .collect();
        let grid = GridSpec {
            origin,
            spacing_x,
            spacing_y,
            nx,
            ny,
        };
        Self::from_gains(grid, num_antennas, gains).map_err(|e| match e {
            Error::MapFormat(_) => e,
            other => Error::MapFormat(other.to_string()),
        })
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::MapFormat("truncated".into()))?;
        self.pos = end;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Noiseless `|h(p)^H f|` for every codeword and grid point.
pub fn build_ckm(
    env: &Environment,
    array: &ArrayConfig,
    codebook: &HierarchicalCodebook,
    grid: &GridSpec,
    staleness: Option<Staleness>,
) -> Result<CkmGrid> {
    env.validate()?;
    array.validate()?;
    if codebook.num_antennas() != array.num_antennas {
        return Err(Error::DimensionMismatch {
            expected: array.num_antennas,
            actual: codebook.num_antennas(),
        });
    }
    let beams: Vec<BeamId> = codebook.beams().collect();
    let columns: Vec<Vec<f32>> = (0..grid.num_points())
        .into_par_iter()
        .map(|k| {
            let channel = synthesize_channel(env, array, grid.point(k))?;
            let h = channel.response(array.num_antennas);
            Ok(beams
                .iter()
                .map(|&b| beam_gain(&h, codebook.codeword(b).unwrap()) as f32)
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut gains = vec![vec![0f32; grid.num_points()]; beams.len()];
    for (k, col) in columns.iter().enumerate() {
        for (b, g) in col.iter().enumerate() {
            gains[b][k] = *g;
        }
    }
    if let Some(s) = staleness {
        if s.sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            for row in gains.iter_mut() {
                for g in row.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *g = (*g as f64 * (s.sigma * z).exp()) as f32;
                }
            }
        }
    }
    CkmGrid::from_gains(*grid, array.num_antennas, gains)
}
