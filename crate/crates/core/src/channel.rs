//! ULA steering vectors, a deterministic geometric multipath generator, and
//! noisy beam probing.
//!
//! The array lies along the x axis at the base-station position, so a receiver
//! at offset `(dx, dy)` sees the line-of-sight path at spatial angle
//! `dx / |(dx, dy)|` (sine of the angle from broadside). Spatial angles are
//! 2-periodic for a half-wavelength ULA and are always reported in `[-1, 1)`.
//!
//! Besides the line-of-sight path the generator adds single-bounce paths:
//! specular reflections off wall segments (image method) and reflections off
//! point scatterers. Obstacle segments attenuate every leg that crosses them.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codebook::{BeamId, HierarchicalCodebook};
use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub num_antennas: usize,
    pub carrier_frequency_hz: f64,
    pub bs_position: Point2,
}

impl ArrayConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    /// Element spacing; fixed at half a wavelength.
    pub fn antenna_spacing(&self) -> f64 {
        self.wavelength() / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_antennas < 4 || !self.num_antennas.is_power_of_two() {
            return Err(Error::InvalidArraySize(self.num_antennas));
        }
        if !(self.carrier_frequency_hz.is_finite() && self.carrier_frequency_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "carrier frequency {} must be positive",
                self.carrier_frequency_hz
            )));
        }
        Ok(())
    }

    /// Spatial angle of the direction from the array towards `p`.
    pub fn spatial_angle_to(&self, p: Point2) -> Result<f64> {
        let dx = p.x - self.bs_position.x;
        let dy = p.y - self.bs_position.y;
        let d = dx.hypot(dy);
        if d < 1e-9 {
            return Err(Error::ReceiverAtBaseStation);
        }
        Ok(wrap_angle(dx / d))
    }
}

/// Folds a spatial angle into `[-1, 1)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = (theta + 1.0).rem_euclid(2.0) - 1.0;
    if t >= 1.0 {
        -1.0
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationPath {
    pub complex_gain: Complex64,
    pub spatial_angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub paths: Vec<PropagationPath>,
    pub receiver_position: Point2,
}

impl ChannelRealization {
    /// `h = sum_i g_i a(theta_i)`.
    pub fn response(&self, num_antennas: usize) -> Vec<Complex64> {
        let mut h = vec![Complex64::new(0.0, 0.0); num_antennas];
        for path in &self.paths {
            let step = Complex64::from_polar(1.0, -PI * path.spatial_angle);
            let mut phasor = path.complex_gain;
            for hm in h.iter_mut() {
                *hm += phasor;
                phasor *= step;
            }
        }
        h
    }
}

/// Point scatterer re-radiating towards every receiver it can see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scatterer {
    pub position: Point2,
    pub reflection: f64,
}

/// Planar reflector producing one specular path via the image method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub start: Point2,
    pub end: Point2,
    pub reflection: f64,
}

/// Segment that attenuates every path leg crossing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub start: Point2,
    pub end: Point2,
    /// Amplitude transmission factor in (0, 1].
    pub transmission: f64,
}

fn default_max_paths() -> usize {
    4
}

fn default_pathloss_exponent() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    #[serde(default)]
    pub scatterers: Vec<Scatterer>,
    #[serde(default)]
    pub walls: Vec<Wall>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default = "default_max_paths")]
    pub max_paths: usize,
    /// Exponent of distance in the amplitude path loss (1 = free space).
    #[serde(default = "default_pathloss_exponent")]
    pub pathloss_exponent: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            scatterers: Vec::new(),
            walls: Vec::new(),
            obstacles: Vec::new(),
            max_paths: default_max_paths(),
            pathloss_exponent: default_pathloss_exponent(),
            rng_seed: 0,
        }
    }
}

impl Environment {
    /// Free space with only the line-of-sight path.
    pub fn line_of_sight_only() -> Self {
        Self {
            max_paths: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_paths == 0 {
            return Err(Error::InvalidConfig("max_paths must be >= 1".into()));
        }
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent > 0.0) {
            return Err(Error::InvalidConfig(
                "pathloss_exponent must be positive".into(),
            ));
        }
        let bad_reflection = self
            .scatterers
            .iter()
            .map(|s| s.reflection)
            .chain(self.walls.iter().map(|w| w.reflection))
            .any(|r| !(r > 0.0 && r <= 1.0));
        if bad_reflection {
            return Err(Error::InvalidConfig(
                "reflection coefficients must lie in (0, 1]".into(),
            ));
        }
        if self
            .obstacles
            .iter()
            .any(|o| !(o.transmission > 0.0 && o.transmission <= 1.0))
        {
            return Err(Error::InvalidConfig(
                "obstacle transmission must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    fn leg_transmission(&self, a: Point2, b: Point2) -> f64 {
        self.obstacles
            .iter()
            .filter(|o| segments_cross(a, b, o.start, o.end))
            .map(|o| o.transmission)
            .product()
    }

    // One fixed phase offset per reflector, drawn from the environment seed.
    fn reflector_phases(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        (0..self.scatterers.len() + self.walls.len())
            .map(|_| rng.random_range(0.0..2.0 * PI))
            .collect()
    }
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Proper intersection test for segments `p1p2` and `q1q2`.
fn segments_cross(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0) && d1 != 0.0 && d2 != 0.0
}

/// Mirror image of `p` across the infinite line through `a` and `b`.
fn mirror(p: Point2, a: Point2, b: Point2) -> Point2 {
    let (ux, uy) = (b.x - a.x, b.y - a.y);
    let len2 = ux * ux + uy * uy;
    let t = ((p.x - a.x) * ux + (p.y - a.y) * uy) / len2;
    let foot = Point2::new(a.x + t * ux, a.y + t * uy);
    Point2::new(2.0 * foot.x - p.x, 2.0 * foot.y - p.y)
}

/// Intersection of segment `p1p2` with segment `q1q2`, if they cross.
fn intersection(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> Option<Point2> {
    let r = (p2.x - p1.x, p2.y - p1.y);
    let s = (q2.x - q1.x, q2.y - q1.y);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom.abs() < 1e-12 {
        return None;
    }
    let qp = (q1.x - p1.x, q1.y - p1.y);
    let t = (qp.0 * s.1 - qp.1 * s.0) / denom;
    let u = (qp.0 * r.1 - qp.1 * r.0) / denom;
    ((1e-9..=1.0 - 1e-9).contains(&t) && (0.0..=1.0).contains(&u))
        .then(|| Point2::new(p1.x + t * r.0, p1.y + t * r.1))
}

/// ULA steering vector `[1, e^{-j pi theta}, ..., e^{-j pi theta (N-1)}]`.
pub fn steering_vector(angle: f64, n_antennas: usize) -> Result<Vec<Complex64>> {
    if !(-1.0..1.0).contains(&angle) {
        return Err(Error::AngleOutOfRange(angle));
    }
    Ok((0..n_antennas)
        .map(|m| Complex64::from_polar(1.0, -PI * angle * m as f64))
        .collect())
}

/// Noiseless multipath channel from the array to `position`.
///
/// Pure in `(env, array, position)`.
pub fn synthesize_channel(
    env: &Environment,
    array: &ArrayConfig,
    position: Point2,
) -> Result<ChannelRealization> {
    let bs = array.bs_position;
    let lambda = array.wavelength();
    let k = 2.0 * PI / lambda;
    let amplitude = |length: f64| lambda / (4.0 * PI * length.powf(env.pathloss_exponent));

    let los_angle = array.spatial_angle_to(position)?;
    let d = bs.distance(position);
    let mut paths = vec![PropagationPath {
        complex_gain: Complex64::from_polar(
            amplitude(d) * env.leg_transmission(bs, position),
            -k * d,
        ),
        spatial_angle: los_angle,
    }];

    let phases = env.reflector_phases();

    for (wall, phase) in env.walls.iter().zip(&phases[env.scatterers.len()..]) {
        let image = mirror(bs, wall.start, wall.end);
        // reflection point must lie on the wall and bs/receiver on the same side
        let Some(hit) = intersection(image, position, wall.start, wall.end) else {
            continue;
        };
        let same_side = cross(wall.start, wall.end, bs).signum()
            == cross(wall.start, wall.end, position).signum();
        if !same_side || hit.distance(bs) < 1e-9 {
            continue;
        }
        let length = image.distance(position);
        let gain = wall.reflection
            * amplitude(length)
            * env.leg_transmission(bs, hit)
            * env.leg_transmission(hit, position);
        paths.push(PropagationPath {
            complex_gain: Complex64::from_polar(gain, -k * length + phase),
            spatial_angle: array.spatial_angle_to(hit)?,
        });
    }

    for (scatterer, phase) in env.scatterers.iter().zip(&phases) {
        let d1 = bs.distance(scatterer.position);
        let d2 = scatterer.position.distance(position);
        if d1 < 1e-9 || d2 < 1e-9 {
            continue;
        }
        let gain = scatterer.reflection
            * amplitude(d1 + d2)
            * env.leg_transmission(bs, scatterer.position)
            * env.leg_transmission(scatterer.position, position);
        paths.push(PropagationPath {
            complex_gain: Complex64::from_polar(gain, -k * (d1 + d2) + phase),
            spatial_angle: array.spatial_angle_to(scatterer.position)?,
        });
    }

    // strongest first; stable so ties keep generation order
    paths.sort_by(|a, b| b.complex_gain.norm().total_cmp(&a.complex_gain.norm()));
    paths.truncate(env.max_paths.max(1));
    Ok(ChannelRealization {
        paths,
        receiver_position: position,
    })
}

/// Circularly-symmetric complex Gaussian sample with variance `std^2`.
pub fn complex_noise<R: Rng + ?Sized>(rng: &mut R, std: f64) -> Complex64 {
    let s = std / 2f64.sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// `|h^H f|` for a precomputed channel response.
pub fn beam_gain(response: &[Complex64], codeword: &[Complex64]) -> f64 {
    response
        .iter()
        .zip(codeword)
        .map(|(h, f)| h.conj() * f)
        .sum::<Complex64>()
        .norm()
}

/// Received magnitude `|h^H f s + n|` with unit-power `s`.
pub fn probe<R: Rng + ?Sized>(
    channel: &ChannelRealization,
    codeword: &[Complex64],
    noise_std: f64,
    rng: &mut R,
) -> Result<f64> {
    let h = channel.response(codeword.len());
    probe_response(&h, codeword, noise_std, rng)
}

pub fn probe_response<R: Rng + ?Sized>(
    response: &[Complex64],
    codeword: &[Complex64],
    noise_std: f64,
    rng: &mut R,
) -> Result<f64> {
    if response.len() != codeword.len() {
        return Err(Error::DimensionMismatch {
            expected: response.len(),
            actual: codeword.len(),
        });
    }
    let signal: Complex64 = response
        .iter()
        .zip(codeword)
        .map(|(h, f)| h.conj() * f)
        .sum();
    if noise_std == 0.0 {
        return Ok(signal.norm());
    }
    Ok((signal + complex_noise(rng, noise_std)).norm())
}

/// Source of per-beam received magnitudes, i.e. the UE side of a training
/// exchange.
pub trait Sounder {
    fn measure(&mut self, beam: BeamId) -> f64;
}

/// Sounds a synthesized channel through the codebook with AWGN.
pub struct ChannelSounder<'a, R> {
    codebook: &'a HierarchicalCodebook,
    response: Vec<Complex64>,
    noise_std: f64,
    rng: R,
}

impl<'a, R: Rng> ChannelSounder<'a, R> {
    pub fn new(
        codebook: &'a HierarchicalCodebook,
        channel: &ChannelRealization,
        noise_std: f64,
        rng: R,
    ) -> Self {
        Self {
            codebook,
            response: channel.response(codebook.num_antennas()),
            noise_std,
            rng,
        }
    }

    pub fn response(&self) -> &[Complex64] {
        &self.response
    }

    /// Noiseless gain of `beam`.
    pub fn true_gain(&self, beam: BeamId) -> f64 {
        beam_gain(
            &self.response,
            self.codebook.codeword(beam).expect("valid beam"),
        )
    }
}

impl<R: Rng> Sounder for ChannelSounder<'_, R> {
    fn measure(&mut self, beam: BeamId) -> f64 {
        let codeword = self.codebook.codeword(beam).expect("valid beam");
        probe_response(&self.response, codeword, self.noise_std, &mut self.rng)
            .expect("codebook matches array size")
    }
}

impl<F: FnMut(BeamId) -> f64> Sounder for F {
    fn measure(&mut self, beam: BeamId) -> f64 {
        self(beam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn array(n: usize) -> ArrayConfig {
        ArrayConfig {
            num_antennas: n,
            carrier_frequency_hz: 80e9,
            bs_position: Point2::new(0.0, 0.0),
        }
    }

    #[test]
    fn zero_angle_steering_is_all_ones() {
        let a = steering_vector(0.0, 8).unwrap();
        assert_eq!(a.len(), 8);
        assert!(a
            .iter()
            .all(|x| (*x - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn steering_entries_have_unit_modulus() {
        for &theta in &[-1.0, -0.73, 0.1, 0.5, 0.999] {
            for x in steering_vector(theta, 64).unwrap() {
                assert_relative_eq!(x.norm(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn steering_rejects_out_of_range() {
        assert!(matches!(
            steering_vector(1.0, 4),
            Err(Error::AngleOutOfRange(_))
        ));
        assert!(steering_vector(-1.01, 4).is_err());
    }

    #[test]
    fn adjacent_dft_angles_are_orthogonal() {
        let n = 16;
        let a = steering_vector(2.0 / n as f64, n).unwrap();
        let b = steering_vector(0.0, n).unwrap();
        let ip: Complex64 = a.iter().zip(&b).map(|(x, y)| x.conj() * y).sum();
        assert!(ip.norm() < 1e-12);
    }

    #[test]
    fn wrap_folds_into_range() {
        assert_eq!(wrap_angle(1.0), -1.0);
        assert_eq!(wrap_angle(-1.0), -1.0);
        assert_relative_eq!(wrap_angle(0.25), 0.25);
        assert_relative_eq!(wrap_angle(1.5), -0.5);
    }

    #[test]
    fn broadside_receiver_has_zero_angle() {
        let ch =
            synthesize_channel(&Environment::default(), &array(8), Point2::new(0.0, 20.0)).unwrap();
        assert_eq!(ch.paths.len(), 1);
        assert_eq!(ch.paths[0].spatial_angle, 0.0);
    }

    #[test]
    fn los_gain_halves_with_double_distance() {
        let env = Environment::default();
        let a = array(8);
        let near = synthesize_channel(&env, &a, Point2::new(3.0, 4.0)).unwrap();
        let far = synthesize_channel(&env, &a, Point2::new(6.0, 8.0)).unwrap();
        assert_relative_eq!(
            far.paths[0].complex_gain.norm() * 2.0,
            near.paths[0].complex_gain.norm(),
            max_relative = 1e-12
        );
        assert_relative_eq!(near.paths[0].spatial_angle, 0.6, epsilon = 1e-12);
        let lambda = a.wavelength();
        assert_relative_eq!(
            near.paths[0].complex_gain.norm(),
            lambda / (4.0 * PI * 5.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn receiver_at_bs_is_rejected() {
        assert!(matches!(
            synthesize_channel(&Environment::default(), &array(8), Point2::new(0.0, 0.0)),
            Err(Error::ReceiverAtBaseStation)
        ));
    }

    fn rich_env() -> Environment {
        Environment {
            scatterers: vec![Scatterer {
                position: Point2::new(-10.0, 15.0),
                reflection: 0.5,
            }],
            walls: vec![Wall {
                start: Point2::new(-30.0, 25.0),
                end: Point2::new(30.0, 25.0),
                reflection: 0.6,
            }],
            obstacles: vec![Obstacle {
                start: Point2::new(2.0, 8.0),
                end: Point2::new(8.0, 8.0),
                transmission: 0.05,
            }],
            max_paths: 4,
            pathloss_exponent: 1.0,
            rng_seed: 7,
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let env = rich_env();
        let a = array(32);
        let p = Point2::new(5.5, 12.5);
        let c1 = synthesize_channel(&env, &a, p).unwrap();
        let c2 = synthesize_channel(&env, &a, p).unwrap();
        assert_eq!(c1, c2);
        assert!(c1.paths.len() >= 2);
    }

    #[test]
    fn wall_reflection_follows_image_geometry() {
        let env = Environment {
            walls: vec![Wall {
                start: Point2::new(-50.0, 10.0),
                end: Point2::new(50.0, 10.0),
                reflection: 1.0,
            }],
            ..Environment::default()
        };
        let a = array(8);
        // bs (0,0), receiver (8,0): image at (0,20), hit at (4,10); LoS is endfire (-1)
        let ch = synthesize_channel(&env, &a, Point2::new(8.0, 0.0)).unwrap();
        assert_eq!(ch.paths.len(), 2);
        let reflected = ch.paths.iter().find(|p| p.spatial_angle != -1.0).unwrap();
        let expect_angle = 4.0 / (4f64.hypot(10.0));
        assert_relative_eq!(reflected.spatial_angle, expect_angle, epsilon = 1e-12);
        let length = 8f64.hypot(20.0);
        assert_relative_eq!(
            reflected.complex_gain.norm(),
            a.wavelength() / (4.0 * PI * length),
            max_relative = 1e-12
        );
    }

    #[test]
    fn obstacle_attenuates_los() {
        let env = rich_env();
        let a = array(8);
        let p = Point2::new(5.0, 15.0);
        let ch = synthesize_channel(&env, &a, p).unwrap();
        let los_angle = a.spatial_angle_to(p).unwrap();
        let los = ch
            .paths
            .iter()
            .find(|q| q.spatial_angle == los_angle)
            .unwrap();
        let free = a.wavelength() / (4.0 * PI * p.distance(a.bs_position));
        assert_relative_eq!(los.complex_gain.norm(), 0.05 * free, max_relative = 1e-12);
    }

    #[test]
    fn matched_probe_gives_array_gain() {
        let n = 16;
        let g = Complex64::from_polar(0.3, 1.1);
        let theta = 0.3125;
        let ch = ChannelRealization {
            paths: vec![PropagationPath {
                complex_gain: g,
                spatial_angle: theta,
            }],
            receiver_position: Point2::default(),
        };
        let f: Vec<_> = steering_vector(theta, n)
            .unwrap()
            .into_iter()
            .map(|x| x / (n as f64).sqrt())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = probe(&ch, &f, 0.0, &mut rng).unwrap();
        assert_relative_eq!(y, 0.3 * (n as f64).sqrt(), max_relative = 1e-12);

        let orth = steering_vector(theta + 2.0 / n as f64, n).unwrap();
        assert!(probe(&ch, &orth, 0.0, &mut rng).unwrap() < 1e-12);
        assert!(matches!(
            probe_response(&ch.response(n), &f[..8], 0.0, &mut rng),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn noise_magnitude_is_rayleigh() {
        let ch = ChannelRealization {
            paths: vec![PropagationPath {
                complex_gain: Complex64::new(0.0, 0.0),
                spatial_angle: 0.0,
            }],
            receiver_position: Point2::default(),
        };
        let f = vec![Complex64::new(0.5, 0.0); 4];
        let h = ch.response(4);
        let sigma = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 100_000;
        let mean: f64 = (0..draws)
            .map(|_| probe_response(&h, &f, sigma, &mut rng).unwrap())
            .sum::<f64>()
            / draws as f64;
        let expect = sigma * PI.sqrt() / 2.0;
        assert!((mean - expect).abs() / expect < 0.01, "{mean} vs {expect}");
    }

    #[test]
    fn matched_bottom_beam_wins_single_path() {
        let cb = HierarchicalCodebook::build(32).unwrap();
        for k in 0..64 {
            let theta = -1.0 + (k as f64 + 0.37) / 32.0;
            let ch = ChannelRealization {
                paths: vec![PropagationPath {
                    complex_gain: Complex64::new(1.0, 0.0),
                    spatial_angle: theta,
                }],
                receiver_position: Point2::default(),
            };
            let s = ChannelSounder::new(&cb, &ch, 0.0, ChaCha8Rng::seed_from_u64(0));
            let best = cb
                .bottom_beams()
                .max_by(|a, b| s.true_gain(*a).total_cmp(&s.true_gain(*b)))
                .unwrap();
            let (lo, hi) = best.support();
            assert!(lo <= theta && theta < hi, "{theta} -> {best}");
        }
    }
}
