use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{ArrayConfig, Environment, Obstacle, Point2, Scatterer, Wall};
use crate::ckm::{GridConfig, GridSpec, Staleness};
use crate::codebook::HierarchicalCodebook;
use crate::error::{Error, Result};
use crate::multi_user::JointParams;
use crate::position::{resolve_prior, PositionPrior, RegionConfig, RegionShape};
use crate::tree::WeightParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Alg1,
    Alg2,
    Alg3,
    BaselineHier,
    BaselineExhaustive,
    /// Oracle beam at zero cost; upper bound for spectral efficiency.
    PerfectCsi,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Alg1,
        Algorithm::Alg2,
        Algorithm::Alg3,
        Algorithm::BaselineHier,
        Algorithm::BaselineExhaustive,
        Algorithm::PerfectCsi,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Alg1 => "alg1",
            Algorithm::Alg2 => "alg2",
            Algorithm::Alg3 => "alg3",
            Algorithm::BaselineHier => "baseline-hier",
            Algorithm::BaselineExhaustive => "baseline-exhaustive",
            Algorithm::PerfectCsi => "perfect-csi",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub regions: Vec<RegionConfig>,
}

fn default_beta() -> f64 {
    0.5
}
fn default_eta() -> f64 {
    0.9
}
fn default_reference_distance() -> f64 {
    32.0
}
fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub array: ArrayConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub environment: Environment,
    pub users: Vec<UserConfig>,
    pub snr_db: Vec<f64>,
    /// SNR is the per-antenna line-of-sight SNR of a receiver at this distance.
    #[serde(default = "default_reference_distance")]
    pub snr_reference_distance: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub retain_per_point: Option<usize>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub trials: usize,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub staleness: Option<Staleness>,
    /// True positions are drawn uniformly within this distance (per axis) of
    /// the sampled grid point.
    #[serde(default)]
    pub position_jitter: f64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn weight_params(&self) -> WeightParams {
        WeightParams {
            beta: self.beta,
            retain_per_point: self.retain_per_point,
        }
    }

    pub fn joint_params(&self) -> JointParams {
        JointParams {
            weights: self.weight_params(),
            eta: self.eta,
        }
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::try_from(&self.grid)
    }

    pub fn priors(&self) -> Result<Vec<PositionPrior>> {
        let grid = self.grid_spec()?;
        self.users
            .iter()
            .map(|u| resolve_prior(&u.regions, &grid))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        self.environment.validate()?;
        self.weight_params().validate()?;
        HierarchicalCodebook::build(self.array.num_antennas)?;
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::InvalidConfig("snr_db list is empty".into()));
        }
        if self
            .snr_db
            .iter()
            .any(|s| s.is_nan() || *s == f64::NEG_INFINITY)
        {
            return Err(Error::InvalidConfig(
                "snr_db entries must be numbers or +inf".into(),
            ));
        }
        if self.users.is_empty() {
            return Err(Error::InvalidConfig("no users".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidConfig("no algorithms".into()));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eta {} outside (0, 1]",
                self.eta
            )));
        }
        if !(self.snr_reference_distance.is_finite() && self.snr_reference_distance > 0.0) {
            return Err(Error::InvalidConfig(
                "snr_reference_distance must be positive".into(),
            ));
        }
        if !(self.position_jitter.is_finite() && self.position_jitter >= 0.0) {
            return Err(Error::InvalidConfig("position_jitter must be >= 0".into()));
        }
        if let Some(s) = self.staleness {
            if !(s.sigma.is_finite() && s.sigma >= 0.0) {
                return Err(Error::InvalidConfig("staleness sigma must be >= 0".into()));
            }
        }
        let grid = self.grid_spec()?;
        let bs = self.array.bs_position;
        if grid.points().any(|p| p.distance(bs) < 1e-9) {
            return Err(Error::InvalidConfig(
                "a grid point coincides with the base station".into(),
            ));
        }
        for (k, u) in self.users.iter().enumerate() {
            for r in &u.regions {
                if let RegionShape::Rect {
                    x_min,
                    x_max,
                    y_min,
                    y_max,
                } = r.shape
                {
                    let inside = grid.contains(Point2::new(x_min, y_min))
                        && grid.contains(Point2::new(x_max, y_max));
                    if !inside {
                        return Err(Error::InvalidConfig(format!(
                            "user {k}: region outside the grid"
                        )));
                    }
                }
            }
            resolve_prior(&u.regions, &grid)
                .map_err(|e| Error::InvalidConfig(format!("user {k}: {e}")))?;
        }
        Ok(())
    }

    /// 32-element array over a 64 m x 64 m grid at 1 m spacing, three users
    /// with two candidate areas each, a few reflectors and 1000 trials.
    pub fn desk_default() -> Self {
        let rect = |x_min, x_max, y_min, y_max, prior| RegionConfig {
            shape: RegionShape::Rect {
                x_min,
                x_max,
                y_min,
                y_max,
            },
            prior,
        };
        Self {
            array: ArrayConfig {
                num_antennas: 32,
                carrier_frequency_hz: 80e9,
                bs_position: Point2::new(0.0, 0.0),
            },
            grid: GridConfig {
                extent_x: 64.0,
                extent_y: 64.0,
                spacing_x: 1.0,
                spacing_y: 1.0,
                origin: Point2::new(-31.5, -31.5),
            },
            environment: Environment {
                scatterers: vec![
                    Scatterer {
                        position: Point2::new(-20.0, 25.0),
                        reflection: 0.3,
                    },
                    Scatterer {
                        position: Point2::new(24.0, -18.0),
                        reflection: 0.25,
                    },
                ],
                walls: vec![Wall {
                    start: Point2::new(-32.0, 31.0),
                    end: Point2::new(32.0, 31.0),
                    reflection: 0.35,
                }],
                obstacles: vec![Obstacle {
                    start: Point2::new(-12.0, -8.0),
                    end: Point2::new(-4.0, -8.0),
                    transmission: 0.2,
                }],
                max_paths: 3,
                pathloss_exponent: 1.0,
                rng_seed: 7,
            },
            users: vec![
                UserConfig {
                    regions: vec![
                        rect(8.5, 13.5, 14.5, 19.5, 0.7),
                        rect(-18.5, -15.5, 9.5, 12.5, 0.3),
                    ],
                },
                UserConfig {
                    regions: vec![
                        rect(13.5, 18.5, 22.5, 27.5, 0.6),
                        rect(-24.5, -21.5, 14.5, 17.5, 0.4),
                    ],
                },
                UserConfig {
                    regions: vec![
                        rect(8.5, 13.5, -19.5, -14.5, 0.5),
                        rect(-18.5, -15.5, -12.5, -9.5, 0.5),
                    ],
                },
            ],
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            snr_reference_distance: default_reference_distance(),
            beta: default_beta(),
            retain_per_point: None,
            eta: default_eta(),
            trials: 1000,
            algorithms: default_algorithms(),
            seed: 1,
            staleness: None,
            position_jitter: 0.0,
        }
    }

    /// 128 elements, 256 m x 256 m grid, 10000 trials.
    pub fn paper_scale() -> Self {
        let rect = |x_min, x_max, y_min, y_max, prior| RegionConfig {
            shape: RegionShape::Rect {
                x_min,
                x_max,
                y_min,
                y_max,
            },
            prior,
        };
        let mut c = Self::desk_default();
        c.array.num_antennas = 128;
        c.grid = GridConfig {
            extent_x: 256.0,
            extent_y: 256.0,
            spacing_x: 1.0,
            spacing_y: 1.0,
            origin: Point2::new(-127.5, -127.5),
        };
        c.snr_reference_distance = 128.0;
        c.environment.scatterers = vec![
            Scatterer {
                position: Point2::new(-80.0, 100.0),
                reflection: 0.3,
            },
            Scatterer {
                position: Point2::new(96.0, -72.0),
                reflection: 0.25,
            },
        ];
        c.environment.walls = vec![Wall {
            start: Point2::new(-128.0, 124.0),
            end: Point2::new(128.0, 124.0),
            reflection: 0.35,
        }];
        c.environment.obstacles = vec![Obstacle {
            start: Point2::new(-48.0, -32.0),
            end: Point2::new(-16.0, -32.0),
            transmission: 0.2,
        }];
        c.users = vec![
            UserConfig {
                regions: vec![
                    rect(34.5, 53.5, 58.5, 77.5, 0.7),
                    rect(-73.5, -62.5, 38.5, 49.5, 0.3),
                ],
            },
            UserConfig {
                regions: vec![
                    rect(54.5, 73.5, 90.5, 109.5, 0.6),
                    rect(-97.5, -86.5, 58.5, 69.5, 0.4),
                ],
            },
            UserConfig {
                regions: vec![
                    rect(34.5, 53.5, -77.5, -58.5, 0.5),
                    rect(-73.5, -62.5, -49.5, -38.5, 0.5),
                ],
            },
        ];
        c.trials = 10_000;
        c
    }
}
