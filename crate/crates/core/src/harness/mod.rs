//! Monte-Carlo comparison of the searches against each other and against
//! codebook-only baselines.

mod config;
mod summary;

pub use config::{Algorithm, ScenarioConfig, UserConfig};
pub use summary::{
    empirical_cdf, read_results_csv, summarize, write_results_csv, write_summary_csv, CdfMetric,
    CdfThresholds, GroupSummary,
};

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{beam_gain, probe_response, synthesize_channel, Point2, Sounder};
use crate::ckm::{build_ckm, CkmGrid, GridSpec};
use crate::codebook::{BeamId, HierarchicalCodebook, Root};
use crate::error::{Error, Result};
use crate::lookahead::run_lookahead;
use crate::multi_user::run_multi_user;
use crate::position::PositionPrior;
use crate::strategy::{run_single_user, sound_round, ProbeRound, SearchOutcome};

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_id: u64,
    pub algorithm: String,
    pub snr_db: f64,
    pub user_id: usize,
    pub overhead: u32,
    pub chosen_layer: u32,
    pub chosen_index: u32,
    pub oracle_layer: u32,
    pub oracle_index: u32,
    pub gain_ratio_db: f64,
    pub se_bps_hz: f64,
}

impl TrialResult {
    pub fn chosen(&self) -> BeamId {
        BeamId::new(self.chosen_layer, self.chosen_index)
    }

    pub fn oracle(&self) -> BeamId {
        BeamId::new(self.oracle_layer, self.oracle_index)
    }

    pub fn hit(&self) -> bool {
        self.chosen() == self.oracle()
    }
}

/// Binary descent from the top: both children of the current beam at every
/// layer, `2L` probes in total.
pub fn baseline_hierarchical<S: Sounder + ?Sized>(
    sounder: &mut S,
    num_layers: u32,
) -> SearchOutcome {
    let mut root = Root::Virtual;
    let mut transcript = Vec::with_capacity(num_layers as usize);
    for layer in 1..=num_layers {
        let (lo, hi) = root.range_at(layer);
        let round = sound_round(
            sounder,
            layer,
            (lo..=hi).map(|n| BeamId::new(layer, n)).collect(),
        );
        root = Root::Beam(round.feedback);
        transcript.push(round);
    }
    finish(transcript)
}

/// Every bottom-layer beam once.
pub fn baseline_exhaustive<S: Sounder + ?Sized>(sounder: &mut S, num_layers: u32) -> SearchOutcome {
    let beams = (1..=1u32 << num_layers)
        .map(|n| BeamId::new(num_layers, n))
        .collect();
    finish(vec![sound_round(sounder, num_layers, beams)])
}

fn finish(transcript: Vec<ProbeRound>) -> SearchOutcome {
    SearchOutcome {
        chosen: transcript.last().expect("at least one round").feedback,
        overhead: transcript.iter().map(|r| r.probed.len() as u32).sum(),
        transcript,
    }
}

/// Everything derived from a validated config.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub codebook: HierarchicalCodebook,
    pub grid: GridSpec,
    pub priors: Vec<PositionPrior>,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            codebook: HierarchicalCodebook::build(config.array.num_antennas)?,
            grid: config.grid_spec()?,
            priors: config.priors()?,
            config,
        })
    }

    /// Map of the configured environment, including any configured staleness.
    pub fn build_ckm(&self) -> Result<CkmGrid> {
        build_ckm(
            &self.config.environment,
            &self.config.array,
            &self.codebook,
            &self.grid,
            self.config.staleness,
        )
    }

    /// Noise standard deviation for an SNR in dB; 0 for `+inf`.
    pub fn noise_std(&self, snr_db: f64) -> f64 {
        if snr_db == f64::INFINITY {
            return 0.0;
        }
        let lambda = self.config.array.wavelength();
        let reference = lambda
            / (4.0
                * PI
                * self
                    .config
                    .snr_reference_distance
                    .powf(self.config.environment.pathloss_exponent));
        reference / 10f64.powf(snr_db / 20.0)
    }

    fn check_ckm(&self, ckm: &CkmGrid) -> Result<()> {
        if ckm.num_antennas() != self.codebook.num_antennas() {
            return Err(Error::InvalidConfig(format!(
                "map built for {} antennas, scenario has {}",
                ckm.num_antennas(),
                self.codebook.num_antennas()
            )));
        }
        if *ckm.grid() != self.grid {
            return Err(Error::InvalidConfig(
                "map grid differs from the scenario grid".into(),
            ));
        }
        Ok(())
    }
}

// splitmix64 finaliser, folded over the words
fn derive_seed(words: &[u64]) -> u64 {
    let mut z = 0x9E37_79B9_7F4A_7C15u64;
    for &w in words {
        z ^= w;
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

const POSITION_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

struct UserDraw {
    response: Vec<num_complex::Complex64>,
    bottom_gains: Vec<f64>,
    oracle: BeamId,
}

/// Runs `config.trials` paired trials. Within a trial all algorithms see the
/// same user positions and, per (SNR, user), the same noise sequence.
/// Rows are ordered by trial, SNR, algorithm, user.
pub fn run_trials(scenario: &Scenario, ckm: &CkmGrid) -> Result<Vec<TrialResult>> {
    scenario.check_ckm(ckm)?;
    let per_trial: Vec<Vec<TrialResult>> = (0..scenario.config.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(scenario, ckm, t))
        .collect::<Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

fn draw_users(scenario: &Scenario, trial: u64) -> Result<Vec<UserDraw>> {
    let cfg = &scenario.config;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, POSITION_STREAM, trial]));
    let l = scenario.codebook.num_layers();
    scenario
        .priors
        .iter()
        .map(|prior| {
            let k = prior.sample_true_position(&mut rng);
            let mut p = scenario.grid.point(k);
            if cfg.position_jitter > 0.0 {
                let j = cfg.position_jitter;
                p = Point2::new(
                    p.x + rng.random_range(-j..=j),
                    p.y + rng.random_range(-j..=j),
                );
            }
            let channel = synthesize_channel(&cfg.environment, &cfg.array, p)?;
            let response = channel.response(scenario.codebook.num_antennas());
            let bottom_gains: Vec<f64> = scenario
                .codebook
                .bottom_beams()
                .map(|b| beam_gain(&response, scenario.codebook.codeword(b).unwrap()))
                .collect();
            let mut best = 0;
            for (i, g) in bottom_gains.iter().enumerate() {
                if *g > bottom_gains[best] {
                    best = i;
                }
            }
            Ok(UserDraw {
                response,
                bottom_gains,
                oracle: BeamId::new(l, best as u32 + 1),
            })
        })
        .collect()
}

fn run_trial(scenario: &Scenario, ckm: &CkmGrid, trial: u64) -> Result<Vec<TrialResult>> {
    let cfg = &scenario.config;
    let l = scenario.codebook.num_layers();
    let users = draw_users(scenario, trial)?;
    let mut rows = Vec::new();

    for (si, &snr_db) in cfg.snr_db.iter().enumerate() {
        let sigma = scenario.noise_std(snr_db);
        let sounder_for = |k: usize| {
            let rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
                cfg.seed,
                NOISE_STREAM,
                trial,
                si as u64,
                k as u64,
            ]));
            ResponseSounder {
                codebook: &scenario.codebook,
                response: &users[k].response,
                noise_std: sigma,
                rng,
            }
        };
        let row = |algorithm: Algorithm, k: usize, overhead: u32, chosen: BeamId| {
            let u = &users[k];
            let g_best = u.bottom_gains[u.oracle.index as usize - 1];
            let g = u.bottom_gains[chosen.index as usize - 1];
            let gain_ratio_db = if g_best > 0.0 {
                (20.0 * (g / g_best).log10()).min(0.0)
            } else {
                0.0
            };
            let se_bps_hz = if sigma == 0.0 {
                f64::INFINITY
            } else {
                (1.0 + (g / sigma).powi(2)).log2()
            };
            TrialResult {
                trial_id: trial,
                algorithm: algorithm.tag().to_string(),
                snr_db,
                user_id: k,
                overhead,
                chosen_layer: chosen.layer,
                chosen_index: chosen.index,
                oracle_layer: u.oracle.layer,
                oracle_index: u.oracle.index,
                gain_ratio_db,
                se_bps_hz,
            }
        };

        for &algorithm in &cfg.algorithms {
            match algorithm {
                Algorithm::Alg3 => {
                    let mut sounders: Vec<_> = (0..users.len()).map(sounder_for).collect();
                    let out =
                        run_multi_user(ckm, &scenario.priors, &mut sounders, cfg.joint_params())?;
                    debug_assert_eq!(
                        out.total_overhead,
                        out.users.iter().map(|u| u.overhead).sum::<u32>()
                    );
                    for (k, u) in out.users.iter().enumerate() {
                        rows.push(row(algorithm, k, u.overhead, u.chosen));
                    }
                }
                _ => {
                    for (k, user) in users.iter().enumerate() {
                        let mut s = sounder_for(k);
                        let out = match algorithm {
                            Algorithm::Alg1 => run_single_user(
                                ckm,
                                &scenario.priors[k],
                                &mut s,
                                cfg.weight_params(),
                            )?,
                            Algorithm::Alg2 => run_lookahead(
                                ckm,
                                &scenario.priors[k],
                                &mut s,
                                cfg.weight_params(),
                            )?,
                            Algorithm::BaselineHier => baseline_hierarchical(&mut s, l),
                            Algorithm::BaselineExhaustive => baseline_exhaustive(&mut s, l),
                            Algorithm::PerfectCsi => SearchOutcome {
                                chosen: user.oracle,
                                overhead: 0,
                                transcript: Vec::new(),
                            },
                            Algorithm::Alg3 => unreachable!(),
                        };
                        debug_assert_eq!(out.overhead, out.transcript_probes());
                        rows.push(row(algorithm, k, out.overhead, out.chosen));
                    }
                }
            }
        }
    }
    Ok(rows)
}

// Sounds a precomputed response; avoids recomputing it per algorithm.
struct ResponseSounder<'a> {
    codebook: &'a HierarchicalCodebook,
    response: &'a [num_complex::Complex64],
    noise_std: f64,
    rng: ChaCha8Rng,
}

impl Sounder for ResponseSounder<'_> {
    fn measure(&mut self, beam: BeamId) -> f64 {
        probe_response(
            self.response,
            self.codebook.codeword(beam).expect("valid beam"),
            self.noise_std,
            &mut self.rng,
        )
        .expect("codebook matches array size")
    }
}
