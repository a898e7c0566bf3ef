//! Map-aided hierarchical beam training for a uniform linear array.
//!
//! A channel knowledge map stores, for every grid point and every codeword of
//! a binary hierarchical codebook, the beamforming gain seen there. Given a
//! prior over where a user may be, the searches here use the map to prune the
//! codebook tree and to pick which layers to probe.

pub mod channel;
pub mod ckm;
pub mod codebook;
pub mod error;
pub mod harness;
pub mod lookahead;
pub mod multi_user;
pub mod position;
pub mod strategy;
pub mod tree;

pub use channel::{ArrayConfig, ChannelRealization, ChannelSounder, Environment, Point2, Sounder};
pub use ckm::{build_ckm, CkmGrid, GridConfig, GridSpec, Staleness};
pub use codebook::{BeamId, Direction, HierarchicalCodebook, Root};
pub use error::{Error, Result};
pub use harness::{run_trials, Algorithm, Scenario, ScenarioConfig, TrialResult};
pub use lookahead::{run_lookahead, LookaheadPolicy};
pub use multi_user::{run_multi_user, Indicator, JointParams, MultiUserOutcome};
pub use position::{PositionPrior, RegionConfig, RegionShape, SubRegion};
pub use strategy::{run_single_user, RewardPolicy, SearchOutcome};
pub use tree::{BeamWeightTable, PrunedTree, WeightParams};
