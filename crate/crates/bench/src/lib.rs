//! Shared fixtures for the benchmarks.

use beamtrain::{CkmGrid, Scenario, ScenarioConfig};

/// Desk profile with its exact map.
pub fn desk() -> (Scenario, CkmGrid) {
    let scenario = Scenario::new(ScenarioConfig::desk_default()).expect("desk profile is valid");
    let ckm = scenario.build_ckm().expect("map builds");
    (scenario, ckm)
}

/// Grid points used as true positions, one per user, taken from the middle of
/// each user's first region.
pub fn user_points(scenario: &Scenario) -> Vec<usize> {
    scenario
        .priors
        .iter()
        .map(|p| {
            let pts = &p.subregions()[0].points;
            pts[pts.len() / 2]
        })
        .collect()
}
