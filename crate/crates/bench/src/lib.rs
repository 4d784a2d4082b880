//! Shared fixtures for the estimator benchmarks.

use diffscore::density::{AnalyticDensity, Dataset, DensitySpec};
use diffscore::score::{FittedScores, ScoreConfig};

pub const ALPHA: f64 = 2.0;

pub fn smooth_density() -> AnalyticDensity {
    AnalyticDensity::new(DensitySpec::single_bump(ALPHA, 0.1, 0.8, 0.0)).expect("valid bump")
}

pub fn dataset(n: usize) -> Dataset {
    smooth_density().sample(n, 0xbe7c)
}

pub fn fitted(n: usize) -> FittedScores {
    let cfg = ScoreConfig { c_h: 3.0, ..ScoreConfig::default() };
    FittedScores::fit(&dataset(n), ALPHA, &cfg).expect("fit")
}
