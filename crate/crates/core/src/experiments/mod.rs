//! Studies over sampled data: weight verification, single solves, regularization
//! convergence, observability ratios with the unique-continuation chain, and
//! sweeps of the weighted inequalities. Each study returns a [`StudyReport`].

mod approximation;
mod config;
mod observability;
mod report;
mod sweep;
mod verify;

pub use approximation::run_approximation_study;
pub use config::{
    config_keys, parse_config, ApproximationConfig, CarlemanSweepConfig, ExperimentConfig, GeometryConfig,
    ObservabilityConfig, SolveConfig, TimePolicy, WeightCheckConfig,
};
pub use observability::{run_observability_and_ucp, run_observability_study, run_ucp_check};
pub use report::{num, opt, persist_report, read_report, text, Check, PlotSeries, StudyReport, Table};
pub use sweep::run_carleman_sweep;
pub use verify::{run_solve, run_weight_verification};

use crate::spaces::FieldFamily;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Studies that draw random data, each with its own stream family.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Solve = 1,
    Approximation = 2,
    Observability = 3,
    Carleman = 4,
    Weights = 5,
}

fn family_code(f: FieldFamily) -> u64 {
    match f {
        FieldFamily::UniformBumps => 0,
        FieldFamily::CoreBumps => 1,
        FieldFamily::AnnulusBumps => 2,
        FieldFamily::LowFrequency => 3,
        FieldFamily::Mixed => 4,
    }
}

/// Generator for one sample: independent of the mesh level and of the other samples.
pub(crate) fn sample_rng(seed: u64, stream: Stream, family: FieldFamily, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 40) | (family_code(family) << 32) | sample as u64);
    rng
}

/// `|fine / coarse - 1|`, `0` when both vanish and infinite when only `coarse` does.
pub(crate) fn relative_drift(coarse: f64, fine: f64) -> f64 {
    if coarse == fine {
        0.0
    } else if coarse == 0.0 {
        f64::INFINITY
    } else {
        (fine / coarse - 1.0).abs()
    }
}

/// `lhs / rhs` with `0/0 = 0`.
pub(crate) fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}
