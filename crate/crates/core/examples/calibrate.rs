//! Prints the across-trial DPI distribution at year 18 for an outcome model,
//! to tune the shipped defaults. Unspecified arguments keep the default.
//!
//! cargo run --release -p dvc-core --example calibrate -- [HAZARD ALPHA XMIN MU SIGMA [TRIALS]]

use std::time::Instant;

use dvc_core::experiment::defaults;
use dvc_core::standard::{dpi_quantile, run_trials};

fn main() {
    let a: Vec<f64> = std::env::args()
        .skip(1)
        .map(|s| s.parse().expect("numeric argument"))
        .collect();
    let mut model = defaults::outcome();
    let fields = [
        &mut model.failure_hazard,
        &mut model.pareto_alpha,
        &mut model.pareto_xmin,
        &mut model.stepup_mu,
        &mut model.stepup_sigma,
    ];
    for (slot, v) in fields.into_iter().zip(&a) {
        *slot = *v;
    }
    let trials = a.get(5).map_or(10_000, |&t| t as u64);
    let start = Instant::now();
    let runs = run_trials(
        &defaults::fund(),
        &defaults::deployment(),
        &model,
        defaults::master_seed(),
        trials,
        defaults::sim(),
    )
    .expect("valid model");
    println!("elapsed {:?}", start.elapsed());
    for q in [0.25, 0.5, 0.75, 0.9] {
        println!("q{q}: dpi@18 = {:.3}", dpi_quantile(&runs, 18, q));
    }
}
