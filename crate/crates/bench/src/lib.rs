//! Shared inputs for the benchmarks.

use warpfit::model::Dataset;
use warpfit::simbench::{gen_sim, SimDesign, SimId, StudyMethod};

/// One replicate of a simulation design.
pub fn sim_data(id: SimId, n: usize, seed: u64) -> Dataset {
    gen_sim(&SimDesign::new(id, n, 1, seed, StudyMethod::Bayes), 0).expect("valid design")
}

/// Coefficients with norm `0.5π` spread over `p` terms.
pub fn beta(p: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=p).map(|j| if j % 2 == 0 { -1.0 } else { 1.0 } / j as f64).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.iter().map(|v| v * 0.5 * std::f64::consts::PI / norm).collect()
}
