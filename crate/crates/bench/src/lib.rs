//! Fixtures shared by the benchmarks.

use exportshock::panel::{FeaturePanel, PanelBuilder};
use exportshock::synthgen::{generate, GeneratorConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Train-cohort and shock-aware treated panels for one month of a
/// synthetic world with `n_firms` firms.
pub fn panels(n_firms: usize, month: u32) -> (FeaturePanel, FeaturePanel) {
    let cfg = GeneratorConfig { n_firms, seed: 1, ..GeneratorConfig::default() };
    let world = generate(&cfg).expect("default generator config is valid");
    let builder = PanelBuilder::new(&world.transactions, Some(&world.covariates));
    let t1 = cfg.final_year() - 1;
    let train = builder.build(t1 - 1, month, false).expect("train panel");
    let aware = builder.build(t1, month, true).expect("treated panel");
    (train, aware)
}

/// Deterministic scores and labels with a moderate signal.
pub fn scored(n: usize) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    (0..n)
        .map(|_| {
            let label = rng.random_bool(0.7);
            let score = (rng.random::<f64>() + if label { 0.3 } else { 0.0 }).min(1.0);
            (score, label)
        })
        .unzip()
}
