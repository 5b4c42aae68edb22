#![allow(dead_code)]

use invgame_core::{DemandModel, MarketConfig, Marginal};
use proptest::prelude::*;

pub fn config(n: usize, c: f64, p_m: f64, h_m: f64, w: Vec<f64>, p_r: Vec<f64>, h_r: Vec<f64>, alpha: Vec<Vec<f64>>) -> MarketConfig {
    MarketConfig { n, c, p_m, h_m, w, p_r, h_r, alpha }.validate().unwrap()
}

pub fn uniform(n: usize, b: f64) -> DemandModel {
    DemandModel::independent(vec![Marginal::Uniform { a: 0.0, b }; n + 1])
}

/// Valid configs with one or two retailers; every alpha row sums to at most one.
pub fn arb_config() -> impl Strategy<Value = MarketConfig> {
    (1usize..=2).prop_flat_map(|n| {
        let m = n + 1;
        (
            0.0..5.0f64,
            1.0..10.0f64,
            0.0..3.0f64,
            proptest::collection::vec((0.0..5.0f64, 0.5..8.0f64, 0.0..3.0f64), n),
            proptest::collection::vec(proptest::collection::vec(0.0..0.5f64, m), m),
        )
            .prop_map(move |(c, pm_gap, h_m, ret, mut alpha)| {
                for (j, row) in alpha.iter_mut().enumerate() {
                    row[j] = 0.0;
                }
                MarketConfig {
                    n,
                    c,
                    p_m: c + pm_gap,
                    h_m,
                    w: ret.iter().map(|r| c + r.0).collect(),
                    p_r: ret.iter().map(|r| c + r.0 + r.1).collect(),
                    h_r: ret.iter().map(|r| r.2).collect(),
                    alpha,
                }
            })
    })
}
