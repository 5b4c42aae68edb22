//! Primary-demand distributions, reproducible sampling, and the one-pass
//! substitution rule that turns primary demand into composite demand.

use alloc::format;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Uniform};

use crate::error::{DemandError, SolveError};
use crate::exec;
use crate::market::MarketConfig;

/// Marginal distribution of one channel's primary demand.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum Marginal {
    Uniform { a: f64, b: f64 },
    Exponential { rate: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Discrete { points: Vec<f64>, probs: Vec<f64> },
}

impl Marginal {
    pub fn is_continuous(&self) -> bool {
        !matches!(self, Marginal::Discrete { .. })
    }

    fn check(&self, channel: usize) -> Result<(), DemandError> {
        let bad = |reason: &str| Err(DemandError::Marginal { channel, reason: reason.into() });
        match *self {
            Marginal::Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite()) || a < 0.0 || b <= a {
                    return bad("uniform needs 0 ≤ a < b");
                }
            }
            Marginal::Exponential { rate } => {
                if !(rate.is_finite() && rate > 0.0) {
                    return bad("exponential rate must be positive");
                }
            }
            Marginal::Lognormal { mu, sigma } => {
                if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
                    return bad("lognormal needs finite mu and sigma > 0");
                }
            }
            Marginal::Discrete { ref points, ref probs } => {
                if points.is_empty() || points.len() != probs.len() {
                    return bad("discrete needs matching, nonempty points and probs");
                }
                if points.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return bad("discrete support must be finite and nonnegative");
                }
                if probs.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                    return bad("discrete probabilities must be positive");
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad("discrete probabilities must sum to 1");
                }
            }
        }
        Ok(())
    }

    /// Distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Marginal::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -libm::expm1(-rate * x)
                }
            }
            Marginal::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    0.5 * libm::erfc(-(libm::log(x) - mu) / (sigma * core::f64::consts::SQRT_2))
                }
            }
            Marginal::Discrete { ref points, ref probs } => points
                .iter()
                .zip(probs)
                .filter(|(p, _)| **p <= x)
                .map(|(_, w)| *w)
                .sum(),
        }
    }

    /// Density; `None` for discrete marginals.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        Some(match *self {
            Marginal::Uniform { a, b } => {
                if x < a || x > b {
                    0.0
                } else {
                    1.0 / (b - a)
                }
            }
            Marginal::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * libm::exp(-rate * x)
                }
            }
            Marginal::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let z = (libm::log(x) - mu) / sigma;
                    libm::exp(-0.5 * z * z) / (x * sigma * libm::sqrt(2.0 * core::f64::consts::PI))
                }
            }
            Marginal::Discrete { .. } => return None,
        })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => Uniform::new_inclusive(a, b).expect("checked").sample(rng),
            Marginal::Exponential { rate } => Exp::new(rate).expect("checked").sample(rng),
            Marginal::Lognormal { mu, sigma } => LogNormal::new(mu, sigma).expect("checked").sample(rng),
            Marginal::Discrete { ref points, ref probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (p, w) in points.iter().zip(probs) {
                    acc += w;
                    if u < acc {
                        return *p;
                    }
                }
                *points.last().expect("nonempty")
            }
        }
    }
}

/// Joint structure of the primary demands.
#[derive(Debug, Clone, PartialEq)]
pub enum Dependence {
    /// Marginals are drawn independently.
    Independent,
    /// Rows of a user-supplied matrix are resampled uniformly with replacement.
    Empirical(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandModel {
    pub marginals: Vec<Marginal>,
    pub dependence: Dependence,
}

impl DemandModel {
    pub fn independent(marginals: Vec<Marginal>) -> Self {
        DemandModel { marginals, dependence: Dependence::Independent }
    }

    pub fn channels(&self) -> usize {
        match &self.dependence {
            Dependence::Independent => self.marginals.len(),
            Dependence::Empirical(rows) => rows.first().map_or(self.marginals.len(), Vec::len),
        }
    }

    pub fn check(&self, channels: usize) -> Result<(), DemandError> {
        match &self.dependence {
            Dependence::Independent => {
                if self.marginals.len() != channels {
                    return Err(DemandError::Channels { got: self.marginals.len(), expected: channels });
                }
            }
            Dependence::Empirical(rows) => {
                if rows.is_empty() {
                    return Err(DemandError::Empirical("no rows".into()));
                }
                for (t, row) in rows.iter().enumerate() {
                    if row.len() != channels {
                        return Err(DemandError::Empirical(format!(
                            "row {t} has {} columns, expected {channels}",
                            row.len()
                        )));
                    }
                    if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                        return Err(DemandError::Empirical(format!("row {t} has a negative or non-finite entry")));
                    }
                }
                if !self.marginals.is_empty() && self.marginals.len() != channels {
                    return Err(DemandError::Channels { got: self.marginals.len(), expected: channels });
                }
            }
        }
        for (j, m) in self.marginals.iter().enumerate() {
            m.check(j)?;
        }
        Ok(())
    }

    /// True when derivative formulas apply: no discrete marginals.
    pub fn is_continuous(&self) -> bool {
        self.marginals.iter().all(Marginal::is_continuous)
    }

    pub fn require_continuous(&self) -> Result<(), SolveError> {
        if self.is_continuous() {
            Ok(())
        } else {
            Err(SolveError::DiscreteDemand)
        }
    }

    fn fill_row(&self, seed: u64, t: usize, row: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        match &self.dependence {
            Dependence::Independent => {
                for (slot, m) in row.iter_mut().zip(&self.marginals) {
                    *slot = m.draw(&mut rng);
                }
            }
            Dependence::Empirical(rows) => {
                let pick = rng.random_range(0..rows.len());
                row.copy_from_slice(&rows[pick]);
            }
        }
    }

    /// Draws `n_draws` joint realisations. Row `t` depends only on
    /// `(self, seed, t)`, never on the number of worker threads.
    pub fn sample(&self, n_draws: usize, seed: u64) -> Result<SampleSet, DemandError> {
        if n_draws == 0 {
            return Err(DemandError::NoDraws);
        }
        let width = self.channels();
        self.check(width)?;
        let mut draws = alloc::vec![0.0; n_draws * width];
        exec::fill_chunks(&mut draws, width, |t, row| self.fill_row(seed, t, row));
        Ok(SampleSet { draws, width, seed })
    }

    /// Draws a single row, as used by period-by-period simulation.
    pub fn draw_row(&self, seed: u64, t: usize, row: &mut [f64]) {
        self.fill_row(seed, t, row);
    }
}

/// A fixed matrix of primary-demand draws shared by every estimate in a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    draws: Vec<f64>,
    width: usize,
    seed: u64,
}

impl SampleSet {
    /// Wraps an explicit draw matrix (row-major, `width` columns).
    pub fn from_rows(rows: &[Vec<f64>], seed: u64) -> Result<Self, DemandError> {
        let width = rows.first().map(Vec::len).ok_or(DemandError::NoDraws)?;
        let mut draws = Vec::with_capacity(rows.len() * width);
        for row in rows {
            if row.len() != width || row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(DemandError::Empirical("ragged or negative draw matrix".into()));
            }
            draws.extend_from_slice(row);
        }
        Ok(SampleSet { draws, width, seed })
    }

    pub fn len(&self) -> usize {
        self.draws.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.draws[t * self.width..(t + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.draws.chunks_exact(self.width)
    }

    /// Copy of rows `range`, keeping the seed.
    pub fn slice(&self, range: core::ops::Range<usize>) -> SampleSet {
        SampleSet {
            draws: self.draws[range.start * self.width..range.end * self.width].to_vec(),
            width: self.width,
            seed: self.seed,
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }
}

/// Base-stock levels `(S_m, S_r1, ..., S_rn)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct StockVector(Vec<f64>);

impl StockVector {
    pub fn new(levels: Vec<f64>) -> Result<Self, SolveError> {
        if levels.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(SolveError::Scenario("stock levels must be finite and nonnegative".into()));
        }
        Ok(StockVector(levels))
    }

    pub fn zeros(channels: usize) -> Self {
        StockVector(alloc::vec![0.0; channels])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn with(&self, j: usize, level: f64) -> Self {
        let mut s = self.clone();
        s.0[j] = level;
        s
    }

    pub(crate) fn conform(&self, channels: usize) -> Result<(), SolveError> {
        if self.0.len() != channels {
            return Err(SolveError::StockLength { got: self.0.len(), expected: channels });
        }
        Ok(())
    }
}

impl Index<usize> for StockVector {
    type Output = f64;
    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

impl IndexMut<usize> for StockVector {
    fn index_mut(&mut self, j: usize) -> &mut f64 {
        &mut self.0[j]
    }
}

/// Composite demand of channel `j` for one row of primary demand: its own
/// primary demand plus the share of every other channel's unmet primary
/// demand that substitutes into it. Spillover is taken from primary excess
/// only, so there is exactly one substitution pass.
#[inline]
pub fn composite_channel(cfg: &MarketConfig, s: &[f64], primary: &[f64], j: usize) -> f64 {
    let mut d = primary[j];
    for k in 0..primary.len() {
        if k != j {
            let excess = primary[k] - s[k];
            if excess > 0.0 {
                d += cfg.alpha[k][j] * excess;
            }
        }
    }
    d
}

/// Composite demand for every channel; see [`composite_channel`].
pub fn composite_demand(cfg: &MarketConfig, s: &StockVector, primary: &[f64]) -> Vec<f64> {
    let mut out = alloc::vec![0.0; primary.len()];
    composite_into(cfg, s.as_slice(), primary, &mut out);
    out
}

#[inline]
pub fn composite_into(cfg: &MarketConfig, s: &[f64], primary: &[f64], out: &mut [f64]) {
    out.copy_from_slice(primary);
    for k in 0..primary.len() {
        let excess = primary[k] - s[k];
        if excess > 0.0 {
            for (j, o) in out.iter_mut().enumerate() {
                if j != k {
                    *o += cfg.alpha[k][j] * excess;
                }
            }
        }
    }
}

/// Composite demand of channel `j` on every row.
pub fn composite_column(cfg: &MarketConfig, samples: &SampleSet, s: &[f64], j: usize) -> Vec<f64> {
    samples.rows().map(|r| composite_channel(cfg, s, r, j)).collect()
}

/// Largest composite demand of each channel when every channel stocks nothing.
/// Stocking above it is strictly dominated.
pub fn stock_ceiling(cfg: &MarketConfig, samples: &SampleSet) -> Vec<f64> {
    let zero = alloc::vec![0.0; cfg.channels()];
    (0..cfg.channels())
        .map(|j| samples.rows().map(|r| composite_channel(cfg, &zero, r, j)).fold(0.0, f64::max))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cfg1(a01: f64, a10: f64) -> MarketConfig {
        MarketConfig {
            n: 1,
            c: 2.0,
            p_m: 10.0,
            h_m: 1.0,
            w: vec![5.0],
            p_r: vec![9.0],
            h_r: vec![1.0],
            alpha: vec![vec![0.0, a01], vec![a10, 0.0]],
        }
    }

    #[test]
    fn uniform_draws_stay_in_support() {
        let m = DemandModel::independent(vec![Marginal::Uniform { a: 0.0, b: 100.0 }; 2]);
        let s = m.sample(5000, 11).unwrap();
        assert!(s.rows().flatten().all(|v| (0.0..=100.0).contains(v)));
    }

    #[test]
    fn same_seed_same_draws() {
        let m = DemandModel::independent(vec![
            Marginal::Exponential { rate: 0.05 },
            Marginal::Lognormal { mu: 3.0, sigma: 0.4 },
        ]);
        assert_eq!(m.sample(1000, 3).unwrap(), m.sample(1000, 3).unwrap());
        assert_ne!(m.sample(1000, 3).unwrap(), m.sample(1000, 4).unwrap());
    }

    #[test]
    fn prefix_of_longer_sample_is_identical() {
        let m = DemandModel::independent(vec![Marginal::Exponential { rate: 0.05 }; 3]);
        let short = m.sample(100, 9).unwrap();
        let long = m.sample(300, 9).unwrap();
        for t in 0..100 {
            assert_eq!(short.row(t), long.row(t));
        }
    }

    #[test]
    fn discrete_mean_within_clt_bound() {
        // sd of {10, 30} w.p. 1/2 each is 10
        let n = 100_000;
        let m = DemandModel::independent(vec![Marginal::Discrete { points: vec![10.0, 30.0], probs: vec![0.5, 0.5] }]);
        let s = m.sample(n, 5).unwrap();
        let mean = s.column(0).iter().sum::<f64>() / n as f64;
        assert!((mean - 20.0).abs() <= 3.0 * 10.0 / libm::sqrt(n as f64), "{mean}");
    }

    #[test]
    fn zero_draws_rejected() {
        let m = DemandModel::independent(vec![Marginal::Exponential { rate: 1.0 }]);
        assert_eq!(m.sample(0, 0).unwrap_err(), DemandError::NoDraws);
    }

    #[test]
    fn empirical_rows_are_resampled() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let m = DemandModel { marginals: vec![], dependence: Dependence::Empirical(rows.clone()) };
        let s = m.sample(200, 1).unwrap();
        assert!(s.rows().all(|r| rows.iter().any(|x| x.as_slice() == r)));
    }

    #[test]
    fn bad_marginals_rejected() {
        let m = DemandModel::independent(vec![Marginal::Uniform { a: 5.0, b: 1.0 }]);
        assert!(m.check(1).is_err());
        let m = DemandModel::independent(vec![Marginal::Discrete { points: vec![1.0], probs: vec![0.5] }]);
        assert!(m.check(1).is_err());
        let m = DemandModel::independent(vec![Marginal::Exponential { rate: 1.0 }]);
        assert!(m.check(2).is_err());
    }

    #[test]
    fn no_substitution_means_composite_is_primary() {
        let cfg = cfg1(0.0, 0.0);
        let s = StockVector::zeros(2);
        assert_eq!(composite_demand(&cfg, &s, &[50.0, 30.0]), vec![50.0, 30.0]);
    }

    #[test]
    fn single_spill_example() {
        let cfg = cfg1(0.5, 0.0);
        let s = StockVector::new(vec![40.0, 35.0]).unwrap();
        assert_eq!(composite_demand(&cfg, &s, &[50.0, 30.0]), vec![50.0, 35.0]);
    }

    #[test]
    fn only_one_substitution_pass() {
        let cfg = MarketConfig {
            n: 2,
            c: 1.0,
            p_m: 10.0,
            h_m: 1.0,
            w: vec![4.0, 4.0],
            p_r: vec![9.0, 9.0],
            h_r: vec![1.0, 1.0],
            alpha: vec![vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]],
        };
        let s = StockVector::new(vec![10.0, 10.0, 10.0]).unwrap();
        let d = composite_demand(&cfg, &s, &[20.0, 30.0, 40.0]);
        // excesses 10, 20, 30 spill once; spilled demand never spills again
        assert_eq!(d, vec![20.0 + 10.0 + 15.0, 30.0 + 5.0 + 15.0, 40.0 + 5.0 + 10.0]);
    }

    #[test]
    fn ceiling_is_zero_stock_maximum() {
        let cfg = cfg1(0.5, 0.25);
        let s = SampleSet::from_rows(&[vec![10.0, 40.0], vec![30.0, 0.0]], 0).unwrap();
        assert_eq!(stock_ceiling(&cfg, &s), vec![30.0 + 0.0, 40.0 + 5.0]);
    }
}
