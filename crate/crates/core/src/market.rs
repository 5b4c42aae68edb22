//! Exogenous parameters of the game and the parameter conditions that
//! govern concavity, interior manufacturer stocking and leader uniqueness.
//!
//! Channel 0 is always the manufacturer's direct channel; channels `1..=n`
//! are the retailers. Retailer-indexed vectors (`w`, `p_r`, `h_r`) are
//! 0-based, so retailer `i` lives in channel `i + 1`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::ConfigError;

/// Prices, costs and substitution rates for one manufacturer and `n` retailers.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarketConfig {
    pub n: usize,
    /// Unit production cost.
    pub c: f64,
    /// Retail price in the manufacturer's own channel.
    pub p_m: f64,
    /// Per-period holding cost in the manufacturer's channel.
    pub h_m: f64,
    /// Wholesale price charged to each retailer.
    pub w: Vec<f64>,
    /// Retail price of each retailer.
    pub p_r: Vec<f64>,
    /// Per-period holding cost of each retailer.
    pub h_r: Vec<f64>,
    /// `alpha[j][k]` is the fraction of channel `j`'s unmet primary demand
    /// that tries channel `k` instead.
    pub alpha: Vec<Vec<f64>>,
}

impl MarketConfig {
    /// Number of channels, `n + 1`.
    #[inline]
    pub fn channels(&self) -> usize {
        self.n + 1
    }

    /// Unit price at which channel `j` sells to end customers.
    pub fn price(&self, j: usize) -> f64 {
        if j == 0 {
            self.p_m
        } else {
            self.p_r[j - 1]
        }
    }

    /// Holding cost of channel `j`.
    pub fn holding(&self, j: usize) -> f64 {
        if j == 0 {
            self.h_m
        } else {
            self.h_r[j - 1]
        }
    }

    /// Manufacturer's per-unit margin on units stocked in channel `j`:
    /// `p_m - c` for her own channel and `w_i - c` for retailer `i`.
    pub fn manufacturer_margin(&self, j: usize) -> f64 {
        if j == 0 {
            self.p_m - self.c
        } else {
            self.w[j - 1] - self.c
        }
    }

    /// Critical fractile of retailer channel `j` (1-based channel index).
    pub fn retailer_fractile(&self, j: usize) -> f64 {
        let under = self.p_r[j - 1] - self.w[j - 1];
        under / (under + self.h_r[j - 1])
    }

    /// Critical fractile of the manufacturer when she ignores spillover.
    pub fn manufacturer_fractile(&self) -> f64 {
        let under = self.p_m - self.c;
        under / (under + self.h_m)
    }

    /// Checks every structural invariant and returns the config unchanged.
    ///
    /// Wholesale prices may equal the production cost (the `w = c` regime is
    /// a studied special case); every other price inequality is strict.
    pub fn validate(self) -> Result<Self, ConfigError> {
        self.check()?;
        Ok(self)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let n = self.n;
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if n == 0 {
            return fail("n must be at least 1".into());
        }
        for (name, len) in [("w", self.w.len()), ("p_r", self.p_r.len()), ("h_r", self.h_r.len())] {
            if len != n {
                return fail(format!("{name} has {len} entries, expected {n}"));
            }
        }
        let scalars = [("c", self.c), ("p_m", self.p_m), ("h_m", self.h_m)];
        for (name, v) in scalars {
            if !v.is_finite() {
                return fail(format!("{name} is not finite"));
            }
        }
        for i in 0..n {
            for (name, v) in [("w", self.w[i]), ("p_r", self.p_r[i]), ("h_r", self.h_r[i])] {
                if !v.is_finite() {
                    return fail(format!("{name}[{i}] is not finite"));
                }
            }
        }
        if self.c < 0.0 {
            return fail("c < 0".into());
        }
        if self.p_m <= self.c {
            return fail("p_m ≤ c".into());
        }
        if self.h_m < 0.0 {
            return fail("h_m < 0".into());
        }
        for i in 0..n {
            if self.w[i] < self.c {
                return fail(format!("w[{i}] < c"));
            }
            if self.w[i] >= self.p_r[i] {
                return fail(format!("w[{i}] ≥ p_r[{i}]"));
            }
            if self.h_r[i] < 0.0 {
                return fail(format!("h_r[{i}] < 0"));
            }
        }
        let m = n + 1;
        if self.alpha.len() != m {
            return fail(format!("alpha has {} rows, expected {m}", self.alpha.len()));
        }
        for (j, row) in self.alpha.iter().enumerate() {
            if row.len() != m {
                return fail(format!("alpha row {j} has {} columns, expected {m}", row.len()));
            }
            for (k, &a) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&a) {
                    return fail(format!("alpha[{j}][{k}] = {a} outside [0, 1]"));
                }
            }
            if row[j] != 0.0 {
                return fail(format!("alpha[{j}][{j}] must be 0"));
            }
            let sum: f64 = row.iter().sum();
            if sum > 1.0 + 1e-12 {
                return fail(format!("alpha row {j} sums to {sum}"));
            }
        }
        Ok(())
    }

    /// Evaluates conditions C1, C2 and the per-retailer C3.
    pub fn conditions(&self) -> ConditionReport {
        let spill_margin: f64 = (1..=self.n)
            .map(|k| self.alpha[0][k] * (self.w[k - 1] - self.c))
            .sum();
        let overage = self.p_m - self.c + self.h_m;
        let c1 = Condition::from_slack(overage - spill_margin);
        let c2 = Condition::from_slack((self.p_m - self.c) - spill_margin);
        let c3 = (1..=self.n)
            .map(|i| {
                let others: f64 = (1..=self.n)
                    .filter(|&l| l != i)
                    .map(|l| self.alpha[i][l] * (self.w[l - 1] - self.c))
                    .sum();
                Condition::from_slack((self.w[i - 1] - self.c) - self.alpha[i][0] * overage - others)
            })
            .collect();
        ConditionReport { c1, c2, c3 }
    }
}

/// A strict inequality together with its slack (left side minus right side).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Condition {
    pub holds: bool,
    pub slack: f64,
}

impl Condition {
    pub fn from_slack(slack: f64) -> Self {
        Condition { holds: slack > 0.0, slack }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConditionReport {
    /// Manufacturer concavity.
    pub c1: Condition,
    /// Manufacturer always stocks at equilibrium.
    pub c2: Condition,
    /// Wholesale margin dominance, one entry per retailer.
    pub c3: Vec<Condition>,
}

impl ConditionReport {
    pub fn all_c3(&self) -> bool {
        self.c3.iter().all(|c| c.holds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    pub(crate) fn example() -> MarketConfig {
        MarketConfig {
            n: 1,
            c: 2.0,
            p_m: 10.0,
            h_m: 1.0,
            w: vec![5.0],
            p_r: vec![9.0],
            h_r: vec![1.0],
            alpha: vec![vec![0.0, 0.3], vec![0.4, 0.0]],
        }
    }

    #[test]
    fn example_is_valid() {
        assert!(example().validate().is_ok());
    }

    #[test]
    fn wholesale_above_retail_price_is_rejected() {
        let mut cfg = example();
        cfg.w = vec![9.5];
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.to_string(), "w[0] ≥ p_r[0]");
    }

    #[test]
    fn row_sum_above_one_is_rejected() {
        let mut cfg = example();
        cfg.n = 2;
        cfg.w = vec![5.0, 5.0];
        cfg.p_r = vec![9.0, 9.0];
        cfg.h_r = vec![1.0, 1.0];
        cfg.alpha = vec![vec![0.0, 0.6, 0.5], vec![0.4, 0.0, 0.0], vec![0.0, 0.0, 0.0]];
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("alpha row 0 sums to"), "{err}");
    }

    #[test]
    fn nonzero_diagonal_is_rejected() {
        let mut cfg = example();
        cfg.alpha[1][1] = 0.1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn wholesale_equal_to_cost_is_allowed() {
        let mut cfg = example();
        cfg.w = vec![2.0];
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn conditions_of_example() {
        let r = example().conditions();
        assert!((r.c1.slack - 8.1).abs() < 1e-12);
        assert!(r.c1.holds);
        assert!((r.c2.slack - 7.1).abs() < 1e-12);
        assert!((r.c3[0].slack + 0.6).abs() < 1e-12);
        assert!(!r.c3[0].holds);
    }

    #[test]
    fn zero_substitution_slacks() {
        let mut cfg = example();
        cfg.alpha = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let r = cfg.conditions();
        assert_eq!(r.c1.slack, 9.0);
        assert_eq!(r.c2.slack, 8.0);
        assert_eq!(r.c3[0].slack, 3.0);
        assert!(r.c1.holds && r.c2.holds && r.all_c3());
    }

    #[test]
    fn zero_slack_is_reported_false() {
        assert!(!Condition::from_slack(0.0).holds);
    }
}
