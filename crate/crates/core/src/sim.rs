//! Period-by-period simulation of the base-stock system: order up to the
//! base level, draw demand, serve primary customers, route one pass of
//! spillover, lose what is still unmet, carry leftovers forward.

use alloc::vec;
use alloc::vec::Vec;

use crate::demand::{DemandModel, StockVector};
use crate::error::SolveError;
use crate::market::MarketConfig;
use crate::stats::{batch_means_se, mean_and_se};

/// Periods dropped from averages: the first order fills an empty shelf
/// rather than replacing last period's sales.
pub const WARM_UP: usize = 1;

/// Batches used for standard errors of period averages.
pub const SIM_BATCHES: usize = 20;

/// One period, one slice entry per channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodRecord<'a> {
    pub start: &'a [f64],
    pub order: &'a [f64],
    pub primary: &'a [f64],
    /// Spillover demand arriving from other channels.
    pub received: &'a [f64],
    pub sales: &'a [f64],
    /// Customers who reached the channel (first or second choice) and
    /// left unserved.
    pub lost: &'a [f64],
    pub end: &'a [f64],
    pub profit: &'a [f64],
}

/// Column-major record of a simulation run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimTrace {
    pub channels: usize,
    pub horizon: usize,
    pub seed: u64,
    pub base_stock: Vec<f64>,
    start: Vec<f64>,
    order: Vec<f64>,
    primary: Vec<f64>,
    received: Vec<f64>,
    sales: Vec<f64>,
    lost: Vec<f64>,
    end: Vec<f64>,
    profit: Vec<f64>,
    pub summary: SimSummary,
}

/// Average period profit per channel after the warm-up.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimSummary {
    pub periods: usize,
    pub average_profit: Vec<f64>,
    pub std_error: Vec<f64>,
}

impl SimTrace {
    pub fn period(&self, t: usize) -> PeriodRecord<'_> {
        let r = t * self.channels..(t + 1) * self.channels;
        PeriodRecord {
            start: &self.start[r.clone()],
            order: &self.order[r.clone()],
            primary: &self.primary[r.clone()],
            received: &self.received[r.clone()],
            sales: &self.sales[r.clone()],
            lost: &self.lost[r.clone()],
            end: &self.end[r.clone()],
            profit: &self.profit[r],
        }
    }

    pub fn periods(&self) -> impl Iterator<Item = PeriodRecord<'_>> + '_ {
        (0..self.horizon).map(|t| self.period(t))
    }

    /// Period profits of channel `j` after the warm-up.
    pub fn profits(&self, j: usize) -> Vec<f64> {
        (WARM_UP.min(self.horizon)..self.horizon).map(|t| self.profit[t * self.channels + j]).collect()
    }

    /// Cumulative mean of channel `j`'s period profit, warm-up excluded.
    pub fn running_average(&self, j: usize) -> Vec<f64> {
        let mut sum = 0.0;
        self.profits(j)
            .into_iter()
            .enumerate()
            .map(|(k, p)| {
                sum += p;
                sum / (k + 1) as f64
            })
            .collect()
    }

    /// Means and standard errors of channel `j` over the two halves of the
    /// post-warm-up periods.
    pub fn halves(&self, j: usize) -> [(f64, f64); 2] {
        let p = self.profits(j);
        let (a, b) = p.split_at(p.len() / 2);
        [(mean(a), batch_means_se(a, SIM_BATCHES)), (mean(b), batch_means_se(b, SIM_BATCHES))]
    }
}

fn mean(v: &[f64]) -> f64 {
    mean_and_se(v).0
}

/// Runs `horizon` periods at base-stock levels `s`, starting with empty
/// shelves. Deterministic in the inputs and `seed`; period `t` draws the same
/// demand as row `t` of `model.sample(_, seed)`.
pub fn simulate(
    cfg: &MarketConfig,
    model: &DemandModel,
    s: &StockVector,
    horizon: usize,
    seed: u64,
) -> Result<SimTrace, SolveError> {
    cfg.check()?;
    let m = cfg.channels();
    model.check(m)?;
    s.conform(m)?;
    if horizon == 0 {
        return Err(SolveError::Scenario("horizon must be at least one period".into()));
    }
    let len = horizon * m;
    let mut tr = SimTrace {
        channels: m,
        horizon,
        seed,
        base_stock: s.as_slice().to_vec(),
        start: vec![0.0; len],
        order: vec![0.0; len],
        primary: vec![0.0; len],
        received: vec![0.0; len],
        sales: vec![0.0; len],
        lost: vec![0.0; len],
        end: vec![0.0; len],
        profit: vec![0.0; len],
        summary: SimSummary { periods: 0, average_profit: Vec::new(), std_error: Vec::new() },
    };
    let mut on_hand = vec![0.0; m];
    let mut unmet = vec![0.0; m];
    for t in 0..horizon {
        let r = t * m..(t + 1) * m;
        let base = r.start;
        model.draw_row(seed, t, &mut tr.primary[r]);
        for j in 0..m {
            tr.start[base + j] = on_hand[j];
            tr.order[base + j] = s[j] - on_hand[j];
            on_hand[j] = s[j];
            let d = tr.primary[base + j];
            let served = d.min(on_hand[j]);
            tr.sales[base + j] = served;
            on_hand[j] -= served;
            unmet[j] = d - served;
        }
        for k in 0..m {
            let arriving: f64 = (0..m).filter(|&j| j != k).map(|j| cfg.alpha[j][k] * unmet[j]).sum();
            let served = arriving.min(on_hand[k]);
            tr.received[base + k] = arriving;
            tr.sales[base + k] += served;
            on_hand[k] -= served;
            tr.lost[base + k] = tr.primary[base + k] + arriving - tr.sales[base + k];
            tr.end[base + k] = on_hand[k];
        }
        for j in 0..m {
            let lhs = tr.start[base + j] + tr.order[base + j] - tr.sales[base + j];
            assert!(
                (lhs - tr.end[base + j]).abs() <= 1e-9 * (1.0 + s[j]) && tr.end[base + j] >= 0.0,
                "flow conservation broken in period {t}, channel {j}"
            );
        }
        let mut pm = cfg.p_m * tr.sales[base] - cfg.c * tr.order[base] - cfg.h_m * tr.end[base];
        for i in 1..m {
            let k = base + i;
            pm += (cfg.w[i - 1] - cfg.c) * tr.order[k];
            tr.profit[k] = cfg.p_r[i - 1] * tr.sales[k] - cfg.w[i - 1] * tr.order[k] - cfg.h_r[i - 1] * tr.end[k];
        }
        tr.profit[base] = pm;
    }
    let (average_profit, std_error) = (0..m)
        .map(|j| {
            let p = tr.profits(j);
            (mean(&p), batch_means_se(&p, SIM_BATCHES))
        })
        .unzip();
    tr.summary = SimSummary { periods: horizon.saturating_sub(WARM_UP), average_profit, std_error };
    Ok(tr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeviationGain {
    pub level: f64,
    /// Average period profit of the deviating channel minus its profit at
    /// the reference stocks, same demand stream.
    pub gain: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeviationReport {
    pub channel: usize,
    pub baseline: f64,
    pub gains: Vec<DeviationGain>,
    /// Entry of `gains` with the largest gain; `None` without candidates.
    pub best: Option<DeviationGain>,
}

/// Simulates unilateral deviations of channel `j` to each candidate level
/// with the same demand stream as the reference run.
pub fn deviation_test(
    cfg: &MarketConfig,
    model: &DemandModel,
    s_star: &StockVector,
    j: usize,
    candidates: &[f64],
    horizon: usize,
    seed: u64,
) -> Result<DeviationReport, SolveError> {
    if j >= cfg.channels() {
        return Err(SolveError::ChannelIndex(j));
    }
    let reference = simulate(cfg, model, s_star, horizon, seed)?;
    let base = reference.profits(j);
    let mut gains = Vec::with_capacity(candidates.len());
    for &level in candidates {
        let s = StockVector::new(s_star.as_slice().to_vec())?.with(j, level);
        s.conform(cfg.channels())?;
        let run = simulate(cfg, model, &s, horizon, seed)?;
        let diff: Vec<f64> = run.profits(j).iter().zip(&base).map(|(a, b)| a - b).collect();
        gains.push(DeviationGain { level, gain: mean(&diff), std_error: batch_means_se(&diff, SIM_BATCHES) });
    }
    let best = gains.iter().copied().reduce(|a, b| if b.gain > a.gain { b } else { a });
    Ok(DeviationReport { channel: j, baseline: reference.summary.average_profit[j], gains, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::Marginal;
    use crate::oracle::{exact_profit, DiscreteScenario};
    use crate::profit::profit_unchecked;

    fn cfg1(a: f64) -> MarketConfig {
        MarketConfig {
            n: 1,
            c: 2.0,
            p_m: 10.0,
            h_m: 1.0,
            w: vec![5.0],
            p_r: vec![9.0],
            h_r: vec![1.0],
            alpha: vec![vec![0.0, a], vec![a, 0.0]],
        }
    }

    #[test]
    fn exact_stock_for_fixed_demand() {
        let model = DemandModel::independent(vec![
            Marginal::Discrete { points: vec![40.0], probs: vec![1.0] },
            Marginal::Discrete { points: vec![20.0], probs: vec![1.0] },
        ]);
        let s = StockVector::new(vec![40.0, 20.0]).unwrap();
        let tr = simulate(&cfg1(0.0), &model, &s, 50, 3).unwrap();
        for p in tr.periods().skip(1) {
            assert_eq!(p.sales, &[40.0, 20.0]);
            assert_eq!(p.end, &[0.0, 0.0]);
            assert_eq!(p.profit, &[8.0 * 40.0 + 3.0 * 20.0, 4.0 * 20.0]);
        }
        assert_eq!(tr.summary.average_profit, vec![380.0, 80.0]);
    }

    #[test]
    fn zero_stock_loses_everything() {
        let model = DemandModel::independent(vec![Marginal::Uniform { a: 0.0, b: 10.0 }; 2]);
        let tr = simulate(&cfg1(0.5), &model, &StockVector::zeros(2), 100, 1).unwrap();
        for p in tr.periods() {
            assert_eq!(p.profit, &[0.0, 0.0]);
            assert_eq!(p.sales, &[0.0, 0.0]);
        }
    }

    #[test]
    fn spill_received_is_bounded() {
        let model = DemandModel::independent(vec![Marginal::Exponential { rate: 0.05 }; 2]);
        let s = StockVector::new(vec![15.0, 25.0]).unwrap();
        let c = cfg1(0.6);
        let tr = simulate(&c, &model, &s, 2000, 9).unwrap();
        for p in tr.periods() {
            assert!(p.received[0] <= c.alpha[1][0] * p.primary[1] + 1e-12);
            assert!(p.received[1] <= c.alpha[0][1] * p.primary[0] + 1e-12);
            for j in 0..2 {
                assert_eq!(p.start[j] + p.order[j], s[j]);
            }
        }
    }

    #[test]
    fn demand_matches_sampleset_rows() {
        let model = DemandModel::independent(vec![Marginal::Lognormal { mu: 2.0, sigma: 0.5 }; 2]);
        let tr = simulate(&cfg1(0.3), &model, &StockVector::new(vec![5.0, 5.0]).unwrap(), 30, 17).unwrap();
        let samples = model.sample(30, 17).unwrap();
        for t in 0..30 {
            assert_eq!(tr.period(t).primary, samples.row(t));
        }
    }

    #[test]
    fn long_run_average_matches_exact_expectation() {
        let model = DemandModel::independent(vec![
            Marginal::Discrete { points: vec![5.0, 20.0, 35.0], probs: vec![0.2, 0.5, 0.3] },
            Marginal::Discrete { points: vec![10.0, 30.0], probs: vec![0.6, 0.4] },
        ]);
        let c = cfg1(0.4);
        let ds = DiscreteScenario::from_model(c.clone(), &model, vec![vec![0.0, 100.0]; 2]).unwrap();
        let s = StockVector::new(vec![22.0, 18.0]).unwrap();
        let exact = exact_profit(&ds, s.as_slice());
        let tr = simulate(&c, &model, &s, 100_000, 5).unwrap();
        for j in 0..2 {
            let (avg, se) = (tr.summary.average_profit[j], tr.summary.std_error[j]);
            assert!((avg - exact[j]).abs() <= 3.0 * se, "{j}: {avg} vs {} (se {se})", exact[j]);
        }
    }

    #[test]
    fn halves_agree() {
        let model = DemandModel::independent(vec![Marginal::Uniform { a: 0.0, b: 100.0 }; 2]);
        let tr = simulate(&cfg1(0.3), &model, &StockVector::new(vec![70.0, 60.0]).unwrap(), 40_000, 2).unwrap();
        for j in 0..2 {
            let [(m1, s1), (m2, s2)] = tr.halves(j);
            assert!((m1 - m2).abs() <= 3.0 * (s1 * s1 + s2 * s2).sqrt());
        }
    }

    #[test]
    fn static_estimate_on_same_draws_is_close() {
        let model = DemandModel::independent(vec![Marginal::Uniform { a: 0.0, b: 100.0 }; 2]);
        let c = cfg1(0.3);
        let s = StockVector::new(vec![70.0, 60.0]).unwrap();
        let tr = simulate(&c, &model, &s, 20_000, 4).unwrap();
        let samples = model.sample(20_000, 4).unwrap();
        for j in 0..2 {
            let stat = profit_unchecked(&c, &samples, s.as_slice(), j);
            // orders lag sales by one period, so only the boundary differs
            assert!((tr.summary.average_profit[j] - stat.value).abs() < 0.1);
        }
    }

    #[test]
    fn own_level_is_zero_gain() {
        let model = DemandModel::independent(vec![Marginal::Uniform { a: 0.0, b: 100.0 }; 2]);
        let s = StockVector::new(vec![70.0, 60.0]).unwrap();
        let r = deviation_test(&cfg1(0.0), &model, &s, 1, &[60.0, 80.0], 5_000, 8).unwrap();
        assert_eq!(r.gains[0].gain, 0.0);
        assert_eq!(r.best.unwrap().level, 80.0);
        assert!(deviation_test(&cfg1(0.0), &model, &s, 2, &[1.0], 10, 0).is_err());
    }
}
