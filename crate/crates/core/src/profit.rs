//! Sample-average profits, their first partials, and finite-difference
//! second partials, all on one shared [`SampleSet`].
//!
//! Because every evaluation reuses the same draws, each estimate is a
//! deterministic, piecewise-linear function of the stock vector.

use alloc::vec;
use alloc::vec::Vec;

use crate::demand::{composite_channel, composite_column, composite_into, DemandModel, SampleSet, StockVector};
use crate::error::SolveError;
use crate::exec;
use crate::market::MarketConfig;
use crate::stats;

/// Number of fixed row blocks used for reductions and jackknife groups.
pub(crate) const BLOCKS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProfitEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_draws: usize,
}

/// Running first and second moments, merged block by block.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    pub sum: f64,
    pub sum_sq: f64,
    pub count: usize,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
        self.count += 1;
    }

    pub fn merge(mut self, other: &Moments) -> Moments {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.count += other.count;
        self
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let mean = self.mean();
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        libm::sqrt(var / n)
    }

    pub fn estimate(&self) -> ProfitEstimate {
        ProfitEstimate { value: self.mean(), std_error: self.std_error(), n_draws: self.count }
    }
}

/// One-row profit of channel `j` at stocks `s`; `scratch` holds composite
/// demand and must have one slot per channel.
#[inline]
pub fn row_profit(cfg: &MarketConfig, s: &[f64], primary: &[f64], j: usize, scratch: &mut [f64]) -> f64 {
    if j == 0 {
        composite_into(cfg, s, primary, scratch);
        let mut v = (cfg.p_m - cfg.c) * s[0] - (cfg.p_m - cfg.c + cfg.h_m) * (s[0] - scratch[0]).max(0.0);
        for k in 1..=cfg.n {
            let m = cfg.w[k - 1] - cfg.c;
            v += m * s[k] - m * (s[k] - scratch[k]).max(0.0);
        }
        v
    } else {
        let d = composite_channel(cfg, s, primary, j);
        let under = cfg.p_r[j - 1] - cfg.w[j - 1];
        under * s[j] - (under + cfg.h_r[j - 1]) * (s[j] - d).max(0.0)
    }
}

fn check_inputs(cfg: &MarketConfig, samples: &SampleSet, s: &StockVector) -> Result<(), SolveError> {
    s.conform(cfg.channels())?;
    if samples.channels() != cfg.channels() {
        return Err(SolveError::StockLength { got: samples.channels(), expected: cfg.channels() });
    }
    Ok(())
}

/// Expected profit of channel `j` (0 = manufacturer).
pub fn profit(cfg: &MarketConfig, samples: &SampleSet, s: &StockVector, j: usize) -> Result<ProfitEstimate, SolveError> {
    check_inputs(cfg, samples, s)?;
    if j > cfg.n {
        return Err(SolveError::ChannelIndex(j));
    }
    Ok(profit_unchecked(cfg, samples, s.as_slice(), j))
}

pub(crate) fn profit_unchecked(cfg: &MarketConfig, samples: &SampleSet, s: &[f64], j: usize) -> ProfitEstimate {
    let blocks = exec::map_blocks(samples.len(), BLOCKS, |range| {
        let mut scratch = vec![0.0; cfg.channels()];
        let mut m = Moments::default();
        for t in range {
            m.push(row_profit(cfg, s, samples.row(t), j, &mut scratch));
        }
        m
    });
    blocks.iter().fold(Moments::default(), |acc, b| acc.merge(b)).estimate()
}

/// Manufacturer's expected profit: her own channel plus the wholesale
/// margin on every unit the retailers stock and sell.
pub fn profit_manufacturer(
    cfg: &MarketConfig,
    _model: &DemandModel,
    samples: &SampleSet,
    s: &StockVector,
) -> Result<ProfitEstimate, SolveError> {
    profit(cfg, samples, s, 0)
}

/// Retailer `i`'s expected profit, `1 <= i <= n`.
pub fn profit_retailer(
    cfg: &MarketConfig,
    _model: &DemandModel,
    samples: &SampleSet,
    s: &StockVector,
    i: usize,
) -> Result<ProfitEstimate, SolveError> {
    if i == 0 || i > cfg.n {
        return Err(SolveError::RetailerIndex(i));
    }
    profit(cfg, samples, s, i)
}

/// Analytic gradient of the manufacturer's expected profit with every
/// probability replaced by its empirical frequency on `samples`.
///
/// Events on the left of a conjunction use `<=`, primary-demand events on
/// the right use strict `>`.
pub fn grad_manufacturer(
    cfg: &MarketConfig,
    model: &DemandModel,
    samples: &SampleSet,
    s: &StockVector,
) -> Result<Vec<f64>, SolveError> {
    model.require_continuous()?;
    check_inputs(cfg, samples, s)?;
    Ok(grad_manufacturer_unchecked(cfg, samples, s.as_slice()))
}

pub(crate) fn grad_manufacturer_unchecked(cfg: &MarketConfig, samples: &SampleSet, s: &[f64]) -> Vec<f64> {
    let m = cfg.channels();
    let n = cfg.n;
    // counts[0] = #{D_m <= S_m}
    // counts[k], k>=1: #{D_k <= S_k, primary_m > S_m}
    // cross[i][l]: #{D_l <= S_l, primary_i > S_i}, i >= 1
    // over[i] = #{D_i > S_i}, i >= 1
    let tallies = exec::map_blocks(samples.len(), BLOCKS, |range| {
        let mut d = vec![0.0; m];
        let mut cross = vec![0u64; m * m];
        let mut over = vec![0u64; m];
        for t in range {
            let row = samples.row(t);
            composite_into(cfg, s, row, &mut d);
            for src in 0..m {
                let spilled = row[src] > s[src];
                for dst in 0..m {
                    if d[dst] <= s[dst] && (src == dst || spilled) {
                        cross[src * m + dst] += 1;
                    }
                }
            }
            for i in 1..m {
                if d[i] > s[i] {
                    over[i] += 1;
                }
            }
        }
        (cross, over)
    });
    let mut cross = vec![0u64; m * m];
    let mut over = vec![0u64; m];
    for (c, o) in &tallies {
        for (a, b) in cross.iter_mut().zip(c) {
            *a += b;
        }
        for (a, b) in over.iter_mut().zip(o) {
            *a += b;
        }
    }
    let total = samples.len() as f64;
    let freq = |src: usize, dst: usize| cross[src * m + dst] as f64 / total;
    let overage = cfg.p_m - cfg.c + cfg.h_m;

    let mut grad = vec![0.0; m];
    grad[0] = (cfg.p_m - cfg.c) - overage * freq(0, 0)
        - (1..=n).map(|i| cfg.alpha[0][i] * (cfg.w[i - 1] - cfg.c) * freq(0, i)).sum::<f64>();
    for i in 1..=n {
        let spill_to_others: f64 = (1..=n)
            .filter(|&l| l != i)
            .map(|l| cfg.alpha[i][l] * (cfg.w[l - 1] - cfg.c) * freq(i, l))
            .sum();
        grad[i] = -cfg.alpha[i][0] * overage * freq(i, 0) + (cfg.w[i - 1] - cfg.c) * (over[i] as f64 / total)
            - spill_to_others;
    }
    grad
}

/// Default finite-difference step per channel: 1% of the interquartile
/// range of that channel's composite demand at `s`.
pub fn default_fd_steps(cfg: &MarketConfig, samples: &SampleSet, s: &StockVector) -> Vec<f64> {
    (0..cfg.channels())
        .map(|j| {
            let mut col = composite_column(cfg, samples, s.as_slice(), j);
            let step = 1e-2 * stats::iqr(&mut col);
            if step > 0.0 {
                step
            } else {
                1e-2
            }
        })
        .collect()
}

/// Finite-difference second partials of one channel's profit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Hessian {
    /// `value[a][b]` estimates the second partial of the selected profit in
    /// stocks `a` and `b`.
    pub value: Vec<Vec<f64>>,
    pub std_error: Vec<Vec<f64>>,
    pub steps: Vec<f64>,
    /// Some step is under a tenth of the kernel-density bandwidth of its
    /// channel's composite demand.
    pub noise_dominated: bool,
}

/// Per-entry moments of the row-level difference quotients, one set per
/// row block so leave-one-block-out estimates are cheap.
pub(crate) struct FdBlocks {
    pub blocks: Vec<Vec<Moments>>,
}

impl FdBlocks {
    pub fn total(&self) -> Vec<Moments> {
        let len = self.blocks[0].len();
        (0..len)
            .map(|e| self.blocks.iter().fold(Moments::default(), |acc, b| acc.merge(&b[e])))
            .collect()
    }

    pub fn leave_out(&self, g: usize) -> Vec<f64> {
        let len = self.blocks[0].len();
        (0..len)
            .map(|e| {
                self.blocks
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| *b != g)
                    .fold(Moments::default(), |acc, (_, b)| acc.merge(&b[e]))
                    .mean()
            })
            .collect()
    }
}

/// Row-level central differences for every (a, b) entry of channel `j`'s
/// Hessian, entries stored row-major.
pub(crate) fn fd_blocks(cfg: &MarketConfig, samples: &SampleSet, j: usize, s: &[f64], steps: &[f64]) -> FdBlocks {
    let m = cfg.channels();
    let blocks = exec::map_blocks(samples.len(), BLOCKS, |range| {
        let mut scratch = vec![0.0; m];
        let mut point = s.to_vec();
        let mut acc = vec![Moments::default(); m * m];
        let mut eval = |point: &[f64], row: &[f64]| row_profit(cfg, point, row, j, &mut scratch);
        for t in range {
            let row = samples.row(t);
            let base = eval(s, row);
            for a in 0..m {
                let ha = steps[a];
                point[a] = s[a] + ha;
                let up = eval(&point, row);
                point[a] = s[a] - ha;
                let down = eval(&point, row);
                point[a] = s[a];
                acc[a * m + a].push((up - 2.0 * base + down) / (ha * ha));
                for b in a + 1..m {
                    let hb = steps[b];
                    let mut corner = |da: f64, db: f64| {
                        point[a] = s[a] + da;
                        point[b] = s[b] + db;
                        let v = eval(&point, row);
                        point[a] = s[a];
                        point[b] = s[b];
                        v
                    };
                    let q = (corner(ha, hb) - corner(ha, -hb) - corner(-ha, hb) + corner(-ha, -hb)) / (4.0 * ha * hb);
                    acc[a * m + b].push(q);
                    acc[b * m + a].push(q);
                }
            }
        }
        acc
    });
    FdBlocks { blocks }
}

fn noise_dominated(cfg: &MarketConfig, samples: &SampleSet, s: &[f64], steps: &[f64]) -> bool {
    steps.iter().enumerate().any(|(a, &h)| {
        stats::Kde::new(composite_column(cfg, samples, s, a)).is_some_and(|kde| h < 0.1 * kde.bandwidth())
    })
}

/// Central finite-difference Hessian of channel `j`'s profit. `steps`
/// defaults to [`default_fd_steps`].
pub fn hessian_fd(
    cfg: &MarketConfig,
    model: &DemandModel,
    samples: &SampleSet,
    j: usize,
    s: &StockVector,
    steps: Option<&[f64]>,
) -> Result<Hessian, SolveError> {
    model.require_continuous()?;
    check_inputs(cfg, samples, s)?;
    if j > cfg.n {
        return Err(SolveError::ChannelIndex(j));
    }
    let steps = match steps {
        Some(h) => {
            if h.len() != cfg.channels() || h.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(SolveError::Step);
            }
            h.to_vec()
        }
        None => default_fd_steps(cfg, samples, s),
    };
    let m = cfg.channels();
    let total = fd_blocks(cfg, samples, j, s.as_slice(), &steps).total();
    let value = (0..m).map(|a| (0..m).map(|b| total[a * m + b].mean()).collect()).collect();
    let std_error = (0..m).map(|a| (0..m).map(|b| total[a * m + b].std_error()).collect()).collect();
    let noise_dominated = noise_dominated(cfg, samples, s.as_slice(), &steps);
    Ok(Hessian { value, std_error, steps, noise_dominated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::Marginal;

    fn cfg(alpha01: f64, alpha10: f64) -> MarketConfig {
        MarketConfig {
            n: 1,
            c: 2.0,
            p_m: 10.0,
            h_m: 1.0,
            w: vec![5.0],
            p_r: vec![9.0],
            h_r: vec![1.0],
            alpha: vec![vec![0.0, alpha01], vec![alpha10, 0.0]],
        }
    }

    fn uniform_model() -> DemandModel {
        DemandModel::independent(vec![Marginal::Uniform { a: 0.0, b: 100.0 }; 2])
    }

    #[test]
    fn zero_stock_zero_profit() {
        let c = cfg(0.3, 0.4);
        let samples = uniform_model().sample(1000, 1).unwrap();
        let s = StockVector::zeros(2);
        for j in 0..2 {
            let p = profit(&c, &samples, &s, j).unwrap();
            assert_eq!(p.value, 0.0);
            assert_eq!(p.std_error, 0.0);
        }
    }

    #[test]
    fn deterministic_demand_without_overage() {
        let c = cfg(0.0, 0.0);
        let samples = SampleSet::from_rows(&vec![vec![40.0, 20.0]; 10], 0).unwrap();
        let s = StockVector::new(vec![40.0, 20.0]).unwrap();
        let p = profit(&c, &samples, &s, 0).unwrap();
        assert_eq!(p.value, 380.0);
        assert_eq!(p.std_error, 0.0);
    }

    #[test]
    fn uniform_newsvendor_closed_form() {
        // 4 * 80 - 5 * E(80 - U)^+ with U ~ U(0, 100) = 320 - 5 * 32 = 160
        let c = cfg(0.0, 0.0);
        let model = uniform_model();
        let samples = model.sample(200_000, 2).unwrap();
        let s = StockVector::new(vec![0.0, 80.0]).unwrap();
        let p = profit_retailer(&c, &model, &samples, &s, 1).unwrap();
        assert!((p.value - 160.0).abs() < 4.0 * p.std_error, "{p:?}");
    }

    #[test]
    fn retailer_index_checked() {
        let c = cfg(0.0, 0.0);
        let model = uniform_model();
        let samples = model.sample(10, 2).unwrap();
        let s = StockVector::zeros(2);
        assert_eq!(profit_retailer(&c, &model, &samples, &s, 0), Err(SolveError::RetailerIndex(0)));
        assert_eq!(profit_retailer(&c, &model, &samples, &s, 2), Err(SolveError::RetailerIndex(2)));
    }

    #[test]
    fn decoupled_gradient_is_newsvendor_condition() {
        let c = cfg(0.0, 0.0);
        let model = uniform_model();
        let samples = model.sample(50_000, 3).unwrap();
        let s = StockVector::new(vec![60.0, 30.0]).unwrap();
        let g = grad_manufacturer(&c, &model, &samples, &s).unwrap();
        let frac = samples.rows().filter(|r| r[0] <= 60.0).count() as f64 / 50_000.0;
        assert!((g[0] - (8.0 - 9.0 * frac)).abs() < 1e-12);
    }

    #[test]
    fn gradient_at_zero_dominates_c2_slack() {
        let c = cfg(0.3, 0.4);
        let model = uniform_model();
        let samples = model.sample(20_000, 4).unwrap();
        let g = grad_manufacturer(&c, &model, &samples, &StockVector::zeros(2)).unwrap();
        assert!(g[0] >= c.conditions().c2.slack - 1e-12);
    }

    #[test]
    fn gradient_rejects_discrete_demand() {
        let c = cfg(0.3, 0.4);
        let model = DemandModel::independent(vec![
            Marginal::Discrete { points: vec![1.0, 2.0], probs: vec![0.5, 0.5] },
            Marginal::Uniform { a: 0.0, b: 1.0 },
        ]);
        let samples = model.sample(10, 4).unwrap();
        assert_eq!(
            grad_manufacturer(&c, &model, &samples, &StockVector::zeros(2)),
            Err(SolveError::DiscreteDemand)
        );
    }

    #[test]
    fn decoupled_hessian_has_no_cross_terms() {
        let c = cfg(0.0, 0.0);
        let model = uniform_model();
        let samples = model.sample(50_000, 5).unwrap();
        let s = StockVector::new(vec![50.0, 50.0]).unwrap();
        for j in 0..2 {
            let h = hessian_fd(&c, &model, &samples, j, &s, None).unwrap();
            assert!(h.value[0][1].abs() < 1e-9);
            assert!(h.value[1][0].abs() < 1e-9);
            assert!(h.value[j][j] < 0.0);
            assert!(!h.noise_dominated);
        }
    }

    #[test]
    fn tiny_step_is_flagged() {
        let c = cfg(0.2, 0.2);
        let model = uniform_model();
        let samples = model.sample(20_000, 5).unwrap();
        let s = StockVector::new(vec![50.0, 50.0]).unwrap();
        let h = hessian_fd(&c, &model, &samples, 0, &s, Some(&[1e-3, 1e-3])).unwrap();
        assert!(h.noise_dominated);
        assert_eq!(hessian_fd(&c, &model, &samples, 0, &s, Some(&[0.0, 1.0])), Err(SolveError::Step));
    }
}
