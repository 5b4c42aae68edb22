//! Best responses and the simultaneous-move (Nash) equilibrium.

use alloc::vec;
use alloc::vec::Vec;

use crate::demand::{composite_channel, composite_column, stock_ceiling, DemandModel, SampleSet, StockVector};
use crate::error::SolveError;
use crate::market::MarketConfig;
use crate::profit::{self, fd_blocks, ProfitEstimate, BLOCKS};
use crate::stats;

fn conform(cfg: &MarketConfig, samples: &SampleSet, s: &StockVector) -> Result<(), SolveError> {
    s.conform(cfg.channels())?;
    if samples.channels() != cfg.channels() {
        return Err(SolveError::StockLength { got: samples.channels(), expected: cfg.channels() });
    }
    Ok(())
}

/// Retailer `i`'s best response (`1 <= i <= n`) to the other channels'
/// stocks in `s_others`; coordinate `i` is ignored.
///
/// The retailer's composite demand does not depend on its own stock, so the
/// best response is a direct empirical quantile at the critical fractile.
pub fn best_response_retailer(
    cfg: &MarketConfig,
    _model: &DemandModel,
    samples: &SampleSet,
    s_others: &StockVector,
    i: usize,
) -> Result<f64, SolveError> {
    if i == 0 || i > cfg.n {
        return Err(SolveError::RetailerIndex(i));
    }
    conform(cfg, samples, s_others)?;
    Ok(retailer_response(cfg, samples, s_others.as_slice(), i))
}

pub(crate) fn retailer_response(cfg: &MarketConfig, samples: &SampleSet, s: &[f64], i: usize) -> f64 {
    let mut d = composite_column(cfg, samples, s, i);
    stats::empirical_quantile(&mut d, cfg.retailer_fractile(i))
}

/// Outcome of the manufacturer's best-response root search.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ManufacturerResponse {
    pub level: f64,
    /// The first-order condition is already met at zero stock.
    pub corner: bool,
    /// The first-order condition is still unmet at the stock ceiling.
    pub non_bracketing: bool,
}

/// Empirical first-order condition of the manufacturer for fixed retailer
/// stocks, prepared for repeated evaluation in `S_m`.
///
/// `phi(S) = (p_m - c + h_m) P(D_m <= S) - (p_m - c)
///           + sum_i alpha_mi (w_i - c) P(D_ri <= s_i, primary_m > S)`
struct ManufacturerFoc {
    overage: f64,
    margin: f64,
    /// Sorted composite demand of the manufacturer (independent of `S_m`).
    own: Vec<f64>,
    /// Per retailer: weight and the sorted endpoints of the half-open
    /// `S_m`-intervals on which each row's joint event holds.
    spill: Vec<(f64, Vec<f64>, Vec<f64>)>,
    total: f64,
}

impl ManufacturerFoc {
    fn new(cfg: &MarketConfig, samples: &SampleSet, s: &[f64]) -> Self {
        let mut own = composite_column(cfg, samples, s, 0);
        own.sort_unstable_by(|a, b| a.total_cmp(b));
        let mut spill = Vec::new();
        for i in 1..=cfg.n {
            let a = cfg.alpha[0][i];
            let weight = a * (cfg.w[i - 1] - cfg.c);
            if a == 0.0 || weight == 0.0 {
                continue;
            }
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            for row in samples.rows() {
                // composite demand of retailer i without the manufacturer's spill
                let mut base = row[i];
                for k in 1..row.len() {
                    if k != i && row[k] > s[k] {
                        base += cfg.alpha[k][i] * (row[k] - s[k]);
                    }
                }
                let room = s[i] - base;
                if room < 0.0 {
                    continue;
                }
                // base + a (x - S) <= s_i with x > S  <=>  x - room / a <= S < x
                lo.push(row[0] - room / a);
                hi.push(row[0]);
            }
            lo.sort_unstable_by(|x, y| x.total_cmp(y));
            hi.sort_unstable_by(|x, y| x.total_cmp(y));
            spill.push((weight, lo, hi));
        }
        ManufacturerFoc {
            overage: cfg.p_m - cfg.c + cfg.h_m,
            margin: cfg.p_m - cfg.c,
            own,
            spill,
            total: samples.len() as f64,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let at_most = |v: &Vec<f64>| v.partition_point(|&p| p <= x) as f64;
        let mut phi = self.overage * at_most(&self.own) / self.total - self.margin;
        for (weight, lo, hi) in &self.spill {
            phi += weight * (at_most(lo) - at_most(hi)) / self.total;
        }
        phi
    }
}

pub(crate) fn manufacturer_response(cfg: &MarketConfig, samples: &SampleSet, s: &[f64], ceiling: f64) -> ManufacturerResponse {
    let foc = ManufacturerFoc::new(cfg, samples, s);
    if foc.eval(0.0) >= 0.0 {
        return ManufacturerResponse { level: 0.0, corner: true, non_bracketing: false };
    }
    if foc.eval(ceiling) < 0.0 {
        return ManufacturerResponse { level: ceiling, corner: false, non_bracketing: true };
    }
    let (mut lo, mut hi) = (0.0_f64, ceiling);
    for _ in 0..200 {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if foc.eval(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    ManufacturerResponse { level: hi, corner: false, non_bracketing: false }
}

/// Manufacturer's best response to the retailers' stocks in `s_others`
/// (coordinate 0 is ignored): the smallest `S_m` where the empirical
/// first-order condition turns nonnegative, found by bisection on
/// `[0, ceiling]` with `ceiling` the largest zero-stock composite demand.
pub fn best_response_manufacturer(
    cfg: &MarketConfig,
    _model: &DemandModel,
    samples: &SampleSet,
    s_others: &StockVector,
) -> Result<ManufacturerResponse, SolveError> {
    conform(cfg, samples, s_others)?;
    let ceiling = stock_ceiling(cfg, samples)[0];
    Ok(manufacturer_response(cfg, samples, s_others.as_slice(), ceiling))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NashOptions {
    /// Convergence tolerance on the largest componentwise change; `None`
    /// means `1e-3` times the largest stock ceiling.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Weight on the new best response, in `(0, 1]`.
    pub damping: f64,
}

impl Default for NashOptions {
    fn default() -> Self {
        NashOptions { tol: None, max_iter: 200, damping: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Uniqueness {
    ProvenByC2,
    BracketCoincide,
    MultipleDetected,
    Unknown,
}

/// Limits of the two best-response runs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Bracket {
    pub from_zero: StockVector,
    pub from_upper: StockVector,
}

impl Bracket {
    pub fn lower(&self) -> Vec<f64> {
        self.from_zero.as_slice().iter().zip(self.from_upper.as_slice()).map(|(a, b)| a.min(*b)).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.from_zero.as_slice().iter().zip(self.from_upper.as_slice()).map(|(a, b)| a.max(*b)).collect()
    }

    pub fn gap(&self) -> f64 {
        self.lower().iter().zip(self.upper()).map(|(a, b)| b - a).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquilibriumReport {
    pub stocks: StockVector,
    pub profits: Vec<ProfitEstimate>,
    /// `|best response - stock|` per channel at `stocks`.
    pub residuals: Vec<f64>,
    /// Iterates of the run started from the stock ceilings.
    pub trace: Vec<StockVector>,
    pub bracket: Bracket,
    pub unique_flag: Uniqueness,
    pub converged: bool,
    pub tol: f64,
    pub iterations: usize,
    /// Per-channel stock ceilings used as the upper start.
    pub ceiling: Vec<f64>,
    /// C1 fails, so manufacturer concavity is not guaranteed.
    pub c1_violated: bool,
    pub manufacturer_corner: bool,
}

struct Run {
    limit: Vec<f64>,
    trace: Vec<StockVector>,
    converged: bool,
    iterations: usize,
}

fn gauss_seidel(cfg: &MarketConfig, samples: &SampleSet, start: Vec<f64>, ceiling: &[f64], tol: f64, opts: &NashOptions) -> Run {
    let lambda = opts.damping;
    let mut s = start;
    let mut trace = Vec::new();
    for iter in 1..=opts.max_iter {
        let prev = s.clone();
        let br = manufacturer_response(cfg, samples, &s, ceiling[0]).level;
        s[0] = (1.0 - lambda) * s[0] + lambda * br;
        for i in 1..=cfg.n {
            let br = retailer_response(cfg, samples, &s, i);
            s[i] = (1.0 - lambda) * s[i] + lambda * br;
        }
        trace.push(StockVector::new(s.clone()).expect("nonnegative"));
        let change = s.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if change < tol {
            return Run { limit: s, trace, converged: true, iterations: iter };
        }
    }
    Run { limit: s, trace, converged: false, iterations: opts.max_iter }
}

/// `|BR_j(s) - s_j|` for every channel.
pub fn residuals(cfg: &MarketConfig, samples: &SampleSet, s: &StockVector) -> Vec<f64> {
    let ceiling = stock_ceiling(cfg, samples);
    residuals_with(cfg, samples, s.as_slice(), &ceiling)
}

fn residuals_with(cfg: &MarketConfig, samples: &SampleSet, s: &[f64], ceiling: &[f64]) -> Vec<f64> {
    (0..cfg.channels())
        .map(|j| {
            let br = if j == 0 {
                manufacturer_response(cfg, samples, s, ceiling[0]).level
            } else {
                retailer_response(cfg, samples, s, j)
            };
            (br - s[j]).abs()
        })
        .collect()
}

/// Gauss–Seidel best-response iteration (manufacturer first, then retailers
/// in index order) from the all-zero point and from the stock ceilings.
/// The run from above is reported as the equilibrium; both limits form the
/// bracket.
pub fn nash_solve(
    cfg: &MarketConfig,
    _model: &DemandModel,
    samples: &SampleSet,
    opts: &NashOptions,
) -> Result<EquilibriumReport, SolveError> {
    cfg.check()?;
    if samples.channels() != cfg.channels() {
        return Err(SolveError::StockLength { got: samples.channels(), expected: cfg.channels() });
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(SolveError::Step);
    }
    let ceiling = stock_ceiling(cfg, samples);
    let tol = opts.tol.unwrap_or_else(|| 1e-3 * ceiling.iter().copied().fold(0.0, f64::max));
    let m = cfg.channels();

    let low = gauss_seidel(cfg, samples, vec![0.0; m], &ceiling, tol, opts);
    let high = gauss_seidel(cfg, samples, ceiling.clone(), &ceiling, tol, opts);

    let stocks = high.limit.clone();
    let residuals = residuals_with(cfg, samples, &stocks, &ceiling);
    let profits = (0..m).map(|j| profit::profit_unchecked(cfg, samples, &stocks, j)).collect();
    let bracket = Bracket {
        from_zero: StockVector::new(low.limit).expect("nonnegative"),
        from_upper: StockVector::new(high.limit).expect("nonnegative"),
    };
    let conditions = cfg.conditions();
    let converged = low.converged && high.converged;
    let unique_flag = if !converged {
        Uniqueness::Unknown
    } else if conditions.c2.holds {
        Uniqueness::ProvenByC2
    } else if bracket.gap() <= 5.0 * tol {
        Uniqueness::BracketCoincide
    } else {
        Uniqueness::MultipleDetected
    };
    let manufacturer_corner = manufacturer_response(cfg, samples, &stocks, ceiling[0]).corner;
    Ok(EquilibriumReport {
        stocks: StockVector::new(stocks).expect("nonnegative"),
        profits,
        residuals,
        trace: high.trace,
        bracket,
        unique_flag,
        converged,
        tol,
        iterations: high.iterations.max(low.iterations),
        ceiling,
        c1_violated: !conditions.c1.holds,
        manufacturer_corner,
    })
}

/// Largest eigenvalue of `H + H^T`, where row `j` of `H` holds the second
/// partials of player `j`'s profit in its own stock and the others'.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UniquenessDiagnostic {
    pub jacobian: Vec<Vec<f64>>,
    pub symmetrized: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub largest: f64,
    /// Delete-a-block jackknife standard error of `largest`.
    pub jackknife_se: f64,
    /// `|largest| <= 4 * jackknife_se`.
    pub inconclusive: bool,
}

impl UniquenessDiagnostic {
    pub fn negative_definite(&self) -> bool {
        !self.inconclusive && self.largest < 0.0
    }
}

fn largest_symmetric(h: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m = h.len();
    let sym: Vec<Vec<f64>> = (0..m).map(|a| (0..m).map(|b| h[a][b] + h[b][a]).collect()).collect();
    let eig = stats::symmetric_eigenvalues(&sym);
    (sym, eig)
}

pub fn uniqueness_diagnostic(
    cfg: &MarketConfig,
    model: &DemandModel,
    samples: &SampleSet,
    s: &StockVector,
) -> Result<UniquenessDiagnostic, SolveError> {
    model.require_continuous()?;
    conform(cfg, samples, s)?;
    let m = cfg.channels();
    let steps = profit::default_fd_steps(cfg, samples, s);
    let per_player: Vec<_> = (0..m).map(|j| fd_blocks(cfg, samples, j, s.as_slice(), &steps)).collect();
    let rows_of = |means: &dyn Fn(usize) -> Vec<f64>| -> Vec<Vec<f64>> {
        (0..m).map(|j| means(j)[j * m..(j + 1) * m].to_vec()).collect()
    };
    let jacobian = rows_of(&|j| per_player[j].total().iter().map(|mo| mo.mean()).collect());
    let (symmetrized, eigenvalues) = largest_symmetric(&jacobian);
    let largest = *eigenvalues.last().expect("nonempty");

    let groups = per_player[0].blocks.len();
    let leave_out: Vec<f64> = (0..groups)
        .map(|g| {
            let h = rows_of(&|j| per_player[j].leave_out(g));
            *largest_symmetric(&h).1.last().expect("nonempty")
        })
        .collect();
    let g = groups as f64;
    let mean = leave_out.iter().sum::<f64>() / g;
    let jackknife_se = libm::sqrt((g - 1.0) / g * leave_out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>());
    debug_assert!(groups <= BLOCKS);
    Ok(UniquenessDiagnostic {
        jacobian,
        symmetrized,
        eigenvalues,
        largest,
        jackknife_se,
        inconclusive: libm::fabs(largest) <= 4.0 * jackknife_se,
    })
}

/// Empirical CDF of retailer `i`'s composite demand at its own stock.
pub fn retailer_service_level(cfg: &MarketConfig, samples: &SampleSet, s: &StockVector, i: usize) -> f64 {
    let hits = samples
        .rows()
        .filter(|r| composite_channel(cfg, s.as_slice(), r, i) <= s[i])
        .count();
    hits as f64 / samples.len() as f64
}
