//! Manufacturer-led Stackelberg game solved by backward induction: the
//! retailers' sub-game equilibrium is computed for each leader stock and the
//! leader optimises over the resulting response map.

use alloc::vec;
use alloc::vec::Vec;

use crate::demand::{composite_column, stock_ceiling, DemandModel, Dependence, SampleSet, StockVector};
use crate::error::SolveError;
use crate::exec;
use crate::market::{ConditionReport, MarketConfig};
use crate::nash::{nash_solve, retailer_response, EquilibriumReport, NashOptions};
use crate::profit::{profit_unchecked, ProfitEstimate};
use crate::stats::{self, Kde};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FollowerOptions {
    /// `None` means `1e-3` times the largest retailer stock ceiling.
    pub tol: Option<f64>,
    pub max_iter: usize,
}

impl Default for FollowerOptions {
    fn default() -> Self {
        FollowerOptions { tol: None, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FollowerEquilibrium {
    /// Retailer stocks, `n` entries.
    pub stocks: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<Vec<f64>>,
}

fn conform(cfg: &MarketConfig, samples: &SampleSet) -> Result<(), SolveError> {
    if samples.channels() != cfg.channels() {
        return Err(SolveError::StockLength { got: samples.channels(), expected: cfg.channels() });
    }
    Ok(())
}

fn follower_tol(opts: &FollowerOptions, ceiling: &[f64]) -> f64 {
    opts.tol.unwrap_or_else(|| 1e-3 * ceiling[1..].iter().copied().fold(0.0, f64::max))
}

pub(crate) fn followers_at(
    cfg: &MarketConfig,
    samples: &SampleSet,
    leader_stock: f64,
    ceiling: &[f64],
    tol: f64,
    max_iter: usize,
) -> FollowerEquilibrium {
    let mut s = ceiling.to_vec();
    s[0] = leader_stock;
    if cfg.n == 1 {
        s[1] = retailer_response(cfg, samples, &s, 1);
        return FollowerEquilibrium { stocks: vec![s[1]], converged: true, iterations: 1, trace: vec![vec![s[1]]] };
    }
    let mut trace = Vec::new();
    for iter in 1..=max_iter {
        let mut change: f64 = 0.0;
        for i in 1..=cfg.n {
            let br = retailer_response(cfg, samples, &s, i);
            change = change.max((br - s[i]).abs());
            s[i] = br;
        }
        trace.push(s[1..].to_vec());
        if change < tol {
            return FollowerEquilibrium { stocks: s[1..].to_vec(), converged: true, iterations: iter, trace };
        }
    }
    FollowerEquilibrium { stocks: s[1..].to_vec(), converged: false, iterations: max_iter, trace }
}

/// Retailers' equilibrium among themselves with the manufacturer's stock
/// pinned at `leader_stock`: Gauss–Seidel best responses started from the
/// retailers' stock ceilings.
pub fn follower_equilibrium(
    cfg: &MarketConfig,
    _model: &DemandModel,
    samples: &SampleSet,
    leader_stock: f64,
    opts: &FollowerOptions,
) -> Result<FollowerEquilibrium, SolveError> {
    conform(cfg, samples)?;
    let ceiling = stock_ceiling(cfg, samples);
    let tol = follower_tol(opts, &ceiling);
    Ok(followers_at(cfg, samples, leader_stock, &ceiling, tol, opts.max_iter))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SlopeEstimate {
    pub slope: f64,
    /// Batch-means standard error over disjoint blocks of draws.
    pub noise: f64,
    /// `4 * noise` exceeds a quarter, so the estimate cannot resolve the
    /// `[-1, 0]` range slopes live in.
    pub noise_dominated: bool,
}

const SLOPE_BATCHES: usize = 10;

fn slope_on(cfg: &MarketConfig, samples: &SampleSet, leader_stock: f64, i: usize, step: f64, opts: &FollowerOptions) -> f64 {
    let ceiling = stock_ceiling(cfg, samples);
    let tol = follower_tol(opts, &ceiling);
    let up = followers_at(cfg, samples, leader_stock + step, &ceiling, tol, opts.max_iter);
    let down = followers_at(cfg, samples, (leader_stock - step).max(0.0), &ceiling, tol, opts.max_iter);
    let width = leader_stock + step - (leader_stock - step).max(0.0);
    (up.stocks[i - 1] - down.stocks[i - 1]) / width
}

/// Central difference of retailer `i`'s follower stock in the leader's stock.
pub fn follower_slope(
    cfg: &MarketConfig,
    model: &DemandModel,
    samples: &SampleSet,
    leader_stock: f64,
    i: usize,
    step: f64,
    opts: &FollowerOptions,
) -> Result<SlopeEstimate, SolveError> {
    model.require_continuous()?;
    conform(cfg, samples)?;
    if i == 0 || i > cfg.n {
        return Err(SolveError::RetailerIndex(i));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(SolveError::Step);
    }
    let slope = slope_on(cfg, samples, leader_stock, i, step, opts);
    let n = samples.len();
    let batches = exec::map_indices(SLOPE_BATCHES, |b| {
        let part = samples.slice(b * n / SLOPE_BATCHES..(b + 1) * n / SLOPE_BATCHES);
        slope_on(cfg, &part, leader_stock, i, step, opts)
    });
    let (_, noise) = stats::mean_and_se(&batches);
    Ok(SlopeEstimate { slope, noise, noise_dominated: 4.0 * noise > 0.25 })
}

/// Ingredients of the sufficient condition for the follower response to
/// keep the leader objective concave, for one retailer.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvatureInputs {
    /// Substitution rate from the manufacturer to the retailer.
    pub alpha: f64,
    /// Density of the retailer's composite demand given the manufacturer's
    /// primary demand exceeds her stock, at the retailer's stock.
    pub cond_density: f64,
    pub cond_density_slope: f64,
    /// Unconditional composite-demand density at the retailer's stock.
    pub density: f64,
    /// Density of the manufacturer's primary demand at her stock.
    pub leader_density: f64,
    /// `P(primary_m > S_m)`.
    pub p_leader_short: f64,
    /// `P(D_r > S_r)`.
    pub p_follower_short: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvatureTerms {
    pub slope_term: f64,
    pub square_term: f64,
    pub leader_term: f64,
    /// `slope_term + square_term - leader_term`.
    pub value: f64,
}

impl CurvatureInputs {
    pub fn terms(&self) -> CurvatureTerms {
        let a = self.alpha;
        let short = self.p_leader_short;
        let slope_term =
            a * a * self.cond_density_slope * self.density * (1.0 - short) * short * self.p_follower_short;
        let square_term = a * a * self.cond_density * self.cond_density * short * short * self.density;
        let leader_term = a * self.density * self.leader_density * self.density * self.p_follower_short;
        CurvatureTerms { slope_term, square_term, leader_term, value: slope_term + square_term - leader_term }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvatureCheck {
    pub retailer: usize,
    pub inputs: CurvatureInputs,
    pub terms: CurvatureTerms,
    /// `terms.value >= 0`.
    pub holds: bool,
    /// Fewer than 1000 draws with the manufacturer short, or a degenerate
    /// kernel estimate.
    pub inconclusive: bool,
    pub c3_holds: bool,
}

/// Minimum number of conditioning draws for the conditional density.
pub const CURVATURE_MIN_ROWS: usize = 1000;

/// Evaluates the curvature expression for retailer `i` at `s`.
///
/// Composite-demand densities (conditional and unconditional) come from
/// Gaussian kernel estimates, the conditional density's slope from a central
/// difference of its kernel estimate, the leader's primary density from the
/// closed-form marginal when one exists, and probabilities from frequencies.
pub fn curvature_check(
    cfg: &MarketConfig,
    model: &DemandModel,
    samples: &SampleSet,
    s: &StockVector,
    i: usize,
) -> Result<CurvatureCheck, SolveError> {
    model.require_continuous()?;
    conform(cfg, samples)?;
    s.conform(cfg.channels())?;
    if i == 0 || i > cfg.n {
        return Err(SolveError::RetailerIndex(i));
    }
    let c3_holds = cfg.conditions().c3[i - 1].holds;
    let total = samples.len() as f64;
    let leader = s[0];
    let own = s[i];
    let demand = composite_column(cfg, samples, s.as_slice(), i);
    let cond: Vec<f64> = samples
        .rows()
        .zip(&demand)
        .filter(|(r, _)| r[0] > leader)
        .map(|(_, d)| *d)
        .collect();
    let p_leader_short = cond.len() as f64 / total;
    let p_follower_short = demand.iter().filter(|d| **d > own).count() as f64 / total;
    let leader_density = match (&model.dependence, model.marginals.first()) {
        (Dependence::Independent, Some(m)) => m.pdf(leader),
        _ => None,
    }
    .or_else(|| Kde::new(samples.column(0)).map(|k| k.density(leader)));

    let enough = cond.len() >= CURVATURE_MIN_ROWS;
    let cond_kde = if enough { Kde::new(cond) } else { None };
    let kde = Kde::new(demand);
    let (inputs, inconclusive) = match (cond_kde, kde, leader_density) {
        (Some(ck), Some(k), Some(fl)) => (
            CurvatureInputs {
                alpha: cfg.alpha[0][i],
                cond_density: ck.density(own),
                cond_density_slope: ck.density_derivative(own),
                density: k.density(own),
                leader_density: fl,
                p_leader_short,
                p_follower_short,
            },
            false,
        ),
        _ => (
            CurvatureInputs {
                alpha: cfg.alpha[0][i],
                cond_density: 0.0,
                cond_density_slope: 0.0,
                density: 0.0,
                leader_density: leader_density.unwrap_or(0.0),
                p_leader_short,
                p_follower_short,
            },
            true,
        ),
    };
    let terms = inputs.terms();
    Ok(CurvatureCheck { retailer: i, inputs, terms, holds: terms.value >= 0.0, inconclusive, c3_holds })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StackelbergOptions {
    pub grid_points: usize,
    /// Golden-section stopping width; `None` means `1e-3` times the largest
    /// stock ceiling.
    pub tol: Option<f64>,
    pub follower: FollowerOptions,
    /// Extra leader stocks evaluated alongside the grid.
    pub candidates: Vec<f64>,
}

impl Default for StackelbergOptions {
    fn default() -> Self {
        StackelbergOptions { grid_points: 64, tol: None, follower: FollowerOptions::default(), candidates: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvePoint {
    pub leader_stock: f64,
    pub profit: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StackelbergReport {
    pub leader_stock: f64,
    pub follower_stocks: Vec<f64>,
    pub leader_profit: ProfitEstimate,
    pub follower_profits: Vec<ProfitEstimate>,
    pub leader_profit_curve: Vec<CurvePoint>,
    /// Follower slope in the leader's stock at the optimum, per retailer.
    pub slope_estimates: Vec<SlopeEstimate>,
    pub curvature: Vec<CurvatureCheck>,
    pub curvature_flag: Vec<bool>,
    pub conditions: ConditionReport,
    /// The scanned leader objective has a single local maximum.
    pub quasiconcavity_flag: bool,
    /// Fractile mismatch of each follower at the optimum.
    pub follower_residuals: Vec<f64>,
    pub tol: f64,
}

impl StackelbergReport {
    pub fn stocks(&self) -> StockVector {
        let mut v = vec![self.leader_stock];
        v.extend_from_slice(&self.follower_stocks);
        StockVector::new(v).expect("nonnegative")
    }
}

struct Evaluator<'a> {
    cfg: &'a MarketConfig,
    samples: &'a SampleSet,
    ceiling: Vec<f64>,
    follower_tol: f64,
    max_iter: usize,
}

impl Evaluator<'_> {
    fn eval(&self, leader_stock: f64) -> Result<(ProfitEstimate, Vec<f64>), SolveError> {
        let f = followers_at(self.cfg, self.samples, leader_stock, &self.ceiling, self.follower_tol, self.max_iter);
        if !f.converged {
            return Err(SolveError::FollowerDiverged { leader_stock });
        }
        let mut s = vec![leader_stock];
        s.extend_from_slice(&f.stocks);
        Ok((profit_unchecked(self.cfg, self.samples, &s, 0), f.stocks))
    }
}

/// Indices of local maxima of `values`; a plateau counts once, at its first index.
fn local_maxima(values: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = values.len();
    let mut k = 0;
    while k < n {
        let mut end = k;
        while end + 1 < n && values[end + 1] == values[k] {
            end += 1;
        }
        let left_ok = k == 0 || values[k - 1] < values[k];
        let right_ok = end + 1 == n || values[end + 1] < values[k];
        if left_ok && right_ok {
            out.push(k);
        }
        k = end + 1;
    }
    out
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Scans the leader objective over an even grid on `[0, ceiling_m]`, then
/// refines around the best grid point by golden-section search (around
/// every local maximum when the scan is not unimodal) and keeps the best
/// point seen, preferring the lower stock on ties.
pub fn stackelberg_solve(
    cfg: &MarketConfig,
    model: &DemandModel,
    samples: &SampleSet,
    opts: &StackelbergOptions,
) -> Result<StackelbergReport, SolveError> {
    cfg.check()?;
    conform(cfg, samples)?;
    let ceiling = stock_ceiling(cfg, samples);
    let tol = opts.tol.unwrap_or_else(|| 1e-3 * ceiling.iter().copied().fold(0.0, f64::max));
    let ev = Evaluator {
        cfg,
        samples,
        follower_tol: follower_tol(&opts.follower, &ceiling),
        max_iter: opts.follower.max_iter,
        ceiling: ceiling.clone(),
    };
    let points = opts.grid_points.max(3);
    let top = ceiling[0];
    let grid: Vec<f64> = (0..points).map(|k| top * k as f64 / (points - 1) as f64).collect();
    let scanned = exec::map_indices(points, |k| ev.eval(grid[k]));
    let mut curve = Vec::with_capacity(points);
    let mut best: Option<(f64, ProfitEstimate, Vec<f64>)> = None;
    let consider = |x: f64, p: ProfitEstimate, f: Vec<f64>, best: &mut Option<(f64, ProfitEstimate, Vec<f64>)>| {
        let better = match best {
            None => true,
            Some((bx, bp, _)) => p.value > bp.value || (p.value == bp.value && x < *bx),
        };
        if better {
            *best = Some((x, p, f));
        }
    };
    for (k, r) in scanned.into_iter().enumerate() {
        let (p, f) = r?;
        curve.push(CurvePoint { leader_stock: grid[k], profit: p.value, std_error: p.std_error });
        consider(grid[k], p, f, &mut best);
    }
    let values: Vec<f64> = curve.iter().map(|c| c.profit).collect();
    let maxima = local_maxima(&values);
    let quasiconcavity_flag = maxima.len() == 1;

    for &k in &maxima {
        let mut lo = grid[k.saturating_sub(1)];
        let mut hi = grid[(k + 1).min(points - 1)];
        let mut x1 = hi - GOLDEN * (hi - lo);
        let mut x2 = lo + GOLDEN * (hi - lo);
        let (mut f1, s1) = ev.eval(x1)?;
        let (mut f2, s2) = ev.eval(x2)?;
        consider(x1, f1, s1, &mut best);
        consider(x2, f2, s2, &mut best);
        while hi - lo > tol {
            if f1.value >= f2.value {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - GOLDEN * (hi - lo);
                let (p, s) = ev.eval(x1)?;
                f1 = p;
                consider(x1, p, s, &mut best);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + GOLDEN * (hi - lo);
                let (p, s) = ev.eval(x2)?;
                f2 = p;
                consider(x2, p, s, &mut best);
            }
        }
    }
    for &x in &opts.candidates {
        if x.is_finite() && x >= 0.0 {
            let (p, s) = ev.eval(x)?;
            consider(x, p, s, &mut best);
        }
    }

    let (leader_stock, leader_profit, follower_stocks) = best.expect("grid is nonempty");
    let mut full = vec![leader_stock];
    full.extend_from_slice(&follower_stocks);
    let stocks = StockVector::new(full.clone()).expect("nonnegative");
    let follower_profits = (1..=cfg.n).map(|i| profit_unchecked(cfg, samples, &full, i)).collect();
    let follower_residuals = (1..=cfg.n)
        .map(|i| (retailer_response(cfg, samples, &full, i) - full[i]).abs())
        .collect();

    let (slope_estimates, curvature) = if model.is_continuous() {
        let step = 0.5 * top / (points - 1) as f64;
        let slopes = (1..=cfg.n)
            .map(|i| follower_slope(cfg, model, samples, leader_stock, i, step, &opts.follower))
            .collect::<Result<Vec<_>, _>>()?;
        let curv = (1..=cfg.n)
            .map(|i| curvature_check(cfg, model, samples, &stocks, i))
            .collect::<Result<Vec<_>, _>>()?;
        (slopes, curv)
    } else {
        (Vec::new(), Vec::new())
    };
    let curvature_flag = curvature.iter().map(|c| c.holds && !c.inconclusive).collect();

    Ok(StackelbergReport {
        leader_stock,
        follower_stocks,
        leader_profit,
        follower_profits,
        leader_profit_curve: curve,
        slope_estimates,
        curvature,
        curvature_flag,
        conditions: cfg.conditions(),
        quasiconcavity_flag,
        follower_residuals,
        tol,
    })
}

/// Side-by-side Nash and Stackelberg outcomes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GameComparison {
    pub nash: EquilibriumReport,
    pub stackelberg: StackelbergReport,
    pub leader_stock_minus_nash: f64,
    pub leader_profit_gain: f64,
    /// Leader keeps at least her Nash profit, up to four standard errors.
    pub leader_dominance: bool,
    /// Every wholesale price equals the production cost.
    pub wholesale_at_cost: bool,
    /// With wholesale at cost, the leader stocks at least her Nash level
    /// (up to `5 * tol`); `None` otherwise.
    pub leader_stocks_more: Option<bool>,
    pub tol: f64,
}

pub fn compare_games(
    cfg: &MarketConfig,
    model: &DemandModel,
    samples: &SampleSet,
    nash_opts: &NashOptions,
    stack_opts: &StackelbergOptions,
) -> Result<GameComparison, SolveError> {
    let nash = nash_solve(cfg, model, samples, nash_opts)?;
    let mut opts = stack_opts.clone();
    if opts.tol.is_none() {
        opts.tol = Some(nash.tol);
    }
    // the Nash leader stock is always available to the leader
    opts.candidates.push(nash.stocks[0]);
    let stackelberg = stackelberg_solve(cfg, model, samples, &opts)?;
    let tol = opts.tol.expect("set above");
    let leader_stock_minus_nash = stackelberg.leader_stock - nash.stocks[0];
    let leader_profit_gain = stackelberg.leader_profit.value - nash.profits[0].value;
    let leader_dominance = leader_profit_gain >= -4.0 * nash.profits[0].std_error;
    let wholesale_at_cost = cfg.w.iter().all(|w| *w == cfg.c);
    let leader_stocks_more = wholesale_at_cost.then_some(leader_stock_minus_nash >= -5.0 * tol);
    Ok(GameComparison {
        nash,
        stackelberg,
        leader_stock_minus_nash,
        leader_profit_gain,
        leader_dominance,
        wholesale_at_cost,
        leader_stocks_more,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::Marginal;

    fn uniform(n: usize) -> DemandModel {
        DemandModel::independent(vec![Marginal::Uniform { a: 0.0, b: 100.0 }; n + 1])
    }

    fn cfg2(alpha: Vec<Vec<f64>>) -> MarketConfig {
        MarketConfig {
            n: 2,
            c: 2.0,
            p_m: 10.0,
            h_m: 1.0,
            w: vec![5.0, 4.0],
            p_r: vec![9.0, 8.0],
            h_r: vec![1.0, 2.0],
            alpha,
        }
    }

    #[test]
    fn local_maxima_merge_plateaus() {
        assert_eq!(local_maxima(&[1.0, 2.0, 2.0, 1.0]), vec![1]);
        assert_eq!(local_maxima(&[1.0, 3.0, 1.0, 2.0, 0.0]), vec![1, 3]);
        assert_eq!(local_maxima(&[3.0, 2.0, 1.0]), vec![0]);
        assert_eq!(local_maxima(&[1.0, 1.0]), vec![0]);
    }

    #[test]
    fn decoupled_followers_ignore_leader() {
        let c = cfg2(vec![vec![0.0; 3]; 3]);
        let model = uniform(2);
        let samples = model.sample(50_000, 1).unwrap();
        let opts = FollowerOptions::default();
        let a = follower_equilibrium(&c, &model, &samples, 10.0, &opts).unwrap();
        let b = follower_equilibrium(&c, &model, &samples, 90.0, &opts).unwrap();
        assert_eq!(a.stocks, b.stocks);
        assert!((a.stocks[0] - 80.0).abs() < 1.0);
        assert!((a.stocks[1] - 200.0 / 3.0).abs() < 1.0);
    }

    #[test]
    fn single_follower_is_one_quantile() {
        let c = MarketConfig {
            n: 1,
            c: 2.0,
            p_m: 10.0,
            h_m: 1.0,
            w: vec![5.0],
            p_r: vec![9.0],
            h_r: vec![1.0],
            alpha: vec![vec![0.0, 0.5], vec![0.3, 0.0]],
        };
        let model = uniform(1);
        let samples = model.sample(20_000, 2).unwrap();
        let f = follower_equilibrium(&c, &model, &samples, 40.0, &FollowerOptions::default()).unwrap();
        let br = crate::nash::best_response_retailer(
            &c,
            &model,
            &samples,
            &StockVector::new(vec![40.0, 0.0]).unwrap(),
            1,
        )
        .unwrap();
        assert_eq!(f.stocks, vec![br]);
        assert_eq!(f.iterations, 1);
    }

    #[test]
    fn slope_zero_without_leader_spill() {
        let mut alpha = vec![vec![0.0; 3]; 3];
        alpha[1][2] = 0.3;
        alpha[2][1] = 0.3;
        alpha[1][0] = 0.4;
        let c = cfg2(alpha);
        let model = uniform(2);
        let samples = model.sample(50_000, 3).unwrap();
        for i in 1..=2 {
            let s = follower_slope(&c, &model, &samples, 50.0, i, 1.0, &FollowerOptions::default()).unwrap();
            assert_eq!(s.slope, 0.0);
        }
    }

    #[test]
    fn slope_within_substitution_band() {
        let alpha = vec![vec![0.0, 0.4, 0.3], vec![0.2, 0.0, 0.2], vec![0.2, 0.2, 0.0]];
        let c = cfg2(alpha.clone());
        let model = uniform(2);
        let samples = model.sample(100_000, 4).unwrap();
        for leader in [20.0, 50.0, 80.0] {
            for i in 1..=2 {
                let s = follower_slope(&c, &model, &samples, leader, i, 1.0, &FollowerOptions::default()).unwrap();
                assert!(!s.noise_dominated);
                assert!(s.slope <= 4.0 * s.noise && s.slope >= -alpha[0][i] - 4.0 * s.noise, "{s:?}");
            }
        }
    }

    #[test]
    fn curvature_vanishes_without_leader_spill() {
        let mut alpha = vec![vec![0.0; 3]; 3];
        alpha[1][0] = 0.3;
        let c = cfg2(alpha);
        let model = uniform(2);
        let samples = model.sample(20_000, 5).unwrap();
        let s = StockVector::new(vec![50.0, 60.0, 60.0]).unwrap();
        let chk = curvature_check(&c, &model, &samples, &s, 1).unwrap();
        assert_eq!(chk.terms.value, 0.0);
        assert!(chk.holds);
    }

    #[test]
    fn curvature_flat_density_reduces_to_two_terms() {
        let inputs = CurvatureInputs {
            alpha: 0.4,
            cond_density: 0.012,
            cond_density_slope: 0.0,
            density: 0.01,
            leader_density: 0.01,
            p_leader_short: 0.3,
            p_follower_short: 0.2,
        };
        let t = inputs.terms();
        assert_eq!(t.slope_term, 0.0);
        let square = 0.16 * 0.012 * 0.012 * 0.09 * 0.01;
        let leader = 0.4 * 0.01 * 0.01 * 0.01 * 0.2;
        assert!((t.value - (square - leader)).abs() < 1e-18);
    }

    #[test]
    fn curvature_needs_conditioning_rows() {
        let c = cfg2(vec![vec![0.0, 0.3, 0.3], vec![0.2, 0.0, 0.0], vec![0.2, 0.0, 0.0]]);
        let model = uniform(2);
        let samples = model.sample(20_000, 6).unwrap();
        // P(primary_m > 99) = 1%, about 200 rows
        let s = StockVector::new(vec![99.0, 60.0, 60.0]).unwrap();
        assert!(curvature_check(&c, &model, &samples, &s, 1).unwrap().inconclusive);
    }

    #[test]
    fn decoupled_stackelberg_equals_nash() {
        let c = cfg2(vec![vec![0.0; 3]; 3]);
        let model = uniform(2);
        let samples = model.sample(50_000, 7).unwrap();
        let cmp = compare_games(&c, &model, &samples, &NashOptions::default(), &StackelbergOptions::default()).unwrap();
        let st = cmp.stackelberg.stocks();
        for j in 0..3 {
            assert!((st[j] - cmp.nash.stocks[j]).abs() <= 5.0 * cmp.tol, "{j}: {st:?} vs {:?}", cmp.nash.stocks);
        }
        assert!(cmp.leader_dominance);
        assert!(cmp.stackelberg.quasiconcavity_flag);
    }
}
