//! Seeded scenario corpora and the property checks run over them.
//!
//! Every corpus is a pure function of [`Settings::seed`], so a failing
//! check can be replayed exactly.

use std::fmt;

use invgame_core::demand::stock_ceiling;
use invgame_core::oracle::{exact_profit, grid_deviation_gains, grid_nash, grid_stackelberg, DiscreteScenario};
use invgame_core::profit::hessian_fd;
use invgame_core::sim::simulate;
use invgame_core::stackelberg::FollowerOptions;
use invgame_core::{
    compare_games, follower_slope, grad_manufacturer, nash_solve, profit_manufacturer, stackelberg_solve,
    uniqueness_diagnostic, DemandModel, GameComparison, MarketConfig, Marginal, NashOptions, SampleSet,
    StackelbergOptions, StockVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, Exp, LogNormal, Uniform};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Settings {
    /// Monte Carlo draws per solve.
    pub samples: usize,
    pub seed: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings { samples: 100_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub checks: usize,
    pub failures: usize,
    pub detail: String,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {:>2} {:<22} {}", self.id, self.name, self.detail)
    }
}

/// A generated continuous scenario with its own sampling seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub cfg: MarketConfig,
    pub model: DemandModel,
    pub seed: u64,
}

impl Case {
    pub fn samples(&self, settings: &Settings) -> SampleSet {
        self.model.sample(settings.samples, self.seed).expect("generated models are valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCase {
    pub case: Case,
    pub scenario: DiscreteScenario,
}

fn corpus_rng(settings: &Settings, corpus: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ corpus);
    rng.set_stream(k as u64);
    rng
}

#[derive(Debug, Clone, Copy, Default)]
struct Shape {
    zero_alpha: bool,
    wholesale_at_cost: bool,
    min_leader_spill: f64,
}

fn random_config(rng: &mut ChaCha8Rng, n: usize, shape: Shape) -> MarketConfig {
    let c = rng.random_range(1.0..4.0);
    let w: Vec<f64> = (0..n)
        .map(|_| if shape.wholesale_at_cost { c } else { c + rng.random_range(1.0..4.0) })
        .collect();
    let p_r = w.iter().map(|w| w + rng.random_range(2.0..6.0)).collect();
    let m = n + 1;
    let alpha = (0..m)
        .map(|j| {
            (0..m)
                .map(|k| {
                    if j == k || shape.zero_alpha {
                        0.0
                    } else if j == 0 {
                        rng.random_range(shape.min_leader_spill..0.45)
                    } else {
                        rng.random_range(0.0..0.45)
                    }
                })
                .collect()
        })
        .collect();
    MarketConfig {
        n,
        c,
        p_m: c + rng.random_range(4.0..10.0),
        h_m: rng.random_range(0.5..3.0),
        w,
        p_r,
        h_r: (0..n).map(|_| rng.random_range(0.5..3.0)).collect(),
        alpha,
    }
}

fn random_marginal(rng: &mut ChaCha8Rng) -> Marginal {
    match rng.random_range(0..3) {
        0 => {
            let a = rng.random_range(0.0..20.0);
            Marginal::Uniform { a, b: a + rng.random_range(40.0..120.0) }
        }
        1 => Marginal::Exponential { rate: 1.0 / rng.random_range(20.0..60.0) },
        _ => Marginal::Lognormal { mu: rng.random_range(3.0..4.0), sigma: rng.random_range(0.3..0.6) },
    }
}

fn continuous_corpus(
    settings: &Settings,
    corpus: u64,
    count: usize,
    shape: Shape,
    keep: impl Fn(&MarketConfig) -> bool,
) -> Vec<Case> {
    (0..count)
        .map(|k| {
            let mut rng = corpus_rng(settings, corpus, k);
            let n = 1 + k % 2;
            loop {
                let cfg = random_config(&mut rng, n, shape);
                if cfg.check().is_err() || !keep(&cfg) {
                    continue;
                }
                let model = DemandModel::independent((0..=n).map(|_| random_marginal(&mut rng)).collect());
                return Case { cfg, model, seed: rng.random() };
            }
        })
        .collect()
}

/// Discrete scenarios with one or two retailers, at most 20 joint support
/// points and 20-point stock grids.
pub fn discrete_corpus(settings: &Settings) -> Vec<DiscreteCase> {
    (0..10)
        .map(|k| {
            let mut rng = corpus_rng(settings, 1, k);
            let n = if k < 5 { 1 } else { 2 };
            let sizes: &[usize] = if n == 1 { &[4, 5] } else { &[3, 3, 2] };
            loop {
                let cfg = random_config(&mut rng, n, Shape::default());
                if cfg.check().is_err() || !cfg.conditions().c1.holds {
                    continue;
                }
                let marginals = (0..=n)
                    .map(|j| {
                        let size = sizes[(j + k) % sizes.len()];
                        let mut points: Vec<f64> = Vec::new();
                        while points.len() < size {
                            let x = f64::from(rng.random_range(1..=40));
                            if !points.contains(&x) {
                                points.push(x);
                            }
                        }
                        points.sort_by(f64::total_cmp);
                        let weights: Vec<f64> = (0..size).map(|_| rng.random_range(0.2..1.0)).collect();
                        let total: f64 = weights.iter().sum();
                        Marginal::Discrete { points, probs: weights.iter().map(|w| w / total).collect() }
                    })
                    .collect();
                let model = DemandModel::independent(marginals);
                let wide = vec![vec![0.0, f64::MAX]; n + 1];
                let support = DiscreteScenario::from_model(cfg.clone(), &model, wide).expect("valid").support;
                let grids = DiscreteScenario::even_grids(&cfg, &support, 20);
                let scenario = DiscreteScenario::new(cfg.clone(), support, grids).expect("valid");
                return DiscreteCase { case: Case { cfg, model, seed: rng.random() }, scenario };
            }
        })
        .collect()
}

pub fn decoupled_corpus(s: &Settings) -> Vec<Case> {
    continuous_corpus(s, 3, 20, Shape { zero_alpha: true, ..Shape::default() }, |_| true)
}

pub fn concavity_corpus(s: &Settings) -> Vec<Case> {
    continuous_corpus(s, 4, 50, Shape::default(), |c| c.conditions().c1.holds)
}

pub fn slope_corpus(s: &Settings) -> Vec<Case> {
    continuous_corpus(s, 5, 20, Shape { min_leader_spill: 0.1, ..Shape::default() }, |_| true)
}

pub fn uniqueness_corpus(s: &Settings) -> Vec<Case> {
    continuous_corpus(s, 6, 20, Shape::default(), |c| c.conditions().c2.holds)
}

pub fn wholesale_at_cost_corpus(s: &Settings) -> Vec<Case> {
    let shape = Shape { wholesale_at_cost: true, min_leader_spill: 0.2, ..Shape::default() };
    continuous_corpus(s, 7, 20, shape, |_| true)
}

pub fn reduction_corpus(s: &Settings) -> Vec<Case> {
    continuous_corpus(s, 9, 10, Shape::default(), |c| c.conditions().c1.holds)
}

pub fn gradient_corpus(s: &Settings) -> Vec<Case> {
    continuous_corpus(s, 10, 10, Shape::default(), |_| true)
}

/// Random stocks strictly inside the bulk of each channel's zero-stock
/// composite demand (between its 10% and 90% quantiles).
fn interior_points(case: &Case, samples: &SampleSet, count: usize, rng: &mut ChaCha8Rng) -> Vec<StockVector> {
    let m = case.cfg.channels();
    let zero = vec![0.0; m];
    let cols: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut c = invgame_core::demand::composite_column(&case.cfg, samples, &zero, j);
            c.sort_by(f64::total_cmp);
            c
        })
        .collect();
    (0..count)
        .map(|_| {
            let s = cols
                .iter()
                .map(|c| c[(rng.random_range(0.1..0.9) * c.len() as f64) as usize])
                .collect();
            StockVector::new(s).expect("nonnegative")
        })
        .collect()
}

fn report(id: u8, name: &'static str, checks: usize, failures: usize, passed: bool, detail: String) -> CriterionReport {
    CriterionReport { id, name, passed, checks, failures, detail }
}

fn within_step(a: &[f64], b: &[f64], steps: &[f64]) -> bool {
    a.iter().zip(b).zip(steps).all(|((x, y), h)| (x - y).abs() <= h + 1e-9)
}

/// Solver equilibria agree with exhaustive grid Nash search.
pub fn nash_oracle(settings: &Settings) -> CriterionReport {
    let mut failures = 0;
    let mut worst_gain: f64 = 0.0;
    let corpus = discrete_corpus(settings);
    for dc in &corpus {
        let (cfg, ds) = (&dc.case.cfg, &dc.scenario);
        let samples = dc.case.samples(settings);
        let eq = nash_solve(cfg, &dc.case.model, &samples, &NashOptions::default()).expect("valid");
        let steps: Vec<f64> = ds.grids.iter().map(|g| g[1]).collect();
        let grid = grid_nash(ds);
        let matched = grid.iter().any(|g| within_step(&g.stocks, eq.stocks.as_slice(), &steps));
        // grid points that match are equilibria by construction; record how
        // far the off-grid solver point itself is from one
        let gain = grid_deviation_gains(ds, eq.stocks.as_slice()).into_iter().fold(0.0, f64::max);
        worst_gain = worst_gain.max(gain);
        if !(eq.converged && matched) {
            failures += 1;
        }
    }
    let detail = format!(
        "{}/{} scenarios match a grid equilibrium within one step; largest grid gain from the solver point {worst_gain:.3e}",
        corpus.len() - failures,
        corpus.len()
    );
    report(1, "nash-oracle", corpus.len(), failures, failures == 0, detail)
}

/// Leader optimum agrees with exhaustive bilevel grid search.
pub fn stackelberg_oracle(settings: &Settings) -> CriterionReport {
    let mut failures = 0;
    let mut worst_rel: f64 = 0.0;
    let corpus = discrete_corpus(settings);
    for dc in &corpus {
        let (cfg, ds) = (&dc.case.cfg, &dc.scenario);
        let samples = dc.case.samples(settings);
        let st = stackelberg_solve(cfg, &dc.case.model, &samples, &StackelbergOptions::default()).expect("converges");
        let grid = grid_stackelberg(ds).expect("followers have grid equilibria");
        let exact = exact_profit(ds, st.stocks().as_slice())[0];
        let rel = (grid.leader_profit - exact) / grid.leader_profit.abs().max(1e-12);
        worst_rel = worst_rel.max(rel);
        let near = (st.leader_stock - grid.leader_stock).abs() <= ds.grids[0][1] + 1e-9;
        if !(near && rel <= 1e-6) {
            failures += 1;
        }
    }
    let detail = format!(
        "{}/{} leader stocks within one step, exact profit shortfall vs grid at most {worst_rel:.3e} relative",
        corpus.len() - failures,
        corpus.len()
    );
    report(2, "stackelberg-oracle", corpus.len(), failures, failures == 0, detail)
}

/// Closed-form fractile quantile and its standard error at `n` draws.
fn newsvendor_quantile(m: &Marginal, q: f64, n: usize) -> (f64, f64) {
    let (x, f) = match *m {
        Marginal::Uniform { a, b } => {
            let d = Uniform::new(a, b).expect("valid");
            let x = d.inverse_cdf(q);
            (x, d.pdf(x))
        }
        Marginal::Exponential { rate } => {
            let d = Exp::new(rate).expect("valid");
            let x = d.inverse_cdf(q);
            (x, d.pdf(x))
        }
        Marginal::Lognormal { mu, sigma } => {
            let d = LogNormal::new(mu, sigma).expect("valid");
            let x = d.inverse_cdf(q);
            (x, d.pdf(x))
        }
        Marginal::Discrete { .. } => unreachable!("continuous corpus"),
    };
    (x, (q * (1.0 - q) / n as f64).sqrt() / f)
}

/// Without substitution both games reduce to independent newsvendors.
pub fn decoupling(settings: &Settings) -> (CriterionReport, Vec<GameComparison>) {
    let corpus = decoupled_corpus(settings);
    let mut failures = 0;
    let mut checks = 0;
    let mut worst: f64 = 0.0;
    let mut comparisons = Vec::new();
    for case in &corpus {
        let samples = case.samples(settings);
        let ceiling = stock_ceiling(&case.cfg, &samples).into_iter().fold(0.0, f64::max);
        let opts = StackelbergOptions { tol: Some(1e-5 * ceiling), ..StackelbergOptions::default() };
        let cmp = compare_games(&case.cfg, &case.model, &samples, &NashOptions::default(), &opts).expect("converges");
        for j in 0..case.cfg.channels() {
            let q = if j == 0 { case.cfg.manufacturer_fractile() } else { case.cfg.retailer_fractile(j) };
            let (x, se) = newsvendor_quantile(&case.model.marginals[j], q, settings.samples);
            for got in [cmp.nash.stocks[j], cmp.stackelberg.stocks()[j]] {
                checks += 1;
                let z = (got - x).abs() / se;
                worst = worst.max(z);
                if z > 2.0 {
                    failures += 1;
                }
            }
        }
        comparisons.push(cmp);
    }
    let detail = format!("{}/{checks} stocks within 2 quantile SE; largest deviation {worst:.2} SE", checks - failures);
    (report(3, "decoupling", checks, failures, failures == 0, detail), comparisons)
}

/// Own second partials and own-row cross partials are nonpositive.
pub fn concavity_signs(settings: &Settings) -> CriterionReport {
    let corpus = concavity_corpus(settings);
    let (mut resolvable, mut failures, mut total) = (0, 0, 0);
    for (k, case) in corpus.iter().enumerate() {
        let samples = case.samples(settings);
        let mut rng = corpus_rng(settings, 40, k);
        for s in interior_points(case, &samples, 5, &mut rng) {
            for j in 0..case.cfg.channels() {
                let h = hessian_fd(&case.cfg, &case.model, &samples, j, &s, None).expect("continuous");
                for b in 0..case.cfg.channels() {
                    let (v, se) = (h.value[j][b], h.std_error[j][b]);
                    total += 1;
                    if v.abs() > 4.0 * se {
                        resolvable += 1;
                        if v > 0.0 {
                            failures += 1;
                        }
                    }
                }
            }
        }
    }
    let rate = if resolvable == 0 { 0.0 } else { (resolvable - failures) as f64 / resolvable as f64 };
    let detail = format!(
        "{}/{resolvable} resolvable signs nonpositive ({:.1}%), {total} estimated",
        resolvable - failures,
        100.0 * rate
    );
    report(4, "concavity-signs", resolvable, failures, resolvable > 0 && rate >= 0.95, detail)
}

/// Follower responses fall no faster than the leader's spill rate.
pub fn slope_band(settings: &Settings) -> CriterionReport {
    let corpus = slope_corpus(settings);
    let (mut resolvable, mut failures, mut total) = (0, 0, 0);
    for case in &corpus {
        let samples = case.samples(settings);
        let mut leader = samples.column(0);
        leader.sort_by(f64::total_cmp);
        let at = |q: f64| leader[(q * (leader.len() - 1) as f64) as usize];
        let step = 0.05 * (at(0.75) - at(0.25));
        let ceiling = stock_ceiling(&case.cfg, &samples);
        let opts = FollowerOptions { tol: Some(1e-6 * ceiling[1..].iter().copied().fold(0.0, f64::max)), max_iter: 500 };
        for l in 0..10 {
            let s_m = at(0.05 + 0.9 * l as f64 / 9.0);
            for i in 1..=case.cfg.n {
                let est = follower_slope(&case.cfg, &case.model, &samples, s_m, i, step, &opts).expect("continuous");
                total += 1;
                if est.noise_dominated {
                    continue;
                }
                resolvable += 1;
                let lo = -case.cfg.alpha[0][i] - 4.0 * est.noise;
                if !(est.slope >= lo && est.slope <= 4.0 * est.noise) {
                    failures += 1;
                }
            }
        }
    }
    let detail = format!("{}/{resolvable} resolvable slopes inside the band, {total} estimated", resolvable - failures);
    report(5, "follower-slope-band", resolvable, failures, resolvable > 0 && failures == 0, detail)
}

/// Negative-definite symmetrised Jacobian and coinciding dual-start limits.
pub fn uniqueness(settings: &Settings) -> (CriterionReport, Vec<Case>) {
    let corpus = uniqueness_corpus(settings);
    let (mut eig_fail, mut gap_fail, mut failures) = (0, 0, 0);
    let mut worst: f64 = f64::NEG_INFINITY;
    for case in &corpus {
        let samples = case.samples(settings);
        let eq = nash_solve(&case.cfg, &case.model, &samples, &NashOptions::default()).expect("valid");
        let d = uniqueness_diagnostic(&case.cfg, &case.model, &samples, &eq.stocks).expect("continuous");
        let margin = d.largest + 4.0 * d.jackknife_se;
        worst = worst.max(margin);
        let eig_ok = margin < 0.0;
        let gap_ok = eq.converged && eq.bracket.gap() <= 5.0 * eq.tol;
        eig_fail += usize::from(!eig_ok);
        gap_fail += usize::from(!gap_ok);
        failures += usize::from(!(eig_ok && gap_ok));
    }
    let detail = format!(
        "eigenvalue negative beyond 4 SE in {}/{n}, bracket within 5 tol in {}/{n}; worst largest+4SE {worst:.3e}",
        corpus.len() - eig_fail,
        corpus.len() - gap_fail,
        n = corpus.len()
    );
    (report(6, "uniqueness", corpus.len(), failures, failures == 0, detail), corpus)
}

/// With wholesale at cost the leader stocks at least her Nash level.
pub fn leader_stocks_more(settings: &Settings) -> (CriterionReport, Vec<GameComparison>) {
    let corpus = wholesale_at_cost_corpus(settings);
    let (mut failures, mut strict) = (0, 0);
    let mut comparisons = Vec::new();
    for case in &corpus {
        let samples = case.samples(settings);
        let cmp = compare_games(&case.cfg, &case.model, &samples, &NashOptions::default(), &StackelbergOptions::default())
            .expect("converges");
        if cmp.leader_stocks_more != Some(true) {
            failures += 1;
        }
        if cmp.leader_stock_minus_nash > 5.0 * cmp.tol {
            strict += 1;
        }
        comparisons.push(cmp);
    }
    let n = corpus.len();
    let detail = format!("{}/{n} not below Nash, {strict}/{n} strictly above by more than 5 tol", n - failures);
    (report(7, "leader-stocks-more", n, failures, failures == 0 && 2 * strict >= n, detail), comparisons)
}

/// Leader profit at least her Nash profit, up to four standard errors.
pub fn leader_dominance(settings: &Settings, known: &[GameComparison], extra: &[Case]) -> CriterionReport {
    let mut all: Vec<bool> = known.iter().map(|c| c.leader_dominance).collect();
    for case in extra {
        let samples = case.samples(settings);
        let cmp = compare_games(&case.cfg, &case.model, &samples, &NashOptions::default(), &StackelbergOptions::default())
            .expect("converges");
        all.push(cmp.leader_dominance);
    }
    let failures = all.iter().filter(|ok| !**ok).count();
    let detail = format!("{}/{} scenarios", all.len() - failures, all.len());
    report(8, "leader-dominance", all.len(), failures, failures == 0, detail)
}

/// Simulation length for the reduction check.
pub const REDUCTION_HORIZON: usize = 100_000;

/// Long-run simulated period profit equals the static expectation.
pub fn reduction(settings: &Settings, horizon: usize) -> CriterionReport {
    let corpus = reduction_corpus(settings);
    let (mut checks, mut failures) = (0, 0);
    let mut worst: f64 = 0.0;
    for case in &corpus {
        let samples = case.samples(settings);
        let eq = nash_solve(&case.cfg, &case.model, &samples, &NashOptions::default()).expect("valid");
        // a demand stream independent of the static estimate's draws
        let tr = simulate(&case.cfg, &case.model, &eq.stocks, horizon, case.seed ^ 0x5EED).expect("valid");
        for j in 0..case.cfg.channels() {
            checks += 1;
            let (a, sa) = (tr.summary.average_profit[j], tr.summary.std_error[j]);
            let (b, sb) = (eq.profits[j].value, eq.profits[j].std_error);
            let z = (a - b).abs() / (sa * sa + sb * sb).sqrt();
            worst = worst.max(z);
            if z > 3.0 {
                failures += 1;
            }
        }
    }
    let detail = format!("{}/{checks} channel averages within 3 SE; largest {worst:.2} SE", checks - failures);
    report(9, "reduction", checks, failures, failures == 0, detail)
}

/// Analytic manufacturer gradient agrees with finite differences on the same draws.
pub fn gradient(settings: &Settings) -> CriterionReport {
    let corpus = gradient_corpus(settings);
    let (mut checks, mut failures) = (0, 0);
    let mut worst: f64 = 0.0;
    let h = 1e-2;
    for (k, case) in corpus.iter().enumerate() {
        let samples = case.samples(settings);
        let mut rng = corpus_rng(settings, 100, k);
        let floor = 1e-2 * (case.cfg.p_m - case.cfg.c + case.cfg.h_m);
        for s in interior_points(case, &samples, 10, &mut rng) {
            let g = grad_manufacturer(&case.cfg, &case.model, &samples, &s).expect("continuous");
            for j in 0..case.cfg.channels() {
                let at = |x: f64| profit_manufacturer(&case.cfg, &case.model, &samples, &s.with(j, x)).expect("valid").value;
                let fd = (at(s[j] + h) - at(s[j] - h)) / (2.0 * h);
                let rel = (g[j] - fd).abs() / fd.abs().max(floor);
                checks += 1;
                worst = worst.max(rel);
                if rel > 1e-2 {
                    failures += 1;
                }
            }
        }
    }
    let detail = format!("{}/{checks} components within 1e-2; largest relative error {worst:.3e}", checks - failures);
    report(10, "gradient", checks, failures, failures == 0, detail)
}

/// Runs every property check in order.
pub fn run_all(settings: &Settings) -> Vec<CriterionReport> {
    let (r3, c3) = decoupling(settings);
    let (r6, c6) = uniqueness(settings);
    let (r7, c7) = leader_stocks_more(settings);
    let known: Vec<GameComparison> = c3.into_iter().chain(c7).collect();
    vec![
        nash_oracle(settings),
        stackelberg_oracle(settings),
        r3,
        concavity_signs(settings),
        slope_band(settings),
        r6,
        r7,
        leader_dominance(settings, &known, &c6),
        reduction(settings, REDUCTION_HORIZON),
        gradient(settings),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpora_are_reproducible_and_valid() {
        let s = Settings::default();
        assert_eq!(decoupled_corpus(&s), decoupled_corpus(&s));
        for case in wholesale_at_cost_corpus(&s) {
            assert!(case.cfg.w.iter().all(|w| *w == case.cfg.c));
            assert!(case.cfg.alpha[0][1..].iter().all(|a| *a >= 0.2));
        }
        for case in uniqueness_corpus(&s) {
            assert!(case.cfg.conditions().c2.holds);
        }
        for dc in discrete_corpus(&s) {
            assert!(dc.scenario.support.len() <= 20);
            assert!(dc.scenario.grids.iter().all(|g| g.len() == 20));
        }
        let other = Settings { seed: 1, ..s };
        assert_ne!(decoupled_corpus(&s), decoupled_corpus(&other));
    }

    #[test]
    fn closed_form_quantile() {
        let (x, se) = newsvendor_quantile(&Marginal::Uniform { a: 0.0, b: 100.0 }, 0.8, 100_000);
        assert!((x - 80.0).abs() < 1e-9);
        assert!((se - 100.0 * (0.16f64 / 1e5).sqrt()).abs() < 1e-9);
    }
}
