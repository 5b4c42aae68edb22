//! Brute-force reference computations on small discrete instances: exact
//! expectations over a finite joint support, and exhaustive grid searches
//! for Nash and leader-follower equilibria.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::demand::{DemandModel, Dependence, Marginal};
use crate::error::SolveError;
use crate::exec;
use crate::market::MarketConfig;
use crate::stats::canonical_sum;

/// Largest product grid the exhaustive searches accept.
pub const MAX_GRID_POINTS: usize = 1_000_000;

/// Deviation gain below which a grid point counts as an equilibrium.
pub const GRID_TOL: f64 = 1e-9;

/// A market with finitely supported demand and a candidate stock grid per channel.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiscreteScenario {
    pub cfg: MarketConfig,
    /// Joint support as (primary demand vector, probability).
    pub support: Vec<(Vec<f64>, f64)>,
    /// Sorted candidate stock levels per channel.
    pub grids: Vec<Vec<f64>>,
}

impl DiscreteScenario {
    pub fn new(cfg: MarketConfig, support: Vec<(Vec<f64>, f64)>, grids: Vec<Vec<f64>>) -> Result<Self, SolveError> {
        cfg.check()?;
        let m = cfg.channels();
        let bad = |msg| Err(SolveError::Scenario(msg));
        if support.is_empty() {
            return bad("empty support".into());
        }
        for (d, p) in &support {
            if d.len() != m {
                return bad(format!("support point has {} channels, expected {m}", d.len()));
            }
            if d.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return bad("support demands must be finite and nonnegative".into());
            }
            if !(p.is_finite() && *p >= 0.0) {
                return bad(format!("probability {p} is invalid"));
            }
        }
        let total = canonical_sum(support.iter().map(|(_, p)| *p).collect());
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("probabilities sum to {total}"));
        }
        if grids.len() != m {
            return bad(format!("{} grids, expected {m}", grids.len()));
        }
        let top = zero_stock_maximum(&cfg, &support);
        let mut size: usize = 1;
        for (j, g) in grids.iter().enumerate() {
            if g.first() != Some(&0.0) {
                return bad(format!("grid {j} must start at 0"));
            }
            if g.windows(2).any(|w| !(w[0] < w[1])) {
                return bad(format!("grid {j} is not strictly increasing"));
            }
            if g[g.len() - 1] <= top[j] {
                return bad(format!("grid {j} must exceed the largest demand {}", top[j]));
            }
            size = size.saturating_mul(g.len());
        }
        if size > MAX_GRID_POINTS {
            return bad(format!("product grid has {size} points, limit {MAX_GRID_POINTS}"));
        }
        Ok(DiscreteScenario { cfg, support, grids })
    }

    /// Builds the product support of independent discrete marginals.
    pub fn from_model(cfg: MarketConfig, model: &DemandModel, grids: Vec<Vec<f64>>) -> Result<Self, SolveError> {
        model.check(cfg.channels())?;
        if !matches!(model.dependence, Dependence::Independent) {
            return Err(SolveError::Scenario("only independent marginals have a product support".into()));
        }
        let mut support = vec![(Vec::new(), 1.0)];
        for m in &model.marginals {
            let Marginal::Discrete { points, probs } = m else {
                return Err(SolveError::Scenario("every marginal must be discrete".into()));
            };
            let mut next = Vec::with_capacity(support.len() * points.len());
            for (d, p) in &support {
                for (x, q) in points.iter().zip(probs) {
                    let mut d = d.clone();
                    d.push(*x);
                    next.push((d, p * q));
                }
            }
            support = next;
        }
        DiscreteScenario::new(cfg, support, grids)
    }

    /// `points` evenly spaced levels per channel from 0 to just past the
    /// channel's largest composite demand.
    pub fn even_grids(cfg: &MarketConfig, support: &[(Vec<f64>, f64)], points: usize) -> Vec<Vec<f64>> {
        let points = points.max(2);
        zero_stock_maximum(cfg, support)
            .into_iter()
            .map(|top| {
                let end = if top > 0.0 { top * (1.0 + 1.0 / (points - 1) as f64) } else { 1.0 };
                (0..points).map(|k| end * k as f64 / (points - 1) as f64).collect()
            })
            .collect()
    }

    pub fn grid_size(&self) -> usize {
        self.grids.iter().map(Vec::len).product()
    }

    fn point(&self, mut idx: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.grids.len()];
        for j in (0..self.grids.len()).rev() {
            let len = self.grids[j].len();
            s[j] = self.grids[j][idx % len];
            idx /= len;
        }
        s
    }

    fn stride(&self, j: usize) -> usize {
        self.grids[j + 1..].iter().map(Vec::len).product()
    }

    fn coord(&self, idx: usize, j: usize) -> usize {
        idx / self.stride(j) % self.grids[j].len()
    }

    fn table(&self) -> Vec<Vec<f64>> {
        exec::map_indices(self.grid_size(), |idx| exact_profit(self, &self.point(idx)))
    }

    /// Largest gain player `j` gets by moving along its own grid from `idx`.
    fn deviation_gain(&self, table: &[Vec<f64>], idx: usize, j: usize) -> f64 {
        let stride = self.stride(j);
        let base = idx - self.coord(idx, j) * stride;
        let here = table[idx][j];
        (0..self.grids[j].len()).map(|k| table[base + k * stride][j] - here).fold(0.0, f64::max)
    }
}

fn zero_stock_maximum(cfg: &MarketConfig, support: &[(Vec<f64>, f64)]) -> Vec<f64> {
    let m = cfg.channels();
    let mut top = vec![0.0f64; m];
    for (d, _) in support {
        for k in 0..m {
            let spill: f64 = (0..m).filter(|&j| j != k).map(|j| cfg.alpha[j][k] * d[j]).sum();
            top[k] = top[k].max(d[k] + spill);
        }
    }
    top
}

/// Per-channel profit of one demand realisation, tracked through sales and
/// leftover stock.
fn realised_profit(cfg: &MarketConfig, s: &[f64], d: &[f64]) -> Vec<f64> {
    let m = cfg.channels();
    let first: Vec<f64> = (0..m).map(|j| d[j].min(s[j])).collect();
    let unmet: Vec<f64> = (0..m).map(|j| d[j] - first[j]).collect();
    let sold: Vec<f64> = (0..m)
        .map(|k| {
            let arriving: f64 = (0..m).filter(|&j| j != k).map(|j| cfg.alpha[j][k] * unmet[j]).sum();
            first[k] + arriving.min(s[k] - first[k])
        })
        .collect();
    let mut out = vec![0.0; m];
    out[0] = (cfg.p_m - cfg.c) * sold[0] - cfg.h_m * (s[0] - sold[0]);
    for i in 1..m {
        out[0] += (cfg.w[i - 1] - cfg.c) * sold[i];
        out[i] = (cfg.p_r[i - 1] - cfg.w[i - 1]) * sold[i] - cfg.h_r[i - 1] * (s[i] - sold[i]);
    }
    out
}

/// Expected profit of every channel at stocks `s`, summed exactly over the support.
pub fn exact_profit(ds: &DiscreteScenario, s: &[f64]) -> Vec<f64> {
    let m = ds.cfg.channels();
    let mut terms: Vec<Vec<f64>> = vec![Vec::with_capacity(ds.support.len()); m];
    for (d, p) in &ds.support {
        for (j, v) in realised_profit(&ds.cfg, s, d).into_iter().enumerate() {
            terms[j].push(p * v);
        }
    }
    terms.into_iter().map(canonical_sum).collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridPoint {
    pub stocks: Vec<f64>,
    pub profits: Vec<f64>,
}

/// Every grid point where no player gains more than [`GRID_TOL`] by a
/// unilateral move along its own grid. May be empty.
pub fn grid_nash(ds: &DiscreteScenario) -> Vec<GridPoint> {
    let table = ds.table();
    let m = ds.cfg.channels();
    (0..table.len())
        .filter(|&idx| (0..m).all(|j| ds.deviation_gain(&table, idx, j) <= GRID_TOL))
        .map(|idx| GridPoint { stocks: ds.point(idx), profits: table[idx].clone() })
        .collect()
}

/// Largest gain each player gets from a unilateral move onto its grid,
/// starting from an arbitrary stock vector.
pub fn grid_deviation_gains(ds: &DiscreteScenario, s: &[f64]) -> Vec<f64> {
    let here = exact_profit(ds, s);
    (0..ds.cfg.channels())
        .map(|j| {
            ds.grids[j]
                .iter()
                .map(|&x| {
                    let mut t = s.to_vec();
                    t[j] = x;
                    exact_profit(ds, &t)[j] - here[j]
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridStackelberg {
    pub leader_stock: f64,
    pub follower_stocks: Vec<f64>,
    pub leader_profit: f64,
    /// Leader profit at each leader grid level; `None` where the followers
    /// have no grid equilibrium.
    pub leader_curve: Vec<Option<f64>>,
    /// Some leader level had several follower equilibria; the one worst for
    /// the leader was used there.
    pub followers_ambiguous: bool,
}

/// Leader optimum over her grid with the followers playing a grid Nash
/// equilibrium among themselves. Ties go to the lowest leader stock.
pub fn grid_stackelberg(ds: &DiscreteScenario) -> Result<GridStackelberg, SolveError> {
    let table = ds.table();
    let m = ds.cfg.channels();
    let leader_stride = ds.stride(0);
    let mut curve = Vec::with_capacity(ds.grids[0].len());
    let mut best: Option<(usize, f64)> = None;
    let mut ambiguous = false;
    for a in 0..ds.grids[0].len() {
        let followers = (a * leader_stride..(a + 1) * leader_stride)
            .filter(|&idx| (1..m).all(|j| ds.deviation_gain(&table, idx, j) <= GRID_TOL));
        let mut worst: Option<usize> = None;
        let mut count = 0;
        for idx in followers {
            count += 1;
            if worst.is_none_or(|w| table[idx][0] < table[w][0]) {
                worst = Some(idx);
            }
        }
        ambiguous |= count > 1;
        curve.push(worst.map(|w| table[w][0]));
        if let Some(w) = worst {
            if best.is_none_or(|(_, v)| table[w][0] > v) {
                best = Some((w, table[w][0]));
            }
        }
    }
    let (idx, leader_profit) = best.ok_or(SolveError::NoGridEquilibrium)?;
    let s = ds.point(idx);
    Ok(GridStackelberg {
        leader_stock: s[0],
        follower_stocks: s[1..].to_vec(),
        leader_profit,
        leader_curve: curve,
        followers_ambiguous: ambiguous,
    })
}
