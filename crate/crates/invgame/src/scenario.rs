//! Scenario files: market parameters plus a demand block, as JSON.

use std::fs;
use std::path::{Path, PathBuf};

use invgame_core::oracle::DiscreteScenario;
use invgame_core::{ConfigError, DemandError, DemandModel, Dependence, Marginal, MarketConfig, SolveError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed scenario {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("malformed demand matrix {path}: {reason}")]
    Matrix { path: PathBuf, reason: String },
    #[error("invalid market: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid demand: {0}")]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// On-disk layout of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub n: usize,
    pub c: f64,
    pub p_m: f64,
    pub h_m: f64,
    pub w: Vec<f64>,
    pub p_r: Vec<f64>,
    pub h_r: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
    pub marginals: Vec<Marginal>,
    #[serde(default)]
    pub dependence: DependenceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DependenceSpec {
    #[default]
    Independent,
    /// CSV file of joint primary-demand observations, resolved relative to
    /// the scenario file.
    Empirical(PathBuf),
}

/// Stock grid for the exhaustive oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, untagged)]
pub enum GridSpec {
    Points { points: usize },
    Levels { levels: Vec<Vec<f64>> },
}

pub const DEFAULT_GRID_POINTS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub cfg: MarketConfig,
    pub model: DemandModel,
    pub grid: Option<GridSpec>,
    /// Hex SHA-256 of the scenario file followed by any demand matrix it names.
    pub digest: String,
}

impl ScenarioFile {
    pub fn from_parts(cfg: &MarketConfig, marginals: Vec<Marginal>) -> Self {
        ScenarioFile {
            n: cfg.n,
            c: cfg.c,
            p_m: cfg.p_m,
            h_m: cfg.h_m,
            w: cfg.w.clone(),
            p_r: cfg.p_r.clone(),
            h_r: cfg.h_r.clone(),
            alpha: cfg.alpha.clone(),
            marginals,
            dependence: DependenceSpec::Independent,
            grid: None,
        }
    }

    fn config(&self) -> MarketConfig {
        MarketConfig {
            n: self.n,
            c: self.c,
            p_m: self.p_m,
            h_m: self.h_m,
            w: self.w.clone(),
            p_r: self.p_r.clone(),
            h_r: self.h_r.clone(),
            alpha: self.alpha.clone(),
        }
    }
}

/// Reads a demand matrix: a header row, then one row of `channels`
/// nonnegative numbers per observation.
pub fn read_matrix(path: &Path, channels: usize) -> Result<(Vec<Vec<f64>>, Vec<u8>), ScenarioError> {
    let bytes = fs::read(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
    let bad = |reason: String| ScenarioError::Matrix { path: path.into(), reason };
    let mut rows = Vec::new();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != channels {
            return Err(bad(format!("row {} has {} fields, expected {channels}", line + 1, rec.len())));
        }
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| bad(format!("row {}: {f:?}: {e}", line + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((rows, bytes))
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let bytes = fs::read(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
        let file: ScenarioFile =
            serde_json::from_slice(&bytes).map_err(|source| ScenarioError::Json { path: path.into(), source })?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let base = path.parent().unwrap_or(Path::new("."));
        let dependence = match &file.dependence {
            DependenceSpec::Independent => Dependence::Independent,
            DependenceSpec::Empirical(rel) => {
                let (rows, raw) = read_matrix(&base.join(rel), file.n + 1)?;
                hasher.update(&raw);
                Dependence::Empirical(rows)
            }
        };
        let digest = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Scenario::build(file, dependence, digest)
    }

    /// Builds an in-memory scenario; the digest covers the canonical JSON.
    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let json = serde_json::to_vec(&file).expect("scenario serialises");
        let digest = Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect();
        let DependenceSpec::Independent = file.dependence else {
            return Err(ScenarioError::Matrix {
                path: PathBuf::new(),
                reason: "in-memory scenarios must be independent".into(),
            });
        };
        Scenario::build(file, Dependence::Independent, digest)
    }

    fn build(file: ScenarioFile, dependence: Dependence, digest: String) -> Result<Self, ScenarioError> {
        let cfg = file.config().validate()?;
        let model = DemandModel { marginals: file.marginals, dependence };
        model.check(cfg.channels())?;
        Ok(Scenario { cfg, model, grid: file.grid, digest })
    }

    /// The exhaustive-search view; needs independent discrete marginals.
    pub fn discrete(&self, default_points: usize) -> Result<DiscreteScenario, ScenarioError> {
        let wide = vec![vec![0.0, f64::MAX]; self.cfg.channels()];
        let ds = DiscreteScenario::from_model(self.cfg.clone(), &self.model, wide)?;
        let grids = match &self.grid {
            Some(GridSpec::Levels { levels }) => levels.clone(),
            Some(GridSpec::Points { points }) => DiscreteScenario::even_grids(&self.cfg, &ds.support, *points),
            None => DiscreteScenario::even_grids(&self.cfg, &ds.support, default_points),
        };
        Ok(DiscreteScenario::new(ds.cfg, ds.support, grids)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "n": 1, "c": 2, "p_m": 10, "h_m": 1, "w": [5], "p_r": [9], "h_r": [1],
        "alpha": [[0, 0.3], [0.4, 0]],
        "marginals": [{"kind": "uniform", "a": 0, "b": 100}, {"kind": "exponential", "rate": 0.02}]
    }"#;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_independent_example() {
        let dir = tempfile::tempdir().unwrap();
        let sc = Scenario::load(&write(dir.path(), "s.json", EXAMPLE)).unwrap();
        assert_eq!(sc.cfg.w, vec![5.0]);
        assert_eq!(sc.model.dependence, Dependence::Independent);
        assert_eq!(sc.digest.len(), 64);
    }

    #[test]
    fn unknown_field_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = EXAMPLE.replace("\"n\": 1", "\"n\": 1, \"beta\": 2");
        let err = Scenario::load(&write(dir.path(), "s.json", &body)).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn invalid_market_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let body = EXAMPLE.replace("\"w\": [5]", "\"w\": [9.5]");
        let err = Scenario::load(&write(dir.path(), "s.json", &body)).unwrap_err();
        assert_eq!(err.to_string(), "invalid market: w[0] ≥ p_r[0]");
    }

    #[test]
    fn empirical_matrix_is_resolved_and_hashed() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "d.csv", "m,r\n10,5\n30,25\n");
        let body = EXAMPLE.replace("\"marginals\"", "\"dependence\": {\"empirical\": \"d.csv\"}, \"marginals\"");
        let p = write(dir.path(), "s.json", &body);
        let a = Scenario::load(&p).unwrap();
        assert_eq!(a.model.dependence, Dependence::Empirical(vec![vec![10.0, 5.0], vec![30.0, 25.0]]));
        write(dir.path(), "d.csv", "m,r\n10,5\n30,26\n");
        assert_ne!(Scenario::load(&p).unwrap().digest, a.digest);
        write(dir.path(), "d.csv", "m,r\n10\n");
        assert!(Scenario::load(&p).is_err());
    }

    #[test]
    fn grid_block_variants() {
        let dir = tempfile::tempdir().unwrap();
        let disc = r#"{"kind": "discrete", "points": [1, 5], "probs": [0.5, 0.5]}"#;
        let body = EXAMPLE
            .replace(r#"{"kind": "uniform", "a": 0, "b": 100}"#, disc)
            .replace(r#"{"kind": "exponential", "rate": 0.02}"#, disc);
        let pts = body.replace("\"marginals\"", "\"grid\": {\"points\": 7}, \"marginals\"");
        let ds = Scenario::load(&write(dir.path(), "a.json", &pts)).unwrap().discrete(20).unwrap();
        assert_eq!(ds.grids[0].len(), 7);
        let lv = body.replace("\"marginals\"", "\"grid\": {\"levels\": [[0, 3, 9], [0, 2, 9]]}, \"marginals\"");
        let ds = Scenario::load(&write(dir.path(), "b.json", &lv)).unwrap().discrete(20).unwrap();
        assert_eq!(ds.grids[1], vec![0.0, 2.0, 9.0]);
        assert!(Scenario::load(&write(dir.path(), "c.json", EXAMPLE)).unwrap().discrete(20).is_err());
    }
}
