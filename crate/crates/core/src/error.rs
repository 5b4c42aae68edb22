use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DemandError {
    #[error("invalid marginal for channel {channel}: {reason}")]
    Marginal { channel: usize, reason: String },
    #[error("demand model has {got} channels, expected {expected}")]
    Channels { got: usize, expected: usize },
    #[error("empirical demand matrix: {0}")]
    Empirical(String),
    #[error("number of draws must be positive")]
    NoDraws,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error("derivative estimates need a continuous demand model")]
    DiscreteDemand,
    #[error("retailer index {0} out of range")]
    RetailerIndex(usize),
    #[error("channel index {0} out of range")]
    ChannelIndex(usize),
    #[error("stock vector has {got} entries, expected {expected}")]
    StockLength { got: usize, expected: usize },
    #[error("finite-difference step must be positive")]
    Step,
    #[error("follower equilibrium did not converge at leader stock {leader_stock}")]
    FollowerDiverged { leader_stock: f64 },
    #[error("discrete scenario: {0}")]
    Scenario(String),
    #[error("grid search found no equilibrium")]
    NoGridEquilibrium,
}
