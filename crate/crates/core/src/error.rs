use thiserror::Error;

use crate::sim::Divergence;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown link `{0}`")]
    UnknownLink(String),

    #[error("network is invalid: {0}")]
    InvalidNetwork(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("zero aggregate flow through link `{0}`")]
    ZeroAggregateFlow(String),

    #[error("queue function evaluated outside its domain: y = {y} (pole at {pole})")]
    QueueDomain { y: f64, pole: f64 },

    #[error("elasticity undefined: {0}")]
    ElasticityUndefined(&'static str),

    #[error("link `{0}` has a zero queue at equilibrium although beta > 0")]
    ZeroQueueAtEquilibrium(String),

    #[error("history underrun on link {link} at step position {position}")]
    HistoryUnderrun { link: usize, position: f64 },

    #[error("simulation diverged: {0}")]
    Diverged(Box<Divergence>),

    #[error("bracket [{lo}, {hi}] does not straddle the stability boundary")]
    Bracket { lo: f64, hi: f64 },

    #[error("measurement window holds {found} mean crossings, need at least {needed}")]
    WindowTooShort { found: usize, needed: usize },
}
