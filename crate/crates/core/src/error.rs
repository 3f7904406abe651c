use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("duplicate node-day key ({chain_id}, {day}, {node_id}) on lines {first_line} and {second_line}")]
    DuplicateNodeDay {
        chain_id: String,
        day: NaiveDate,
        node_id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("block {height} on {chain_id}: {message}")]
    InvalidBlock {
        chain_id: String,
        height: u64,
        message: String,
    },
    #[error("block {height} on {chain_id}: reward shares sum to {sum}")]
    ShareSum {
        chain_id: String,
        height: u64,
        sum: f64,
    },
    #[error("block {height} on {chain_id}: negative transfer amount {amount}")]
    NegativeAmount {
        chain_id: String,
        height: u64,
        amount: f64,
    },
    #[error("block height {height} appears twice on {chain_id}")]
    DuplicateHeight { chain_id: String, height: u64 },
    #[error("invalid label registry: {0}")]
    InvalidRegistry(String),
    #[error("block {height}: builder {recipient} could not be resolved to a proposer ({reason})")]
    UnresolvedProposer {
        height: u64,
        recipient: String,
        reason: String,
    },
    #[error("block {height}: proposer resolution needs exactly one reward recipient, found {count}")]
    MultipleRecipients { height: u64, count: usize },
    #[error("treated chain {0} is absent from the panel")]
    TreatedChainAbsent(String),
    #[error("event date {event} lies outside the data range {first}..={last}")]
    EventOutOfRange {
        event: NaiveDate,
        first: NaiveDate,
        last: NaiveDate,
    },
    #[error("distribution is empty")]
    EmptyDistribution,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("every node was excluded by the knockout groups")]
    AllNodesExcluded,
    #[error("{0} window is empty")]
    EmptyWindow(&'static str),
    #[error("peak value is zero")]
    ZeroPeak,
    #[error("zero variance: {0}")]
    ZeroVariance(String),
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("design matrix is rank deficient; collinear terms: {terms:?}")]
    RankDeficient { terms: Vec<String> },
    #[error("invalid regression spec: {0}")]
    InvalidSpec(String),
    #[error("invalid panel: {0}")]
    InvalidPanel(String),
    #[error("clustering on {dimension} needs at least 2 clusters, found {found}")]
    InsufficientClusters { dimension: &'static str, found: usize },
    #[error("lag buckets without treated observations: {0:?}")]
    MissingLagBuckets(Vec<i64>),
    #[error("series does not cover both sides of the event")]
    OneSidedSeries,
    #[error("synthetic DiD needs at least 2 control chains, found {0}")]
    TooFewControls(usize),
    #[error("pre-period control outcomes have zero variance")]
    DegeneratePrePeriod,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("chain {chain_id} produced no blocks on simulated day {day}")]
    ZeroBlockDay { chain_id: String, day: NaiveDate },
}
