//! Validated input records: raw blocks, node-day production counts and the label registry.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance within which reward shares are renormalized at ingest.
pub const SHARE_INGEST_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardShare {
    pub address: String,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    #[serde(rename = "from")]
    pub from_address: String,
    #[serde(rename = "to")]
    pub to_address: String,
    pub amount: f64,
}

/// One block with its reward recipients and the reward-transfer transactions it carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawBlockRecord {
    pub chain_id: String,
    #[serde(rename = "height")]
    pub block_height: u64,
    pub timestamp: DateTime<Utc>,
    pub reward_recipients: Vec<RewardShare>,
    #[serde(default)]
    pub transfers: Vec<Transfer>,
}

impl RawBlockRecord {
    /// The UTC calendar day the block belongs to.
    pub fn day(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }

    /// Checks the record and rescales its shares to sum to one.
    ///
    /// Shares summing anywhere in `[1 - 1e-6, 1 + 1e-6]` are accepted and divided by their sum;
    /// anything further off is rejected.
    pub fn normalized(mut self) -> Result<Self> {
        let invalid = |message: String| Error::InvalidBlock {
            chain_id: self.chain_id.clone(),
            height: self.block_height,
            message,
        };
        if self.reward_recipients.is_empty() {
            return Err(invalid("no reward recipients".into()));
        }
        for r in &self.reward_recipients {
            if !r.share.is_finite() || r.share < 0.0 || r.share > 1.0 + SHARE_INGEST_TOLERANCE {
                return Err(invalid(format!("share {} for {} is out of [0, 1]", r.share, r.address)));
            }
        }
        for t in &self.transfers {
            if !(t.amount >= 0.0) || !t.amount.is_finite() {
                return Err(Error::NegativeAmount {
                    chain_id: self.chain_id.clone(),
                    height: self.block_height,
                    amount: t.amount,
                });
            }
        }
        let sum: f64 = self.reward_recipients.iter().map(|r| r.share).sum();
        if (sum - 1.0).abs() > SHARE_INGEST_TOLERANCE {
            return Err(Error::ShareSum {
                chain_id: self.chain_id.clone(),
                height: self.block_height,
                sum,
            });
        }
        if sum != 1.0 {
            for r in &mut self.reward_recipients {
                r.share /= sum;
            }
        }
        Ok(self)
    }
}

/// Rejects duplicate `(chain_id, height)` pairs.
pub fn check_unique_heights(blocks: &[RawBlockRecord]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for b in blocks {
        if !seen.insert((b.chain_id.as_str(), b.block_height)) {
            return Err(Error::DuplicateHeight {
                chain_id: b.chain_id.clone(),
                height: b.block_height,
            });
        }
    }
    Ok(())
}

/// Fractional block production of one node on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDayRecord {
    pub chain_id: String,
    pub day: NaiveDate,
    pub node_id: String,
    pub blocks: f64,
}

/// Node-day records that passed validation, plus the count of zero rows dropped on the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeDayBatch {
    pub records: Vec<NodeDayRecord>,
    pub zero_rows_dropped: usize,
}

/// Validates `(line, record)` pairs in file order.
///
/// Zero-production rows are dropped and counted; negative or non-finite counts and empty
/// identifiers are malformed; a repeated `(chain, day, node)` key reports both lines.
pub fn collect_node_days<I>(rows: I) -> Result<NodeDayBatch>
where
    I: IntoIterator<Item = (usize, NodeDayRecord)>,
{
    let mut seen: BTreeMap<(String, NaiveDate, String), usize> = BTreeMap::new();
    let mut batch = NodeDayBatch::default();
    for (line, rec) in rows {
        if rec.chain_id.is_empty() || rec.node_id.is_empty() {
            return Err(Error::MalformedRow {
                line,
                message: "empty chain_id or node_id".into(),
            });
        }
        if !rec.blocks.is_finite() || rec.blocks < 0.0 {
            return Err(Error::MalformedRow {
                line,
                message: format!("blocks must be a non-negative number, got {}", rec.blocks),
            });
        }
        let key = (rec.chain_id.clone(), rec.day, rec.node_id.clone());
        if let Some(&first_line) = seen.get(&key) {
            return Err(Error::DuplicateNodeDay {
                chain_id: key.0,
                day: key.1,
                node_id: key.2,
                first_line,
                second_line: line,
            });
        }
        seen.insert(key, line);
        if rec.blocks == 0.0 {
            batch.zero_rows_dropped += 1;
            continue;
        }
        batch.records.push(rec);
    }
    Ok(batch)
}

/// Address labels used by proposer resolution and knockout analysis.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelRegistry {
    #[serde(default)]
    pub mev_builders: BTreeSet<String>,
    /// Alternate sending address → canonical builder address.
    #[serde(default)]
    pub builder_alternates: BTreeMap<String, String>,
    #[serde(default)]
    pub builder_proposers: BTreeSet<String>,
    #[serde(default)]
    pub known_proposers: BTreeSet<String>,
    /// Node id → group tag such as `CEX`, `staking-pool`, `MEV`.
    #[serde(default)]
    pub node_groups: BTreeMap<String, String>,
}

pub const DEFAULT_GROUP: &str = "other";

impl LabelRegistry {
    pub fn validate(&self) -> Result<()> {
        for (alt, canonical) in &self.builder_alternates {
            if !self.mev_builders.contains(canonical) {
                return Err(Error::InvalidRegistry(format!(
                    "alternate {alt} maps to {canonical}, which is not a listed MEV builder"
                )));
            }
        }
        if let Some(p) = self.builder_proposers.iter().find(|p| !self.mev_builders.contains(*p)) {
            return Err(Error::InvalidRegistry(format!(
                "builder-proposer {p} is not a listed MEV builder"
            )));
        }
        Ok(())
    }

    /// Maps a registered alternate to its canonical builder; other addresses map to themselves.
    pub fn canonical<'a>(&'a self, address: &'a str) -> &'a str {
        self.builder_alternates
            .get(address)
            .map(String::as_str)
            .unwrap_or(address)
    }

    pub fn is_builder(&self, address: &str) -> bool {
        self.mev_builders.contains(self.canonical(address))
    }

    pub fn group_of<'a>(&'a self, node_id: &str) -> &'a str {
        self.node_groups
            .get(node_id)
            .map(String::as_str)
            .unwrap_or(DEFAULT_GROUP)
    }
}
