//! Block-to-producer attribution.
//!
//! Pooled blocks split their weight across reward recipients. Blocks built under
//! proposer-builder separation are traced from the builder to the proposer through the
//! reward-transfer transactions in the block.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{LabelRegistry, NodeDayRecord, RawBlockRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMethod {
    Direct,
    ProportionalSplit,
    PbsTransfer,
    PbsAlternate,
    PbsBuilderIsProposer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionOutcome {
    pub block_height: u64,
    pub producer_id: String,
    pub method: AttributionMethod,
    pub weight: f64,
}

/// Reward-share split of a block: one `(node, weight)` per recipient.
pub fn attribute_proportional(block: &RawBlockRecord) -> Vec<(String, f64)> {
    block
        .reward_recipients
        .iter()
        .map(|r| (r.address.clone(), r.share))
        .collect()
}

/// Resolves the consensus-layer proposer of a single-recipient block.
///
/// A non-builder recipient is the producer. For a builder, the largest transfer from the
/// builder or one of its alternates to a known proposer names the producer (earliest wins a
/// tie). Failing that, a builder that is itself a proposer is the producer.
pub fn resolve_proposer(block: &RawBlockRecord, registry: &LabelRegistry) -> Result<AttributionOutcome> {
    if block.reward_recipients.len() != 1 {
        return Err(Error::MultipleRecipients {
            height: block.block_height,
            count: block.reward_recipients.len(),
        });
    }
    let recipient = block.reward_recipients[0].address.as_str();
    let builder = registry.canonical(recipient);
    let outcome = |producer: &str, method| AttributionOutcome {
        block_height: block.block_height,
        producer_id: producer.to_string(),
        method,
        weight: 1.0,
    };
    if !registry.mev_builders.contains(builder) {
        return Ok(outcome(builder, AttributionMethod::Direct));
    }

    let mut best: Option<(usize, f64)> = None;
    for (pos, t) in block.transfers.iter().enumerate() {
        let from_builder = registry.canonical(&t.from_address) == builder;
        if !from_builder || !registry.known_proposers.contains(&t.to_address) {
            continue;
        }
        if best.is_none_or(|(_, amount)| t.amount > amount) {
            best = Some((pos, t.amount));
        }
    }
    if let Some((pos, _)) = best {
        let t = &block.transfers[pos];
        let method = if t.from_address == builder {
            AttributionMethod::PbsTransfer
        } else {
            AttributionMethod::PbsAlternate
        };
        return Ok(outcome(&t.to_address, method));
    }
    if registry.builder_proposers.contains(builder) {
        return Ok(outcome(builder, AttributionMethod::PbsBuilderIsProposer));
    }
    Err(Error::UnresolvedProposer {
        height: block.block_height,
        recipient: recipient.to_string(),
        reason: "no transfer to a known proposer".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMode {
    /// Every block is split by its reward shares.
    Proportional,
    /// Every block goes through proposer resolution.
    Proposer,
    /// Single-recipient blocks go through proposer resolution, pooled blocks are split.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    pub chain_id: String,
    pub height: u64,
    pub recipient: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttributedBlocks {
    pub outcomes: Vec<AttributionOutcome>,
    pub node_days: Vec<NodeDayRecord>,
    pub quarantine: Vec<QuarantineEntry>,
}

/// Attributes a batch of blocks and aggregates the result to node-day production.
///
/// Blocks that cannot be resolved go to the quarantine list instead of the totals.
pub fn attribute_blocks(
    blocks: &[RawBlockRecord],
    registry: &LabelRegistry,
    mode: AttributionMode,
) -> AttributedBlocks {
    let mut out = AttributedBlocks::default();
    let mut totals: BTreeMap<(String, NaiveDate, String), f64> = BTreeMap::new();
    for block in blocks {
        let split = match mode {
            AttributionMode::Proportional => true,
            AttributionMode::Proposer => false,
            AttributionMode::Auto => block.reward_recipients.len() > 1,
        };
        let outcomes = if split {
            attribute_proportional(block)
                .into_iter()
                .map(|(producer_id, weight)| AttributionOutcome {
                    block_height: block.block_height,
                    producer_id,
                    method: AttributionMethod::ProportionalSplit,
                    weight,
                })
                .collect()
        } else {
            match resolve_proposer(block, registry) {
                Ok(o) => alloc::vec![o],
                Err(e) => {
                    let recipient = block
                        .reward_recipients
                        .iter()
                        .map(|r| r.address.as_str())
                        .collect::<Vec<_>>()
                        .join(";");
                    let reason = match e {
                        Error::UnresolvedProposer { reason, .. } => reason,
                        other => other.to_string(),
                    };
                    out.quarantine.push(QuarantineEntry {
                        chain_id: block.chain_id.clone(),
                        height: block.block_height,
                        recipient,
                        reason,
                    });
                    continue;
                }
            }
        };
        for o in &outcomes {
            *totals
                .entry((block.chain_id.clone(), block.day(), o.producer_id.clone()))
                .or_insert(0.0) += o.weight;
        }
        out.outcomes.extend(outcomes);
    }
    out.node_days = totals
        .into_iter()
        .filter(|(_, blocks)| *blocks > 0.0)
        .map(|((chain_id, day, node_id), blocks)| NodeDayRecord {
            chain_id,
            day,
            node_id,
            blocks,
        })
        .collect();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttritionPoint {
    pub day: NaiveDate,
    pub lost_node_count: usize,
    pub lost_share: f64,
}

/// Pre-event producers that have not produced again, per post-event day.
///
/// Producers active in `[event - lookback, event]` form the reference set. On each day `d` in
/// `event + 1 ..= event + horizon`, a reference node counts as lost while it has produced
/// nothing in `(event, d]`; `lost_share` is those nodes' share of the lookback production.
/// Records must all belong to one chain.
pub fn node_attrition(
    records: &[NodeDayRecord],
    event_date: NaiveDate,
    lookback_days: u32,
    horizon_days: u32,
) -> Result<Vec<AttritionPoint>> {
    if let Some(first) = records.first() {
        if records.iter().any(|r| r.chain_id != first.chain_id) {
            return Err(Error::InvalidPanel("attrition expects records from a single chain".into()));
        }
    }
    let start = event_date - Days::new(lookback_days as u64);
    let mut reference: BTreeMap<&str, f64> = BTreeMap::new();
    let mut first_return: BTreeMap<&str, NaiveDate> = BTreeMap::new();
    for r in records {
        if r.day >= start && r.day <= event_date {
            *reference.entry(&r.node_id).or_insert(0.0) += r.blocks;
        }
    }
    let total: f64 = reference.values().sum();
    if reference.is_empty() || total <= 0.0 {
        return Err(Error::EmptyWindow("lookback"));
    }
    for r in records {
        if r.day > event_date && reference.contains_key(r.node_id.as_str()) {
            let e = first_return.entry(&r.node_id).or_insert(r.day);
            if r.day < *e {
                *e = r.day;
            }
        }
    }
    Ok((1..=horizon_days as u64)
        .map(|offset| {
            let day = event_date + Days::new(offset);
            let (count, share) = reference
                .iter()
                .filter(|(id, _)| first_return.get(*id).is_none_or(|&back| back > day))
                .fold((0usize, 0.0), |(n, s), (_, b)| (n + 1, s + b / total));
            AttritionPoint {
                day,
                lost_node_count: count,
                lost_share: share,
            }
        })
        .collect())
}
