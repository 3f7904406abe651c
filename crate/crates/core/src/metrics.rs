//! Daily decentralization metrics and the analyses built on them.
//!
//! Every metric is computed over producing nodes only: a [`DailyDistribution`] never holds a
//! zero count, so `nodes` is simply the number of entries. Entropy is in bits.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{LabelRegistry, NodeDayRecord};

pub const DEFAULT_NAKAMOTO_THRESHOLD: f64 = 0.51;

/// Blocks per producing node for one chain on one day.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyDistribution {
    chain_id: String,
    day: NaiveDate,
    counts: Vec<f64>,
    node_ids: Vec<String>,
}

impl DailyDistribution {
    pub fn new(chain_id: String, day: NaiveDate, node_ids: Vec<String>, counts: Vec<f64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if counts.len() != node_ids.len() {
            return Err(Error::LengthMismatch {
                left: counts.len(),
                right: node_ids.len(),
            });
        }
        if let Some(c) = counts.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::InvalidDistribution(alloc::format!("count {c} is not positive")));
        }
        Ok(Self {
            chain_id,
            day,
            counts,
            node_ids,
        })
    }

    /// Distribution with synthetic node ids `n0, n1, ...`.
    pub fn from_counts(counts: &[f64]) -> Result<Self> {
        let ids = (0..counts.len()).map(|i| alloc::format!("n{i:06}")).collect();
        Self::new(String::new(), NaiveDate::MIN, ids, counts.to_vec())
    }

    pub fn chain_id(&self) -> &str {
        &self.chain_id
    }

    pub fn day(&self) -> NaiveDate {
        self.day
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.counts)
    }

    pub fn node_count(&self) -> usize {
        self.counts.len()
    }

    pub fn gini(&self) -> f64 {
        gini(&self.counts)
    }

    pub fn nakamoto(&self, threshold: f64) -> usize {
        nakamoto(&self.counts, &self.node_ids, threshold)
    }

    pub fn hhi(&self) -> f64 {
        hhi(&self.counts)
    }

    pub fn metrics_row(&self, threshold: f64) -> MetricsRow {
        MetricsRow {
            chain_id: self.chain_id.clone(),
            day: self.day,
            entropy: self.entropy(),
            nodes: self.node_count() as f64,
            gini: self.gini(),
            nakamoto: self.nakamoto(threshold) as f64,
            hhi: self.hhi(),
        }
    }
}

/// Groups node-day records into one distribution per `(chain, day)`, ordered by chain then day.
///
/// Within a distribution nodes are ordered by id.
pub fn daily_distributions(records: &[NodeDayRecord]) -> Result<Vec<DailyDistribution>> {
    let mut grouped: BTreeMap<(&str, NaiveDate), BTreeMap<&str, f64>> = BTreeMap::new();
    for r in records {
        *grouped
            .entry((r.chain_id.as_str(), r.day))
            .or_default()
            .entry(r.node_id.as_str())
            .or_insert(0.0) += r.blocks;
    }
    grouped
        .into_iter()
        .map(|((chain, day), nodes)| {
            let (ids, counts): (Vec<String>, Vec<f64>) =
                nodes.into_iter().map(|(id, c)| (String::from(id), c)).unzip();
            DailyDistribution::new(String::from(chain), day, ids, counts)
        })
        .collect()
}

/// The five daily metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub chain_id: String,
    pub day: NaiveDate,
    pub entropy: f64,
    pub nodes: f64,
    pub gini: f64,
    pub nakamoto: f64,
    pub hhi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Entropy,
    Nodes,
    Gini,
    Nakamoto,
    Hhi,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Entropy, Metric::Nodes, Metric::Gini, Metric::Nakamoto, Metric::Hhi];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Entropy => "entropy",
            Metric::Nodes => "nodes",
            Metric::Gini => "gini",
            Metric::Nakamoto => "nakamoto",
            Metric::Hhi => "hhi",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::Entropy => "Entropy",
            Metric::Nodes => "Nodes",
            Metric::Gini => "Gini",
            Metric::Nakamoto => "Nakamoto",
            Metric::Hhi => "HHI",
        }
    }
}

impl core::fmt::Display for Metric {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(alloc::format!("unknown metric {s:?}")))
    }
}

impl MetricsRow {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Entropy => self.entropy,
            Metric::Nodes => self.nodes,
            Metric::Gini => self.gini,
            Metric::Nakamoto => self.nakamoto,
            Metric::Hhi => self.hhi,
        }
    }
}

/// Shannon entropy in bits, one term per node.
///
/// Evaluated as `log2(S) - Σ x log2 x / S`, which returns `log2 N` exactly for unit counts.
pub fn entropy_bits(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if counts.len() <= 1 || total <= 0.0 {
        return 0.0;
    }
    let weighted: f64 = counts.iter().filter(|&&x| x > 0.0).map(|&x| x * libm::log2(x)).sum();
    let h = libm::log2(total) - weighted / total;
    h.max(0.0)
}

/// Gini coefficient from the sorted-rank identity `Σ (2i - N - 1) x_(i) / (N S)`.
pub fn gini(counts: &[f64]) -> f64 {
    let n = counts.len();
    if n <= 1 {
        return 0.0;
    }
    let mut sorted = counts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    let nf = n as f64;
    let acc: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (2.0 * (i + 1) as f64 - nf - 1.0) * x)
        .sum();
    (acc / (nf * total)).max(0.0)
}

/// Smallest number of top producers whose combined share reaches `threshold`.
///
/// Producers are ranked by count descending, ties by node id ascending.
pub fn nakamoto<S: AsRef<str>>(counts: &[f64], node_ids: &[S], threshold: f64) -> usize {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        counts[b]
            .total_cmp(&counts[a])
            .then_with(|| node_ids[a].as_ref().cmp(node_ids[b].as_ref()))
    });
    let total: f64 = counts.iter().sum();
    let target = threshold * total;
    let mut cum = 0.0;
    for (n, &i) in order.iter().enumerate() {
        cum += counts[i];
        if cum >= target {
            return n + 1;
        }
    }
    counts.len()
}

/// Herfindahl–Hirschman index, `Σ x² / S²`.
pub fn hhi(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    let sq: f64 = counts.iter().map(|x| x * x).sum();
    sq / (total * total)
}

/// Entropy after dropping every node whose registry group is in `excluded_groups`.
pub fn knockout_entropy(
    dist: &DailyDistribution,
    registry: &LabelRegistry,
    excluded_groups: &BTreeSet<String>,
) -> Result<f64> {
    let kept: Vec<f64> = dist
        .node_ids
        .iter()
        .zip(&dist.counts)
        .filter(|(id, _)| !excluded_groups.contains(registry.group_of(id)))
        .map(|(_, &c)| c)
        .collect();
    if kept.is_empty() {
        return Err(Error::AllNodesExcluded);
    }
    Ok(entropy_bits(&kept))
}

/// Fractional peak-to-trough decline around an event.
///
/// The peak is the maximum over `[event - peak_window, event]`, the trough the minimum over
/// `[event, event + trough_window]`.
pub fn exposure_drawdown(
    series: &[(NaiveDate, f64)],
    event_date: NaiveDate,
    peak_window: u32,
    trough_window: u32,
) -> Result<f64> {
    let peak_start = event_date - Days::new(peak_window as u64);
    let trough_end = event_date + Days::new(trough_window as u64);
    let peak = series
        .iter()
        .filter(|(d, _)| *d >= peak_start && *d <= event_date)
        .map(|&(_, v)| v)
        .reduce(f64::max)
        .ok_or(Error::EmptyWindow("peak"))?;
    let trough = series
        .iter()
        .filter(|(d, _)| *d >= event_date && *d <= trough_end)
        .map(|&(_, v)| v)
        .reduce(f64::min)
        .ok_or(Error::EmptyWindow("trough"))?;
    if peak == 0.0 {
        return Err(Error::ZeroPeak);
    }
    Ok((peak - trough) / peak)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Recovery {
    Days(f64),
    /// The post-event slope does not point back toward the pre-event level.
    NoRecovery,
}

/// Days needed for a post-event slope to undo a level jump.
pub fn recovery_time(jump: f64, post_slope: f64) -> Recovery {
    if jump == 0.0 {
        return Recovery::Days(0.0);
    }
    if !(post_slope > 0.0) {
        return Recovery::NoRecovery;
    }
    Recovery::Days(jump.abs() / post_slope)
}

/// Product-moment correlation of two equally long series.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 3 {
        return Err(Error::TooFewPoints { need: 3, got: a.len() });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance("correlation input".into()));
    }
    Ok((sab / libm::sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

/// Aligns two dated series on their common dates, in date order.
pub fn align_series(a: &[(NaiveDate, f64)], b: &[(NaiveDate, f64)]) -> (Vec<f64>, Vec<f64>) {
    let bm: BTreeMap<NaiveDate, f64> = b.iter().copied().collect();
    let am: BTreeMap<NaiveDate, f64> = a.iter().copied().collect();
    am.into_iter()
        .filter_map(|(d, x)| bm.get(&d).map(|&y| (x, y)))
        .unzip()
}
