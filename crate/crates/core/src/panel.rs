//! Chain-day panels carrying metric values and design variables for one event.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Metric, MetricsRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelObservation {
    pub chain_id: String,
    pub day: NaiveDate,
    pub metrics: MetricsRow,
    pub chain_indicator: u8,
    pub after: u8,
    pub during: u8,
    /// Days since the event date, zero on the event date.
    pub day_index: i64,
    pub exposure: f64,
    pub covariates: BTreeMap<String, f64>,
}

impl PanelObservation {
    pub fn metric(&self, metric: Metric) -> f64 {
        self.metrics.get(metric)
    }

    pub fn is_treated(&self) -> bool {
        self.chain_indicator == 1
    }

    /// Calendar month key `year * 12 + month0`.
    pub fn month_key(&self) -> i32 {
        month_key(self.day)
    }
}

pub fn month_key(day: NaiveDate) -> i32 {
    day.year() * 12 + day.month0() as i32
}

/// Days one chain is missing relative to the panel's full date range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapReport {
    pub chain_id: String,
    pub missing_days: Vec<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub treated_chain: String,
    pub event_date: NaiveDate,
    pub during_end: Option<NaiveDate>,
    pub observations: Vec<PanelObservation>,
    pub gaps: Vec<GapReport>,
}

impl Panel {
    pub fn is_balanced(&self) -> bool {
        self.gaps.is_empty()
    }

    /// Chain ids in sorted order.
    pub fn chains(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.observations.iter().map(|o| o.chain_id.as_str()).collect();
        set.into_iter().collect()
    }

    pub fn control_chains(&self) -> Vec<&str> {
        self.chains()
            .into_iter()
            .filter(|c| *c != self.treated_chain)
            .collect()
    }

    /// Keeps observations whose day index lies in `[-before, after]`.
    pub fn window(&self, before: i64, after: i64) -> Panel {
        Panel {
            observations: self
                .observations
                .iter()
                .filter(|o| o.day_index >= -before && o.day_index <= after)
                .cloned()
                .collect(),
            ..self.clone()
        }
    }

    /// Restricts the panel to the treated chain and the listed controls.
    pub fn with_chains(&self, keep: &[&str]) -> Panel {
        Panel {
            observations: self
                .observations
                .iter()
                .filter(|o| o.chain_id == self.treated_chain || keep.contains(&o.chain_id.as_str()))
                .cloned()
                .collect(),
            gaps: self
                .gaps
                .iter()
                .filter(|g| g.chain_id == self.treated_chain || keep.contains(&g.chain_id.as_str()))
                .cloned()
                .collect(),
            ..self.clone()
        }
    }

    /// Attaches a covariate series per chain; days without a value are left unset.
    pub fn attach_covariate(&mut self, name: &str, values: &BTreeMap<(String, NaiveDate), f64>) {
        for o in &mut self.observations {
            if let Some(&v) = values.get(&(o.chain_id.clone(), o.day)) {
                o.covariates.insert(name.into(), v);
            }
        }
    }
}

/// Builds the event panel from per-chain daily metric rows.
///
/// `after` turns on at `event_date`. With `during_end`, days in `[event_date, during_end]`
/// get `during = 1` and `after` turns on only after `during_end`. Missing chain-days are
/// reported in [`Panel::gaps`], never filled in.
pub fn assemble_panel(
    metrics: &[MetricsRow],
    event_date: NaiveDate,
    treated_chain: &str,
    during_end: Option<NaiveDate>,
    exposures: &BTreeMap<String, f64>,
) -> Result<Panel> {
    if !metrics.iter().any(|m| m.chain_id == treated_chain) {
        return Err(Error::TreatedChainAbsent(treated_chain.into()));
    }
    let first = metrics.iter().map(|m| m.day).min().expect("non-empty");
    let last = metrics.iter().map(|m| m.day).max().expect("non-empty");
    if event_date < first || event_date > last {
        return Err(Error::EventOutOfRange {
            event: event_date,
            first,
            last,
        });
    }
    if let Some(end) = during_end {
        if end < event_date {
            return Err(Error::InvalidConfig("during window ends before the event date".into()));
        }
    }
    let mut seen: BTreeSet<(&str, NaiveDate)> = BTreeSet::new();
    let mut by_chain: BTreeMap<&str, BTreeSet<NaiveDate>> = BTreeMap::new();
    let mut observations = Vec::with_capacity(metrics.len());
    for m in metrics {
        if !seen.insert((m.chain_id.as_str(), m.day)) {
            return Err(Error::InvalidPanel(alloc::format!(
                "duplicate metrics row for {} on {}",
                m.chain_id, m.day
            )));
        }
        by_chain.entry(m.chain_id.as_str()).or_default().insert(m.day);
        let (during, after) = match during_end {
            None => (0, u8::from(m.day >= event_date)),
            Some(end) => (u8::from(m.day >= event_date && m.day <= end), u8::from(m.day > end)),
        };
        observations.push(PanelObservation {
            chain_id: m.chain_id.clone(),
            day: m.day,
            metrics: m.clone(),
            chain_indicator: u8::from(m.chain_id == treated_chain),
            after,
            during,
            day_index: (m.day - event_date).num_days(),
            exposure: exposures.get(&m.chain_id).copied().unwrap_or(0.0),
            covariates: BTreeMap::new(),
        });
    }
    observations.sort_by(|a, b| a.chain_id.cmp(&b.chain_id).then(a.day.cmp(&b.day)));

    let span = (last - first).num_days() as u64 + 1;
    let gaps = by_chain
        .into_iter()
        .filter_map(|(chain, days)| {
            let missing: Vec<NaiveDate> = (0..span)
                .map(|i| first + Days::new(i))
                .filter(|d| !days.contains(d))
                .collect();
            (!missing.is_empty()).then(|| GapReport {
                chain_id: chain.into(),
                missing_days: missing,
            })
        })
        .collect();

    Ok(Panel {
        treated_chain: treated_chain.into(),
        event_date,
        during_end,
        observations,
        gaps,
    })
}

/// Metric rows for tests and simulations: only `entropy` varies.
pub fn entropy_row(chain_id: &str, day: NaiveDate, entropy: f64) -> MetricsRow {
    MetricsRow {
        chain_id: chain_id.into(),
        day,
        entropy,
        nodes: 0.0,
        gini: 0.0,
        nakamoto: 0.0,
        hhi: 0.0,
    }
}
