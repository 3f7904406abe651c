use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::panel::PanelObservation;

/// One multiplicative component of a regression term.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Chain,
    After,
    During,
    Day,
    Exposure,
    Covariate(String),
    /// Indicator of lag bucket `lag`, where bucket = `floor(day_index / step)`.
    Lag { lag: i64, step: u32 },
}

impl Factor {
    pub fn name(&self) -> String {
        match self {
            Factor::Chain => "chain".into(),
            Factor::After => "after".into(),
            Factor::During => "during".into(),
            Factor::Day => "day".into(),
            Factor::Exposure => "exposure".into(),
            Factor::Covariate(name) => name.clone(),
            Factor::Lag { lag, .. } => format!("lag[{lag}]"),
        }
    }

    pub fn value(&self, obs: &PanelObservation) -> Result<f64> {
        Ok(match self {
            Factor::Chain => obs.chain_indicator as f64,
            Factor::After => obs.after as f64,
            Factor::During => obs.during as f64,
            Factor::Day => obs.day_index as f64,
            Factor::Exposure => obs.exposure,
            Factor::Covariate(name) => *obs.covariates.get(name).ok_or_else(|| {
                Error::InvalidPanel(format!("covariate {name} missing for {} on {}", obs.chain_id, obs.day))
            })?,
            Factor::Lag { lag, step } => f64::from(u8::from(lag_bucket(obs.day_index, *step) == *lag)),
        })
    }
}

/// Lag bucket of a day index: `floor(day_index / step)`.
pub fn lag_bucket(day_index: i64, step: u32) -> i64 {
    day_index.div_euclid(step.max(1) as i64)
}

/// A product of factors; the empty product is the intercept.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Term {
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn intercept() -> Self {
        Term { factors: Vec::new() }
    }

    pub fn of(factors: &[Factor]) -> Self {
        Term {
            factors: factors.to_vec(),
        }
    }

    pub fn single(f: Factor) -> Self {
        Term { factors: alloc::vec![f] }
    }

    /// `after × chain`.
    pub fn treatment() -> Self {
        Term::of(&[Factor::After, Factor::Chain])
    }

    pub fn is_intercept(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn has_lag(&self) -> bool {
        self.factors.iter().any(|f| matches!(f, Factor::Lag { .. }))
    }

    pub fn name(&self) -> String {
        if self.factors.is_empty() {
            return "intercept".to_string();
        }
        self.factors.iter().map(Factor::name).collect::<Vec<_>>().join(":")
    }

    pub fn value(&self, obs: &PanelObservation) -> Result<f64> {
        self.factors.iter().try_fold(1.0, |acc, f| Ok(acc * f.value(obs)?))
    }
}

/// Covariance estimator for coefficient standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Clustering {
    /// Heteroskedasticity-robust (HC1).
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "chain")]
    ByChain,
    #[serde(rename = "month")]
    ByMonth,
    /// Two-way chain and calendar-month clustering (chain + month − chain∩month).
    #[serde(rename = "chain-month")]
    ByChainMonth,
    /// One-way clustering on chain × month cells.
    #[serde(rename = "chain-x-month")]
    ByChainMonthCell,
}

impl Clustering {
    pub fn name(self) -> &'static str {
        match self {
            Clustering::None => "none",
            Clustering::ByChain => "chain",
            Clustering::ByMonth => "month",
            Clustering::ByChainMonth => "chain-month",
            Clustering::ByChainMonthCell => "chain-x-month",
        }
    }
}

impl core::str::FromStr for Clustering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Clustering::None,
            Clustering::ByChain,
            Clustering::ByMonth,
            Clustering::ByChainMonth,
            Clustering::ByChainMonthCell,
        ]
        .into_iter()
        .find(|c| c.name() == s)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown clustering {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub dependent: Metric,
    pub terms: Vec<Term>,
    /// Absorb calendar-month fixed effects (the intercept is then dropped).
    pub month_fe: bool,
    pub clustering: Clustering,
}

impl RegressionSpec {
    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for t in &self.terms {
            if !names.insert(t.name()) {
                return Err(Error::InvalidSpec(format!("duplicate term {}", t.name())));
            }
        }
        let treatment = Term::treatment();
        if self.terms.iter().any(Term::has_lag) && self.terms.contains(&treatment) {
            return Err(Error::InvalidSpec("lag dummies cannot be combined with the plain treatment term".into()));
        }
        if self.terms.is_empty() {
            return Err(Error::InvalidSpec("no terms".into()));
        }
        Ok(())
    }

    /// Terms that enter the design after fixed-effect absorption.
    pub fn effective_terms(&self) -> Vec<&Term> {
        self.terms
            .iter()
            .filter(|t| !(self.month_fe && t.is_intercept()))
            .collect()
    }
}
