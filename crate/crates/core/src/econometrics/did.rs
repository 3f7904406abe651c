//! Difference-in-differences specifications and the single-series event study.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::covariates::standardize_panel_covariates;
use super::inference;
use super::ols::{dense_ids, fit, ols, Design, RegressionResult};
use super::spec::{lag_bucket, Clustering, Factor, RegressionSpec, Term};
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::panel::{month_key, Panel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DidOptions {
    /// Add `after × exposure` (`during × exposure` in the multi-period forms).
    pub with_exposure: bool,
    /// Covariates to z-score per chain on pre-event rows and add as controls.
    pub covariates: Vec<String>,
    /// Also add `after × chain × covariate` for each covariate.
    pub interactions: bool,
    pub month_fe: bool,
    pub clustering: Clustering,
}

impl Default for DidOptions {
    fn default() -> Self {
        Self {
            with_exposure: false,
            covariates: Vec::new(),
            interactions: false,
            month_fe: false,
            clustering: Clustering::ByChainMonth,
        }
    }
}

fn check_single_treated(panel: &Panel) -> Result<()> {
    let treated: BTreeSet<&str> = panel
        .observations
        .iter()
        .filter(|o| o.is_treated())
        .map(|o| o.chain_id.as_str())
        .collect();
    if treated.len() != 1 {
        return Err(Error::InvalidPanel(alloc::format!(
            "expected exactly one treated chain, found {}",
            treated.len()
        )));
    }
    if panel.control_chains().is_empty() {
        return Err(Error::InvalidPanel("no control chain".into()));
    }
    Ok(())
}

fn spec(metric: Metric, terms: Vec<Term>, opts: &DidOptions) -> RegressionSpec {
    RegressionSpec {
        dependent: metric,
        terms,
        month_fe: opts.month_fe,
        clustering: opts.clustering,
    }
}

/// `Y = δ·after×chain + β₁·chain + β₂·after + α [+ β₃·after×exposure] [+ covariates]`.
pub fn did(panel: &Panel, metric: Metric, opts: &DidOptions) -> Result<RegressionResult> {
    check_single_treated(panel)?;
    let mut terms = alloc::vec![
        Term::intercept(),
        Term::treatment(),
        Term::single(Factor::Chain),
        Term::single(Factor::After),
    ];
    if opts.with_exposure {
        terms.push(Term::of(&[Factor::After, Factor::Exposure]));
    }
    let data = if opts.covariates.is_empty() {
        None
    } else {
        for c in &opts.covariates {
            terms.push(Term::single(Factor::Covariate(c.clone())));
        }
        if opts.interactions {
            for c in &opts.covariates {
                terms.push(Term::of(&[Factor::After, Factor::Chain, Factor::Covariate(c.clone())]));
            }
        }
        Some(standardize_panel_covariates(panel, &opts.covariates)?)
    };
    let rows = &data.as_ref().unwrap_or(panel).observations;
    ols(rows, &spec(metric, terms, opts))
}

/// One estimated lead/lag coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagEstimate {
    pub lag: i64,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// The omitted reference bucket, reported as zero.
    pub reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaggedDid {
    pub result: RegressionResult,
    pub lag_step: u32,
    pub lags: Vec<LagEstimate>,
}

/// Bucket left out of the lag dummies; its coefficient is normalized to zero.
pub const REFERENCE_LAG: i64 = -1;

/// Lead/lag DiD: one `lag[λ] × chain` dummy per bucket `λ ∈ -T..=T` except the reference
/// bucket `-1`, plus intercept, chain and after.
///
/// Buckets are `floor(day_index / lag_step)`; rows outside `-T..=T` are dropped and every
/// bucket must contain treated rows.
pub fn lagged_did(panel: &Panel, metric: Metric, lag_step: u32, max_lag: u32, opts: &DidOptions) -> Result<LaggedDid> {
    check_single_treated(panel)?;
    if lag_step == 0 || max_lag == 0 {
        return Err(Error::InvalidConfig("lag_step and max_lag must be positive".into()));
    }
    let t = max_lag as i64;
    let rows: Vec<_> = panel
        .observations
        .iter()
        .filter(|o| (-t..=t).contains(&lag_bucket(o.day_index, lag_step)))
        .cloned()
        .collect();
    let present: BTreeSet<i64> = rows
        .iter()
        .filter(|o| o.is_treated())
        .map(|o| lag_bucket(o.day_index, lag_step))
        .collect();
    let missing: Vec<i64> = (-t..=t).filter(|l| !present.contains(l)).collect();
    if !missing.is_empty() {
        return Err(Error::MissingLagBuckets(missing));
    }
    let mut terms = alloc::vec![Term::intercept(), Term::single(Factor::Chain), Term::single(Factor::After)];
    for lag in (-t..=t).filter(|&l| l != REFERENCE_LAG) {
        terms.push(Term::of(&[Factor::Lag { lag, step: lag_step }, Factor::Chain]));
    }
    let result = ols(&rows, &spec(metric, terms, opts))?;
    let lags = (-t..=t)
        .map(|lag| {
            if lag == REFERENCE_LAG {
                return LagEstimate {
                    lag,
                    estimate: 0.0,
                    std_error: 0.0,
                    ci_low: 0.0,
                    ci_high: 0.0,
                    reference: true,
                };
            }
            let name = Term::of(&[Factor::Lag { lag, step: lag_step }, Factor::Chain]).name();
            let i = result.index(&name).expect("lag term present");
            let (lo, hi) = inference::ci95(result.estimates[i], result.std_errors[i]);
            LagEstimate {
                lag,
                estimate: result.estimates[i],
                std_error: result.std_errors[i],
                ci_low: lo,
                ci_high: hi,
                reference: false,
            }
        })
        .collect();
    Ok(LaggedDid { result, lag_step, lags })
}

/// Multi-period DiD with separate rollout (`during`) and post-rollout (`after`) effects.
///
/// Level form: `δ₁·during×chain + δ₂·after×chain [+ β₁·during×exposure] + chain + during +
/// after + α`. The time-varying form replaces the treatment and exposure terms by their
/// products with `day` and adds a `day` term.
pub fn multi_period_did(panel: &Panel, metric: Metric, time_varying: bool, opts: &DidOptions) -> Result<RegressionResult> {
    check_single_treated(panel)?;
    if panel.during_end.is_none() || !panel.observations.iter().any(|o| o.during == 1) {
        return Err(Error::InvalidPanel("panel has no during window".into()));
    }
    let mut terms = alloc::vec![Term::intercept()];
    if time_varying {
        terms.push(Term::of(&[Factor::During, Factor::Chain, Factor::Day]));
        terms.push(Term::of(&[Factor::After, Factor::Chain, Factor::Day]));
        if opts.with_exposure {
            terms.push(Term::of(&[Factor::During, Factor::Exposure, Factor::Day]));
        }
    } else {
        terms.push(Term::of(&[Factor::During, Factor::Chain]));
        terms.push(Term::of(&[Factor::After, Factor::Chain]));
        if opts.with_exposure {
            terms.push(Term::of(&[Factor::During, Factor::Exposure]));
        }
    }
    terms.push(Term::single(Factor::Chain));
    terms.push(Term::single(Factor::During));
    terms.push(Term::single(Factor::After));
    if time_varying {
        terms.push(Term::single(Factor::Day));
    }
    ols(&panel.observations, &spec(metric, terms, opts))
}

/// `y = δ·after + β₁·day + β₂·after×day + α` on one dated series.
///
/// The series is a single chain, so two-way clustering falls back to month clustering.
pub fn event_study(series: &[(NaiveDate, f64)], event_date: NaiveDate, clustering: Clustering) -> Result<RegressionResult> {
    let pre = series.iter().filter(|(d, _)| *d < event_date).count();
    let post = series.len() - pre;
    if pre == 0 || post == 0 {
        return Err(Error::OneSidedSeries);
    }
    let n = series.len();
    let mut x = DMatrix::zeros(n, 4);
    let mut y = DVector::zeros(n);
    let mut months = Vec::with_capacity(n);
    for (i, &(d, v)) in series.iter().enumerate() {
        let day = (d - event_date).num_days() as f64;
        let after = f64::from(u8::from(d >= event_date));
        x[(i, 0)] = 1.0;
        x[(i, 1)] = after;
        x[(i, 2)] = day;
        x[(i, 3)] = after * day;
        y[i] = v;
        months.push(month_key(d));
    }
    let design = Design {
        names: ["intercept", "after", "day", "after:day"].iter().map(|s| String::from(*s)).collect(),
        x,
        y,
        chain_ids: alloc::vec![0; n],
        month_ids: dense_ids(&months),
        month_fe: false,
    };
    fit(&design, clustering)
}
