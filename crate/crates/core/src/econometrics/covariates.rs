//! Covariate standardization and collinearity diagnostics.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::ols::{fit, Design};
use super::spec::Clustering;
use crate::error::{Error, Result};
use crate::panel::Panel;

/// Standardizes `values` by the mean and sample standard deviation of the reference rows.
pub fn zscore_covariates(values: &[f64], reference: &[bool]) -> Result<Vec<f64>> {
    if values.len() != reference.len() {
        return Err(Error::LengthMismatch {
            left: values.len(),
            right: reference.len(),
        });
    }
    let window: Vec<f64> = values
        .iter()
        .zip(reference)
        .filter(|(_, r)| **r)
        .map(|(v, _)| *v)
        .collect();
    if window.is_empty() {
        return Err(Error::EmptyWindow("reference"));
    }
    if window.len() < 2 {
        return Err(Error::TooFewPoints { need: 2, got: window.len() });
    }
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(Error::ZeroVariance("covariate reference window".into()));
    }
    let sd = libm::sqrt(var);
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

/// Z-scores each named covariate per chain against that chain's pre-event rows.
pub fn standardize_panel_covariates(panel: &Panel, names: &[String]) -> Result<Panel> {
    let mut out = panel.clone();
    for name in names {
        let mut by_chain: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, o) in out.observations.iter().enumerate() {
            by_chain.entry(o.chain_id.clone()).or_default().push(i);
        }
        for (chain, rows) in by_chain {
            let mut values = Vec::with_capacity(rows.len());
            for &i in &rows {
                let o = &out.observations[i];
                values.push(*o.covariates.get(name).ok_or_else(|| {
                    Error::InvalidPanel(format!("covariate {name} missing for {chain} on {}", o.day))
                })?);
            }
            let reference: Vec<bool> = rows.iter().map(|&i| out.observations[i].day_index < 0).collect();
            let z = zscore_covariates(&values, &reference)
                .map_err(|e| Error::InvalidPanel(format!("covariate {name} on {chain}: {e}")))?;
            for (&i, v) in rows.iter().zip(z) {
                out.observations[i].covariates.insert(name.clone(), v);
            }
        }
    }
    Ok(out)
}

/// Variance inflation factor of each covariate against the others (with an intercept).
///
/// Reported as a diagnostic only; nothing is dropped.
pub fn variance_inflation(panel: &Panel, names: &[String]) -> Result<Vec<(String, f64)>> {
    if names.len() < 2 {
        return Ok(names.iter().map(|n| (n.clone(), 1.0)).collect());
    }
    let n = panel.observations.len();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for name in names {
        let col = panel
            .observations
            .iter()
            .map(|o| {
                o.covariates
                    .get(name)
                    .copied()
                    .ok_or_else(|| Error::InvalidPanel(format!("covariate {name} missing")))
            })
            .collect::<Result<Vec<f64>>>()?;
        cols.push(col);
    }
    let mut out = Vec::new();
    for (target, name) in names.iter().enumerate() {
        let others: Vec<usize> = (0..names.len()).filter(|&j| j != target).collect();
        let x = DMatrix::from_fn(n, others.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[others[j - 1]][i] });
        let mut labels = alloc::vec![String::from("intercept")];
        labels.extend(others.iter().map(|&j| names[j].clone()));
        let design = Design {
            names: labels,
            x,
            y: DVector::from_column_slice(&cols[target]),
            chain_ids: alloc::vec![0; n],
            month_ids: alloc::vec![0; n],
            month_fe: false,
        };
        let vif = match fit(&design, Clustering::None) {
            Ok(r) if r.r_squared < 1.0 => 1.0 / (1.0 - r.r_squared),
            Ok(_) | Err(Error::RankDeficient { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        out.push((name.clone(), vif));
    }
    Ok(out)
}
