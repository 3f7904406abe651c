//! Least squares with fixed-effect absorption and cluster-robust covariance.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::inference;
use super::spec::{Clustering, RegressionSpec};
use crate::error::{Error, Result};
use crate::panel::PanelObservation;

/// Singular values below this fraction of the largest mark the design as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Maps labels to dense ids in order of first appearance.
///
/// Ids depend only on the partition and the observation order, so relabeling clusters leaves
/// every downstream sum in the same order.
pub fn dense_ids<T: Ord + Clone>(labels: &[T]) -> Vec<u32> {
    let mut map: BTreeMap<T, u32> = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len() as u32;
            *map.entry(l.clone()).or_insert(next)
        })
        .collect()
}

/// A ready-to-fit design: named regressor columns, response, and grouping ids.
#[derive(Debug, Clone)]
pub struct Design {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Chain cluster id per row.
    pub chain_ids: Vec<u32>,
    /// Calendar-month id per row.
    pub month_ids: Vec<u32>,
    /// Absorb fixed effects on `month_ids`.
    pub month_fe: bool,
}

impl Design {
    pub fn from_panel(panel: &[PanelObservation], spec: &RegressionSpec) -> Result<Design> {
        spec.validate()?;
        let terms = spec.effective_terms();
        let n = panel.len();
        let k = terms.len();
        let mut x = DMatrix::zeros(n, k);
        let mut y = DVector::zeros(n);
        for (i, obs) in panel.iter().enumerate() {
            y[i] = obs.metric(spec.dependent);
            for (j, t) in terms.iter().enumerate() {
                x[(i, j)] = t.value(obs)?;
            }
        }
        let chains: Vec<&str> = panel.iter().map(|o| o.chain_id.as_str()).collect();
        let months: Vec<i32> = panel.iter().map(PanelObservation::month_key).collect();
        Ok(Design {
            names: terms.iter().map(|t| t.name()).collect(),
            x,
            y,
            chain_ids: dense_ids(&chains),
            month_ids: dense_ids(&months),
            month_fe: spec.month_fe,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub terms: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Row-major coefficient covariance.
    pub covariance: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    pub n_obs: usize,
    pub clustering: Clustering,
    /// Cluster counts per dimension actually used.
    pub n_clusters: Vec<(String, usize)>,
    pub month_fe: bool,
    pub warnings: Vec<String>,
}

impl RegressionResult {
    pub fn index(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    pub fn coef(&self, term: &str) -> Option<f64> {
        self.index(term).map(|i| self.estimates[i])
    }

    pub fn se(&self, term: &str) -> Option<f64> {
        self.index(term).map(|i| self.std_errors[i])
    }

    pub fn t_stat(&self, term: &str) -> Option<f64> {
        self.index(term).map(|i| self.estimates[i] / self.std_errors[i])
    }

    pub fn p_value(&self, term: &str) -> Option<f64> {
        self.t_stat(term).map(inference::two_sided_p)
    }

    pub fn ci95(&self, term: &str) -> Option<(f64, f64)> {
        self.index(term)
            .map(|i| inference::ci95(self.estimates[i], self.std_errors[i]))
    }
}

/// Fits `spec` on the panel rows.
pub fn ols(panel: &[PanelObservation], spec: &RegressionSpec) -> Result<RegressionResult> {
    let design = Design::from_panel(panel, spec)?;
    fit(&design, spec.clustering)
}

fn demean_within(values: &mut [f64], groups: &[u32], n_groups: usize) {
    let mut sums = alloc::vec![0.0; n_groups];
    let mut counts = alloc::vec![0usize; n_groups];
    for (v, &g) in values.iter().zip(groups) {
        sums[g as usize] += *v;
        counts[g as usize] += 1;
    }
    for (v, &g) in values.iter_mut().zip(groups) {
        *v -= sums[g as usize] / counts[g as usize] as f64;
    }
}

fn n_groups(ids: &[u32]) -> usize {
    ids.iter().map(|&g| g as usize + 1).max().unwrap_or(0)
}

/// Least squares on a prepared design.
pub fn fit(design: &Design, clustering: Clustering) -> Result<RegressionResult> {
    let n = design.x.nrows();
    let k = design.x.ncols();
    if design.y.len() != n || design.chain_ids.len() != n || design.month_ids.len() != n {
        return Err(Error::InvalidSpec("design dimensions disagree".into()));
    }
    if k == 0 {
        return Err(Error::InvalidSpec("design has no regressors".into()));
    }

    let mut x = design.x.clone();
    let mut y = design.y.clone();
    let mut absorbed = 0;
    if design.month_fe {
        absorbed = n_groups(&design.month_ids);
        demean_within(y.as_mut_slice(), &design.month_ids, absorbed);
        for j in 0..k {
            let mut col: Vec<f64> = x.column(j).iter().copied().collect();
            demean_within(&mut col, &design.month_ids, absorbed);
            x.set_column(j, &DVector::from_vec(col));
        }
    }
    let dof_params = k + absorbed;
    if n <= dof_params {
        return Err(Error::InvalidSpec(format!("{n} observations cannot identify {dof_params} parameters")));
    }

    // unit-norm columns so the rank test does not depend on regressor units
    let norms: Vec<f64> = (0..k).map(|j| x.column(j).norm()).collect();
    let zero_cols: Vec<String> = norms
        .iter()
        .zip(&design.names)
        .filter(|(nm, _)| **nm == 0.0)
        .map(|(_, name)| name.clone())
        .collect();
    if !zero_cols.is_empty() {
        return Err(Error::RankDeficient { terms: zero_cols });
    }
    let mut xs = x.clone();
    for j in 0..k {
        xs.column_mut(j).scale_mut(1.0 / norms[j]);
    }
    let svd = xs.svd(true, true);
    let u = svd.u.as_ref().expect("requested u");
    let v_t = svd.v_t.as_ref().expect("requested v_t");
    let sv = &svd.singular_values;
    let s_max = sv.max();
    let small: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] < RANK_TOLERANCE * s_max).collect();
    if !small.is_empty() {
        let mut involved = alloc::vec![false; k];
        for &i in &small {
            let row = v_t.row(i);
            let peak = row.amax();
            for j in 0..k {
                if row[j].abs() > 1e-6 * peak {
                    involved[j] = true;
                }
            }
        }
        let terms = design
            .names
            .iter()
            .zip(involved)
            .filter(|(_, hit)| *hit)
            .map(|(n, _)| n.clone())
            .collect();
        return Err(Error::RankDeficient { terms });
    }

    // beta_s = V S^-1 U' y ; bread_s = V S^-2 V'
    let uty = u.transpose() * &y;
    let mut beta = DVector::zeros(k);
    let mut bread = DMatrix::zeros(k, k);
    for i in 0..k {
        let vi = v_t.row(i).transpose();
        beta += &vi * (uty[i] / sv[i]);
        bread += &vi * vi.transpose() / (sv[i] * sv[i]);
    }
    for j in 0..k {
        beta[j] /= norms[j];
    }
    for a in 0..k {
        for b in 0..k {
            bread[(a, b)] /= norms[a] * norms[b];
        }
    }

    let fitted = &x * &beta;
    let resid = &y - &fitted;
    let ssr = resid.norm_squared();
    let mean_y = design.y.mean();
    let sst: f64 = design.y.iter().map(|v| (v - mean_y) * (v - mean_y)).sum();
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };

    let cov = super::covariance::cluster_covariance(&x, resid.as_slice(), &bread, design, clustering, dof_params)?;
    let mut warnings = Vec::new();
    for (dim, g) in &cov.clusters {
        if *g < k {
            warnings.push(format!("{g} {dim} clusters for {k} coefficients"));
        }
    }
    let std_errors = (0..k).map(|i| libm::sqrt(cov.matrix[(i, i)].max(0.0))).collect();
    Ok(RegressionResult {
        terms: design.names.clone(),
        estimates: beta.iter().copied().collect(),
        std_errors,
        covariance: (0..k)
            .map(|i| (0..k).map(|j| cov.matrix[(i, j)]).collect())
            .collect(),
        residuals: resid.iter().copied().collect(),
        r_squared,
        n_obs: n,
        clustering,
        n_clusters: cov.clusters,
        month_fe: design.month_fe,
        warnings,
    })
}
