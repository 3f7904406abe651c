//! Synthetic difference-in-differences with placebo standard errors.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::simplex::simplex_least_squares;
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::panel::Panel;

/// How placebo replications are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlaceboScheme {
    /// [`Subsets`](Self::Subsets) below [`SUBSET_PLACEBO_BELOW`] controls, otherwise
    /// [`LeaveOneIn`](Self::LeaveOneIn).
    #[default]
    Auto,
    /// Each control in turn plays the treated unit against the remaining controls.
    LeaveOneIn,
    /// Each control in turn plays the treated unit against every subset of at least two of
    /// the remaining controls (every non-empty subset when only one or two remain).
    Subsets,
}

/// Control-pool size from which the automatic scheme stops enumerating donor subsets.
pub const SUBSET_PLACEBO_BELOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdidOptions {
    /// Overrides the unit-weight ridge penalty.
    pub zeta_omega: Option<f64>,
    pub placebo: PlaceboScheme,
    /// Uniform unit and time weights instead of fitted ones; the estimate is then plain DiD.
    pub uniform_weights: bool,
}

impl Default for SdidOptions {
    fn default() -> Self {
        Self {
            zeta_omega: None,
            placebo: PlaceboScheme::Auto,
            uniform_weights: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdidResult {
    pub att: f64,
    pub unit_weights: Vec<(String, f64)>,
    pub time_weights: Vec<(NaiveDate, f64)>,
    pub placebo_se: f64,
    pub n_placebos: usize,
    pub placebo_atts: Vec<f64>,
    pub bandwidth: i64,
    pub n_pre: usize,
    pub n_post: usize,
    pub zeta_omega: f64,
    pub zeta_lambda: f64,
}

/// Outcomes in a balanced window: one row per unit, columns ordered pre then post.
struct Outcomes {
    units: Vec<String>,
    days: Vec<NaiveDate>,
    y: DMatrix<f64>,
    n_pre: usize,
}

fn outcomes(panel: &Panel, metric: Metric, bandwidth: i64) -> Result<Outcomes> {
    let mut cells: BTreeMap<&str, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    let mut days: BTreeSet<NaiveDate> = BTreeSet::new();
    for o in panel.observations.iter().filter(|o| o.day_index.abs() <= bandwidth) {
        cells.entry(o.chain_id.as_str()).or_default().insert(o.day, o.metric(metric));
        days.insert(o.day);
    }
    if !cells.contains_key(panel.treated_chain.as_str()) {
        return Err(Error::TreatedChainAbsent(panel.treated_chain.clone()));
    }
    let mut units: Vec<String> = alloc::vec![panel.treated_chain.clone()];
    units.extend(cells.keys().filter(|c| **c != panel.treated_chain).map(|c| String::from(*c)));
    let days: Vec<NaiveDate> = days.into_iter().collect();
    let mut y = DMatrix::zeros(units.len(), days.len());
    for (i, u) in units.iter().enumerate() {
        let row = &cells[u.as_str()];
        for (t, d) in days.iter().enumerate() {
            y[(i, t)] = *row.get(d).ok_or_else(|| {
                Error::InvalidPanel(alloc::format!("window is unbalanced: {u} has no value on {d}"))
            })?;
        }
    }
    let n_pre = days.iter().filter(|d| **d < panel.event_date).count();
    Ok(Outcomes { units, days, y, n_pre })
}

/// Sample standard deviation of first differences of the control pre-period paths.
fn noise_scale(y: &DMatrix<f64>, controls: &[usize], n_pre: usize) -> f64 {
    let diffs: Vec<f64> = controls
        .iter()
        .flat_map(|&j| (1..n_pre).map(move |t| y[(j, t)] - y[(j, t - 1)]))
        .collect();
    if diffs.len() < 2 {
        return 0.0;
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    libm::sqrt(diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0))
}

struct Estimate {
    att: f64,
    omega: Vec<f64>,
    lambda: Vec<f64>,
    zeta_omega: f64,
    zeta_lambda: f64,
}

fn center_columns(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let mean = m.column(j).mean();
        m.column_mut(j).add_scalar_mut(-mean);
    }
}

fn center(v: &mut DVector<f64>) {
    let mean = v.mean();
    v.add_scalar_mut(-mean);
}

/// SDiD estimate with `treated` as the treated row and `controls` as donors.
fn estimate(y: &DMatrix<f64>, treated: usize, controls: &[usize], n_pre: usize, opts: &SdidOptions) -> Result<Estimate> {
    let n0 = controls.len();
    let t = y.ncols();
    let n_post = t - n_pre;
    let post_mean = |i: usize| (n_pre..t).map(|s| y[(i, s)]).sum::<f64>() / n_post as f64;

    let (omega, lambda, zeta_omega, zeta_lambda) = if opts.uniform_weights {
        (
            alloc::vec![1.0 / n0 as f64; n0],
            alloc::vec![1.0 / n_pre as f64; n_pre],
            0.0,
            0.0,
        )
    } else {
        let sigma = noise_scale(y, controls, n_pre);
        if !(sigma > 0.0) {
            return Err(Error::DegeneratePrePeriod);
        }
        let zeta_omega = opts.zeta_omega.unwrap_or(libm::pow(n_post as f64, 0.25) * sigma);
        let zeta_lambda = 1e-6 * sigma;

        // unit weights: treated pre path by control pre paths, each centred over time
        let mut a = DMatrix::from_fn(n_pre, n0, |s, j| y[(controls[j], s)]);
        let mut b = DVector::from_fn(n_pre, |s, _| y[(treated, s)]);
        center_columns(&mut a);
        center(&mut b);
        let omega = simplex_least_squares(&a, &b, zeta_omega).weights;

        // time weights: control post means by control pre periods, each centred over units
        let mut a = DMatrix::from_fn(n0, n_pre, |j, s| y[(controls[j], s)]);
        let mut b = DVector::from_fn(n0, |j, _| post_mean(controls[j]));
        center_columns(&mut a);
        center(&mut b);
        let lambda = simplex_least_squares(&a, &b, zeta_lambda).weights;
        (omega, lambda, zeta_omega, zeta_lambda)
    };

    let contrast = |i: usize| post_mean(i) - (0..n_pre).map(|s| lambda[s] * y[(i, s)]).sum::<f64>();
    let synthetic: f64 = controls.iter().zip(&omega).map(|(&j, w)| w * contrast(j)).sum();
    Ok(Estimate {
        att: contrast(treated) - synthetic,
        omega,
        lambda,
        zeta_omega,
        zeta_lambda,
    })
}

fn subsets(pool: &[usize]) -> Vec<Vec<usize>> {
    let min = if pool.len() <= 2 { 1 } else { 2 };
    (1u32..(1 << pool.len()))
        .map(|mask| {
            pool.iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &j)| j)
                .collect::<Vec<_>>()
        })
        .filter(|s| s.len() >= min)
        .collect()
}

/// Estimates the ATT of the panel's treated chain within `bandwidth` days of the event.
///
/// Pre-periods are days before the event date, post-periods the event date onward. The
/// window must be balanced across chains.
pub fn sdid(panel: &Panel, metric: Metric, bandwidth: i64, opts: &SdidOptions) -> Result<SdidResult> {
    let data = outcomes(panel, metric, bandwidth)?;
    let n0 = data.units.len() - 1;
    if n0 < 2 {
        return Err(Error::TooFewControls(n0));
    }
    let n_pre = data.n_pre;
    let n_post = data.days.len() - n_pre;
    let min_pre = if opts.uniform_weights { 1 } else { 2 };
    if n_pre < min_pre || n_post < 1 {
        return Err(Error::InvalidPanel(alloc::format!(
            "bandwidth {bandwidth} leaves {n_pre} pre and {n_post} post periods"
        )));
    }
    let controls: Vec<usize> = (1..=n0).collect();
    let main = estimate(&data.y, 0, &controls, n_pre, opts)?;

    let mut placebo_atts = Vec::new();
    for &j in &controls {
        let rest: Vec<usize> = controls.iter().copied().filter(|&c| c != j).collect();
        let donor_sets = match opts.placebo {
            PlaceboScheme::Auto if n0 < SUBSET_PLACEBO_BELOW => subsets(&rest),
            PlaceboScheme::Auto | PlaceboScheme::LeaveOneIn => alloc::vec![rest],
            PlaceboScheme::Subsets => subsets(&rest),
        };
        for donors in donor_sets {
            match estimate(&data.y, j, &donors, n_pre, opts) {
                Ok(e) => placebo_atts.push(e.att),
                // a donor pool with flat pre-periods cannot yield a placebo; skip it
                Err(Error::DegeneratePrePeriod) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let n_placebos = placebo_atts.len();
    let placebo_se = if n_placebos == 0 {
        f64::NAN
    } else {
        let mean = placebo_atts.iter().sum::<f64>() / n_placebos as f64;
        libm::sqrt(placebo_atts.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n_placebos as f64)
    };

    Ok(SdidResult {
        att: main.att,
        unit_weights: data.units[1..].iter().cloned().zip(main.omega).collect(),
        time_weights: data.days[..n_pre].iter().copied().zip(main.lambda).collect(),
        placebo_se,
        n_placebos,
        placebo_atts,
        bandwidth,
        n_pre,
        n_post,
        zeta_omega: main.zeta_omega,
        zeta_lambda: main.zeta_lambda,
    })
}

/// Runs [`sdid`] at each bandwidth in turn.
pub fn sdid_sweep(panel: &Panel, metric: Metric, bandwidths: &[i64], opts: &SdidOptions) -> Result<Vec<SdidResult>> {
    bandwidths.iter().map(|&b| sdid(panel, metric, b, opts)).collect()
}
