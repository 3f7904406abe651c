use alloc::format;
use alloc::vec::Vec;

use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricsRow;
use crate::panel::{entropy_row, month_key};

/// A metric-level panel: `y = level_c + u_{c,m} + e_{c,t} + effect·treated·post`.
///
/// `u` is a chain × month random effect shared by every day of the cell and `e` is iid.
/// Only entropy varies; the other metric columns are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPanelConfig {
    pub start_date: NaiveDate,
    pub n_days: u32,
    pub event_date: NaiveDate,
    /// Entropy level per chain; the first chain is treated. Chains are named `chain0`, `chain1`, ...
    pub levels: Vec<f64>,
    pub effect: f64,
    pub cell_sd: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

/// Draws one panel of metric rows from `config`.
pub fn simulate_metric_panel(config: &MetricPanelConfig) -> Result<Vec<MetricsRow>> {
    if config.levels.len() < 2 {
        return Err(Error::InvalidConfig("need a treated chain and at least one control".into()));
    }
    let cell = Normal::new(0.0, config.cell_sd).map_err(|e| Error::InvalidConfig(format!("cell_sd: {e}")))?;
    let noise = Normal::new(0.0, config.noise_sd).map_err(|e| Error::InvalidConfig(format!("noise_sd: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows = Vec::with_capacity(config.levels.len() * config.n_days as usize);
    for (c, level) in config.levels.iter().enumerate() {
        let id = format!("chain{c}");
        let mut month = None;
        let mut u = 0.0;
        for t in 0..config.n_days {
            let day = config.start_date + Days::new(u64::from(t));
            let m = month_key(day);
            if month != Some(m) {
                month = Some(m);
                u = cell.sample(&mut rng);
            }
            let treated = c == 0 && day >= config.event_date;
            let y = level + u + noise.sample(&mut rng) + if treated { config.effect } else { 0.0 };
            rows.push(entropy_row(&id, day, y));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use chrono::Datelike;

    #[test]
    fn cells_share_their_effect() {
        let cfg = MetricPanelConfig {
            start_date: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            n_days: 90,
            event_date: NaiveDate::from_ymd_opt(2021, 2, 15).unwrap(),
            levels: vec![4.0, 3.0],
            effect: -0.209,
            cell_sd: 0.1,
            noise_sd: 0.0,
            seed: 3,
        };
        let rows = simulate_metric_panel(&cfg).unwrap();
        assert_eq!(rows.len(), 180);
        // without iid noise a control month is constant
        let jan: Vec<f64> = rows
            .iter()
            .filter(|r| r.chain_id == "chain1" && r.day.month() == 1)
            .map(|r| r.entropy)
            .collect();
        assert!(jan.iter().all(|v| *v == jan[0]));
        assert_eq!(rows, simulate_metric_panel(&cfg).unwrap());
    }
}
