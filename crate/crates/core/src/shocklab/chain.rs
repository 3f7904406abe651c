use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{ChainConfig, ChainScenario, Scenario, ShockConfig, ShockKind, WeightDistribution};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsRow, DEFAULT_NAKAMOTO_THRESHOLD};
use crate::records::NodeDayRecord;

const WEIGHT_STREAM: u64 = 0;
const SHOCK_STREAM: u64 = 1;
const DRAW_STREAM: u64 = 2;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Draws `n` weights summing to one.
fn draw_weights(dist: &WeightDistribution, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = match *dist {
        WeightDistribution::Uniform => alloc::vec![1.0; n],
        WeightDistribution::PowerLaw { alpha } => (1..=n).map(|k| libm::pow(k as f64, -alpha)).collect(),
        WeightDistribution::Dirichlet { concentration } => {
            let g = Gamma::new(concentration, 1.0).expect("validated concentration");
            (0..n).map(|_| g.sample(rng)).collect()
        }
    };
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Initial node weights of a chain, as used by [`simulate_chain`].
pub fn initial_weights(config: &ChainConfig) -> Result<Vec<f64>> {
    config.validate()?;
    Ok(draw_weights(&config.weight_distribution, config.n_nodes, &mut rng(config.seed, WEIGHT_STREAM)))
}

/// Metrics of the weight vector itself: the limit of the daily metrics as the block count grows.
///
/// Weights are renormalized; `nodes` counts positive weights. The returned row carries an
/// empty chain id and the epoch date.
pub fn expected_metrics(weights: &[f64], blocks_per_day: u64) -> MetricsRow {
    let total: f64 = weights.iter().sum();
    let counts: Vec<f64> = weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|w| w / total * blocks_per_day as f64)
        .collect();
    let day = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date");
    if counts.is_empty() {
        return crate::panel::entropy_row("", day, 0.0);
    }
    let ids: Vec<usize> = (0..counts.len()).collect();
    let ids: Vec<String> = ids.iter().map(|i| format!("{i:08}")).collect();
    MetricsRow {
        chain_id: String::new(),
        day,
        entropy: metrics::entropy_bits(&counts),
        nodes: counts.len() as f64,
        gini: metrics::gini(&counts),
        nakamoto: metrics::nakamoto(&counts, &ids, DEFAULT_NAKAMOTO_THRESHOLD) as f64,
        hhi: metrics::hhi(&counts),
    }
}

/// Realized shock state and expected metric paths of one simulated chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub chain_id: String,
    pub days: Vec<NaiveDate>,
    /// Weight taken out by shocks so far, as a share of the pre-shock total.
    pub removed_share: Vec<f64>,
    /// Weight that has re-entered so far.
    pub returned_share: Vec<f64>,
    /// Total active weight, `1 - removed + returned`.
    pub active_weight: Vec<f64>,
    /// Metrics of the normalized weights on each day.
    pub expected: Vec<MetricsRow>,
    /// Metrics of the initial weights.
    pub baseline: MetricsRow,
}

impl GroundTruth {
    pub fn expected_entropy(&self) -> Vec<f64> {
        self.expected.iter().map(|m| m.entropy).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRun {
    pub records: Vec<NodeDayRecord>,
    pub truth: GroundTruth,
}

struct Active {
    start: usize,
    instant: bool,
    rollout: u32,
    /// (slot, removed fraction of that slot's weight)
    targets: Vec<(usize, f64)>,
    total: f64,
    rate: f64,
    flex: f64,
    fresh: Vec<usize>,
    chunk: f64,
}

impl Active {
    /// Removed and returned amounts `d` days after the event.
    fn state(&self, d: usize) -> (f64, f64, f64) {
        let (progress, complete) = if self.instant || self.rollout == 0 {
            (1.0, 0)
        } else {
            let r = self.rollout as usize;
            (((d + 1) as f64 / r as f64).min(1.0), r - 1)
        };
        let returned = if d > complete {
            (self.rate * (d - complete) as f64).min(self.total)
        } else {
            0.0
        };
        (progress, progress * self.total, returned)
    }
}

/// Simulates one chain for `n_days` starting at `start`.
///
/// Affected nodes are taken in a seeded random order until their weight reaches the
/// affected share; the last one loses only part of its weight. After removal is complete,
/// weight returns at `recovery_rate × resource_flexibility` per day until the removed
/// amount is restored: a `resource_flexibility` fraction goes back to the affected nodes in
/// proportion to their losses and the rest to fresh nodes of size `1 / n_nodes`.
pub fn simulate_chain(config: &ChainConfig, shocks: &[ShockConfig], start: NaiveDate, n_days: u32) -> Result<ChainRun> {
    config.validate()?;
    let end = start + Days::new(u64::from(n_days));
    for s in shocks {
        s.validate()?;
        if s.event_date < start || s.event_date >= end {
            return Err(Error::InvalidConfig(format!(
                "{}: shock on {} lies outside the simulated range",
                config.chain_id, s.event_date
            )));
        }
    }
    let mut shocks: Vec<&ShockConfig> = shocks.iter().collect();
    shocks.sort_by_key(|s| s.event_date);

    let mut weight_rng = rng(config.seed, WEIGHT_STREAM);
    let mut shock_rng = rng(config.seed, SHOCK_STREAM);
    let mut draw_rng = rng(config.seed, DRAW_STREAM);

    let n = config.n_nodes;
    let base_weights = draw_weights(&config.weight_distribution, n, &mut weight_rng);
    let mut ids: Vec<String> = (0..n).map(|i| format!("node{i:05}")).collect();
    let mut base = base_weights.clone();
    let baseline = expected_metrics(&base_weights, config.blocks_per_day);
    let mut active: Vec<Active> = Vec::new();
    let mut fresh_count = 0usize;
    let mut upgrades = 0usize;
    let mut next_shock = 0;

    let mut records = Vec::new();
    let mut truth = GroundTruth {
        chain_id: config.chain_id.clone(),
        days: Vec::new(),
        removed_share: Vec::new(),
        returned_share: Vec::new(),
        active_weight: Vec::new(),
        expected: Vec::new(),
        baseline: MetricsRow {
            chain_id: config.chain_id.clone(),
            day: start,
            ..baseline
        },
    };

    for t in 0..n_days as usize {
        let day = start + Days::new(t as u64);
        while next_shock < shocks.len() && shocks[next_shock].event_date == day {
            let s = shocks[next_shock];
            next_shock += 1;
            match s.kind {
                ShockKind::ConsensusUpgrade => {
                    upgrades += 1;
                    let m = libm::round(n as f64 * s.upgrade_node_multiplier).max(1.0) as usize;
                    base = draw_weights(&config.weight_distribution, m, &mut weight_rng);
                    ids = (0..m).map(|i| format!("node{i:05}")).collect();
                    if upgrades > 1 {
                        ids = ids.into_iter().map(|id| format!("{id}u{upgrades}")).collect();
                    }
                    active.clear();
                }
                kind => {
                    let current = current_weights(&base, &active, t);
                    let mut order: Vec<usize> = (0..current.len()).filter(|&i| current[i] > 0.0).collect();
                    order.shuffle(&mut shock_rng);
                    let live: f64 = current.iter().sum();
                    let mut need = s.affected_share * live;
                    let mut targets = Vec::new();
                    let mut total = 0.0;
                    for i in order {
                        if need <= 0.0 {
                            break;
                        }
                        let take = current[i].min(need);
                        let frac = if take >= current[i] { 1.0 } else { take / current[i] };
                        targets.push((i, frac));
                        total += take;
                        need -= take;
                    }
                    // removal is expressed against the weights at the event; fold them into base
                    base = current;
                    active.clear();
                    let flex = config.resource_flexibility;
                    let chunk = 1.0 / n as f64;
                    let n_fresh = libm::ceil((1.0 - flex) * total / chunk - 1e-9).max(0.0) as usize;
                    let fresh: Vec<usize> = (0..n_fresh).map(|k| base.len() + k).collect();
                    for k in 0..n_fresh {
                        ids.push(format!("new{:05}", fresh_count + k));
                        base.push(0.0);
                    }
                    fresh_count += n_fresh;
                    active.push(Active {
                        start: t,
                        instant: kind == ShockKind::InfrastructureInstant,
                        rollout: s.rollout_days,
                        targets,
                        total,
                        rate: s.recovery_rate * flex,
                        flex,
                        fresh,
                        chunk,
                    });
                }
            }
        }

        let weights = current_weights(&base, &active, t);
        let (removed, returned) = active.iter().fold((0.0, 0.0), |(r, b), a| {
            let (_, rem, ret) = a.state(t - a.start);
            (r + rem, b + ret)
        });
        let live: f64 = weights.iter().sum();
        if !(live > 0.0) {
            return Err(Error::ZeroBlockDay {
                chain_id: config.chain_id.clone(),
                day,
            });
        }
        truth.days.push(day);
        truth.removed_share.push(removed);
        truth.returned_share.push(returned);
        truth.active_weight.push(live);
        truth.expected.push(MetricsRow {
            chain_id: config.chain_id.clone(),
            day,
            ..expected_metrics(&weights, config.blocks_per_day)
        });

        let mut remaining = config.blocks_per_day;
        let mut rest = live;
        let mut day_records: Vec<NodeDayRecord> = Vec::new();
        for (i, &w) in weights.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            if w <= 0.0 {
                continue;
            }
            let p = (w / rest).clamp(0.0, 1.0);
            rest -= w;
            let k = if p >= 1.0 || rest <= 0.0 {
                remaining
            } else {
                Binomial::new(remaining, p).expect("probability in range").sample(&mut draw_rng)
            };
            remaining -= k;
            if k > 0 {
                day_records.push(NodeDayRecord {
                    chain_id: config.chain_id.clone(),
                    day,
                    node_id: ids[i].clone(),
                    blocks: k as f64,
                });
            }
        }
        if day_records.is_empty() {
            return Err(Error::ZeroBlockDay {
                chain_id: config.chain_id.clone(),
                day,
            });
        }
        day_records.sort_by(|a, b| a.node_id.cmp(&b.node_id));
        records.extend(day_records);
    }
    Ok(ChainRun { records, truth })
}

fn current_weights(base: &[f64], active: &[Active], t: usize) -> Vec<f64> {
    let mut w = base.to_vec();
    for a in active {
        let (progress, _, returned) = a.state(t - a.start);
        let back = if a.total > 0.0 { a.flex * returned / a.total } else { 0.0 };
        for &(slot, frac) in &a.targets {
            // the affected part of the slot's weight is w0 * frac
            let w0 = base[slot];
            w[slot] = w0 * (1.0 - progress * frac) + w0 * frac * back;
        }
        let mut fresh_mass = (1.0 - a.flex) * returned;
        for &slot in &a.fresh {
            let m = fresh_mass.min(a.chunk);
            if m <= 0.0 {
                break;
            }
            w[slot] = m;
            fresh_mass -= m;
        }
    }
    w
}

/// Node-day records per chain plus the treated chain's ground-truth effect path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPanel {
    pub treated_chain: String,
    pub event_date: NaiveDate,
    pub exposures: BTreeMap<String, f64>,
    pub records: BTreeMap<String, Vec<NodeDayRecord>>,
    pub truths: BTreeMap<String, GroundTruth>,
    /// Expected treated entropy minus its no-shock counterfactual, per day.
    pub att_path: Vec<(NaiveDate, f64)>,
}

impl EventPanel {
    /// Mean of the ATT path over days on or after the event date.
    pub fn mean_post_att(&self) -> f64 {
        let post: Vec<f64> = self
            .att_path
            .iter()
            .filter(|(d, _)| *d >= self.event_date)
            .map(|(_, v)| *v)
            .collect();
        if post.is_empty() {
            0.0
        } else {
            post.iter().sum::<f64>() / post.len() as f64
        }
    }

    pub fn all_records(&self) -> Vec<NodeDayRecord> {
        self.records.values().flatten().cloned().collect()
    }
}

/// Simulates the treated chain and every control over the scenario's date range.
///
/// Controls may carry shocks of their own but never the treated chain's.
pub fn simulate_event_panel(scenario: &Scenario) -> Result<EventPanel> {
    let mut ids: Vec<&str> = alloc::vec![scenario.treated.chain.chain_id.as_str()];
    ids.extend(scenario.controls.iter().map(|c| c.chain.chain_id.as_str()));
    let mut sorted = ids.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != ids.len() {
        return Err(Error::InvalidConfig("chain ids must be unique".into()));
    }
    let end = scenario.start_date + Days::new(u64::from(scenario.n_days));
    if scenario.event_date < scenario.start_date || scenario.event_date >= end {
        return Err(Error::InvalidConfig("event date lies outside the simulated range".into()));
    }
    let run = |c: &ChainScenario| simulate_chain(&c.chain, &c.shocks, scenario.start_date, scenario.n_days);
    let treated = run(&scenario.treated)?;
    let mut records = BTreeMap::new();
    let mut truths = BTreeMap::new();
    let mut exposures = BTreeMap::new();
    let base = treated.truth.baseline.entropy;
    let att_path = treated
        .truth
        .days
        .iter()
        .zip(&treated.truth.expected)
        .map(|(d, m)| (*d, m.entropy - base))
        .collect();
    let tid = scenario.treated.chain.chain_id.clone();
    exposures.insert(tid.clone(), scenario.treated.exposure);
    records.insert(tid.clone(), treated.records);
    truths.insert(tid.clone(), treated.truth);
    for c in &scenario.controls {
        let r = run(c)?;
        let id = c.chain.chain_id.clone();
        exposures.insert(id.clone(), c.exposure);
        records.insert(id.clone(), r.records);
        truths.insert(id, r.truth);
    }
    Ok(EventPanel {
        treated_chain: tid,
        event_date: scenario.event_date,
        exposures,
        records,
        truths,
        att_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn start() -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 1, 1).unwrap()
    }

    fn chain(n: usize, flex: f64, blocks: u64) -> ChainConfig {
        ChainConfig {
            chain_id: "btc".into(),
            n_nodes: n,
            weight_distribution: WeightDistribution::Uniform,
            blocks_per_day: blocks,
            resource_flexibility: flex,
            seed: 11,
        }
    }

    fn shock(kind: ShockKind, share: f64, offset: u64) -> ShockConfig {
        ShockConfig {
            kind,
            event_date: start() + Days::new(offset),
            affected_share: share,
            rollout_days: 10,
            recovery_rate: 0.01,
            upgrade_node_multiplier: 1.0,
        }
    }

    #[test]
    fn uniform_eight_has_three_bits() {
        let m = expected_metrics(&[0.125; 8], 1000);
        assert!((m.entropy - 3.0).abs() < 1e-12);
        assert_eq!(m.nodes, 8.0);
    }

    #[test]
    fn nakamoto_of_weights() {
        assert_eq!(expected_metrics(&[0.4, 0.3, 0.2, 0.1], 1).nakamoto, 2.0);
    }

    #[test]
    fn uniform_limit_entropy() {
        let run = simulate_chain(&chain(64, 0.5, 200_000), &[], start(), 3).unwrap();
        let dists = metrics::daily_distributions(&run.records).unwrap();
        for d in dists {
            assert!((d.entropy() - 6.0).abs() < 0.01);
        }
    }

    #[test]
    fn instant_removal_matches_truncated_weights() {
        let cfg = ChainConfig {
            weight_distribution: WeightDistribution::PowerLaw { alpha: 1.0 },
            ..chain(200, 0.5, 1000)
        };
        let mut s = shock(ShockKind::InfrastructureInstant, 0.198, 5);
        s.recovery_rate = 0.0;
        let run = simulate_chain(&cfg, &[s], start(), 8).unwrap();
        let truth = &run.truth;
        assert!((truth.active_weight[6] - (1.0 - 0.198)).abs() < 1e-12);
        // recompute entropy on the truncated weight vector by hand
        let w0 = initial_weights(&cfg).unwrap();
        let mut order: Vec<usize> = (0..200).collect();
        order.shuffle(&mut rng(cfg.seed, SHOCK_STREAM));
        let mut w = w0.clone();
        let mut need = 0.198;
        for i in order {
            if need <= 0.0 {
                break;
            }
            let take = w[i].min(need);
            w[i] -= take;
            need -= take;
        }
        let expected = metrics::entropy_bits(&w.iter().copied().filter(|x| *x > 0.0).collect::<Vec<_>>());
        assert!((truth.expected[6].entropy - expected).abs() < 1e-9);
        assert!(truth.expected[4].entropy > truth.expected[6].entropy);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let s = [shock(ShockKind::PolicyRolling, 0.5, 20)];
        let a = simulate_chain(&chain(50, 0.3, 500), &s, start(), 60).unwrap();
        let b = simulate_chain(&chain(50, 0.3, 500), &s, start(), 60).unwrap();
        assert_eq!(a, b);
        let mut other = chain(50, 0.3, 500);
        other.seed = 12;
        assert_ne!(simulate_chain(&other, &s, start(), 60).unwrap().records, a.records);
    }

    #[test]
    fn rolling_removal_is_linear_and_recovery_capped() {
        let s = [shock(ShockKind::PolicyRolling, 0.4, 10)];
        let run = simulate_chain(&chain(100, 0.5, 100), &s, start(), 300).unwrap();
        let t = &run.truth;
        assert_eq!(t.removed_share[9], 0.0);
        assert!((t.removed_share[10] - 0.04).abs() < 1e-12);
        assert!((t.removed_share[19] - 0.4).abs() < 1e-12);
        for i in 0..300 {
            let conserved = 1.0 - t.removed_share[i] + t.returned_share[i];
            assert!((t.active_weight[i] - conserved).abs() < 1e-9, "day {i}");
            assert!(t.active_weight[i] <= 1.0 + 1e-12);
        }
        assert!((t.active_weight[299] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn low_flexibility_adds_fresh_nodes() {
        let mut s = shock(ShockKind::InfrastructureInstant, 0.5, 5);
        s.recovery_rate = 0.5;
        let run = simulate_chain(&chain(20, 0.1, 1000), &[s], start(), 30).unwrap();
        let last = run.truth.expected.last().unwrap();
        assert!(last.nodes > 20.0);
        assert!(run.records.iter().any(|r| r.node_id.starts_with("new")));
    }

    #[test]
    fn upgrade_multiplies_nodes() {
        let mut s = shock(ShockKind::ConsensusUpgrade, 0.0, 3);
        s.upgrade_node_multiplier = 4.0;
        let run = simulate_chain(&chain(10, 0.5, 10_000), &[s], start(), 6).unwrap();
        assert_eq!(run.truth.expected[2].nodes, 10.0);
        assert_eq!(run.truth.expected[3].nodes, 40.0);
    }

    #[test]
    fn total_removal_without_recovery_is_an_error() {
        let mut s = shock(ShockKind::InfrastructureInstant, 1.0, 2);
        s.recovery_rate = 0.0;
        assert!(matches!(
            simulate_chain(&chain(5, 0.5, 100), &[s], start(), 5),
            Err(Error::ZeroBlockDay { .. })
        ));
    }

    #[test]
    fn event_panel_truth_is_zero_for_null_shock() {
        let sc = Scenario {
            start_date: start(),
            n_days: 40,
            event_date: start() + Days::new(20),
            treated: ChainScenario {
                chain: chain(30, 0.5, 1000),
                shocks: vec![shock(ShockKind::InfrastructureInstant, 0.0, 20)],
                exposure: 0.5,
            },
            controls: vec![ChainScenario {
                chain: ChainConfig {
                    chain_id: "eth".into(),
                    ..chain(30, 0.5, 1000)
                },
                shocks: vec![],
                exposure: 0.1,
            }],
        };
        let p = simulate_event_panel(&sc).unwrap();
        assert!(p.att_path.iter().all(|(_, v)| v.abs() < 1e-12));
        assert_eq!(p.records.len(), 2);
    }
}
