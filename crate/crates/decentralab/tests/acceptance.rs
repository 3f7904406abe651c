//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use chrono::{Days, NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use decentralab_core::attribution::{attribute_blocks, AttributionMethod, AttributionMode};
use decentralab_core::econometrics::{
    did, event_study, ols, sdid, sdid_sweep, Clustering, DidOptions, Factor, RegressionSpec, SdidOptions, Term,
};
use decentralab_core::metrics::{daily_distributions, recovery_time, DailyDistribution, Metric, Recovery};
use decentralab_core::panel::entropy_row;
use decentralab_core::records::{RewardShare, Transfer};
use decentralab_core::shocklab::{
    simulate_chain, simulate_metric_panel, ChainConfig, MetricPanelConfig, ShockConfig, ShockKind, WeightDistribution,
};
use decentralab_core::{assemble_panel, LabelRegistry, Panel, PanelObservation, RawBlockRecord};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

// ---------------------------------------------------------------------------------------------
// 1, 2: metrics against literal formulas

fn oracle_entropy(x: &[f64]) -> f64 {
    let s: f64 = x.iter().sum();
    -x.iter().map(|v| v / s).map(|p| p * p.log2()).sum::<f64>()
}

fn oracle_gini(x: &[f64]) -> f64 {
    // mean absolute difference over twice the mean
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let mut d = 0.0;
    for a in x {
        for b in x {
            d += (a - b).abs();
        }
    }
    d / (2.0 * n * n * mean)
}

fn oracle_nakamoto(x: &[f64], threshold: f64) -> usize {
    let s: f64 = x.iter().sum();
    let mut shares: Vec<f64> = x.iter().map(|v| v / s).collect();
    shares.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    for (k, p) in shares.iter().enumerate() {
        acc += p;
        if acc >= threshold {
            return k + 1;
        }
    }
    shares.len()
}

fn oracle_hhi(x: &[f64]) -> f64 {
    let s: f64 = x.iter().sum();
    x.iter().map(|v| (v / s).powi(2)).sum()
}

fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20240101);
    let mut worst = 0.0f64;
    let mut near_threshold = 0usize;
    for trial in 0..1000 {
        let n = rng.random_range(1..=50usize);
        let fractional = trial % 2 == 1;
        let x: Vec<f64> = (0..n)
            .map(|_| {
                if fractional {
                    rng.random_range(0.001..1000.0)
                } else {
                    f64::from(rng.random_range(1..=1000u32))
                }
            })
            .collect();
        let d = DailyDistribution::from_counts(&x).map_err(|e| e.to_string())?;
        for (name, got, want) in [
            ("entropy", d.entropy(), oracle_entropy(&x)),
            ("gini", d.gini(), oracle_gini(&x)),
            ("hhi", d.hhi(), oracle_hhi(&x)),
        ] {
            let e = rel_err(got, want);
            // a zero oracle value is matched in absolute terms at the same 1e-9
            ensure(e <= 1e-9, || format!("trial {trial}: {name} {got} vs {want}"))?;
            worst = worst.max(e);
        }
        // the cumulative share comparison is exact only away from the threshold
        let want = oracle_nakamoto(&x, 0.51);
        let got = d.nakamoto(0.51);
        let s: f64 = x.iter().sum();
        let mut sorted = x.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let cum: f64 = sorted[..want].iter().sum::<f64>() / s;
        if (cum - 0.51).abs() < 1e-12 {
            near_threshold += 1;
        }
        ensure(got == want, || format!("trial {trial}: nakamoto {got} vs {want}"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("took {secs:.2} s"))?;
    Ok(format!(
        "1000 distributions, worst relative error {worst:.1e}, nakamoto exact ({near_threshold} near the threshold), {secs:.2} s"
    ))
}

fn criterion_2() -> Outcome {
    for n in 1..=64usize {
        let d = DailyDistribution::from_counts(&vec![1.0; n]).map_err(|e| e.to_string())?;
        let want_k = (51 * n).div_ceil(100);
        ensure(d.entropy() == (n as f64).log2(), || format!("N={n}: entropy {}", d.entropy()))?;
        ensure(d.hhi() == 1.0 / n as f64, || format!("N={n}: hhi {}", d.hhi()))?;
        ensure(d.gini() == 0.0, || format!("N={n}: gini {}", d.gini()))?;
        ensure(d.nakamoto(0.51) == want_k, || format!("N={n}: nakamoto {}", d.nakamoto(0.51)))?;
    }
    Ok("N = 1..64 exact".into())
}

// ---------------------------------------------------------------------------------------------
// 3: noiseless event study

fn criterion_3() -> Outcome {
    let event = date(2021, 6, 21);
    let mut parts = Vec::new();
    for (jump, slope, change) in [(1.274, 0.0, 0.0), (-0.344, 0.0, 0.008)] {
        let series: Vec<(NaiveDate, f64)> = (-90i64..=90)
            .map(|t| {
                let after = if t >= 0 { 1.0 } else { 0.0 };
                let y = 5.5 + jump * after + slope * t as f64 + change * after * t as f64;
                (event + chrono::Duration::days(t), y)
            })
            .collect();
        let r = event_study(&series, event, Clustering::None).map_err(|e| e.to_string())?;
        let got = (r.coef("after").unwrap(), r.coef("day").unwrap(), r.coef("after:day").unwrap());
        for (name, g, w) in [("jump", got.0, jump), ("slope", got.1, slope), ("slope change", got.2, change)] {
            ensure((g - w).abs() <= 1e-9, || format!("{name}: {g} vs {w}"))?;
        }
        parts.push(format!("({:.3}, {:.3}, {:.3})", got.0, got.1, got.2));
    }
    let days = match recovery_time(0.344, 0.008) {
        Recovery::Days(d) => d,
        Recovery::NoRecovery => return Err("recovery_time reported no recovery".into()),
    };
    ensure((days - 43.0).abs() <= 1e-9, || format!("recovery_time {days}"))?;
    Ok(format!("recovered {}, recovery_time {days:.1} days", parts.join(" and ")))
}

// ---------------------------------------------------------------------------------------------
// 4: DiD calibration with chain × month correlated noise

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let delta = -0.209;
    let reps = 500;
    let mut estimates = Vec::with_capacity(reps);
    let mut covered = 0usize;
    for seed in 0..reps as u64 {
        let cfg = MetricPanelConfig {
            start_date: date(2019, 1, 1),
            n_days: 1461,
            event_date: date(2021, 1, 16),
            levels: vec![4.2, 3.5],
            effect: delta,
            cell_sd: 0.1,
            noise_sd: 0.2,
            seed: 1000 + seed,
        };
        let rows = simulate_metric_panel(&cfg).map_err(|e| e.to_string())?;
        let panel = assemble_panel(&rows, cfg.event_date, "chain0", None, &BTreeMap::new()).map_err(|e| e.to_string())?;
        let opts = DidOptions {
            clustering: Clustering::ByChainMonthCell,
            ..Default::default()
        };
        let r = did(&panel, Metric::Entropy, &opts).map_err(|e| e.to_string())?;
        let b = r.coef("after:chain").unwrap();
        let (lo, hi) = r.ci95("after:chain").unwrap();
        estimates.push(b);
        if lo <= delta && delta <= hi {
            covered += 1;
        }
    }
    let mean = estimates.iter().sum::<f64>() / reps as f64;
    let coverage = 100.0 * covered as f64 / reps as f64;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("mean {mean:.4}, 95% CI coverage {coverage:.1}% over {reps} panels, {secs:.1} s");
    ensure((mean - delta).abs() <= 0.01, || detail.clone())?;
    ensure((91.0..=99.0).contains(&coverage), || detail.clone())?;
    ensure(secs < 60.0, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------------------------
// 5, 6: SDiD

const OMEGA: [f64; 4] = [0.15, 0.35, 0.2, 0.3];

/// Four control paths with unit levels, a common trend and three unit-specific factor loadings.
fn control_paths(t: i64) -> [f64; 4] {
    let s = t as f64;
    let f = [(0.37 * s).sin(), (1.1 * s + 0.4).cos(), (0.71 * s + 2.0).sin()];
    let level = [4.8, 5.5, 5.1, 6.0];
    let load = [[0.5, -0.2, 0.1], [-0.3, 0.4, 0.3], [0.2, 0.3, -0.5], [0.1, -0.1, 0.6]];
    let mut y = [0.0; 4];
    for j in 0..4 {
        y[j] = level[j] + 0.004 * s + (0..3).map(|k| load[j][k] * f[k]).sum::<f64>();
    }
    y
}

fn sdid_panel(span: i64, effect: impl Fn(i64) -> f64, noise: Option<(&Normal<f64>, &mut ChaCha8Rng)>) -> Result<Panel, String> {
    let event = date(2021, 11, 2);
    let mut rows = Vec::new();
    let mut noise = noise;
    for t in -span..=span {
        let day = event + chrono::Duration::days(t);
        let c = control_paths(t);
        let mut draw = || match noise.as_mut() {
            Some((n, rng)) => n.sample(*rng),
            None => 0.0,
        };
        for (j, y) in c.iter().enumerate() {
            rows.push(entropy_row(&format!("c{j}"), day, y + draw()));
        }
        let synth: f64 = c.iter().zip(OMEGA).map(|(y, w)| y * w).sum();
        rows.push(entropy_row("treated", day, synth + effect(t) + draw()));
    }
    assemble_panel(&rows, event, "treated", None, &BTreeMap::new()).map_err(|e| e.to_string())
}

fn criterion_5() -> Outcome {
    let tau = -0.345;
    let span = 20;
    let step = |t: i64| if t >= 0 { tau } else { 0.0 };
    let clean = sdid_panel(span, step, None)?;
    let r = sdid(&clean, Metric::Entropy, span, &SdidOptions::default()).map_err(|e| e.to_string())?;
    ensure((r.att - tau).abs() < 1e-6, || format!("noiseless ATT {}", r.att))?;

    let normal = Normal::new(0.0, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    let reps = 200;
    let mut inside = 0;
    let mut se_sum = 0.0;
    for _ in 0..reps {
        let p = sdid_panel(span, step, Some((&normal, &mut rng)))?;
        let r = sdid(&p, Metric::Entropy, span, &SdidOptions::default()).map_err(|e| e.to_string())?;
        se_sum += r.placebo_se;
        if (r.att - tau).abs() < 2.0 * r.placebo_se {
            inside += 1;
        }
    }
    let share = 100.0 * inside as f64 / reps as f64;
    let detail = format!(
        "noiseless ATT {:.9}; |ATT - tau| < 2 se in {share:.1}% of {reps} noisy replications (mean placebo se {:.4})",
        r.att,
        se_sum / reps as f64
    );
    ensure(share >= 90.0, || detail.clone())?;
    Ok(detail)
}

fn criterion_6() -> Outcome {
    // a dip at the event that fades linearly over 60 days
    let dip = |t: i64| if t >= 0 { -0.5 * (1.0 - t as f64 / 60.0).max(0.0) } else { 0.0 };
    let panel = sdid_panel(50, dip, None)?;
    let bws = [10, 20, 30, 40, 50];
    let sweep = sdid_sweep(&panel, Metric::Entropy, &bws, &SdidOptions::default()).map_err(|e| e.to_string())?;
    let atts: Vec<f64> = sweep.iter().map(|r| r.att).collect();
    let shown: Vec<String> = bws.iter().zip(&atts).map(|(b, a)| format!("±{b}: {a:.3}")).collect();
    for w in atts.windows(2) {
        ensure(w[1].abs() <= w[0].abs(), || format!("|ATT| increases: {}", shown.join(", ")))?;
    }
    Ok(shown.join(", "))
}

// ---------------------------------------------------------------------------------------------
// 7: proposer resolution on post-merge style blocks

fn criterion_7() -> Outcome {
    let registry = LabelRegistry {
        mev_builders: ["builder-a", "builder-b", "builder-c"].map(String::from).into(),
        builder_alternates: BTreeMap::from([
            ("builder-a-payout".to_string(), "builder-a".to_string()),
            ("builder-b-payout".to_string(), "builder-b".to_string()),
        ]),
        builder_proposers: ["builder-c"].map(String::from).into(),
        known_proposers: (0..8).map(|i| format!("validator-{i}")).collect(),
        node_groups: BTreeMap::new(),
    };
    let start = Utc.with_ymd_and_hms(2022, 9, 15, 0, 0, 0).unwrap();
    let mut blocks = Vec::new();
    let mut expected: Vec<(String, AttributionMethod)> = Vec::new();
    for h in 0..200u64 {
        let ts = start + chrono::Duration::minutes(12 * h as i64);
        let validator = format!("validator-{}", h % 8);
        let (recipient, transfers, want) = match h % 4 {
            0 => (format!("solo-{}", h % 5), vec![], (format!("solo-{}", h % 5), AttributionMethod::Direct)),
            1 => {
                let b = if h % 8 == 1 { "builder-a" } else { "builder-b" };
                let t = vec![
                    Transfer { from_address: b.into(), to_address: "searcher-x".into(), amount: 0.5 },
                    Transfer { from_address: b.into(), to_address: validator.clone(), amount: 0.08 },
                ];
                (b.to_string(), t, (validator.clone(), AttributionMethod::PbsTransfer))
            }
            2 => {
                let b = if h % 8 == 2 { "builder-a" } else { "builder-b" };
                let t = vec![Transfer {
                    from_address: format!("{b}-payout"),
                    to_address: validator.clone(),
                    amount: 0.05,
                }];
                (b.to_string(), t, (validator.clone(), AttributionMethod::PbsAlternate))
            }
            _ => ("builder-c".to_string(), vec![], ("builder-c".to_string(), AttributionMethod::PbsBuilderIsProposer)),
        };
        blocks.push(RawBlockRecord {
            chain_id: "eth".into(),
            block_height: 15_537_394 + h,
            timestamp: ts,
            reward_recipients: vec![RewardShare { address: recipient, share: 1.0 }],
            transfers,
        });
        expected.push(want);
    }
    let out = attribute_blocks(&blocks, &registry, AttributionMode::Proposer);
    ensure(out.quarantine.is_empty(), || format!("{} blocks quarantined", out.quarantine.len()))?;
    ensure(out.outcomes.len() == 200, || format!("{} outcomes", out.outcomes.len()))?;
    let mut methods: BTreeMap<String, usize> = BTreeMap::new();
    for (o, (producer, method)) in out.outcomes.iter().zip(&expected) {
        ensure(&o.producer_id == producer && o.method == *method, || {
            format!("height {}: got {} {:?}, want {producer} {method:?}", o.block_height, o.producer_id, o.method)
        })?;
        *methods.entry(format!("{:?}", o.method)).or_default() += 1;
    }
    let total: f64 = out.node_days.iter().map(|r| r.blocks).sum();
    ensure(total == 200.0, || format!("attributed mass {total}"))?;
    let mut per_day: BTreeMap<NaiveDate, (usize, f64)> = BTreeMap::new();
    for b in &blocks {
        per_day.entry(b.day()).or_default().0 += 1;
    }
    for r in &out.node_days {
        per_day.entry(r.day).or_default().1 += r.blocks;
    }
    for (d, (n, m)) in &per_day {
        ensure(*n as f64 == *m, || format!("{d}: {n} blocks but {m} attributed"))?;
    }
    Ok(format!("200/200 resolved, 0 quarantined, mass exact over {} days, methods {methods:?}", per_day.len()))
}

// ---------------------------------------------------------------------------------------------
// 8: clustering degeneracies

fn spec(clustering: Clustering) -> RegressionSpec {
    RegressionSpec {
        dependent: Metric::Entropy,
        terms: vec![
            Term::intercept(),
            Term::treatment(),
            Term::single(Factor::Chain),
            Term::single(Factor::After),
            Term::single(Factor::Day),
        ],
        month_fe: false,
        clustering,
    }
}

fn criterion_8() -> Outcome {
    // every observation alone in its chain, its month and its cell
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let n = 80;
    let obs: Vec<PanelObservation> = (0..n)
        .map(|i| {
            let day = date(2015 + i / 12, (i % 12) as u32 + 1, 10);
            let treated = (i % 3 == 0) as u8;
            let after = (i >= n / 2) as u8;
            let mut row = entropy_row(&format!("chain{i:03}"), day, 0.0);
            row.entropy = 3.0 + 0.4 * f64::from(treated) - 0.2 * f64::from(treated * after) + rng.random_range(-1.0..1.0);
            PanelObservation {
                chain_id: row.chain_id.clone(),
                day,
                metrics: row,
                chain_indicator: treated,
                after,
                during: 0,
                day_index: i as i64 * 30 - 1200,
                exposure: 0.0,
                covariates: BTreeMap::new(),
            }
        })
        .collect();
    let hc1 = ols(&obs, &spec(Clustering::None)).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for c in [Clustering::ByChain, Clustering::ByMonth, Clustering::ByChainMonth, Clustering::ByChainMonthCell] {
        let r = ols(&obs, &spec(c)).map_err(|e| e.to_string())?;
        for (a, b) in r.std_errors.iter().zip(&hc1.std_errors) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-6, || format!("own-cluster SEs differ from HC1 by {worst:.2e}"))?;

    // relabel the chains of a three-chain panel without touching the row order
    let cfg = MetricPanelConfig {
        start_date: date(2020, 1, 1),
        n_days: 730,
        event_date: date(2021, 3, 1),
        levels: vec![4.0, 3.6, 3.1],
        effect: -0.2,
        cell_sd: 0.1,
        noise_sd: 0.1,
        seed: 8,
    };
    let rows = simulate_metric_panel(&cfg).map_err(|e| e.to_string())?;
    let panel = assemble_panel(&rows, cfg.event_date, "chain0", None, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let rename = BTreeMap::from([("chain0", "zeta"), ("chain1", "alpha"), ("chain2", "mid")]);
    let relabeled: Vec<PanelObservation> = panel
        .observations
        .iter()
        .map(|o| PanelObservation {
            chain_id: rename[o.chain_id.as_str()].to_string(),
            ..o.clone()
        })
        .collect();
    for c in [Clustering::ByChain, Clustering::ByMonth, Clustering::ByChainMonth, Clustering::ByChainMonthCell] {
        let a = ols(&panel.observations, &spec(c)).map_err(|e| e.to_string())?;
        let b = ols(&relabeled, &spec(c)).map_err(|e| e.to_string())?;
        let same = a.std_errors.iter().zip(&b.std_errors).all(|(x, y)| x.to_bits() == y.to_bits());
        ensure(same, || format!("{}: relabeled SEs differ", c.name()))?;
    }
    Ok(format!("own-cluster max |SE - HC1 SE| = {worst:.1e}; relabeled SEs bit-identical for 4 clusterings"))
}

// ---------------------------------------------------------------------------------------------
// 9: simulator convergence and flexibility

fn criterion_9() -> Outcome {
    let start = date(2021, 5, 1);
    let config = ChainConfig {
        chain_id: "sim".into(),
        n_nodes: 60,
        weight_distribution: WeightDistribution::Dirichlet { concentration: 2.0 },
        blocks_per_day: 1_000_000,
        resource_flexibility: 0.6,
        seed: 90,
    };
    let shock = ShockConfig {
        kind: ShockKind::PolicyRolling,
        event_date: start + Days::new(10),
        affected_share: 0.3,
        rollout_days: 5,
        recovery_rate: 0.05,
        upgrade_node_multiplier: 1.0,
    };
    let run = simulate_chain(&config, &[shock], start, 45).map_err(|e| e.to_string())?;
    let empirical = daily_distributions(&run.records).map_err(|e| e.to_string())?;
    ensure(empirical.len() == run.truth.days.len(), || "a simulated day is missing".into())?;
    let mut worst = 0.0f64;
    for (d, want) in empirical.iter().zip(&run.truth.expected) {
        let got = d.metrics_row(0.51);
        for m in Metric::ALL {
            let e = (got.get(m) - want.get(m)).abs();
            ensure(e <= 0.01, || format!("{}: {m} {} vs expected {}", d.day(), got.get(m), want.get(m)))?;
            worst = worst.max(e);
        }
    }

    // recovery speed over 50 seeds per flexibility level
    let recovery_days = |flex: f64, seed: u64| -> Result<f64, String> {
        let cfg = ChainConfig {
            n_nodes: 80,
            weight_distribution: WeightDistribution::Dirichlet { concentration: 3.0 },
            blocks_per_day: 100_000,
            resource_flexibility: flex,
            seed,
            ..config.clone()
        };
        let shock = ShockConfig {
            kind: ShockKind::InfrastructureInstant,
            event_date: start + Days::new(10),
            affected_share: 0.25,
            rollout_days: 0,
            recovery_rate: 0.05,
            upgrade_node_multiplier: 1.0,
        };
        let run = simulate_chain(&cfg, &[shock], start, 250).map_err(|e| e.to_string())?;
        let baseline = run.truth.baseline.entropy;
        let series: Vec<f64> = daily_distributions(&run.records)
            .map_err(|e| e.to_string())?
            .iter()
            .map(DailyDistribution::entropy)
            .collect();
        let first_low = (10..series.len()).find(|&t| series[t] < baseline - 0.01).unwrap_or(10);
        let back = (first_low..series.len()).find(|&t| series[t] >= baseline - 0.01).unwrap_or(series.len());
        Ok((back - 10) as f64)
    };
    let mut means = Vec::new();
    for flex in [0.1, 0.5, 0.9] {
        let mut total = 0.0;
        for seed in 0..50 {
            total += recovery_days(flex, 7000 + seed)?;
        }
        means.push(total / 50.0);
    }
    let detail = format!(
        "max |empirical - expected| {worst:.4} at 1e6 blocks/day; mean recovery days {:.1} / {:.1} / {:.1} at flexibility 0.1 / 0.5 / 0.9",
        means[0], means[1], means[2]
    );
    ensure(means[0] > means[1] && means[1] > means[2], || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------------------------
// 10: end-to-end determinism through the binary

const SCENARIO: &str = r#"{
  "start_date": "2021-05-01",
  "n_days": 200,
  "event_date": "2021-08-09",
  "treated": {
    "chain_id": "solana", "n_nodes": 1000,
    "weight_distribution": {"kind": "dirichlet", "concentration": 0.8},
    "blocks_per_day": 20000, "resource_flexibility": 0.9, "seed": 1,
    "shocks": [{"kind": "infrastructure_instant", "event_date": "2021-08-09", "affected_share": 0.198, "rollout_days": 0, "recovery_rate": 0.03}],
    "exposure": 0.198
  },
  "controls": [
    {"chain_id": "ethereum", "n_nodes": 1000, "weight_distribution": {"kind": "power_law", "alpha": 1.5}, "blocks_per_day": 7000, "resource_flexibility": 0.7, "seed": 2},
    {"chain_id": "cardano", "n_nodes": 1000, "weight_distribution": {"kind": "uniform"}, "blocks_per_day": 20000, "resource_flexibility": 0.7, "seed": 3, "exposure": 0.02}
  ]
}"#;

fn run_pipeline(dir: &Path) -> Result<(), String> {
    fs::write(dir.join("scenario.json"), SCENARIO).map_err(|e| e.to_string())?;
    let steps: [&[&str]; 4] = [
        &["simulate", "--scenario", "scenario.json", "--seed", "7", "--out", "sim"],
        &[
            "metrics", "--input", "sim/nodes_solana.csv", "--input", "sim/nodes_ethereum.csv", "--input",
            "sim/nodes_cardano.csv", "--out", "metrics",
        ],
        &["did", "--input", "metrics/metrics.csv", "--event-date", "2021-08-09", "--treated", "solana", "--out", "did"],
        &["report", "--input", "did/did.json", "--out", "report"],
    ];
    for args in steps {
        let o = Command::new(env!("CARGO_BIN_EXE_decentralab"))
            .current_dir(dir)
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{}: {}", args[0], String::from_utf8_lossy(&o.stderr)));
        }
    }
    Ok(())
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_pipeline(a.path())?;
    run_pipeline(b.path())?;
    let secs = start.elapsed().as_secs_f64();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let names: BTreeSet<&String> = ta.keys().chain(tb.keys()).collect();
    for n in &names {
        ensure(ta.get(*n) == tb.get(*n), || format!("{n} differs between runs"))?;
    }
    let bytes: usize = ta.values().map(Vec::len).sum();
    // two full runs fit in the budget for one
    ensure(secs < 30.0, || format!("two runs took {secs:.1} s"))?;
    Ok(format!("{} artifacts ({} KiB) byte-identical across two runs, {secs:.1} s for both", names.len(), bytes / 1024))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("metric oracle equivalence", criterion_1),
        ("uniform and singleton closed forms", criterion_2),
        ("noiseless event-study identification", criterion_3),
        ("DiD calibration", criterion_4),
        ("SDiD identification", criterion_5),
        ("bandwidth attenuation", criterion_6),
        ("PBS attribution fixture", criterion_7),
        ("clustering degeneracies", criterion_8),
        ("simulator convergence", criterion_9),
        ("end-to-end determinism", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (status, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{status} {:>2} {name}: {detail} [{:.1} s]", i + 1, t.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

