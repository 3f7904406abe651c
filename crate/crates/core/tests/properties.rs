use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use proptest::prelude::*;

use decentralab_core::econometrics::{did, ols, sdid, Clustering, DidOptions, Factor, RegressionSpec, SdidOptions, Term};
use decentralab_core::metrics::{entropy_bits, gini, hhi, nakamoto, Metric, MetricsRow};
use decentralab_core::panel::{assemble_panel, entropy_row, Panel};
use decentralab_core::shocklab::{simulate_chain, ChainConfig, ShockConfig, ShockKind, WeightDistribution};

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 3, 10).unwrap()
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("n{i:03}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn metric_bounds(counts in prop::collection::vec(1u32..500, 1..60)) {
        let c: Vec<f64> = counts.iter().map(|&x| f64::from(x)).collect();
        let n = c.len() as f64;
        let h = entropy_bits(&c);
        prop_assert!(h >= 0.0 && h <= n.log2() + 1e-12);
        let g = gini(&c);
        prop_assert!((0.0..1.0).contains(&g));
        let k = nakamoto(&c, &ids(c.len()), 0.51);
        prop_assert!(k >= 1 && k <= c.len());
        let x = hhi(&c);
        prop_assert!(x >= 1.0 / n - 1e-12 && x <= 1.0 + 1e-12);
    }

    #[test]
    fn metrics_ignore_order_and_scale(counts in prop::collection::vec(1u32..500, 2..40), scale in 0.1f64..50.0, rot in 0usize..40) {
        let c: Vec<f64> = counts.iter().map(|&x| f64::from(x)).collect();
        let mut r = c.clone();
        r.rotate_left(rot % c.len());
        let s: Vec<f64> = c.iter().map(|x| x * scale).collect();
        prop_assert!((entropy_bits(&c) - entropy_bits(&r)).abs() < 1e-9);
        prop_assert!((entropy_bits(&c) - entropy_bits(&s)).abs() < 1e-9);
        prop_assert!((gini(&c) - gini(&r)).abs() < 1e-12);
        prop_assert!((gini(&c) - gini(&s)).abs() < 1e-9);
        prop_assert!((hhi(&c) - hhi(&s)).abs() < 1e-12);
        prop_assert_eq!(nakamoto(&c, &ids(c.len()), 0.51), nakamoto(&r, &ids(c.len()), 0.51));
    }

    #[test]
    fn uniform_entropy_is_log2_n(n in 1usize..300) {
        prop_assert_eq!(entropy_bits(&vec![1.0; n]), (n as f64).log2());
    }
}

fn two_chain_panel(values: &[(f64, f64)], event_at: usize) -> Panel {
    let rows: Vec<MetricsRow> = values
        .iter()
        .enumerate()
        .flat_map(|(i, (a, b))| {
            let d = day0() + Days::new(i as u64);
            [entropy_row("treated", d, *a), entropy_row("control", d, *b)]
        })
        .collect();
    assemble_panel(&rows, day0() + Days::new(event_at as u64), "treated", None, &BTreeMap::new()).unwrap()
}

fn cell_mean(p: &Panel, treated: bool, post: bool) -> f64 {
    let v: Vec<f64> = p
        .observations
        .iter()
        .filter(|o| o.is_treated() == treated && (o.after == 1) == post)
        .map(|o| o.metrics.entropy)
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn two_by_two_did_is_four_cell_difference(
        values in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 8..80),
        frac in 0.2f64..0.8,
    ) {
        let event_at = ((values.len() as f64) * frac) as usize;
        let p = two_chain_panel(&values, event_at.max(1));
        let r = did(&p, Metric::Entropy, &DidOptions { clustering: Clustering::None, ..Default::default() }).unwrap();
        let dd = (cell_mean(&p, true, true) - cell_mean(&p, true, false))
            - (cell_mean(&p, false, true) - cell_mean(&p, false, false));
        prop_assert!((r.coef("after:chain").unwrap() - dd).abs() < 1e-9 * (1.0 + dd.abs()));
    }

    #[test]
    fn scaling_the_response_scales_coefficients(
        values in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 70..120),
        c in 0.01f64..100.0,
    ) {
        let p = two_chain_panel(&values, values.len() / 2);
        let scaled = two_chain_panel(&values.iter().map(|(a, b)| (a * c, b * c)).collect::<Vec<_>>(), values.len() / 2);
        let spec = RegressionSpec {
            dependent: Metric::Entropy,
            terms: vec![
                Term::intercept(),
                Term::treatment(),
                Term::single(Factor::Chain),
                Term::single(Factor::After),
                Term::single(Factor::Day),
            ],
            month_fe: false,
            clustering: Clustering::ByChainMonth,
        };
        let a = ols(&p.observations, &spec).unwrap();
        let b = ols(&scaled.observations, &spec).unwrap();
        for i in 0..a.terms.len() {
            prop_assert!((b.estimates[i] - c * a.estimates[i]).abs() <= 1e-9 * (1.0 + (c * a.estimates[i]).abs()));
            prop_assert!((b.std_errors[i] - c * a.std_errors[i]).abs() <= 1e-9 * (1.0 + c * a.std_errors[i]));
            let (ta, tb) = (a.estimates[i] / a.std_errors[i], b.estimates[i] / b.std_errors[i]);
            prop_assert!((ta - tb).abs() < 1e-9 * (1.0 + ta.abs()));
        }
    }
}

fn sdid_panel(values: &[Vec<f64>], span: i64) -> Panel {
    let rows: Vec<MetricsRow> = values
        .iter()
        .enumerate()
        .flat_map(|(unit, series)| {
            let name = if unit == 0 { "treated".to_string() } else { format!("c{unit}") };
            series
                .iter()
                .enumerate()
                .map(move |(t, v)| entropy_row(&name, day0() + Days::new(t as u64), *v))
                .collect::<Vec<_>>()
        })
        .collect();
    assemble_panel(&rows, day0() + Days::new(span as u64), "treated", None, &BTreeMap::new()).unwrap()
}

fn arb_units(span: i64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    let len = (2 * span + 1) as usize;
    (3usize..7).prop_flat_map(move |units| prop::collection::vec(prop::collection::vec(0.0f64..5.0, len), units))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sdid_weights_lie_on_simplex(values in arb_units(6)) {
        let p = sdid_panel(&values, 6);
        let r = sdid(&p, Metric::Entropy, 6, &SdidOptions::default()).unwrap();
        let unit: Vec<f64> = r.unit_weights.iter().map(|x| x.1).collect();
        let time: Vec<f64> = r.time_weights.iter().map(|x| x.1).collect();
        prop_assert!(unit.iter().chain(&time).all(|&w| w >= -1e-12));
        prop_assert!((unit.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!((time.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_sdid_is_did_on_one_pre_one_post(values in arb_units(1)) {
        // a window of one day either side: day -1 is the lone pre period, day 0 the post period
        let trimmed: Vec<Vec<f64>> = values.iter().map(|s| s[..2].to_vec()).collect();
        let p = sdid_panel(&trimmed, 1);
        let opts = SdidOptions { uniform_weights: true, ..Default::default() };
        let r = sdid(&p, Metric::Entropy, 1, &opts).unwrap();
        let treated = trimmed[0][1] - trimmed[0][0];
        let controls = trimmed[1..].iter().map(|s| s[1] - s[0]).sum::<f64>() / (trimmed.len() - 1) as f64;
        prop_assert!((r.att - (treated - controls)).abs() < 1e-12);
    }
}

fn sim_chain(flex: f64, seed: u64) -> ChainConfig {
    ChainConfig {
        chain_id: "sim".into(),
        n_nodes: 40,
        weight_distribution: WeightDistribution::Dirichlet { concentration: 1.5 },
        blocks_per_day: 300,
        resource_flexibility: flex,
        seed,
    }
}

fn sim_shock(kind: ShockKind, share: f64, rollout: u32, rate: f64) -> ShockConfig {
    ShockConfig {
        kind,
        event_date: day0() + Days::new(10),
        affected_share: share,
        rollout_days: rollout,
        recovery_rate: rate,
        upgrade_node_multiplier: 1.0,
    }
}

fn recovery_day(entropy: &[f64], baseline: f64, from: usize) -> usize {
    (from..entropy.len()).find(|&t| entropy[t] >= baseline - 0.01).unwrap_or(entropy.len())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>(), flex in 0.0f64..1.0) {
        let shocks = [sim_shock(ShockKind::PolicyRolling, 0.3, 5, 0.02)];
        let a = simulate_chain(&sim_chain(flex, seed), &shocks, day0(), 40).unwrap();
        let b = simulate_chain(&sim_chain(flex, seed), &shocks, day0(), 40).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn weight_is_conserved(
        seed in any::<u64>(),
        flex in 0.0f64..1.0,
        share in 0.0f64..0.9,
        rollout in 0u32..20,
        rate in 0.0f64..0.1,
        instant in any::<bool>(),
    ) {
        let kind = if instant { ShockKind::InfrastructureInstant } else { ShockKind::PolicyRolling };
        let run = simulate_chain(&sim_chain(flex, seed), &[sim_shock(kind, share, rollout, rate)], day0(), 80).unwrap();
        let t = &run.truth;
        for i in 0..t.days.len() {
            prop_assert!((t.active_weight[i] - (1.0 - t.removed_share[i] + t.returned_share[i])).abs() < 1e-9);
            prop_assert!(t.active_weight[i] <= 1.0 + 1e-9);
            prop_assert!(t.returned_share[i] <= t.removed_share[i] + 1e-12);
        }
        for day in &t.days {
            let blocks: f64 = run.records.iter().filter(|r| r.day == *day).map(|r| r.blocks).sum();
            prop_assert_eq!(blocks, 300.0);
        }
    }

    #[test]
    fn flexibility_speeds_recovery(seed in any::<u64>(), share in 0.1f64..0.7, lo in 0.05f64..0.5, gap in 0.05f64..0.5) {
        let hi = lo + gap;
        let shock = [sim_shock(ShockKind::InfrastructureInstant, share, 0, 0.02)];
        let days = |flex: f64| {
            let run = simulate_chain(&sim_chain(flex, seed), &shock, day0(), 400).unwrap();
            recovery_day(&run.truth.expected_entropy(), run.truth.baseline.entropy, 10)
        };
        prop_assert!(days(hi) <= days(lo));
    }
}
