use std::sync::OnceLock;

use amc_harq::optimizer::default_slow_grid;
use amc_harq::*;
use proptest::prelude::*;

fn table() -> McsTable {
    McsTable::uniform(5, 0.75, Decay::Finite(4.0)).unwrap()
}

fn two_rates() -> &'static (McsTable, DecisionRegions) {
    static CELL: OnceLock<(McsTable, DecisionRegions)> = OnceLock::new();
    CELL.get_or_init(|| {
        let t = McsTable::new(vec![3.0, 3.75], Decay::Finite(4.0)).unwrap();
        let r = slow_optimal_regions(4, CombiningType::Ir, &t, &default_slow_grid()).unwrap();
        (t, r)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn amc_throughput_grows_with_average_snr(db in -20.0f64..35.0, step in 0.01f64..5.0) {
        let t = table();
        let r = amc_thresholds_exact(&t).unwrap();
        let lo = amc_throughput(&r, &t, db_to_linear(db)).unwrap().value;
        let hi = amc_throughput(&r, &t, db_to_linear(db + step)).unwrap().value;
        prop_assert!(hi >= lo);
        prop_assert!(hi <= t.max_rate());
    }

    #[test]
    fn classify_agrees_with_intervals(x in 0.0f64..100.0, shift in 0.1f64..3.0) {
        let t = table();
        let th: Vec<f64> = amc_thresholds_exact(&t).unwrap().thresholds().unwrap().iter().map(|v| v * shift).collect();
        let r = DecisionRegions::from_thresholds(th).unwrap();
        let l = r.classify(x);
        prop_assert!(r.intervals(l).iter().any(|i| i.contains(x)));
        let total: f64 = (0..t.len()).map(|l| r.probability(l, 3.0)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_dominates_rr_harq(db in -10.0f64..30.0) {
        let t = table();
        let r = amc_thresholds_exact(&t).unwrap();
        let g = db_to_linear(db);
        let h = fast_throughput(&r, 4, CombiningType::Rr, &t, g).unwrap().value;
        prop_assert!(two_round_bound(&r, &t, g).unwrap() >= h - 1e-9);
    }

    #[test]
    fn slow_optimal_regions_dominate_amc(db in -10.0f64..30.0) {
        let (t, r) = two_rates();
        let amc = amc_thresholds_exact(t).unwrap();
        let g = db_to_linear(db);
        let opt = slow_throughput(r, 4, CombiningType::Ir, t, g).unwrap().value;
        let base = slow_throughput(&amc, 4, CombiningType::Ir, t, g).unwrap().value;
        prop_assert!(opt >= base - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn ir_cascade_is_monotone(l in 0usize..5, x in 0.0f64..40.0, db in -5.0f64..25.0) {
        let cas = FastCascade::new(&table(), CombiningType::Ir, 4, db_to_linear(db)).unwrap();
        let f: Vec<f64> = (1..=4).map(|k| cas.conditional(l, x, k).unwrap()).collect();
        prop_assert!(f.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(f.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn same_seed_same_result(seed in 0u64..1000, db in 0.0f64..20.0) {
        let t = table();
        let r = amc_thresholds_exact(&t).unwrap();
        let ch = ChannelConfig::new(db_to_linear(db), FadingMode::Fast, seed).unwrap();
        let h = HarqConfig::plain(CombiningType::Rr, 3).unwrap();
        let a = simulate_plain(&r, &h, &t, &ch, 100_000).unwrap();
        let b = simulate_plain(&r, &h, &t, &ch, 100_000).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn optimized_regions_never_lose_to_amc_regions() {
    let t = table();
    let amc = amc_thresholds_exact(&t).unwrap();
    for c in [CombiningType::Rr, CombiningType::Ir] {
        for db in [-5.0, 10.0, 20.0] {
            let g = db_to_linear(db);
            let (_, opt) = fast_optimize_regions(4, c, &t, g).unwrap();
            let base = fast_throughput(&amc, 4, c, &t, g).unwrap().value;
            assert!(opt.value >= base - 1e-9, "{c:?} {db} dB");
        }
    }
}

#[test]
fn monte_carlo_tracks_optimized_fast_throughput() {
    let t = table();
    let g = db_to_linear(8.0);
    let (r, eta) = fast_optimize_regions(4, CombiningType::Ir, &t, g).unwrap();
    let ch = ChannelConfig::new(g, FadingMode::Fast, 21).unwrap();
    let sim = simulate_plain(
        &r,
        &HarqConfig::plain(CombiningType::Ir, 4).unwrap(),
        &t,
        &ch,
        1_000_000,
    )
    .unwrap();
    assert!(
        (sim.throughput - eta.value).abs() <= sim.ci_half_width,
        "{sim:?} vs {}",
        eta.value
    );
}
