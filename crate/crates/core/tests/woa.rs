use propwake::woa::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trace_is_monotone_and_positions_in_bounds(seed in any::<u64>(), pop in 2usize..8, iters in 1usize..15, shift in -3.0f64..12.0) {
        let cfg = WoaConfig { population: pop, max_iters: iters, seed, ..WoaConfig::default() };
        let mut visited = Vec::new();
        let r = woa_optimize(|x| { visited.push(x.to_vec()); Ok(x.iter().map(|v| (v - shift).abs()).sum::<f64>() + (x[0] * 3.0).sin()) }, &cfg).unwrap();
        prop_assert_eq!(r.trace.len(), iters);
        for w in r.trace.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        for x in &visited {
            for v in x {
                prop_assert!((0.01..=10.0).contains(v));
            }
        }
        prop_assert_eq!(*r.trace.last().unwrap(), r.best_fitness);
    }

    #[test]
    fn same_seed_same_result(seed in any::<u64>()) {
        let cfg = WoaConfig { population: 5, max_iters: 6, seed, ..WoaConfig::default() };
        let f = |x: &[f64]| Ok(x.iter().map(|v| v.ln().powi(2)).sum::<f64>());
        prop_assert_eq!(woa_optimize(f, &cfg).unwrap(), woa_optimize(f, &cfg).unwrap());
    }
}

#[test]
fn sphere_many_seeds() {
    for seed in 0..5 {
        let cfg = WoaConfig { population: 20, max_iters: 200, seed, ..WoaConfig::default() };
        let r = woa_optimize(|x| Ok(x.iter().map(|v| (v - 1.0).powi(2)).sum()), &cfg).unwrap();
        assert!(r.best_fitness < 1e-5, "seed {seed}: {}", r.best_fitness);
    }
}
