use alphasharpe_core::data::*;
use alphasharpe_core::evaluation::{kendall, ndcg_at, spearman};
use alphasharpe_core::metrics::{max_drawdown, sharpe};
use alphasharpe_core::portfolio::*;
use chrono::NaiveDate;
use proptest::prelude::*;

fn dates(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    (0..n).map(|d| start + chrono::Days::new(d as u64)).collect()
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("Z{i:03}")).collect()
}

fn returns(n_assets: usize, n_periods: usize) -> impl Strategy<Value = ReturnMatrix> {
    prop::collection::vec(-0.08f64..0.08, n_assets * n_periods)
        .prop_map(move |v| ReturnMatrix::from_column_major(dates(n_periods), ids(n_assets), v).unwrap())
}

fn any_returns() -> impl Strategy<Value = ReturnMatrix> {
    (1usize..8, 5usize..60).prop_flat_map(|(n, t)| returns(n, t))
}

fn gappy_returns() -> impl Strategy<Value = ReturnMatrix> {
    (1usize..6, 5usize..40).prop_flat_map(|(n, t)| {
        prop::collection::vec(prop::option::weighted(0.9, -0.05f64..0.05), n * t).prop_map(move |v| {
            let values = v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect();
            ReturnMatrix::from_column_major(dates(t), ids(n), values).unwrap()
        })
    })
}

// strictly increasing and exact on small integers
fn monotone(x: f64) -> f64 {
    x * x * x + 2.0 * x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cleaning_is_idempotent(r in gappy_returns(), theta in 0.0f64..0.5) {
        let policy = CleanPolicy { max_missing_frac: theta };
        if let Ok(once) = clean(&r, policy) {
            prop_assert!(once.is_clean());
            prop_assert_eq!(clean(&once, policy).unwrap(), once);
        }
    }

    #[test]
    fn log_returns_rebuild_prices(start in 1.0f64..500.0, steps in prop::collection::vec(-0.2f64..0.2, 1..80)) {
        let mut prices = vec![start];
        for s in &steps {
            let last = *prices.last().unwrap();
            prices.push(last * (1.0 + s));
        }
        let n = prices.len();
        let table = PriceTable::new(dates(n), ids(1), vec![prices.iter().map(|p| Some(*p)).collect()]).unwrap();
        let r = to_log_returns(&table).unwrap();
        let mut cum = 0.0;
        for (t, x) in r.column(0).iter().enumerate() {
            cum += x;
            let rebuilt = start * cum.exp();
            prop_assert!((rebuilt - prices[t + 1]).abs() <= 1e-12 * prices[t + 1] * (t + 1) as f64);
        }
    }

    #[test]
    fn rank_statistics_ignore_monotone_transforms(
        a in prop::collection::vec(-20i32..20, 3..60),
        seed in any::<u64>(),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| ((seed >> (i % 60)) & 7) as f64 - x).collect();
        let ta: Vec<f64> = a.iter().map(|x| monotone(*x)).collect();
        if let (Ok(s1), Ok(s2)) = (spearman(&a, &b), spearman(&ta, &b)) {
            prop_assert!((s1 - s2).abs() <= 1e-12);
        }
        if let (Ok(k1), Ok(k2)) = (kendall(&a, &b), kendall(&ta, &b)) {
            prop_assert!((k1 - k2).abs() <= 1e-12);
        }
        prop_assert!((ndcg_at(&a, &b, 0.3).unwrap() - ndcg_at(&ta, &b, 0.3).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn correlations_bounded_and_symmetric(
        a in prop::collection::vec(-1e3f64..1e3, 3..80),
        b in prop::collection::vec(-1e3f64..1e3, 3..80),
    ) {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        if let Ok(s) = spearman(a, b) {
            prop_assert!((-1.0..=1.0).contains(&s));
            prop_assert_eq!(s, spearman(b, a).unwrap());
        }
        if let Ok(k) = kendall(a, b) {
            prop_assert!((-1.0..=1.0).contains(&k));
            prop_assert!((k - kendall(b, a).unwrap()).abs() <= 1e-15);
        }
        let v = ndcg_at(a, b, 0.25).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn drawdown_is_a_fraction(x in prop::collection::vec(-0.5f64..0.5, 1..200)) {
        let mdd = max_drawdown(&x);
        prop_assert!((0.0..1.0).contains(&mdd));
    }

    #[test]
    fn sharpe_is_shift_equivariant_in_rf(x in prop::collection::vec(-0.1f64..0.1, 2..100), rf in -0.01f64..0.01) {
        let shifted: Vec<f64> = x.iter().map(|v| v - rf).collect();
        let a = sharpe(&x, rf).unwrap();
        let b = sharpe(&shifted, 0.0).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn selection_size_is_ceiling_of_scored(
        scores in prop::collection::vec(prop::option::weighted(0.8, -5.0f64..5.0), 1..100),
        fraction in 0.01f64..1.0,
    ) {
        let scored = scores.iter().filter(|s| s.is_some()).count();
        match select_top_fraction(&scores, fraction) {
            Ok(picked) => {
                prop_assert_eq!(picked.len(), top_count(fraction, scored).max(1));
                prop_assert!(picked.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(picked.iter().all(|&i| scores[i].is_some()));
                let worst_in = picked.iter().map(|&i| scores[i].unwrap()).fold(f64::INFINITY, f64::min);
                let best_out = (0..scores.len())
                    .filter(|i| !picked.contains(i))
                    .filter_map(|i| scores[i])
                    .fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(worst_in >= best_out);
            }
            Err(_) => prop_assert_eq!(scored, 0),
        }
    }

    #[test]
    fn fold_geometry_never_leaks(
        t in 20usize..400,
        holdout in 0.0f64..0.5,
        n_folds in 1usize..5,
        train in 2usize..60,
        future in 1usize..40,
        stride in 1usize..40,
    ) {
        let spec = FoldSpec { holdout_frac: holdout, n_folds, train_len: train, future_len: future, stride };
        if let Ok(fs) = split_time_series(t, &spec) {
            prop_assert_eq!(fs.folds.len(), n_folds);
            let prefix = fs.training_prefix();
            for f in &fs.folds {
                prop_assert_eq!(f.train.len(), train);
                prop_assert_eq!(f.future.len(), future);
                prop_assert_eq!(f.train.end, f.future.start);
                prop_assert!(f.future.end <= prefix.end);
            }
            prop_assert!(fs.validate(t).is_ok());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn allocators_land_on_the_simplex(r in any_returns(), per_asset in any::<bool>()) {
        let params = AllocatorParams {
            entropy_mode: if per_asset { EntropyMode::PerAsset } else { EntropyMode::Scalar },
            ..Default::default()
        };
        let check = |w: &WeightVector| {
            w.weights().iter().all(|x| *x >= 0.0) && (w.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-9
        };
        let w = alphasharpe_weights(&r, &params).unwrap();
        prop_assert!(check(&w));
        if let Ok(w) = risk_parity_weights(&r) {
            prop_assert!(check(&w));
        }
        let cov = CovModel::estimate(&r, 1e-4).unwrap();
        let erc = erc_from_cov(&cov.assets, &cov.sigma, &ErcParams::default()).unwrap();
        prop_assert!(check(&erc));
        prop_assert!(contribution_spread(&cov.sigma, erc.weights()) <= 1e-8);
    }

    #[test]
    fn backtest_ignores_asset_order(r in any_returns(), rot in 0usize..8) {
        let n = r.n_assets();
        let w = alphasharpe_weights(&r, &AllocatorParams::default()).unwrap();
        let order: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let r2 = r.select_assets(&order);
        let w2 = WeightVector::new(
            order.iter().map(|&i| w.assets()[i].clone()).collect(),
            order.iter().map(|&i| w.weights()[i]).collect(),
        ).unwrap();
        let a = portfolio_returns(&w, &r).unwrap();
        let b = portfolio_returns(&w2, &r2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn equal_weight_of_identical_assets_tracks_the_asset(x in prop::collection::vec(-0.1f64..0.1, 2..50), n in 1usize..6) {
        let r = ReturnMatrix::from_columns(dates(x.len()), ids(n), vec![x.clone(); n]).unwrap();
        let p = portfolio_returns(&equal_weight(r.assets()).unwrap(), &r).unwrap();
        for (a, b) in p.iter().zip(&x) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
