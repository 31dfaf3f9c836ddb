use alphasharpe_core::data::*;
use alphasharpe_core::Error;
use chrono::NaiveDate;

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn long_and_wide_layouts_agree() {
    let dir = tempfile::tempdir().unwrap();
    let wide = write(
        &dir,
        "wide.csv",
        "date,AAA,BBB\n2024-01-03,10.5,20\n2024-01-02,10,\n2024-01-04,11,21\n",
    );
    let long = write(
        &dir,
        "long.csv",
        "date,asset,price\n2024-01-02,AAA,10\n2024-01-03,BBB,20\n2024-01-03,AAA,10.5\n2024-01-04,AAA,11\n2024-01-04,BBB,21\n",
    );
    assert_eq!(PriceLayout::detect(&wide).unwrap(), PriceLayout::Wide);
    assert_eq!(PriceLayout::detect(&long).unwrap(), PriceLayout::Long);
    let a = load_price_csv(&wide, PriceLayout::Wide).unwrap();
    let b = load_price_csv(&long, PriceLayout::Long).unwrap();
    assert_eq!(a.timestamps(), b.timestamps());
    assert_eq!(a.assets(), b.assets());
    for i in 0..2 {
        for t in 0..3 {
            assert_eq!(a.price(t, i), b.price(t, i));
        }
    }
    assert_eq!(a.price(0, 1), None);
    assert_eq!(a.timestamps()[0], NaiveDate::from_ymd_opt(2024, 1, 2).unwrap());
}

#[test]
fn malformed_rows_report_their_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "bad.csv", "date,AAA\n2024-01-02,10\n2024-01-03,ten\n");
    match load_price_csv(&p, PriceLayout::Wide) {
        Err(Error::Input { row, .. }) => assert_eq!(row, 3),
        other => panic!("expected an input error, got {other:?}"),
    }
    let dup = write(&dir, "dup.csv", "date,asset,price\n2024-01-02,A,1\n2024-01-02,A,2\n");
    assert!(load_price_csv(&dup, PriceLayout::Long).is_err());
}

#[test]
fn return_csv_and_cache_round_trip() {
    let spec = SyntheticSpec::single_regime(7, 40, SyntheticSpec::default().regimes[0].clone(), 5.0, 3);
    let mut r = generate_synthetic(&spec).unwrap().with_frequency(52.0);
    let mut values = r.as_column_major().to_vec();
    values[5] = f64::NAN;
    r = ReturnMatrix::from_column_major(r.timestamps().to_vec(), r.assets().to_vec(), values)
        .unwrap()
        .with_frequency(52.0);

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    write_return_csv(&r, &csv).unwrap();
    let back = read_return_csv(&csv).unwrap();
    assert_eq!(back.assets(), r.assets());
    for (x, y) in back.as_column_major().iter().zip(r.as_column_major()) {
        assert!(x == y || (x.is_nan() && y.is_nan()));
    }

    let cache = dir.path().join("r.asrm");
    write_return_cache(&r, &cache).unwrap();
    let back = read_return_cache(&cache).unwrap();
    assert_eq!(back.frequency(), 52.0);
    assert_eq!(back.timestamps(), r.timestamps());
    for (x, y) in back.as_column_major().iter().zip(r.as_column_major()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }

    let bytes = std::fs::read(&cache).unwrap();
    std::fs::write(&cache, &bytes[..bytes.len() - 3]).unwrap();
    assert!(read_return_cache(&cache).is_err());
}

#[test]
fn clean_drops_sparse_assets_and_fills_gaps() {
    let dates: Vec<NaiveDate> = (0..10)
        .map(|d| NaiveDate::from_ymd_opt(2023, 3, 1).unwrap() + chrono::Days::new(d))
        .collect();
    let mut sparse = vec![0.01; 10];
    sparse[0] = f64::NAN;
    sparse[1] = f64::NAN;
    let mut gappy = vec![0.02; 10];
    gappy[4] = f64::NAN;
    let r = ReturnMatrix::from_columns(dates, vec!["S".into(), "G".into()], vec![sparse, gappy]).unwrap();
    let c = clean(&r, CleanPolicy::default()).unwrap();
    assert_eq!(c.assets(), &["G".to_string()]);
    assert_eq!(c.get(4, 0), 0.0);
    assert!(matches!(
        clean(&r, CleanPolicy { max_missing_frac: 0.0 }),
        Err(Error::EmptyUniverse(_))
    ));
}
