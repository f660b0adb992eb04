use std::collections::BTreeSet;

use proptest::prelude::*;
use quacc::dataset::{average_ranks, jitter, kfold_split, qq_transform, Column, Dataset};
use quacc::rng::seeded;

fn optional_column() -> impl Strategy<Value = Vec<Option<f64>>> {
    proptest::collection::vec(proptest::option::weighted(0.8, -1e3f64..1e3), 2..60)
}

proptest! {
    #[test]
    fn kfold_is_a_balanced_partition(n in 2usize..300, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = kfold_split(n, k, &mut seeded(seed)).unwrap();
        let mut all = BTreeSet::new();
        for f in 0..k {
            let test = folds.test_rows(f);
            let train = folds.train_rows(f);
            prop_assert_eq!(test.len() + train.len(), n);
            prop_assert!(test.iter().all(|r| !train.contains(r)));
            all.extend(test);
        }
        prop_assert_eq!(all.len(), n);
        let sizes = folds.fold_sizes();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
    }

    #[test]
    fn average_ranks_sum_and_order(v in proptest::collection::vec(prop_oneof![(-5i32..5).prop_map(f64::from), -5.0f64..5.0], 1..50)) {
        let r = average_ranks(&v);
        let n = v.len() as f64;
        prop_assert!((r.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
        for i in 0..v.len() {
            for j in 0..v.len() {
                if v[i] < v[j] {
                    prop_assert!(r[i] < r[j]);
                }
                if v[i] == v[j] {
                    prop_assert_eq!(r[i], r[j]);
                }
            }
        }
    }

    #[test]
    fn qq_transform_preserves_order_and_missingness(v in optional_column()) {
        let observed = v.iter().flatten().count();
        prop_assume!(observed >= 2);
        let q = qq_transform(&v).unwrap();
        for (a, b) in v.iter().zip(&q) {
            prop_assert_eq!(a.is_some(), b.is_some());
        }
        let pairs: Vec<(f64, f64)> = v.iter().zip(&q).filter_map(|(a, b)| Some(((*a)?, (*b)?))).collect();
        for (a, qa) in &pairs {
            prop_assert!(qa.is_finite());
            for (b, qb) in &pairs {
                if a < b {
                    prop_assert!(qa < qb);
                }
            }
        }
    }

    #[test]
    fn jitter_stays_within_a_fifth_of_the_gap(v in proptest::collection::vec(-100i32..100, 2..40), seed in any::<u64>()) {
        let values: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
        let distinct: BTreeSet<i32> = v.iter().copied().collect();
        prop_assume!(distinct.len() >= 2);
        let gap = distinct.iter().zip(distinct.iter().skip(1)).map(|(a, b)| b - a).min().unwrap();
        let out = jitter(&values, &mut seeded(seed)).unwrap();
        for (a, b) in values.iter().zip(&out) {
            prop_assert!((a - b).abs() <= f64::from(gap) / 5.0);
        }
    }

    #[test]
    fn csv_round_trip(cols in proptest::collection::vec(optional_column(), 1..4)) {
        let n = cols.iter().map(Vec::len).min().unwrap();
        let columns: Vec<Column> = cols
            .into_iter()
            .enumerate()
            .map(|(i, mut c)| {
                c.truncate(n);
                Column::new(format!("c{i}"), c)
            })
            .collect();
        let d = Dataset::new(columns).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), b',').unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn pairwise_complete_keeps_only_full_rows(a in optional_column(), b in optional_column()) {
        let n = a.len().min(b.len());
        let d = Dataset::new(vec![Column::new("a", a[..n].to_vec()), Column::new("b", b[..n].to_vec())]).unwrap();
        let full = (0..n).filter(|&i| a[i].is_some() && b[i].is_some()).count();
        let c = d.pairwise_complete(&["a", "b"]).unwrap();
        prop_assert_eq!(c.n_rows(), full);
        prop_assert!(c.values("a").is_ok());
    }
}

#[test]
fn load_csv_from_disk_with_semicolons() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    std::fs::write(&path, "x;y\n1;2\n3;\nNA;4\n").unwrap();
    let d = Dataset::load_csv(&path, b';').unwrap();
    assert_eq!(d.n_rows(), 3);
    assert_eq!(d.column("y").unwrap(), &[Some(2.0), None, Some(4.0)]);
    assert_eq!(d.column("x").unwrap()[2], None);
}
