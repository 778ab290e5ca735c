use metacluster::bench::clustering_accuracy;
use metacluster::collaborate::{aggregate_predict, ClusterEnsemble};
use metacluster::dataset::{parse_learners, write_learners, SubDataset};
use metacluster::exchange::{select_bandwidth, DissimilarityMatrix, SimilarityMatrix};
use metacluster::models::{select_method, MethodSpec};
use metacluster::spectral::{kmeans, sec_cluster, within_dispersion, SelectionConfig};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn dissimilarity(n: usize, upper: &[f64]) -> DissimilarityMatrix {
    let mut v = Array2::zeros((n, n));
    let mut it = upper.iter();
    for i in 0..n {
        for j in (i + 1)..n {
            let x = *it.next().unwrap();
            v[[i, j]] = x;
            v[[j, i]] = x;
        }
    }
    DissimilarityMatrix::new((1..=n).collect(), v).unwrap()
}

fn upper_strategy() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (2usize..10).prop_flat_map(|n| (Just(n), prop::collection::vec(0.0f64..5.0, n * (n - 1) / 2)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn similarity_is_symmetric_with_unit_diagonal((n, upper) in upper_strategy()) {
        let v = dissimilarity(n, &upper);
        let s = SimilarityMatrix::from_dissimilarity(&v, select_bandwidth(&v)).unwrap();
        let m = s.values();
        for i in 0..n {
            prop_assert_eq!(m[[i, i]], 1.0);
            for j in 0..n {
                prop_assert_eq!(m[[i, j]], m[[j, i]]);
                prop_assert!(m[[i, j]] > 0.0 && m[[i, j]] <= 1.0);
            }
        }
    }

    #[test]
    fn median_bandwidth_ignores_loss_units((n, upper) in upper_strategy(), c in 0.01f64..100.0) {
        let v = dissimilarity(n, &upper);
        let scaled = dissimilarity(n, &upper.iter().map(|x| x * c).collect::<Vec<_>>());
        let a = select_bandwidth(&v);
        let b = select_bandwidth(&scaled);
        if upper.iter().any(|&x| x > 0.0) {
            prop_assert!((a / b - c).abs() <= 1e-9 * c);
            let s1 = SimilarityMatrix::from_dissimilarity(&v, a).unwrap();
            let s2 = SimilarityMatrix::from_dissimilarity(&scaled, b).unwrap();
            let diff = (s1.values() - s2.values()).iter().fold(0.0f64, |m, x| m.max(x.abs()));
            prop_assert!(diff <= 1e-9);
        } else {
            prop_assert_eq!(a, 1.0);
        }
    }

    #[test]
    fn kmeans_labels_are_canonical_and_objective_consistent(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 3..15),
        k in 1usize..4,
        seed in any::<u64>(),
    ) {
        let n = rows.len();
        prop_assume!(k <= n);
        let x = Array2::from_shape_vec((n, 2), rows.concat()).unwrap();
        let r = kmeans(x.view(), k, seed).unwrap();
        let mut next = 0;
        for &l in &r.labels {
            prop_assert!(l <= next);
            if l == next {
                next += 1;
            }
        }
        let w = within_dispersion(x.view(), &r.labels).unwrap();
        prop_assert!((w - r.objective).abs() <= 1e-9 * (1.0 + w));
        let one = within_dispersion(x.view(), &vec![0; n]).unwrap();
        prop_assert!(r.objective <= one + 1e-9);
    }

    #[test]
    fn clustering_ignores_learner_order(
        sizes in prop::collection::vec(2usize..5, 2..4),
        noise in prop::collection::vec(0.0f64..0.05, 200),
        perm_seed in any::<u64>(),
    ) {
        let truth: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &m)| std::iter::repeat_n(b, m)).collect();
        let n = truth.len();
        let mut s = Array2::from_shape_fn((n, n), |(i, j)| if truth[i] == truth[j] { 0.9 } else { 0.05 });
        for i in 0..n {
            s[[i, i]] = 1.0;
            for j in (i + 1)..n {
                let e = noise[(i * n + j) % noise.len()];
                s[[i, j]] -= e;
                s[[j, i]] -= e;
            }
        }
        let s = SimilarityMatrix::from_array(s).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut state = perm_seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let cfg = SelectionConfig::default();
        let k = sizes.len();
        let base = sec_cluster(&s, Some(k), &cfg, 5).unwrap();
        let moved = sec_cluster(&s.permuted(&perm).unwrap(), Some(k), &cfg, 5).unwrap();
        let back: Vec<usize> = {
            let mut b = vec![0; n];
            for (pos, &orig) in perm.iter().enumerate() {
                b[orig] = moved.labels[pos];
            }
            b
        };
        prop_assert!(clustering_accuracy(&back, &base.labels).unwrap().exact);
        prop_assert!(clustering_accuracy(&base.labels, &truth).unwrap().exact);
    }

    #[test]
    fn accuracy_ignores_label_names(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..30),
        shift in 1usize..4,
    ) {
        let (found, truth): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let renamed: Vec<usize> = found.iter().map(|l| (l + shift) % 4 + 10).collect();
        let a = clustering_accuracy(&found, &truth).unwrap();
        let b = clustering_accuracy(&renamed, &truth).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a.fraction > 0.0 && a.fraction <= 1.0);
    }

    #[test]
    fn learner_csv_round_trips(
        n in 2usize..6,
        p in 1usize..4,
        vals in prop::collection::vec(-1e6f64..1e6, 5 * 6 * 5),
    ) {
        let learners: Vec<SubDataset> = (0..3)
            .map(|l| {
                let off = l * n * (p + 1);
                let x = Array2::from_shape_fn((n, p), |(i, j)| vals[off + i * p + j]);
                let y = Array1::from_shape_fn(n, |i| vals[off + n * p + i]);
                SubDataset::new(l + 1, x, y).unwrap()
            })
            .collect();
        let mut buf = Vec::new();
        write_learners(&learners, &mut buf).unwrap();
        let back = parse_learners(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), 3);
        for (a, b) in learners.iter().zip(&back) {
            prop_assert_eq!(a.learner_id(), b.learner_id());
            prop_assert_eq!(a.features(), b.features());
            prop_assert_eq!(a.responses(), b.responses());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ensemble_of_exact_fits_reproduces_the_shared_function(
        beta in prop::collection::vec(-2.0f64..2.0, 3),
        sizes in prop::collection::vec(12usize..30, 1..4),
        x in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let infos: Vec<_> = sizes
            .iter()
            .enumerate()
            .map(|(l, &n)| {
                let feats = Array2::from_shape_fn((n, 3), |(i, j)| (((i * 7 + j * 3 + l) % 11) as f64 - 5.0) / 3.0 + (i * j) as f64 * 0.01);
                let y = feats.dot(&Array1::from(beta.clone()));
                let d = SubDataset::new(l + 1, feats, y).unwrap();
                select_method(&[MethodSpec::ols()], &d, l as u64).unwrap()
            })
            .collect();
        let ens = ClusterEnsemble::new(0, infos).unwrap();
        prop_assert!((ens.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let x = Array1::from(x);
        let want = x.dot(&Array1::from(beta));
        let got = aggregate_predict(&ens, x.view()).unwrap();
        prop_assert!((got - want).abs() <= 1e-6 * (1.0 + want.abs()), "{} vs {}", got, want);
    }
}
