use nalgebra::DMatrix;
use proptest::prelude::*;

use aviseg_core::clustering::{average_linkage_cluster, cut};
use aviseg_core::metrics::{pairwise_distances_rows, psd_projection, DistanceSpec, Form, MetricMatrix, Provenance};
use aviseg_core::prototypes::{dmax, minimax_linkage_cluster};

fn points(max_n: usize, d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (3..=max_n).prop_flat_map(move |n| {
        prop::collection::vec(-10.0..10.0f64, n * d).prop_map(move |v| DMatrix::from_row_slice(n, d, &v))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_psd_and_idempotent(v in prop::collection::vec(-5.0..5.0f64, 16)) {
        let a = DMatrix::from_row_slice(4, 4, &v);
        let a = (&a + a.transpose()) * 0.5;
        let p = psd_projection(&a).unwrap();
        let m = MetricMatrix::new(p.clone(), Form::Full, Provenance::Identity).unwrap();
        prop_assert!(m.min_eigenvalue().unwrap() >= -1e-8);
        let pp = psd_projection(&p).unwrap();
        prop_assert!((pp - p).abs().max() < 1e-9);
    }

    #[test]
    fn minimax_prototypes_cover_their_clusters(x in points(25, 3)) {
        let d = pairwise_distances_rows(&x, &DistanceSpec::euclidean()).unwrap();
        let dend = minimax_linkage_cluster(&d).unwrap();
        prop_assert!(dend.is_monotone());
        for (i, m) in dend.merges().iter().enumerate() {
            let node = x.nrows() + i;
            let r = dmax(m.prototype.unwrap(), &dend.members(node), &d).unwrap();
            prop_assert!(r <= m.height + 1e-9);
        }
    }

    #[test]
    fn average_linkage_cuts_are_nested(x in points(25, 2)) {
        let d = pairwise_distances_rows(&x, &DistanceSpec::euclidean()).unwrap();
        let dend = average_linkage_cluster(&d).unwrap();
        let n = x.nrows();
        for k in 2..=n {
            let fine = cut(&dend, k, "avg").unwrap();
            let coarse = cut(&dend, k - 1, "avg").unwrap();
            prop_assert_eq!(fine.k, k);
            // every fine cluster sits inside one coarse cluster
            for g in fine.groups() {
                let l = coarse.labels[g[0]];
                prop_assert!(g.iter().all(|&i| coarse.labels[i] == l));
            }
        }
    }

    #[test]
    fn diagonal_metric_scales_coordinates(x in points(10, 3), w in prop::collection::vec(0.0..4.0f64, 3)) {
        let m = MetricMatrix::from_diagonal(&w, Provenance::Identity).unwrap();
        let got = pairwise_distances_rows(&x, &DistanceSpec::Mahalanobis(m)).unwrap();
        let scaled = DMatrix::from_fn(x.nrows(), 3, |i, j| x[(i, j)] * w[j].sqrt());
        let want = pairwise_distances_rows(&scaled, &DistanceSpec::euclidean()).unwrap();
        prop_assert!((got.matrix() - want.matrix()).abs().max() < 1e-9);
    }
}
