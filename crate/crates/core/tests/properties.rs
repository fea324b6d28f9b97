//! Randomized invariants spanning module boundaries.

use duet_core::features::{decimate4, Spectrogram, SpectrogramKind};
use duet_core::linalg::{covariance_pair, svd, sym_eig, Matrix};
use duet_core::retrieval::{mrr1, recall_at_n, RankedResult};
use proptest::prelude::*;

fn matrix_strategy(max_dim: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-10.0..10.0f64, r * c)
            .prop_map(move |data| Matrix::from_vec(r, c, data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_factors_are_orthonormal_and_reconstruct(a in matrix_strategy(8)) {
        let dec = svd(&a).unwrap();
        let r = dec.singular_values.len();
        prop_assert!(r <= a.rows().min(a.cols()));

        let utu = dec.u.matmul_tn(&dec.u).unwrap();
        let vvt = dec.vt.matmul_nt(&dec.vt).unwrap();
        for i in 0..r {
            for j in 0..r {
                let id = if i == j { 1.0 } else { 0.0 };
                prop_assert!((utu[(i, j)] - id).abs() < 1e-9, "UᵀU[{i},{j}]={}", utu[(i, j)]);
                prop_assert!((vvt[(i, j)] - id).abs() < 1e-9, "VVᵀ[{i},{j}]={}", vvt[(i, j)]);
            }
        }
        for w in dec.singular_values.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        prop_assert!(dec.singular_values.iter().all(|&s| s >= 0.0));

        // A = U·diag(σ)·Vᵀ.
        let sigma = Matrix::from_diag(&dec.singular_values);
        let back = dec.u.matmul(&sigma).unwrap().matmul(&dec.vt).unwrap();
        let scale = dec.singular_values.first().copied().unwrap_or(0.0).max(1.0);
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                prop_assert!(
                    (back[(i, j)] - a[(i, j)]).abs() < 1e-9 * scale,
                    "reconstruction off at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn ridged_covariances_have_eigenvalues_at_or_above_the_ridge(
        data in proptest::collection::vec(-5.0..5.0f64, 4 * 20),
        ridge in 1e-6..1e-1f64,
    ) {
        let x = Matrix::from_vec(4, 20, data.clone()).unwrap();
        let y = Matrix::from_vec(4, 20, data.into_iter().rev().collect()).unwrap();
        let cov = covariance_pair(&x, &y, ridge).unwrap();
        for block in [&cov.cxx, &cov.cyy] {
            let eig = sym_eig(block).unwrap();
            for &v in &eig.values {
                // The sample covariance is PSD, so the ridge is a floor.
                prop_assert!(v >= ridge - 1e-12 * ridge.max(1.0), "eig {v} below ridge {ridge}");
            }
        }
    }

    #[test]
    fn recall_never_decreases_in_n(ranks in proptest::collection::vec(1usize..200, 1..60)) {
        let results: Vec<RankedResult> = ranks
            .iter()
            .enumerate()
            .map(|(i, &r)| RankedResult {
                query_id: format!("q{i}"),
                candidates: Vec::new(),
                relevant_rank: Some(r),
            })
            .collect();
        let mut prev = 0.0;
        for n in 1..=200 {
            let got = recall_at_n(&results, n).unwrap();
            prop_assert!(got >= prev);
            prop_assert!((0.0..=1.0).contains(&got));
            prev = got;
        }
        prop_assert!((prev - 1.0).abs() < 1e-15);
        let m = mrr1(&results).unwrap();
        prop_assert!(m > 0.0 && m <= 1.0);
        // Reciprocal-rank mass at 1 is exactly recall@1's share.
        prop_assert!(m >= recall_at_n(&results, 1).unwrap() / results.len() as f64);
    }

    #[test]
    fn decimation_partitions_the_first_644_frames(extra in 0usize..40, bands in 1usize..24) {
        let frames = 644 + extra;
        // Encode each frame's index in its values to track where it lands.
        let spec = Spectrogram {
            values: Matrix::from_fn(bands, frames, |_, f| f as f64),
            kind: SpectrogramKind::Mfcc,
            frame_length: 2048,
            hop: 1024,
        };
        let subs = decimate4(&spec).unwrap();
        let mut seen = vec![false; 644];
        for (j, sub) in subs.iter().enumerate() {
            prop_assert_eq!(sub.frames(), 161);
            prop_assert_eq!(sub.hop, 4096);
            for f in 0..161 {
                let source = sub.values[(0, f)] as usize;
                prop_assert_eq!(source, j + 4 * f, "sub {} frame {}", j, f);
                prop_assert!(!seen[source], "frame {} claimed twice", source);
                seen[source] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s), "some frame of 0..=643 unused");
    }
}
