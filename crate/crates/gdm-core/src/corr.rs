//! Pearson correlation between features and the redundancy-rate metric.

use serde::{Deserialize, Serialize};

use crate::data::SparseDataset;
use crate::error::{GdmError, Result};

/// Pearson correlation between features `j` and `k`.
///
/// With the zero-mean/unit-norm standardization this is the plain dot
/// product of the two standardized views; it is computed by a sparse merge
/// of the raw rows plus the `-n*mean_j*mean_k` correction, in
/// O(nnz_j + nnz_k). Either feature degenerate gives 0 by convention.
pub fn pearson(ds: &SparseDataset, j: usize, k: usize) -> f64 {
    let (sj, sk) = (ds.stats(j), ds.stats(k));
    if sj.degenerate || sk.degenerate {
        return 0.0;
    }
    if j == k {
        return 1.0;
    }
    let (ra, rb) = (ds.row(j), ds.row(k));
    let (ia, va) = (ra.samples(), ra.values());
    let (ib, vb) = (rb.samples(), rb.values());
    let mut dot = 0.0;
    let (mut a, mut b) = (0usize, 0usize);
    while a < ia.len() && b < ib.len() {
        match ia[a].cmp(&ib[b]) {
            std::cmp::Ordering::Less => a += 1,
            std::cmp::Ordering::Greater => b += 1,
            std::cmp::Ordering::Equal => {
                dot += va[a] * vb[b];
                a += 1;
                b += 1;
            }
        }
    }
    let n = ds.n_samples() as f64;
    // The product of means is grouped so the result is exactly symmetric.
    let rho = (dot - n * (sj.mean * sk.mean)) / (sj.centered_norm * sk.centered_norm);
    rho.clamp(-1.0, 1.0)
}

/// Normalizer used by [`redundancy_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RedNormalizer {
    /// Divide the unordered-pair sum by m*(m-1), reproducing the printed
    /// formula: values lie in [0, 0.5].
    OrderedPairs,
    /// Divide by the number of unordered pairs m*(m-1)/2: a plain mean,
    /// values in [0, 1].
    MeanPairs,
}

/// Averaged absolute pairwise correlation over a selected feature set.
///
/// Duplicated indices are collapsed before pairing; fewer than two distinct
/// features is an error.
pub fn redundancy_rate(ds: &SparseDataset, features: &[usize], norm: RedNormalizer) -> Result<f64> {
    let mut feats: Vec<usize> = features.to_vec();
    feats.sort_unstable();
    feats.dedup();
    if feats.len() < 2 {
        return Err(GdmError::InsufficientFeatures {
            needed: 2,
            got: feats.len(),
        });
    }
    if let Some(&bad) = feats.iter().find(|&&j| j >= ds.n_features()) {
        return Err(GdmError::DimensionMismatch {
            expected: ds.n_features(),
            got: bad,
        });
    }
    let m = feats.len() as f64;
    let mut sum = 0.0;
    for (a, &j) in feats.iter().enumerate() {
        for &k in feats.iter().take(a) {
            sum += pearson(ds, j, k).abs();
        }
    }
    Ok(match norm {
        RedNormalizer::OrderedPairs => sum / (m * (m - 1.0)),
        RedNormalizer::MeanPairs => sum / (m * (m - 1.0) / 2.0),
    })
}

/// Per-pair correlations for reporting, one entry per unordered pair.
pub fn pairwise_correlations(
    ds: &SparseDataset,
    features: &[usize],
) -> Result<Vec<(usize, usize, f64)>> {
    let mut feats: Vec<usize> = features.to_vec();
    feats.sort_unstable();
    feats.dedup();
    if feats.len() < 2 {
        return Err(GdmError::InsufficientFeatures {
            needed: 2,
            got: feats.len(),
        });
    }
    let mut out = Vec::with_capacity(feats.len() * (feats.len() - 1) / 2);
    for (a, &j) in feats.iter().enumerate() {
        for &k in feats.iter().skip(a + 1) {
            out.push((j, k, pearson(ds, j, k)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_libsvm;
    use proptest::prelude::*;

    /// Dense evaluation of the textbook covariance/stddev formula,
    /// independent of the sparse-merge path.
    fn dense_pearson(ds: &SparseDataset, j: usize, k: usize) -> f64 {
        let n = ds.n_samples() as f64;
        let a = ds.to_dense_column(j);
        let b = ds.to_dense_column(k);
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n).sqrt();
        let sb = (b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n).sqrt();
        cov / (sa * sb)
    }

    #[test]
    fn self_correlation_is_one() {
        let ds = parse_libsvm("+1 1:1\n-1 1:-2\n".as_bytes(), None).unwrap();
        assert_eq!(pearson(&ds, 0, 0), 1.0);
    }

    #[test]
    fn negated_feature_is_minus_one() {
        let ds = parse_libsvm("+1 1:1 2:-1\n-1 1:-1 2:1\n+1 1:3 2:-3\n".as_bytes(), None).unwrap();
        assert!((pearson(&ds, 0, 1) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_example() {
        // f_j = (1,-1,0), f_k = (0,1,-1): rho = -0.5.
        let ds =
            parse_libsvm("+1 1:1\n-1 1:-1 2:1\n+1 2:-1\n".as_bytes(), None).unwrap();
        assert!((pearson(&ds, 0, 1) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_feature_yields_zero() {
        let ds = parse_libsvm("+1 1:2 2:1\n-1 1:2 2:-1\n".as_bytes(), None).unwrap();
        assert_eq!(pearson(&ds, 0, 1), 0.0);
        assert_eq!(pearson(&ds, 0, 0), 0.0);
    }

    #[test]
    fn red_duplicated_pair_is_half() {
        // Two identical columns: one unordered pair, |rho| = 1, m(m-1) = 2.
        let ds = parse_libsvm("+1 1:1 2:1\n-1 1:-1 2:-1\n".as_bytes(), None).unwrap();
        let red = redundancy_rate(&ds, &[0, 1], RedNormalizer::OrderedPairs).unwrap();
        assert!((red - 0.5).abs() < 1e-12);
        let red2 = redundancy_rate(&ds, &[0, 1], RedNormalizer::MeanPairs).unwrap();
        assert!((red2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn red_orthogonal_features_is_zero() {
        let ds = parse_libsvm(
            "+1 1:1 2:1\n-1 1:1 2:-1\n+1 1:-1 2:1\n-1 1:-1 2:-1\n".as_bytes(),
            None,
        )
        .unwrap();
        let red = redundancy_rate(&ds, &[0, 1], RedNormalizer::OrderedPairs).unwrap();
        assert!(red.abs() < 1e-12);
    }

    #[test]
    fn red_three_feature_example() {
        // Pairwise |rho| = {0.6, 0.0, 0.4} -> RED = 1/6. Built from three
        // orthogonal zero-mean basis vectors on n=4:
        //   f0 = u1
        //   f1 = 0.6 u1 + 0.8 u2                      rho(0,1) = 0.6
        //   f2 = 0.4 u1 - 0.3 u2 + sqrt(0.75) u3      rho(0,2) = 0.4
        // and rho(1,2) = 0.6*0.4 + 0.8*(-0.3) = 0.
        let u1 = [1.0, 1.0, -1.0, -1.0];
        let u2 = [1.0, -1.0, 1.0, -1.0];
        let u3 = [1.0, -1.0, -1.0, 1.0];
        let c = 0.75f64.sqrt();
        let f0: Vec<f64> = u1.to_vec();
        let f1: Vec<f64> = (0..4).map(|i| 0.6 * u1[i] + 0.8 * u2[i]).collect();
        let f2: Vec<f64> = (0..4).map(|i| 0.4 * u1[i] - 0.3 * u2[i] + c * u3[i]).collect();
        let ds =
            SparseDataset::from_dense_columns(&[f0, f1, f2], vec![1, -1, 1, -1]).unwrap();
        assert!((pearson(&ds, 0, 1) - 0.6).abs() < 1e-12);
        assert!((pearson(&ds, 0, 2) - 0.4).abs() < 1e-12);
        assert!(pearson(&ds, 1, 2).abs() < 1e-12);
        let red = redundancy_rate(&ds, &[0, 1, 2], RedNormalizer::OrderedPairs).unwrap();
        assert!((red - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn red_rejects_small_sets() {
        let ds = parse_libsvm("+1 1:1\n-1 1:-1\n".as_bytes(), None).unwrap();
        assert!(matches!(
            redundancy_rate(&ds, &[0], RedNormalizer::OrderedPairs),
            Err(GdmError::InsufficientFeatures { .. })
        ));
        assert!(matches!(
            redundancy_rate(&ds, &[0, 0, 0], RedNormalizer::OrderedPairs),
            Err(GdmError::InsufficientFeatures { .. })
        ));
    }

    proptest! {
        #[test]
        fn pearson_matches_dense_oracle_and_is_symmetric(
            cols in proptest::collection::vec(
                proptest::collection::vec(-5.0f64..5.0, 7), 2..5),
        ) {
            let labels = vec![1i8, -1, 1, -1, 1, -1, 1];
            let ds = SparseDataset::from_dense_columns(&cols, labels).unwrap();
            for j in 0..ds.n_features() {
                for k in 0..ds.n_features() {
                    let r = pearson(&ds, j, k);
                    prop_assert_eq!(r, pearson(&ds, k, j));
                    prop_assert!(r.abs() <= 1.0 + 1e-10);
                    if !ds.is_degenerate(j) && !ds.is_degenerate(k) && j != k {
                        let dense = dense_pearson(&ds, j, k);
                        prop_assert!((r - dense).abs() <= 1e-10 * dense.abs().max(1.0));
                    }
                }
            }
        }

        #[test]
        fn red_is_permutation_invariant_and_bounded(
            cols in proptest::collection::vec(
                proptest::collection::vec(-5.0f64..5.0, 6), 3..6),
            seed in 0u64..1000,
        ) {
            let labels = vec![1i8, -1, 1, -1, 1, -1];
            let ds = SparseDataset::from_dense_columns(&cols, labels).unwrap();
            let feats: Vec<usize> = (0..ds.n_features()).collect();
            let mut shuffled = feats.clone();
            // cheap deterministic shuffle
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, (seed as usize).wrapping_mul(31).wrapping_add(i) % (i + 1));
            }
            let a = redundancy_rate(&ds, &feats, RedNormalizer::OrderedPairs).unwrap();
            let b = redundancy_rate(&ds, &shuffled, RedNormalizer::OrderedPairs).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=0.5 + 1e-12).contains(&a));
        }
    }
}
