//! Correlation redundancy matching: the worst-case analysis of the
//! cutting-plane loop.
//!
//! Every feature is scored against the current signed dual vector; the
//! ranked greedy scan then selects support features under the pairwise
//! correlation constraint and claims each support's correlated features as
//! its affiliated group. Correlation checks are pruned with the score
//! window: two standardized features with |rho| >= 1 - tau have scores
//! within sqrt(2*tau)*||alpha|| of each other, so a candidate below every
//! open window cannot be correlated with any chosen support.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corr::pearson;
use crate::data::SparseDataset;
use crate::error::{GdmError, Result};

/// Per-feature scores c_j = (standardized f_j) . alpha_signed and the
/// ranking by descending |c_j| (ties broken by ascending index).
#[derive(Debug, Clone)]
pub struct ScoreVector {
    pub c: Vec<f64>,
    pub ranking: Vec<usize>,
}

/// One active constraint: the support features (the mask's set bits) and,
/// per support, its affiliated feature group in scan order; every group
/// starts with its own support feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintMask {
    pub support: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
}

impl ConstraintMask {
    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// All features claimed by this mask (supports and affiliated).
    pub fn claimed(&self) -> impl Iterator<Item = usize> + '_ {
        self.groups.iter().flatten().copied()
    }
}

/// Score every feature against the signed dual vector.
pub fn score_features(ds: &SparseDataset, alpha_signed: &[f64]) -> Result<ScoreVector> {
    if alpha_signed.len() != ds.n_samples() {
        return Err(GdmError::DimensionMismatch {
            expected: ds.n_samples(),
            got: alpha_signed.len(),
        });
    }
    if alpha_signed.iter().all(|&v| v == 0.0) {
        return Err(GdmError::DegenerateDual);
    }
    let sum: f64 = alpha_signed.iter().sum();
    let c: Vec<f64> = (0..ds.n_features())
        .into_par_iter()
        .map(|j| ds.standardized_dot_with_sum(j, alpha_signed, sum))
        .collect();
    let mut ranking: Vec<usize> = (0..ds.n_features()).collect();
    ranking.sort_unstable_by(|&a, &b| c[b].abs().total_cmp(&c[a].abs()).then(a.cmp(&b)));
    Ok(ScoreVector { c, ranking })
}

/// What happened to one visited feature during a scan, for debug traces.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "action", content = "support")]
pub enum CrmAction {
    Support,
    AffiliatedTo(usize),
    Unclaimed,
    Excluded,
    Degenerate,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrmVisit {
    pub feature: usize,
    pub abs_score: f64,
    #[serde(flatten)]
    pub action: CrmAction,
}

/// Debug record of one scan: the window width and every visited feature.
#[derive(Debug, Clone, Serialize)]
pub struct CrmTrace {
    pub window_width: f64,
    pub visited: Vec<CrmVisit>,
}

/// Greedy ranked scan selecting up to `budget` support features that are
/// pairwise uncorrelated at level 1 - tau, claiming correlated features as
/// affiliated groups along the way.
///
/// Every visited feature (non-degenerate, outside `excluded`) either becomes
/// a support or is claimed by the first higher-scoring support it correlates
/// with; the scan stops once the budget is full and every support's score
/// window has closed.
pub fn match_mask(
    ds: &SparseDataset,
    scores: &ScoreVector,
    budget: usize,
    tau: f64,
    alpha_norm: f64,
    excluded: &HashSet<usize>,
) -> Result<ConstraintMask> {
    scan(ds, scores, budget, tau, alpha_norm, excluded, None)
}

/// Like [`match_mask`] but also returns the scan trace.
pub fn match_mask_traced(
    ds: &SparseDataset,
    scores: &ScoreVector,
    budget: usize,
    tau: f64,
    alpha_norm: f64,
    excluded: &HashSet<usize>,
) -> Result<(ConstraintMask, CrmTrace)> {
    let mut trace = CrmTrace {
        window_width: (2.0 * tau).sqrt() * alpha_norm,
        visited: Vec::new(),
    };
    let mask = scan(ds, scores, budget, tau, alpha_norm, excluded, Some(&mut trace))?;
    Ok((mask, trace))
}

fn scan(
    ds: &SparseDataset,
    scores: &ScoreVector,
    budget: usize,
    tau: f64,
    alpha_norm: f64,
    excluded: &HashSet<usize>,
    mut trace: Option<&mut CrmTrace>,
) -> Result<ConstraintMask> {
    if budget == 0 {
        return Err(GdmError::InvalidConfig("budget must be at least 1".into()));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(GdmError::InvalidConfig("tau must lie in (0, 1)".into()));
    }
    if !(alpha_norm > 0.0) {
        return Err(GdmError::InvalidConfig(
            "alpha norm must be positive".into(),
        ));
    }

    let window = (2.0 * tau).sqrt() * alpha_norm;
    let corr_threshold = 1.0 - tau;
    let mut support: Vec<usize> = Vec::new();
    let mut support_score: Vec<f64> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();

    let note = |t: &mut Option<&mut CrmTrace>, feature: usize, abs: f64, action: CrmAction| {
        if let Some(tr) = t.as_deref_mut() {
            tr.visited.push(CrmVisit {
                feature,
                abs_score: abs,
                action,
            });
        }
    };

    for &h in &scores.ranking {
        let abs_h = scores.c[h].abs();
        if ds.is_degenerate(h) {
            note(&mut trace, h, abs_h, CrmAction::Degenerate);
            continue;
        }
        if excluded.contains(&h) {
            note(&mut trace, h, abs_h, CrmAction::Excluded);
            continue;
        }

        // Windows close in selection order (support scores descend), so the
        // open ones form a suffix of the support list.
        let mut any_open = false;
        let mut claimed_by = None;
        for (idx, (&z, &score_z)) in support.iter().zip(&support_score).enumerate() {
            if abs_h >= score_z - window {
                any_open = true;
                if pearson(ds, z, h).abs() >= corr_threshold {
                    claimed_by = Some(idx);
                    break;
                }
            }
        }

        if let Some(idx) = claimed_by {
            groups[idx].push(h);
            note(&mut trace, h, abs_h, CrmAction::AffiliatedTo(support[idx]));
            continue;
        }
        if support.len() < budget {
            support.push(h);
            support_score.push(abs_h);
            groups.push(vec![h]);
            note(&mut trace, h, abs_h, CrmAction::Support);
            continue;
        }
        if !any_open {
            // Budget is full and every window has closed; lower-ranked
            // features cannot be correlated with any support.
            break;
        }
        note(&mut trace, h, abs_h, CrmAction::Unclaimed);
    }

    Ok(ConstraintMask { support, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_libsvm;

    #[test]
    fn scores_match_hand_example() {
        // n=2, y=(+1,-1), alpha=(1/2,1/2), feature standardized to
        // (1/sqrt(2), -1/sqrt(2)): c = 1/sqrt(2).
        let ds = parse_libsvm("+1 1:1\n-1 1:-1\n".as_bytes(), None).unwrap();
        let alpha_signed = [0.5, -0.5];
        let s = score_features(&ds, &alpha_signed).unwrap();
        assert!((s.c[0] - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn unit_mass_scores_single_row() {
        let ds = parse_libsvm("+1 1:1 2:-3\n-1 1:2 2:1\n+1 1:-1 2:0.5\n".as_bytes(), None).unwrap();
        let alpha_signed = [0.0, -1.0, 0.0]; // unit mass on sample 1 (y=-1)
        let s = score_features(&ds, &alpha_signed).unwrap();
        for j in 0..2 {
            // single-term sum: c_j = y_1 * x_hat_1j
            let z = ds.standardized_dense(j);
            assert!((s.c[j] - (-1.0) * z[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_dual_is_rejected() {
        let ds = parse_libsvm("+1 1:1\n-1 1:-1\n".as_bytes(), None).unwrap();
        assert!(matches!(
            score_features(&ds, &[0.0, 0.0]),
            Err(GdmError::DegenerateDual)
        ));
    }

    #[test]
    fn ranking_is_sorted_with_index_tie_break() {
        let ds = parse_libsvm("+1 1:1 2:-1 3:1\n-1 1:-1 2:1 3:-1\n".as_bytes(), None).unwrap();
        let s = score_features(&ds, &[0.5, -0.5]).unwrap();
        // all three have |c| = 1/sqrt(2); ties break by ascending index
        assert_eq!(s.ranking, vec![0, 1, 2]);
        for w in s.ranking.windows(2) {
            assert!(s.c[w[0]].abs() >= s.c[w[1]].abs());
        }
    }

    /// Orthonormal zero-mean basis on n=6 via Gram-Schmidt over difference
    /// vectors.
    fn contrast_basis() -> Vec<Vec<f64>> {
        let n = 6;
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for k in 0..5 {
            let mut v = vec![0.0; n];
            v[k] = 1.0;
            v[k + 1] = -1.0;
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= d * bi;
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for vi in &mut v {
                *vi /= norm;
            }
            basis.push(v);
        }
        basis
    }

    fn combine(basis: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
        let n = basis[0].len();
        let mut out = vec![0.0; n];
        for (b, &c) in basis.iter().zip(coeffs) {
            for i in 0..n {
                out[i] += c * b[i];
            }
        }
        out
    }

    /// Brute-force maximizer of sum c_j^2 over all masks with at most
    /// `budget` features and no pair correlated at >= 1 - tau.
    fn brute_force_best(ds: &SparseDataset, c: &[f64], budget: usize, tau: f64) -> f64 {
        let m = ds.n_features();
        let mut best = 0.0f64;
        for mask in 0u32..(1 << m) {
            let feats: Vec<usize> = (0..m).filter(|&j| mask >> j & 1 == 1).collect();
            if feats.len() > budget || feats.iter().any(|&j| ds.is_degenerate(j)) {
                continue;
            }
            let feasible = feats.iter().enumerate().all(|(a, &j)| {
                feats
                    .iter()
                    .take(a)
                    .all(|&k| pearson(ds, j, k).abs() < 1.0 - tau)
            });
            if feasible {
                let val: f64 = feats.iter().map(|&j| c[j] * c[j]).sum();
                best = best.max(val);
            }
        }
        best
    }

    #[test]
    fn four_feature_worked_example() {
        // Scores (3.0, 2.5, 1.0, 0.5), only the top pair correlated at 0.9,
        // tau = 0.25, B = 2: the correlated runner-up is claimed and the
        // next uncorrelated feature becomes the second support.
        let basis = contrast_basis();
        let alpha_signed = combine(&basis, &[4.0, 0.0, 0.0, 0.0, 0.0]);
        let beta = (0.9 - 0.75 * 0.625) / (1.0f64 - 0.75 * 0.75).sqrt();
        let f1 = combine(&basis, &[0.75, (1.0f64 - 0.5625).sqrt(), 0.0, 0.0, 0.0]);
        let f2 = combine(
            &basis,
            &[
                0.625,
                beta,
                (1.0 - 0.625f64 * 0.625 - beta * beta).sqrt(),
                0.0,
                0.0,
            ],
        );
        let f3 = combine(&basis, &[0.25, 0.0, 0.0, (1.0f64 - 0.0625).sqrt(), 0.0]);
        let f4 = combine(&basis, &[0.125, 0.0, 0.0, 0.0, (1.0f64 - 0.015625).sqrt()]);
        let ds =
            SparseDataset::from_dense_columns(&[f1, f2, f3, f4], vec![1, -1, 1, -1, 1, -1])
                .unwrap();

        let scores = score_features(&ds, &alpha_signed).unwrap();
        let expected = [3.0, 2.5, 1.0, 0.5];
        for (j, e) in expected.iter().enumerate() {
            assert!(
                (scores.c[j].abs() - e).abs() < 1e-9,
                "c[{j}] = {}",
                scores.c[j]
            );
        }
        assert!((pearson(&ds, 0, 1) - 0.9).abs() < 1e-9);

        let mask = match_mask(&ds, &scores, 2, 0.25, 4.0, &HashSet::new()).unwrap();
        assert_eq!(mask.support, vec![0, 2]);
        assert_eq!(mask.groups, vec![vec![0, 1], vec![2]]);

        // Independent check: the brute-force maximum over feasible masks.
        let best_val = brute_force_best(&ds, &scores.c, 2, 0.25);
        let got: f64 = mask.support.iter().map(|&j| scores.c[j].powi(2)).sum();
        assert!((got - best_val).abs() <= 1e-9 * best_val);
    }

    #[test]
    fn uncorrelated_features_degenerate_to_top_b() {
        let basis = contrast_basis();
        let alpha_signed = combine(&basis, &[2.0, 0.0, 0.0, 0.0, 0.0]);
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|j| {
                let mut coeffs = vec![0.0; 5];
                coeffs[0] = 0.4 - 0.1 * j as f64; // distinct scores
                coeffs[j + 1] = (1.0 - coeffs[0] * coeffs[0]).sqrt();
                combine(&basis, &coeffs)
            })
            .collect();
        let ds = SparseDataset::from_dense_columns(&cols, vec![1, -1, 1, -1, 1, -1]).unwrap();
        let scores = score_features(&ds, &alpha_signed).unwrap();
        let mask = match_mask(&ds, &scores, 3, 0.25, 2.0, &HashSet::new()).unwrap();
        assert_eq!(mask.support, vec![0, 1, 2]);
        assert!(mask.groups.iter().all(|g| g.len() == 1));
    }

    #[test]
    fn fully_correlated_features_collapse_to_one_group() {
        // Four near-duplicate columns: single support, group of all four,
        // remaining budget unused.
        let base = [1.0, -1.0, 0.5, -0.5, 0.25, -0.25];
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|j| base.iter().map(|&v| v * (1.0 + 0.01 * j as f64)).collect())
            .collect();
        let ds = SparseDataset::from_dense_columns(&cols, vec![1, -1, 1, -1, 1, -1]).unwrap();
        let alpha_signed = vec![0.5, -0.3, 0.1, -0.05, 0.03, -0.02];
        let norm = alpha_signed.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scores = score_features(&ds, &alpha_signed).unwrap();
        let mask = match_mask(&ds, &scores, 3, 0.25, norm, &HashSet::new()).unwrap();
        assert_eq!(mask.support.len(), 1);
        let mut g = mask.groups[0].clone();
        g.sort_unstable();
        assert_eq!(g, vec![0, 1, 2, 3]);
    }

    #[test]
    fn excluded_features_are_invisible() {
        let ds = parse_libsvm(
            "+1 1:1 2:1 3:-1\n-1 1:-1 2:-1 3:1\n+1 1:0.5 2:0.4 3:-0.6\n".as_bytes(),
            None,
        )
        .unwrap();
        let alpha_signed = vec![0.4, -0.4, 0.2];
        let norm = alpha_signed.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scores = score_features(&ds, &alpha_signed).unwrap();
        let excluded: HashSet<usize> = [0, 1, 2].into_iter().collect();
        let mask = match_mask(&ds, &scores, 2, 0.25, norm, &excluded).unwrap();
        assert!(mask.is_empty());
    }

    #[test]
    fn affiliated_features_satisfy_score_window() {
        let basis = contrast_basis();
        let alpha_signed = combine(&basis, &[1.5, 0.7, -0.3, 0.2, 0.0]);
        let norm = alpha_signed.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut cols = Vec::new();
        for j in 0..5 {
            let mut coeffs = [0.0; 5];
            coeffs[j] = 1.0;
            let lead = combine(&basis, &coeffs);
            cols.push(lead.clone());
            // a correlated sibling
            let mut sib = lead;
            for (i, v) in sib.iter_mut().enumerate() {
                *v += 0.1 * basis[(j + 1) % 5][i];
            }
            cols.push(sib);
        }
        let ds = SparseDataset::from_dense_columns(&cols, vec![1, -1, 1, -1, 1, -1]).unwrap();
        let tau = 0.25;
        let scores = score_features(&ds, &alpha_signed).unwrap();
        let mask = match_mask(&ds, &scores, 4, tau, norm, &HashSet::new()).unwrap();
        let window = (2.0 * tau).sqrt() * norm;
        for (gi, group) in mask.groups.iter().enumerate() {
            let z = mask.support[gi];
            for &h in &group[1..] {
                assert!(scores.c[h].abs() >= scores.c[z].abs() - window - 1e-12);
                assert!(pearson(&ds, z, h).abs() >= 1.0 - tau);
            }
        }
        // feasibility of the support set
        for (a, &j) in mask.support.iter().enumerate() {
            for &k in mask.support.iter().take(a) {
                assert!(pearson(&ds, j, k).abs() < 1.0 - tau);
            }
        }
    }

    #[test]
    fn determinism() {
        let ds = parse_libsvm(
            "+1 1:1 2:0.9 3:-1 4:0.1\n-1 1:-1 2:-0.8 3:1 4:0.2\n+1 1:0.5 2:0.6 3:-0.2 4:-0.3\n"
                .as_bytes(),
            None,
        )
        .unwrap();
        let alpha_signed = vec![0.3, -0.5, 0.2];
        let norm = alpha_signed.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scores = score_features(&ds, &alpha_signed).unwrap();
        let a = match_mask(&ds, &scores, 2, 0.25, norm, &HashSet::new()).unwrap();
        let b = match_mask(&ds, &scores, 2, 0.25, norm, &HashSet::new()).unwrap();
        assert_eq!(a, b);
    }
}
