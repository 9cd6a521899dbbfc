//! Clique-structured synthetic benchmarks with known ground truth.
//!
//! Informative feature groups are built from per-group latent signals: each
//! group has a representative feature (latent plus small noise) and, in
//! correlated groups, members perturbed from the representative so that
//! empirical pairwise correlation stays above the configured target.
//! Labels come from a linear logit over the latent signals with per-group
//! weights. Everything is driven by one seeded generator, so generation is
//! bit-reproducible.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SparseDataset;
use crate::error::{GdmError, Result};
use crate::gdm::SelectionModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub n_features: usize,
    /// Number of informative groups.
    pub n_groups: usize,
    /// How many of the informative groups have more than one member.
    pub n_correlated_groups: usize,
    /// Member count range (inclusive) for correlated groups.
    pub group_size_range: (usize, usize),
    /// Target empirical |rho| between members of one group.
    pub within_group_corr: f64,
    /// Scale of the independent noise added to each representative feature.
    pub noise_level: f64,
    /// Scale of the noise added to the label logit.
    pub label_noise: f64,
    /// Group weights are redrawn until |w| reaches this floor; 0 keeps the
    /// plain standard normal draw.
    pub min_abs_weight: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Scaled-down default: 512 x 2000 with 40 groups, 8 of them correlated
    /// with 4-8 members.
    pub fn desk_default() -> Self {
        SynthConfig {
            n_samples: 512,
            n_features: 2000,
            n_groups: 40,
            n_correlated_groups: 8,
            group_size_range: (4, 8),
            within_group_corr: 0.9,
            noise_level: 0.1,
            label_noise: 0.1,
            min_abs_weight: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(GdmError::InvalidConfig("need at least 2 samples".into()));
        }
        if self.n_correlated_groups > self.n_groups {
            return Err(GdmError::InvalidConfig(
                "correlated groups cannot exceed total groups".into(),
            ));
        }
        if !(self.within_group_corr > 0.0 && self.within_group_corr < 1.0) {
            return Err(GdmError::InvalidConfig(
                "within-group correlation must lie in (0, 1)".into(),
            ));
        }
        if self.group_size_range.0 < 2 || self.group_size_range.0 > self.group_size_range.1 {
            return Err(GdmError::InvalidConfig(
                "group size range must satisfy 2 <= min <= max".into(),
            ));
        }
        if self.noise_level < 0.0 || self.label_noise < 0.0 || self.min_abs_weight < 0.0 {
            return Err(GdmError::InvalidConfig(
                "noise scales must be non-negative".into(),
            ));
        }
        let worst = self.n_correlated_groups * self.group_size_range.1
            + (self.n_groups - self.n_correlated_groups);
        if worst > self.n_features {
            return Err(GdmError::InvalidConfig(format!(
                "up to {worst} informative features do not fit into {} features",
                self.n_features
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Informative feature indices, one list per group; the first entry is
    /// the representative feature.
    pub groups: Vec<Vec<usize>>,
    /// Per-group predictive coefficient.
    pub group_weights: Vec<f64>,
    pub noise_indices: Vec<usize>,
}

impl GroundTruth {
    pub fn informative(&self) -> impl Iterator<Item = usize> + '_ {
        self.groups.iter().flatten().copied()
    }

    pub fn save<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        crate::model_file::write_atomic(path.as_ref(), json.as_bytes())
    }

    pub fn load<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}

/// Generate a train/test pair from one process sharing a single ground
/// truth (group layout and weights are drawn once, signals per split).
pub fn generate(config: &SynthConfig) -> Result<(SparseDataset, SparseDataset, GroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let m = config.n_features;
    let n = config.n_samples;

    // Group sizes: correlated groups draw from the range, the rest are
    // singletons.
    let sizes: Vec<usize> = (0..config.n_groups)
        .map(|g| {
            if g < config.n_correlated_groups {
                rng.random_range(config.group_size_range.0..=config.group_size_range.1)
            } else {
                1
            }
        })
        .collect();

    // Scatter informative features over the index space.
    let mut positions: Vec<usize> = (0..m).collect();
    positions.shuffle(&mut rng);
    let mut groups = Vec::with_capacity(config.n_groups);
    let mut cursor = 0;
    for &size in &sizes {
        let mut members = positions[cursor..cursor + size].to_vec();
        cursor += size;
        members[1..].sort_unstable();
        groups.push(members);
    }
    let mut noise_indices = positions[cursor..].to_vec();
    noise_indices.sort_unstable();

    let group_weights: Vec<f64> = (0..config.n_groups)
        .map(|_| loop {
            let w = normal(&mut rng);
            if w.abs() >= config.min_abs_weight {
                break w;
            }
        })
        .collect();

    let truth = GroundTruth {
        groups,
        group_weights,
        noise_indices,
    };

    // Member perturbation scale: population member-member correlation is
    // V/(V + eps^2) with V = 1 + noise_level^2; aim above the target with a
    // sampling-error margin so empirical pairs stay above it too.
    let v = 1.0 + config.noise_level * config.noise_level;
    let rho = config.within_group_corr;
    let margin = 4.0 * (1.0 - rho * rho) / (n as f64).sqrt();
    let rho_aim = (rho + margin).min(0.999);
    let eps = (v * (1.0 / rho_aim - 1.0)).sqrt();

    let split = |rng: &mut ChaCha8Rng| -> Result<SparseDataset> {
        let mut columns = vec![Vec::new(); m];
        let mut logit = vec![0.0; n];
        for (g, members) in truth.groups.iter().enumerate() {
            let latent = normal_vec(rng, n);
            let rep: Vec<f64> = latent
                .iter()
                .map(|&l| l + config.noise_level * normal(rng))
                .collect();
            for i in 0..n {
                logit[i] += truth.group_weights[g] * latent[i];
            }
            columns[members[0]] = rep.clone();
            for &idx in &members[1..] {
                columns[idx] = rep.iter().map(|&r| r + eps * normal(rng)).collect();
            }
        }
        for &idx in &truth.noise_indices {
            columns[idx] = normal_vec(rng, n);
        }
        let mut labels: Vec<i8> = logit
            .iter()
            .map(|&l| {
                let noisy = l + config.label_noise * normal(rng);
                if noisy >= 0.0 {
                    1
                } else {
                    -1
                }
            })
            .collect();
        if labels.iter().all(|&y| y == labels[0]) {
            // Degenerate draw: flip the weakest sample so both classes occur.
            let weakest = logit
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i)
                .unwrap();
            labels[weakest] = -labels[weakest];
        }
        SparseDataset::from_dense_columns(&columns, labels)
    };

    let train = split(&mut rng)?;
    let test = split(&mut rng)?;
    Ok((train, test, truth))
}

/// How well a fitted model recovered the generator's group structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Fraction of informative groups containing at least one support.
    pub group_hit_rate: f64,
    /// Fraction of supports lying in informative groups.
    pub support_purity: f64,
    /// Mean, over hit correlated groups, of the fraction of members found
    /// in the corresponding support's affiliated group.
    pub affiliation_coverage: f64,
    /// Number of groups containing two or more supports (should be 0).
    pub exclusivity_violations: usize,
    pub n_supports: usize,
    pub n_groups_hit: usize,
}

pub fn recovery_score(model: &SelectionModel, truth: &GroundTruth) -> RecoveryReport {
    let mut feature_group = vec![usize::MAX; model.n_features];
    for (g, members) in truth.groups.iter().enumerate() {
        for &j in members {
            if j < feature_group.len() {
                feature_group[j] = g;
            }
        }
    }

    let mut supports_in_group = vec![0usize; truth.groups.len()];
    let mut pure = 0usize;
    for &s in &model.support {
        if let Some(&g) = feature_group.get(s) {
            if g != usize::MAX {
                supports_in_group[g] += 1;
                pure += 1;
            }
        }
    }
    let n_hit = supports_in_group.iter().filter(|&&c| c > 0).count();
    let exclusivity_violations = supports_in_group.iter().filter(|&&c| c > 1).count();

    let mut coverage_sum = 0.0;
    let mut coverage_cnt = 0usize;
    for (g, members) in truth.groups.iter().enumerate() {
        if members.len() < 2 || supports_in_group[g] == 0 {
            continue;
        }
        let mut claimed: Vec<usize> = Vec::new();
        for &s in &model.support {
            if feature_group.get(s) == Some(&g) {
                if let Some(list) = model.groups.get(&s) {
                    claimed.extend(list);
                }
            }
        }
        let found = members.iter().filter(|j| claimed.contains(j)).count();
        coverage_sum += found as f64 / members.len() as f64;
        coverage_cnt += 1;
    }

    RecoveryReport {
        group_hit_rate: n_hit as f64 / truth.groups.len().max(1) as f64,
        support_purity: if model.support.is_empty() {
            0.0
        } else {
            pure as f64 / model.support.len() as f64
        },
        affiliation_coverage: if coverage_cnt == 0 {
            0.0
        } else {
            coverage_sum / coverage_cnt as f64
        },
        exclusivity_violations,
        n_supports: model.support.len(),
        n_groups_hit: n_hit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr::pearson;
    use crate::gdm::GdmConfig;
    use std::collections::BTreeMap;

    fn small_config(seed: u64) -> SynthConfig {
        SynthConfig {
            n_samples: 256,
            n_features: 80,
            n_groups: 8,
            n_correlated_groups: 3,
            group_size_range: (3, 5),
            within_group_corr: 0.9,
            noise_level: 0.1,
            label_noise: 0.1,
            min_abs_weight: 0.0,
            seed,
        }
    }

    #[test]
    fn dimensions_match_config() {
        let config = small_config(7);
        let (train, test, truth) = generate(&config).unwrap();
        assert_eq!(train.n_samples(), 256);
        assert_eq!(train.n_features(), 80);
        assert_eq!(test.n_samples(), 256);
        assert_eq!(truth.groups.len(), 8);
        let informative: usize = truth.groups.iter().map(Vec::len).sum();
        assert_eq!(informative + truth.noise_indices.len(), 80);
    }

    #[test]
    fn labels_are_plus_minus_one_with_both_classes() {
        let (train, test, _) = generate(&small_config(3)).unwrap();
        for ds in [&train, &test] {
            assert!(ds.labels().iter().all(|&y| y == 1 || y == -1));
            assert!(ds.has_both_classes());
        }
    }

    #[test]
    fn generation_is_bit_reproducible() {
        let config = small_config(11);
        let (a_train, a_test, a_truth) = generate(&config).unwrap();
        let (b_train, b_test, b_truth) = generate(&config).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        assert_eq!(a_truth, b_truth);
    }

    #[test]
    fn no_correlated_groups_gives_singletons() {
        let mut config = small_config(5);
        config.n_correlated_groups = 0;
        let (_, _, truth) = generate(&config).unwrap();
        assert!(truth.groups.iter().all(|g| g.len() == 1));
    }

    #[test]
    fn infeasible_config_is_rejected() {
        let mut config = small_config(1);
        config.n_features = 10;
        assert!(matches!(
            generate(&config),
            Err(GdmError::InvalidConfig(_))
        ));
    }

    #[test]
    fn within_group_correlation_meets_target() {
        // Spot-measure in-group pairs over 20 seeds at n=512: at least 95%
        // must reach the configured target.
        let mut pairs = 0usize;
        let mut ok = 0usize;
        for seed in 0..20 {
            let mut config = small_config(seed);
            config.n_samples = 512;
            let (train, _, truth) = generate(&config).unwrap();
            for group in &truth.groups {
                for (a, &j) in group.iter().enumerate() {
                    for &k in group.iter().take(a) {
                        pairs += 1;
                        if pearson(&train, j, k).abs() >= config.within_group_corr {
                            ok += 1;
                        }
                    }
                }
            }
        }
        assert!(pairs > 100);
        let frac = ok as f64 / pairs as f64;
        assert!(frac >= 0.95, "only {frac:.3} of in-group pairs reached target");
    }

    #[test]
    fn train_test_marginals_agree() {
        let (train, test, _) = generate(&small_config(13)).unwrap();
        let n = train.n_samples() as f64;
        let mut fails = 0;
        for j in 0..train.n_features() {
            let (a, b) = (train.stats(j), test.stats(j));
            let var_a = a.centered_norm.powi(2) / n;
            let var_b = b.centered_norm.powi(2) / n;
            let se = ((var_a + var_b) / n).sqrt().max(1e-12);
            if (a.mean - b.mean).abs() > 5.0 * se {
                fails += 1;
            }
        }
        assert!(fails <= 1, "{fails} features failed the two-sample check");
    }

    fn fake_model(support: Vec<usize>, m: usize) -> SelectionModel {
        let groups: BTreeMap<usize, Vec<usize>> =
            support.iter().map(|&s| (s, vec![s])).collect();
        SelectionModel {
            support,
            groups,
            per_constraint: vec![],
            scores_final: vec![],
            config: GdmConfig::new(1),
            n_features: m,
        }
    }

    #[test]
    fn recovery_score_perfect_and_noise_models() {
        let config = small_config(21);
        let (_, _, truth) = generate(&config).unwrap();
        let m = config.n_features;

        // One representative per group, groups fully claimed.
        let support: Vec<usize> = truth.groups.iter().map(|g| g[0]).collect();
        let mut model = fake_model(support.clone(), m);
        for (s, group) in support.iter().zip(&truth.groups) {
            model.groups.insert(*s, group.clone());
        }
        let report = recovery_score(&model, &truth);
        assert_eq!(report.group_hit_rate, 1.0);
        assert_eq!(report.support_purity, 1.0);
        assert_eq!(report.affiliation_coverage, 1.0);
        assert_eq!(report.exclusivity_violations, 0);

        // Noise-only model.
        let noise_model = fake_model(truth.noise_indices[..4].to_vec(), m);
        let report = recovery_score(&noise_model, &truth);
        assert_eq!(report.support_purity, 0.0);
        assert_eq!(report.group_hit_rate, 0.0);
    }

    #[test]
    fn random_support_purity_tracks_informative_fraction() {
        // Null baseline: purity of random selections approximates the
        // informative fraction of the feature space.
        let mut purity_sum = 0.0;
        let mut frac_sum = 0.0;
        for seed in 0..20 {
            let config = small_config(seed + 100);
            let (_, _, truth) = generate(&config).unwrap();
            let m = config.n_features;
            let informative: usize = truth.groups.iter().map(Vec::len).sum();
            frac_sum += informative as f64 / m as f64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 5000);
            let mut all: Vec<usize> = (0..m).collect();
            all.shuffle(&mut rng);
            let model = fake_model(all[..10].to_vec(), m);
            purity_sum += recovery_score(&model, &truth).support_purity;
        }
        let mean_purity = purity_sum / 20.0;
        let mean_frac = frac_sum / 20.0;
        assert!(
            (mean_purity - mean_frac).abs() < 0.12,
            "purity {mean_purity:.3} vs informative fraction {mean_frac:.3}"
        );
    }
}
