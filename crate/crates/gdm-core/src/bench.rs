//! Evaluation harness: accuracy, redundancy, timing, and sweeps over
//! target feature counts.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use crate::corr::{redundancy_rate, RedNormalizer};
use crate::data::SparseDataset;
use crate::error::{GdmError, Result};
use crate::gdm::{self, GdmConfig};
use crate::solver::SvmModel;
use crate::synth::{self, SynthConfig};

pub const SWEEP_SCHEMA: &str = "gdm-sweep/1";

/// Fraction of samples whose predicted sign matches the label.
pub fn accuracy(svm: &SvmModel, ds: &SparseDataset) -> Result<f64> {
    if ds.n_samples() == 0 {
        return Err(GdmError::EmptyDataset);
    }
    let preds = svm.predict(ds)?;
    let hits = preds
        .iter()
        .zip(ds.labels())
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / ds.n_samples() as f64)
}

#[derive(Debug, Clone, Copy)]
pub struct MetricSet {
    pub accuracy: bool,
    pub red: bool,
    pub time: bool,
    pub recovery: bool,
}

impl Default for MetricSet {
    fn default() -> Self {
        MetricSet {
            accuracy: true,
            red: true,
            time: true,
            recovery: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// Target feature counts; each becomes the budget of one fit.
    pub feature_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub metrics: MetricSet,
    /// Include data generation/preparation in the wall time (timing covers
    /// only the fit call by default).
    pub include_prep_time: bool,
    pub red_normalizer: RedNormalizer,
}

impl SweepSpec {
    pub fn new(feature_counts: Vec<usize>, seeds: Vec<u64>) -> Result<Self> {
        if feature_counts.is_empty() || feature_counts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GdmError::InvalidConfig(
                "feature counts must be positive and ascending".into(),
            ));
        }
        if feature_counts[0] == 0 {
            return Err(GdmError::InvalidConfig("feature counts must be positive".into()));
        }
        if seeds.is_empty() {
            return Err(GdmError::InvalidConfig("need at least one seed".into()));
        }
        Ok(SweepSpec {
            feature_counts,
            seeds,
            metrics: MetricSet::default(),
            include_prep_time: false,
            red_normalizer: RedNormalizer::OrderedPairs,
        })
    }
}

pub enum SweepInput<'a> {
    /// Fixed train/test pair; seeds only label repeat rows.
    Files {
        train: &'a SparseDataset,
        test: &'a SparseDataset,
    },
    /// Regenerate a synthetic pair per seed.
    Synth(SynthConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub seed: u64,
    pub accuracy_support: Option<f64>,
    pub accuracy_affiliated: Option<f64>,
    pub red_support: Option<f64>,
    pub red_selected: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub theta_final: Option<f64>,
    pub hit_rate: Option<f64>,
    pub purity: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn empty(k: usize, seed: u64) -> Self {
        SweepRow {
            k,
            seed,
            accuracy_support: None,
            accuracy_affiliated: None,
            red_support: None,
            red_selected: None,
            wall_time_s: None,
            theta_final: None,
            hit_rate: None,
            purity: None,
            error: None,
        }
    }
}

fn run_cell(input: &SweepInput, spec: &SweepSpec, base: &GdmConfig, k: usize, seed: u64) -> SweepRow {
    let mut row = SweepRow::empty(k, seed);
    let prep_start = Instant::now();

    let generated;
    let (train, test, truth) = match input {
        SweepInput::Files { train, test } => (*train, *test, None),
        SweepInput::Synth(config) => {
            let mut config = config.clone();
            config.seed = seed;
            match synth::generate(&config) {
                Ok(triple) => {
                    generated = triple;
                    (&generated.0, &generated.1, Some(&generated.2))
                }
                Err(e) => {
                    row.error = Some(e.to_string());
                    return row;
                }
            }
        }
    };

    let mut config = base.clone();
    config.budget = k;
    config.seed = seed;

    let fit_start = Instant::now();
    let (model, state) = match gdm::fit(train, &config) {
        Ok(pair) => pair,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let fit_elapsed = fit_start.elapsed().as_secs_f64();
    if spec.metrics.time {
        row.wall_time_s = Some(if spec.include_prep_time {
            prep_start.elapsed().as_secs_f64()
        } else {
            fit_elapsed
        });
    }
    row.theta_final = Some(state.theta);

    if spec.metrics.accuracy {
        let support_svm = gdm::final_classifier(train, &model, &config, false, false);
        let affiliated_svm = gdm::final_classifier(train, &model, &config, true, false);
        match (support_svm, affiliated_svm) {
            (Ok(s), Ok(a)) => {
                row.accuracy_support = accuracy(&s, test).ok();
                row.accuracy_affiliated = accuracy(&a, test).ok();
            }
            (Err(e), _) | (_, Err(e)) => {
                row.error = Some(e.to_string());
                return row;
            }
        }
    }
    if spec.metrics.red {
        row.red_support = redundancy_rate(train, &model.support, spec.red_normalizer).ok();
        row.red_selected =
            redundancy_rate(train, &model.selected_with_affiliated(), spec.red_normalizer).ok();
    }
    if spec.metrics.recovery {
        if let Some(truth) = truth {
            let report = synth::recovery_score(&model, truth);
            row.hit_rate = Some(report.group_hit_rate);
            row.purity = Some(report.support_purity);
        }
    }
    row
}

/// One row per (feature count, seed), computed in a worker pool; failed
/// cells record their error instead of aborting the sweep.
pub fn run_sweep(input: &SweepInput, spec: &SweepSpec, base: &GdmConfig) -> Vec<SweepRow> {
    let cells: Vec<(usize, u64)> = spec
        .feature_counts
        .iter()
        .flat_map(|&k| spec.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let mut rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(k, seed)| run_cell(input, spec, base, k, seed))
        .collect();
    rows.sort_by_key(|r| (r.k, r.seed));
    rows
}

fn cell_str(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

pub fn write_csv<W: Write>(rows: &[SweepRow], w: &mut W) -> Result<()> {
    writeln!(w, "# schema: {SWEEP_SCHEMA}")?;
    writeln!(
        w,
        "k,seed,accuracy_support,accuracy_affiliated,red_support,red_selected,wall_time_s,theta_final,hit_rate,purity,error"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            r.seed,
            cell_str(r.accuracy_support),
            cell_str(r.accuracy_affiliated),
            cell_str(r.red_support),
            cell_str(r.red_selected),
            cell_str(r.wall_time_s),
            cell_str(r.theta_final),
            cell_str(r.hit_rate),
            cell_str(r.purity),
            r.error.as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}

fn aggregate(values: impl Iterator<Item = Option<f64>>) -> serde_json::Value {
    let mut xs: Vec<f64> = values.flatten().collect();
    if xs.is_empty() {
        return serde_json::Value::Null;
    }
    xs.sort_by(f64::total_cmp);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let median = xs[xs.len() / 2];
    json!({"mean": mean, "median": median, "count": xs.len()})
}

/// Per-k aggregates of each metric, for the JSON summary output.
pub fn summary_json(rows: &[SweepRow]) -> serde_json::Value {
    let mut ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    ks.sort_unstable();
    ks.dedup();
    let per_k: Vec<serde_json::Value> = ks
        .iter()
        .map(|&k| {
            let sel = || rows.iter().filter(move |r| r.k == k);
            json!({
                "k": k,
                "accuracy_support": aggregate(sel().map(|r| r.accuracy_support)),
                "accuracy_affiliated": aggregate(sel().map(|r| r.accuracy_affiliated)),
                "red_support": aggregate(sel().map(|r| r.red_support)),
                "red_selected": aggregate(sel().map(|r| r.red_selected)),
                "wall_time_s": aggregate(sel().map(|r| r.wall_time_s)),
                "theta_final": aggregate(sel().map(|r| r.theta_final)),
                "hit_rate": aggregate(sel().map(|r| r.hit_rate)),
                "purity": aggregate(sel().map(|r| r.purity)),
                "errors": sel().filter(|r| r.error.is_some()).count(),
            })
        })
        .collect();
    json!({"schema": SWEEP_SCHEMA, "per_k": per_k})
}
