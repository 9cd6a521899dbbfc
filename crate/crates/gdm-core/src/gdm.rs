//! The cutting-plane driver: alternate most-violated-constraint searches
//! with reduced min-max solves, accumulating the support set and the
//! affiliated group structure.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::crm::{self, ConstraintMask, CrmTrace};
use crate::data::SparseDataset;
use crate::error::{GdmError, Result};
use crate::solver::{self, QuadraticPiece, SvmModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdmConfig {
    /// Support budget per constraint search (B).
    pub budget: usize,
    /// Maximum number of outer iterations / pooled constraints (T).
    pub max_iterations: usize,
    /// Correlation threshold parameter: features are correlated when
    /// |rho| >= 1 - tau.
    pub tau: f64,
    /// SVM trade-off.
    #[serde(rename = "c")]
    pub c_param: f64,
    /// Relative violation tolerance for outer stopping.
    pub eps_cut: f64,
    /// Subproblem tolerance.
    pub eps_sub: f64,
    /// Seed for synthetic/evaluation paths; the fit itself is deterministic.
    pub seed: u64,
}

impl GdmConfig {
    pub fn new(budget: usize) -> Self {
        GdmConfig {
            budget,
            max_iterations: 10,
            tau: 0.25,
            c_param: 1.0,
            eps_cut: 1e-3,
            eps_sub: 1e-6,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget < 1 {
            return Err(GdmError::InvalidConfig("budget must be >= 1".into()));
        }
        if self.max_iterations < 1 {
            return Err(GdmError::InvalidConfig("iterations must be >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(GdmError::InvalidConfig("tau must lie in (0, 1)".into()));
        }
        if !(self.c_param > 0.0) {
            return Err(GdmError::InvalidConfig("C must be positive".into()));
        }
        if !(self.eps_cut > 0.0) || !(self.eps_sub > 0.0) {
            return Err(GdmError::InvalidConfig("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// The fresh most-violated constraint no longer violates the bound.
    ViolationConverged,
    /// The constraint search returned a mask already in the pool.
    DuplicateConstraint,
    /// No eligible features remained for a new constraint.
    RankingExhausted,
    /// Ran all configured iterations.
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub theta: f64,
    pub violation: f64,
    pub support_size: usize,
    pub wall_ms: f64,
}

/// Mutable state of one fit, returned alongside the model.
#[derive(Debug, Clone)]
pub struct FitState {
    pub alpha: Vec<f64>,
    pub alpha_signed: Vec<f64>,
    pub theta: f64,
    pub constraints: Vec<ConstraintMask>,
    pub trace: Vec<TraceEntry>,
    pub stop_reason: StopReason,
    /// Violation of the constraint candidate that triggered the stop, when
    /// one was computed past the first iteration.
    pub final_violation: Option<f64>,
    pub crm_traces: Option<Vec<CrmTrace>>,
}

/// The fitted selection: support features in order of first selection and
/// the affiliated group of each support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionModel {
    pub support: Vec<usize>,
    pub groups: BTreeMap<usize, Vec<usize>>,
    pub per_constraint: Vec<ConstraintMask>,
    pub scores_final: Vec<f64>,
    pub config: GdmConfig,
    pub n_features: usize,
}

impl SelectionModel {
    /// Support plus every affiliated feature, sorted and deduplicated.
    pub fn selected_with_affiliated(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.groups.values().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    /// Collect per-call scan traces in `FitState::crm_traces`.
    pub trace_crm: bool,
}

pub fn fit(ds: &SparseDataset, config: &GdmConfig) -> Result<(SelectionModel, FitState)> {
    fit_with_options(ds, config, FitOptions::default())
}

pub fn fit_with_options(
    ds: &SparseDataset,
    config: &GdmConfig,
    options: FitOptions,
) -> Result<(SelectionModel, FitState)> {
    config.validate()?;
    if ds.n_samples() < 2 {
        return Err(GdmError::InvalidConfig(
            "need at least 2 samples to fit".into(),
        ));
    }
    if !ds.has_both_classes() {
        return Err(GdmError::SingleClassLabels);
    }

    let n = ds.n_samples();
    let mut alpha = vec![1.0 / n as f64; n];
    let mut theta = 0.0f64;
    let mut pool: Vec<ConstraintMask> = Vec::new();
    let mut support_order: Vec<usize> = Vec::new();
    let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut excluded: HashSet<usize> = HashSet::new();
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut crm_traces: Vec<CrmTrace> = Vec::new();
    let mut scores_final: Vec<f64> = Vec::new();
    let mut stop_reason = StopReason::IterationLimit;
    let mut final_violation = None;

    for iteration in 1..=config.max_iterations {
        let started = Instant::now();
        let alpha_signed: Vec<f64> = alpha
            .iter()
            .enumerate()
            .map(|(i, &a)| a * ds.label(i))
            .collect();
        let alpha_norm = alpha_signed.iter().map(|v| v * v).sum::<f64>().sqrt();

        let scores = crm::score_features(ds, &alpha_signed)?;
        let mask = if options.trace_crm {
            let (mask, tr) = crm::match_mask_traced(
                ds,
                &scores,
                config.budget,
                config.tau,
                alpha_norm,
                &excluded,
            )?;
            crm_traces.push(tr);
            mask
        } else {
            crm::match_mask(
                ds,
                &scores,
                config.budget,
                config.tau,
                alpha_norm,
                &excluded,
            )?
        };
        scores_final = scores.c.iter().map(|c| c.abs()).collect();

        if mask.is_empty() {
            if iteration == 1 {
                return Err(GdmError::NoUsableFeatures);
            }
            stop_reason = StopReason::RankingExhausted;
            break;
        }

        let violation = solver::piece_value(
            &QuadraticPiece::new(ds, mask.support.clone()),
            &alpha,
            config.c_param,
        );
        if iteration > 1 {
            final_violation = Some(violation);
            if pool.iter().any(|m| m.support == mask.support) {
                stop_reason = StopReason::DuplicateConstraint;
                break;
            }
            if violation <= theta * (1.0 + config.eps_cut) {
                stop_reason = StopReason::ViolationConverged;
                break;
            }
        }

        for (gi, &z) in mask.support.iter().enumerate() {
            support_order.push(z);
            groups.entry(z).or_default().extend(&mask.groups[gi]);
        }
        excluded.extend(mask.claimed());
        pool.push(mask);

        let pieces: Vec<QuadraticPiece> = pool
            .iter()
            .map(|m| QuadraticPiece::new(ds, m.support.clone()))
            .collect();
        let sol = solver::solve_minmax(&pieces, Some(&alpha), config.c_param, config.eps_sub)?;
        alpha = sol.alpha;
        theta = sol.theta;

        trace.push(TraceEntry {
            iteration,
            theta,
            violation,
            support_size: support_order.len(),
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    let alpha_signed: Vec<f64> = alpha
        .iter()
        .enumerate()
        .map(|(i, &a)| a * ds.label(i))
        .collect();
    let model = SelectionModel {
        support: support_order,
        groups: groups
            .into_iter()
            .map(|(z, g)| (z, g.into_iter().collect()))
            .collect(),
        per_constraint: pool.clone(),
        scores_final,
        config: config.clone(),
        n_features: ds.n_features(),
    };
    let state = FitState {
        alpha,
        alpha_signed,
        theta,
        constraints: pool,
        trace,
        stop_reason,
        final_violation,
        crm_traces: options.trace_crm.then_some(crm_traces),
    };
    Ok((model, state))
}

/// Train the evaluation classifier on the selected features: the support
/// set by default, or support plus affiliated groups.
pub fn final_classifier(
    ds: &SparseDataset,
    model: &SelectionModel,
    config: &GdmConfig,
    with_affiliated: bool,
    augment_bias: bool,
) -> Result<SvmModel> {
    let mut features: Vec<usize> = if with_affiliated {
        model.selected_with_affiliated()
    } else {
        model.support.clone()
    };
    features.sort_unstable();
    features.dedup();
    if features.is_empty() {
        return Err(GdmError::NoUsableFeatures);
    }
    let mut piece = QuadraticPiece::new(ds, features);
    if augment_bias {
        piece = piece.with_bias();
    }
    let sol = solver::solve_minmax(
        std::slice::from_ref(&piece),
        None,
        config.c_param,
        config.eps_sub,
    )?;
    Ok(solver::recover_svm(&piece, &sol.alpha, config.c_param))
}

/// Predict labels with a trained classifier; ties map to +1.
pub fn predict(ds: &SparseDataset, svm: &SvmModel) -> Result<Vec<i8>> {
    svm.predict(ds)
}
