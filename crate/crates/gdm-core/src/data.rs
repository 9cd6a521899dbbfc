//! Sparse labeled datasets in feature-major layout.
//!
//! Features are stored as sparse rows (one row per feature) so that the
//! correlation and scoring math can run in O(nnz) per feature. All scoring
//! operates on a *virtual* standardization of each feature: zero mean and
//! unit Euclidean norm, equivalently a standard deviation of 1/sqrt(n).
//! The raw values are never rewritten; the per-feature statistics carry the
//! correction terms instead, which keeps very high-dimensional data sparse.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use rayon::prelude::*;

use crate::error::{GdmError, Result};

/// Threshold on the *squared* centered norm below which a feature is treated
/// as constant.
pub const EPS_VAR: f64 = 1e-12;

/// One feature's nonzero entries, sample indices strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureRow {
    samples: Vec<u32>,
    values: Vec<f64>,
}

impl FeatureRow {
    pub fn nnz(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[u32] {
        &self.samples
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.samples
            .iter()
            .zip(self.values.iter())
            .map(|(&i, &v)| (i as usize, v))
    }
}

/// Standardization statistics for one feature.
///
/// `centered_norm` is the Euclidean norm of the mean-centered feature, i.e.
/// sqrt(n) times its standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureStats {
    pub mean: f64,
    pub centered_norm: f64,
    pub degenerate: bool,
}

/// Immutable sparse dataset with +/-1 labels and per-feature statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDataset {
    n_samples: usize,
    n_features: usize,
    labels: Vec<i8>,
    rows: Vec<FeatureRow>,
    stats: Vec<FeatureStats>,
}

impl SparseDataset {
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> f64 {
        f64::from(self.labels[i])
    }

    pub fn row(&self, j: usize) -> &FeatureRow {
        &self.rows[j]
    }

    pub fn stats(&self, j: usize) -> &FeatureStats {
        &self.stats[j]
    }

    pub fn is_degenerate(&self, j: usize) -> bool {
        self.stats[j].degenerate
    }

    pub fn has_both_classes(&self) -> bool {
        let mut pos = false;
        let mut neg = false;
        for &y in &self.labels {
            if y > 0 {
                pos = true;
            } else {
                neg = true;
            }
        }
        pos && neg
    }

    /// Build a dataset from dense columns; exact zeros are dropped from the
    /// sparse rows. Labels must be +/-1.
    pub fn from_dense_columns(columns: &[Vec<f64>], labels: Vec<i8>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(GdmError::EmptyInput);
        }
        if labels.iter().any(|&y| y != 1 && y != -1) {
            return Err(GdmError::InvalidConfig("labels must be +1 or -1".into()));
        }
        let mut rows = Vec::with_capacity(columns.len());
        for col in columns {
            if col.len() != n {
                return Err(GdmError::DimensionMismatch {
                    expected: n,
                    got: col.len(),
                });
            }
            let mut row = FeatureRow::default();
            for (i, &v) in col.iter().enumerate() {
                if v != 0.0 {
                    row.samples.push(i as u32);
                    row.values.push(v);
                }
            }
            rows.push(row);
        }
        let mut ds = SparseDataset {
            n_samples: n,
            n_features: rows.len(),
            labels,
            rows,
            stats: Vec::new(),
        };
        compute_stats(&mut ds);
        Ok(ds)
    }

    /// Dense raw column for feature `j` (zeros included).
    pub fn to_dense_column(&self, j: usize) -> Vec<f64> {
        let mut col = vec![0.0; self.n_samples];
        for (i, v) in self.rows[j].iter() {
            col[i] = v;
        }
        col
    }

    /// Dense materialization of the standardized view of feature `j`:
    /// zero mean, unit Euclidean norm. Degenerate features map to all zeros.
    pub fn standardized_dense(&self, j: usize) -> Vec<f64> {
        let st = &self.stats[j];
        if st.degenerate {
            return vec![0.0; self.n_samples];
        }
        let mut col = vec![-st.mean / st.centered_norm; self.n_samples];
        for (i, v) in self.rows[j].iter() {
            col[i] = (v - st.mean) / st.centered_norm;
        }
        col
    }

    /// Dot product of the standardized view of feature `j` with a dense
    /// vector `v` whose entry sum is `v_sum`. Costs O(nnz(f_j)).
    ///
    /// Degenerate features return exactly 0 by convention.
    pub fn standardized_dot_with_sum(&self, j: usize, v: &[f64], v_sum: f64) -> f64 {
        let st = &self.stats[j];
        if st.degenerate {
            return 0.0;
        }
        let mut dot = 0.0;
        for (i, raw) in self.rows[j].iter() {
            dot += raw * v[i];
        }
        (dot - st.mean * v_sum) / st.centered_norm
    }

    /// Like [`standardized_dot_with_sum`](Self::standardized_dot_with_sum)
    /// but computes the entry sum itself.
    pub fn standardized_dot(&self, j: usize, v: &[f64]) -> f64 {
        self.standardized_dot_with_sum(j, v, v.iter().sum())
    }
}

/// Fill the per-feature standardization statistics in place.
///
/// For feature j: mean = (sum of stored values)/n and
/// centered_norm = sqrt(sum(v^2) - n*mean^2), both from the sparse row alone.
pub fn compute_stats(ds: &mut SparseDataset) {
    let n = ds.n_samples as f64;
    ds.stats = ds
        .rows
        .par_iter()
        .map(|row| {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for &v in &row.values {
                sum += v;
                sum_sq += v * v;
            }
            let mean = sum / n;
            let centered_sq = (sum_sq - n * mean * mean).max(0.0);
            FeatureStats {
                mean,
                centered_norm: centered_sq.sqrt(),
                degenerate: centered_sq <= EPS_VAR,
            }
        })
        .collect();
}

/// Parse LIBSVM/SVMlight sparse text: `label idx:val idx:val ...` with
/// 1-based, strictly increasing indices per line.
///
/// Labels map to +1 for positive reals and -1 otherwise. When
/// `dimensions` is given it fixes `n_features` (indices beyond it are
/// format errors); otherwise the maximum index seen wins. Explicitly
/// stored zero values are dropped.
pub fn parse_libsvm<R: BufRead>(reader: R, dimensions: Option<usize>) -> Result<SparseDataset> {
    let mut labels: Vec<i8> = Vec::new();
    // (feature, sample, value) triples arrive sample-major; rows are filled
    // afterwards so each row's sample indices come out strictly increasing.
    let mut entries: Vec<Vec<(u32, f64)>> = match dimensions {
        Some(m) => vec![Vec::new(); m],
        None => Vec::new(),
    };
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().ok_or_else(|| GdmError::Parse {
            line: lineno,
            msg: "missing label".into(),
        })?;
        let label: f64 = label_tok.parse().map_err(|_| GdmError::Parse {
            line: lineno,
            msg: format!("cannot parse label '{label_tok}'"),
        })?;
        if !label.is_finite() {
            return Err(GdmError::Parse {
                line: lineno,
                msg: format!("non-finite label '{label_tok}'"),
            });
        }
        let sample = labels.len() as u32;
        labels.push(if label > 0.0 { 1 } else { -1 });

        let mut prev_index = 0usize;
        for tok in tokens {
            let (idx_str, val_str) = tok.split_once(':').ok_or_else(|| GdmError::Parse {
                line: lineno,
                msg: format!("expected 'index:value', got '{tok}'"),
            })?;
            let idx: usize = idx_str.parse().map_err(|_| GdmError::Parse {
                line: lineno,
                msg: format!("cannot parse feature index '{idx_str}'"),
            })?;
            let val: f64 = val_str.parse().map_err(|_| GdmError::Parse {
                line: lineno,
                msg: format!("cannot parse value '{val_str}'"),
            })?;
            if idx == 0 {
                return Err(GdmError::Format {
                    line: lineno,
                    msg: "feature indices are 1-based".into(),
                });
            }
            if idx <= prev_index {
                return Err(GdmError::Format {
                    line: lineno,
                    msg: format!("feature indices must be strictly increasing (index {idx})"),
                });
            }
            prev_index = idx;
            if let Some(m) = dimensions {
                if idx > m {
                    return Err(GdmError::Format {
                        line: lineno,
                        msg: format!("feature index {idx} exceeds declared dimension {m}"),
                    });
                }
            } else if idx > entries.len() {
                entries.resize(idx, Vec::new());
            }
            max_index = max_index.max(idx);
            if val != 0.0 {
                entries[idx - 1].push((sample, val));
            }
        }
    }

    if labels.is_empty() {
        return Err(GdmError::EmptyInput);
    }
    let n_features = dimensions.unwrap_or(max_index);
    entries.resize(n_features, Vec::new());

    let rows = entries
        .into_iter()
        .map(|e| {
            let (samples, values) = e.into_iter().unzip();
            FeatureRow { samples, values }
        })
        .collect();

    let mut ds = SparseDataset {
        n_samples: labels.len(),
        n_features,
        labels,
        rows,
        stats: Vec::new(),
    };
    compute_stats(&mut ds);
    Ok(ds)
}

/// Open a LIBSVM file, transparently decompressing `.gz` paths.
pub fn load_libsvm_path<P: AsRef<Path>>(
    path: P,
    dimensions: Option<usize>,
) -> Result<SparseDataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(MultiGzDecoder::new(file))
    } else {
        Box::new(file)
    };
    parse_libsvm(BufReader::new(reader), dimensions)
}

/// Serialize back to LIBSVM text (sample-major, 1-based ascending indices).
pub fn write_libsvm<W: Write>(ds: &SparseDataset, writer: &mut W) -> Result<()> {
    let mut per_sample: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ds.n_samples];
    for j in 0..ds.n_features {
        for (i, v) in ds.rows[j].iter() {
            per_sample[i].push((j + 1, v));
        }
    }
    for (i, feats) in per_sample.iter().enumerate() {
        let label = if ds.labels[i] > 0 { "+1" } else { "-1" };
        write!(writer, "{label}")?;
        for &(idx, v) in feats {
            write!(writer, " {idx}:{v}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}
