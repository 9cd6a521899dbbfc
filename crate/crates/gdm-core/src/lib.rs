//! Group Discovery Machine: embedded feature selection under pairwise
//! Pearson-correlation constraints on sparse, high-dimensional data.
//!
//! The engine selects a budget of discriminative *support features* with a
//! cutting-plane loop and, as a by-product of each most-violated-constraint
//! search, collects every support feature's correlated *affiliated features*
//! into groups.
//!
//! Pipeline in library terms:
//!
//! ```ignore
//! let data = data::load_libsvm_path("train.svm", None)?;
//! let config = gdm::GdmConfig::new(10);
//! let (model, state) = gdm::fit(&data, &config)?;
//! let svm = gdm::final_classifier(&data, &model, &config, false, false)?;
//! let labels = gdm::predict(&data, &svm)?;
//! ```

pub mod bench;
pub mod corr;
pub mod crm;
pub mod data;
pub mod error;
pub mod gdm;
pub mod model_file;
pub mod solver;
pub mod synth;

pub use data::SparseDataset;
pub use error::{GdmError, Result};
pub use gdm::{fit, GdmConfig, SelectionModel};
pub use solver::SvmModel;

/// Schema version written into model files.
pub const MODEL_SCHEMA_VERSION: &str = "gdm-model/1";
