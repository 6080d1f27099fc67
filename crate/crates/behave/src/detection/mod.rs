//! One-class irregularity detection: an OCNN for single requests and an
//! encoder-generator-discriminator feature learner feeding an OCNN for
//! day-long series.

mod experiment;
mod ganed;
mod metrics;
mod ocnn;
mod scaler;
mod tr;

pub use experiment::{
    run_sr_experiment, run_sr_repeats, run_tr_experiment, run_tr_repeats, sr_corpus, tr_corpus, train_sr_detector, train_tr_pipeline, DetectionOutcome,
    SrExperimentConfig, TrExperimentConfig,
};
pub use ganed::{encode_series, train_gan_ed, GanEdConfig, GanEdModel, GanEdReport};
pub use metrics::{f1_score, Confusion, F1};
pub use ocnn::{ocnn_score, ocnn_score_batch, train_ocnn, DetectionResult, OcnnConfig, OcnnModel, OcnnReport};
pub use scaler::{FeatureScaler, Orientation, SeriesScaler};
pub use tr::{train_tr_detector, TrDetector};

use thiserror::Error;

use crate::behavior::{SrRecord, TrSeries};
use crate::neural::NeuralError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("corpus of {got} series is smaller than the batch size {batch}")]
    CorpusTooSmall { got: usize, batch: usize },
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// Feature rows with no ground truth attached. Detectors only ever train on
/// this type, so labels cannot leak into training.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledFeatures {
    pub rows: Vec<Vec<f64>>,
}

impl UnlabeledFeatures {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, DetectionError> {
        let width = rows.first().map(Vec::len).ok_or(DetectionError::EmptyCorpus)?;
        if rows.iter().any(|r| r.len() != width) {
            return Err(DetectionError::InvalidInput("ragged feature rows".into()));
        }
        Ok(Self { rows })
    }

    pub fn from_records(records: &[SrRecord]) -> Result<Self, DetectionError> {
        Self::new(records.iter().map(|r| r.features().to_vec()).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// Day-long series stripped of their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledSeries {
    pub series: Vec<Vec<[f64; 3]>>,
}

impl UnlabeledSeries {
    pub fn from_series(series: &[TrSeries]) -> Result<Self, DetectionError> {
        let first = series.first().ok_or(DetectionError::EmptyCorpus)?;
        if series.iter().any(|s| s.len() != first.len()) {
            return Err(DetectionError::InvalidInput("series lengths differ".into()));
        }
        Ok(Self { series: series.iter().map(TrSeries::matrix).collect() })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}
