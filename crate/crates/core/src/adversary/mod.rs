//! The two attacks: device identification (DNS keywords, and windowed rate
//! statistics classified with k-NN) and behavior inference from rate
//! changes.

mod cv;
mod detect;
mod dns;
mod features;
mod knn;
mod streams;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{secs_to_micros, Micros};

pub use cv::{stratified_cv, stratified_folds, ConfusionMatrix, CvOutcome};
pub use detect::{infer_events, DetectedEvent};
pub use dns::{identify_by_dns, parse_dictionary, DnsDictionary};
pub use features::{bin_rates, windows_to_features, FeatureVector, RateSeries};
pub use knn::{knn_classify, knn_train, knn_train_for_classes, Classification, KnnModel};
pub use streams::{split_streams, StreamKey};

#[derive(Debug, Error, PartialEq)]
pub enum AdversaryError {
    #[error("invalid analysis parameters: {0}")]
    InvalidParams(String),
    #[error("window {window_s} s is not a multiple of sample period {sample_s} s")]
    WindowNotMultiple { window_s: f64, sample_s: f64 },
    #[error("class '{0}' has no training vectors")]
    EmptyClass(String),
    #[error("training vector {0} has no label")]
    Unlabeled(usize),
    #[error("k = {k} exceeds training set size {size}")]
    KTooLarge { k: usize, size: usize },
    #[error("class '{label}' has {count} vectors, fewer than {folds} folds")]
    ClassTooSmall { label: String, count: usize, folds: usize },
    #[error("malformed dictionary line {line}: {reason}")]
    MalformedDictionary { line: usize, reason: String },
}

pub const DEFAULT_FOLDS: usize = 10;

/// Sampling period `s`, window length `w`, neighbor count `k` and the number
/// of cross-validation folds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub s: f64,
    pub w: f64,
    pub k: usize,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            s: 10.0,
            w: 300.0,
            k: 5,
            folds: DEFAULT_FOLDS,
        }
    }
}

impl AnalysisParams {
    pub fn validate(&self) -> Result<(), AdversaryError> {
        let bad = |m: &str| Err(AdversaryError::InvalidParams(m.to_string()));
        if !(self.s.is_finite() && self.s > 0.0) || secs_to_micros(self.s) == 0 {
            return bad("s must be positive");
        }
        if !(self.w.is_finite() && self.w >= self.s) {
            return bad("w must be at least s");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        samples_per_window(self.s, self.w).map(|_| ())
    }

    pub fn s_us(&self) -> Micros {
        secs_to_micros(self.s)
    }
}

/// Number of samples per window, or an error when `w` is not an integer
/// multiple of `s` (compared at microsecond resolution).
pub fn samples_per_window(s: f64, w: f64) -> Result<usize, AdversaryError> {
    let (s_us, w_us) = (secs_to_micros(s), secs_to_micros(w));
    if s_us == 0 || w_us == 0 || w_us % s_us != 0 {
        return Err(AdversaryError::WindowNotMultiple {
            window_s: w,
            sample_s: s,
        });
    }
    Ok((w_us / s_us) as usize)
}

/// Parameters of the rolling-baseline rate-change detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Length of the trailing window the baseline mean and spread come from.
    pub baseline_window_s: f64,
    /// A sample is flagged when it exceeds mean + threshold · stddev.
    pub threshold: f64,
    /// Minimum length of a flagged run for it to count as an event.
    pub sustain_s: f64,
    /// Activity separated by at most this much is one event.
    pub merge_gap_s: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            baseline_window_s: 1800.0,
            threshold: 3.0,
            sustain_s: 20.0,
            merge_gap_s: 30.0,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), AdversaryError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if positive(self.baseline_window_s)
            && positive(self.threshold)
            && positive(self.sustain_s)
            && positive(self.merge_gap_s)
        {
            Ok(())
        } else {
            Err(AdversaryError::InvalidParams(
                "detector parameters must all be positive".into(),
            ))
        }
    }
}
