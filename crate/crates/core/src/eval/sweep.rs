use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{identify, stream_features};
use super::{EvalError, Prepared};
use crate::adversary::{samples_per_window, AnalysisParams, FeatureVector};

/// Values tried for each analysis parameter; every combination is one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub s: Vec<f64>,
    pub w: Vec<f64>,
    pub k: Vec<usize>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            s: vec![1.0, 5.0, 10.0, 30.0],
            w: vec![60.0, 300.0, 900.0],
            k: vec![1, 3, 5, 9],
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.s.is_empty() || self.w.is_empty() || self.k.is_empty() {
            return Err(EvalError::Config("sweep grids must be non-empty".into()));
        }
        if self.s.iter().chain(&self.w).any(|v| !(v.is_finite() && *v > 0.0)) || self.k.contains(&0) {
            return Err(EvalError::Config("sweep values must be positive".into()));
        }
        Ok(())
    }

    pub fn single(params: &AnalysisParams) -> Self {
        Self {
            s: vec![params.s],
            w: vec![params.w],
            k: vec![params.k],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub s: f64,
    pub w: f64,
    pub k: usize,
    /// Folds actually used; lower than requested when a class is small.
    pub folds: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Grid points that could not be evaluated, with the reason.
    pub skipped: Vec<String>,
}

impl SweepOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,w,k,folds,accuracy\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.s, r.w, r.k, r.folds, r.accuracy));
        }
        out
    }
}

/// Cross-validated accuracy at every grid point, all on the same prepared
/// trace. Pairs where `w` is not a multiple of `s` are skipped.
pub fn sweep(prepared: &Prepared, grid: &SweepGrid, folds: usize, seed: u64) -> Result<SweepOutcome, EvalError> {
    grid.validate()?;
    let mut skipped = Vec::new();
    let mut pairs = Vec::new();
    for &s in &grid.s {
        for &w in &grid.w {
            match samples_per_window(s, w) {
                Ok(_) if w >= s => pairs.push((s, w)),
                _ => skipped.push(format!("s={s} w={w}: w is not a multiple of s")),
            }
        }
    }

    let features: Vec<((f64, f64), Result<Vec<FeatureVector>, String>)> = pairs
        .par_iter()
        .map(|&(s, w)| {
            let params = AnalysisParams { s, w, k: 1, folds };
            let f = stream_features(prepared, &params)
                .map(|v| v.into_iter().map(|(_, f)| f).collect())
                .map_err(|e| e.to_string());
            ((s, w), f)
        })
        .collect();

    let points: Vec<(usize, usize)> = (0..features.len())
        .flat_map(|i| (0..grid.k.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<SweepRow, String>> = points
        .par_iter()
        .map(|&(i, j)| {
            let ((s, w), f) = &features[i];
            let k = grid.k[j];
            let label = format!("s={s} w={w} k={k}");
            let f = f.as_ref().map_err(|e| format!("{label}: {e}"))?;
            let params = AnalysisParams { s: *s, w: *w, k, folds };
            match identify(f, &params, seed) {
                Ok(Ok((cv, folds))) => Ok(SweepRow {
                    s: *s,
                    w: *w,
                    k,
                    folds,
                    accuracy: cv.mean_accuracy,
                }),
                Ok(Err(note)) => Err(format!("{label}: {note}")),
                Err(e) => Err(format!("{label}: {e}")),
            }
        })
        .collect();

    let mut rows = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => skipped.push(e),
        }
    }
    if rows.is_empty() {
        return Err(EvalError::stage("sweep", "no grid point could be evaluated"));
    }
    rows.sort_by(|a, b| a.s.total_cmp(&b.s).then(a.w.total_cmp(&b.w)).then(a.k.cmp(&b.k)));
    Ok(SweepOutcome { rows, skipped })
}
