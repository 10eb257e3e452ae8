use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{knn_classify, knn_train, knn_train_for_classes, AdversaryError, AnalysisParams, FeatureVector};
use crate::seed::stage_rng;

/// Rows are actual labels, columns predicted labels, both in `labels` order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Panics if either label is not one of the matrix labels.
    pub fn record(&mut self, actual: &str, predicted: &str) {
        let a = self.index(actual).expect("unknown actual label");
        let p = self.index(predicted).expect("unknown predicted label");
        self.counts[a][p] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn support(&self, label: &str) -> u64 {
        self.index(label).map_or(0, |i| self.counts[i].iter().sum())
    }

    /// Fraction of windows predicted as `label` that really are `label`;
    /// 0 when nothing was predicted as `label`.
    pub fn precision(&self, label: &str) -> f64 {
        let Some(i) = self.index(label) else { return 0.0 };
        let predicted: u64 = self.counts.iter().map(|row| row[i]).sum();
        ratio(self.counts[i][i], predicted)
    }

    pub fn recall(&self, label: &str) -> f64 {
        let Some(i) = self.index(label) else { return 0.0 };
        ratio(self.counts[i][i], self.counts[i].iter().sum())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("actual\\predicted");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            out.push_str(l);
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvOutcome {
    pub fold_accuracies: Vec<f64>,
    pub fold_sizes: Vec<usize>,
    /// Correct predictions over all folds divided by the number of vectors,
    /// which equals the size-weighted mean of the fold accuracies.
    pub mean_accuracy: f64,
    pub confusion: ConfusionMatrix,
    /// Some pair of classes has identical feature sets.
    pub degenerate: bool,
}

/// Assigns each vector to a fold. Within each class (in label order) the
/// vectors are shuffled with a seeded RNG and dealt round-robin, starting
/// where the previous class left off so fold sizes also stay within one.
pub fn stratified_folds(features: &[FeatureVector], folds: usize, seed: u64) -> Result<Vec<usize>, AdversaryError> {
    if folds < 2 {
        return Err(AdversaryError::InvalidParams("folds must be at least 2".into()));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, f) in features.iter().enumerate() {
        let label = f.label.as_deref().ok_or(AdversaryError::Unlabeled(i))?;
        by_class.entry(label).or_default().push(i);
    }
    for (label, members) in &by_class {
        if members.len() < folds {
            return Err(AdversaryError::ClassTooSmall {
                label: label.to_string(),
                count: members.len(),
                folds,
            });
        }
    }
    let mut rng = stage_rng(seed, "cv-folds");
    let mut assignment = vec![0; features.len()];
    let mut offset = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            assignment[i] = (offset + j) % folds;
        }
        offset = (offset + members.len()) % folds;
    }
    Ok(assignment)
}

/// Stratified k-fold cross-validation of the k-NN classifier.
pub fn stratified_cv(
    features: &[FeatureVector],
    params: &AnalysisParams,
    seed: u64,
) -> Result<CvOutcome, AdversaryError> {
    if params.k == 0 {
        return Err(AdversaryError::InvalidParams("k must be at least 1".into()));
    }
    let assignment = stratified_folds(features, params.folds, seed)?;
    let full = knn_train(features, params)?;
    let classes = full.classes().to_vec();
    let mut confusion = ConfusionMatrix::new(classes.clone());
    let mut fold_accuracies = Vec::with_capacity(params.folds);
    let mut fold_sizes = Vec::with_capacity(params.folds);

    for fold in 0..params.folds {
        let (test, train): (Vec<_>, Vec<_>) = features
            .iter()
            .zip(&assignment)
            .partition(|(_, &a)| a == fold);
        let train: Vec<FeatureVector> = train.into_iter().map(|(f, _)| f.clone()).collect();
        let model = knn_train_for_classes(&train, &classes, params)?;
        let mut correct = 0;
        for (f, _) in &test {
            let actual = f.label.as_deref().expect("labels checked");
            let predicted = knn_classify(&model, f).label;
            confusion.record(actual, &predicted);
            if predicted == actual {
                correct += 1;
            }
        }
        fold_sizes.push(test.len());
        fold_accuracies.push(ratio(correct, test.len() as u64));
    }

    Ok(CvOutcome {
        fold_accuracies,
        fold_sizes,
        mean_accuracy: ratio(confusion.correct(), confusion.total()),
        confusion,
        degenerate: full.is_degenerate(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labeled(counts: &[(&str, usize)]) -> Vec<FeatureVector> {
        let mut out = Vec::new();
        for (ci, (label, n)) in counts.iter().enumerate() {
            for j in 0..*n {
                out.push(FeatureVector::labeled(100.0 * ci as f64 + j as f64 * 0.01, ci as f64, *label));
            }
        }
        out
    }

    #[test]
    fn twenty_five_in_ten_folds() {
        let f = labeled(&[("a", 25)]);
        let a = stratified_folds(&f, 10, 1).unwrap();
        let mut sizes = [0; 10];
        for x in a {
            sizes[x] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 2 || s == 3));
        assert_eq!(sizes.iter().filter(|&&s| s == 3).count(), 5);
    }

    #[test]
    fn class_smaller_than_folds() {
        let f = labeled(&[("a", 12), ("b", 9)]);
        assert_eq!(
            stratified_folds(&f, 10, 0).unwrap_err(),
            AdversaryError::ClassTooSmall {
                label: "b".into(),
                count: 9,
                folds: 10
            }
        );
    }

    #[test]
    fn separable_classes_score_perfectly() {
        let f = labeled(&[("a", 30), ("b", 30), ("c", 30)]);
        let params = AnalysisParams {
            k: 3,
            ..Default::default()
        };
        let out = stratified_cv(&f, &params, 5).unwrap();
        assert_eq!(out.mean_accuracy, 1.0);
        assert!(out.fold_accuracies.iter().all(|&a| a == 1.0));
        assert_eq!(out.confusion.total(), 90);
        assert_eq!(out.confusion.support("b"), 30);
        assert_eq!(out.confusion.precision("b"), 1.0);
        assert!(!out.degenerate);
    }

    #[test]
    fn confusion_csv_layout() {
        let mut m = ConfusionMatrix::new(vec!["x".into(), "y".into()]);
        m.record("x", "x");
        m.record("x", "y");
        m.record("y", "y");
        assert_eq!(m.to_csv(), "actual\\predicted,x,y\nx,1,1\ny,0,1\n");
        assert_eq!(m.recall("x"), 0.5);
        assert_eq!(m.precision("y"), 0.5);
    }

    fn random_set() -> impl Strategy<Value = (Vec<FeatureVector>, usize)> {
        (2usize..11, prop::collection::vec(0usize..30, 1..6)).prop_map(|(folds, extra)| {
            let counts: Vec<(String, usize)> = extra
                .iter()
                .enumerate()
                .map(|(i, e)| (format!("c{i}"), folds + e))
                .collect();
            let mut out = Vec::new();
            // interleave labels so indices are not grouped by class
            let max = counts.iter().map(|c| c.1).max().unwrap();
            for j in 0..max {
                for (label, n) in &counts {
                    if j < *n {
                        out.push(FeatureVector::labeled(j as f64, 0.0, label.clone()));
                    }
                }
            }
            (out, folds)
        })
    }

    proptest! {
        #[test]
        fn folds_partition_and_stratify((features, folds) in random_set(), seed in any::<u64>()) {
            let a = stratified_folds(&features, folds, seed).unwrap();
            prop_assert_eq!(a.len(), features.len());
            prop_assert!(a.iter().all(|&x| x < folds));
            let mut per: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            let mut sizes = vec![0usize; folds];
            for (f, &x) in features.iter().zip(&a) {
                per.entry(f.label.as_deref().unwrap()).or_insert_with(|| vec![0; folds])[x] += 1;
                sizes[x] += 1;
            }
            for counts in per.values() {
                let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
                prop_assert!(hi - lo <= 1);
            }
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert_eq!(&a, &stratified_folds(&features, folds, seed).unwrap());
        }
    }
}
