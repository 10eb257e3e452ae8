use std::collections::{BTreeMap, BTreeSet};

use super::{AdversaryError, AnalysisParams, FeatureVector};

/// k-nearest-neighbors classifier over (mean, stddev) window features.
///
/// Features are min-max scaled per dimension using the training data, so
/// the decision does not depend on the units of either dimension. A
/// dimension that is constant over the training set maps to 0.
#[derive(Clone, Debug)]
pub struct KnnModel {
    points: Vec<[f64; 2]>,
    labels: Vec<String>,
    k: usize,
    mins: [f64; 2],
    /// `None` marks a constant dimension.
    ranges: [Option<f64>; 2],
    classes: Vec<String>,
    degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub label: String,
    /// Fraction of the k neighbors that voted for `label`.
    pub confidence: f64,
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Dimensions (mean, stddev) that were constant over the training data.
    pub fn constant_dimensions(&self) -> [bool; 2] {
        [self.ranges[0].is_none(), self.ranges[1].is_none()]
    }

    /// True when two different classes have identical training feature sets,
    /// so no classifier can tell them apart.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    fn scale(&self, raw: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for d in 0..2 {
            out[d] = match self.ranges[d] {
                Some(range) => (raw[d] - self.mins[d]) / range,
                None => 0.0,
            };
        }
        out
    }
}

pub fn knn_train(features: &[FeatureVector], params: &AnalysisParams) -> Result<KnnModel, AdversaryError> {
    knn_train_for_classes(features, &[], params)
}

/// Trains a model, also requiring every label in `classes` to have at least
/// one training vector.
pub fn knn_train_for_classes(
    features: &[FeatureVector],
    classes: &[String],
    params: &AnalysisParams,
) -> Result<KnnModel, AdversaryError> {
    if params.k == 0 {
        return Err(AdversaryError::InvalidParams("k must be at least 1".into()));
    }
    if params.k > features.len() {
        return Err(AdversaryError::KTooLarge {
            k: params.k,
            size: features.len(),
        });
    }
    let mut labels = Vec::with_capacity(features.len());
    let mut per_class: BTreeMap<&str, Vec<(u64, u64)>> = BTreeMap::new();
    for (i, f) in features.iter().enumerate() {
        let label = f.label.as_deref().ok_or(AdversaryError::Unlabeled(i))?;
        labels.push(label.to_string());
        per_class
            .entry(label)
            .or_default()
            .push((f.mean.to_bits(), f.stddev.to_bits()));
    }
    for c in classes {
        if !per_class.contains_key(c.as_str()) {
            return Err(AdversaryError::EmptyClass(c.clone()));
        }
    }

    let mut mins = [f64::INFINITY; 2];
    let mut maxs = [f64::NEG_INFINITY; 2];
    for f in features {
        for (d, v) in [f.mean, f.stddev].into_iter().enumerate() {
            mins[d] = mins[d].min(v);
            maxs[d] = maxs[d].max(v);
        }
    }
    let ranges = [0, 1].map(|d| {
        let r = maxs[d] - mins[d];
        (r > 0.0).then_some(r)
    });

    let signatures: Vec<Vec<(u64, u64)>> = per_class
        .into_values()
        .map(|mut v| {
            v.sort_unstable();
            v
        })
        .collect();
    let distinct: BTreeSet<&Vec<(u64, u64)>> = signatures.iter().collect();
    let degenerate = distinct.len() < signatures.len();

    let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let mut model = KnnModel {
        points: Vec::with_capacity(features.len()),
        labels,
        k: params.k,
        mins,
        ranges,
        classes,
        degenerate,
    };
    model.points = features.iter().map(|f| model.scale([f.mean, f.stddev])).collect();
    Ok(model)
}

/// Majority vote among the k nearest training vectors (Euclidean distance
/// in scaled space). Distance ties go to the earlier training vector; vote
/// ties go to the label with the smaller summed distance, then to the
/// lexicographically smaller label.
pub fn knn_classify(model: &KnnModel, feature: &FeatureVector) -> Classification {
    let q = model.scale([feature.mean, feature.stddev]);
    let mut order: Vec<(f64, usize)> = model
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt(), i))
        .collect();
    let k = model.k.min(order.len());
    let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, by_distance);
        order.truncate(k);
    }
    order.sort_by(by_distance);

    let mut votes: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for &(d, i) in &order {
        let v = votes.entry(model.labels[i].as_str()).or_insert((0, 0.0));
        v.0 += 1;
        v.1 += d;
    }
    let (label, (count, _)) = votes
        .into_iter()
        .min_by(|(la, (ca, da)), (lb, (cb, db))| cb.cmp(ca).then(da.total_cmp(db)).then(la.cmp(lb)))
        .expect("k >= 1");
    Classification {
        label: label.to_string(),
        confidence: count as f64 / k as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(k: usize) -> AnalysisParams {
        AnalysisParams {
            k,
            ..Default::default()
        }
    }

    fn fv(m: f64, s: f64, l: &str) -> FeatureVector {
        FeatureVector::labeled(m, s, l)
    }

    #[test]
    fn one_per_class_k1_recovers_labels() {
        let train = vec![fv(1.0, 0.0, "a"), fv(5.0, 2.0, "b"), fv(9.0, 1.0, "c")];
        let m = knn_train(&train, &params(1)).unwrap();
        for f in &train {
            let c = knn_classify(&m, f);
            assert_eq!(Some(c.label), f.label);
            assert_eq!(c.confidence, 1.0);
        }
        assert!(!m.is_degenerate());
    }

    #[test]
    fn majority_with_confidence() {
        let train = vec![
            fv(0.0, 0.0, "A"),
            fv(0.1, 0.0, "A"),
            fv(0.2, 0.0, "B"),
            fv(10.0, 10.0, "B"),
            fv(11.0, 10.0, "B"),
        ];
        let m = knn_train(&train, &params(3)).unwrap();
        let c = knn_classify(&m, &fv(0.05, 0.0, "?"));
        assert_eq!(c.label, "A");
        assert!((c.confidence - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn vote_tie_goes_to_closer_then_lexicographic() {
        let train = vec![fv(0.0, 0.0, "z"), fv(3.0, 0.0, "a"), fv(10.0, 0.0, "q")];
        let m = knn_train(&train, &params(2)).unwrap();
        // one vote each; "z" is closer
        assert_eq!(knn_classify(&m, &fv(1.0, 0.0, "?")).label, "z");
        // equidistant: lexicographic
        assert_eq!(knn_classify(&m, &fv(1.5, 0.0, "?")).label, "a");
    }

    #[test]
    fn distance_tie_prefers_earlier_index() {
        let train = vec![fv(1.0, 1.0, "first"), fv(1.0, 1.0, "second"), fv(5.0, 5.0, "x")];
        let m = knn_train(&train, &params(1)).unwrap();
        assert_eq!(knn_classify(&m, &fv(1.0, 1.0, "?")).label, "first");
    }

    #[test]
    fn identical_classes_are_flagged() {
        let train = vec![fv(1.0, 2.0, "a"), fv(3.0, 2.0, "a"), fv(3.0, 2.0, "b"), fv(1.0, 2.0, "b")];
        let m = knn_train(&train, &params(1)).unwrap();
        assert!(m.is_degenerate());
        assert_eq!(m.constant_dimensions(), [false, true]);
    }

    #[test]
    fn training_errors() {
        let train = vec![fv(1.0, 2.0, "a")];
        assert_eq!(
            knn_train(&train, &params(3)).unwrap_err(),
            AdversaryError::KTooLarge { k: 3, size: 1 }
        );
        assert_eq!(
            knn_train_for_classes(&train, &["a".into(), "b".into()], &params(1)).unwrap_err(),
            AdversaryError::EmptyClass("b".into())
        );
        let unlabeled = vec![FeatureVector {
            mean: 1.0,
            stddev: 0.0,
            label: None,
            window_index: 0,
        }];
        assert_eq!(
            knn_train(&unlabeled, &params(1)).unwrap_err(),
            AdversaryError::Unlabeled(0)
        );
    }

    fn labeled_set() -> impl Strategy<Value = Vec<FeatureVector>> {
        prop::collection::vec((0u32..1000, 0u32..1000, 0usize..4), 2..40).prop_map(|v| {
            v.into_iter()
                .map(|(m, s, l)| fv(f64::from(m), f64::from(s), ["a", "b", "c", "d"][l]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn k1_classifies_distinct_training_points_to_themselves(train in labeled_set()) {
            // drop points that share coordinates with a differently-labeled point
            let clean: Vec<FeatureVector> = train
                .iter()
                .filter(|f| !train.iter().any(|g| g.mean == f.mean && g.stddev == f.stddev && g.label != f.label))
                .cloned()
                .collect();
            prop_assume!(!clean.is_empty());
            let m = knn_train(&clean, &params(1)).unwrap();
            for f in &clean {
                prop_assert_eq!(Some(knn_classify(&m, f).label), f.label.clone());
            }
        }

        #[test]
        fn uniform_rescaling_leaves_labels_unchanged(
            train in labeled_set(),
            queries in prop::collection::vec((0u32..1200, 0u32..1200), 1..20),
            exp in -8i32..8,
            k in 1usize..4,
        ) {
            prop_assume!(k <= train.len());
            let c = 2f64.powi(exp);
            let scaled: Vec<_> = train
                .iter()
                .map(|f| fv(f.mean * c, f.stddev * c, f.label.as_deref().unwrap()))
                .collect();
            let m1 = knn_train(&train, &params(k)).unwrap();
            let m2 = knn_train(&scaled, &params(k)).unwrap();
            for (qm, qs) in queries {
                let q1 = fv(f64::from(qm), f64::from(qs), "?");
                let q2 = fv(f64::from(qm) * c, f64::from(qs) * c, "?");
                prop_assert_eq!(knn_classify(&m1, &q1).label, knn_classify(&m2, &q2).label);
            }
        }
    }
}
