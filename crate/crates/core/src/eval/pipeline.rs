use std::collections::{BTreeMap, BTreeSet};

use super::report::{
    BehaviorReport, ClassMetrics, DnsReport, EvaluationReport, FeatureRow, IdentificationReport,
};
use super::{score_events, sweep, EvalError, EventScore, ExperimentConfig};
use crate::adversary::{
    bin_rates, identify_by_dns, infer_events, split_streams, stratified_cv, windows_to_features, AdversaryError,
    AnalysisParams, CvOutcome, DnsDictionary, FeatureVector, StreamKey,
};
use crate::defenses::{apply_defense, DefenseConfig, DefenseContext, DefenseCost};
use crate::seed::derive_seed;
use crate::synth::{render_traffic, resolve_scenario, sample_timeline, BehaviorEvent, BehaviorTimeline, Scenario};
use crate::trace::{project_view, AdversaryView, ObservedRecord, ObservedTrace, Trace};

/// Everything up to and including the adversary's view of the defended
/// trace. Shared by every analysis point of a sweep.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub scenario: Scenario,
    pub master_seed: u64,
    pub view: AdversaryView,
    pub timeline: BehaviorTimeline,
    pub decoys: Vec<BehaviorEvent>,
    /// The defended trace this view's adversary observes.
    pub trace: Trace,
    pub costs: Vec<DefenseCost>,
    /// Defenses that have no effect on this adversary, with the reason.
    pub skipped_defenses: Vec<String>,
    pub observed: ObservedTrace,
    pub streams: BTreeMap<StreamKey, Vec<ObservedRecord>>,
}

impl Prepared {
    /// Device type of a stream, as recorded in the defended trace's roster.
    pub fn label(&self, key: &StreamKey) -> Option<&str> {
        self.trace.roster().get(&key.device).map(String::as_str)
    }
}

/// Generates the scenario's trace, applies the defenses in order and
/// projects the result onto the configured adversary.
///
/// The radio eavesdropper sits between the devices and the gateway, so
/// defenses that act at or beyond the gateway (blocking, tunneling) are not
/// applied to its lineage.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, EvalError> {
    config.validate()?;
    let mut scenario = resolve_scenario(&config.scenario).map_err(|e| EvalError::stage("scenario", e))?;
    if let Some(seed) = config.seed {
        scenario.seed = seed;
    }
    let master_seed = scenario.seed;
    let timeline = sample_timeline(&scenario).map_err(|e| EvalError::stage("generate", e))?;
    let mut trace = render_traffic(&timeline, &scenario).map_err(|e| EvalError::stage("generate", e))?;

    let mut decoys: Vec<BehaviorEvent> = Vec::new();
    let mut costs = Vec::new();
    let mut skipped = Vec::new();
    for (i, defense) in config.defenses.iter().enumerate() {
        if config.view == AdversaryView::WifiEavesdropper && !defense.affects_radio() {
            skipped.push(format!("{}: acts upstream of the radio link", defense.name()));
            continue;
        }
        // later decoys must also respect earlier ones
        let context_timeline = BehaviorTimeline {
            events: timeline.events.iter().chain(&decoys).cloned().collect(),
            constraints: timeline.constraints.clone(),
        };
        let ctx = DefenseContext {
            scenario: Some(&scenario),
            real_timeline: Some(&context_timeline),
            seed: derive_seed(master_seed, &format!("defense-{i}-{}", defense.name())),
        };
        let outcome =
            apply_defense(&trace, defense, &ctx).map_err(|e| EvalError::stage(format!("defense {}", defense.name()), e))?;
        trace = outcome.trace;
        costs.push(outcome.cost);
        if let Some(d) = outcome.decoys {
            decoys.extend(d.events);
        }
    }

    let observed = project_view(&trace, config.view);
    let streams = split_streams(&observed);
    Ok(Prepared {
        scenario,
        master_seed,
        view: config.view,
        timeline,
        decoys,
        trace,
        costs,
        skipped_defenses: skipped,
        observed,
        streams,
    })
}

/// Labeled window features of every stream at one (s, w) point.
pub fn stream_features(
    prepared: &Prepared,
    params: &AnalysisParams,
) -> Result<Vec<(StreamKey, FeatureVector)>, AdversaryError> {
    let mut out = Vec::new();
    for (key, records) in &prepared.streams {
        let series = bin_rates(records, params.s, prepared.observed.duration_us);
        let label = prepared.label(key).unwrap_or(&key.device).to_string();
        for mut f in windows_to_features(&series, params.w)? {
            f.label = Some(label.clone());
            out.push((key.clone(), f));
        }
    }
    Ok(out)
}

/// Cross-validates on `features`, lowering the fold count to the smallest
/// class size when needed. `Err` carries why identification is not
/// meaningful.
pub(crate) fn identify(
    features: &[FeatureVector],
    params: &AnalysisParams,
    seed: u64,
) -> Result<Result<(CvOutcome, usize), String>, AdversaryError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for f in features {
        *counts.entry(f.label.as_deref().unwrap_or("")).or_default() += 1;
    }
    if counts.len() < 2 {
        return Ok(Err(format!(
            "{} device class observable; identification needs at least two",
            counts.len()
        )));
    }
    let smallest = counts.values().copied().min().unwrap_or(0);
    if smallest < 2 {
        return Ok(Err("some class has fewer than two windows".into()));
    }
    let folds = params.folds.min(smallest);
    let params = AnalysisParams { folds, ..*params };
    Ok(Ok((stratified_cv(features, &params, seed)?, folds)))
}

/// Cross-validated identification over labeled windows. The inner `Err`
/// explains why identification does not apply (fewer than two classes).
pub fn cross_validate(
    features: &[FeatureVector],
    params: &AnalysisParams,
    seed: u64,
) -> Result<Result<IdentificationReport, String>, AdversaryError> {
    let (cv, folds) = match identify(features, params, seed)? {
        Ok(v) => v,
        Err(note) => return Ok(Err(note)),
    };
    let per_class = cv
        .confusion
        .labels
        .iter()
        .map(|l| {
            (
                l.clone(),
                ClassMetrics {
                    precision: cv.confusion.precision(l),
                    recall: cv.confusion.recall(l),
                    support: cv.confusion.support(l),
                },
            )
        })
        .collect();
    Ok(Ok(IdentificationReport {
        params: AnalysisParams { folds, ..*params },
        note: (folds < params.folds).then(|| format!("folds lowered to {folds} by the smallest class")),
        windows: features.len(),
        mean_accuracy: cv.mean_accuracy,
        fold_accuracies: cv.fold_accuracies,
        fold_sizes: cv.fold_sizes,
        per_class,
        confusion: cv.confusion,
        degenerate: cv.degenerate,
    }))
}

fn dns_identification(prepared: &Prepared) -> DnsReport {
    let dict = DnsDictionary::builtin();
    let streams: BTreeMap<String, Option<String>> = prepared
        .streams
        .iter()
        .map(|(k, recs)| (k.to_string(), identify_by_dns(recs, &dict)))
        .collect();
    let hits = streams.values().filter(|v| v.is_some()).count();
    DnsReport {
        fraction_identified: if streams.is_empty() {
            0.0
        } else {
            hits as f64 / streams.len() as f64
        },
        streams,
    }
}

/// Runs the detector on each observed device's aggregate rate and scores it
/// against that device's real events. A device id the scenario does not
/// know (the tunnel gateway) is scored against every event.
fn behavior(prepared: &Prepared, config: &ExperimentConfig) -> BehaviorReport {
    let devices: BTreeSet<&str> = prepared.streams.keys().map(|k| k.device.as_str()).collect();
    let mut scores = Vec::new();
    let mut detected = 0;
    for device in devices {
        let records: Vec<ObservedRecord> = prepared
            .streams
            .iter()
            .filter(|(k, _)| k.device == device)
            .flat_map(|(_, r)| r.iter().cloned())
            .collect();
        let series = bin_rates(&records, config.analysis.s, prepared.observed.duration_us);
        let events = infer_events(&series, &config.detector);
        detected += events.len();
        let known = prepared.scenario.device(device).is_some();
        let relevant = |e: &&BehaviorEvent| !known || e.device_id == device;
        let truth: Vec<_> = prepared.timeline.events.iter().filter(relevant).cloned().collect();
        let decoys: Vec<_> = prepared.decoys.iter().filter(relevant).cloned().collect();
        scores.push(score_events(&events, &truth, &decoys, config.match_tolerance_s));
    }
    BehaviorReport {
        sample_period_s: config.analysis.s,
        detected,
        real_events: prepared.timeline.events.len(),
        decoy_events: prepared.decoys.len(),
        score: EventScore::combine(&scores),
    }
}

/// Runs both attacks on a prepared trace and assembles the report.
pub fn analyze(prepared: &Prepared, config: &ExperimentConfig) -> Result<EvaluationReport, EvalError> {
    let params = config.analysis;
    let labeled = stream_features(prepared, &params).map_err(|e| EvalError::stage("features", e))?;
    let features: Vec<FeatureVector> = labeled.iter().map(|(_, f)| f.clone()).collect();
    let feature_rows = labeled
        .iter()
        .map(|(k, f)| FeatureRow {
            stream: k.to_string(),
            label: f.label.clone().unwrap_or_default(),
            window_index: f.window_index,
            mean: f.mean,
            stddev: f.stddev,
        })
        .collect();
    let cv_seed = derive_seed(prepared.master_seed, "cv");
    let (identification, identification_note) = match cross_validate(&features, &params, cv_seed)
        .map_err(|e| EvalError::stage("identification", e))?
    {
        Ok(id) => (Some(id), None),
        Err(note) => (None, Some(note)),
    };

    let sweep = match &config.sweep {
        Some(grid) => Some(sweep(prepared, grid, params.folds, cv_seed)?),
        None => None,
    };

    let injected = config
        .defenses
        .iter()
        .any(|d| matches!(d, DefenseConfig::InjectDecoys { .. }));
    Ok(EvaluationReport {
        scenario: prepared.scenario.name.clone(),
        view: prepared.view,
        master_seed: prepared.master_seed,
        duration_s: prepared.trace.duration_s(),
        streams: prepared.streams.keys().map(|k| k.to_string()).collect(),
        identification,
        identification_note,
        dns_identification: dns_identification(prepared),
        behavior: behavior(prepared, config),
        costs: prepared.costs.clone(),
        skipped_defenses: prepared.skipped_defenses.clone(),
        wifi_spoofing_assumed: injected && prepared.view == AdversaryView::WifiEavesdropper,
        sweep,
        config: config.clone(),
        features: feature_rows,
    })
}

/// Full pipeline: [`prepare`] then [`analyze`], writing the report files
/// when the config names an output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EvaluationReport, EvalError> {
    let prepared = prepare(config)?;
    let report = analyze(&prepared, config)?;
    if let Some(dir) = &config.output_dir {
        super::write_report(&report, dir)?;
    }
    Ok(report)
}
