//! The `ratelab` command line.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::adversary::{
    bin_rates, identify_by_dns, infer_events, split_streams, windows_to_features, DetectedEvent, DnsDictionary,
    FeatureVector,
};
use crate::defenses::{apply_defense, DefenseContext};
use crate::eval::{self, analyze, prepare, write_report, EvaluationReport, ExperimentConfig, SweepGrid};
use crate::seed::derive_seed;
use crate::synth::{
    builtin::DEFAULT_SEED, load_timeline, render_traffic, resolve_scenario, sample_timeline, save_timeline,
    BehaviorTimeline,
};
use crate::trace::{load_trace, project_view, save_trace, AdversaryView};

const DEFAULT_OUT: &str = "ratelab-out";

#[derive(Debug, Parser)]
#[command(name = "ratelab", version, about = "Traffic-rate privacy attacks and defenses for smart homes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory.
    #[arg(long, env = "RATELAB_OUT", global = true)]
    pub out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress the summary on standard output.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a behavior timeline and render its packet trace.
    Generate {
        /// Scenario file or `builtin:<name>`.
        #[arg(long, default_value = "builtin:default")]
        config: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run both attacks on a trace file.
    Attack {
        #[arg(long = "in")]
        input: PathBuf,
        /// Experiment config supplying analysis and detector parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "last-mile")]
        view: AdversaryView,
        #[command(flatten)]
        common: Common,
    },
    /// Apply the `[[defense]]` list of a config to a trace file.
    Defend {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Real timeline of the trace; needed for decoy injection.
        #[arg(long)]
        timeline: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a full experiment and write its report.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        view: Option<AdversaryView>,
        #[command(flatten)]
        common: Common,
    },
    /// Cross-validated accuracy over a grid of (s, w, k).
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        view: Option<AdversaryView>,
        #[command(flatten)]
        common: Common,
    },
    /// Print a stored report.
    Report {
        /// `report.json`, or a directory containing one.
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, common } => cmd_generate(&config, &common),
        Command::Attack {
            input,
            config,
            view,
            common,
        } => cmd_attack(&input, config.as_deref(), view, &common),
        Command::Defend {
            input,
            config,
            timeline,
            common,
        } => cmd_defend(&input, &config, timeline.as_deref(), &common),
        Command::Evaluate { config, view, common } => cmd_evaluate(config.as_deref(), view, &common, false),
        Command::Sweep { config, view, common } => cmd_evaluate(config.as_deref(), view, &common, true),
        Command::Report { input, common } => cmd_report(&input, &common),
    }
}

fn out_dir(common: &Common, configured: Option<&Path>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| configured.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))
}

fn say(common: &Common, text: &str) {
    if !common.quiet {
        print!("{text}");
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).context("config"),
        None => Ok(ExperimentConfig::default()),
    }
}

pub fn cmd_generate(reference: &str, common: &Common) -> Result<()> {
    let mut scenario = resolve_scenario(reference).with_context(|| format!("scenario {reference}"))?;
    if let Some(seed) = common.seed {
        scenario.seed = seed;
    }
    let timeline = sample_timeline(&scenario).context("generate stage")?;
    let trace = render_traffic(&timeline, &scenario).context("generate stage")?;
    let dir = out_dir(common, None);
    create_dir(&dir)?;
    save_trace(&trace, dir.join("trace.txt"))?;
    save_timeline(&timeline, dir.join("timeline.txt"))
        .with_context(|| format!("cannot write {}", dir.join("timeline.txt").display()))?;
    write(&dir.join("scenario.toml"), scenario.to_toml())?;

    let mut text = format!(
        "scenario {} seed {}: {} s, {} records, {} events\n",
        scenario.name,
        scenario.seed,
        trace.duration_s(),
        trace.records().len(),
        timeline.events.len()
    );
    let bytes = trace.bytes_by_device();
    for (id, label) in trace.roster() {
        text.push_str(&format!("  {id} ({label}): {} bytes\n", bytes.get(id).copied().unwrap_or(0)));
    }
    say(common, &text);
    Ok(())
}

#[derive(Serialize)]
struct StreamResult {
    label: Option<String>,
    dns_identification: Option<String>,
    windows: Vec<FeatureVector>,
    events: Vec<DetectedEvent>,
}

#[derive(Serialize)]
struct AttackResult {
    view: AdversaryView,
    duration_s: f64,
    streams: BTreeMap<String, StreamResult>,
    identification: Option<eval::IdentificationReport>,
    identification_note: Option<String>,
}

pub fn cmd_attack(input: &Path, config: Option<&Path>, view: AdversaryView, common: &Common) -> Result<()> {
    let config = load_config(config)?;
    let trace = load_trace(input).context("load stage")?;
    let observed = project_view(&trace, view);
    let streams = split_streams(&observed);
    let dict = DnsDictionary::builtin();
    let params = config.analysis;

    let mut results = BTreeMap::new();
    let mut labeled = Vec::new();
    for (key, records) in &streams {
        let label = trace.roster().get(&key.device).cloned();
        let series = bin_rates(records, params.s, observed.duration_us);
        let mut windows = windows_to_features(&series, params.w).context("features stage")?;
        for w in &mut windows {
            w.label = label.clone();
        }
        labeled.extend(windows.iter().cloned());
        results.insert(
            key.to_string(),
            StreamResult {
                label,
                dns_identification: identify_by_dns(records, &dict),
                windows,
                events: infer_events(&series, &config.detector),
            },
        );
    }

    let seed = derive_seed(common.seed.or(config.seed).unwrap_or(DEFAULT_SEED), "cv");
    let (identification, note) = match eval::cross_validate(&labeled, &params, seed).context("identification stage")? {
        Ok(id) => (Some(id), None),
        Err(note) => (None, Some(note)),
    };

    let mut text = format!("view {view}: {} streams\n", results.len());
    for (name, r) in &results {
        text.push_str(&format!(
            "  {name}: dns {}, {} windows, {} events\n",
            r.dns_identification.as_deref().unwrap_or("none"),
            r.windows.len(),
            r.events.len()
        ));
        for e in &r.events {
            text.push_str(&format!(
                "    event {:.1}-{:.1} s peak {:.1} B/s\n",
                e.start_s(),
                e.end_s(),
                e.peak_bytes_per_s
            ));
        }
    }
    match (&identification, &note) {
        (Some(id), _) => text.push_str(&format!("identification: mean accuracy {:.4}\n", id.mean_accuracy)),
        (None, Some(n)) => text.push_str(&format!("identification: n/a ({n})\n")),
        _ => {}
    }

    let result = AttackResult {
        view,
        duration_s: observed.duration_us as f64 / 1e6,
        streams: results,
        identification,
        identification_note: note,
    };
    let dir = out_dir(common, config.output_dir.as_deref());
    create_dir(&dir)?;
    write(&dir.join("attack.json"), serde_json::to_string_pretty(&result)? + "\n")?;
    say(common, &text);
    Ok(())
}

pub fn cmd_defend(input: &Path, config: &Path, timeline: Option<&Path>, common: &Common) -> Result<()> {
    let config = ExperimentConfig::load(config).context("config")?;
    if config.defenses.is_empty() {
        bail!("config lists no [[defense]] entries");
    }
    let mut trace = load_trace(input).context("load stage")?;
    let mut scenario = resolve_scenario(&config.scenario).context("scenario")?;
    let master = common.seed.or(config.seed).unwrap_or(scenario.seed);
    scenario.seed = master;
    let real: Option<BehaviorTimeline> = timeline.map(load_timeline).transpose().context("timeline")?;

    let mut decoys = Vec::new();
    let mut costs = Vec::new();
    for (i, defense) in config.defenses.iter().enumerate() {
        let context_timeline = real.as_ref().map(|r| BehaviorTimeline {
            events: r.events.iter().chain(&decoys).cloned().collect(),
            constraints: scenario.constraints.clone(),
        });
        let ctx = DefenseContext {
            scenario: Some(&scenario),
            real_timeline: context_timeline.as_ref(),
            seed: derive_seed(master, &format!("defense-{i}-{}", defense.name())),
        };
        let outcome = apply_defense(&trace, defense, &ctx).with_context(|| format!("defense {}", defense.name()))?;
        trace = outcome.trace;
        costs.push(outcome.cost);
        if let Some(d) = outcome.decoys {
            decoys.extend(d.events);
        }
    }

    let dir = out_dir(common, config.output_dir.as_deref());
    create_dir(&dir)?;
    save_trace(&trace, dir.join("defended.txt"))?;
    let mut csv = format!("{}\n", crate::defenses::DefenseCost::csv_header());
    for c in &costs {
        csv.push_str(&c.csv_row());
        csv.push('\n');
    }
    write(&dir.join("costs.csv"), &csv)?;
    if config
        .defenses
        .iter()
        .any(|d| matches!(d, crate::defenses::DefenseConfig::InjectDecoys { .. }))
    {
        let decoy_timeline = BehaviorTimeline {
            events: decoys,
            constraints: scenario.constraints.clone(),
        };
        save_timeline(&decoy_timeline, dir.join("decoys.txt"))
            .with_context(|| format!("cannot write {}", dir.join("decoys.txt").display()))?;
    }

    let mut text = format!("{} records, {} bytes after defenses\n", trace.records().len(), trace.total_bytes());
    for c in &costs {
        text.push_str(&format!(
            "  {}: overhead {} B, mean latency {:.3} s\n",
            c.defense, c.overhead_bytes, c.mean_added_latency_s
        ));
    }
    say(common, &text);
    Ok(())
}

pub fn cmd_evaluate(config: Option<&Path>, view: Option<AdversaryView>, common: &Common, sweep: bool) -> Result<()> {
    let mut config = load_config(config)?;
    if let Some(seed) = common.seed {
        config.seed = Some(seed);
    }
    if let Some(v) = view {
        config.view = v;
    }
    if sweep && config.sweep.is_none() {
        config.sweep = Some(SweepGrid::default());
    }
    let dir = out_dir(common, config.output_dir.as_deref());
    config.output_dir = None;
    let prepared = prepare(&config)?;
    let report = analyze(&prepared, &config)?;
    write_report(&report, &dir)?;
    let mut text = report.summary();
    if let (true, Some(sw)) = (sweep, &report.sweep) {
        text.push_str("s,w,k,folds,accuracy\n");
        for r in &sw.rows {
            text.push_str(&format!("{},{},{},{},{:.4}\n", r.s, r.w, r.k, r.folds, r.accuracy));
        }
    }
    say(common, &text);
    Ok(())
}

pub fn cmd_report(input: &Path, common: &Common) -> Result<()> {
    let path = if input.is_dir() {
        input.join("report.json")
    } else {
        input.to_path_buf()
    };
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let report: EvaluationReport =
        serde_json::from_str(&text).with_context(|| format!("{} is not a report", path.display()))?;
    say(common, &report.summary());
    Ok(())
}
