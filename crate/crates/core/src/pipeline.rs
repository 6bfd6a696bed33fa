//! End-to-end drivers behind the command-line subcommands.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::training::{division_samples, match_vertices, migration_samples, MATCH_IOU};
use crate::events::{
    count_events, event_probabilities, priors::priors_from_counts, train_classifier,
    EventClassifier, EventCounts, EventKind, EventPriors, GbtParams, SampleSet,
};
use crate::graph::{
    best_hierarchy_filter, build_graph, model_size, ModelSize, TrackingGraph, DEFAULT_GATE_DISTANCE,
};
use crate::hypothesis::{
    read_mask_dir, sequence_hypotheses, write_hypotheses_jsonl, HypothesisConfig, LabelMask,
};
use crate::ilp::{
    build_model, export_lp, round_lp, solve_bb, BbOptions, EventProbabilities, FlowSolution,
    IpModel, ModelMode, SolveStatus, DEFAULT_REL_GAP,
};
use crate::lineage::{decode, read_ground_truth, read_tracks, write_tracks, LineageForest};
use crate::metrics::{score_events, score_mota, EvalReport};
use crate::synth::{generate, write_sequence, SynthConfig, SynthSequence};

pub const WORKERS_ENV: &str = "CELLTRACK_WORKERS";
pub const MIGRATION_MODEL_FILE: &str = "migration.json";
pub const DIVISION_MODEL_FILE: &str = "division.json";
pub const PRIORS_FILE: &str = "priors.json";
pub const COUNTS_FILE: &str = "counts.json";
pub const SOLVER_LOG_FILE: &str = "solver_log.json";
pub const HYPOTHESES_FILE: &str = "hypotheses.jsonl";

/// Sizes the global worker pool from `CELLTRACK_WORKERS`, if set.
pub fn configure_workers() -> Result<Option<usize>> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(None);
    };
    let n: usize = v.trim().parse().map_err(|_| {
        Error::Config(format!(
            "{WORKERS_ENV} must be a positive integer, got {v:?}"
        ))
    })?;
    if n == 0 {
        return Err(Error::Config(format!("{WORKERS_ENV} must be positive")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(Some(n))
}

/// Tracking variant: the full model or one of the ablations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Mode {
    Full,
    /// Thresholded classifier outputs, no optimization.
    ClassifierOnly,
    NoConflict,
    /// Constant division probability; `None` takes the trained frequency.
    FixedDivision(Option<f64>),
    /// Only the best level of each hierarchy.
    BestHierarchy,
    /// Rounded LP relaxation.
    LpRounding,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => Mode::Full,
            "cl" => Mode::ClassifierOnly,
            "nc" => Mode::NoConflict,
            "bh" => Mode::BestHierarchy,
            "lp" => Mode::LpRounding,
            "fd" => Mode::FixedDivision(None),
            _ => {
                let p = s
                    .strip_prefix("fd:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::Config(format!("unknown mode {s:?} (full|cl|nc|fd[:p]|bh|lp)"))
                    })?;
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::Config(format!(
                        "fixed division probability {p} must be in (0, 1)"
                    )));
                }
                Mode::FixedDivision(Some(p))
            }
        })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Full => write!(f, "full"),
            Mode::ClassifierOnly => write!(f, "cl"),
            Mode::NoConflict => write!(f, "nc"),
            Mode::FixedDivision(None) => write!(f, "fd"),
            Mode::FixedDivision(Some(p)) => write!(f, "fd:{p}"),
            Mode::BestHierarchy => write!(f, "bh"),
            Mode::LpRounding => write!(f, "lp"),
        }
    }
}

impl TryFrom<String> for Mode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Mode> for String {
    fn from(m: Mode) -> String {
        m.to_string()
    }
}

/// Settings of `track` and `export-lp`. Fields left out of a config file
/// take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Directory holding trained models and priors.
    pub models: Option<PathBuf>,
    pub migration_model: Option<PathBuf>,
    pub division_model: Option<PathBuf>,
    pub priors: Option<PathBuf>,
    pub rho_a: Option<f64>,
    pub rho_d: Option<f64>,
    pub gate_distance: f64,
    pub mode: Mode,
    pub rel_gap: f64,
    pub max_nodes: usize,
    pub hypothesis: HypothesisConfig,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            output: PathBuf::new(),
            models: None,
            migration_model: None,
            division_model: None,
            priors: None,
            rho_a: None,
            rho_d: None,
            gate_distance: DEFAULT_GATE_DISTANCE,
            mode: Mode::Full,
            rel_gap: DEFAULT_REL_GAP,
            max_nodes: BbOptions::default().max_nodes,
            hypothesis: HypothesisConfig::default(),
        }
    }
}

impl TrackConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    fn model_path(&self, explicit: &Option<PathBuf>, file: &str) -> Result<PathBuf> {
        explicit
            .clone()
            .or_else(|| self.models.as_ref().map(|d| d.join(file)))
            .ok_or_else(|| Error::Config(format!("no {file} given (set models or the model path)")))
    }

    pub fn load_models(&self) -> Result<TrainedModels> {
        let migration =
            EventClassifier::load(&self.model_path(&self.migration_model, MIGRATION_MODEL_FILE)?)?;
        let division =
            EventClassifier::load(&self.model_path(&self.division_model, DIVISION_MODEL_FILE)?)?;
        if migration.kind != EventKind::Migration || division.kind != EventKind::Division {
            return Err(Error::Config(
                "model files are swapped or of the wrong kind".into(),
            ));
        }
        let mut priors = match self
            .priors
            .clone()
            .or_else(|| self.models.as_ref().map(|d| d.join(PRIORS_FILE)))
        {
            Some(p) if p.exists() || self.priors.is_some() => read_json::<EventPriors>(&p)?,
            _ => EventPriors::default(),
        };
        if let Some(a) = self.rho_a {
            priors.rho_a = a;
        }
        if let Some(d) = self.rho_d {
            priors.rho_d = d;
        }
        Ok(TrainedModels {
            migration,
            division,
            priors,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.input.is_dir() {
            return Err(Error::Config(format!(
                "input directory {} does not exist",
                self.input.display()
            )));
        }
        if self.gate_distance.is_nan() || self.gate_distance <= 0.0 {
            return Err(Error::Config("gate_distance must be positive".into()));
        }
        if self.rel_gap.is_nan() || self.rel_gap < 0.0 {
            return Err(Error::Config("rel_gap must be non-negative".into()));
        }
        for (name, p) in [("rho_a", self.rho_a), ("rho_d", self.rho_d)] {
            if p.is_some_and(|p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Config(format!("{name} must be a probability")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModels {
    pub migration: EventClassifier,
    pub division: EventClassifier,
    pub priors: EventPriors,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Hypothesis graph of a mask sequence.
pub fn masks_to_graph(
    masks: &BTreeMap<u32, LabelMask>,
    hyp: &HypothesisConfig,
    gate: f64,
) -> TrackingGraph {
    let trees = sequence_hypotheses(masks, hyp);
    let mut g = build_graph(&trees, gate);
    // Frames without foreground still belong to the sequence.
    g.frames = masks.keys().copied().collect();
    g
}

pub fn cmd_hypotheses(input: &Path, output: &Path, hyp: &HypothesisConfig) -> Result<usize> {
    let masks = read_mask_dir(input)?;
    let trees = sequence_hypotheses(&masks, hyp);
    create_dir(output)?;
    write_hypotheses_jsonl(&output.join(HYPOTHESES_FILE), &trees)?;
    Ok(trees.values().flatten().map(|t| t.nodes.len()).sum())
}

/// Trains both classifiers from `{migration,division}.csv` in every sample
/// directory and derives priors from the summed `counts.json` files. Any
/// directory without counts leaves the priors at their defaults.
pub fn cmd_train(
    samples_dirs: &[PathBuf],
    output: &Path,
    params: &GbtParams,
) -> Result<TrainedModels> {
    if samples_dirs.is_empty() {
        return Err(Error::Config("no sample directories given".into()));
    }
    let mut mig = SampleSet::new(EventKind::Migration);
    let mut div = SampleSet::new(EventKind::Division);
    let mut counts = Some(EventCounts::default());
    for dir in samples_dirs {
        mig.extend(SampleSet::read_csv(
            EventKind::Migration,
            &dir.join("migration.csv"),
        )?);
        div.extend(SampleSet::read_csv(
            EventKind::Division,
            &dir.join("division.csv"),
        )?);
        let counts_path = dir.join(COUNTS_FILE);
        counts = match counts {
            Some(total) if counts_path.exists() => {
                let c: EventCounts = read_json(&counts_path)?;
                Some(EventCounts {
                    appearances: total.appearances + c.appearances,
                    disappearances: total.disappearances + c.disappearances,
                    divisions: total.divisions + c.divisions,
                    transitions: total.transitions + c.transitions,
                })
            }
            _ => None,
        };
    }
    let models = train_models(&mig, &div, counts.as_ref(), params)?;
    create_dir(output)?;
    models.migration.save(&output.join(MIGRATION_MODEL_FILE))?;
    models.division.save(&output.join(DIVISION_MODEL_FILE))?;
    write_json(&output.join(PRIORS_FILE), &models.priors)?;
    Ok(models)
}

pub fn train_models(
    mig: &SampleSet,
    div: &SampleSet,
    counts: Option<&EventCounts>,
    params: &GbtParams,
) -> Result<TrainedModels> {
    Ok(TrainedModels {
        migration: train_classifier(mig, params)?,
        division: train_classifier(div, params)?,
        priors: counts.map_or_else(EventPriors::default, priors_from_counts),
    })
}

/// Training samples of a sequence with ground truth.
pub fn sequence_samples(
    masks: &BTreeMap<u32, LabelMask>,
    gt: &LineageForest,
    hyp: &HypothesisConfig,
    gate: f64,
) -> (SampleSet, SampleSet, EventCounts) {
    let g = masks_to_graph(masks, hyp, gate);
    let labels = match_vertices(&g, gt, MATCH_IOU);
    let first = masks.keys().next().copied().unwrap_or(1);
    let last = masks.keys().next_back().copied().unwrap_or(1);
    (
        migration_samples(&g, &labels, gt),
        division_samples(&g, &labels, gt),
        count_events(gt, first, last),
    )
}

pub fn write_samples(
    dir: &Path,
    mig: &SampleSet,
    div: &SampleSet,
    counts: &EventCounts,
) -> Result<()> {
    create_dir(dir)?;
    mig.write_csv(&dir.join("migration.csv"))?;
    div.write_csv(&dir.join("division.csv"))?;
    write_json(&dir.join(COUNTS_FILE), counts)
}

/// Generates a sequence into `output`; with `samples`, also writes training
/// samples into `output/samples`.
pub fn cmd_synth(
    cfg: &SynthConfig,
    output: &Path,
    labels: bool,
    samples: bool,
) -> Result<SynthSequence> {
    let seq = generate(cfg)?;
    write_sequence(&seq, output, labels)?;
    if samples {
        let (m, d, c) = sequence_samples(
            &seq.masks,
            &seq.gt,
            &HypothesisConfig::default(),
            DEFAULT_GATE_DISTANCE,
        );
        write_samples(&output.join("samples"), &m, &d, &c)?;
    }
    Ok(seq)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverLog {
    pub mode: Mode,
    pub status: Option<SolveStatus>,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub vertices: usize,
    pub edges: usize,
    pub variables: usize,
    pub constraints: usize,
    pub size: ModelSize,
    pub tracks: usize,
    pub runtime_ms: u128,
}

#[derive(Debug, Clone)]
pub struct TrackOutcome {
    pub graph: TrackingGraph,
    pub model: IpModel,
    pub solution: FlowSolution,
    pub forest: LineageForest,
    pub log: SolverLog,
}

/// The model a mode solves.
pub fn mode_model(
    graph: &TrackingGraph,
    probs: &EventProbabilities,
    mode: Mode,
    priors: &EventPriors,
) -> Result<IpModel> {
    let m = match mode {
        Mode::NoConflict => ModelMode::NoConflict,
        Mode::FixedDivision(p) => ModelMode::FixedDivision(p.unwrap_or(priors.p_div)),
        _ => ModelMode::Full,
    };
    Ok(build_model(graph, probs, m)?)
}

/// Thresholds classifier outputs at one half without optimization. Edges
/// are accepted by decreasing probability while every vertex keeps at most
/// one predecessor and one successor (two when its division probability
/// exceeds one half); sources and sinks then balance each vertex.
pub fn classifier_only(
    graph: &TrackingGraph,
    probs: &EventProbabilities,
    model: &IpModel,
) -> FlowSolution {
    let mut order: Vec<usize> = (0..graph.num_edges())
        .filter(|&e| probs.migration[e] > 0.5)
        .collect();
    order.sort_by(|&a, &b| {
        probs.migration[b]
            .total_cmp(&probs.migration[a])
            .then(a.cmp(&b))
    });
    let n = graph.num_vertices();
    let mut ins = vec![0usize; n];
    let mut outs = vec![0usize; n];
    let mut x = vec![0.0; model.num_vars()];
    for e in order {
        let (i, j) = graph.edges[e];
        let cap = if probs.division[i] > 0.5 { 2 } else { 1 };
        if ins[j] == 0 && outs[i] < cap {
            ins[j] += 1;
            outs[i] += 1;
            x[e] = 1.0;
        }
    }
    for v in 0..n {
        if ins[v] + outs[v] == 0 {
            continue;
        }
        let app = (ins[v] == 0) as usize;
        let div = (outs[v] == 2) as usize;
        x[model.app_var(v)] = app as f64;
        x[model.div_var(v)] = div as f64;
        x[model.dis_var(v)] = (ins[v] + app + div - outs[v]) as f64;
    }
    let objective = model.objective(&x);
    FlowSolution {
        values: x,
        objective,
        status: SolveStatus::Optimal,
        bound: objective,
        gap: 0.0,
        nodes: 0,
        lp_iterations: 0,
    }
}

/// Runs one tracking variant on masks already in memory.
pub fn track_masks(
    masks: &BTreeMap<u32, LabelMask>,
    models: &TrainedModels,
    cfg: &TrackConfig,
) -> Result<TrackOutcome> {
    let start = Instant::now();
    let mut graph = masks_to_graph(masks, &cfg.hypothesis, cfg.gate_distance);
    if cfg.mode == Mode::BestHierarchy {
        graph = best_hierarchy_filter(&graph);
    }
    let probs = event_probabilities(&graph, &models.migration, &models.division, &models.priors);
    let model = mode_model(&graph, &probs, cfg.mode, &models.priors)?;
    let solution = match cfg.mode {
        Mode::ClassifierOnly => classifier_only(&graph, &probs, &model),
        Mode::LpRounding => round_lp(&model)?,
        _ => solve_bb(
            &model,
            &BbOptions {
                rel_gap: cfg.rel_gap,
                max_nodes: cfg.max_nodes,
            },
        ),
    };
    let forest = decode(&solution, &model, &graph)?;
    let size = model_size(&graph);
    let log = SolverLog {
        mode: cfg.mode,
        status: (cfg.mode != Mode::ClassifierOnly).then_some(solution.status),
        objective: solution.objective,
        bound: solution.bound,
        gap: solution.gap,
        nodes: solution.nodes,
        lp_iterations: solution.lp_iterations,
        vertices: graph.num_vertices(),
        edges: graph.num_edges(),
        variables: model.num_vars(),
        constraints: model.num_rows(),
        size,
        tracks: forest.tracks.len(),
        runtime_ms: start.elapsed().as_millis(),
    };
    Ok(TrackOutcome {
        graph,
        model,
        solution,
        forest,
        log,
    })
}

/// Reads masks and models, tracks, and writes tracks and the solver log.
pub fn cmd_track(cfg: &TrackConfig) -> Result<TrackOutcome> {
    cfg.validate()?;
    let models = cfg.load_models()?;
    let masks = read_mask_dir(&cfg.input)?;
    let out = track_masks(&masks, &models, cfg)?;
    create_dir(&cfg.output)?;
    write_tracks(&out.forest, &out.graph.frames, &cfg.output)?;
    write_json(&cfg.output.join(SOLVER_LOG_FILE), &out.log)?;
    Ok(out)
}

/// Scores `pred_dir` against the ground truth in `gt_dir`; masks are read
/// from `masks_dir` (defaults to `gt_dir`).
pub fn cmd_eval(
    pred_dir: &Path,
    gt_dir: &Path,
    masks_dir: Option<&Path>,
    radius: f64,
) -> Result<EvalReport> {
    let pred = read_tracks(pred_dir)?;
    let gt = read_ground_truth(gt_dir)?;
    let masks = read_mask_dir(masks_dir.unwrap_or(gt_dir))?;
    evaluate(&pred, &gt, &masks, radius)
}

pub fn evaluate(
    pred: &LineageForest,
    gt: &LineageForest,
    masks: &BTreeMap<u32, LabelMask>,
    radius: f64,
) -> Result<EvalReport> {
    let events = score_events(pred, gt, masks)?;
    Ok(EvalReport::new(events, score_mota(pred, gt, radius)))
}

pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    write_json(path, report)
}

/// Builds the model of `cfg.mode` and writes it in LP format.
pub fn cmd_export_lp(cfg: &TrackConfig, path: &Path) -> Result<IpModel> {
    cfg.validate()?;
    let models = cfg.load_models()?;
    let masks = read_mask_dir(&cfg.input)?;
    let mut graph = masks_to_graph(&masks, &cfg.hypothesis, cfg.gate_distance);
    if cfg.mode == Mode::BestHierarchy {
        graph = best_hierarchy_filter(&graph);
    }
    let probs = event_probabilities(&graph, &models.migration, &models.division, &models.priors);
    let model = mode_model(&graph, &probs, cfg.mode, &models.priors)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    fs::write(path, export_lp(&model)).map_err(|e| Error::io(path, e))?;
    Ok(model)
}
