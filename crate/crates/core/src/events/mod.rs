//! Event probabilities: features, boosted stumps, Platt calibration and
//! priors.

pub mod features;
pub mod gbt;
pub mod platt;
pub mod priors;
pub mod training;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, EventsError};
use crate::geometry::Ellipse;
use crate::graph::TrackingGraph;
use crate::ilp::EventProbabilities;

pub use features::{
    division_features, migration_features, DIVISION_FEATURES, FEATURE_SCHEMA_VERSION,
    MIGRATION_FEATURES,
};
pub use gbt::{train_gbt, GbtModel, GbtParams, Stump};
pub use platt::{fit_platt, PlattScaler};
pub use priors::{count_events, estimate_priors, EventCounts, EventPriors};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Migration,
    Division,
}

impl EventKind {
    pub fn feature_names(self) -> &'static [&'static str] {
        match self {
            EventKind::Migration => &MIGRATION_FEATURES,
            EventKind::Division => &DIVISION_FEATURES,
        }
    }
}

/// Labeled feature vectors, labels `+1`/`-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub kind: EventKind,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl SampleSet {
    pub fn new(kind: EventKind) -> Self {
        Self {
            kind,
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn push(&mut self, features: Vec<f64>, positive: bool) {
        self.x.push(features);
        self.y.push(if positive { 1.0 } else { -1.0 });
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn extend(&mut self, other: SampleSet) {
        self.x.extend(other.x);
        self.y.extend(other.y);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.kind.feature_names().join(",");
        s.push_str(",label\n");
        for (xi, &yi) in self.x.iter().zip(&self.y) {
            for v in xi {
                let _ = write!(s, "{v},");
            }
            let _ = writeln!(s, "{}", yi as i32);
        }
        s
    }

    /// Parses a CSV whose header names the features of `kind` followed by
    /// `label`. Labels `1` are positive; `0` and `-1` negative.
    pub fn from_csv(kind: EventKind, text: &str) -> Result<Self, EventsError> {
        let mut lines = text.lines().enumerate();
        let names = kind.feature_names();
        let header: Vec<&str> = match lines.next() {
            Some((_, h)) => h.split(',').map(str::trim).collect(),
            None => return Err(EventsError::Empty),
        };
        if header.len() != names.len() + 1
            || header[..names.len()] != *names
            || header[names.len()] != "label"
        {
            return Err(EventsError::Csv {
                line: 1,
                reason: format!("header does not match the {kind:?} feature schema"),
            });
        }
        let mut set = SampleSet::new(kind);
        for (k, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| EventsError::Csv {
                line: k + 1,
                reason,
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != header.len() {
                return Err(EventsError::Schema {
                    expected: names.len(),
                    got: fields.len().saturating_sub(1),
                });
            }
            let mut x = Vec::with_capacity(names.len());
            for f in &fields[..names.len()] {
                let v: f64 = f.parse().map_err(|_| bad(format!("not a number: {f:?}")))?;
                if !v.is_finite() {
                    return Err(bad(format!("non-finite feature {f:?}")));
                }
                x.push(v);
            }
            let label = match fields[names.len()] {
                "1" | "+1" => true,
                "0" | "-1" => false,
                other => return Err(bad(format!("bad label {other:?}"))),
            };
            set.push(x, label);
        }
        if set.is_empty() {
            return Err(EventsError::Empty);
        }
        Ok(set)
    }

    pub fn read_csv(kind: EventKind, path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_csv(kind, &text)?)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), Error> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// A boosted scorer with its calibration, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventClassifier {
    pub schema_version: u32,
    pub feature_schema: u32,
    pub kind: EventKind,
    pub feature_names: Vec<String>,
    pub gbt: GbtModel,
    pub platt: PlattScaler,
}

impl EventClassifier {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.gbt.score(x)
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        self.platt.probability(self.gbt.score(x))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Json {
            path: "<model>".into(),
            source: e,
        })?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .unwrap_or(0) as u32;
        if found != MODEL_SCHEMA_VERSION {
            return Err(EventsError::ModelVersion {
                expected: MODEL_SCHEMA_VERSION,
                found,
            }
            .into());
        }
        let model: EventClassifier = serde_json::from_value(value).map_err(|e| Error::Json {
            path: "<model>".into(),
            source: e,
        })?;
        if model.feature_schema != FEATURE_SCHEMA_VERSION
            || model.gbt.num_features != model.kind.feature_names().len()
        {
            return Err(EventsError::Schema {
                expected: model.kind.feature_names().len(),
                got: model.gbt.num_features,
            }
            .into());
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::Json {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Boosts stumps on the samples, then calibrates their training scores.
pub fn train_classifier(
    samples: &SampleSet,
    params: &GbtParams,
) -> Result<EventClassifier, EventsError> {
    let gbt = train_gbt(&samples.x, &samples.y, params)?;
    let scores: Vec<f64> = samples.x.iter().map(|x| gbt.score(x)).collect();
    let platt = fit_platt(&scores, &samples.y)?;
    Ok(EventClassifier {
        schema_version: MODEL_SCHEMA_VERSION,
        feature_schema: FEATURE_SCHEMA_VERSION,
        kind: samples.kind,
        feature_names: samples
            .kind
            .feature_names()
            .iter()
            .map(|s| s.to_string())
            .collect(),
        gbt,
        platt,
    })
}

/// Best raw division score of `mother` over unordered pairs of
/// `successors`; `None` with fewer than two successors.
pub fn division_score(mother: &Ellipse, successors: &[Ellipse], model: &GbtModel) -> Option<f64> {
    let mut best: Option<f64> = None;
    for k in 0..successors.len() {
        for l in k + 1..successors.len() {
            let s = model.score(&division_features(mother, &successors[k], &successors[l]));
            best = Some(best.map_or(s, |b: f64| b.max(s)));
        }
    }
    best
}

/// Successor pairs of `v` that may both be cells (different hierarchy paths).
pub fn daughter_pairs(graph: &TrackingGraph, v: usize) -> Vec<(usize, usize)> {
    let succ: Vec<usize> = graph.successors(v).collect();
    let mut pairs = Vec::new();
    for (i, &k) in succ.iter().enumerate() {
        for &l in &succ[i + 1..] {
            if !graph.conflicting(k, l) {
                pairs.push((k.min(l), k.max(l)));
            }
        }
    }
    pairs
}

/// Division score of vertex `v` over compatible daughter pairs.
pub fn vertex_division_score(graph: &TrackingGraph, v: usize, model: &GbtModel) -> Option<f64> {
    let mother = &graph.vertices[v].ellipse;
    daughter_pairs(graph, v)
        .into_iter()
        .map(|(k, l)| {
            model.score(&division_features(
                mother,
                &graph.vertices[k].ellipse,
                &graph.vertices[l].ellipse,
            ))
        })
        .reduce(f64::max)
}

pub fn edge_migration_features(graph: &TrackingGraph, e: usize) -> Vec<f64> {
    let (i, j) = graph.edges[e];
    let (vi, vj) = (&graph.vertices[i], &graph.vertices[j]);
    migration_features(&vi.ellipse, &vj.ellipse, vi.fit_error, vj.fit_error)
}

/// Probabilities for every graph event. Vertices without a compatible
/// daughter pair get division probability 0.
pub fn event_probabilities(
    graph: &TrackingGraph,
    migration: &EventClassifier,
    division: &EventClassifier,
    priors: &EventPriors,
) -> EventProbabilities {
    let mig = (0..graph.num_edges())
        .into_par_iter()
        .map(|e| migration.probability(&edge_migration_features(graph, e)))
        .collect();
    let div = (0..graph.num_vertices())
        .into_par_iter()
        .map(|v| {
            vertex_division_score(graph, v, &division.gbt)
                .map_or(0.0, |s| division.platt.probability(s))
        })
        .collect();
    EventProbabilities {
        migration: mig,
        division: div,
        appearance: priors.rho_a,
        disappearance: priors.rho_d,
    }
}
