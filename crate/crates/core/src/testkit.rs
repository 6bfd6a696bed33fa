//! Small random graphs, models and trained classifiers for randomized tests
//! and benchmarks.

use rand::Rng;
use rayon::prelude::*;

use crate::events::{EventCounts, GbtParams, SampleSet};
use crate::geometry::{Ellipse, Point2};
use crate::graph::DEFAULT_GATE_DISTANCE;
use crate::graph::{GraphTree, TrackingGraph, Vertex};
use crate::hypothesis::hierarchy::exclusion_sets_from_children;
use crate::hypothesis::HypothesisConfig;
use crate::ilp::EventProbabilities;
use crate::pipeline::{sequence_samples, train_models, TrainedModels};
use crate::synth::{generate, SynthConfig};

/// Shape of one hierarchy: leaf count and merge sequence over node ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSpec {
    pub frame: u32,
    pub leaves: usize,
    /// `merges[k]` joins two live nodes into node `leaves + k`.
    pub merges: Vec<(usize, usize)>,
    pub centroid: Point2,
}

impl TreeSpec {
    pub fn single(frame: u32, x: f64) -> Self {
        Self {
            frame,
            leaves: 1,
            merges: Vec::new(),
            centroid: Point2::new(x, 0.0),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.leaves + self.merges.len()
    }
}

/// Assembles a graph from tree shapes; `edges` are given on global vertex ids
/// (trees are laid out in the given order, nodes in id order).
pub fn graph_from_specs(specs: &[TreeSpec], edges: Vec<(usize, usize)>) -> TrackingGraph {
    let mut vertices = Vec::new();
    let mut trees = Vec::new();
    let mut exclusion_sets = Vec::new();
    let mut frames: Vec<u32> = specs.iter().map(|s| s.frame).collect();
    frames.sort_unstable();
    frames.dedup();
    for (t, s) in specs.iter().enumerate() {
        let base = vertices.len();
        let nn = s.num_nodes();
        let mut parent = vec![None; nn];
        let mut children = vec![Vec::new(); nn];
        for (k, &(a, b)) in s.merges.iter().enumerate() {
            let id = s.leaves + k;
            parent[a] = Some(id);
            parent[b] = Some(id);
            children[id] = vec![a, b];
        }
        for id in 0..nn {
            vertices.push(Vertex {
                id: base + id,
                frame: s.frame,
                ellipse: Ellipse::new(s.centroid.x + id as f64, s.centroid.y, 6.0, 5.0, 0.0),
                component_id: t,
                node_id: id,
                fit_error: 0.1 * id as f64,
                tree: t,
                parent: parent[id].map(|p| base + p),
                leaf: children[id].is_empty(),
            });
        }
        let root = nn - 1;
        exclusion_sets.extend(
            exclusion_sets_from_children(&children, root)
                .into_iter()
                .map(|p| p.into_iter().map(|v| base + v).collect::<Vec<_>>()),
        );
        let levels = (0..s.leaves)
            .map(|k| {
                let limit = s.leaves + k;
                (0..limit)
                    .filter(|&id| parent[id].is_none_or(|p| p >= limit))
                    .map(|id| base + id)
                    .collect()
            })
            .collect();
        trees.push(GraphTree {
            frame: s.frame,
            component_id: t,
            centroid: s.centroid,
            vertices: (base..base + nn).collect(),
            levels,
        });
    }
    TrackingGraph::from_parts(frames, vertices, edges, exclusion_sets, trees)
}

/// One single-node hierarchy per cell, `counts[t]` cells in frame `t + 1`,
/// and every cross-frame pair linked.
pub fn chain_graph(counts: &[usize]) -> TrackingGraph {
    let mut specs = Vec::new();
    for (t, &c) in counts.iter().enumerate() {
        for k in 0..c {
            specs.push(TreeSpec::single(t as u32 + 1, 20.0 * k as f64));
        }
    }
    let edges = all_forward_edges(&specs);
    graph_from_specs(&specs, edges)
}

fn all_forward_edges(specs: &[TreeSpec]) -> Vec<(usize, usize)> {
    let mut bases = Vec::new();
    let mut b = 0;
    for s in specs {
        bases.push(b);
        b += s.num_nodes();
    }
    let mut edges = Vec::new();
    for (a, sa) in specs.iter().enumerate() {
        for (c, sc) in specs.iter().enumerate() {
            if sc.frame == sa.frame + 1 {
                for i in 0..sa.num_nodes() {
                    for j in 0..sc.num_nodes() {
                        edges.push((bases[a] + i, bases[c] + j));
                    }
                }
            }
        }
    }
    edges
}

pub fn uniform_probs(g: &TrackingGraph, p: f64) -> EventProbabilities {
    EventProbabilities {
        migration: vec![p; g.num_edges()],
        division: vec![p; g.num_vertices()],
        appearance: p,
        disappearance: p,
    }
}

fn random_tree<R: Rng>(rng: &mut R, frame: u32, leaves: usize, x: f64) -> TreeSpec {
    let mut live: Vec<usize> = (0..leaves).collect();
    let mut merges = Vec::new();
    while live.len() > 1 {
        let a = live.remove(rng.random_range(0..live.len()));
        let b = live.remove(rng.random_range(0..live.len()));
        let id = leaves + merges.len();
        merges.push((a.min(b), a.max(b)));
        live.push(id);
    }
    TreeSpec {
        frame,
        leaves,
        merges,
        centroid: Point2::new(x, 0.0),
    }
}

/// Random graph with at most `max_vertices` vertices and at most `max_vars`
/// model variables (`3N + |E|`). Frames hold one or two hierarchies of up to
/// three leaves; migration edges are a random subset of forward pairs.
pub fn random_graph<R: Rng>(rng: &mut R, max_vertices: usize, max_vars: usize) -> TrackingGraph {
    assert!(max_vertices >= 1 && max_vars >= 3);
    let vertex_cap = max_vertices.min(max_vars / 3);
    let frames = rng.random_range(1..=4u32);
    let mut specs = Vec::new();
    let mut count = 0;
    'outer: for f in 1..=frames {
        for k in 0..rng.random_range(1..=2usize) {
            let leaves = rng.random_range(1..=3usize);
            let nodes = 2 * leaves - 1;
            if count + nodes > vertex_cap {
                if count == 0 {
                    specs.push(TreeSpec::single(f, 0.0));
                }
                break 'outer;
            }
            count += nodes;
            specs.push(random_tree(rng, f, leaves, 30.0 * k as f64));
        }
    }
    let mut edges = all_forward_edges(&specs);
    let keep_p: f64 = rng.random_range(0.2..0.9);
    edges.retain(|_| rng.random_bool(keep_p));
    let n: usize = specs.iter().map(|s| s.num_nodes()).sum();
    while 3 * n + edges.len() > max_vars {
        edges.remove(rng.random_range(0..edges.len()));
    }
    graph_from_specs(&specs, edges)
}

/// Probabilities drawn uniformly from `(0.02, 0.98)`.
pub fn random_probs<R: Rng>(rng: &mut R, g: &TrackingGraph) -> EventProbabilities {
    let mut p = || rng.random_range(0.02..0.98);
    EventProbabilities {
        migration: (0..g.num_edges()).map(|_| p()).collect(),
        division: (0..g.num_vertices()).map(|_| p()).collect(),
        appearance: p(),
        disappearance: p(),
    }
}

/// Division probability of the synthetic training sequences; higher than
/// the test sequences' so the division classifier sees enough positives.
pub const TRAINING_DIVISION_PROB: f64 = 0.08;

/// Models trained on sequences drawn like `base` but with the given seeds
/// and [`TRAINING_DIVISION_PROB`].
pub fn train_synthetic(base: &SynthConfig, seeds: &[u64]) -> TrainedModels {
    let parts: Vec<(SampleSet, SampleSet, EventCounts)> = seeds
        .par_iter()
        .map(|&seed| {
            let seq = generate(&SynthConfig {
                seed,
                division_prob: TRAINING_DIVISION_PROB,
                ..base.clone()
            })
            .expect("valid synthetic config");
            sequence_samples(
                &seq.masks,
                &seq.gt,
                &HypothesisConfig::default(),
                DEFAULT_GATE_DISTANCE,
            )
        })
        .collect();
    let mut mig = SampleSet::new(crate::events::EventKind::Migration);
    let mut div = SampleSet::new(crate::events::EventKind::Division);
    let mut counts = EventCounts::default();
    for (m, d, c) in parts {
        mig.extend(m);
        div.extend(d);
        counts.appearances += c.appearances;
        counts.disappearances += c.disappearances;
        counts.divisions += c.divisions;
        counts.transitions += c.transitions;
    }
    train_models(&mig, &div, Some(&counts), &GbtParams::default()).expect("both classes present")
}
