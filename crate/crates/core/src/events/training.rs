//! Labeled samples from a hypothesis graph and a ground-truth forest.

use std::collections::BTreeMap;

use crate::geometry::ellipse_overlap;
use crate::graph::TrackingGraph;
use crate::lineage::LineageForest;

use super::{daughter_pairs, division_features, edge_migration_features, EventKind, SampleSet};

pub const MATCH_IOU: f64 = 0.5;

/// Ground-truth track of each vertex: one-to-one per frame, greedily by
/// decreasing overlap (ties by vertex id, then track id), requiring
/// overlap `>= min_iou`.
pub fn match_vertices(graph: &TrackingGraph, gt: &LineageForest, min_iou: f64) -> Vec<Option<u32>> {
    let mut label = vec![None; graph.num_vertices()];
    for &f in &graph.frames {
        let cells = gt.cells_at(f);
        let mut cand: Vec<(f64, usize, u32)> = Vec::new();
        for v in graph.vertices_in_frame(f) {
            for (id, e) in &cells {
                let iou = ellipse_overlap(&v.ellipse, e);
                if iou >= min_iou {
                    cand.push((iou, v.id, *id));
                }
            }
        }
        cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used: BTreeMap<u32, ()> = BTreeMap::new();
        for (_, v, id) in cand {
            if label[v].is_none() && !used.contains_key(&id) {
                label[v] = Some(id);
                used.insert(id, ());
            }
        }
    }
    label
}

/// One sample per migration edge; positive when the edge carries flow in
/// the ground truth: both ends match the same track, or the ends match a
/// dividing track in its last frame and one of its daughters.
pub fn migration_samples(
    graph: &TrackingGraph,
    labels: &[Option<u32>],
    gt: &LineageForest,
) -> SampleSet {
    let mut s = SampleSet::new(EventKind::Migration);
    for (e, &(i, j)) in graph.edges.iter().enumerate() {
        let pos = match (labels[i], labels[j]) {
            (Some(a), Some(b)) if a == b => true,
            (Some(a), Some(b)) => gt
                .track(b)
                .is_some_and(|t| t.parent == Some(a) && t.start == graph.vertices[j].frame),
            _ => false,
        };
        s.push(edge_migration_features(graph, e), pos);
    }
    s
}

/// One sample per compatible daughter pair of every vertex; positive when
/// the vertex matches a dividing cell in its last frame and the pair matches
/// both daughters.
pub fn division_samples(
    graph: &TrackingGraph,
    labels: &[Option<u32>],
    gt: &LineageForest,
) -> SampleSet {
    let mut s = SampleSet::new(EventKind::Division);
    for v in 0..graph.num_vertices() {
        let mother = labels[v]
            .and_then(|id| gt.track(id))
            .filter(|t| t.divided && t.end == graph.vertices[v].frame);
        let mut kids = mother.map(|t| gt.children(t.id)).unwrap_or_default();
        kids.sort_unstable();
        for (k, l) in daughter_pairs(graph, v) {
            let pos = match (labels[k], labels[l]) {
                (Some(a), Some(b)) if kids.len() == 2 => {
                    let mut pair = [a, b];
                    pair.sort_unstable();
                    pair[..] == kids[..]
                }
                _ => false,
            };
            let f = division_features(
                &graph.vertices[v].ellipse,
                &graph.vertices[k].ellipse,
                &graph.vertices[l].ellipse,
            );
            s.push(f, pos);
        }
    }
    s
}
