//! Spatio-temporal graph over ellipse hypotheses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{Ellipse, Point2};
use crate::hypothesis::HierarchyTree;

pub const DEFAULT_GATE_DISTANCE: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    pub frame: u32,
    pub ellipse: Ellipse,
    pub component_id: usize,
    /// Node id inside the owning hierarchy.
    pub node_id: usize,
    pub fit_error: f64,
    /// Index into [`TrackingGraph::trees`].
    pub tree: usize,
    /// Vertex of the parent hierarchy node, if still present.
    pub parent: Option<usize>,
    pub leaf: bool,
}

/// Per-hierarchy bookkeeping kept in the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphTree {
    pub frame: u32,
    pub component_id: usize,
    pub centroid: Point2,
    /// Member vertices in node order.
    pub vertices: Vec<usize>,
    /// Level cuts as vertex ids, finest first.
    pub levels: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "GraphDocument", into = "GraphDocument")]
pub struct TrackingGraph {
    pub vertices: Vec<Vertex>,
    /// Migration edges `(i, j)`, sorted, with `frame(j) = frame(i) + 1`.
    pub edges: Vec<(usize, usize)>,
    pub exclusion_sets: Vec<Vec<usize>>,
    pub trees: Vec<GraphTree>,
    /// Frames of the sequence, ascending (including empty ones).
    pub frames: Vec<u32>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GraphDocument {
    frames: Vec<u32>,
    vertices: Vec<Vertex>,
    edges: Vec<(usize, usize)>,
    exclusion_sets: Vec<Vec<usize>>,
    trees: Vec<GraphTree>,
}

impl From<GraphDocument> for TrackingGraph {
    fn from(d: GraphDocument) -> Self {
        TrackingGraph::from_parts(d.frames, d.vertices, d.edges, d.exclusion_sets, d.trees)
    }
}

impl From<TrackingGraph> for GraphDocument {
    fn from(g: TrackingGraph) -> Self {
        GraphDocument {
            frames: g.frames,
            vertices: g.vertices,
            edges: g.edges,
            exclusion_sets: g.exclusion_sets,
            trees: g.trees,
        }
    }
}

impl TrackingGraph {
    pub fn from_parts(
        frames: Vec<u32>,
        vertices: Vec<Vertex>,
        mut edges: Vec<(usize, usize)>,
        exclusion_sets: Vec<Vec<usize>>,
        trees: Vec<GraphTree>,
    ) -> Self {
        edges.sort_unstable();
        edges.dedup();
        let n = vertices.len();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for (e, &(i, j)) in edges.iter().enumerate() {
            out_edges[i].push(e);
            in_edges[j].push(e);
        }
        Self {
            vertices,
            edges,
            exclusion_sets,
            trees,
            frames,
            out_edges,
            in_edges,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    /// Migration edge ids leaving `v`, ascending by target.
    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_edges[v]
    }

    /// Migration edge ids entering `v`, ascending by source.
    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.in_edges[v]
    }

    pub fn successors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.out_edges[v].iter().map(|&e| self.edges[e].1)
    }

    pub fn predecessors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.in_edges[v].iter().map(|&e| self.edges[e].0)
    }

    pub fn edge_id(&self, i: usize, j: usize) -> Option<usize> {
        self.out_edges[i]
            .iter()
            .copied()
            .find(|&e| self.edges[e].1 == j)
    }

    /// Exclusion-set indices containing each vertex.
    pub fn exclusion_membership(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.vertices.len()];
        for (l, set) in self.exclusion_sets.iter().enumerate() {
            for &v in set {
                m[v].push(l);
            }
        }
        m
    }

    /// Whether `u` and `v` share an exclusion set.
    pub fn conflicting(&self, u: usize, v: usize) -> bool {
        let (vu, vv) = (&self.vertices[u], &self.vertices[v]);
        if vu.tree != vv.tree {
            return false;
        }
        self.exclusion_sets
            .iter()
            .any(|s| s.contains(&u) && s.contains(&v))
    }

    pub fn vertices_in_frame(&self, frame: u32) -> impl Iterator<Item = &Vertex> {
        self.vertices.iter().filter(move |v| v.frame == frame)
    }
}

/// Builds the graph from per-frame hierarchies. Frames absent from the map
/// are not part of the sequence; frames with an empty list are.
pub fn build_graph(
    hierarchies: &BTreeMap<u32, Vec<HierarchyTree>>,
    gate_distance: f64,
) -> TrackingGraph {
    let mut vertices = Vec::new();
    let mut trees = Vec::new();
    let mut exclusion_sets = Vec::new();
    for (&frame, frame_trees) in hierarchies {
        for t in frame_trees {
            let tree_idx = trees.len();
            let base = vertices.len();
            for node in &t.nodes {
                vertices.push(Vertex {
                    id: base + node.id,
                    frame,
                    ellipse: node.ellipse,
                    component_id: t.component_id,
                    node_id: node.id,
                    fit_error: node.fit_error,
                    tree: tree_idx,
                    parent: node.parent.map(|p| base + p),
                    leaf: node.is_leaf(),
                });
            }
            exclusion_sets.extend(
                t.exclusion_sets()
                    .into_iter()
                    .map(|s| s.into_iter().map(|n| base + n).collect::<Vec<_>>()),
            );
            trees.push(GraphTree {
                frame,
                component_id: t.component_id,
                centroid: t.component_centroid,
                vertices: (base..base + t.nodes.len()).collect(),
                levels: t
                    .level_cuts()
                    .into_iter()
                    .map(|c| c.into_iter().map(|n| base + n).collect())
                    .collect(),
            });
        }
    }

    let mut edges = Vec::new();
    for (ta, a) in trees.iter().enumerate() {
        for b in trees.iter().skip(ta + 1) {
            if b.frame != a.frame + 1 || a.centroid.distance(&b.centroid) > gate_distance {
                continue;
            }
            for &i in &a.vertices {
                for &j in &b.vertices {
                    edges.push((i, j));
                }
            }
        }
    }
    TrackingGraph::from_parts(
        hierarchies.keys().copied().collect(),
        vertices,
        edges,
        exclusion_sets,
        trees,
    )
}

/// Keeps, per hierarchy, only the level cut with minimal mean fit error
/// (ties to fewer clusters). Surviving vertices are renumbered in order and
/// every exclusion set becomes a singleton.
pub fn best_hierarchy_filter(graph: &TrackingGraph) -> TrackingGraph {
    let mut keep = vec![false; graph.num_vertices()];
    for t in &graph.trees {
        let mut best: Option<(f64, &Vec<usize>)> = None;
        for cut in t.levels.iter().rev() {
            let err = cut
                .iter()
                .map(|&v| graph.vertices[v].fit_error)
                .sum::<f64>()
                / cut.len() as f64;
            if best.is_none_or(|(b, _)| err < b) {
                best = Some((err, cut));
            }
        }
        if let Some((_, cut)) = best {
            for &v in cut {
                keep[v] = true;
            }
        }
    }
    let mut remap = vec![usize::MAX; graph.num_vertices()];
    let mut vertices = Vec::new();
    for v in &graph.vertices {
        if keep[v.id] {
            remap[v.id] = vertices.len();
            vertices.push(Vertex {
                id: vertices.len(),
                parent: None,
                leaf: true,
                ..v.clone()
            });
        }
    }
    let edges = graph
        .edges
        .iter()
        .filter(|&&(i, j)| keep[i] && keep[j])
        .map(|&(i, j)| (remap[i], remap[j]))
        .collect();
    let exclusion_sets = (0..vertices.len()).map(|v| vec![v]).collect();
    let trees = graph
        .trees
        .iter()
        .map(|t| {
            let members: Vec<usize> = t
                .vertices
                .iter()
                .filter(|&&v| keep[v])
                .map(|&v| remap[v])
                .collect();
            GraphTree {
                levels: vec![members.clone()],
                vertices: members,
                ..t.clone()
            }
        })
        .collect();
    TrackingGraph::from_parts(graph.frames.clone(), vertices, edges, exclusion_sets, trees)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSize {
    pub n: usize,
    pub c: usize,
    /// Mean migration out-degree.
    pub k: f64,
    pub num_vars: usize,
    pub num_constraints: usize,
}

pub fn model_size(graph: &TrackingGraph) -> ModelSize {
    let n = graph.num_vertices();
    let e = graph.num_edges();
    let c = graph.exclusion_sets.len();
    ModelSize {
        n,
        c,
        k: if n == 0 { 0.0 } else { e as f64 / n as f64 },
        num_vars: 3 * n + e,
        num_constraints: c + 2 * n,
    }
}
