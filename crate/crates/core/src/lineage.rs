//! Tracks with division links, decoded from binary flows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, LineageError};
use crate::geometry::Ellipse;
use crate::graph::TrackingGraph;
use crate::ilp::{FlowSolution, IpModel};

pub const RESULT_TRACK_FILE: &str = "res_track.txt";
pub const RESULT_ELLIPSE_PREFIX: &str = "ellipses";
pub const GT_TRACK_FILE: &str = "gt_track.txt";
pub const GT_ELLIPSE_PREFIX: &str = "gt_ellipses";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    /// Positive label.
    pub id: u32,
    pub parent: Option<u32>,
    pub start: u32,
    pub end: u32,
    /// Ended by a division (even if a daughter left the sequence at once).
    pub divided: bool,
    /// Graph vertex per frame; empty for tracks not tied to a graph.
    pub vertices: Vec<usize>,
    /// Ellipse per frame from `start` to `end`.
    pub ellipses: Vec<Ellipse>,
}

impl Track {
    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ellipse_at(&self, frame: u32) -> Option<&Ellipse> {
        if frame < self.start || frame > self.end {
            return None;
        }
        self.ellipses.get((frame - self.start) as usize)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LineageForest {
    /// Sorted by id.
    pub tracks: Vec<Track>,
}

impl LineageForest {
    pub fn track(&self, id: u32) -> Option<&Track> {
        self.tracks
            .binary_search_by_key(&id, |t| t.id)
            .ok()
            .map(|i| &self.tracks[i])
    }

    pub fn children(&self, id: u32) -> Vec<u32> {
        self.tracks
            .iter()
            .filter(|t| t.parent == Some(id))
            .map(|t| t.id)
            .collect()
    }

    /// `(track id, ellipse)` for every track alive at `frame`.
    pub fn cells_at(&self, frame: u32) -> Vec<(u32, Ellipse)> {
        self.tracks
            .iter()
            .filter_map(|t| t.ellipse_at(frame).map(|e| (t.id, *e)))
            .collect()
    }

    /// Structural problems: non-contiguous frames, parents not ending right
    /// before their children start, or parents with other than two children.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for t in &self.tracks {
            if t.end < t.start || t.ellipses.len() != t.len() {
                problems.push(format!(
                    "track {}: frames {}..{} with {} ellipses",
                    t.id,
                    t.start,
                    t.end,
                    t.ellipses.len()
                ));
            }
            if let Some(p) = t.parent {
                match self.track(p) {
                    None => problems.push(format!("track {}: missing parent {p}", t.id)),
                    Some(pt) if pt.end + 1 != t.start => {
                        problems.push(format!("track {}: parent {p} ends at {}", t.id, pt.end))
                    }
                    Some(_) => {}
                }
            }
        }
        for t in &self.tracks {
            let n = self.children(t.id).len();
            if n != 0 && n != 2 {
                problems.push(format!("track {}: {n} children", t.id));
            }
        }
        problems
    }
}

/// Decodes a binary flow. Vertices are visited by frame; at each vertex the
/// arriving units (predecessor edges by source id, then the source) are
/// paired in order with the leaving units (edges by target id, then the
/// sink). With a division the first arriving track ends there and the first
/// two leaving units start its daughters.
pub fn decode(
    sol: &FlowSolution,
    model: &IpModel,
    graph: &TrackingGraph,
) -> Result<LineageForest, LineageError> {
    let x = &sol.values;
    for (j, &v) in x.iter().enumerate() {
        if v != 0.0 && v != 1.0 {
            return Err(LineageError::NotBinary(j));
        }
    }
    let on = |j: usize| x[j] == 1.0;

    struct Draft {
        parent: Option<usize>,
        start_vertex: usize,
        vertices: Vec<usize>,
        divided: bool,
    }
    let mut drafts: Vec<Draft> = Vec::new();
    // Track carried by each active migration edge.
    let mut edge_track: Vec<Option<usize>> = vec![None; graph.num_edges()];
    // Daughters whose first vertex is the target of an edge.
    let mut order: Vec<usize> = (0..graph.num_vertices()).collect();
    order.sort_by_key(|&v| (graph.vertices[v].frame, v));

    for &v in &order {
        let mut arriving: Vec<usize> = Vec::new();
        for &e in graph.in_edges(v) {
            if on(e) {
                arriving.push(edge_track[e].expect("edges are decoded in frame order"));
            }
        }
        if on(model.app_var(v)) {
            drafts.push(Draft {
                parent: None,
                start_vertex: v,
                vertices: Vec::new(),
                divided: false,
            });
            arriving.push(drafts.len() - 1);
        }
        let division = on(model.div_var(v));
        let mut leaving: Vec<Option<usize>> = graph
            .out_edges(v)
            .iter()
            .copied()
            .filter(|&e| on(e))
            .map(Some)
            .collect();
        if on(model.dis_var(v)) {
            leaving.push(None);
        }
        let inflow = arriving.len() + division as usize;
        if inflow != leaving.len() || (division && arriving.is_empty()) {
            return Err(LineageError::InfeasibleFlow {
                vertex: v,
                inflow,
                outflow: leaving.len(),
            });
        }
        for &t in &arriving {
            drafts[t].vertices.push(v);
        }
        let mut leaving = leaving.into_iter();
        let mut arriving = arriving.into_iter();
        if division {
            let mother = arriving.next().expect("checked above");
            drafts[mother].divided = true;
            for e in leaving.by_ref().take(2).flatten() {
                drafts.push(Draft {
                    parent: Some(mother),
                    start_vertex: graph.edges[e].1,
                    vertices: Vec::new(),
                    divided: false,
                });
                edge_track[e] = Some(drafts.len() - 1);
            }
        }
        for (t, unit) in arriving.zip(leaving) {
            if let Some(e) = unit {
                edge_track[e] = Some(t);
            }
        }
    }

    let mut idx: Vec<usize> = (0..drafts.len()).collect();
    idx.sort_by_key(|&k| {
        (
            graph.vertices[drafts[k].start_vertex].frame,
            drafts[k].start_vertex,
            k,
        )
    });
    let mut label = vec![0u32; drafts.len()];
    for (rank, &k) in idx.iter().enumerate() {
        label[k] = rank as u32 + 1;
    }
    let tracks = idx
        .iter()
        .map(|&k| {
            let d = &drafts[k];
            let frames: Vec<u32> = d
                .vertices
                .iter()
                .map(|&v| graph.vertices[v].frame)
                .collect();
            Track {
                id: label[k],
                parent: d.parent.map(|p| label[p]),
                start: frames[0],
                end: *frames.last().unwrap(),
                divided: d.divided,
                vertices: d.vertices.clone(),
                ellipses: d
                    .vertices
                    .iter()
                    .map(|&v| graph.vertices[v].ellipse)
                    .collect(),
            }
        })
        .collect();
    Ok(LineageForest { tracks })
}

/// Flow values of a graph-backed forest; the inverse of [`decode`].
pub fn encode(forest: &LineageForest, model: &IpModel, graph: &TrackingGraph) -> Vec<f64> {
    let mut x = vec![0.0; model.num_vars()];
    let mut children: BTreeMap<u32, usize> = BTreeMap::new();
    for t in &forest.tracks {
        if let Some(p) = t.parent {
            *children.entry(p).or_default() += 1;
        }
    }
    for t in &forest.tracks {
        let first = t.vertices[0];
        match t.parent.and_then(|p| forest.track(p)) {
            Some(pt) => {
                let from = *pt.vertices.last().unwrap();
                let e = graph
                    .edge_id(from, first)
                    .expect("daughter linked by an edge");
                x[e] += 1.0;
            }
            None => x[model.app_var(first)] += 1.0,
        }
        for w in t.vertices.windows(2) {
            let e = graph
                .edge_id(w[0], w[1])
                .expect("consecutive vertices linked");
            x[e] += 1.0;
        }
        let last = *t.vertices.last().unwrap();
        if t.divided {
            x[model.div_var(last)] += 1.0;
            let kids = children.get(&t.id).copied().unwrap_or(0);
            x[model.dis_var(last)] += 2usize.saturating_sub(kids) as f64;
        } else {
            x[model.dis_var(last)] += 1.0;
        }
    }
    x
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn ellipse_file_name(prefix: &str, frame: u32) -> String {
    format!("{prefix}_t{frame:04}.csv")
}

/// Track table, one `L B E P` line per track.
pub fn track_table(forest: &LineageForest) -> String {
    let mut s = String::new();
    for t in &forest.tracks {
        let _ = writeln!(
            s,
            "{} {} {} {}",
            t.id,
            t.start,
            t.end,
            t.parent.unwrap_or(0)
        );
    }
    s
}

pub fn ellipse_table(forest: &LineageForest, frame: u32) -> String {
    let mut s = String::from("track,cx,cy,a,b,theta\n");
    for (id, e) in forest.cells_at(frame) {
        let _ = writeln!(s, "{id},{},{},{},{},{}", e.cx, e.cy, e.a, e.b, e.theta);
    }
    s
}

/// Writes the track table and one ellipse table per frame of `frames`.
pub fn write_forest(
    forest: &LineageForest,
    frames: &[u32],
    dir: &Path,
    track_file: &str,
    ellipse_prefix: &str,
) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join(track_file), &track_table(forest))?;
    for &f in frames {
        write_file(
            &dir.join(ellipse_file_name(ellipse_prefix, f)),
            &ellipse_table(forest, f),
        )?;
    }
    Ok(())
}

pub fn write_tracks(forest: &LineageForest, frames: &[u32], dir: &Path) -> Result<(), Error> {
    write_forest(
        forest,
        frames,
        dir,
        RESULT_TRACK_FILE,
        RESULT_ELLIPSE_PREFIX,
    )
}

pub fn parse_track_table(text: &str) -> Result<Vec<(u32, u32, u32, u32)>, LineageError> {
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = |reason: &str| LineageError::Parse {
            line: k + 1,
            reason: reason.into(),
        };
        if f.len() != 4 {
            return Err(bad("expected four fields"));
        }
        let mut v = [0u32; 4];
        for (slot, s) in v.iter_mut().zip(&f) {
            *slot = s.parse().map_err(|_| bad("non-integer field"))?;
        }
        if v[2] < v[1] {
            return Err(bad("end before begin"));
        }
        rows.push((v[0], v[1], v[2], v[3]));
    }
    Ok(rows)
}

/// Reads a forest written by [`write_forest`]. Ellipses missing from the
/// per-frame tables are an error.
pub fn read_forest(
    dir: &Path,
    track_file: &str,
    ellipse_prefix: &str,
) -> Result<LineageForest, Error> {
    let path = dir.join(track_file);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let rows = parse_track_table(&text)?;
    let mut by_frame: BTreeMap<u32, BTreeMap<u32, Ellipse>> = BTreeMap::new();
    let mut frames: Vec<u32> = rows.iter().flat_map(|r| r.1..=r.2).collect();
    frames.sort_unstable();
    frames.dedup();
    for f in frames {
        let p = dir.join(ellipse_file_name(ellipse_prefix, f));
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let mut m = BTreeMap::new();
        for (k, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || LineageError::Parse {
                line: k + 1,
                reason: format!("bad ellipse row in {}", p.display()),
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad().into());
            }
            let id: u32 = f[0].trim().parse().map_err(|_| bad())?;
            let mut v = [0.0; 5];
            for (slot, s) in v.iter_mut().zip(&f[1..]) {
                *slot = s.trim().parse().map_err(|_| bad())?;
            }
            m.insert(id, Ellipse::new(v[0], v[1], v[2], v[3], v[4]));
        }
        by_frame.insert(f, m);
    }
    let mut tracks: Vec<Track> = Vec::new();
    let parents: Vec<u32> = rows.iter().map(|r| r.3).filter(|&p| p != 0).collect();
    for &(id, b, e, p) in &rows {
        let mut ellipses = Vec::new();
        for f in b..=e {
            let el =
                by_frame
                    .get(&f)
                    .and_then(|m| m.get(&id))
                    .ok_or_else(|| LineageError::Parse {
                        line: 0,
                        reason: format!("no ellipse for track {id} at frame {f}"),
                    })?;
            ellipses.push(*el);
        }
        tracks.push(Track {
            id,
            parent: (p != 0).then_some(p),
            start: b,
            end: e,
            divided: parents.contains(&id),
            vertices: Vec::new(),
            ellipses,
        });
    }
    tracks.sort_by_key(|t| t.id);
    Ok(LineageForest { tracks })
}

pub fn read_tracks(dir: &Path) -> Result<LineageForest, Error> {
    read_forest(dir, RESULT_TRACK_FILE, RESULT_ELLIPSE_PREFIX)
}

pub fn read_ground_truth(dir: &Path) -> Result<LineageForest, Error> {
    read_forest(dir, GT_TRACK_FILE, GT_ELLIPSE_PREFIX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ilp::{build_model, ModelMode, SolveStatus};
    use crate::testkit;

    fn solution(x: Vec<f64>) -> FlowSolution {
        FlowSolution {
            values: x,
            objective: 0.0,
            status: SolveStatus::Optimal,
            bound: 0.0,
            gap: 0.0,
            nodes: 0,
            lp_iterations: 0,
        }
    }

    #[test]
    fn single_chain() {
        let g = testkit::chain_graph(&[1, 1]);
        let m = build_model(&g, &testkit::uniform_probs(&g, 0.5), ModelMode::Full).unwrap();
        let mut x = vec![0.0; m.num_vars()];
        x[m.app_var(0)] = 1.0;
        x[0] = 1.0;
        x[m.dis_var(1)] = 1.0;
        let f = decode(&solution(x.clone()), &m, &g).unwrap();
        assert_eq!(f.tracks.len(), 1);
        assert_eq!(
            (f.tracks[0].start, f.tracks[0].end, f.tracks[0].parent),
            (1, 2, None)
        );
        assert_eq!(encode(&f, &m, &g), x);
        assert_eq!(track_table(&f), "1 1 2 0\n");
    }

    #[test]
    fn division_gives_two_children() {
        // a in frame 1, b and c in frame 2.
        let g = testkit::chain_graph(&[1, 2]);
        let m = build_model(&g, &testkit::uniform_probs(&g, 0.5), ModelMode::Full).unwrap();
        let mut x = vec![0.0; m.num_vars()];
        x[m.app_var(0)] = 1.0;
        x[m.div_var(0)] = 1.0;
        x[g.edge_id(0, 1).unwrap()] = 1.0;
        x[g.edge_id(0, 2).unwrap()] = 1.0;
        x[m.dis_var(1)] = 1.0;
        x[m.dis_var(2)] = 1.0;
        assert!(m.is_feasible(&x, 0.0));
        let f = decode(&solution(x.clone()), &m, &g).unwrap();
        assert_eq!(track_table(&f), "1 1 1 0\n2 2 2 1\n3 2 2 1\n");
        assert!(f.validate().is_empty());
        assert_eq!(encode(&f, &m, &g), x);
    }

    #[test]
    fn conservation_violation_is_reported() {
        let g = testkit::chain_graph(&[1, 1]);
        let m = build_model(&g, &testkit::uniform_probs(&g, 0.5), ModelMode::Full).unwrap();
        let mut x = vec![0.0; m.num_vars()];
        x[m.app_var(0)] = 1.0;
        assert!(matches!(
            decode(&solution(x.clone()), &m, &g),
            Err(LineageError::InfeasibleFlow { vertex: 0, .. })
        ));
        x[m.dis_var(0)] = 0.5;
        assert_eq!(
            decode(&solution(x), &m, &g),
            Err(LineageError::NotBinary(m.dis_var(0)))
        );
    }

    #[test]
    fn write_and_read_back() {
        let g = testkit::chain_graph(&[1, 2, 2]);
        let m = build_model(&g, &testkit::uniform_probs(&g, 0.5), ModelMode::Full).unwrap();
        let mut x = vec![0.0; m.num_vars()];
        x[m.app_var(0)] = 1.0;
        x[m.div_var(0)] = 1.0;
        x[g.edge_id(0, 1).unwrap()] = 1.0;
        x[g.edge_id(0, 2).unwrap()] = 1.0;
        x[g.edge_id(1, 3).unwrap()] = 1.0;
        x[g.edge_id(2, 4).unwrap()] = 1.0;
        x[m.dis_var(3)] = 1.0;
        x[m.dis_var(4)] = 1.0;
        let f = decode(&solution(x), &m, &g).unwrap();
        assert_eq!(track_table(&f), "1 1 1 0\n2 2 3 1\n3 2 3 1\n");
        let dir = tempfile::tempdir().unwrap();
        write_tracks(&f, &g.frames, dir.path()).unwrap();
        let back = read_tracks(dir.path()).unwrap();
        assert_eq!(back.tracks.len(), 3);
        for (a, b) in back.tracks.iter().zip(&f.tracks) {
            assert_eq!(
                (a.id, a.start, a.end, a.parent, a.divided),
                (b.id, b.start, b.end, b.parent, b.divided)
            );
            assert_eq!(a.ellipses, b.ellipses);
        }
        let csv = fs::read_to_string(dir.path().join("ellipses_t0002.csv")).unwrap();
        assert!(csv.starts_with("track,cx,cy,a,b,theta\n2,"));
    }

    #[test]
    fn parse_errors() {
        assert!(parse_track_table("1 1 5 0\n").is_ok());
        assert!(parse_track_table("1 1 5\n").is_err());
        assert!(parse_track_table("1 5 1 0\n").is_err());
        assert!(parse_track_table("a 1 1 0\n").is_err());
    }
}
