//! Per-frame ellipse hypotheses: components, contours, contourlets and
//! their merge hierarchies.

pub mod contour;
pub mod hierarchy;
pub mod mask;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use contour::{
    curvature_split_points, split_contourlets, trace_contour, Contour, Contourlet, CurvatureConfig,
};
pub use hierarchy::{build_hierarchy, cluster_distance, HierarchyNode, HierarchyTree};
pub use mask::{connected_components, read_mask_dir, Component, LabelMask};

use crate::error::{Error, HypothesisError};
use crate::geometry::moment_ellipse;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HypothesisConfig {
    /// Components with fewer pixels are discarded.
    pub min_area: usize,
    pub suppression_radius: usize,
    pub kappa_min: f64,
    pub smoothing_sigma: f64,
    pub max_leaves: usize,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        let c = CurvatureConfig::default();
        Self {
            min_area: 20,
            suppression_radius: c.suppression_radius,
            kappa_min: c.kappa_min,
            smoothing_sigma: c.smoothing_sigma,
            max_leaves: c.max_splits,
        }
    }
}

impl HypothesisConfig {
    pub fn curvature(&self) -> CurvatureConfig {
        CurvatureConfig {
            suppression_radius: self.suppression_radius,
            kappa_min: self.kappa_min,
            smoothing_sigma: self.smoothing_sigma,
            max_splits: self.max_leaves,
        }
    }
}

/// Hierarchy of one component. Falls back to a single node carrying the
/// pixel moment ellipse when no ellipse can be fit to the boundary.
pub fn component_hierarchy(
    frame: u32,
    component: &Component,
    cfg: &HypothesisConfig,
) -> HierarchyTree {
    let contour = trace_contour(component);
    let splits = curvature_split_points(&contour, &cfg.curvature());
    let pieces = split_contourlets(&contour, &splits);
    match build_hierarchy(&pieces, frame, component.id, component.centroid) {
        Ok(tree) => tree,
        Err(HypothesisError::DegenerateComponent { .. }) | Err(_) => {
            log::debug!(
                "frame {frame} component {}: boundary fit failed, using moment ellipse",
                component.id
            );
            let ellipse =
                moment_ellipse(&component.pixel_points()).expect("components are non-empty");
            HierarchyTree::single(
                frame,
                component.id,
                component.centroid,
                contour.points,
                ellipse,
            )
        }
    }
}

/// All hierarchies of one frame, ordered by component id.
pub fn frame_hypotheses(
    frame: u32,
    mask: &LabelMask,
    cfg: &HypothesisConfig,
) -> Vec<HierarchyTree> {
    connected_components(mask, cfg.min_area)
        .iter()
        .map(|c| component_hierarchy(frame, c, cfg))
        .collect()
}

/// Hierarchies of a whole sequence, keyed by frame. Frames are processed in
/// parallel; the result does not depend on scheduling.
pub fn sequence_hypotheses(
    masks: &BTreeMap<u32, LabelMask>,
    cfg: &HypothesisConfig,
) -> BTreeMap<u32, Vec<HierarchyTree>> {
    masks
        .par_iter()
        .map(|(&frame, mask)| (frame, frame_hypotheses(frame, mask, cfg)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// One line of the hypotheses JSON-lines file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub frame: u32,
    pub component: usize,
    pub node_id: usize,
    pub parent_id: Option<usize>,
    pub leaf: bool,
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
    pub fit_error: f64,
}

pub fn hypothesis_records(trees: &BTreeMap<u32, Vec<HierarchyTree>>) -> Vec<HypothesisRecord> {
    trees
        .values()
        .flatten()
        .flat_map(|t| {
            t.nodes.iter().map(move |n| HypothesisRecord {
                frame: t.frame,
                component: t.component_id,
                node_id: n.id,
                parent_id: n.parent,
                leaf: n.is_leaf(),
                cx: n.ellipse.cx,
                cy: n.ellipse.cy,
                a: n.ellipse.a,
                b: n.ellipse.b,
                theta: n.ellipse.theta,
                fit_error: n.fit_error,
            })
        })
        .collect()
}

pub fn write_hypotheses_jsonl(
    path: &Path,
    trees: &BTreeMap<u32, Vec<HierarchyTree>>,
) -> Result<(), Error> {
    let mut out = Vec::new();
    for r in hypothesis_records(trees) {
        serde_json::to_writer(&mut out, &r).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}
