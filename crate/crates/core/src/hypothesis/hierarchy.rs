//! Agglomerative ellipse hierarchies over contourlets.

use crate::error::HypothesisError;
use crate::geometry::{
    circumference, eccentricity, fit_ellipse, hausdorff_to_ellipse, moment_ellipse,
    point_ellipse_distance, Ellipse, HausdorffMode, Point2, MIN_FIT_POINTS,
};
use crate::hypothesis::contour::Contourlet;

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyNode {
    pub id: usize,
    pub ellipse: Ellipse,
    /// Indices into [`HierarchyTree::contourlets`], ascending.
    pub cluster: Vec<usize>,
    pub children: Option<[usize; 2]>,
    pub parent: Option<usize>,
    /// Mean distance of the cluster's points to `ellipse`.
    pub fit_error: f64,
}

impl HierarchyNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Binary merge tree of one connected component. Leaves come first in
/// `nodes` (in contour order), followed by internal nodes in merge order, so
/// the root is always last.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyTree {
    pub frame: u32,
    pub component_id: usize,
    pub component_centroid: Point2,
    pub contourlets: Vec<Contourlet>,
    pub nodes: Vec<HierarchyNode>,
    pub root: usize,
}

impl HierarchyTree {
    /// One-node tree carrying a fixed ellipse.
    pub fn single(
        frame: u32,
        component_id: usize,
        component_centroid: Point2,
        points: Vec<Point2>,
        ellipse: Ellipse,
    ) -> Self {
        let fit_error = mean_distance(&points, &ellipse);
        Self {
            frame,
            component_id,
            component_centroid,
            contourlets: vec![Contourlet { start: 0, points }],
            nodes: vec![HierarchyNode {
                id: 0,
                ellipse,
                cluster: vec![0],
                children: None,
                parent: None,
                fit_error,
            }],
            root: 0,
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.contourlets.len()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &HierarchyNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    /// Root-to-leaf paths, one per leaf, in left-first depth-first order.
    pub fn exclusion_sets(&self) -> Vec<Vec<usize>> {
        let children: Vec<Vec<usize>> = self
            .nodes
            .iter()
            .map(|n| n.children.map(|c| c.to_vec()).unwrap_or_default())
            .collect();
        exclusion_sets_from_children(&children, self.root)
    }

    /// Cluster sets present after `k` merges, for `k = 0..leaves`. Level 0
    /// is the leaves, the last level is the root alone.
    pub fn level_cuts(&self) -> Vec<Vec<usize>> {
        let n = self.num_leaves();
        (0..n)
            .map(|k| {
                let limit = n + k;
                (0..limit)
                    .filter(|&id| self.nodes[id].parent.is_none_or(|p| p >= limit))
                    .collect()
            })
            .collect()
    }

    /// Level cut with the smallest mean fit error; ties go to fewer clusters.
    pub fn best_level_cut(&self) -> Vec<usize> {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for cut in self.level_cuts().into_iter().rev() {
            let err = cut.iter().map(|&i| self.nodes[i].fit_error).sum::<f64>() / cut.len() as f64;
            if best.as_ref().is_none_or(|(b, _)| err < *b) {
                best = Some((err, cut));
            }
        }
        best.map(|(_, c)| c).unwrap_or_default()
    }

    fn cluster_points(&self, cluster: &[usize]) -> Vec<Point2> {
        cluster
            .iter()
            .flat_map(|&c| self.contourlets[c].points.iter().copied())
            .collect()
    }
}

/// Root-to-leaf paths of a rooted tree given as child lists. Nodes may have
/// any number of children; leaves are visited depth first, first child first.
pub fn exclusion_sets_from_children(children: &[Vec<usize>], root: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut path = Vec::new();
    fn walk(
        node: usize,
        children: &[Vec<usize>],
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        path.push(node);
        if children[node].is_empty() {
            out.push(path.clone());
        } else {
            for &c in &children[node] {
                walk(c, children, path, out);
            }
        }
        path.pop();
    }
    walk(root, children, &mut path, &mut out);
    out
}

fn mean_distance(points: &[Point2], e: &Ellipse) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points
        .iter()
        .map(|p| point_ellipse_distance(p, e).0)
        .sum::<f64>()
        / points.len() as f64
}

/// Shape factor multiplying the summed Hausdorff terms.
pub fn shape_factor(e: &Ellipse) -> f64 {
    let ec = eccentricity(e);
    circumference(e) * (1.0 / (1.0 + ec * ec)).sqrt()
}

/// Ellipse fit that also rejects implausible shapes: a minor semi-axis
/// under one pixel, or a major semi-axis beyond twice the extent of the
/// points (nearly straight arcs).
pub fn fit_hypothesis(points: &[Point2]) -> Option<Ellipse> {
    let e = fit_ellipse(points).ok()?;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in points {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let extent = (x1 - x0).hypot(y1 - y0);
    (e.b >= 1.0 && e.a <= 2.0 * extent).then_some(e)
}

/// Merge cost of clusters `i` and `j` given all current clusters, together
/// with the ellipse fit to their union. `None` if that fit is degenerate.
pub fn cluster_distance_with_fit(
    clusters: &[Vec<Point2>],
    i: usize,
    j: usize,
) -> Option<(f64, Ellipse)> {
    let (i, j) = (i.min(j), i.max(j));
    let union: Vec<Point2> = clusters[i].iter().chain(&clusters[j]).copied().collect();
    let e = fit_hypothesis(&union)?;
    let mut sum = 0.0;
    for (l, c) in clusters.iter().enumerate() {
        let mode = if l == i || l == j {
            HausdorffMode::Full
        } else {
            HausdorffMode::InsideOnly
        };
        sum += hausdorff_to_ellipse(c, &e, mode).ok()?;
    }
    Some((sum * shape_factor(&e), e))
}

/// Merge cost of clusters `i` and `j`; `+∞` if no ellipse fits their union.
pub fn cluster_distance(clusters: &[Vec<Point2>], i: usize, j: usize) -> f64 {
    cluster_distance_with_fit(clusters, i, j).map_or(f64::INFINITY, |(d, _)| d)
}

/// Moment ellipse of points lying on a closed curve. Boundary samples of an
/// ellipse have twice the second moments of its filled area.
pub fn boundary_moment_ellipse(points: &[Point2]) -> Option<Ellipse> {
    let m = moment_ellipse(points)?;
    Some(Ellipse::new(
        m.cx,
        m.cy,
        m.a / std::f64::consts::SQRT_2,
        m.b / std::f64::consts::SQRT_2,
        m.theta,
    ))
}

/// Merges contourlets that are too short to fit, or whose fit fails, into
/// the shorter of their two cyclic neighbors until every piece fits or a
/// single piece remains.
pub fn premerge_contourlets(contourlets: &[Contourlet]) -> Vec<Contourlet> {
    let mut parts: Vec<Contourlet> = contourlets.to_vec();
    while parts.len() > 1 {
        let bad = parts
            .iter()
            .position(|c| c.points.len() < MIN_FIT_POINTS || fit_hypothesis(&c.points).is_none());
        let Some(k) = bad else { break };
        let n = parts.len();
        let prev = (k + n - 1) % n;
        let next = (k + 1) % n;
        let into_prev = parts[prev].points.len() <= parts[next].points.len();
        if into_prev {
            let piece = parts.remove(k);
            let p = if k == 0 { parts.len() - 1 } else { k - 1 };
            parts[p].points.extend(piece.points);
        } else {
            let piece = parts.remove(next % n);
            let k = if next == 0 { k - 1 } else { k };
            parts[k].points.extend(piece.points);
        }
    }
    parts
}

/// Agglomerative clustering of a component's contourlets.
///
/// Contourlets that cannot be fit are pre-merged first; each surviving
/// piece becomes a leaf. Pairs with minimal [`cluster_distance`] are merged
/// (ties by lowest node-id pair) until one cluster remains.
pub fn build_hierarchy(
    contourlets: &[Contourlet],
    frame: u32,
    component_id: usize,
    component_centroid: Point2,
) -> Result<HierarchyTree, HypothesisError> {
    let degenerate = || HypothesisError::DegenerateComponent {
        frame,
        component: component_id,
    };
    let total: usize = contourlets.iter().map(|c| c.points.len()).sum();
    if total < MIN_FIT_POINTS {
        return Err(degenerate());
    }
    let leaves = premerge_contourlets(contourlets);
    let n = leaves.len();
    let mut tree = HierarchyTree {
        frame,
        component_id,
        component_centroid,
        contourlets: leaves,
        nodes: Vec::with_capacity(2 * n - 1),
        root: 2 * n - 2,
    };

    for (i, c) in tree.contourlets.iter().enumerate() {
        // Only fails when a single unfittable piece remains.
        let ellipse = fit_hypothesis(&c.points).ok_or_else(degenerate)?;
        tree.nodes.push(HierarchyNode {
            id: i,
            ellipse,
            cluster: vec![i],
            children: None,
            parent: None,
            fit_error: mean_distance(&c.points, &ellipse),
        });
    }

    // Active clusters as (node id, points).
    let mut active: Vec<(usize, Vec<Point2>)> = tree
        .contourlets
        .iter()
        .enumerate()
        .map(|(i, c)| (i, c.points.clone()))
        .collect();
    while active.len() > 1 {
        let clusters: Vec<Vec<Point2>> = active.iter().map(|(_, p)| p.clone()).collect();
        let mut best: Option<(f64, usize, usize, Option<Ellipse>)> = None;
        for i in 0..active.len() {
            for j in i + 1..active.len() {
                let (d, e) = match cluster_distance_with_fit(&clusters, i, j) {
                    Some((d, e)) => (d, Some(e)),
                    None => (f64::INFINITY, None),
                };
                let better = match &best {
                    None => true,
                    Some((bd, bi, bj, _)) => {
                        let key = (active[i].0.min(active[j].0), active[i].0.max(active[j].0));
                        let bkey = (
                            active[*bi].0.min(active[*bj].0),
                            active[*bi].0.max(active[*bj].0),
                        );
                        d < *bd || (d == *bd && key < bkey)
                    }
                };
                if better {
                    best = Some((d, i, j, e));
                }
            }
        }
        let (_, i, j, fitted) = best.expect("at least one pair");
        let id = tree.nodes.len();
        let (left, pts_i) = active[i].clone();
        let (right, pts_j) = active[j].clone();
        let points: Vec<Point2> = pts_i.into_iter().chain(pts_j).collect();
        let ellipse = match fitted {
            Some(e) => e,
            None if active.len() == 2 => return Err(degenerate()),
            None => boundary_moment_ellipse(&points).ok_or_else(degenerate)?,
        };
        let mut cluster: Vec<usize> = tree.nodes[left]
            .cluster
            .iter()
            .chain(&tree.nodes[right].cluster)
            .copied()
            .collect();
        cluster.sort_unstable();
        tree.nodes[left].parent = Some(id);
        tree.nodes[right].parent = Some(id);
        tree.nodes.push(HierarchyNode {
            id,
            ellipse,
            cluster,
            children: Some([left, right]),
            parent: None,
            fit_error: mean_distance(&points, &ellipse),
        });
        active.remove(j);
        active[i] = (id, points);
    }
    debug_assert_eq!(tree.nodes.len(), 2 * n - 1);
    debug_assert_eq!(
        tree.cluster_points(&tree.nodes[tree.root].cluster).len(),
        total
    );
    Ok(tree)
}
