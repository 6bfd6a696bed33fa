//! Outer-boundary tracing, curvature extrema and contourlet splitting.

use std::collections::HashSet;

use crate::geometry::Point2;
use crate::hypothesis::mask::Component;

/// Closed outer boundary of a component, counter-clockwise (positive signed
/// area in raw pixel coordinates), starting at the component's first pixel
/// in raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub component_id: usize,
    pub points: Vec<Point2>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Length of the closed polyline.
    pub fn perimeter(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| self.points[i].distance(&self.points[(i + 1) % n]))
            .sum()
    }
}

/// Contiguous open piece of a contour.
#[derive(Debug, Clone, PartialEq)]
pub struct Contourlet {
    /// Index of the first point on the parent contour.
    pub start: usize,
    pub points: Vec<Point2>,
}

// Clockwise on screen (y pointing down), starting north.
const MOORE: [(i64, i64); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

/// Moore-neighbor trace of the outer boundary, stopped when the first move
/// repeats. Holes are ignored. A single-pixel component yields a one-point
/// contour.
pub fn trace_contour(component: &Component) -> Contour {
    let set: HashSet<(i64, i64)> = component
        .pixels
        .iter()
        .map(|&(x, y)| (x as i64, y as i64))
        .collect();
    let Some(&(sx, sy)) = component.pixels.iter().min_by_key(|&&(x, y)| (y, x)) else {
        return Contour {
            component_id: component.id,
            points: Vec::new(),
        };
    };
    let start = (sx as i64, sy as i64);
    let step = |p: (i64, i64), b: (i64, i64)| -> Option<((i64, i64), (i64, i64))> {
        let k = MOORE
            .iter()
            .position(|&(dx, dy)| (p.0 + dx, p.1 + dy) == b)
            .unwrap_or(6);
        for i in 1..=8 {
            let (dx, dy) = MOORE[(k + i) % 8];
            let n = (p.0 + dx, p.1 + dy);
            if set.contains(&n) {
                let (bx, by) = MOORE[(k + i - 1) % 8];
                return Some((n, (p.0 + bx, p.1 + by)));
            }
        }
        None
    };

    let mut pts = vec![start];
    let mut p = start;
    let mut b = (start.0 - 1, start.1);
    let mut first: Option<((i64, i64), (i64, i64))> = None;
    let cap = 8 * set.len() + 16;
    for _ in 0..cap {
        let Some((n, nb)) = step(p, b) else { break };
        match first {
            Some(f) if f == (p, n) => {
                pts.pop();
                break;
            }
            None => first = Some((p, n)),
            _ => {}
        }
        pts.push(n);
        p = n;
        b = nb;
    }

    let mut points: Vec<Point2> = pts
        .into_iter()
        .map(|(x, y)| Point2::new(x as f64, y as f64))
        .collect();
    if signed_area(&points) < 0.0 {
        points[1..].reverse();
    }
    Contour {
        component_id: component.id,
        points,
    }
}

/// Shoelace area; positive for counter-clockwise in raw coordinates.
pub fn signed_area(points: &[Point2]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let p = points[i];
            let q = points[(i + 1) % n];
            p.x * q.y - q.x * p.y
        })
        .sum::<f64>()
        / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureConfig {
    /// Neighborhood suppressed on each side of a selected point.
    pub suppression_radius: usize,
    /// Selection stops once the largest remaining magnitude drops below this.
    pub kappa_min: f64,
    /// Standard deviation of the Gaussian applied to contour coordinates.
    pub smoothing_sigma: f64,
    /// Upper bound on selected points, hence on leaves per component.
    pub max_splits: usize,
}

impl Default for CurvatureConfig {
    fn default() -> Self {
        Self {
            suppression_radius: 7,
            kappa_min: 0.15,
            smoothing_sigma: 2.0,
            max_splits: 8,
        }
    }
}

/// Signed curvature at every contour point after cyclic Gaussian smoothing,
/// from central differences (parametrization-invariant form).
pub fn contour_curvature(points: &[Point2], sigma: f64) -> Vec<f64> {
    let n = points.len();
    if n < 3 {
        return vec![0.0; n];
    }
    let smoothed = if sigma > 0.0 {
        let radius = (3.0 * sigma).ceil() as i64;
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let norm: f64 = kernel.iter().sum();
        (0..n as i64)
            .map(|i| {
                let (mut x, mut y) = (0.0, 0.0);
                for (w, k) in kernel.iter().zip(-radius..=radius) {
                    let p = points[(i + k).rem_euclid(n as i64) as usize];
                    x += w * p.x;
                    y += w * p.y;
                }
                Point2::new(x / norm, y / norm)
            })
            .collect()
    } else {
        points.to_vec()
    };
    (0..n)
        .map(|i| {
            let prev = smoothed[(i + n - 1) % n];
            let cur = smoothed[i];
            let next = smoothed[(i + 1) % n];
            let dx = (next.x - prev.x) / 2.0;
            let dy = (next.y - prev.y) / 2.0;
            let ddx = next.x - 2.0 * cur.x + prev.x;
            let ddy = next.y - 2.0 * cur.y + prev.y;
            let speed = (dx * dx + dy * dy).powf(1.5);
            if speed <= 1e-12 {
                0.0
            } else {
                (dx * ddy - dy * ddx) / speed
            }
        })
        .collect()
}

/// Iterative maximum-curvature selection with neighborhood suppression.
/// Returns contour indices in ascending order.
pub fn curvature_split_points(contour: &Contour, cfg: &CurvatureConfig) -> Vec<usize> {
    let n = contour.len();
    let r = cfg.suppression_radius;
    if n == 0 || n < 3 * r.max(1) {
        return Vec::new();
    }
    let kappa: Vec<f64> = contour_curvature(&contour.points, cfg.smoothing_sigma)
        .into_iter()
        .map(f64::abs)
        .collect();
    let mut suppressed = vec![false; n];
    let mut picks = Vec::new();
    while picks.len() < cfg.max_splits {
        let best = (0..n)
            .filter(|&i| !suppressed[i])
            .fold(None::<usize>, |acc, i| match acc {
                Some(j) if kappa[j] >= kappa[i] => Some(j),
                _ => Some(i),
            });
        let Some(i) = best else { break };
        if kappa[i] < cfg.kappa_min {
            break;
        }
        picks.push(i);
        for d in 0..=r {
            suppressed[(i + d) % n] = true;
            suppressed[(i + n - d % n) % n] = true;
        }
    }
    picks.sort_unstable();
    picks
}

/// Cuts the closed contour at `splits` (sorted, distinct). `k >= 1` splits
/// give `k` cyclic segments, each starting at a split point; no splits give
/// the whole contour.
pub fn split_contourlets(contour: &Contour, splits: &[usize]) -> Vec<Contourlet> {
    let n = contour.len();
    if splits.is_empty() {
        return vec![Contourlet {
            start: 0,
            points: contour.points.clone(),
        }];
    }
    splits
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let e = splits[(k + 1) % splits.len()];
            let len = if splits.len() == 1 {
                n
            } else {
                (e + n - s) % n
            };
            Contourlet {
                start: s,
                points: (0..len).map(|i| contour.points[(s + i) % n]).collect(),
            }
        })
        .collect()
}
