//! Ellipse primitives: direct least-squares fitting, perimeter, eccentricity,
//! point-to-boundary distance, directed Hausdorff distance and rasterized
//! overlap.
//!
//! Every function here is pure and works on immutable values.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Fewest points accepted by [`fit_ellipse`].
pub const MIN_FIT_POINTS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Ellipse in center / semi-axes / orientation form.
///
/// Always normalized so that `a >= b > 0` and `theta` lies in `[0, π)`;
/// `theta` is the direction of the major axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

impl Ellipse {
    /// Builds a normalized ellipse. Axes are swapped (and `theta` rotated by
    /// π/2) when `b > a`.
    pub fn new(cx: f64, cy: f64, a: f64, b: f64, theta: f64) -> Self {
        let (a, b, theta) = if b > a {
            (b, a, theta + PI / 2.0)
        } else {
            (a, b, theta)
        };
        Self {
            cx,
            cy,
            a,
            b,
            theta: normalize_angle(theta),
        }
    }

    pub fn circle(cx: f64, cy: f64, r: f64) -> Self {
        Self::new(cx, cy, r, r, 0.0)
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        PI * self.a * self.b
    }

    pub fn is_valid(&self) -> bool {
        [self.cx, self.cy, self.a, self.b, self.theta]
            .iter()
            .all(|v| v.is_finite())
            && self.b > 0.0
            && self.a >= self.b
    }

    /// Boundary point at parametric angle `t`.
    pub fn point_at(&self, t: f64) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        let u = self.a * t.cos();
        let v = self.b * t.sin();
        Point2::new(self.cx + c * u - s * v, self.cy + s * u + c * v)
    }

    /// `n` boundary points evenly spaced in parametric angle.
    pub fn sample_boundary(&self, n: usize) -> Vec<Point2> {
        (0..n)
            .map(|i| self.point_at(2.0 * PI * i as f64 / n as f64))
            .collect()
    }

    /// Coordinates of `p` in the ellipse frame (major axis along +u).
    fn local_coords(&self, p: &Point2) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let dx = p.x - self.cx;
        let dy = p.y - self.cy;
        (c * dx + s * dy, -s * dx + c * dy)
    }

    /// Strict interior test.
    pub fn contains(&self, p: &Point2) -> bool {
        let (u, v) = self.local_coords(p);
        (u / self.a).powi(2) + (v / self.b).powi(2) < 1.0
    }

    /// Axis-aligned bounding box `(xmin, ymin, xmax, ymax)`.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let hx = ((self.a * c).powi(2) + (self.b * s).powi(2)).sqrt();
        let hy = ((self.a * s).powi(2) + (self.b * c).powi(2)).sqrt();
        (self.cx - hx, self.cy - hy, self.cx + hx, self.cy + hy)
    }

    /// Translated copy.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }
}

/// Maps an angle into `[0, π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Fits an ellipse to `points` with the direct algebraic least-squares
/// method constrained to ellipses (`4AC − B² = 1`), in the numerically stable
/// block form. Points are centered and scaled before the fit.
pub fn fit_ellipse(points: &[Point2]) -> Result<Ellipse, GeometryError> {
    if points.len() < MIN_FIT_POINTS {
        return Err(GeometryError::DegenerateInput(format!(
            "need at least {MIN_FIT_POINTS} points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(GeometryError::DegenerateInput(
            "non-finite coordinate".into(),
        ));
    }

    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_r = points
        .iter()
        .map(|p| (p.x - mx).hypot(p.y - my))
        .sum::<f64>()
        / n;
    if mean_r <= 1e-12 {
        return Err(GeometryError::DegenerateInput("coincident points".into()));
    }
    let scale = std::f64::consts::SQRT_2 / mean_r;

    // Collinearity: smallest eigenvalue of the (scaled) scatter matrix.
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let x = (p.x - mx) * scale;
        let y = (p.y - my) * scale;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = ((tr * tr / 4.0) - det).max(0.0).sqrt();
    let lam_min = tr / 2.0 - disc;
    if lam_min <= 1e-10 * tr {
        return Err(GeometryError::DegenerateInput("collinear points".into()));
    }

    // Scatter blocks: quadratic part [x², xy, y²], linear part [x, y, 1].
    let mut s1 = Matrix3::<f64>::zeros();
    let mut s2 = Matrix3::<f64>::zeros();
    let mut s3 = Matrix3::<f64>::zeros();
    for p in points {
        let x = (p.x - mx) * scale;
        let y = (p.y - my) * scale;
        let d1 = Vector3::new(x * x, x * y, y * y);
        let d2 = Vector3::new(x, y, 1.0);
        s1 += d1 * d1.transpose();
        s2 += d1 * d2.transpose();
        s3 += d2 * d2.transpose();
    }
    let s3_inv = s3
        .try_inverse()
        .ok_or_else(|| GeometryError::DegenerateInput("singular linear scatter".into()))?;
    let t = -s3_inv * s2.transpose();
    let m = s1 + s2 * t;
    // C1⁻¹ M with C1 = [[0,0,2],[0,-1,0],[2,0,0]].
    let reduced = Matrix3::new(
        m[(2, 0)] / 2.0,
        m[(2, 1)] / 2.0,
        m[(2, 2)] / 2.0,
        -m[(1, 0)],
        -m[(1, 1)],
        -m[(1, 2)],
        m[(0, 0)] / 2.0,
        m[(0, 1)] / 2.0,
        m[(0, 2)] / 2.0,
    );

    let mut best: Option<(f64, Vector3<f64>)> = None;
    for ev in reduced.complex_eigenvalues().iter() {
        if ev.im.abs() > 1e-9 * (1.0 + ev.re.abs()) {
            continue;
        }
        let Some(v) = null_vector(&(reduced - Matrix3::identity() * ev.re)) else {
            continue;
        };
        let constraint = 4.0 * v[0] * v[2] - v[1] * v[1];
        if constraint <= 0.0 {
            continue;
        }
        let cost = (v.transpose() * m * v)[(0, 0)] / constraint;
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, v));
        }
    }
    let (_, a1) =
        best.ok_or_else(|| GeometryError::DegenerateInput("no elliptic solution".into()))?;
    let a2 = t * a1;
    let coeffs = [a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]];
    let local = conic_to_ellipse(&coeffs)
        .ok_or_else(|| GeometryError::DegenerateInput("fitted conic is not an ellipse".into()))?;
    let e = Ellipse::new(
        local.cx / scale + mx,
        local.cy / scale + my,
        local.a / scale,
        local.b / scale,
        local.theta,
    );
    if e.is_valid() {
        Ok(e)
    } else {
        Err(GeometryError::DegenerateInput(
            "invalid ellipse parameters".into(),
        ))
    }
}

/// Null vector of a rank-deficient 3×3 matrix: the largest cross product of
/// two of its rows.
fn null_vector(m: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let rows = [
        m.row(0).transpose(),
        m.row(1).transpose(),
        m.row(2).transpose(),
    ];
    let candidates = [
        rows[0].cross(&rows[1]),
        rows[0].cross(&rows[2]),
        rows[1].cross(&rows[2]),
    ];
    let best = candidates
        .iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))?;
    let norm = best.norm();
    (norm > 1e-300).then(|| best / norm)
}

/// Converts `A x² + B xy + C y² + D x + E y + F = 0` to geometric form.
fn conic_to_ellipse(c: &[f64; 6]) -> Option<Ellipse> {
    let [a, b, cc, d, e, f] = *c;
    let den = 4.0 * a * cc - b * b;
    if den <= 0.0 {
        return None;
    }
    let cx = (b * e - 2.0 * cc * d) / den;
    let cy = (b * d - 2.0 * a * e) / den;
    let f0 = f + (d * cx + e * cy) / 2.0;
    // Make the quadratic form positive definite with a negative constant.
    let (a, b, cc, f0) = if f0 > 0.0 {
        (-a, -b, -cc, -f0)
    } else {
        (a, b, cc, f0)
    };
    if f0 >= 0.0 {
        return None;
    }
    let half_b = b / 2.0;
    let mean = (a + cc) / 2.0;
    let radius = (((a - cc) / 2.0).powi(2) + half_b * half_b).sqrt();
    let lam_min = mean - radius;
    let lam_max = mean + radius;
    if lam_min <= 0.0 {
        return None;
    }
    let major = (-f0 / lam_min).sqrt();
    let minor = (-f0 / lam_max).sqrt();
    // Eigenvector of the smallest eigenvalue gives the major-axis direction.
    let v1 = (half_b, lam_min - a);
    let v2 = (lam_min - cc, half_b);
    let (vx, vy) = if v1.0.hypot(v1.1) >= v2.0.hypot(v2.1) {
        v1
    } else {
        v2
    };
    let theta = if vx.hypot(vy) <= 1e-300 {
        0.0
    } else {
        vy.atan2(vx)
    };
    Some(Ellipse::new(cx, cy, major, minor, theta))
}

/// Perimeter by Ramanujan's second approximation.
pub fn circumference(e: &Ellipse) -> f64 {
    let s = e.a + e.b;
    let h = ((e.a - e.b) / s).powi(2);
    PI * s * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt()))
}

/// `sqrt(1 − b²/a²)`, clamped so near-circles never take a negative root.
pub fn eccentricity(e: &Ellipse) -> f64 {
    let r = e.b / e.a;
    (1.0 - r * r).max(0.0).sqrt()
}

/// Euclidean distance from `p` to the boundary of `e`, and whether `p` lies
/// strictly inside.
///
/// The closest point is found by bisection on the Lagrange parameter of the
/// first-quadrant problem, which is monotone and converges for interior and
/// exterior points alike (no quartic is solved).
pub fn point_ellipse_distance(p: &Point2, e: &Ellipse) -> (f64, bool) {
    let (u, v) = e.local_coords(p);
    let inside = (u / e.a).powi(2) + (v / e.b).powi(2) < 1.0;
    // Coordinates within rounding of an axis are snapped onto it; the
    // bisection otherwise divides by a vanishing `s + 1` near the center.
    let snap = |t: f64| if t < 1e-10 * e.b { 0.0 } else { t };
    (
        distance_first_quadrant(e.a, e.b, snap(u.abs()), snap(v.abs())),
        inside,
    )
}

fn distance_first_quadrant(e0: f64, e1: f64, y0: f64, y1: f64) -> f64 {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return 0.0;
            }
            let r0 = (e0 / e1).powi(2);
            let s = lagrange_root(r0, z0, z1, g);
            let x0 = r0 * y0 / (s + r0);
            let x1 = y1 / (s + 1.0);
            (x0 - y0).hypot(x1 - y1)
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer = e0 * y0;
        let denom = e0 * e0 - e1 * e1;
        if numer < denom {
            let xde = numer / denom;
            let x0 = e0 * xde;
            let x1 = e1 * (1.0 - xde * xde).max(0.0).sqrt();
            (x0 - y0).hypot(x1)
        } else {
            (y0 - e0).abs()
        }
    }
}

fn lagrange_root(r0: f64, z0: f64, z1: f64, mut g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..1100 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let r0s = n0 / (s + r0);
        let r1s = z1 / (s + 1.0);
        g = r0s * r0s + r1s * r1s - 1.0;
        if g > 0.0 {
            s0 = s;
        } else if g < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HausdorffMode {
    Full,
    /// Ignore points lying outside the ellipse.
    InsideOnly,
}

/// Directed Hausdorff distance from `points` to the boundary of `e`.
///
/// `InsideOnly` drops points outside `e` first and returns 0 when nothing
/// remains. `Full` rejects an empty point set.
pub fn hausdorff_to_ellipse(
    points: &[Point2],
    e: &Ellipse,
    mode: HausdorffMode,
) -> Result<f64, GeometryError> {
    if points.is_empty() && mode == HausdorffMode::Full {
        return Err(GeometryError::EmptyInput);
    }
    Ok(points
        .iter()
        .filter_map(|p| {
            let (d, inside) = point_ellipse_distance(p, e);
            (mode == HausdorffMode::Full || inside).then_some(d)
        })
        .fold(0.0, f64::max))
}

/// Default sampling density of [`ellipse_overlap`].
pub const DEFAULT_OVERLAP_SAMPLES_PER_PIXEL: u32 = 4;

/// Intersection-over-union by sampling on a regular grid of
/// `samples_per_pixel` points per unit area. The grid is refined further for
/// small ellipses so each minor axis spans at least 20 samples.
pub fn ellipse_overlap_with(e1: &Ellipse, e2: &Ellipse, samples_per_pixel: u32) -> f64 {
    let b1 = e1.bounding_box();
    let b2 = e2.bounding_box();
    if b1.2 < b2.0 || b2.2 < b1.0 || b1.3 < b2.1 || b2.3 < b1.1 {
        return 0.0;
    }
    let step = (1.0 / (samples_per_pixel.max(1) as f64).sqrt()).min(e1.b.min(e2.b) / 20.0);
    let x0 = b1.0.min(b2.0);
    let y0 = b1.1.min(b2.1);
    let nx = ((b1.2.max(b2.2) - x0) / step).ceil() as usize;
    let ny = ((b1.3.max(b2.3) - y0) / step).ceil() as usize;
    let (mut inter, mut union) = (0u64, 0u64);
    for iy in 0..ny {
        let y = y0 + (iy as f64 + 0.5) * step;
        for ix in 0..nx {
            let p = Point2::new(x0 + (ix as f64 + 0.5) * step, y);
            let in1 = e1.contains(&p);
            let in2 = e2.contains(&p);
            if in1 || in2 {
                union += 1;
                if in1 && in2 {
                    inter += 1;
                }
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn ellipse_overlap(e1: &Ellipse, e2: &Ellipse) -> f64 {
    ellipse_overlap_with(e1, e2, DEFAULT_OVERLAP_SAMPLES_PER_PIXEL)
}

/// Ellipse with the same second moments as a set of filled pixels.
pub fn moment_ellipse(pixels: &[Point2]) -> Option<Ellipse> {
    if pixels.is_empty() {
        return None;
    }
    let n = pixels.len() as f64;
    let mx = pixels.iter().map(|p| p.x).sum::<f64>() / n;
    let my = pixels.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pixels {
        sxx += (p.x - mx).powi(2);
        sxy += (p.x - mx) * (p.y - my);
        syy += (p.y - my).powi(2);
    }
    // A single pixel still has area 1: add the variance of a unit square.
    sxx = sxx / n + 1.0 / 12.0;
    syy = syy / n + 1.0 / 12.0;
    sxy /= n;
    let mean = (sxx + syy) / 2.0;
    let r = (((sxx - syy) / 2.0).powi(2) + sxy * sxy).sqrt();
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some(Ellipse::new(
        mx,
        my,
        2.0 * (mean + r).sqrt(),
        2.0 * (mean - r).max(1e-6).sqrt(),
        theta,
    ))
}
