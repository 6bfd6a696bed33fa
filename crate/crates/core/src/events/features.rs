//! Geometric features of migration and division candidates.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::geometry::{eccentricity, ellipse_overlap, Ellipse};

/// Bumped whenever a feature is added, removed or reordered.
pub const FEATURE_SCHEMA_VERSION: u32 = 1;

pub const MIGRATION_FEATURES: [&str; 10] = [
    "center_distance",
    "major_axis_diff",
    "minor_axis_diff",
    "angle_diff",
    "ecc_i",
    "ecc_j",
    "overlap",
    "fit_i",
    "fit_j",
    "area_ratio",
];

pub const DIVISION_FEATURES: [&str; 6] = [
    "area_sum_ratio",
    "area_asymmetry",
    "midpoint_offset",
    "axis_angle",
    "daughter_separation",
    "ecc_mother",
];

/// Undirected angle between two orientations, in `[0, π/2]`.
pub fn orientation_difference(t1: f64, t2: f64) -> f64 {
    let d = (t1 - t2).rem_euclid(PI);
    d.min(PI - d).clamp(0.0, FRAC_PI_2)
}

pub fn migration_features(ei: &Ellipse, ej: &Ellipse, fit_i: f64, fit_j: f64) -> Vec<f64> {
    vec![
        ei.center().distance(&ej.center()),
        (ei.a - ej.a).abs(),
        (ei.b - ej.b).abs(),
        orientation_difference(ei.theta, ej.theta),
        eccentricity(ei),
        eccentricity(ej),
        ellipse_overlap(ei, ej),
        fit_i,
        fit_j,
        ej.area() / ei.area(),
    ]
}

pub fn division_features(ej: &Ellipse, ek: &Ellipse, el: &Ellipse) -> Vec<f64> {
    let (ak, al) = (ek.area(), el.area());
    let mid_x = 0.5 * (ek.cx + el.cx);
    let mid_y = 0.5 * (ek.cy + el.cy);
    let (dx, dy) = (el.cx - ek.cx, el.cy - ek.cy);
    let axis = if dx == 0.0 && dy == 0.0 {
        0.0
    } else {
        orientation_difference(dy.atan2(dx), ej.theta)
    };
    vec![
        (ak + al) / ej.area(),
        (ak - al).abs() / ak.max(al),
        (mid_x - ej.cx).hypot(mid_y - ej.cy),
        axis,
        dx.hypot(dy) / (ek.a + el.a),
        eccentricity(ej),
    ]
}
