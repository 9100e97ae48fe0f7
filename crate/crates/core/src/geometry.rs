use crate::types::Position;

/// Closest point to `p` on the segment `[a, b]`.
pub fn closest_point_on_segment(p: &Position, a: &Position, b: &Position) -> Position {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

pub fn point_segment_distance(p: &Position, a: &Position, b: &Position) -> f64 {
    (p - closest_point_on_segment(p, a, b)).norm()
}

/// Minimum distance from `p` to a polyline.
pub fn point_polyline_distance(p: &Position, points: &[Position]) -> f64 {
    match points {
        [] => f64::INFINITY,
        [only] => (p - only).norm(),
        _ => points
            .windows(2)
            .map(|w| point_segment_distance(p, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Any unit vector orthogonal to `v` (which must be non-zero).
pub fn any_orthogonal(v: &Position) -> Position {
    let axis = if v.x.abs() <= v.y.abs() && v.x.abs() <= v.z.abs() {
        Position::x()
    } else if v.y.abs() <= v.z.abs() {
        Position::y()
    } else {
        Position::z()
    };
    v.cross(&axis).normalize()
}
