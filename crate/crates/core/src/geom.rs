//! Small 2D helpers: convex hulls (for plot overlays) and point-in-polygon
//! tests (for sampling invariants).

/// Cross product of (b - a) x (c - a).
fn cross(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Is `p` inside (or on the boundary of) a convex polygon whose vertices
/// run counterclockwise?
pub fn point_in_convex_ccw(vertices: &[(f64, f64)], p: (f64, f64), tol: f64) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    (0..n).all(|k| cross(vertices[k], vertices[(k + 1) % n], p) >= -tol)
}

/// Area of a simple polygon given in order (either winding). Shoelace
/// formula; degenerate inputs (< 3 vertices) have zero area.
pub fn polygon_area(vertices: &[(f64, f64)]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|k| {
            let (x0, y0) = vertices[k];
            let (x1, y1) = vertices[(k + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    twice.abs() / 2.0
}

/// Monotone-chain convex hull; returns vertices in counterclockwise order.
/// Collinear boundary points are dropped.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}
