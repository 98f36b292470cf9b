//! Convex hulls and their overlap ratio.
//!
//! Hulls that collapse to a segment are inflated to a 1 px wide rectangle
//! lying along the segment; hulls that collapse to a point become a 1 x 1 px
//! square. Overlap is intersection area over union area.

/// Hull area at or below this (px^2) counts as a collapsed hull.
pub const DEGENERATE_AREA_PX2: f64 = 1e-6;

/// Width given to collapsed hulls, in pixels.
pub const DEGENERATE_WIDTH_PX: f64 = 1.0;

type Pt = (f64, f64);

fn cross(o: Pt, a: Pt, b: Pt) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise hull via the monotone chain, collinear points dropped.
pub fn convex_hull(points: &[Pt]) -> Vec<Pt> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Pt> = Vec::with_capacity(pts.len() * 2);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

pub fn polygon_area(poly: &[Pt]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        twice += a.0 * b.1 - b.0 * a.1;
    }
    twice / 2.0
}

fn farthest_pair(points: &[Pt]) -> (Pt, Pt) {
    let mut best = (points[0], points[0], -1.0);
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            let d = (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
            if d > best.2 {
                best = (a, b, d);
            }
        }
    }
    (best.0, best.1)
}

/// The area-bearing CCW polygon standing in for the hull of `points`.
pub fn hull_region(points: &[Pt]) -> Vec<Pt> {
    assert!(!points.is_empty(), "hull of an empty point set");
    let hull = convex_hull(points);
    if hull.len() >= 3 && polygon_area(&hull) > DEGENERATE_AREA_PX2 {
        return hull;
    }
    let (a, b) = farthest_pair(points);
    let h = DEGENERATE_WIDTH_PX / 2.0;
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    if len == 0.0 {
        let (x, y) = a;
        return vec![
            (x - h, y - h),
            (x + h, y - h),
            (x + h, y + h),
            (x - h, y + h),
        ];
    }
    let (nx, ny) = (-dy / len * h, dx / len * h);
    vec![
        (a.0 - nx, a.1 - ny),
        (b.0 - nx, b.1 - ny),
        (b.0 + nx, b.1 + ny),
        (a.0 + nx, a.1 + ny),
    ]
}

fn line_intersection(p: Pt, q: Pt, a: Pt, b: Pt) -> Pt {
    let (r, s) = ((q.0 - p.0, q.1 - p.1), (b.0 - a.0, b.1 - a.1));
    let denom = r.0 * s.1 - r.1 * s.0;
    let t = ((a.0 - p.0) * s.1 - (a.1 - p.1) * s.0) / denom;
    (p.0 + t * r.0, p.1 + t * r.1)
}

/// Sutherland-Hodgman clip of `subject` by the convex CCW polygon `clip`.
pub fn clip_convex(subject: &[Pt], clip: &[Pt]) -> Vec<Pt> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

/// Intersection-over-union of the (inflated) hulls of two point sets.
pub fn convex_hull_overlap(g: &[Pt], r: &[Pt]) -> f64 {
    let hg = hull_region(g);
    let hr = hull_region(r);
    let area_g = polygon_area(&hg);
    let area_r = polygon_area(&hr);
    let inter = polygon_area(&clip_convex(&hg, &hr)).max(0.0);
    let union = area_g + area_r - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Pt> {
        vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    }

    #[test]
    fn overlapping_squares_give_one_third() {
        let ratio =
            convex_hull_overlap(&square(0.0, 0.0, 10.0, 10.0), &square(5.0, 0.0, 15.0, 10.0));
        assert!((ratio - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_and_identical_hulls() {
        let a = square(0.0, 0.0, 1.0, 1.0);
        assert_eq!(
            convex_hull_overlap(&a, &square(50.0, 50.0, 60.0, 60.0)),
            0.0
        );
        assert!((convex_hull_overlap(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hull_drops_interior_and_collinear_points() {
        let hull = convex_hull(&[(0.0, 0.0), (2.0, 0.0), (1.0, 0.0), (1.0, 1.0), (1.0, 0.5)]);
        assert_eq!(hull.len(), 3);
        assert!(polygon_area(&hull) > 0.0);
    }

    #[test]
    fn segment_inflates_to_unit_width_rectangle() {
        let region = hull_region(&[(0.0, 0.0), (3.0, 4.0), (6.0, 8.0)]);
        assert_eq!(region.len(), 4);
        assert!((polygon_area(&region) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn point_inflates_to_unit_square() {
        let region = hull_region(&[(5.0, 5.0)]);
        assert!((polygon_area(&region) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn segment_crossing_square() {
        // 20x1 strip across a 10x10 square: intersection 10, union 110.
        let seg = [(-5.0, 5.0), (15.0, 5.0)];
        let ratio = convex_hull_overlap(&seg, &square(0.0, 0.0, 10.0, 10.0));
        assert!((ratio - 10.0 / 110.0).abs() < 1e-12);
    }
}
