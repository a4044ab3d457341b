//! Ray and segment queries against rectangles, optionally inflated by a disk.

use super::{Point, Rect, ScenePlan};

/// Distance below which a disk is considered touching an obstacle.
pub(crate) const CONTACT_EPS: f64 = 1e-7;
/// Forward motion stops this far short of exact contact.
pub(crate) const CONTACT_BACKOFF: f64 = 1e-9;

/// Entry parameter of a ray into an axis-aligned box, for origins outside it.
fn slab_entry(o: Point, d: Point, lo: Point, hi: Point) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for (oc, dc, l, h) in [(o.x, d.x, lo.x, hi.x), (o.y, d.y, lo.y, hi.y)] {
        if dc.abs() < 1e-300 {
            if oc < l || oc > h {
                return None;
            }
        } else {
            let a = (l - oc) / dc;
            let b = (h - oc) / dc;
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
    }
    if t0 <= t1 && t1 >= 0.0 {
        Some(t0.max(0.0))
    } else {
        None
    }
}

fn circle_entry(o: Point, d: Point, c: Point, r: f64) -> Option<f64> {
    let oc = o - c;
    let b = d.dot(oc);
    let cc = oc.dot(oc) - r * r;
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    if t >= 0.0 {
        Some(t)
    } else if -b + disc.sqrt() >= 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// First contact of a disk of radius `r` moving from `o` along unit `d`
/// with the rectangle. Returns `None` when it never touches, `Some(0)` when
/// it is already in contact and heading inwards.
pub(crate) fn rect_inflated_entry(rect: &Rect, r: f64, o: Point, d: Point) -> Option<f64> {
    let q = rect.closest_point(o);
    let n = o - q;
    let dist = n.norm();
    if dist < r + CONTACT_EPS {
        // Convexity: distance cannot shrink later if it does not shrink now.
        return if dist <= 0.0 || d.dot(n) < 0.0 {
            Some(0.0)
        } else {
            None
        };
    }
    let mut best: Option<f64> = None;
    let mut take = |t: Option<f64>| {
        if let Some(t) = t {
            best = Some(best.map_or(t, |b: f64| b.min(t)));
        }
    };
    take(slab_entry(
        o,
        d,
        Point::new(rect.x - r, rect.y),
        Point::new(rect.x1() + r, rect.y1()),
    ));
    take(slab_entry(
        o,
        d,
        Point::new(rect.x, rect.y - r),
        Point::new(rect.x1(), rect.y1() + r),
    ));
    for c in [
        Point::new(rect.x, rect.y),
        Point::new(rect.x1(), rect.y),
        Point::new(rect.x, rect.y1()),
        Point::new(rect.x1(), rect.y1()),
    ] {
        if r > 0.0 {
            take(circle_entry(o, d, c, r));
        }
    }
    best
}

/// Parameter at which a disk of radius `r` leaves the room (walls inflated by `r`).
fn boundary_exit(scene: &ScenePlan, r: f64, o: Point, d: Point) -> f64 {
    let mut t = f64::INFINITY;
    for (oc, dc, lo, hi) in [
        (o.x, d.x, r, scene.width - r),
        (o.y, d.y, r, scene.height - r),
    ] {
        if dc > 0.0 {
            t = t.min(((hi - oc) / dc).max(0.0));
        } else if dc < 0.0 {
            t = t.min(((lo - oc) / dc).max(0.0));
        }
    }
    t
}

/// First contact along a unit direction for a disk of radius `r` against
/// all obstacles and walls.
pub(crate) fn inflated_hit(scene: &ScenePlan, o: Point, d: Point, r: f64) -> Option<f64> {
    let mut t = boundary_exit(scene, r, o, d);
    for rect in &scene.obstacles {
        if let Some(h) = rect_inflated_entry(rect, r, o, d) {
            t = t.min(h);
        }
    }
    t.is_finite().then_some(t)
}

/// Distance along `angle` from `o` to the first obstacle or wall, capped.
pub fn cast_ray(scene: &ScenePlan, o: Point, angle: f64, max_range: f64) -> f64 {
    let d = Point::unit(angle);
    let hit = inflated_hit(scene, o, d, 0.0).unwrap_or(f64::INFINITY);
    hit.min(max_range)
}

/// Whether a disk of radius `r` can sweep from `a` to `b` without contact.
pub fn segment_clear(scene: &ScenePlan, a: Point, b: Point, r: f64) -> bool {
    let len = a.dist(b);
    if len < 1e-12 {
        return scene.in_bounds(a) && scene.clearance(a) >= r - super::CLEARANCE_TOLERANCE;
    }
    let d = (b - a).scale(1.0 / len);
    match inflated_hit(scene, a, d, r) {
        Some(t) => t >= len,
        None => true,
    }
}

/// Whether the straight segment `a`-`b` crosses any interior obstacle.
pub fn segment_blocked(scene: &ScenePlan, a: Point, b: Point) -> bool {
    let len = a.dist(b);
    if len < 1e-12 {
        return scene.obstacles.iter().any(|o| o.contains(a));
    }
    let d = (b - a).scale(1.0 / len);
    scene.obstacles.iter().any(|o| {
        o.contains(a)
            || slab_entry(a, d, Point::new(o.x, o.y), Point::new(o.x1(), o.y1()))
                .is_some_and(|t| t <= len)
    })
}
