//! Point classification and nearest-boundary projection for polygonal
//! domains with holes.

use super::primitives::{p2, point_segment, P2};
use super::DomainSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Classification {
    Interior,
    Exterior,
    /// Within geometric tolerance of edge `edge` (lowest id on ties).
    Boundary { edge: usize },
}

/// Even-odd ray crossing with a tolerance band around the boundary.
///
/// Points within `spec.tol()` of any edge classify as `Boundary` with the
/// lowest matching edge id; otherwise parity of crossings of the upward ray
/// from `p` decides interior/exterior. The half-open rule (an edge counts
/// when exactly one endpoint is strictly right of the ray) keeps vertex
/// crossings from double-counting.
pub fn classify(spec: &DomainSpec, p: P2) -> Classification {
    classify_with_tol(spec, p, spec.tol())
}

pub fn classify_with_tol(spec: &DomainSpec, p: P2, tol: f64) -> Classification {
    let tol2 = tol * tol;
    let mut best: Option<(f64, usize)> = None;
    for (i, a, b, _) in spec.edges() {
        let (d2, _) = point_segment(p, a, b);
        if d2 <= tol2 {
            match best {
                Some((bd, _)) if bd <= d2 => {}
                _ => best = Some((d2, i)),
            }
        }
    }
    if let Some((_, edge)) = best {
        return Classification::Boundary { edge };
    }
    if point_in_loops(spec, p) {
        Classification::Interior
    } else {
        Classification::Exterior
    }
}

pub(crate) fn point_in_loops(spec: &DomainSpec, p: P2) -> bool {
    let mut inside = false;
    for (_, a, b, _) in spec.edges() {
        if (a.x > p.x) != (b.x > p.x) {
            let y_cross = a.y + (p.x - a.x) / (b.x - a.x) * (b.y - a.y);
            if y_cross > p.y {
                inside = !inside;
            }
        }
    }
    inside
}

#[derive(Debug, Clone, Copy)]
pub struct NearestBoundary {
    pub foot: P2,
    pub dist: f64,
    /// Unit normal at the foot pointing into the domain.
    pub normal_in: P2,
    pub edge: usize,
    /// The foot coincides with an edge endpoint (within tolerance), i.e. the
    /// projection hit a corner and the normal is the corner pseudo-normal.
    pub at_vertex: bool,
}

/// Nearest point of the boundary, the inward normal there, and the owning
/// edge id (ties broken toward the lowest id).
pub fn nearest_boundary(spec: &DomainSpec, p: P2) -> NearestBoundary {
    let mut best = (f64::INFINITY, 0usize, 0.0f64);
    for (i, a, b, _) in spec.edges() {
        let (d2, t) = point_segment(p, a, b);
        if d2 < best.0 * (1.0 - 1e-14) {
            best = (d2, i, t);
        }
    }
    let (d2, edge, t) = best;
    let (a, b) = spec.edge(edge);
    let foot = a.lerp(b, t);
    let tol = spec.tol();
    let at_vertex = foot.dist(a) <= tol || foot.dist(b) <= tol;
    let normal_in = if at_vertex {
        // average the normals of the two edges that meet at the corner
        let v = if foot.dist(a) <= tol {
            edge
        } else {
            spec.edge_end(edge)
        };
        corner_normal(spec, v)
    } else {
        spec.inward_normal(edge)
    };
    NearestBoundary {
        foot,
        dist: d2.sqrt(),
        normal_in,
        edge,
        at_vertex,
    }
}

/// Pseudo-normal at vertex `v`: the normalized sum of the inward normals
/// of the edge ending at `v` and the edge starting at `v`.
fn corner_normal(spec: &DomainSpec, v: usize) -> P2 {
    let next = spec.inward_normal(v);
    let prev_edge = (0..spec.edge_count())
        .find(|&i| spec.edge_end(i) == v)
        .unwrap_or(v);
    let prev = spec.inward_normal(prev_edge);
    let sum = prev + next;
    if sum.norm() < 1e-12 {
        next
    } else {
        sum.normalized()
    }
}

#[allow(dead_code)]
pub(crate) fn centroid(pts: &[P2]) -> P2 {
    let mut c = p2(0.0, 0.0);
    for &q in pts {
        c = c + q;
    }
    c / (pts.len() as f64)
}
