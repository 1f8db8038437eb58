//! Construction of the counterexample domain family and its quarter.
//!
//! `D(eps, eps0)` is assembled from one closed-form piece: a horn that widens
//! from half-width `eps` at `x1 = 0` to `2*eps` at `x1 = 1`, then narrows to
//! `eps0` at `x1 = 2`, continued by an annular tube of width `2*eps0` that
//! bends a quarter turn down to the line `x2 = -1`. Reflecting this piece
//! across `x2 = -1` and `x1 = 0` closes it into a ring with exactly one hole.
//! The quarter `D1 = D ∩ {x1 > 0, x2 > -1}` carries boundary tags: the short
//! cross-cut on `{x2 = -1}` (`dirichlet_d`), the symmetry cut on `{x1 = 0}`
//! (`left_ell`), and the two tube walls (`side_s`).

mod arc;
mod classify;
mod geodesic;
mod io;
mod primitives;
pub mod regions;

pub use arc::{build_arc_chain, max_turn, quarter_arc_segments, ArcBand};
pub use classify::{classify, classify_with_tol, nearest_boundary, Classification, NearestBoundary};
pub use geodesic::GeodesicOracle;
pub use io::{import_domain, export_domain};
pub use primitives::{
    angle_between, normalize_angle, p2, point_segment, polyline_length, segment_intersection,
    segments_properly_intersect, signed_area, tri_area, P2,
};
pub use regions::{NamedRegion, RegionCtx};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("arc chain needs at least {needed} segments, got {given}")]
    ArcInfeasible { needed: usize, given: usize },
    #[error("arc radius {radius} outside band ({r_min}, {r_max})")]
    BandViolation { radius: f64, r_min: f64, r_max: f64 },
    #[error("boundary self-intersects: edges {0} and {1}")]
    SelfIntersection(usize, usize),
    #[error("domain file: {0}")]
    Format(String),
}

/// Shape parameters of the family. `epsilon` controls the horn half-widths
/// (`eps` at the symmetry axis, `2*eps` at the widest point), `epsilon0` the
/// narrow tube half-width, and `arc_segments` a lower bound on the number of
/// chords per quarter-circle wall (raised automatically until every chain
/// vertex turns by at most `epsilon0`).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DomainParams {
    pub epsilon: f64,
    pub epsilon0: f64,
    pub arc_segments: usize,
}

impl Default for DomainParams {
    fn default() -> Self {
        DomainParams {
            epsilon: 0.1,
            epsilon0: 0.01,
            arc_segments: 64,
        }
    }
}

impl DomainParams {
    pub fn new(epsilon: f64, epsilon0: f64) -> Self {
        DomainParams {
            epsilon,
            epsilon0,
            arc_segments: 64,
        }
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.epsilon0 > 0.0 && self.epsilon0 < self.epsilon && self.epsilon < 0.25) {
            return Err(GeomError::Invalid(format!(
                "need 0 < epsilon0 < epsilon < 1/4, got epsilon={} epsilon0={}",
                self.epsilon, self.epsilon0
            )));
        }
        Ok(())
    }

    /// Chords per quarter arc, after raising `arc_segments` to meet the
    /// turn bound (a quarter circle turns pi/2 in total, so `n` chords can
    /// never do better than pi/2/n at the sharpest vertex).
    pub fn n_arc(&self) -> usize {
        self.arc_segments.max(quarter_arc_segments(self.epsilon0))
    }

    /// Apex abscissa offset: the horn's straight walls, extended, meet the
    /// axis at `(2 + r, 0)`.
    pub fn apex_r(&self) -> f64 {
        self.epsilon0 / (2.0 * self.epsilon - self.epsilon0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeTag {
    DirichletD,
    SideS,
    LeftEll,
    NeumannOther,
}

impl EdgeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeTag::DirichletD => "dirichlet_d",
            EdgeTag::SideS => "side_s",
            EdgeTag::LeftEll => "left_ell",
            EdgeTag::NeumannOther => "neumann_other",
        }
    }

    pub fn parse(s: &str) -> Option<EdgeTag> {
        match s {
            "dirichlet_d" => Some(EdgeTag::DirichletD),
            "side_s" => Some(EdgeTag::SideS),
            "left_ell" => Some(EdgeTag::LeftEll),
            "neumann_other" => Some(EdgeTag::NeumannOther),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionId {
    /// The full ring domain with one hole.
    FullD,
    /// The quarter `D ∩ {x1 > 0, x2 > -1}` with mixed boundary tags.
    QuarterD1,
    /// Any other polygonal region (test shapes, boxes, polygon disks).
    Generic,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LoopSpan {
    pub start: usize,
    pub len: usize,
}

/// Local-size hint for the mesher: a centerline polyline with per-vertex
/// half-widths marking a passage that may be narrow relative to the target
/// mesh size. The mesher seeds interior points across such passages so a
/// tube always carries at least three element layers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NarrowHint {
    pub centerline: Vec<P2>,
    pub half_width: Vec<f64>,
}

/// A polygonal domain: vertex loops (outer boundary plus optional holes),
/// one tag per boundary edge, and named reference points. Edge `i` runs from
/// `verts[i]` to the next vertex in its loop; the domain interior lies on the
/// left of every directed edge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    pub region: RegionId,
    pub params: Option<DomainParams>,
    pub verts: Vec<P2>,
    pub loops: Vec<LoopSpan>,
    pub tags: Vec<EdgeTag>,
    pub named: Vec<(String, P2)>,
    pub hints: Vec<NarrowHint>,
}

impl DomainSpec {
    /// Assemble a spec from raw loops, canonicalizing orientation so the
    /// interior is on the left of each directed edge (outer loop CCW, holes
    /// CW), and rejecting self-intersecting boundaries.
    pub fn from_loops(
        region: RegionId,
        params: Option<DomainParams>,
        loops_in: Vec<(Vec<P2>, Vec<EdgeTag>)>,
    ) -> Result<DomainSpec, GeomError> {
        if loops_in.is_empty() {
            return Err(GeomError::Invalid("no loops".into()));
        }
        let outer = loops_in
            .iter()
            .enumerate()
            .max_by(|a, b| {
                signed_area(&a.1 .0)
                    .abs()
                    .total_cmp(&signed_area(&b.1 .0).abs())
            })
            .map(|(i, _)| i)
            .unwrap();

        let mut verts = Vec::new();
        let mut loops = Vec::new();
        let mut tags = Vec::new();
        for (i, (mut pts, mut etags)) in loops_in.into_iter().enumerate() {
            if pts.len() < 3 || pts.len() != etags.len() {
                return Err(GeomError::Invalid(format!(
                    "loop {i}: {} vertices, {} tags",
                    pts.len(),
                    etags.len()
                )));
            }
            let want_ccw = i == outer;
            if (signed_area(&pts) > 0.0) != want_ccw {
                // Reversing vertices turns edge (k -> k+1) into the edge that
                // starts at position n-2-k, so tags reverse then rotate left.
                pts.reverse();
                etags.reverse();
                etags.rotate_left(1);
            }
            loops.push(LoopSpan {
                start: verts.len(),
                len: pts.len(),
            });
            verts.extend(pts);
            tags.extend(etags);
        }
        let spec = DomainSpec {
            region,
            params,
            verts,
            loops,
            tags,
            named: Vec::new(),
            hints: Vec::new(),
        };
        spec.check_simple()?;
        Ok(spec)
    }

    pub fn edge_count(&self) -> usize {
        self.verts.len()
    }

    /// Index of the vertex that edge `i` points to.
    pub fn edge_end(&self, i: usize) -> usize {
        let lp = self
            .loops
            .iter()
            .find(|l| i >= l.start && i < l.start + l.len)
            .expect("edge index in some loop");
        lp.start + (i - lp.start + 1) % lp.len
    }

    pub fn edge(&self, i: usize) -> (P2, P2) {
        (self.verts[i], self.verts[self.edge_end(i)])
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, P2, P2, EdgeTag)> + '_ {
        (0..self.edge_count()).map(move |i| {
            let (a, b) = self.edge(i);
            (i, a, b, self.tags[i])
        })
    }

    /// Inward unit normal of edge `i` (interior is on the left).
    pub fn inward_normal(&self, i: usize) -> P2 {
        let (a, b) = self.edge(i);
        (b - a).perp().normalized()
    }

    pub fn bbox(&self) -> (P2, P2) {
        let mut lo = p2(f64::INFINITY, f64::INFINITY);
        let mut hi = p2(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.verts {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bbox();
        (hi - lo).norm()
    }

    /// Geometric tolerance: points closer than this to the boundary are
    /// treated as lying on it.
    pub fn tol(&self) -> f64 {
        1e-12 * self.diameter()
    }

    /// Net enclosed area (outer loop minus holes).
    pub fn area(&self) -> f64 {
        self.loops
            .iter()
            .map(|l| signed_area(&self.verts[l.start..l.start + l.len]))
            .sum()
    }

    pub fn named_point(&self, name: &str) -> Option<P2> {
        self.named
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| *p)
    }

    pub fn loop_points(&self, l: usize) -> &[P2] {
        let lp = self.loops[l];
        &self.verts[lp.start..lp.start + lp.len]
    }

    /// O(E^2) pairwise proper-intersection scan. Adjacent edges share an
    /// endpoint and are skipped; anything else crossing is a hard error.
    pub fn check_simple(&self) -> Result<(), GeomError> {
        let n = self.edge_count();
        for i in 0..n {
            let (a, b) = self.edge(i);
            for j in (i + 1)..n {
                if self.edge_end(i) == j || self.edge_end(j) == i {
                    continue;
                }
                let (c, d) = self.edge(j);
                if segments_properly_intersect(a, b, c, d) {
                    return Err(GeomError::SelfIntersection(i, j));
                }
            }
        }
        Ok(())
    }
}

struct LoopBuilder {
    pts: Vec<P2>,
    tags: Vec<EdgeTag>,
}

impl LoopBuilder {
    fn start(p: P2) -> Self {
        LoopBuilder {
            pts: vec![p],
            tags: Vec::new(),
        }
    }

    /// Append a path, tagging each new edge; a leading point equal to the
    /// current endpoint is skipped so pieces can share junctions.
    fn path(&mut self, pts: &[P2], tag: EdgeTag) -> &mut Self {
        for &q in pts {
            let last = *self.pts.last().unwrap();
            if last.dist(q) == 0.0 {
                continue;
            }
            self.pts.push(q);
            self.tags.push(tag);
        }
        self
    }

    /// Close the loop back to the first point with one final tagged edge.
    fn close(mut self, tag: EdgeTag) -> (Vec<P2>, Vec<EdgeTag>) {
        let first = self.pts[0];
        let last = *self.pts.last().unwrap();
        if last.dist(first) == 0.0 {
            self.pts.pop();
            // the edge that used to end at the duplicate now closes the loop
        } else {
            self.tags.push(tag);
        }
        assert_eq!(self.pts.len(), self.tags.len());
        (self.pts, self.tags)
    }
}

fn reflect_h(p: P2) -> P2 {
    p2(p.x, -2.0 - p.y)
}

fn reflect_v(p: P2) -> P2 {
    p2(-p.x, p.y)
}

fn mapped<F: Fn(P2) -> P2>(pts: &[P2], f: F) -> Vec<P2> {
    pts.iter().map(|&p| f(p)).collect()
}

fn reversed(pts: &[P2]) -> Vec<P2> {
    pts.iter().rev().copied().collect()
}

struct QuarterPieces {
    /// Outer wall: (0,eps) -> (1,2eps) -> (2,eps0) -> arc -> (3+eps0,-1).
    outer: Vec<P2>,
    /// Inner wall: (0,-eps) -> (1,-2eps) -> (2,-eps0) -> arc -> (3-eps0,-1).
    inner: Vec<P2>,
    hints: Vec<NarrowHint>,
}

fn quarter_pieces(params: &DomainParams) -> Result<QuarterPieces, GeomError> {
    let e = params.epsilon;
    let e0 = params.epsilon0;
    let n = params.n_arc();
    let center = p2(2.0, -1.0);

    let outer_band = ArcBand {
        center,
        r_min: 1.0 + e0 / 2.0,
        r_max: 1.0 + 2.0 * e0,
    };
    let inner_band = ArcBand {
        center,
        r_min: 1.0 - 2.0 * e0,
        r_max: 1.0 - e0 / 2.0,
    };
    let c1 = build_arc_chain(&outer_band, p2(2.0, e0), p2(3.0 + e0, -1.0), n, e0)?;
    let c2 = build_arc_chain(&inner_band, p2(2.0, -e0), p2(3.0 - e0, -1.0), n, e0)?;

    let mut outer = vec![p2(0.0, e), p2(1.0, 2.0 * e), p2(2.0, e0)];
    outer.extend_from_slice(&c1[1..]);
    let mut inner = vec![p2(0.0, -e), p2(1.0, -2.0 * e), p2(2.0, -e0)];
    inner.extend_from_slice(&c2[1..]);

    // Narrow-passage hints: the taper of the horn toward x1=2, and the arc
    // tube (centerline on the unit circle about (2,-1), half-width eps0).
    let taper = NarrowHint {
        centerline: vec![p2(1.0, 0.0), p2(2.0, 0.0)],
        half_width: vec![2.0 * e, e0],
    };
    let m = 96.max(n / 2);
    let mut arc_center = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let th = std::f64::consts::FRAC_PI_2 * (1.0 - (k as f64) / (m as f64));
        arc_center.push(center + p2(th.cos(), th.sin()));
    }
    let arc = NarrowHint {
        half_width: vec![e0; arc_center.len()],
        centerline: arc_center,
    };
    Ok(QuarterPieces {
        outer,
        inner,
        hints: vec![taper, arc],
    })
}

fn named_points(params: &DomainParams) -> Vec<(String, P2)> {
    let r = params.apex_r();
    vec![
        ("y".into(), p2(2.0 + r, 0.0)),
        ("z".into(), p2(-2.0 - r, 0.0)),
        ("v".into(), p2(-1.0, 0.0)),
    ]
}

/// Build the full ring domain `D(eps, eps0)`: outer boundary plus one hole.
pub fn build_domain(params: &DomainParams) -> Result<DomainSpec, GeomError> {
    params.validate()?;
    let q = quarter_pieces(params)?;

    // Outer boundary: the outer quarter wall swept through all four copies.
    let mut lb = LoopBuilder::start(q.outer[0]);
    lb.path(&q.outer, EdgeTag::NeumannOther);
    lb.path(&mapped(&reversed(&q.outer), reflect_h), EdgeTag::NeumannOther);
    lb.path(
        &mapped(&q.outer, |p| reflect_v(reflect_h(p))),
        EdgeTag::NeumannOther,
    );
    lb.path(&mapped(&reversed(&q.outer), reflect_v), EdgeTag::NeumannOther);
    let outer_loop = lb.close(EdgeTag::NeumannOther);

    // Hole boundary: the inner wall swept the same way.
    let mut lb = LoopBuilder::start(q.inner[0]);
    lb.path(&q.inner, EdgeTag::NeumannOther);
    lb.path(&mapped(&reversed(&q.inner), reflect_h), EdgeTag::NeumannOther);
    lb.path(
        &mapped(&q.inner, |p| reflect_v(reflect_h(p))),
        EdgeTag::NeumannOther,
    );
    lb.path(&mapped(&reversed(&q.inner), reflect_v), EdgeTag::NeumannOther);
    let hole_loop = lb.close(EdgeTag::NeumannOther);

    let mut spec = DomainSpec::from_loops(
        RegionId::FullD,
        Some(*params),
        vec![outer_loop, hole_loop],
    )?;
    if spec.loops.len() != 2 || spec.area() <= 0.0 {
        return Err(GeomError::Invalid("degenerate ring".into()));
    }
    spec.named = named_points(params);
    let mut hints = q.hints.clone();
    for h in &q.hints {
        for f in [
            (|p: P2| reflect_h(p)) as fn(P2) -> P2,
            |p| reflect_v(p),
            |p| reflect_v(reflect_h(p)),
        ] {
            hints.push(NarrowHint {
                centerline: mapped(&h.centerline, f),
                half_width: h.half_width.clone(),
            });
        }
    }
    spec.hints = hints;
    Ok(spec)
}

/// Build the tagged quarter `D1 = D ∩ {x1 > 0, x2 > -1}`.
pub fn build_quarter(params: &DomainParams) -> Result<DomainSpec, GeomError> {
    params.validate()?;
    let q = quarter_pieces(params)?;
    let e = params.epsilon;
    let e0 = params.epsilon0;

    let mut lb = LoopBuilder::start(p2(0.0, -e));
    lb.path(&q.inner, EdgeTag::SideS); // inner wall out to (3-eps0,-1)
    lb.path(&[p2(3.0 + e0, -1.0)], EdgeTag::DirichletD); // the short cross-cut
    lb.path(&reversed(&q.outer), EdgeTag::SideS); // outer wall back to (0,eps)
    let quarter_loop = lb.close(EdgeTag::LeftEll); // symmetry cut down to (0,-eps)

    let mut spec =
        DomainSpec::from_loops(RegionId::QuarterD1, Some(*params), vec![quarter_loop])?;
    spec.named = named_points(params);
    spec.hints = q.hints;
    Ok(spec)
}

#[cfg(test)]
mod tests;
