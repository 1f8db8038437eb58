//! Constrained Delaunay meshing with quality refinement, plus the reflected
//! construction that turns one meshed quarter into a fully symmetric ring
//! mesh (the symmetry index maps are exact by construction, so symmetry
//! residuals of computed eigenvectors measure discretization error only).

use crate::geometry::{
    build_quarter, classify_with_tol, point_segment, Classification, DomainParams, DomainSpec,
    EdgeTag, NarrowHint, RegionId, P2,
};
use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("point insertion failed: {0}")]
    Insertion(String),
    #[error("refinement did not converge (vertex budget exhausted)")]
    Refinement,
    #[error("boundary edge ({0:.6}, {1:.6})-({2:.6}, {3:.6}) matches no input edge")]
    Tagging(f64, f64, f64, f64),
    #[error("mesh file: {0}")]
    Format(String),
    #[error("domain: {0}")]
    Domain(#[from] crate::geometry::GeomError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub tag: EdgeTag,
}

#[derive(Debug, Clone, Copy)]
pub struct MeshOptions {
    /// Target edge length away from narrow passages.
    pub h: f64,
    /// Ruppert angle limit; 30 degrees is the provably terminating default.
    pub min_angle_deg: f64,
    /// Hard cap on Steiner vertices.
    pub max_steiner: usize,
}

impl MeshOptions {
    pub fn new(h: f64) -> MeshOptions {
        MeshOptions {
            h,
            min_angle_deg: 30.0,
            max_steiner: 2_000_000,
        }
    }
}

/// Triangle mesh with tagged boundary edges. `boundary` edges are oriented so
/// the domain lies on their left. When the mesh was built by reflecting a
/// quarter, `sym_x`/`sym_y` hold the node index maps of the two mirrors.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<P2>,
    pub tris: Vec<[usize; 3]>,
    pub boundary: Vec<BoundaryEdge>,
    pub h_target: f64,
    pub sym_x: Option<Vec<usize>>,
    pub sym_y: Option<Vec<usize>>,
}

/// Mesh a tagged domain. Boundary loops are split to the local target length
/// (graded down inside narrow passages described by the domain's hints, where
/// seed rows also guarantee at least three element layers across), then
/// refined to the angle limit and maximum area.
pub fn triangulate(spec: &DomainSpec, opts: &MeshOptions) -> Result<Mesh, MeshError> {
    let h = opts.h;
    let widths = WidthField::new(&spec.hints);
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        ConstrainedDelaunayTriangulation::new();

    for l in 0..spec.loops.len() {
        let pts = spec.loop_points(l);
        let mut chain = Vec::with_capacity(pts.len() * 4);
        for i in 0..pts.len() {
            let a = pts[i];
            let b = pts[(i + 1) % pts.len()];
            chain.push(a);
            split_edge(a, b, h, &widths, 0, &mut chain);
        }
        cdt.add_constraint_edges(chain.into_iter().map(|p| Point2::new(p.x, p.y)), true)
            .map_err(|e| MeshError::Insertion(format!("{e:?}")))?;
    }

    // Seed rows along narrow passages: centerline and half-offset rows keep
    // several element layers across even where the passage is much thinner
    // than the global target.
    for p in narrow_seeds(&spec.hints, h) {
        if classify_with_tol(spec, p, 1e-12) == Classification::Interior {
            cdt.insert(Point2::new(p.x, p.y))
                .map_err(|e| MeshError::Insertion(format!("{e:?}")))?;
        }
    }

    let params = RefinementParameters::<f64>::new()
        .exclude_outer_faces(true)
        .with_angle_limit(AngleLimit::from_deg(opts.min_angle_deg))
        .with_max_allowed_area(0.4 * h * h)
        .with_max_additional_vertices(opts.max_steiner);
    let result = cdt.refine(params);
    if !result.refinement_complete {
        return Err(MeshError::Refinement);
    }
    let excluded: HashSet<_> = result.excluded_faces.iter().collect();

    // Extract faces: drop excluded ones and anything whose centroid is not
    // interior (belt and braces for holes).
    let mut used = vec![usize::MAX; cdt.num_vertices()];
    let mut nodes: Vec<P2> = Vec::new();
    let mut tris: Vec<[usize; 3]> = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix()) {
            continue;
        }
        let vs = face.vertices();
        let ps: Vec<P2> = vs
            .iter()
            .map(|v| {
                let q = v.position();
                P2 { x: q.x, y: q.y }
            })
            .collect();
        let centroid = P2 {
            x: (ps[0].x + ps[1].x + ps[2].x) / 3.0,
            y: (ps[0].y + ps[1].y + ps[2].y) / 3.0,
        };
        if classify_with_tol(spec, centroid, 1e-12) != Classification::Interior {
            continue;
        }
        let mut tri = [0usize; 3];
        for (slot, v) in vs.iter().enumerate() {
            let vi = v.fix().index();
            if used[vi] == usize::MAX {
                used[vi] = nodes.len();
                let q = v.position();
                nodes.push(P2 { x: q.x, y: q.y });
            }
            tri[slot] = used[vi];
        }
        // spade faces are counterclockwise already; keep the invariant
        tris.push(tri);
    }

    // Snap seam coordinates so reflected constructions can identify shared
    // nodes by bit equality.
    if spec.region == RegionId::QuarterD1 {
        let snap = 1e-9 * spec.diameter();
        for p in nodes.iter_mut() {
            if p.x.abs() <= snap {
                p.x = 0.0;
            }
            if (p.y + 1.0).abs() <= snap {
                p.y = -1.0;
            }
        }
    }

    let boundary = tag_boundary(spec, &nodes, &tris)?;
    Ok(Mesh {
        nodes,
        tris,
        boundary,
        h_target: h,
        sym_x: None,
        sym_y: None,
    })
}

/// Split `ab` recursively until each piece is below the local target length.
fn split_edge(a: P2, b: P2, h: f64, widths: &WidthField, depth: u32, out: &mut Vec<P2>) {
    let mid = a.lerp(b, 0.5);
    let local = widths.local_h(mid, h);
    if a.dist(b) <= local * 1.05 || depth >= 24 {
        return;
    }
    split_edge(a, mid, h, widths, depth + 1, out);
    out.push(mid);
    split_edge(mid, b, h, widths, depth + 1, out);
}

/// Interpolated half-width lookup over all narrow-passage hints.
struct WidthField {
    samples: Vec<(P2, f64)>,
}

impl WidthField {
    fn new(hints: &[NarrowHint]) -> WidthField {
        let mut samples = Vec::new();
        for hint in hints {
            for (i, &c) in hint.centerline.iter().enumerate() {
                samples.push((c, hint.half_width[i]));
            }
            // also sample segment midpoints so long centerline segments with
            // strongly varying width still register
            for i in 0..hint.centerline.len().saturating_sub(1) {
                let c = hint.centerline[i].lerp(hint.centerline[i + 1], 0.5);
                let w = 0.5 * (hint.half_width[i] + hint.half_width[i + 1]);
                samples.push((c, w));
            }
        }
        WidthField { samples }
    }

    /// Local half-width at `p`, or infinity when no passage is nearby.
    fn width(&self, p: P2) -> f64 {
        let mut w = f64::INFINITY;
        for &(c, wc) in &self.samples {
            if p.dist(c) <= 3.0 * wc.max(1e-12) {
                w = w.min(wc);
            }
        }
        w
    }

    fn local_h(&self, p: P2, h: f64) -> f64 {
        let w = self.width(p);
        if w.is_finite() {
            (0.8 * w).min(h).max(h / 64.0)
        } else {
            h
        }
    }
}

/// Seed points for narrow passages: rows at the centerline and half-offsets,
/// spaced along the passage, wherever the passage is thin relative to `h`.
fn narrow_seeds(hints: &[NarrowHint], h: f64) -> Vec<P2> {
    let mut out = Vec::new();
    for hint in hints {
        let n = hint.centerline.len();
        if n < 2 {
            continue;
        }
        let mut i = 0usize;
        let mut t = 0.0f64; // parameter within segment i
        loop {
            let seg = hint.centerline[i + 1] - hint.centerline[i];
            let len = seg.norm();
            let c = hint.centerline[i] + seg * t;
            let w = hint.half_width[i] + (hint.half_width[i + 1] - hint.half_width[i]) * t;
            if w < 1.5 * h {
                let tangent = seg / len.max(1e-300);
                let normal = tangent.perp();
                out.push(c);
                out.push(c + normal * (0.5 * w));
                out.push(c - normal * (0.5 * w));
            }
            // advance by the local along-passage spacing
            let step = (0.6 * w).clamp(h / 8.0, h);
            let mut remaining = step;
            let mut adv_i = i;
            let mut adv_t = t;
            loop {
                let seg_len = (hint.centerline[adv_i + 1] - hint.centerline[adv_i]).norm();
                let left = (1.0 - adv_t) * seg_len;
                if remaining < left {
                    adv_t += remaining / seg_len;
                    break;
                }
                remaining -= left;
                adv_i += 1;
                adv_t = 0.0;
                if adv_i + 1 >= n {
                    break;
                }
            }
            if adv_i + 1 >= n {
                break;
            }
            i = adv_i;
            t = adv_t;
        }
    }
    out
}

/// Identify boundary edges (on exactly one triangle) and match each to an
/// input edge for its tag. Orientation follows the adjacent triangle.
fn tag_boundary(
    spec: &DomainSpec,
    nodes: &[P2],
    tris: &[[usize; 3]],
) -> Result<Vec<BoundaryEdge>, MeshError> {
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in tris {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut out = Vec::new();
    for t in tris {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            if count[&(a.min(b), a.max(b))] != 1 {
                continue;
            }
            let (pa, pb) = (nodes[a], nodes[b]);
            let mut best = (f64::INFINITY, EdgeTag::NeumannOther);
            for (_, ea, eb, tag) in spec.edges() {
                let da = point_segment(pa, ea, eb).0.sqrt();
                let db = point_segment(pb, ea, eb).0.sqrt();
                let d = da.max(db);
                if d < best.0 {
                    best = (d, tag);
                }
            }
            if best.0 > 1e-6 * spec.diameter().max(1.0) {
                return Err(MeshError::Tagging(pa.x, pa.y, pb.x, pb.y));
            }
            out.push(BoundaryEdge {
                a,
                b,
                tag: best.1,
            });
        }
    }
    out.sort_by_key(|e| (e.a, e.b));
    Ok(out)
}

/// Mesh the ring `D(eps, eps0)` by meshing its quarter once and reflecting
/// across both symmetry lines. Seam nodes are shared; the returned mesh has
/// exact `sym_x`/`sym_y` node maps.
pub fn symmetric_ring_mesh(params: &DomainParams, opts: &MeshOptions) -> Result<Mesh, MeshError> {
    let quarter = build_quarter(params)?;
    let qm = triangulate(&quarter, opts)?;
    let n = qm.nodes.len();
    let on_x0: Vec<bool> = qm.nodes.iter().map(|p| p.x == 0.0).collect();
    let on_y1: Vec<bool> = qm.nodes.iter().map(|p| p.y == -1.0).collect();

    let mut nodes = qm.nodes.clone();
    // ids of each quarter node in the four reflected copies
    let mut id = [vec![0usize; n], vec![0usize; n], vec![0usize; n], vec![0usize; n]];
    for i in 0..n {
        id[0][i] = i;
    }
    for i in 0..n {
        id[1][i] = if on_x0[i] {
            i
        } else {
            nodes.push(P2 {
                x: 0.0 - qm.nodes[i].x,
                y: qm.nodes[i].y,
            });
            nodes.len() - 1
        };
    }
    for i in 0..n {
        id[2][i] = if on_y1[i] {
            i
        } else {
            nodes.push(P2 {
                x: qm.nodes[i].x,
                y: -2.0 - qm.nodes[i].y,
            });
            nodes.len() - 1
        };
    }
    for i in 0..n {
        id[3][i] = if on_x0[i] {
            id[2][i]
        } else if on_y1[i] {
            id[1][i]
        } else {
            nodes.push(P2 {
                x: 0.0 - qm.nodes[i].x,
                y: -2.0 - qm.nodes[i].y,
            });
            nodes.len() - 1
        };
    }

    let total = nodes.len();
    let mut sym_x = vec![0usize; total];
    let mut sym_y = vec![0usize; total];
    for i in 0..n {
        let (a, b, c, d) = (id[0][i], id[1][i], id[2][i], id[3][i]);
        sym_x[a] = b;
        sym_x[b] = a;
        sym_x[c] = d;
        sym_x[d] = c;
        sym_y[a] = c;
        sym_y[c] = a;
        sym_y[b] = d;
        sym_y[d] = b;
    }

    let mut tris = Vec::with_capacity(qm.tris.len() * 4);
    for t in &qm.tris {
        let [a, b, c] = *t;
        tris.push([id[0][a], id[0][b], id[0][c]]);
        tris.push([id[1][a], id[1][c], id[1][b]]); // mirror flips orientation
        tris.push([id[2][a], id[2][c], id[2][b]]);
        tris.push([id[3][a], id[3][b], id[3][c]]);
    }

    let mut boundary = Vec::new();
    for e in &qm.boundary {
        if e.tag != EdgeTag::SideS {
            continue; // symmetry cuts become interior seams
        }
        boundary.push(BoundaryEdge {
            a: id[0][e.a],
            b: id[0][e.b],
            tag: EdgeTag::NeumannOther,
        });
        boundary.push(BoundaryEdge {
            a: id[1][e.b],
            b: id[1][e.a],
            tag: EdgeTag::NeumannOther,
        });
        boundary.push(BoundaryEdge {
            a: id[2][e.b],
            b: id[2][e.a],
            tag: EdgeTag::NeumannOther,
        });
        boundary.push(BoundaryEdge {
            a: id[3][e.a],
            b: id[3][e.b],
            tag: EdgeTag::NeumannOther,
        });
    }
    boundary.sort_by_key(|e| (e.a, e.b));

    Ok(Mesh {
        nodes,
        tris,
        boundary,
        h_target: qm.h_target,
        sym_x: Some(sym_x),
        sym_y: Some(sym_y),
    })
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_tris(&self) -> usize {
        self.tris.len()
    }

    pub fn area(&self) -> f64 {
        self.tris.iter().map(|t| self.tri_area(t)).sum()
    }

    fn tri_area(&self, t: &[usize; 3]) -> f64 {
        let (a, b, c) = (self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]);
        0.5 * (b - a).cross(c - a)
    }

    pub fn h_max(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in &self.tris {
            for k in 0..3 {
                h = h.max(self.nodes[t[k]].dist(self.nodes[t[(k + 1) % 3]]));
            }
        }
        h
    }

    pub fn min_angle_deg(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in &self.tris {
            for k in 0..3 {
                let p = self.nodes[t[k]];
                let u = self.nodes[t[(k + 1) % 3]] - p;
                let v = self.nodes[t[(k + 2) % 3]] - p;
                let ang = (u.dot(v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos();
                min = min.min(ang);
            }
        }
        min.to_degrees()
    }

    /// True for nodes incident to any boundary edge.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        for e in &self.boundary {
            mask[e.a] = true;
            mask[e.b] = true;
        }
        mask
    }

    pub fn nearest_node(&self, p: P2) -> usize {
        let mut best = (f64::INFINITY, 0usize);
        for (i, &q) in self.nodes.iter().enumerate() {
            let d = p.dist2(q);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// One step of uniform (red) refinement: each triangle splits into four
    /// similar ones, so angle bounds are preserved and the P1 spaces nest.
    pub fn refine_uniform(&self) -> Mesh {
        let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut nodes = self.nodes.clone();
        let mut mid = |a: usize, b: usize, nodes: &mut Vec<P2>| -> usize {
            let key = (a.min(b), a.max(b));
            *mids.entry(key).or_insert_with(|| {
                let p = P2 {
                    x: (nodes[a].x + nodes[b].x) / 2.0,
                    y: (nodes[a].y + nodes[b].y) / 2.0,
                };
                nodes.push(p);
                nodes.len() - 1
            })
        };
        let mut tris = Vec::with_capacity(self.tris.len() * 4);
        for t in &self.tris {
            let [a, b, c] = *t;
            let ab = mid(a, b, &mut nodes);
            let bc = mid(b, c, &mut nodes);
            let ca = mid(c, a, &mut nodes);
            tris.push([a, ab, ca]);
            tris.push([b, bc, ab]);
            tris.push([c, ca, bc]);
            tris.push([ab, bc, ca]);
        }
        let mut boundary = Vec::with_capacity(self.boundary.len() * 2);
        for e in &self.boundary {
            let key = (e.a.min(e.b), e.a.max(e.b));
            let m = *mids.get(&key).expect("boundary edge must have been split");
            boundary.push(BoundaryEdge {
                a: e.a,
                b: m,
                tag: e.tag,
            });
            boundary.push(BoundaryEdge {
                a: m,
                b: e.b,
                tag: e.tag,
            });
        }
        boundary.sort_by_key(|e| (e.a, e.b));
        // propagate symmetry maps to midpoint nodes
        let map_new = |old: &Vec<usize>| -> Vec<usize> {
            let mut s = vec![usize::MAX; nodes.len()];
            for (i, &j) in old.iter().enumerate() {
                s[i] = j;
            }
            for (&(a, b), &m) in mids.iter() {
                let (ma, mb) = (old[a], old[b]);
                let mkey = (ma.min(mb), ma.max(mb));
                s[m] = *mids.get(&mkey).expect("mirrored edge must exist");
            }
            s
        };
        let sym_x = self.sym_x.as_ref().map(map_new);
        let sym_y = self.sym_y.as_ref().map(map_new);
        Mesh {
            nodes,
            tris,
            boundary,
            h_target: self.h_target / 2.0,
            sym_x,
            sym_y,
        }
    }

    /// Serialize in the plain-text mesh format.
    pub fn export(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(s, "hotspots-mesh v1");
        let _ = writeln!(s, "h {}", self.h_target);
        for p in &self.nodes {
            let _ = writeln!(s, "v {} {}", p.x, p.y);
        }
        for t in &self.tris {
            let _ = writeln!(s, "t {} {} {}", t[0], t[1], t[2]);
        }
        for e in &self.boundary {
            let _ = writeln!(s, "b {} {} {}", e.a, e.b, e.tag.as_str());
        }
        if let Some(sx) = &self.sym_x {
            for (i, &j) in sx.iter().enumerate() {
                let _ = writeln!(s, "sx {i} {j}");
            }
        }
        if let Some(sy) = &self.sym_y {
            for (i, &j) in sy.iter().enumerate() {
                let _ = writeln!(s, "sy {i} {j}");
            }
        }
        s
    }

    /// Build a uniform-grid point locator for repeated interpolation.
    pub fn locator(&self) -> TriLocator {
        TriLocator::new(self)
    }
}

pub fn import_mesh(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = text.lines();
    match lines.next() {
        Some("hotspots-mesh v1") => {}
        _ => return Err(MeshError::Format("missing header".into())),
    }
    let mut h_target = 0.0;
    let mut nodes = Vec::new();
    let mut tris: Vec<[usize; 3]> = Vec::new();
    let mut boundary = Vec::new();
    let mut sx: Vec<(usize, usize)> = Vec::new();
    let mut sy: Vec<(usize, usize)> = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let kind = it.next().unwrap();
        let rest: Vec<&str> = it.collect();
        let bad = || MeshError::Format(format!("line {}: {line}", ln + 2));
        match kind {
            "h" => {
                h_target = rest
                    .first()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(bad)?
            }
            "v" => {
                if rest.len() != 2 {
                    return Err(bad());
                }
                let x: f64 = rest[0].parse().map_err(|_| bad())?;
                let y: f64 = rest[1].parse().map_err(|_| bad())?;
                nodes.push(P2 { x, y });
            }
            "t" => {
                if rest.len() != 3 {
                    return Err(bad());
                }
                let mut t = [0usize; 3];
                for k in 0..3 {
                    t[k] = rest[k].parse().map_err(|_| bad())?;
                }
                tris.push(t);
            }
            "b" => {
                if rest.len() != 3 {
                    return Err(bad());
                }
                let a = rest[0].parse().map_err(|_| bad())?;
                let b = rest[1].parse().map_err(|_| bad())?;
                let tag = EdgeTag::parse(rest[2]).ok_or_else(bad)?;
                boundary.push(BoundaryEdge { a, b, tag });
            }
            "sx" | "sy" => {
                if rest.len() != 2 {
                    return Err(bad());
                }
                let i = rest[0].parse().map_err(|_| bad())?;
                let j = rest[1].parse().map_err(|_| bad())?;
                if kind == "sx" {
                    sx.push((i, j));
                } else {
                    sy.push((i, j));
                }
            }
            _ => return Err(bad()),
        }
    }
    let n = nodes.len();
    for t in &tris {
        if t.iter().any(|&i| i >= n) {
            return Err(MeshError::Format("triangle index out of range".into()));
        }
    }
    for e in &boundary {
        if e.a >= n || e.b >= n {
            return Err(MeshError::Format("boundary index out of range".into()));
        }
    }
    let build_map = |pairs: Vec<(usize, usize)>| -> Result<Option<Vec<usize>>, MeshError> {
        if pairs.is_empty() {
            return Ok(None);
        }
        let mut m = vec![usize::MAX; n];
        for (i, j) in pairs {
            if i >= n || j >= n {
                return Err(MeshError::Format("symmetry index out of range".into()));
            }
            m[i] = j;
        }
        if m.iter().any(|&j| j == usize::MAX) {
            return Err(MeshError::Format("incomplete symmetry map".into()));
        }
        Ok(Some(m))
    };
    Ok(Mesh {
        nodes,
        tris,
        boundary,
        h_target,
        sym_x: build_map(sx)?,
        sym_y: build_map(sy)?,
    })
}

/// Uniform-grid triangle locator for fast barycentric interpolation.
pub struct TriLocator {
    lo: P2,
    cell: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<u32>>,
}

impl TriLocator {
    fn new(mesh: &Mesh) -> TriLocator {
        let mut lo = P2 {
            x: f64::INFINITY,
            y: f64::INFINITY,
        };
        let mut hi = P2 {
            x: f64::NEG_INFINITY,
            y: f64::NEG_INFINITY,
        };
        for p in &mesh.nodes {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        let cell = (mesh.h_target * 2.0).max(1e-9);
        let nx = ((hi.x - lo.x) / cell).ceil() as usize + 1;
        let ny = ((hi.y - lo.y) / cell).ceil() as usize + 1;
        let mut bins = vec![Vec::new(); nx * ny];
        for (ti, t) in mesh.tris.iter().enumerate() {
            let (a, b, c) = (mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]);
            let bx0 = (((a.x.min(b.x).min(c.x)) - lo.x) / cell) as usize;
            let bx1 = (((a.x.max(b.x).max(c.x)) - lo.x) / cell) as usize;
            let by0 = (((a.y.min(b.y).min(c.y)) - lo.y) / cell) as usize;
            let by1 = (((a.y.max(b.y).max(c.y)) - lo.y) / cell) as usize;
            for by in by0..=by1.min(ny - 1) {
                for bx in bx0..=bx1.min(nx - 1) {
                    bins[by * nx + bx].push(ti as u32);
                }
            }
        }
        TriLocator {
            lo,
            cell,
            nx,
            ny,
            bins,
        }
    }

    /// Containing triangle and barycentric coordinates, tolerant to points
    /// on edges; `None` when `p` is outside the mesh.
    pub fn locate(&self, mesh: &Mesh, p: P2) -> Option<(usize, [f64; 3])> {
        let bx = ((p.x - self.lo.x) / self.cell).floor();
        let by = ((p.y - self.lo.y) / self.cell).floor();
        if bx < 0.0 || by < 0.0 || bx as usize >= self.nx || by as usize >= self.ny {
            return None;
        }
        let bin = &self.bins[by as usize * self.nx + bx as usize];
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &ti in bin {
            let t = &mesh.tris[ti as usize];
            let (a, b, c) = (mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]);
            let area = (b - a).cross(c - a);
            if area <= 0.0 {
                continue;
            }
            let wa = (b - p).cross(c - p) / area;
            let wb = (c - p).cross(a - p) / area;
            let wc = 1.0 - wa - wb;
            let worst = wa.min(wb).min(wc);
            if worst >= -1e-10 {
                return Some((ti as usize, [wa, wb, wc]));
            }
            if best.map(|(_, _, w)| worst > w).unwrap_or(true) {
                best = Some((ti as usize, [wa, wb, wc], worst));
            }
        }
        // tolerate tiny excursions caused by curved-looking chains of short
        // boundary edges
        match best {
            Some((ti, w, worst)) if worst >= -1e-6 => Some((ti, w)),
            _ => None,
        }
    }

    /// Interpolate nodal values at `p`.
    pub fn value_at(&self, mesh: &Mesh, vals: &[f64], p: P2) -> Option<f64> {
        let (ti, w) = self.locate(mesh, p)?;
        let t = &mesh.tris[ti];
        Some(w[0] * vals[t[0]] + w[1] * vals[t[1]] + w[2] * vals[t[2]])
    }
}
